//! Caption text normalization and normalized edit distance.

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '`' | '\u{2018}' | '\u{2019}' | '\u{201B}' | '\u{02BC}' | '\u{00B4}')
}

/// Lowercases, deletes apostrophes, turns every other non-alphanumeric
/// character (punctuation, symbols, emoji, dashes, quotes) into a space and
/// collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if is_apostrophe(c) {
            continue;
        }
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Lossy UTF-8 decoding followed by [`normalize_text`].
pub fn normalize_bytes(bytes: &[u8]) -> String {
    normalize_text(&String::from_utf8_lossy(bytes))
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over the longer length; 0.0 for two empty strings.
pub fn norm_levenshtein(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_text("Hello, World!"), "hello world");
        assert_eq!(normalize_text("don't \u{2014} stop\u{2026}"), "dont stop");
        assert_eq!(normalize_text("  \u{201C}Quoted\u{201D}  \u{1F600} 42% "), "quoted 42");
        assert_eq!(norm_levenshtein("abc", "abc"), 0.0);
        assert!((norm_levenshtein("kitten", "sitting") - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(norm_levenshtein("", "abc"), 1.0);
        assert_eq!(norm_levenshtein("", ""), 0.0);
    }
}
