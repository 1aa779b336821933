//! Byte-level BPE. Ids `0..256` are raw bytes, `256..base_size` are learned
//! merges in rule order, and `base_size..base_size + 768` are reserved
//! special tokens, the first three of which are bos, eos and pad.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::model::SPECIAL_TOKENS;
use crate::{Error, Result};

const HEADER: &str = "bpe-vocab v1";

/// How special ids render in [`Vocab::decode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpecialMode {
    /// Specials contribute no bytes.
    #[default]
    Skip,
    /// Specials render as `<|bos|>`, `<|eos|>`, `<|pad|>` or `<|special_N|>`.
    Sentinel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    merges: Vec<(u32, u32)>,
    tokens: Vec<Vec<u8>>,
    ranks: HashMap<(u32, u32), u32>,
}

impl Vocab {
    /// The identity vocabulary: every byte is its own token, no merges.
    pub fn bytes() -> Self {
        Self::from_merges(Vec::new()).expect("byte vocabulary is valid")
    }

    /// Rebuilds the token table from an ordered merge list.
    pub fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self> {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, &(a, b)) in merges.iter().enumerate() {
            let next = tokens.len() as u32;
            if a >= next || b >= next {
                return Err(Error::Index(format!("merge {i} refers to id beyond {next}")));
            }
            if ranks.insert((a, b), i as u32).is_some() {
                return Err(Error::Contract(format!("merge {i} ({a}, {b}) is duplicated")));
            }
            let mut joined = tokens[a as usize].clone();
            joined.extend_from_slice(&tokens[b as usize]);
            tokens.push(joined);
        }
        Ok(Vocab { merges, tokens, ranks })
    }

    pub fn base_size(&self) -> usize {
        self.tokens.len()
    }

    /// Base entries plus the special block.
    pub fn total_size(&self) -> usize {
        self.base_size() + SPECIAL_TOKENS
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn bos_id(&self) -> u32 {
        self.base_size() as u32
    }

    pub fn eos_id(&self) -> u32 {
        self.base_size() as u32 + 1
    }

    pub fn pad_id(&self) -> u32 {
        self.base_size() as u32 + 2
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) >= self.base_size() && (id as usize) < self.total_size()
    }

    /// Bytes of a base token; `None` for specials and out-of-range ids.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    /// Applies merges in rule order. Never produces special ids.
    pub fn encode(&self, text: &[u8]) -> Vec<u32> {
        let mut ids: Vec<u32> = text.iter().map(|&b| u32::from(b)).collect();
        if self.merges.is_empty() {
            return ids;
        }
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let pair = self.merges[rank as usize];
            ids = merge_pair(&ids, pair, 256 + rank);
        }
        ids
    }

    pub fn decode(&self, ids: &[u32], mode: SpecialMode) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            if let Some(bytes) = self.token_bytes(id) {
                out.extend_from_slice(bytes);
            } else if self.is_special(id) {
                if mode == SpecialMode::Sentinel {
                    out.extend_from_slice(self.special_name(id).as_bytes());
                }
            } else {
                return Err(Error::Index(format!("token id {id} outside vocabulary of {}", self.total_size())));
            }
        }
        Ok(out)
    }

    /// Lossy UTF-8 view of [`Vocab::decode`] with specials skipped.
    pub fn decode_text(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode(ids, SpecialMode::Skip)?).into_owned())
    }

    fn special_name(&self, id: u32) -> String {
        match id - self.bos_id() {
            0 => "<|bos|>".into(),
            1 => "<|eos|>".into(),
            2 => "<|pad|>".into(),
            k => format!("<|special_{k}|>"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "base_size {}", self.base_size());
        let _ = writeln!(s, "specials {SPECIAL_TOKENS}");
        let _ = writeln!(s, "merges {}", self.merges.len());
        for (a, b) in &self.merges {
            let _ = writeln!(s, "{a} {b}");
        }
        let _ = writeln!(s, "special-block");
        let _ = writeln!(s, "bos {}", self.bos_id());
        let _ = writeln!(s, "eos {}", self.eos_id());
        let _ = writeln!(s, "pad {}", self.pad_id());
        let _ = writeln!(s, "end");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.trim()))
                .ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {expect}")))
        };
        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(parse_err(n, format!("expected header '{HEADER}', found '{header}'")));
        }
        let base_size = keyed(next("base_size")?, "base_size")?;
        let specials = keyed(next("specials")?, "specials")?;
        if specials != SPECIAL_TOKENS {
            return Err(parse_err(0, format!("specials must be {SPECIAL_TOKENS}, found {specials}")));
        }
        let count = keyed(next("merges")?, "merges")?;
        let mut merges = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("merge pair")?;
            let mut it = line.split_whitespace().map(str::parse::<u32>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => merges.push((a, b)),
                _ => return Err(parse_err(n, format!("malformed merge '{line}'"))),
            }
        }
        let (n, block) = next("special-block")?;
        if block != "special-block" {
            return Err(parse_err(n, format!("expected 'special-block', found '{block}'")));
        }
        let vocab = Vocab::from_merges(merges)?;
        if vocab.base_size() != base_size {
            return Err(parse_err(0, format!("base_size {base_size} disagrees with {} merges", count)));
        }
        for (key, want) in [("bos", vocab.bos_id()), ("eos", vocab.eos_id()), ("pad", vocab.pad_id())] {
            let got = keyed(next(key)?, key)?;
            if got != want as usize {
                return Err(parse_err(0, format!("{key} id {got}, expected {want}")));
            }
        }
        let (n, end) = next("end")?;
        if end != "end" {
            return Err(parse_err(n, format!("expected 'end', found '{end}'")));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_err(line: usize, detail: String) -> Error {
    Error::Parse {
        what: "vocab file",
        location: format!("line {line}"),
        detail,
    }
}

fn keyed((n, line): (usize, &str), key: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
        (Some(k), Some(Ok(v)), None) if k == key => Ok(v),
        _ => Err(parse_err(n, format!("expected '{key} <int>', found '{line}'"))),
    }
}

/// Replaces non-overlapping occurrences of `pair`, scanning left to right.
fn merge_pair(ids: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

/// Greedy BPE: repeatedly merge the most frequent adjacent pair until the
/// base vocabulary reaches `target_vocab` entries or no pair remains.
/// Equal counts go to the pair whose (left bytes, right bytes) is
/// lexicographically smallest, then to the smaller id pair. Merges never
/// cross corpus items.
pub fn train_bpe<T: AsRef<[u8]>>(corpus: &[T], target_vocab: usize) -> Result<Vocab> {
    if target_vocab < 256 {
        return Err(Error::Argument(format!("target_vocab {target_vocab} below the 256 byte tokens")));
    }
    if corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::Argument("empty corpus".into()));
    }

    // Identical items share one word with a multiplicity.
    let mut index: HashMap<&[u8], usize> = HashMap::new();
    let mut words: Vec<Vec<u32>> = Vec::new();
    let mut freq: Vec<i64> = Vec::new();
    for item in corpus {
        let bytes = item.as_ref();
        if bytes.len() < 2 {
            continue;
        }
        let w = *index.entry(bytes).or_insert_with(|| {
            words.push(bytes.iter().map(|&b| u32::from(b)).collect());
            freq.push(0);
            words.len() - 1
        });
        freq[w] += 1;
    }

    let mut counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut holders: HashMap<(u32, u32), BTreeSet<usize>> = HashMap::new();
    for (w, ids) in words.iter().enumerate() {
        for p in ids.windows(2) {
            *counts.entry((p[0], p[1])).or_default() += freq[w];
            holders.entry((p[0], p[1])).or_default().insert(w);
        }
    }

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    while tokens.len() < target_vocab {
        let mut best: Option<((u32, u32), i64)> = None;
        for (&pair, &c) in &counts {
            if c <= 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    c > bc || (c == bc && pair_key(&tokens, pair) < pair_key(&tokens, bp))
                }
            };
            if better {
                best = Some((pair, c));
            }
        }
        let Some((pair, _)) = best else { break };
        let new_id = tokens.len() as u32;
        let mut joined = tokens[pair.0 as usize].clone();
        joined.extend_from_slice(&tokens[pair.1 as usize]);
        tokens.push(joined);
        merges.push(pair);

        let affected = holders.remove(&pair).unwrap_or_default();
        for w in affected {
            let f = freq[w];
            for p in words[w].windows(2) {
                *counts.get_mut(&(p[0], p[1])).expect("counted pair") -= f;
            }
            let merged = merge_pair(&words[w], pair, new_id);
            for p in merged.windows(2) {
                *counts.entry((p[0], p[1])).or_default() += f;
                holders.entry((p[0], p[1])).or_default().insert(w);
            }
            words[w] = merged;
        }
        counts.retain(|_, c| *c > 0);
    }
    Vocab::from_merges(merges)
}

fn pair_key(tokens: &[Vec<u8>], pair: (u32, u32)) -> (&[u8], &[u8], (u32, u32)) {
    (&tokens[pair.0 as usize], &tokens[pair.1 as usize], pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_pair_is_first_merge() {
        let v = train_bpe(&["aaaa"], 257).unwrap();
        assert_eq!(v.merges(), &[(97, 97)]);
        assert_eq!(v.encode(b"aaaa"), vec![256, 256]);
    }

    #[test]
    fn target_256_is_identity() {
        let v = train_bpe(&["hello world"], 256).unwrap();
        assert_eq!(v.base_size(), 256);
        assert_eq!(v.encode("héllo".as_bytes()), "héllo".bytes().map(u32::from).collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe::<&str>(&[], 300), Err(Error::Argument(_))));
        assert!(matches!(train_bpe(&[""], 300), Err(Error::Argument(_))));
        assert!(matches!(train_bpe(&["ab"], 255), Err(Error::Argument(_))));
        let v = Vocab::bytes();
        assert!(matches!(v.decode(&[v.total_size() as u32], SpecialMode::Skip), Err(Error::Index(_))));
    }

    #[test]
    fn specials_layout() {
        let v = train_bpe(&["abababcd"], 300).unwrap();
        assert_eq!(v.total_size(), v.base_size() + 768);
        assert_eq!(v.bos_id() as usize, v.base_size());
        assert_eq!(v.decode(&[v.bos_id(), 97, v.eos_id()], SpecialMode::Skip).unwrap(), b"a");
        assert_eq!(
            v.decode(&[v.bos_id(), 97, v.pad_id(), v.pad_id() + 1], SpecialMode::Sentinel).unwrap(),
            b"<|bos|>a<|pad|><|special_3|>"
        );
    }

    #[test]
    fn runs_out_of_pairs() {
        let v = train_bpe(&["abc"], 1000).unwrap();
        assert_eq!(v.base_size(), 258);
        assert_eq!(v.encode(b"abc"), vec![257]);
    }

    #[test]
    fn text_round_trip() {
        let v = train_bpe(&["the cat sat on the mat", "the hat"], 290).unwrap();
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        let bad = v.to_text().replacen("bpe-vocab v1", "bpe-vocab v2", 1);
        assert!(matches!(Vocab::from_text(&bad), Err(Error::Parse { .. })));
    }
}
