//! Word error rate from a minimum-edit word alignment.

use serde::{Deserialize, Serialize};

use crate::datapipe::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// Words in the reference (may be zero).
    pub reference_words: usize,
    /// `(S + D + I) / max(1, reference_words)`.
    pub wer: f64,
}

impl WerBreakdown {
    pub fn from_counts(substitutions: usize, deletions: usize, insertions: usize, reference_words: usize) -> Self {
        let errors = substitutions + deletions + insertions;
        WerBreakdown {
            substitutions,
            deletions,
            insertions,
            reference_words,
            wer: errors as f64 / reference_words.max(1) as f64,
        }
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Corpus-level aggregate: operations are summed before dividing.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a WerBreakdown>) -> Self {
        let (mut s, mut d, mut i, mut n) = (0, 0, 0, 0);
        for b in items {
            s += b.substitutions;
            d += b.deletions;
            i += b.insertions;
            n += b.reference_words;
        }
        Self::from_counts(s, d, i, n)
    }
}

/// `(S, D, I)` of a minimum-edit alignment. Among minimal alignments the
/// one with the most substitutions is chosen, which fixes the split.
pub fn align_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, usize, usize) {
    #[derive(Clone, Copy)]
    struct Cell {
        cost: usize,
        subs: usize,
        dels: usize,
        ins: usize,
    }
    impl Cell {
        fn better(self, other: Cell) -> bool {
            (self.cost, std::cmp::Reverse(self.subs)) < (other.cost, std::cmp::Reverse(other.subs))
        }
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let mut prev: Vec<Cell> = (0..=m).map(|j| Cell { cost: j, subs: 0, dels: 0, ins: j }).collect();
    for i in 1..=n {
        let mut cur = Vec::with_capacity(m + 1);
        cur.push(Cell { cost: i, subs: 0, dels: i, ins: 0 });
        for j in 1..=m {
            let diag = prev[j - 1];
            let mut best = if reference[i - 1] == hypothesis[j - 1] {
                diag
            } else {
                Cell { cost: diag.cost + 1, subs: diag.subs + 1, ..diag }
            };
            let up = prev[j];
            let del = Cell { cost: up.cost + 1, dels: up.dels + 1, ..up };
            if del.better(best) {
                best = del;
            }
            let left = cur[j - 1];
            let ins = Cell { cost: left.cost + 1, ins: left.ins + 1, ..left };
            if ins.better(best) {
                best = ins;
            }
            cur.push(best);
        }
        prev = cur;
    }
    let c = prev[m];
    (c.subs, c.dels, c.ins)
}

/// Normalizes both texts, splits on spaces and aligns words.
pub fn wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    let r = normalize_text(reference);
    let h = normalize_text(hypothesis);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    let (s, d, i) = align_counts(&rw, &hw);
    WerBreakdown::from_counts(s, d, i, rw.len())
}
