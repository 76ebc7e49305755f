//! Symbol error rate, a prototype-matching line recognizer, and the
//! mixing-ratio sweep.

mod decode;
mod sweep;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use decode::{decode_line, DecoderConfig, PrototypeModel};
pub use sweep::{plot_sweep, sweep_mix, write_sweep_csv, SweepRow, SweepSetup};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Edit operations turning a reference into a hypothesis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`; may exceed 1.
    pub fn rate(&self) -> f64 {
        self.edits() as f64 / self.ref_len as f64
    }
}

impl std::ops::Add for EditCounts {
    type Output = EditCounts;
    fn add(self, o: EditCounts) -> EditCounts {
        EditCounts {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

/// Unit-cost Levenshtein alignment. Ties in the backtrace prefer a match or
/// substitution, then a deletion, then an insertion.
pub fn edit_counts<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut c = EditCounts {
        ref_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0
            && j > 0
            && d[i][j] == d[i - 1][j - 1] + usize::from(reference[i - 1] != hyp[j - 1])
        {
            c.substitutions += usize::from(reference[i - 1] != hyp[j - 1]);
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

pub fn ser<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<(f64, EditCounts)> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let c = edit_counts(hyp, reference);
    Ok((c.rate(), c))
}

/// Micro-averaged rate over `(hyp, ref)` pairs: total edits over total
/// reference length.
pub fn ser_corpus<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<(f64, EditCounts)> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = EditCounts::default();
    for (h, r) in pairs {
        total = total + ser(h, r)?.1;
    }
    Ok((total.rate(), total))
}

/// Hypotheses of the reference lengths with labels drawn uniformly from
/// `alphabet`: the chance-level recognizer.
pub fn random_hypotheses(refs: &[Vec<String>], alphabet: &[String], seed: u64) -> Vec<Vec<String>> {
    let mut rng = rng_from_seed(seed);
    refs.iter()
        .map(|r| {
            r.iter()
                .map(|_| alphabet[rng.random_range(0..alphabet.len())].clone())
                .collect()
        })
        .collect()
}
