use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    /// `(train, validation, test)` sizes for a guardian with `n >= 3` entries.
    /// Train and test each get at least one entry; validation takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).max(1);
        let test = ((self.test * n as f64).round() as usize).max(1);
        let train = train.min(n - 1);
        let test = test.min(n - train);
        (train, n - train - test, test)
    }
}

/// Disjoint per-guardian partition of an interaction matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitTriple {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
}

impl SplitTriple {
    /// Train plus validation, the items excluded from test-time candidates.
    pub fn seen(&self) -> InteractionMatrix {
        self.train.union(&self.validation)
    }
}

/// Shuffles each guardian's URLs with one seeded stream (guardians visited in
/// index order) and cuts them with [`SplitRatios::counts`].
pub fn split_per_guardian(m: &InteractionMatrix, ratios: SplitRatios, seed: u64) -> Result<SplitTriple> {
    if !(ratios.train > 0.0 && ratios.test > 0.0 && ratios.validation >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid split ratios {ratios:?}")));
    }
    let mut rng = seed::rng(seed);
    let n = m.n_guardians();
    let (mut train, mut validation, mut test) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for g in 0..n {
        let mut row = m.row(g).to_vec();
        if row.len() < 3 {
            return Err(Error::TooFewInteractions {
                guardian: g,
                count: row.len(),
                required: 3,
            });
        }
        row.shuffle(&mut rng);
        let (n_train, n_val, _) = ratios.counts(row.len());
        test.push(row.split_off(n_train + n_val));
        validation.push(row.split_off(n_train));
        train.push(row);
    }
    let urls = m.n_urls();
    Ok(SplitTriple {
        train: InteractionMatrix::from_rows(urls, train),
        validation: InteractionMatrix::from_rows(urls, validation),
        test: InteractionMatrix::from_rows(urls, test),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(row_lens: &[usize]) -> InteractionMatrix {
        let m = *row_lens.iter().max().unwrap();
        let pairs = row_lens
            .iter()
            .enumerate()
            .flat_map(|(g, &len)| (0..len).map(move |u| (g, u)));
        InteractionMatrix::from_pairs(row_lens.len(), m, pairs).unwrap()
    }

    #[test]
    fn three_urls_split_two_zero_one() {
        // round(2.1) = 2 train, round(0.6) = 1 test, 0 left for validation
        assert_eq!(SplitRatios::default().counts(3), (2, 0, 1));
        let s = split_per_guardian(&matrix(&[3]), SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.nnz(), s.validation.nnz(), s.test.nnz()), (2, 0, 1));
    }

    #[test]
    fn ten_urls_split_exactly() {
        assert_eq!(SplitRatios::default().counts(10), (7, 1, 2));
    }

    #[test]
    fn counts_never_exceed_n() {
        for n in 3..200 {
            let (a, b, c) = SplitRatios::default().counts(n);
            assert_eq!(a + b + c, n);
            assert!(a >= 1 && c >= 1);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let m = matrix(&[5, 8, 12, 3]);
        let a = split_per_guardian(&m, SplitRatios::default(), 9).unwrap();
        let b = split_per_guardian(&m, SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = split_per_guardian(&m, SplitRatios::default(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn short_rows_rejected() {
        let m = matrix(&[5, 2]);
        assert!(matches!(
            split_per_guardian(&m, SplitRatios::default(), 0),
            Err(Error::TooFewInteractions { guardian: 1, count: 2, .. })
        ));
    }
}
