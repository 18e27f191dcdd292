//! Probe classifiers: an elastic-net multinomial linear probe and a
//! per-class full-covariance Gaussian probe that can be marginalized onto
//! any neuron subset without refitting.

pub(crate) mod chol;
mod gaussian;
mod linear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gaussian::{fit_gaussian, predict_gaussian, GaussianProbe};
pub use linear::{predict_linear, train_linear, LinearHyper, LinearProbe};

/// Per-row predicted label indices and the fraction that were correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub accuracy: f64,
}

impl Predictions {
    pub(crate) fn score(labels: Vec<usize>, gold: &[usize]) -> Self {
        let correct = labels.iter().zip(gold).filter(|(p, g)| p == g).count();
        let accuracy = correct as f64 / gold.len() as f64;
        Self { labels, accuracy }
    }
}

/// Index of the largest score; the first one wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Checks that `subset` is non-empty, in range and free of repeats.
pub(crate) fn check_subset(subset: &[usize], dims: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut seen = vec![false; dims];
    for &i in subset {
        if i >= dims {
            return Err(Error::Index { index: i, dims });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[f64::NEG_INFINITY, -1.0]), 1);
    }

    #[test]
    fn subset_checks() {
        assert!(matches!(check_subset(&[], 3), Err(Error::EmptySubset)));
        assert!(matches!(check_subset(&[3], 3), Err(Error::Index { .. })));
        assert!(matches!(
            check_subset(&[1, 1], 3),
            Err(Error::DuplicateIndex(1))
        ));
        assert!(check_subset(&[2, 0], 3).is_ok());
    }
}
