use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_subset, Predictions};
use crate::data::AttributeDataset;
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearHyper {
    pub l1: f64,
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LinearHyper {
    fn default() -> Self {
        Self {
            l1: 1e-5,
            l2: 1e-5,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 256,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression over a neuron subset, trained with an
/// elastic-net penalty on the weights (the bias is unpenalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    /// `|Z|` rows of `subset.len()` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub subset: Vec<usize>,
    /// Neuron count of the data the probe was trained on.
    pub dims: usize,
    pub label_set: Vec<String>,
    pub hyper: LinearHyper,
    /// Penalized full-data loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl LinearProbe {
    fn scores(&self, row: &[f32], out: &mut [f64]) {
        for ((o, w), b) in out.iter_mut().zip(&self.weights).zip(&self.bias) {
            let mut s = *b;
            for (&j, wj) in self.subset.iter().zip(w) {
                s += wj * f64::from(row[j]);
            }
            *o = s;
        }
    }

    fn penalty(&self) -> f64 {
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for w in self.weights.iter().flatten() {
            l1 += w.abs();
            l2 += w * w;
        }
        self.hyper.l1 * l1 + self.hyper.l2 * l2
    }

    /// Mean cross-entropy over `dataset` plus the elastic-net penalty.
    pub fn loss(&self, dataset: &AttributeDataset) -> f64 {
        let mut scores = vec![0.0; self.bias.len()];
        let mut total = 0.0;
        for i in 0..dataset.rows() {
            self.scores(dataset.reprs().row(i), &mut scores);
            let lse = log_sum_exp(&scores);
            total += lse - scores[dataset.labels()[i]];
        }
        total / dataset.rows().max(1) as f64 + self.penalty()
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn train_linear(
    dataset: &AttributeDataset,
    subset: &[usize],
    hyper: LinearHyper,
) -> Result<LinearProbe> {
    let z = dataset.num_classes();
    if z < 2 {
        return Err(Error::DegenerateTask(z));
    }
    check_subset(subset, dataset.dims())?;
    if let Some(c) = dataset.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(dataset.label_set()[c].clone()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::Range("batch size must be positive".into()));
    }

    let k = subset.len();
    let mut probe = LinearProbe {
        weights: vec![vec![0.0; k]; z],
        bias: vec![0.0; z],
        subset: subset.to_vec(),
        dims: dataset.dims(),
        label_set: dataset.label_set().to_vec(),
        hyper,
        loss_history: Vec::with_capacity(hyper.epochs),
    };

    // Adam moments, weights then bias
    let n_params = z * k + z;
    let mut m = vec![0.0f64; n_params];
    let mut v = vec![0.0f64; n_params];
    let mut grad = vec![0.0f64; n_params];
    let mut scores = vec![0.0f64; z];
    let mut step = 0i32;

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..dataset.rows()).collect();
    let mut xs = vec![0.0f64; k];

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let row = dataset.reprs().row(i);
                for (x, &j) in xs.iter_mut().zip(subset) {
                    *x = f64::from(row[j]);
                }
                probe.scores(row, &mut scores);
                let lse = log_sum_exp(&scores);
                let gold = dataset.labels()[i];
                for c in 0..z {
                    let mut r = (scores[c] - lse).exp();
                    if c == gold {
                        r -= 1.0;
                    }
                    let r = r * inv;
                    let g = &mut grad[c * k..(c + 1) * k];
                    for (gj, xj) in g.iter_mut().zip(&xs) {
                        *gj += r * xj;
                    }
                    grad[z * k + c] += r;
                }
            }
            for c in 0..z {
                for j in 0..k {
                    let w = probe.weights[c][j];
                    let sign = if w > 0.0 {
                        1.0
                    } else if w < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    grad[c * k + j] += hyper.l1 * sign + 2.0 * hyper.l2 * w;
                }
            }

            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            for p in 0..n_params {
                m[p] = ADAM_BETA1 * m[p] + (1.0 - ADAM_BETA1) * grad[p];
                v[p] = ADAM_BETA2 * v[p] + (1.0 - ADAM_BETA2) * grad[p] * grad[p];
                let update = hyper.learning_rate * (m[p] / bc1) / ((v[p] / bc2).sqrt() + ADAM_EPS);
                if p < z * k {
                    probe.weights[p / k][p % k] -= update;
                } else {
                    probe.bias[p - z * k] -= update;
                }
            }
        }
        let loss = probe.loss(dataset);
        probe.loss_history.push(loss);
    }
    Ok(probe)
}

pub fn predict_linear(probe: &LinearProbe, dataset: &AttributeDataset) -> Result<Predictions> {
    if let Some(&j) = probe.subset.iter().find(|&&j| j >= dataset.dims()) {
        return Err(Error::Index {
            index: j,
            dims: dataset.dims(),
        });
    }
    if dataset.label_set() != probe.label_set.as_slice() {
        return Err(Error::LabelMismatch);
    }
    if dataset.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut scores = vec![0.0; probe.bias.len()];
    let labels = (0..dataset.rows())
        .map(|i| {
            probe.scores(dataset.reprs().row(i), &mut scores);
            argmax(&scores)
        })
        .collect();
    Ok(Predictions::score(labels, dataset.labels()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ReprSet;
    use proptest::prelude::*;
    use rand::Rng;

    fn dataset(dims: usize, rows: Vec<f32>, labels: Vec<usize>, z: usize) -> AttributeDataset {
        let n = labels.len();
        AttributeDataset::with_label_set(
            ReprSet::from_matrix(n, dims, rows).unwrap(),
            "A",
            labels,
            (0..z).map(|c| format!("c{c}")).collect(),
            (0..n).map(|i| format!("w{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn separable_one_dimensional() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let rows = labels
            .iter()
            .map(|&l| if l == 0 { -1.0 } else { 1.0 })
            .collect();
        let ds = dataset(1, rows, labels, 2);
        let probe = train_linear(&ds, &[0], LinearHyper::default()).unwrap();
        assert_eq!(predict_linear(&probe, &ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn noise_labels_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let make = |rng: &mut ChaCha8Rng, n: usize| {
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let rows = (0..n * 4).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            dataset(4, rows, labels, 2)
        };
        let train = make(&mut rng, 2000);
        let test = make(&mut rng, 4000);
        let probe = train_linear(&train, &[0, 1, 2, 3], LinearHyper::default()).unwrap();
        let acc = predict_linear(&probe, &test).unwrap().accuracy;
        assert!((acc - 0.5).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn constant_zero_column_stays_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let rows = labels
            .iter()
            .flat_map(|&l| {
                let x = if l == 0 { -1.0 } else { 1.0 } + rng.random_range(-0.5f32..0.5);
                [x, 0.0]
            })
            .collect();
        let ds = dataset(2, rows, labels, 2);
        let hyper = LinearHyper {
            l1: 0.0,
            l2: 0.0,
            ..LinearHyper::default()
        };
        let probe = train_linear(&ds, &[0, 1], hyper).unwrap();
        for w in &probe.weights {
            assert!(w[1].abs() < 1e-3);
            assert!(w[0].abs() > 1e-3);
        }
    }

    #[test]
    fn zero_probe_predicts_first_class() {
        let ds = dataset(2, vec![1.0, 2.0, -3.0, 4.0], vec![1, 0], 2);
        let probe = LinearProbe {
            weights: vec![vec![0.0; 2]; 2],
            bias: vec![0.0; 2],
            subset: vec![0, 1],
            dims: 2,
            label_set: ds.label_set().to_vec(),
            hyper: LinearHyper::default(),
            loss_history: vec![],
        };
        let p = predict_linear(&probe, &ds).unwrap();
        assert_eq!(p.labels, vec![0, 0]);
        assert_eq!(p.accuracy, 0.5);
    }

    #[test]
    fn errors() {
        let one_class = dataset(1, vec![0.0, 1.0], vec![0, 0], 1);
        assert!(matches!(
            train_linear(&one_class, &[0], LinearHyper::default()),
            Err(Error::DegenerateTask(1))
        ));
        let ds = dataset(1, vec![0.0, 1.0], vec![0, 1], 2);
        assert!(matches!(
            train_linear(&ds, &[], LinearHyper::default()),
            Err(Error::EmptySubset)
        ));
        let probe = train_linear(&ds, &[0], LinearHyper::default()).unwrap();
        let empty = dataset(1, vec![], vec![], 2);
        assert!(matches!(
            predict_linear(&probe, &empty),
            Err(Error::EmptyDataset)
        ));
        let mut wide = probe.clone();
        wide.subset = vec![3];
        assert!(matches!(
            predict_linear(&wide, &ds),
            Err(Error::Index { index: 3, .. })
        ));
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let rows = (0..900).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let ds = dataset(3, rows, labels, 3);
        let h = LinearHyper {
            batch_size: 32,
            seed: 4,
            ..LinearHyper::default()
        };
        let a = train_linear(&ds, &[0, 2], h).unwrap();
        let b = train_linear(&ds, &[0, 2], h).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn full_batch_loss_non_increasing(seed in 0u64..1000, n in 4usize..60, z in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = (0..n).map(|i| i % z).collect();
            let rows = labels
                .iter()
                .flat_map(|&l| {
                    let shift = l as f32 * 0.5;
                    (0..3).map(|_| shift + rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>()
                })
                .collect();
            let ds = dataset(3, rows, labels, z);
            let hyper = LinearHyper { batch_size: n, epochs: 10, ..LinearHyper::default() };
            let probe = train_linear(&ds, &[0, 1, 2], hyper).unwrap();
            // zero-initialized weights start at ln |Z|
            let mut prev = (z as f64).ln();
            for &l in &probe.loss_history {
                prop_assert!(l <= prev, "loss rose: {} -> {}", prev, l);
                prev = l;
            }
        }
    }
}
