use serde::{Deserialize, Serialize};

use super::chol::{log_density, GrowingCholesky};
use super::{argmax, check_subset, Predictions};
use crate::data::AttributeDataset;
use crate::error::{Error, Result};

const RIDGE_SCALE: f64 = 1e-4;
const RIDGE_FLOOR: f64 = 1e-8;

/// Generative classifier with one full-covariance Gaussian per class.
///
/// Covariances are stored unregularized; every evaluation adds the class's
/// ridge to the diagonal. Marginalizing keeps the ridge of the full fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProbe {
    /// Original neuron index of each local dimension.
    neurons: Vec<usize>,
    label_set: Vec<String>,
    means: Vec<Vec<f64>>,
    /// Row-major `k x k` maximum-likelihood covariance per class.
    covariances: Vec<Vec<f64>>,
    ridges: Vec<f64>,
    log_priors: Vec<f64>,
}

pub fn fit_gaussian(dataset: &AttributeDataset) -> Result<GaussianProbe> {
    let d = dataset.dims();
    let z = dataset.num_classes();
    let counts = dataset.class_counts();
    for (c, &n) in counts.iter().enumerate() {
        if n < 2 {
            return Err(Error::InsufficientData {
                class: dataset.label_set()[c].clone(),
                rows: n,
                needed: 2,
            });
        }
    }

    let mut means = vec![vec![0.0f64; d]; z];
    for (i, &l) in dataset.labels().iter().enumerate() {
        for (m, &v) in means[l].iter_mut().zip(dataset.reprs().row(i)) {
            *m += f64::from(v);
        }
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }

    let mut covariances = vec![vec![0.0f64; d * d]; z];
    let mut centered = vec![0.0f64; d];
    for (i, &l) in dataset.labels().iter().enumerate() {
        for ((c, &v), &m) in centered
            .iter_mut()
            .zip(dataset.reprs().row(i))
            .zip(&means[l])
        {
            *c = f64::from(v) - m;
        }
        let cov = &mut covariances[l];
        for a in 0..d {
            let ca = centered[a];
            let row = &mut cov[a * d..a * d + a + 1];
            for (b, slot) in row.iter_mut().enumerate() {
                *slot += ca * centered[b];
            }
        }
    }
    let mut ridges = Vec::with_capacity(z);
    for (cov, &n) in covariances.iter_mut().zip(&counts) {
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / n as f64;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        let mean_diag = if d == 0 {
            0.0
        } else {
            (0..d).map(|a| cov[a * d + a]).sum::<f64>() / d as f64
        };
        ridges.push((RIDGE_SCALE * mean_diag).max(RIDGE_FLOOR));
    }

    let total = dataset.rows() as f64;
    Ok(GaussianProbe {
        neurons: (0..d).collect(),
        label_set: dataset.label_set().to_vec(),
        means,
        covariances,
        ridges,
        log_priors: counts.iter().map(|&n| (n as f64 / total).ln()).collect(),
    })
}

/// Classifies `dataset` using only the neurons in `subset`.
pub fn predict_gaussian(
    probe: &GaussianProbe,
    dataset: &AttributeDataset,
    subset: &[usize],
) -> Result<Predictions> {
    probe.marginalize(subset)?.predict(dataset)
}

impl GaussianProbe {
    pub fn neurons(&self) -> &[usize] {
        &self.neurons
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn num_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class]
    }

    /// Unregularized covariance between local dimensions `a` and `b`.
    pub fn covariance(&self, class: usize, a: usize, b: usize) -> f64 {
        self.covariances[class][a * self.neurons.len() + b]
    }

    /// Covariance with the class ridge on the diagonal.
    pub fn regularized(&self, class: usize, a: usize, b: usize) -> f64 {
        let v = self.covariance(class, a, b);
        if a == b {
            v + self.ridges[class]
        } else {
            v
        }
    }

    pub fn ridge(&self, class: usize) -> f64 {
        self.ridges[class]
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    /// Restricts the probe to `subset`, given as original neuron indices.
    pub fn marginalize(&self, subset: &[usize]) -> Result<GaussianProbe> {
        let max = self.neurons.iter().max().map_or(0, |m| m + 1);
        check_subset(subset, max.max(subset.iter().max().map_or(0, |m| m + 1)))?;
        let mut local = vec![usize::MAX; max];
        for (pos, &n) in self.neurons.iter().enumerate() {
            local[n] = pos;
        }
        let pos: Vec<usize> = subset
            .iter()
            .map(|&n| match local.get(n) {
                Some(&p) if p != usize::MAX => Ok(p),
                _ => Err(Error::Index {
                    index: n,
                    dims: self.neurons.len(),
                }),
            })
            .collect::<Result<_>>()?;
        let k = pos.len();
        let d = self.neurons.len();
        Ok(GaussianProbe {
            neurons: subset.to_vec(),
            label_set: self.label_set.clone(),
            means: self
                .means
                .iter()
                .map(|m| pos.iter().map(|&p| m[p]).collect())
                .collect(),
            covariances: self
                .covariances
                .iter()
                .map(|cov| {
                    let mut out = Vec::with_capacity(k * k);
                    for &a in &pos {
                        for &b in &pos {
                            out.push(cov[a * d + b]);
                        }
                    }
                    out
                })
                .collect(),
            ridges: self.ridges.clone(),
            log_priors: self.log_priors.clone(),
        })
    }

    fn factorize(&self) -> Result<Vec<GrowingCholesky>> {
        (0..self.num_classes())
            .map(|c| {
                GrowingCholesky::factor(self.neurons.len(), |a, b| self.regularized(c, a, b))
                    .ok_or_else(|| {
                        Error::Numerical(format!(
                            "covariance of class `{}` is not positive definite",
                            self.label_set[c]
                        ))
                    })
            })
            .collect()
    }

    fn log_joint_with(&self, factors: &[GrowingCholesky], row: &[f32]) -> Vec<f64> {
        let k = self.neurons.len();
        (0..self.num_classes())
            .map(|c| {
                let centered: Vec<f64> = self
                    .neurons
                    .iter()
                    .zip(&self.means[c])
                    .map(|(&n, &m)| f64::from(row[n]) - m)
                    .collect();
                let y = factors[c].whiten(&centered);
                let quad: f64 = y.iter().map(|v| v * v).sum();
                self.log_priors[c] + log_density(quad, factors[c].log_det_half(), k)
            })
            .collect()
    }

    fn check_dataset(&self, dataset: &AttributeDataset) -> Result<()> {
        if dataset.label_set() != self.label_set.as_slice() {
            return Err(Error::LabelMismatch);
        }
        if let Some(&n) = self.neurons.iter().find(|&&n| n >= dataset.dims()) {
            return Err(Error::Index {
                index: n,
                dims: dataset.dims(),
            });
        }
        Ok(())
    }

    /// Log prior plus log likelihood per class for every row.
    pub fn log_joint(&self, dataset: &AttributeDataset) -> Result<Vec<Vec<f64>>> {
        self.check_dataset(dataset)?;
        if self.neurons.is_empty() {
            return Err(Error::EmptySubset);
        }
        let factors = self.factorize()?;
        Ok((0..dataset.rows())
            .map(|i| self.log_joint_with(&factors, dataset.reprs().row(i)))
            .collect())
    }

    /// Normalized class posteriors per row.
    pub fn posteriors(&self, dataset: &AttributeDataset) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .log_joint(dataset)?
            .into_iter()
            .map(|scores| {
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            })
            .collect())
    }

    pub fn predict(&self, dataset: &AttributeDataset) -> Result<Predictions> {
        if dataset.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let labels = self.log_joint(dataset)?.iter().map(|s| argmax(s)).collect();
        Ok(Predictions::score(labels, dataset.labels()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ReprSet;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(
        dims: usize,
        rows: &[f32],
        labels: &[usize],
        label_set: &[&str],
    ) -> AttributeDataset {
        let n = labels.len();
        AttributeDataset::with_label_set(
            ReprSet::from_matrix(n, dims, rows.to_vec()).unwrap(),
            "A",
            labels.to_vec(),
            label_set.iter().map(|s| s.to_string()).collect(),
            vec!["w".into(); n],
        )
        .unwrap()
    }

    fn random_dataset(seed: u64, n: usize, d: usize, z: usize) -> AttributeDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % z).collect();
        let rows: Vec<f32> = labels
            .iter()
            .flat_map(|&l| {
                (0..d)
                    .map(move |j| (l * (j + 1)) as f32 * 0.3)
                    .collect::<Vec<_>>()
            })
            .map(|v| v + rng.random_range(-1.0f32..1.0))
            .collect();
        let names: Vec<String> = (0..z).map(|c| format!("c{c}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        dataset(d, &rows, &labels, &refs)
    }

    #[test]
    fn one_dimensional_ml_estimates() {
        let ds = dataset(1, &[-1.0, 1.0, 4.0, 6.0], &[0, 0, 1, 1], &["a", "b"]);
        let p = fit_gaussian(&ds).unwrap();
        assert_eq!(p.mean(0), &[0.0]);
        assert_eq!(p.covariance(0, 0, 0), 1.0);
        assert_eq!(p.ridge(0), 1e-4);
        assert_eq!(p.log_priors()[0], p.log_priors()[1]);
    }

    #[test]
    fn degenerate_covariance_is_ridged() {
        let ds = dataset(
            2,
            &[1.0, 2.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0],
            &[0, 0, 1, 1],
            &["a", "b"],
        );
        let p = fit_gaussian(&ds).unwrap();
        assert_eq!(p.covariance(0, 0, 0), 0.0);
        assert_eq!(p.ridge(0), RIDGE_FLOOR);
        assert_eq!(p.predict(&ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn too_few_rows() {
        let ds = dataset(1, &[0.0, 1.0, 2.0], &[0, 1, 1], &["a", "b"]);
        assert!(matches!(
            fit_gaussian(&ds),
            Err(Error::InsufficientData { rows: 1, .. })
        ));
    }

    #[test]
    fn closed_form_posterior() {
        // unit variances, means 0 and 2, equal priors; at x = 0.5 the log
        // density difference is ((1.5)^2 - 0.5^2) / 2 = 1
        let ds = dataset(1, &[-1.0, 1.0, 1.0, 3.0], &[0, 0, 1, 1], &["a", "b"]);
        let mut p = fit_gaussian(&ds).unwrap();
        p.ridges = vec![0.0, 0.0];
        let probe_point = dataset(1, &[0.5], &[0], &["a", "b"]);
        let post = p.posteriors(&probe_point).unwrap();
        let e = std::f64::consts::E;
        assert!((post[0][0] - e / (e + 1.0)).abs() < 1e-12);
        assert_eq!(p.predict(&probe_point).unwrap().labels, vec![0]);
    }

    #[test]
    fn symmetric_tie_goes_to_lower_class() {
        let ds = dataset(1, &[-1.0, 1.0, 1.0, 3.0], &[1, 1, 0, 0], &["a", "b"]);
        let p = fit_gaussian(&ds).unwrap();
        let mid = dataset(1, &[1.0], &[0], &["a", "b"]);
        assert_eq!(p.predict(&mid).unwrap().labels, vec![0]);
    }

    #[test]
    fn single_class_always_predicted() {
        let ds = dataset(1, &[0.0, 1.0, 2.0], &[0, 0, 0], &["a"]);
        let p = fit_gaussian(&ds).unwrap();
        let other = dataset(1, &[5.0, 6.0, -3.0, 0.0], &[0, 0, 0, 0], &["a"]);
        assert_eq!(p.predict(&other).unwrap().accuracy, 1.0);
    }

    #[test]
    fn marginalize_identity_and_single() {
        let ds = random_dataset(1, 40, 3, 2);
        let p = fit_gaussian(&ds).unwrap();
        assert_eq!(p.marginalize(&[0, 1, 2]).unwrap(), p);
        let m = p.marginalize(&[1]).unwrap();
        assert_eq!(m.mean(1), &[p.mean(1)[1]]);
        assert_eq!(m.regularized(0, 0, 0), p.covariance(0, 1, 1) + p.ridge(0));
        assert!(matches!(p.marginalize(&[]), Err(Error::EmptySubset)));
        assert!(matches!(
            m.marginalize(&[0]),
            Err(Error::Index { index: 0, .. })
        ));
    }

    #[test]
    fn marginalize_composes() {
        let ds = random_dataset(2, 60, 4, 3);
        let p = fit_gaussian(&ds).unwrap();
        let twice = p.marginalize(&[0, 2]).unwrap().marginalize(&[0]).unwrap();
        assert_eq!(twice, p.marginalize(&[0]).unwrap());
        let reordered = p
            .marginalize(&[3, 1, 2])
            .unwrap()
            .marginalize(&[2, 3])
            .unwrap();
        assert_eq!(reordered, p.marginalize(&[2, 3]).unwrap());
    }

    #[test]
    fn marginal_matches_refit_on_projection() {
        // refitting on projected columns reproduces the sub-mean and
        // sub-covariance; only the ridge (scaled by the mean diagonal) differs,
        // so compare with ridges forced equal
        let ds = random_dataset(3, 80, 4, 2);
        let full = fit_gaussian(&ds).unwrap();
        let subset = [3, 0];
        let mut marginal = full.marginalize(&subset).unwrap();
        let reprs = ds.reprs();
        let proj_rows: Vec<f32> = (0..ds.rows())
            .flat_map(|i| subset.iter().map(move |&j| reprs.row(i)[j]))
            .collect();
        let projected = AttributeDataset::with_label_set(
            ReprSet::from_matrix(ds.rows(), 2, proj_rows).unwrap(),
            "A",
            ds.labels().to_vec(),
            ds.label_set().to_vec(),
            ds.word_types().to_vec(),
        )
        .unwrap();
        let mut refit = fit_gaussian(&projected).unwrap();
        refit.ridges = marginal.ridges.clone();
        for c in 0..2 {
            for (a, b) in marginal.mean(c).iter().zip(refit.mean(c)) {
                assert!((a - b).abs() < 1e-12);
            }
            for a in 0..2 {
                for b in 0..2 {
                    assert!(
                        (marginal.covariance(c, a, b) - refit.covariance(c, a, b)).abs() < 1e-12
                    );
                }
            }
        }
        marginal.neurons = vec![0, 1];
        let a = marginal.predict(&projected).unwrap();
        let b = refit.predict(&projected).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    proptest! {
        #[test]
        fn posteriors_sum_to_one(seed in 0u64..500, z in 2usize..5) {
            let ds = random_dataset(seed, 12 * z, 3, z);
            let p = fit_gaussian(&ds).unwrap();
            for post in p.posteriors(&ds).unwrap() {
                prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn argmax_invariant_to_rescaling(seed in 0u64..500, exp in -3i32..4) {
            let ds = random_dataset(seed, 30, 3, 2);
            let scale = 2f32.powi(exp);
            let scaled_rows: Vec<f32> = ds.reprs().values().iter().map(|v| v * scale).collect();
            let scaled = AttributeDataset::with_label_set(
                ReprSet::from_matrix(ds.rows(), 3, scaled_rows).unwrap(),
                "A",
                ds.labels().to_vec(),
                ds.label_set().to_vec(),
                ds.word_types().to_vec(),
            ).unwrap();
            let a = fit_gaussian(&ds).unwrap().predict(&ds).unwrap();
            let b = fit_gaussian(&scaled).unwrap().predict(&scaled).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}
