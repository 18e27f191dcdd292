use serde::{Deserialize, Serialize};

use crate::data::Splits;
use crate::error::{Error, Result};
use crate::probes::{fit_gaussian, predict_linear, train_linear, LinearHyper};
use crate::rankings::{Method, RankConfig, Ranking, Variant};
use crate::report::{csv_row, fmt_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Linear,
    Gaussian,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ProbeKind::Linear),
            "gaussian" => Ok(ProbeKind::Gaussian),
            _ => Err(Error::Range(format!("unknown probe `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedK {
    pub k: usize,
    pub error: String,
}

/// Test accuracy of a probe trained on the top-k neurons of a ranking, for
/// an increasing grid of k.
///
/// A k whose probe fails is left out of `ks` and listed in `failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub config: RankConfig,
    pub probe: ProbeKind,
    pub method: Method,
    pub variant: Variant,
    /// Neurons in the full representation.
    pub dims: usize,
    pub ks: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub control_accuracies: Option<Vec<f64>>,
    pub failed: Vec<FailedK>,
}

impl AccuracyCurve {
    /// `probe/method-variant`, e.g. `gaussian/probeless-ttb`.
    pub fn combination(&self) -> String {
        format!(
            "{}/{}-{}",
            self.probe.name(),
            self.method.name(),
            self.variant.short()
        )
    }

    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .map(|i| self.accuracies[i])
    }

    /// Stores `control`'s accuracies as this curve's control column.
    pub fn attach_control(&mut self, control: &AccuracyCurve) -> Result<()> {
        if control.ks != self.ks {
            return Err(Error::GridMismatch);
        }
        self.control_accuracies = Some(control.accuracies.clone());
        Ok(())
    }
}

fn scale_grid(ks: impl IntoIterator<Item = usize>, d: usize) -> Vec<usize> {
    let mut out: Vec<usize> = ks
        .into_iter()
        .map(|k| {
            let k = k as f64 * (d.min(768) as f64 / 768.0);
            (k.round() as usize).clamp(1, d.max(1))
        })
        .collect();
    out.dedup();
    out
}

/// `{10, 20, ..., 150}` for 768 neurons, scaled down proportionally for
/// smaller representations.
pub fn default_k_grid(d: usize) -> Vec<usize> {
    scale_grid((1..=15).map(|i| i * 10), d)
}

/// `{10, 50, 150}`, scaled like [`default_k_grid`].
pub fn default_significance_ks(d: usize) -> Vec<usize> {
    scale_grid([10, 50, 150], d)
}

fn check_grid(ks: &[usize], d: usize) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::Range("empty k grid".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Range("k grid must be strictly increasing".into()));
    }
    if ks[0] == 0 || ks[ks.len() - 1] > d {
        return Err(Error::Range(format!("k grid must lie in [1, {d}]")));
    }
    Ok(())
}

/// Trains `probe` on the top-k neurons of `ranking` for every k in `ks` and
/// records accuracy on the test split.
pub fn topk_curve(
    splits: &Splits,
    probe: ProbeKind,
    ranking: &Ranking,
    ks: &[usize],
    hyper: LinearHyper,
) -> Result<AccuracyCurve> {
    let d = splits.train.dims();
    for part in [&splits.dev, &splits.test] {
        if part.dims() != d {
            return Err(Error::DimMismatch(d, part.dims()));
        }
        if part.label_set() != splits.train.label_set() {
            return Err(Error::LabelMismatch);
        }
    }
    if ranking.len() != d {
        return Err(Error::DimMismatch(d, ranking.len()));
    }
    check_grid(ks, d)?;

    let mut curve = AccuracyCurve {
        config: ranking.config.clone(),
        probe,
        method: ranking.method,
        variant: ranking.variant,
        dims: d,
        ks: Vec::with_capacity(ks.len()),
        accuracies: Vec::with_capacity(ks.len()),
        control_accuracies: None,
        failed: Vec::new(),
    };

    let gaussian = match probe {
        ProbeKind::Gaussian => Some(fit_gaussian(&splits.train)),
        ProbeKind::Linear => None,
    };
    for &k in ks {
        let subset = ranking.top(k);
        let acc = match &gaussian {
            Some(Ok(full)) => full
                .marginalize(subset)
                .and_then(|p| p.predict(&splits.test))
                .map(|p| p.accuracy),
            Some(Err(e)) => Err(Error::Numerical(e.to_string())),
            None => train_linear(&splits.train, subset, hyper)
                .and_then(|p| predict_linear(&p, &splits.test))
                .map(|p| p.accuracy),
        };
        match acc {
            Ok(a) => {
                curve.ks.push(k);
                curve.accuracies.push(a);
            }
            Err(e) => curve.failed.push(FailedK {
                k,
                error: e.to_string(),
            }),
        }
    }
    Ok(curve)
}

/// Task accuracy minus control accuracy at every k.
pub fn selectivity(task: &AccuracyCurve, control: &AccuracyCurve) -> Result<Vec<f64>> {
    if task.ks != control.ks {
        return Err(Error::GridMismatch);
    }
    Ok(task
        .accuracies
        .iter()
        .zip(&control.accuracies)
        .map(|(t, c)| t - c)
        .collect())
}

/// One row per (curve, k). Selectivity is filled when a control column is
/// attached.
pub fn curves_to_csv(curves: &[AccuracyCurve]) -> String {
    let mut out = csv_row(&[
        "corpus",
        "attribute",
        "layer",
        "probe",
        "ranking",
        "k",
        "accuracy",
        "control_accuracy",
        "selectivity",
    ]);
    for c in curves {
        let ranking = format!("{}-{}", c.method.name(), c.variant.short());
        for (i, (&k, &acc)) in c.ks.iter().zip(&c.accuracies).enumerate() {
            let control = c.control_accuracies.as_ref().map(|v| v[i]);
            out.push_str(&csv_row(&[
                &c.config.corpus,
                &c.config.attribute,
                &c.config.layer,
                c.probe.name(),
                &ranking,
                &k.to_string(),
                &fmt_f64(acc),
                &control.map(fmt_f64).unwrap_or_default(),
                &control.map(|v| fmt_f64(acc - v)).unwrap_or_default(),
            ]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeDataset, ReprSet};
    use crate::probes::predict_gaussian;
    use crate::rankings::{probeless_rank, reverse};

    fn planted_single_neuron() -> Splits {
        let labels: Vec<usize> = (0..120).map(|i| i % 2).collect();
        let rows: Vec<f32> = labels
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| {
                (0..4)
                    .map(|j| {
                        if j == 2 {
                            l as f32
                        } else {
                            ((i * 7 + j * 3) % 11) as f32 / 11.0
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let ds = AttributeDataset::with_label_set(
            ReprSet::from_matrix(120, 4, rows).unwrap(),
            "A",
            labels,
            vec!["a".into(), "b".into()],
            (0..120).map(|i| format!("w{i}")).collect(),
        )
        .unwrap();
        ds.split(0.5, 0.25, 7).unwrap()
    }

    #[test]
    fn default_grid() {
        assert_eq!(
            default_k_grid(768),
            (1..=15).map(|i| i * 10).collect::<Vec<_>>()
        );
        let small = default_k_grid(64);
        assert_eq!(small[0], 1);
        assert_eq!(*small.last().unwrap(), 13);
        assert!(small.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_significance_ks(768), vec![10, 50, 150]);
        assert_eq!(default_significance_ks(64), vec![1, 4, 13]);
    }

    #[test]
    fn k1_on_noiseless_plant() {
        let s = planted_single_neuron();
        let r = probeless_rank(&s.train).unwrap();
        assert_eq!(r.order()[0], 2);
        for probe in [ProbeKind::Linear, ProbeKind::Gaussian] {
            let c = topk_curve(&s, probe, &r, &[1], LinearHyper::default()).unwrap();
            assert_eq!(c.accuracies, vec![1.0], "{probe:?}");
        }
    }

    #[test]
    fn full_subset_matches_full_probe() {
        let s = planted_single_neuron();
        let r = reverse(&probeless_rank(&s.train).unwrap());
        let c = topk_curve(&s, ProbeKind::Gaussian, &r, &[4], LinearHyper::default()).unwrap();
        let full = fit_gaussian(&s.train).unwrap();
        let direct = predict_gaussian(&full, &s.test, &[0, 1, 2, 3])
            .unwrap()
            .accuracy;
        assert_eq!(c.accuracies, vec![direct]);
    }

    #[test]
    fn bad_grids() {
        let s = planted_single_neuron();
        let r = probeless_rank(&s.train).unwrap();
        for ks in [vec![], vec![0], vec![2, 2], vec![5]] {
            assert!(topk_curve(&s, ProbeKind::Linear, &r, &ks, LinearHyper::default()).is_err());
        }
    }

    #[test]
    fn selectivity_subtracts() {
        let s = planted_single_neuron();
        let r = probeless_rank(&s.train).unwrap();
        let mut task =
            topk_curve(&s, ProbeKind::Gaussian, &r, &[1, 2], LinearHyper::default()).unwrap();
        assert_eq!(selectivity(&task, &task).unwrap(), vec![0.0, 0.0]);
        let mut control = task.clone();
        task.accuracies = vec![0.9, 0.8];
        control.accuracies = vec![0.6, 0.8];
        let sel = selectivity(&task, &control).unwrap();
        assert!((sel[0] - 0.3).abs() < 1e-15 && sel[1] == 0.0);
        let back = selectivity(&control, &task).unwrap();
        assert!(sel.iter().zip(&back).all(|(a, b)| *a == -*b));
        control.ks = vec![1, 3];
        assert!(matches!(
            selectivity(&task, &control),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn memorizing_probe_has_low_selectivity() {
        use crate::eval::make_control;
        // four word types, each with its own tight cluster; the task label is
        // a function of the type, so control labels are just as learnable
        let centers = [[0.0f32, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut words = Vec::new();
        for i in 0..200 {
            let t = i % 4;
            let jitter = ((i * 37) % 19) as f32 * 0.01;
            rows.extend([centers[t][0] + jitter, centers[t][1] - jitter]);
            labels.push(t % 2);
            words.push(format!("type{t}"));
        }
        let ds = AttributeDataset::with_label_set(
            ReprSet::from_matrix(200, 2, rows).unwrap(),
            "A",
            labels,
            vec!["a".into(), "b".into()],
            words,
        )
        .unwrap();
        // a seed whose control labels are not all the same
        let seed = (0..)
            .find(|&s| {
                let c = make_control(&ds, s).unwrap();
                c.class_counts().iter().all(|&n| n > 0)
            })
            .unwrap();
        let task = ds.split(0.6, 0.2, 1).unwrap();
        let control = make_control(&ds, seed).unwrap().split(0.6, 0.2, 1).unwrap();
        let r = Ranking::new(Method::Random, vec![0, 1]).unwrap();
        let t = topk_curve(&task, ProbeKind::Gaussian, &r, &[2], LinearHyper::default()).unwrap();
        let c = topk_curve(
            &control,
            ProbeKind::Gaussian,
            &r,
            &[2],
            LinearHyper::default(),
        )
        .unwrap();
        assert!(c.accuracies[0] > 0.9, "{:?}", c.accuracies);
        assert!(selectivity(&t, &c).unwrap()[0].abs() < 0.1);
    }

    #[test]
    fn csv_has_selectivity_column() {
        let s = planted_single_neuron();
        let r = probeless_rank(&s.train).unwrap();
        let mut task =
            topk_curve(&s, ProbeKind::Gaussian, &r, &[1], LinearHyper::default()).unwrap();
        let mut control = task.clone();
        control.accuracies = vec![0.25];
        task.attach_control(&control).unwrap();
        let csv = curves_to_csv(&[task]);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with(",1,1,0.25,0.75"), "{line}");
    }
}
