//! Neuron rankings: mean-difference (probeless), linear-probe weights,
//! greedy Gaussian selection, plus reversed and random variants.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{class_means, AttributeDataset};
use crate::error::{Error, Result};
use crate::probes::chol::{log_density, GrowingCholesky};
use crate::probes::{argmax, fit_gaussian, GaussianProbe, LinearProbe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Probeless,
    Linear,
    Gaussian,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Probeless => "probeless",
            Method::Linear => "linear",
            Method::Gaussian => "gaussian",
            Method::Random => "random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probeless" => Ok(Method::Probeless),
            "linear" => Ok(Method::Linear),
            "gaussian" => Ok(Method::Gaussian),
            "random" => Ok(Method::Random),
            _ => Err(Error::Range(format!("unknown ranking method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TopToBottom,
    BottomToTop,
}

impl Variant {
    pub fn flipped(self) -> Self {
        match self {
            Variant::TopToBottom => Variant::BottomToTop,
            Variant::BottomToTop => Variant::TopToBottom,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Variant::TopToBottom => "ttb",
            Variant::BottomToTop => "btt",
        }
    }
}

/// The (corpus, attribute, layer) triple a ranking was computed for.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RankConfig {
    pub corpus: String,
    pub attribute: String,
    pub layer: String,
}

impl RankConfig {
    pub fn new(corpus: &str, attribute: &str, layer: &str) -> Self {
        Self {
            corpus: corpus.into(),
            attribute: attribute.into(),
            layer: layer.into(),
        }
    }
}

impl fmt::Display for RankConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.corpus, self.attribute, self.layer)
    }
}

/// A permutation of neuron indices, most important first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRanking")]
pub struct Ranking {
    pub method: Method,
    pub variant: Variant,
    pub seed: Option<u64>,
    pub config: RankConfig,
    order: Vec<usize>,
}

#[derive(Deserialize)]
struct RawRanking {
    method: Method,
    variant: Variant,
    seed: Option<u64>,
    config: RankConfig,
    order: Vec<usize>,
}

impl TryFrom<RawRanking> for Ranking {
    type Error = Error;

    fn try_from(raw: RawRanking) -> Result<Self> {
        let mut r = Ranking::new(raw.method, raw.order)?;
        r.variant = raw.variant;
        r.seed = raw.seed;
        r.config = raw.config;
        Ok(r)
    }
}

impl Ranking {
    /// Top-to-bottom ranking; `order` must be a permutation of `0..len`.
    pub fn new(method: Method, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Data(format!(
                    "order is not a permutation of 0..{} (offending entry {i})",
                    order.len()
                )));
            }
        }
        Ok(Self {
            method,
            variant: Variant::TopToBottom,
            seed: None,
            config: RankConfig::default(),
            order,
        })
    }

    pub fn with_config(mut self, config: RankConfig) -> Self {
        self.config = config;
        self
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k` highest-ranked neurons.
    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// Short label such as `probeless-ttb`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.method.name(), self.variant.short())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn reverse(ranking: &Ranking) -> Ranking {
    let mut r = ranking.clone();
    r.order.reverse();
    r.variant = r.variant.flipped();
    r
}

/// Indices sorted by score, highest first, lower index first on ties.
fn order_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Per-neuron sum over unordered class pairs of `|q(z) - q(z')|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbelessScores {
    pub r: Vec<f64>,
}

pub fn probeless_scores(dataset: &AttributeDataset) -> Result<ProbelessScores> {
    if dataset.num_classes() < 2 {
        return Err(Error::DegenerateTask(dataset.num_classes()));
    }
    let q = class_means(dataset)?;
    let mut r = vec![0.0; dataset.dims()];
    for a in 0..q.means.len() {
        for b in a + 1..q.means.len() {
            for (rj, (x, y)) in r.iter_mut().zip(q.means[a].iter().zip(&q.means[b])) {
                *rj += (x - y).abs();
            }
        }
    }
    Ok(ProbelessScores { r })
}

pub fn probeless_rank(dataset: &AttributeDataset) -> Result<Ranking> {
    let scores = probeless_scores(dataset)?;
    Ranking::new(Method::Probeless, order_by_scores(&scores.r))
}

/// Ranks by the mean absolute weight each neuron receives across classes.
pub fn linear_rank(probe: &LinearProbe) -> Result<Ranking> {
    let d = probe.dims;
    if probe.subset.len() != d {
        return Err(Error::SubsetMismatch {
            subset: probe.subset.len(),
            dims: d,
        });
    }
    let z = probe.weights.len() as f64;
    let mut scores = vec![0.0; d];
    for (pos, &j) in probe.subset.iter().enumerate() {
        scores[j] = probe.weights.iter().map(|w| w[pos].abs()).sum::<f64>() / z;
    }
    Ranking::new(Method::Linear, order_by_scores(&scores))
}

pub fn random_rank(d: usize, seed: u64) -> Result<Ranking> {
    if d == 0 {
        return Err(Error::Range("random ranking needs d >= 1".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut r = Ranking::new(Method::Random, order)?;
    r.seed = Some(seed);
    Ok(r)
}

/// Result of the greedy Gaussian search.
#[derive(Debug, Clone)]
pub struct GreedyRanking {
    pub ranking: Ranking,
    /// Dev accuracy after each greedy step.
    pub step_accuracies: Vec<f64>,
    /// Dev accuracy of each neuron on its own; `None` if it failed numerically.
    pub single_accuracies: Vec<Option<f64>>,
    pub diagnostics: Vec<String>,
}

/// Per-class incremental state for the dev rows.
struct ClassState {
    chol: GrowingCholesky,
    /// Whitened coordinates of each dev row, one entry per selected neuron.
    whitened: Vec<Vec<f64>>,
    quad: Vec<f64>,
}

struct Candidate {
    neuron: usize,
    correct: Option<usize>,
    failed_class: Option<usize>,
}

struct GreedySearch<'a> {
    probe: GaussianProbe,
    dev: &'a AttributeDataset,
    selected: Vec<usize>,
    states: Vec<ClassState>,
}

impl GreedySearch<'_> {
    fn centered(&self, class: usize, row: usize, neuron: usize) -> f64 {
        f64::from(self.dev.reprs().row(row)[neuron]) - self.probe.mean(class)[neuron]
    }

    fn extension(&self, class: usize, neuron: usize) -> Option<(Vec<f64>, f64)> {
        let cross: Vec<f64> = self
            .selected
            .iter()
            .map(|&s| self.probe.regularized(class, neuron, s))
            .collect();
        self.states[class]
            .chol
            .candidate_row(&cross, self.probe.regularized(class, neuron, neuron))
    }

    fn evaluate(&self, neuron: usize) -> Candidate {
        let z = self.probe.num_classes();
        let mut rows = Vec::with_capacity(z);
        for c in 0..z {
            match self.extension(c, neuron) {
                Some(r) => rows.push(r),
                None => {
                    return Candidate {
                        neuron,
                        correct: None,
                        failed_class: Some(c),
                    }
                }
            }
        }
        let dims = self.selected.len() + 1;
        let mut scores = vec![0.0; z];
        let mut correct = 0;
        for i in 0..self.dev.rows() {
            for (c, (row, diag)) in rows.iter().enumerate() {
                let st = &self.states[c];
                let y =
                    GrowingCholesky::whiten_next(row, self.centered(c, i, neuron), &st.whitened[i]);
                let quad = st.quad[i] + y * y;
                let log_det_half = st.chol.log_det_half() + diag.ln();
                scores[c] = self.probe.log_priors()[c] + log_density(quad, log_det_half, dims);
            }
            if argmax(&scores) == self.dev.labels()[i] {
                correct += 1;
            }
        }
        Candidate {
            neuron,
            correct: Some(correct),
            failed_class: None,
        }
    }

    fn accept(&mut self, neuron: usize) {
        for c in 0..self.probe.num_classes() {
            let (row, _) = self.extension(c, neuron).expect("winner factorizes");
            for i in 0..self.dev.rows() {
                let centered = self.centered(c, i, neuron);
                let st = &mut self.states[c];
                let y = GrowingCholesky::whiten_next(&row, centered, &st.whitened[i]);
                st.whitened[i].push(y);
                st.quad[i] += y * y;
            }
            self.states[c].chol.push_row(row);
        }
        self.selected.push(neuron);
    }
}

/// Greedy forward selection with a single Gaussian fit on `train`.
///
/// Each step adds the neuron whose inclusion gives the best dev accuracy
/// (lowest index on ties). After `k_max` steps the remaining neurons follow
/// in order of their single-neuron dev accuracy.
pub fn gaussian_greedy_rank(
    train: &AttributeDataset,
    dev: &AttributeDataset,
    k_max: usize,
) -> Result<GreedyRanking> {
    let probe = fit_gaussian(train)?;
    let d = train.dims();
    if dev.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if dev.label_set() != train.label_set() {
        return Err(Error::LabelMismatch);
    }
    if dev.dims() != d {
        return Err(Error::DimMismatch(d, dev.dims()));
    }
    if k_max == 0 || k_max > d {
        return Err(Error::Range(format!(
            "k_max = {k_max} must lie in [1, {d}]"
        )));
    }

    let z = probe.num_classes();
    let n_dev = dev.rows() as f64;
    let mut search = GreedySearch {
        probe,
        dev,
        selected: Vec::with_capacity(k_max),
        states: (0..z)
            .map(|_| ClassState {
                chol: GrowingCholesky::default(),
                whitened: vec![Vec::new(); dev.rows()],
                quad: vec![0.0; dev.rows()],
            })
            .collect(),
    };
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut single: Vec<Option<usize>> = vec![None; d];
    let mut step_accuracies = Vec::with_capacity(k_max);
    let mut diagnostics = Vec::new();

    for step in 0..k_max {
        let results: Vec<Candidate> = remaining.par_iter().map(|&j| search.evaluate(j)).collect();
        let mut best: Option<(usize, usize)> = None;
        for cand in &results {
            if let Some(c) = cand.failed_class {
                diagnostics.push(format!(
                    "step {}: neuron {} deferred, covariance of class `{}` not positive definite",
                    step + 1,
                    cand.neuron,
                    search.probe.label_set()[c]
                ));
            }
            if step == 0 {
                single[cand.neuron] = cand.correct;
            }
            if let Some(correct) = cand.correct {
                // candidates arrive in increasing index order
                if best.is_none_or(|(_, b)| correct > b) {
                    best = Some((cand.neuron, correct));
                }
            }
        }
        let Some((winner, correct)) = best else {
            diagnostics.push(format!(
                "step {}: no candidate factorizes, stopping greedy search",
                step + 1
            ));
            break;
        };
        search.accept(winner);
        step_accuracies.push(correct as f64 / n_dev);
        remaining.retain(|&j| j != winner);
    }

    remaining.sort_by(|&a, &b| single[b].cmp(&single[a]).then(a.cmp(&b)));
    let mut order = search.selected;
    order.extend(remaining);
    Ok(GreedyRanking {
        ranking: Ranking::new(Method::Gaussian, order)?,
        step_accuracies,
        single_accuracies: single
            .into_iter()
            .map(|c| c.map(|c| c as f64 / n_dev))
            .collect(),
        diagnostics,
    })
}
