//! Evaluation of rankings by probing: accuracy curves over top-k subsets,
//! control tasks and selectivity, paired significance tests across configs,
//! and clustering of per-config accuracy patterns.

mod cluster;
mod control;
mod curves;
mod wilcoxon;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use cluster::{kmeans, pca_2d, KMeans, DEFAULT_RESTARTS};
pub use control::{make_control, ControlTask};
pub use curves::{
    curves_to_csv, default_k_grid, default_significance_ks, selectivity, topk_curve, AccuracyCurve,
    FailedK, ProbeKind,
};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, WilcoxonMethod, WilcoxonResult,
    EXACT_MAX_N,
};

use crate::error::{Error, Result};
use crate::rankings::{Method, RankConfig, Variant};
use crate::report::{csv_row, fmt_f64};

type CurveKey = (ProbeKind, Method, Variant);

fn key(c: &AccuracyCurve) -> CurveKey {
    (c.probe, c.method, c.variant)
}

fn combination_name((probe, method, variant): CurveKey) -> String {
    format!("{}/{}-{}", probe.name(), method.name(), variant.short())
}

/// Accuracy patterns, one row per config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMatrix {
    pub configs: Vec<RankConfig>,
    /// Combinations in the order their curves are concatenated.
    pub combinations: Vec<String>,
    pub ks: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

/// Concatenates every config's curves (bottom-to-top rankings excluded) into
/// one row per config. All configs must have the same combinations over the
/// same k grid.
pub fn pattern_matrix(curves: &[AccuracyCurve]) -> Result<PatternMatrix> {
    let mut by_config: BTreeMap<&RankConfig, BTreeMap<CurveKey, &AccuracyCurve>> = BTreeMap::new();
    for c in curves.iter().filter(|c| c.variant != Variant::BottomToTop) {
        if by_config
            .entry(&c.config)
            .or_default()
            .insert(key(c), c)
            .is_some()
        {
            return Err(Error::Cluster(format!(
                "two curves for {} on {}",
                c.combination(),
                c.config
            )));
        }
    }
    let mut iter = by_config.iter();
    let Some((_, first)) = iter.next() else {
        return Err(Error::Cluster("no curves to cluster".into()));
    };
    let ks = first
        .values()
        .next()
        .map(|c| c.ks.clone())
        .unwrap_or_default();
    let layout: Vec<CurveKey> = first.keys().copied().collect();
    for (config, combos) in &by_config {
        if combos.keys().copied().collect::<Vec<_>>() != layout {
            return Err(Error::Cluster(format!(
                "{config} has a different set of curves"
            )));
        }
        if combos.values().any(|c| c.ks != ks) {
            return Err(Error::Cluster(format!(
                "{config} has a curve on a different k grid"
            )));
        }
    }
    Ok(PatternMatrix {
        configs: by_config.keys().map(|c| (*c).clone()).collect(),
        combinations: layout.iter().map(|&k| combination_name(k)).collect(),
        ks,
        rows: by_config
            .values()
            .map(|combos| {
                combos
                    .values()
                    .flat_map(|c| c.accuracies.iter().copied())
                    .collect()
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternClusters {
    pub configs: Vec<RankConfig>,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub projection: Vec<[f64; 2]>,
}

impl PatternClusters {
    pub fn to_csv(&self) -> String {
        let mut out = csv_row(&["corpus", "attribute", "layer", "cluster", "pc1", "pc2"]);
        for ((c, a), p) in self
            .configs
            .iter()
            .zip(&self.assignments)
            .zip(&self.projection)
        {
            out.push_str(&csv_row(&[
                c.corpus.as_str(),
                &c.attribute,
                &c.layer,
                &a.to_string(),
                &fmt_f64(p[0]),
                &fmt_f64(p[1]),
            ]));
        }
        out
    }
}

/// K-means over the pattern rows plus their 2-D PCA projection.
pub fn cluster_patterns(patterns: &PatternMatrix, k: usize, seed: u64) -> Result<PatternClusters> {
    let km = kmeans(&patterns.rows, k, seed, DEFAULT_RESTARTS)?;
    Ok(PatternClusters {
        configs: patterns.configs.clone(),
        assignments: km.assignments,
        centroids: km.centroids,
        inertia: km.inertia,
        projection: pca_2d(&patterns.rows),
    })
}

pub const SIGNIFICANCE_KS: [usize; 3] = [10, 50, 150];

/// One-sided p-values that the row combination beats the column combination,
/// pairing accuracies by config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub combinations: Vec<String>,
    pub ks: Vec<usize>,
    /// `p_values[row][col][k]`; `None` on the diagonal and where no config
    /// has both curves at that k.
    pub p_values: Vec<Vec<Vec<Option<f64>>>>,
}

pub fn significance_matrix(curves: &[AccuracyCurve], ks: &[usize]) -> Result<SignificanceMatrix> {
    let mut samples: BTreeMap<CurveKey, BTreeMap<&RankConfig, &AccuracyCurve>> = BTreeMap::new();
    for c in curves {
        if samples
            .entry(key(c))
            .or_default()
            .insert(&c.config, c)
            .is_some()
        {
            return Err(Error::Data(format!(
                "two curves for {} on {}",
                c.combination(),
                c.config
            )));
        }
    }
    let keys: Vec<CurveKey> = samples.keys().copied().collect();
    let mut p_values = vec![vec![vec![None; ks.len()]; keys.len()]; keys.len()];
    for (i, a) in keys.iter().enumerate() {
        for (j, b) in keys.iter().enumerate() {
            if i == j {
                continue;
            }
            for (ki, &k) in ks.iter().enumerate() {
                let (mut x, mut y) = (Vec::new(), Vec::new());
                for (config, ca) in &samples[a] {
                    let pair = samples[b].get(config).and_then(|cb| cb.accuracy_at(k));
                    if let (Some(va), Some(vb)) = (ca.accuracy_at(k), pair) {
                        x.push(va);
                        y.push(vb);
                    }
                }
                if x.is_empty() {
                    continue;
                }
                p_values[i][j][ki] =
                    Some(match wilcoxon_signed_rank(&x, &y, Alternative::Greater) {
                        Ok(r) => r.p_value,
                        Err(Error::NoEffect) => 1.0,
                        Err(e) => return Err(e),
                    });
            }
        }
    }
    Ok(SignificanceMatrix {
        combinations: keys.into_iter().map(combination_name).collect(),
        ks: ks.to_vec(),
        p_values,
    })
}

impl SignificanceMatrix {
    /// `row,k,<combination...>`, one line per (row combination, k).
    pub fn to_csv(&self) -> String {
        let mut header = vec!["row".to_string(), "k".to_string()];
        header.extend(self.combinations.iter().cloned());
        let mut out = csv_row(&header);
        for (i, row) in self.combinations.iter().enumerate() {
            for (ki, k) in self.ks.iter().enumerate() {
                let mut fields = vec![row.clone(), k.to_string()];
                fields.extend(
                    self.p_values[i]
                        .iter()
                        .map(|cell| cell[ki].map(fmt_f64).unwrap_or_default()),
                );
                out.push_str(&csv_row(&fields));
            }
        }
        out
    }
}
