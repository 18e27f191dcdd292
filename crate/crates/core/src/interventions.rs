//! Interventions on top-ranked neurons and their effect on a decoder.
//!
//! A representation row is modified either by zeroing its top-k neurons
//! (ablation) or by shifting them toward another value's class mean
//! (translation), then decoded to a vocabulary token. Changes are measured
//! against the decoder's prediction on the unmodified row.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeDataset, ClassMeans, Lexicon};
use crate::error::{Error, Result};
use crate::rankings::Ranking;
use crate::report::{csv_row, fmt_f64};

pub const DEFAULT_BETA: f64 = 8.0;
/// Growth factor below which a series counts as flat.
pub const SATURATION_RATIO: f64 = 1.05;

/// Maps a representation to a vocabulary token.
pub trait Decoder: Sync {
    fn dims(&self) -> usize;
    fn vocab(&self) -> &[String];
    /// Index into [`Decoder::vocab`].
    fn decode(&self, h: &[f64]) -> usize;

    fn decode_token(&self, h: &[f64]) -> &str {
        &self.vocab()[self.decode(h)]
    }
}

/// Linear scores `W h + b` with argmax decoding; the lowest token index wins
/// ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLinearDecoder {
    vocab: Vec<String>,
    dims: usize,
    /// `vocab.len() x dims`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ToyLinearDecoder {
    pub fn new(vocab: Vec<String>, dims: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Data("decoder vocabulary is empty".into()));
        }
        if weights.len() != vocab.len() * dims || bias.len() != vocab.len() {
            return Err(Error::Data(format!(
                "decoder with {} tokens and {dims} dims needs {} weights and {} biases",
                vocab.len(),
                vocab.len() * dims,
                vocab.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite decoder parameter".into()));
        }
        Ok(Self {
            vocab,
            dims,
            weights,
            bias,
        })
    }

    /// Decodes to the token whose prototype is nearest in Euclidean
    /// distance: `w = p`, `b = -|p|^2 / 2`.
    pub fn nearest_prototype(vocab: Vec<String>, prototypes: &[Vec<f64>]) -> Result<Self> {
        let dims = prototypes.first().map_or(0, Vec::len);
        if prototypes.len() != vocab.len() || prototypes.iter().any(|p| p.len() != dims) {
            return Err(Error::Data(
                "one prototype of equal length per token".into(),
            ));
        }
        let weights = prototypes.iter().flatten().copied().collect();
        let bias = prototypes
            .iter()
            .map(|p| -0.5 * p.iter().map(|v| v * v).sum::<f64>())
            .collect();
        Self::new(vocab, dims, weights, bias)
    }

    pub fn scores(&self, h: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dims.max(1))
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(h).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::new(raw.vocab, raw.dims, raw.weights, raw.bias)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl Decoder for ToyLinearDecoder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn decode(&self, h: &[f64]) -> usize {
        let scores = self.scores(h);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Lemma and attribute value of a token.
pub trait MorphAnalyzer: Sync {
    /// `None` when the token is unknown. The value is `None` when the token
    /// does not carry `attribute`.
    fn analyze(&self, token: &str, attribute: &str) -> Option<(String, Option<String>)>;
}

impl MorphAnalyzer for Lexicon {
    fn analyze(&self, token: &str, attribute: &str) -> Option<(String, Option<String>)> {
        self.get(token)
            .map(|e| (e.lemma.clone(), e.feats.get(attribute).cloned()))
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k > d {
        return Err(Error::Range(format!("k = {k} exceeds {d} neurons")));
    }
    Ok(())
}

fn check_dims(h: &[f64], ranking: &Ranking) -> Result<()> {
    if h.len() != ranking.len() {
        return Err(Error::DimMismatch(h.len(), ranking.len()));
    }
    Ok(())
}

/// Copy of `h` with its top-k neurons set to zero.
pub fn ablate(h: &[f64], ranking: &Ranking, k: usize) -> Result<Vec<f64>> {
    check_dims(h, ranking)?;
    check_k(k, h.len())?;
    let mut out = h.to_vec();
    for &n in ranking.top(k) {
        out[n] = 0.0;
    }
    Ok(out)
}

/// Coefficient per ranking position, decaying logarithmically from `beta`
/// at the top to 0 at the bottom.
pub fn translation_coefficients(d: usize, beta: f64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::Range(format!("translation needs d >= 2, got {d}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Range(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let log_d = (d as f64).ln();
    let mut alpha: Vec<f64> = (1..=d)
        .map(|p| beta * ((d - p + 1) as f64).ln() / log_d)
        .collect();
    alpha[0] = beta;
    alpha[d - 1] = 0.0;
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationParams {
    pub beta: f64,
    pub source: String,
    pub target: String,
    pub alpha: Vec<f64>,
}

impl TranslationParams {
    pub fn new(d: usize, beta: f64, source: &str, target: &str) -> Result<Self> {
        if source == target {
            return Err(Error::SameValue(source.into()));
        }
        Ok(Self {
            beta,
            source: source.into(),
            target: target.into(),
            alpha: translation_coefficients(d, beta)?,
        })
    }
}

/// Shifts the top-k neurons of `h` by `alpha[p] * (q_target - q_source)`
/// where `p` is the neuron's ranking position.
pub fn translate(
    h: &[f64],
    ranking: &Ranking,
    k: usize,
    params: &TranslationParams,
    q_source: &[f64],
    q_target: &[f64],
) -> Result<Vec<f64>> {
    check_dims(h, ranking)?;
    check_k(k, h.len())?;
    if params.source == params.target {
        return Err(Error::SameValue(params.source.clone()));
    }
    for len in [params.alpha.len(), q_source.len(), q_target.len()] {
        if len != h.len() {
            return Err(Error::DimMismatch(h.len(), len));
        }
    }
    let mut out = h.to_vec();
    for (p, &n) in ranking.top(k).iter().enumerate() {
        out[n] += params.alpha[p] * (q_target[n] - q_source[n]);
    }
    Ok(out)
}

fn analyze_or_err(
    analyzer: &dyn MorphAnalyzer,
    token: &str,
    attribute: &str,
) -> Result<(String, Option<String>)> {
    analyzer
        .analyze(token, attribute)
        .ok_or_else(|| Error::Lexicon(token.into()))
}

/// Fraction of predictions whose lemma is unchanged but whose value for
/// `attribute` differs.
pub fn clwv<S: AsRef<str>>(
    baseline: &[S],
    modified: &[S],
    analyzer: &dyn MorphAnalyzer,
    attribute: &str,
) -> Result<f64> {
    if baseline.len() != modified.len() {
        return Err(Error::LengthMismatch(baseline.len(), modified.len()));
    }
    if baseline.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (b, m) in baseline.iter().zip(modified) {
        let (b, m) = (b.as_ref(), m.as_ref());
        let (lb, vb) = analyze_or_err(analyzer, b, attribute)?;
        let (lm, vm) = analyze_or_err(analyzer, m, attribute)?;
        if b != m && lb == lm && vb != vm {
            hits += 1;
        }
    }
    Ok(hits as f64 / baseline.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub index: usize,
    pub value: f64,
    pub saturated: bool,
}

fn growth(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// First index followed by two consecutive steps that each grow by less
/// than [`SATURATION_RATIO`]. Falls back to the last index, flagged as not
/// saturated.
pub fn saturation_point(values: &[f64]) -> Result<Saturation> {
    if values.len() < 3 {
        return Err(Error::Range(format!(
            "saturation needs at least 3 points, got {}",
            values.len()
        )));
    }
    let found = (0..values.len() - 2).find(|&i| {
        growth(values[i + 1], values[i]) < SATURATION_RATIO
            && growth(values[i + 2], values[i + 1]) < SATURATION_RATIO
    });
    let index = found.unwrap_or(values.len() - 1);
    Ok(Saturation {
        index,
        value: values[index],
        saturated: found.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intervention<'a> {
    Ablation,
    /// Each row moves from its own value toward the next value in the label
    /// set, using class means from the training split.
    Translation {
        beta: f64,
        means: &'a ClassMeans,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationSummary {
    pub index: usize,
    /// Neurons modified at the saturation point.
    pub k: usize,
    pub clwv: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub method: String,
    pub ranking: String,
    pub attribute: String,
    pub beta: Option<f64>,
    pub rows: usize,
    pub ks: Vec<usize>,
    /// Against the unmodified prediction.
    pub error_rate: Vec<f64>,
    pub clwv: Vec<f64>,
    /// Against the corpus word instead of the unmodified prediction.
    pub gold_error_rate: Vec<f64>,
    /// Of the CLWV series; absent for fewer than three ks.
    pub saturation: Option<SaturationSummary>,
}

impl InterventionReport {
    pub fn to_csv(&self) -> String {
        let mut out = csv_row(&["k", "error_rate", "clwv", "gold_error_rate"]);
        for i in 0..self.ks.len() {
            out.push_str(&csv_row(&[
                self.ks[i].to_string(),
                fmt_f64(self.error_rate[i]),
                fmt_f64(self.clwv[i]),
                fmt_f64(self.gold_error_rate[i]),
            ]));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Decodes every row of `dataset` before and after the intervention at each
/// k and reports how often the prediction changed.
pub fn run_intervention(
    decoder: &dyn Decoder,
    analyzer: &dyn MorphAnalyzer,
    dataset: &AttributeDataset,
    ranking: &Ranking,
    intervention: Intervention<'_>,
    ks: &[usize],
) -> Result<InterventionReport> {
    let d = dataset.dims();
    if decoder.dims() != d {
        return Err(Error::DimMismatch(decoder.dims(), d));
    }
    if ranking.len() != d {
        return Err(Error::DimMismatch(ranking.len(), d));
    }
    if dataset.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    for &k in ks {
        check_k(k, d)?;
    }
    let attribute = dataset.attribute();
    for token in decoder.vocab() {
        analyze_or_err(analyzer, token, attribute)?;
    }

    let rows: Vec<Vec<f64>> = (0..dataset.rows())
        .map(|i| {
            dataset
                .reprs()
                .row(i)
                .iter()
                .map(|&v| f64::from(v))
                .collect()
        })
        .collect();
    let baseline: Vec<usize> = rows.par_iter().map(|h| decoder.decode(h)).collect();

    // per label index: (params, q_source, q_target)
    let translations = match intervention {
        Intervention::Ablation => None,
        Intervention::Translation { beta, means } => {
            let labels = dataset.label_set();
            let lookup = |name: &str| {
                means
                    .get(name)
                    .filter(|m| m.len() == d)
                    .ok_or_else(|| Error::Data(format!("no class mean of length {d} for `{name}`")))
            };
            let mut per_label = Vec::with_capacity(labels.len());
            for (z, source) in labels.iter().enumerate() {
                let target = &labels[(z + 1) % labels.len()];
                per_label.push((
                    TranslationParams::new(d, beta, source, target)?,
                    lookup(source)?,
                    lookup(target)?,
                ));
            }
            Some(per_label)
        }
    };

    let vocab = decoder.vocab();
    let baseline_tokens: Vec<&str> = baseline.iter().map(|&t| vocab[t].as_str()).collect();
    let gold = dataset.word_types();
    let n = rows.len() as f64;
    let mut report = InterventionReport {
        method: match intervention {
            Intervention::Ablation => "ablation".into(),
            Intervention::Translation { .. } => "translation".into(),
        },
        ranking: ranking.label(),
        attribute: attribute.into(),
        beta: match intervention {
            Intervention::Ablation => None,
            Intervention::Translation { beta, .. } => Some(beta),
        },
        rows: rows.len(),
        ks: ks.to_vec(),
        error_rate: Vec::with_capacity(ks.len()),
        clwv: Vec::with_capacity(ks.len()),
        gold_error_rate: Vec::with_capacity(ks.len()),
        saturation: None,
    };
    for &k in ks {
        let modified: Vec<usize> = rows
            .par_iter()
            .enumerate()
            .map(|(i, h)| {
                let h2 = match &translations {
                    None => ablate(h, ranking, k)?,
                    Some(per_label) => {
                        let (params, qs, qt) = &per_label[dataset.labels()[i]];
                        translate(h, ranking, k, params, qs, qt)?
                    }
                };
                Ok(decoder.decode(&h2))
            })
            .collect::<Result<_>>()?;
        let modified_tokens: Vec<&str> = modified.iter().map(|&t| vocab[t].as_str()).collect();
        let changed = baseline
            .iter()
            .zip(&modified)
            .filter(|(a, b)| a != b)
            .count();
        let gold_wrong = gold
            .iter()
            .zip(&modified_tokens)
            .filter(|(w, t)| w.as_str() != **t)
            .count();
        report.error_rate.push(changed as f64 / n);
        report.gold_error_rate.push(gold_wrong as f64 / n);
        report.clwv.push(clwv(
            &baseline_tokens,
            &modified_tokens,
            analyzer,
            attribute,
        )?);
    }
    if ks.len() >= 3 {
        let s = saturation_point(&report.clwv)?;
        report.saturation = Some(SaturationSummary {
            index: s.index,
            k: ks[s.index],
            clwv: s.value,
            saturated: s.saturated,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_feats, LexEntry, ReprSet};
    use crate::rankings::{reverse, Method};
    use proptest::prelude::*;

    fn ranking(order: Vec<usize>) -> Ranking {
        Ranking::new(Method::Probeless, order).unwrap()
    }

    fn lexicon(entries: &[(&str, &str, &str)]) -> Lexicon {
        let mut lex = Lexicon::new();
        for (s, l, f) in entries {
            lex.insert(
                *s,
                LexEntry {
                    lemma: l.to_string(),
                    feats: parse_feats(f).unwrap(),
                },
            )
            .unwrap();
        }
        lex
    }

    #[test]
    fn ablation_examples() {
        let r = ranking(vec![2, 0, 1]);
        let h = [5.0, 6.0, 7.0];
        assert_eq!(ablate(&h, &r, 0).unwrap(), h.to_vec());
        assert_eq!(ablate(&h, &r, 3).unwrap(), vec![0.0; 3]);
        assert_eq!(ablate(&h, &r, 2).unwrap(), vec![0.0, 6.0, 0.0]);
        assert!(matches!(ablate(&h, &r, 4), Err(Error::Range(_))));
    }

    #[test]
    fn coefficients() {
        let a = translation_coefficients(4, 8.0).unwrap();
        assert_eq!(a[0], 8.0);
        assert!((a[1] - 8.0 * 3f64.ln() / 4f64.ln()).abs() < 1e-12);
        assert!((a[1] - 6.3399).abs() < 1e-4);
        assert!((a[2] - 4.0).abs() < 1e-12);
        assert_eq!(a[3], 0.0);
        assert_eq!(translation_coefficients(10, 0.0).unwrap(), vec![0.0; 10]);
        assert!(matches!(
            translation_coefficients(1, 8.0),
            Err(Error::Range(_))
        ));
        for d in 2..50 {
            let a = translation_coefficients(d, 3.0).unwrap();
            assert!(a.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!((a[0], a[d - 1]), (3.0, 0.0));
        }
    }

    #[test]
    fn translation_examples() {
        let r = ranking(vec![0, 1]);
        let p = TranslationParams::new(2, 8.0, "Sg", "Pl").unwrap();
        assert_eq!(p.alpha, vec![8.0, 0.0]);
        let h = [1.0, 1.0];
        assert_eq!(
            translate(&h, &r, 2, &p, &[0.0, 0.0], &[1.0, 0.0]).unwrap(),
            vec![9.0, 1.0]
        );
        assert_eq!(
            translate(&h, &r, 0, &p, &[0.0, 0.0], &[1.0, 0.0]).unwrap(),
            h.to_vec()
        );
        assert_eq!(
            translate(&h, &r, 2, &p, &[0.4, 2.0], &[0.4, 2.0]).unwrap(),
            h.to_vec()
        );
        assert!(matches!(
            TranslationParams::new(2, 8.0, "Sg", "Sg"),
            Err(Error::SameValue(_))
        ));
    }

    #[test]
    fn clwv_examples() {
        let lex = lexicon(&[
            ("sleeps", "sleep", "Tense=Prs"),
            ("slept", "sleep", "Tense=Pst"),
            ("cats", "cat", "Number=Pl"),
            ("cat", "cat", "Number=Sg"),
            ("dog", "dog", "Number=Sg"),
        ]);
        assert_eq!(clwv(&["sleeps"], &["slept"], &lex, "Tense").unwrap(), 1.0);
        assert_eq!(
            clwv(&["cats", "dog"], &["cats", "dog"], &lex, "Number").unwrap(),
            0.0
        );
        assert_eq!(
            clwv(&["cats", "dog"], &["cat", "dog"], &lex, "Number").unwrap(),
            0.5
        );
        assert_eq!(clwv(&["cats"], &["dog"], &lex, "Number").unwrap(), 0.0);
        assert!(
            matches!(clwv(&["cats"], &["kittens"], &lex, "Number"), Err(Error::Lexicon(t)) if t == "kittens")
        );
    }

    #[test]
    fn saturation_examples() {
        let s = saturation_point(&[0.10, 0.20, 0.30, 0.31, 0.315, 0.312]).unwrap();
        assert_eq!((s.index, s.value, s.saturated), (2, 0.30, true));
        let doubling: Vec<f64> = (0..6).map(|i| 2f64.powi(i)).collect();
        let s = saturation_point(&doubling).unwrap();
        assert_eq!((s.index, s.saturated), (5, false));
        assert_eq!(saturation_point(&[0.0; 4]).unwrap().index, 0);
        assert!(matches!(
            saturation_point(&[0.1, 0.2]),
            Err(Error::Range(_))
        ));
        // zero followed by a positive value grows without bound
        assert_eq!(saturation_point(&[0.0, 0.1, 0.1, 0.1]).unwrap().index, 1);
    }

    #[test]
    fn decoder_ties_and_json() {
        let dec = ToyLinearDecoder::new(
            vec!["a".into(), "b".into()],
            2,
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(dec.decode(&[3.0, 1.0]), 0);
        let back = ToyLinearDecoder::from_json(&dec.to_json().unwrap()).unwrap();
        assert_eq!(back, dec);
        assert!(ToyLinearDecoder::new(vec!["a".into()], 2, vec![1.0], vec![0.0]).is_err());
    }

    /// Two planted neurons (0, 1) carry Number; neurons 2 and 3 are noise the
    /// decoder never reads.
    fn toy_setup() -> (ToyLinearDecoder, Lexicon, AttributeDataset, ClassMeans) {
        let vocab: Vec<String> = ["cat", "cats", "<unk>"].map(String::from).to_vec();
        let decoder = ToyLinearDecoder::nearest_prototype(
            vocab,
            &[
                vec![-1.0, -1.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let lex = lexicon(&[
            ("cat", "cat", "Number=Sg"),
            ("cats", "cat", "Number=Pl"),
            ("<unk>", "<unk>", "_"),
        ]);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut words = Vec::new();
        for i in 0..20 {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            let jitter = (i as f32) * 0.01;
            values.extend([sign + jitter, sign - jitter, 3.0 - jitter, -2.0 + jitter]);
            labels.push(i % 2);
            words.push(if i % 2 == 0 { "cat" } else { "cats" }.to_string());
        }
        let ds = AttributeDataset::with_label_set(
            ReprSet::from_matrix(20, 4, values).unwrap(),
            "Number",
            // label set is sorted: Pl = 0, Sg = 1
            labels.iter().map(|&l| 1 - l).collect(),
            vec!["Pl".into(), "Sg".into()],
            words,
        )
        .unwrap();
        let means = crate::data::class_means(&ds).unwrap();
        (decoder, lex, ds, means)
    }

    #[test]
    fn translation_flips_planted_values() {
        let (dec, lex, ds, means) = toy_setup();
        let ttb = ranking(vec![0, 1, 2, 3]);
        let t = Intervention::Translation {
            beta: DEFAULT_BETA,
            means: &means,
        };
        let r = run_intervention(&dec, &lex, &ds, &ttb, t, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(r.error_rate[0], 0.0);
        assert_eq!(r.clwv[0], 0.0);
        assert_eq!(r.error_rate[2], 1.0);
        assert_eq!(r.clwv[2], 1.0);
        assert_eq!(r.gold_error_rate[2], 1.0);
        let btt = reverse(&ttb);
        let r = run_intervention(&dec, &lex, &ds, &btt, t, &[0, 1, 2]).unwrap();
        assert_eq!(r.error_rate, vec![0.0; 3]);
        assert!(r.saturation.is_some());
        assert!(r
            .to_csv()
            .starts_with("k,error_rate,clwv,gold_error_rate\n0,0,0,0\n"));
    }

    #[test]
    fn ablation_errors_without_clwv() {
        let (dec, lex, ds, _) = toy_setup();
        let ttb = ranking(vec![0, 1, 2, 3]);
        let r = run_intervention(&dec, &lex, &ds, &ttb, Intervention::Ablation, &[2]).unwrap();
        assert_eq!(r.error_rate, vec![1.0]);
        assert_eq!(r.clwv, vec![0.0]);
        // the decoder ignores neurons 2 and 3
        let rest = ranking(vec![2, 3, 0, 1]);
        let r = run_intervention(&dec, &lex, &ds, &rest, Intervention::Ablation, &[2]).unwrap();
        assert_eq!(r.error_rate, vec![0.0]);
    }

    #[test]
    fn vocabulary_must_be_in_lexicon() {
        let (dec, _, ds, _) = toy_setup();
        let lex = lexicon(&[("cat", "cat", "Number=Sg"), ("cats", "cat", "Number=Pl")]);
        let r = run_intervention(
            &dec,
            &lex,
            &ds,
            &ranking(vec![0, 1, 2, 3]),
            Intervention::Ablation,
            &[1],
        );
        assert!(matches!(r, Err(Error::Lexicon(t)) if t == "<unk>"));
    }

    fn perm_and_vec(max_d: usize) -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
        (2..=max_d).prop_flat_map(|d| {
            (
                Just((0..d).collect::<Vec<_>>()).prop_shuffle(),
                proptest::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn interventions_are_local((order, h) in perm_and_vec(12), kf in 0.0f64..=1.0, beta in 0.0f64..12.0, seed in any::<u64>()) {
            let d = h.len();
            let k = (kf * d as f64) as usize;
            let r = ranking(order.clone());
            let qs: Vec<f64> = (0..d).map(|i| ((seed >> (i % 60)) & 7) as f64).collect();
            let qt: Vec<f64> = (0..d).map(|i| ((seed >> ((i + 3) % 60)) & 5) as f64).collect();
            let p = TranslationParams::new(d, beta, "a", "b").unwrap();
            let a = ablate(&h, &r, k).unwrap();
            let t = translate(&h, &r, k, &p, &qs, &qt).unwrap();
            for &n in &order[k..] {
                prop_assert_eq!(a[n].to_bits(), h[n].to_bits());
                prop_assert_eq!(t[n].to_bits(), h[n].to_bits());
            }
            for &n in &order[..k] {
                prop_assert_eq!(a[n], 0.0);
            }
        }

        #[test]
        fn translation_linear_in_beta((order, h) in perm_and_vec(12), b1 in 0.0f64..6.0, b2 in 0.0f64..6.0, k in 0usize..12) {
            let d = h.len();
            let k = k.min(d);
            let r = ranking(order);
            let qs: Vec<f64> = (0..d).map(|i| i as f64 * 0.3).collect();
            let qt: Vec<f64> = (0..d).map(|i| 1.0 - i as f64 * 0.1).collect();
            let at = |b: f64| translate(&h, &r, k, &TranslationParams::new(d, b, "a", "b").unwrap(), &qs, &qt).unwrap();
            let (s1, s2, s12) = (at(b1), at(b2), at(b1 + b2));
            for i in 0..d {
                let lhs = s12[i] - h[i];
                let rhs = (s1[i] - h[i]) + (s2[i] - h[i]);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }
        }

        #[test]
        fn clwv_never_exceeds_error(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..40)) {
            let lex = lexicon(&[
                ("a", "x", "N=1"), ("b", "x", "N=2"), ("c", "x", "N=1"),
                ("d", "y", "N=1"), ("e", "y", "_"),
            ]);
            let names = ["a", "b", "c", "d", "e"];
            let base: Vec<&str> = pairs.iter().map(|p| names[p.0]).collect();
            let modi: Vec<&str> = pairs.iter().map(|p| names[p.1]).collect();
            let c = clwv(&base, &modi, &lex, "N").unwrap();
            let err = pairs.iter().filter(|p| p.0 != p.1).count() as f64 / pairs.len() as f64;
            prop_assert!((0.0..=err).contains(&c));
        }
    }
}
