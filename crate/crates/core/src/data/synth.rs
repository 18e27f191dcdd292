//! Synthetic corpora with planted attribute neurons.
//!
//! Every token's representation is its lemma's base vector, plus the
//! magnitude of each of its attribute values written into that attribute's
//! planted neurons, plus isotropic Gaussian noise. Base vectors are zero on
//! planted neurons, so planted columns carry attribute signal and noise only.
//!
//! Specs are read from a line-oriented text format:
//!
//! ```text
//! d = 64
//! tokens = 2000
//! noise_sigma = 0.1
//! base_sigma = 1.0
//! seed = 7
//! sentence_len = 10
//! plant Number 0-7 Sg=-1 Pl=1
//! paradigm 20
//! word walked walk Tense=Past
//! ```
//!
//! `paradigm N` adds N lemmas, each inflected for every combination of the
//! planted attribute values.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tsv::{parse_feats, AnnotationRow, AnnotationTable, Feats, LexEntry, Lexicon};
use super::{ReprSet, TokenKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub surface: String,
    pub lemma: String,
    pub feats: Feats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttribute {
    pub neurons: Vec<usize>,
    pub magnitudes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub d: usize,
    pub vocab: Vec<VocabEntry>,
    pub planted: BTreeMap<String, PlantedAttribute>,
    pub noise_sigma: f64,
    pub base_sigma: f64,
    pub tokens: usize,
    pub seed: u64,
    pub sentence_len: usize,
}

/// Ground truth written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub d: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub attributes: BTreeMap<String, PlantedAttribute>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub reprs: ReprSet,
    pub annotations: AnnotationTable,
    pub lexicon: Lexicon,
    pub truth: PlantedTruth,
    /// Noiseless vector of every vocabulary entry, in vocabulary order.
    pub prototypes: Vec<(String, Vec<f64>)>,
}

impl SynthSpec {
    pub fn new(d: usize, tokens: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            d,
            vocab: Vec::new(),
            planted: BTreeMap::new(),
            noise_sigma,
            base_sigma: 1.0,
            tokens,
            seed,
            sentence_len: 10,
        }
    }

    pub fn plant(
        mut self,
        attribute: &str,
        neurons: impl IntoIterator<Item = usize>,
        magnitudes: &[(&str, f64)],
    ) -> Self {
        self.planted.insert(
            attribute.to_string(),
            PlantedAttribute {
                neurons: neurons.into_iter().collect(),
                magnitudes: magnitudes
                    .iter()
                    .map(|&(v, m)| (v.to_string(), m))
                    .collect(),
            },
        );
        self
    }

    pub fn word(mut self, surface: &str, lemma: &str, feats: &[(&str, &str)]) -> Self {
        self.vocab.push(VocabEntry {
            surface: surface.into(),
            lemma: lemma.into(),
            feats: feats.iter().map(|&(a, v)| (a.into(), v.into())).collect(),
        });
        self
    }

    /// Adds `lemmas` lemmas inflected for every combination of planted values.
    pub fn paradigm(mut self, lemmas: usize) -> Self {
        self.vocab
            .extend(paradigm_entries(&self.planted, lemmas, self.vocab.len()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::spec(None, "d must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::spec(
                None,
                "noise_sigma must be a finite non-negative number",
            ));
        }
        if !(self.base_sigma >= 0.0 && self.base_sigma.is_finite()) {
            return Err(Error::spec(
                None,
                "base_sigma must be a finite non-negative number",
            ));
        }
        if self.sentence_len == 0 {
            return Err(Error::spec(None, "sentence_len must be positive"));
        }
        let mut owner: HashMap<usize, &str> = HashMap::new();
        for (attr, p) in &self.planted {
            for &n in &p.neurons {
                if n >= self.d {
                    return Err(Error::spec(
                        None,
                        format!("planted neuron {n} of `{attr}` is outside d = {}", self.d),
                    ));
                }
                if let Some(prev) = owner.insert(n, attr) {
                    return Err(Error::spec(
                        None,
                        format!("neuron {n} planted for both `{prev}` and `{attr}`"),
                    ));
                }
            }
            let mags: Vec<f64> = p.magnitudes.values().copied().collect();
            for (i, a) in mags.iter().enumerate() {
                if !a.is_finite() {
                    return Err(Error::spec(
                        None,
                        format!("non-finite magnitude for `{attr}`"),
                    ));
                }
                if mags[i + 1..].contains(a) {
                    return Err(Error::spec(
                        None,
                        format!("values of `{attr}` share the magnitude {a}"),
                    ));
                }
            }
        }
        if self.tokens > 0 && self.vocab.is_empty() {
            return Err(Error::spec(None, "vocabulary is empty"));
        }
        let mut surfaces = HashSet::new();
        for w in &self.vocab {
            if w.lemma.is_empty() {
                return Err(Error::spec(
                    None,
                    format!("empty lemma for `{}`", w.surface),
                ));
            }
            if !surfaces.insert(&w.surface) {
                return Err(Error::spec(
                    None,
                    format!("surface `{}` listed twice", w.surface),
                ));
            }
            for (attr, value) in &w.feats {
                if let Some(p) = self.planted.get(attr) {
                    if !p.magnitudes.contains_key(value) {
                        return Err(Error::spec(
                            None,
                            format!("`{}` has {attr}={value}, which has no magnitude", w.surface),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses the line format described in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::new(0, 0, 0.0, 0);
        // paradigm directives expand once all plants are known
        let mut paradigms: Vec<(usize, usize)> = Vec::new();
        let mut planted_owner: HashMap<usize, (String, usize)> = HashMap::new();
        let mut seen_d = false;

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::spec(Some(lineno), m);
            if let Some((key, value)) = line
                .split_once('=')
                .filter(|(k, _)| !k.trim().contains(char::is_whitespace))
            {
                let key = key.trim();
                let value = value.trim();
                let bad = |what: &str| err(format!("`{key}` expects {what}, got `{value}`"));
                match key {
                    "d" => {
                        spec.d = value.parse().map_err(|_| bad("an integer"))?;
                        seen_d = true;
                    }
                    "tokens" => spec.tokens = value.parse().map_err(|_| bad("an integer"))?,
                    "noise_sigma" => {
                        spec.noise_sigma = value.parse().map_err(|_| bad("a number"))?
                    }
                    "base_sigma" => spec.base_sigma = value.parse().map_err(|_| bad("a number"))?,
                    "seed" => spec.seed = value.parse().map_err(|_| bad("an integer"))?,
                    "sentence_len" => {
                        spec.sentence_len = value.parse().map_err(|_| bad("an integer"))?
                    }
                    _ => return Err(err(format!("unknown key `{key}`"))),
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("plant") => {
                    let attr = parts
                        .next()
                        .ok_or_else(|| err("plant needs an attribute".into()))?;
                    let neurons = parse_neurons(
                        parts
                            .next()
                            .ok_or_else(|| err("plant needs neurons".into()))?,
                    )
                    .map_err(err)?;
                    let mut magnitudes = BTreeMap::new();
                    for p in parts {
                        let (v, m) = p
                            .split_once('=')
                            .ok_or_else(|| err(format!("`{p}` is not Value=magnitude")))?;
                        let m: f64 = m.parse().map_err(|_| err(format!("bad magnitude `{m}`")))?;
                        if magnitudes.values().any(|&x: &f64| x == m) {
                            return Err(err(format!("values of `{attr}` share the magnitude {m}")));
                        }
                        magnitudes.insert(v.to_string(), m);
                    }
                    if magnitudes.len() < 2 {
                        return Err(err(format!("`{attr}` needs at least two values")));
                    }
                    for &n in &neurons {
                        if let Some((prev, at)) =
                            planted_owner.insert(n, (attr.to_string(), lineno))
                        {
                            return Err(err(format!(
                                "neuron {n} already planted for `{prev}` on line {at}"
                            )));
                        }
                    }
                    if spec.planted.contains_key(attr) {
                        return Err(err(format!("`{attr}` planted twice")));
                    }
                    spec.planted.insert(
                        attr.to_string(),
                        PlantedAttribute {
                            neurons,
                            magnitudes,
                        },
                    );
                }
                Some("word") => {
                    let f: Vec<&str> = parts.collect();
                    if f.len() != 3 {
                        return Err(err("word expects `word <surface> <lemma> <feats>`".into()));
                    }
                    spec.vocab.push(VocabEntry {
                        surface: f[0].into(),
                        lemma: f[1].into(),
                        feats: parse_feats(f[2]).map_err(|e| err(e.to_string()))?,
                    });
                }
                Some("paradigm") => {
                    let n = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err("paradigm expects a lemma count".into()))?;
                    paradigms.push((n, lineno));
                }
                Some(other) => return Err(err(format!("unknown directive `{other}`"))),
                None => {}
            }
        }
        if !seen_d {
            return Err(Error::spec(None, "missing `d`"));
        }
        for (_, lineno) in &paradigms {
            if spec.planted.is_empty() {
                return Err(Error::spec(
                    Some(*lineno),
                    "paradigm needs at least one plant",
                ));
            }
        }
        let total: usize = paradigms.iter().map(|p| p.0).sum();
        if total > 0 {
            let start = spec.vocab.len();
            spec.vocab
                .extend(paradigm_entries(&spec.planted, total, start));
        }
        // re-run the checks that need the whole spec, with line numbers where known
        for (n, (attr, at)) in &planted_owner {
            if *n >= spec.d {
                return Err(Error::spec(
                    Some(*at),
                    format!("planted neuron {n} of `{attr}` is outside d = {}", spec.d),
                ));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_neurons(field: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in field.split(',') {
        let bad = || format!("bad neuron list `{field}`");
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.parse().map_err(|_| bad())?;
            let b: usize = b.parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    let distinct: BTreeSet<_> = out.iter().collect();
    if distinct.len() != out.len() {
        return Err(format!("neuron list `{field}` repeats an index"));
    }
    Ok(out)
}

fn paradigm_entries(
    planted: &BTreeMap<String, PlantedAttribute>,
    lemmas: usize,
    offset: usize,
) -> Vec<VocabEntry> {
    let mut combos: Vec<Feats> = vec![Feats::new()];
    for (attr, p) in planted {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                p.magnitudes.keys().map(move |v| {
                    let mut c = c.clone();
                    c.insert(attr.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for l in 0..lemmas {
        let lemma = format!("lem{}", offset + l);
        for feats in &combos {
            let suffix: Vec<&str> = feats.values().map(String::as_str).collect();
            out.push(VocabEntry {
                surface: format!("{lemma}-{}", suffix.join("-")),
                lemma: lemma.clone(),
                feats: feats.clone(),
            });
        }
    }
    out
}

/// Deterministically draws a corpus from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let planted_mask: Vec<bool> = {
        let mut m = vec![false; d];
        for p in spec.planted.values() {
            for &n in &p.neurons {
                m[n] = true;
            }
        }
        m
    };

    let mut lemma_index: HashMap<&str, usize> = HashMap::new();
    for w in &spec.vocab {
        let next = lemma_index.len();
        lemma_index.entry(w.lemma.as_str()).or_insert(next);
    }
    let bases: Vec<Vec<f64>> = (0..lemma_index.len())
        .map(|_| {
            (0..d)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    if planted_mask[j] {
                        0.0
                    } else {
                        spec.base_sigma * z
                    }
                })
                .collect()
        })
        .collect();

    let prototypes: Vec<(String, Vec<f64>)> = spec
        .vocab
        .iter()
        .map(|w| {
            let mut v = bases[lemma_index[w.lemma.as_str()]].clone();
            for (attr, value) in &w.feats {
                if let Some(p) = spec.planted.get(attr) {
                    let m = p.magnitudes[value];
                    for &n in &p.neurons {
                        v[n] += m;
                    }
                }
            }
            (w.surface.clone(), v)
        })
        .collect();

    let mut values = Vec::with_capacity(spec.tokens * d);
    let mut keys = Vec::with_capacity(spec.tokens);
    let mut surfaces = Vec::with_capacity(spec.tokens);
    let mut rows = Vec::with_capacity(spec.tokens);
    let mut row = vec![0.0f64; d];
    for t in 0..spec.tokens {
        let v = rng.random_range(0..spec.vocab.len());
        let w = &spec.vocab[v];
        row.copy_from_slice(&prototypes[v].1);
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += spec.noise_sigma * z;
        }
        values.extend(row.iter().map(|&v| v as f32));

        let key = TokenKey::new(
            format!("s{}", t / spec.sentence_len),
            (t % spec.sentence_len + 1) as u32,
        );
        keys.push(key.clone());
        surfaces.push(w.surface.clone());
        rows.push(AnnotationRow {
            key,
            surface: w.surface.clone(),
            feats: w.feats.clone(),
        });
    }

    let mut lexicon = Lexicon::new();
    for w in &spec.vocab {
        lexicon.insert(
            w.surface.clone(),
            LexEntry {
                lemma: w.lemma.clone(),
                feats: w.feats.clone(),
            },
        )?;
    }

    Ok(SynthOutput {
        reprs: ReprSet::new(d, values, keys, surfaces)?,
        annotations: AnnotationTable { rows },
        lexicon,
        truth: PlantedTruth {
            d,
            seed: spec.seed,
            noise_sigma: spec.noise_sigma,
            attributes: spec.planted.clone(),
        },
        prototypes,
    })
}
