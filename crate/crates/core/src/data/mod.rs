//! Word representations, attribute datasets and the file formats around them.

mod nrt;
mod synth;
mod tsv;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nrt::{decode_repr_bytes, encode_repr_bytes, read_repr_file, write_repr_file};
pub use synth::{
    generate as synth_generate, PlantedAttribute, PlantedTruth, SynthOutput, SynthSpec, VocabEntry,
};
pub use tsv::{
    format_feats, parse_feats, AnnotationRow, AnnotationTable, Feats, LexEntry, Lexicon,
};

/// Identity of one word occurrence in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenKey {
    pub sent_id: String,
    pub token_id: u32,
}

impl TokenKey {
    pub fn new(sent_id: impl Into<String>, token_id: u32) -> Self {
        Self {
            sent_id: sent_id.into(),
            token_id,
        }
    }

    /// Placeholder key for rows loaded from a bare NRT1 file.
    pub fn positional(row: usize) -> Self {
        Self::new("", row as u32)
    }
}

impl fmt::Display for TokenKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sent_id, self.token_id)
    }
}

/// An `rows x dims` matrix of word representations, one row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprSet {
    rows: usize,
    dims: usize,
    values: Vec<f32>,
    token_keys: Vec<TokenKey>,
    surfaces: Vec<String>,
}

impl ReprSet {
    pub fn new(
        dims: usize,
        values: Vec<f32>,
        token_keys: Vec<TokenKey>,
        surfaces: Vec<String>,
    ) -> Result<Self> {
        let rows = token_keys.len();
        if values.len() != rows * dims {
            return Err(Error::Data(format!(
                "{} values for a {rows}x{dims} matrix",
                values.len()
            )));
        }
        if surfaces.len() != rows {
            return Err(Error::Data(format!(
                "{} surfaces for {rows} rows",
                surfaces.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, col {}",
                pos / dims.max(1),
                pos % dims.max(1)
            )));
        }
        let mut seen = HashSet::with_capacity(rows);
        for key in &token_keys {
            if !seen.insert(key) {
                return Err(Error::Data(format!("duplicate token key {key}")));
            }
        }
        Ok(Self {
            rows,
            dims,
            values,
            token_keys,
            surfaces,
        })
    }

    /// Matrix with positional keys and empty surfaces.
    pub fn from_matrix(rows: usize, dims: usize, values: Vec<f32>) -> Result<Self> {
        let keys = (0..rows).map(TokenKey::positional).collect();
        Self::new(dims, values, keys, vec![String::new(); rows])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn token_keys(&self) -> &[TokenKey] {
        &self.token_keys
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    /// Replaces keys and surfaces with those of `table`, row by row.
    ///
    /// NRT1 files carry no token identity; the annotation TSV written next to
    /// them lists the tokens in the same order.
    pub fn attach_tokens(self, table: &AnnotationTable) -> Result<Self> {
        if table.rows.len() != self.rows {
            return Err(Error::Alignment(format!(
                "annotation table has {} rows, representations have {}",
                table.rows.len(),
                self.rows
            )));
        }
        let keys = table.rows.iter().map(|r| r.key.clone()).collect();
        let surfaces = table.rows.iter().map(|r| r.surface.clone()).collect();
        Self::new(self.dims, self.values, keys, surfaces)
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.dims);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            dims: self.dims,
            values,
            token_keys: idx.iter().map(|&i| self.token_keys[i].clone()).collect(),
            surfaces: idx.iter().map(|&i| self.surfaces[i].clone()).collect(),
        }
    }
}

/// Representations joined with the values of one attribute.
///
/// Labels are stored as indices into `label_set`, which is sorted
/// lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDataset {
    reprs: ReprSet,
    attribute: String,
    labels: Vec<usize>,
    label_set: Vec<String>,
    word_types: Vec<String>,
}

impl AttributeDataset {
    /// Builds a dataset from string labels; the label set is every distinct
    /// value present, sorted.
    pub fn new(
        reprs: ReprSet,
        attribute: impl Into<String>,
        labels: &[String],
        word_types: Vec<String>,
    ) -> Result<Self> {
        let label_set: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let idx = labels
            .iter()
            .map(|l| label_set.binary_search(l).expect("label from its own set"))
            .collect();
        Self::with_label_set(reprs, attribute, idx, label_set, word_types)
    }

    pub fn with_label_set(
        reprs: ReprSet,
        attribute: impl Into<String>,
        labels: Vec<usize>,
        label_set: Vec<String>,
        word_types: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != reprs.rows() || word_types.len() != reprs.rows() {
            return Err(Error::Data(format!(
                "{} labels and {} word types for {} rows",
                labels.len(),
                word_types.len(),
                reprs.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_set.len()) {
            return Err(Error::Data(format!(
                "label index {bad} outside a label set of {}",
                label_set.len()
            )));
        }
        if label_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("label set must be sorted and distinct".into()));
        }
        Ok(Self {
            reprs,
            attribute: attribute.into(),
            labels,
            label_set,
            word_types,
        })
    }

    pub fn reprs(&self) -> &ReprSet {
        &self.reprs
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn label_name(&self, row: usize) -> &str {
        &self.label_set[self.labels[row]]
    }

    pub fn word_types(&self) -> &[String] {
        &self.word_types
    }

    pub fn rows(&self) -> usize {
        self.reprs.rows()
    }

    pub fn dims(&self) -> usize {
        self.reprs.dims()
    }

    pub fn num_classes(&self) -> usize {
        self.label_set.len()
    }

    /// Rows per class, indexed like `label_set`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_set.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Same attribute and label set, rows `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            reprs: self.reprs.select_rows(idx),
            attribute: self.attribute.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_set: self.label_set.clone(),
            word_types: idx.iter().map(|&i| self.word_types[i].clone()).collect(),
        }
    }

    /// Same rows with every label replaced.
    pub fn relabel(&self, labels: Vec<usize>) -> Result<Self> {
        Self::with_label_set(
            self.reprs.clone(),
            self.attribute.clone(),
            labels,
            self.label_set.clone(),
            self.word_types.clone(),
        )
    }

    /// Shuffles rows with `seed` and cuts them into train/dev/test.
    ///
    /// Fractions are of the total row count; test receives the remainder.
    pub fn split(&self, train_frac: f64, dev_frac: f64, seed: u64) -> Result<Splits> {
        if !(0.0..=1.0).contains(&train_frac)
            || !(0.0..=1.0).contains(&dev_frac)
            || train_frac + dev_frac > 1.0
        {
            return Err(Error::Range(format!(
                "split fractions {train_frac} + {dev_frac} must lie in [0, 1]"
            )));
        }
        let mut idx: Vec<usize> = (0..self.rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.rows() as f64 * train_frac).round() as usize;
        let n_dev = ((self.rows() as f64 * dev_frac).round() as usize).min(self.rows() - n_train);
        let (train, rest) = idx.split_at(n_train);
        let (dev, test) = rest.split_at(n_dev);
        Ok(Splits {
            train: self.select_rows(train),
            dev: self.select_rows(dev),
            test: self.select_rows(test),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: AttributeDataset,
    pub dev: AttributeDataset,
    pub test: AttributeDataset,
}

/// Restricts `reprs` to the tokens whose annotation carries `attribute`.
pub fn align_annotations(
    reprs: &ReprSet,
    annotations: &AnnotationTable,
    attribute: &str,
) -> Result<AttributeDataset> {
    let by_key: HashMap<&TokenKey, usize> = reprs
        .token_keys()
        .iter()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();

    let mut selected: Vec<(usize, &str, &str)> = Vec::new();
    let mut seen = HashSet::new();
    for row in &annotations.rows {
        let Some(&ri) = by_key.get(&row.key) else {
            return Err(Error::Alignment(format!(
                "annotation {} has no representation row",
                row.key
            )));
        };
        if !seen.insert(ri) {
            return Err(Error::Alignment(format!(
                "annotation {} appears twice",
                row.key
            )));
        }
        if let Some(value) = row.feats.get(attribute) {
            selected.push((ri, value.as_str(), row.surface.as_str()));
        }
    }
    if selected.is_empty() {
        return Err(Error::EmptyTask(attribute.to_string()));
    }
    selected.sort_by_key(|s| s.0);

    let idx: Vec<usize> = selected.iter().map(|s| s.0).collect();
    let labels: Vec<String> = selected.iter().map(|s| s.1.to_string()).collect();
    let word_types = selected.iter().map(|s| s.2.to_string()).collect();
    AttributeDataset::new(reprs.select_rows(&idx), attribute, &labels, word_types)
}

/// Per-class mean vectors, indexed like the dataset's label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeans {
    pub labels: Vec<String>,
    pub means: Vec<Vec<f64>>,
}

impl ClassMeans {
    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.means[i].as_slice())
    }

    pub fn dims(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }
}

pub fn class_means(dataset: &AttributeDataset) -> Result<ClassMeans> {
    let d = dataset.dims();
    let mut sums = vec![vec![0.0f64; d]; dataset.num_classes()];
    let counts = dataset.class_counts();
    for (i, &l) in dataset.labels().iter().enumerate() {
        for (s, &v) in sums[l].iter_mut().zip(dataset.reprs().row(i)) {
            *s += f64::from(v);
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass(dataset.label_set()[c].clone()));
        }
        for s in &mut sums[c] {
            *s /= n as f64;
        }
    }
    Ok(ClassMeans {
        labels: dataset.label_set().to_vec(),
        means: sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, u32, &str, &str)]) -> AnnotationTable {
        AnnotationTable {
            rows: rows
                .iter()
                .map(|&(s, t, surf, feats)| AnnotationRow {
                    key: TokenKey::new(s, t),
                    surface: surf.into(),
                    feats: parse_feats(feats).unwrap(),
                })
                .collect(),
        }
    }

    fn five_tokens() -> (ReprSet, AnnotationTable) {
        let ann = table(&[
            ("s1", 1, "the", "_"),
            ("s1", 2, "cats", "Number=Pl"),
            ("s1", 3, "sleep", "Tense=Pres"),
            ("s2", 1, "a", "_"),
            ("s2", 2, "dog", "Number=Sg"),
        ]);
        let values: Vec<f32> = (0..10).map(|v| v as f32).collect();
        let reprs = ReprSet::from_matrix(5, 2, values)
            .unwrap()
            .attach_tokens(&ann)
            .unwrap();
        (reprs, ann)
    }

    #[test]
    fn align_keeps_only_attribute_rows() {
        let (reprs, mut ann) = five_tokens();
        ann.rows[2].feats.insert("Number".into(), "Pl".into());
        let ds = align_annotations(&reprs, &ann, "Number").unwrap();
        assert_eq!(ds.rows(), 3);
        assert_eq!(ds.label_set(), ["Pl", "Sg"]);
        assert_eq!(ds.reprs().row(2), &[8.0, 9.0]);
        assert_eq!(ds.word_types(), ["cats", "sleep", "dog"]);
    }

    #[test]
    fn align_without_attribute_is_empty_task() {
        let (reprs, ann) = five_tokens();
        assert!(matches!(
            align_annotations(&reprs, &ann, "Case"),
            Err(Error::EmptyTask(_))
        ));
    }

    #[test]
    fn align_single_value_is_valid() {
        let (reprs, ann) = five_tokens();
        let ds = align_annotations(&reprs, &ann, "Tense").unwrap();
        assert_eq!(ds.num_classes(), 1);
        assert_eq!(ds.rows(), 1);
    }

    #[test]
    fn align_unknown_key_errors() {
        let (reprs, mut ann) = five_tokens();
        ann.rows[0].key = TokenKey::new("s9", 1);
        assert!(matches!(
            align_annotations(&reprs, &ann, "Number"),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let keys = vec![TokenKey::new("a", 1), TokenKey::new("a", 1)];
        let r = ReprSet::new(1, vec![0.0, 1.0], keys, vec![String::new(); 2]);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(ReprSet::from_matrix(1, 2, vec![0.0, f32::NAN]).is_err());
    }

    fn ds(rows: &[[f32; 2]], labels: &[&str]) -> AttributeDataset {
        let values = rows.iter().flatten().copied().collect();
        let reprs = ReprSet::from_matrix(rows.len(), 2, values).unwrap();
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let wt = labels.clone();
        AttributeDataset::new(reprs, "A", &labels, wt).unwrap()
    }

    #[test]
    fn class_means_by_hand() {
        let d = ds(&[[1.0, 3.0], [9.0, 9.0], [3.0, 5.0]], &["x", "y", "x"]);
        let q = class_means(&d).unwrap();
        assert_eq!(q.get("x").unwrap(), &[2.0, 4.0]);
        assert_eq!(q.get("y").unwrap(), &[9.0, 9.0]);
    }

    #[test]
    fn class_means_constant_data() {
        let d = ds(&[[1.5, -2.0]; 4], &["a", "b", "a", "b"]);
        let q = class_means(&d).unwrap();
        assert_eq!(q.means[0], q.means[1]);
    }

    #[test]
    fn class_means_empty_class() {
        let reprs = ReprSet::from_matrix(1, 1, vec![1.0]).unwrap();
        let d = AttributeDataset::with_label_set(
            reprs,
            "A",
            vec![0],
            vec!["a".into(), "b".into()],
            vec!["w".into()],
        )
        .unwrap();
        assert!(matches!(class_means(&d), Err(Error::EmptyClass(c)) if c == "b"));
    }

    #[test]
    fn split_partitions_rows() {
        let rows: Vec<[f32; 2]> = (0..10).map(|i| [i as f32, 0.0]).collect();
        let labels: Vec<&str> = (0..10)
            .map(|i| if i % 2 == 0 { "a" } else { "b" })
            .collect();
        let d = ds(&rows, &labels);
        let s = d.split(0.6, 0.2, 3).unwrap();
        assert_eq!((s.train.rows(), s.dev.rows(), s.test.rows()), (6, 2, 2));
        let mut all: Vec<f32> = [&s.train, &s.dev, &s.test]
            .iter()
            .flat_map(|p| {
                (0..p.rows())
                    .map(|i| p.reprs().row(i)[0])
                    .collect::<Vec<_>>()
            })
            .collect();
        all.sort_by(f32::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f32).collect::<Vec<_>>());
    }
}
