//! Annotation and lexicon tables.
//!
//! Both are UTF-8, tab-separated, LF-terminated, with a fixed header row.
//! Morphological features live in a single `feats` column of `Attr=Val`
//! pairs joined by `;`, with `_` for none.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::TokenKey;
use crate::error::{Error, Result};

pub type Feats = BTreeMap<String, String>;

const ANNOTATION_HEADER: &str = "sent_id\ttoken_id\tsurface\tfeats";
const LEXICON_HEADER: &str = "surface\tlemma\tfeats";

pub fn parse_feats(field: &str) -> Result<Feats> {
    let mut feats = Feats::new();
    if field == "_" || field.is_empty() {
        return Ok(feats);
    }
    for pair in field.split(';') {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("feature `{pair}` is not Attr=Val")))?;
        if k.is_empty() || v.is_empty() {
            return Err(Error::Format(format!("empty name or value in `{pair}`")));
        }
        if feats.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Format(format!(
                "attribute `{k}` repeated in `{field}`"
            )));
        }
    }
    Ok(feats)
}

pub fn format_feats(feats: &Feats) -> String {
    if feats.is_empty() {
        return "_".into();
    }
    feats
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn split_line(line: &str, lineno: usize, cols: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != cols {
        return Err(Error::Format(format!(
            "line {lineno}: expected {cols} columns, found {}",
            fields.len()
        )));
    }
    Ok(fields)
}

fn check_header(text: &str, header: &str) -> Result<()> {
    match text.lines().next() {
        Some(h) if h == header => Ok(()),
        Some(h) => Err(Error::Format(format!(
            "bad header `{h}`, expected `{header}`"
        ))),
        None => Err(Error::Format("empty file".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub key: TokenKey,
    pub surface: String,
    pub feats: Feats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationTable {
    pub rows: Vec<AnnotationRow>,
}

impl AnnotationTable {
    pub fn parse(text: &str) -> Result<Self> {
        check_header(text, ANNOTATION_HEADER)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let f = split_line(line, i + 1, 4)?;
            let token_id = f[1]
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad token_id `{}`", i + 1, f[1])))?;
            rows.push(AnnotationRow {
                key: TokenKey::new(f[0], token_id),
                surface: f[2].to_string(),
                feats: parse_feats(f[3])
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(ANNOTATION_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.key.sent_id,
                r.key.token_id,
                r.surface,
                format_feats(&r.feats)
            ));
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub lemma: String,
    pub feats: Feats,
}

/// Exact surface -> (lemma, features) lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, LexEntry>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; a surface may only be registered once.
    pub fn insert(&mut self, surface: impl Into<String>, entry: LexEntry) -> Result<()> {
        let surface = surface.into();
        if entry.lemma.is_empty() {
            return Err(Error::Format(format!("empty lemma for `{surface}`")));
        }
        match self.entries.entry(surface) {
            Entry::Occupied(o) => Err(Error::Format(format!(
                "surface `{}` listed twice in lexicon",
                o.key()
            ))),
            Entry::Vacant(v) => {
                v.insert(entry);
                Ok(())
            }
        }
    }

    pub fn get(&self, surface: &str) -> Option<&LexEntry> {
        self.entries.get(surface)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LexEntry)> {
        self.entries.iter()
    }

    pub fn parse(text: &str) -> Result<Self> {
        check_header(text, LEXICON_HEADER)?;
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let f = split_line(line, i + 1, 3)?;
            let entry = LexEntry {
                lemma: f[1].to_string(),
                feats: parse_feats(f[2])
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?,
            };
            lex.insert(f[0], entry)
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(LEXICON_HEADER);
        out.push('\n');
        for (s, e) in &self.entries {
            out.push_str(&format!("{s}\t{}\t{}\n", e.lemma, format_feats(&e.feats)));
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
