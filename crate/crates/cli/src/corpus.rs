//! Corpus directories: a `cases.jsonl` listing plus the images it names.
//!
//! Each line is `{"image": "<path relative to the directory>", "caption": "..."}`,
//! optionally with `"id"` and `"source"`.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cornerrag_core::eval::CorpusItem;
use cornerrag_core::store::CaseSource;
use serde::Deserialize;

pub const LISTING: &str = "cases.jsonl";

#[derive(Debug, Clone, Deserialize)]
pub struct CorpusLine {
    pub image: PathBuf,
    pub caption: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub source: Option<CaseSource>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub line: CorpusLine,
    pub bytes: Vec<u8>,
}

impl CorpusEntry {
    pub fn id(&self) -> String {
        self.line
            .id
            .clone()
            .unwrap_or_else(|| self.line.image.display().to_string())
    }
}

pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let listing = dir.join(LISTING);
    let file = std::fs::File::open(&listing).with_context(|| format!("opening {}", listing.display()))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", listing.display(), n + 1))?;
        let path = dir.join(&parsed.image);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        out.push(CorpusEntry { line: parsed, bytes });
    }
    if out.is_empty() {
        bail!("{} lists no cases", listing.display());
    }
    Ok(out)
}

/// The corpus as evaluation items, with captions as references.
pub fn eval_items(entries: Vec<CorpusEntry>) -> Vec<CorpusItem> {
    entries
        .into_iter()
        .map(|e| CorpusItem {
            id: e.id(),
            image: e.bytes,
            reference: e.line.caption,
        })
        .collect()
}
