//! The paired case databases: a cross-modal store (image segment ‖ text
//! segment per case) and a text-only store, both addressed by one shared
//! index and described by a JSON-lines manifest.
//!
//! Embeddings are held and written as f32; all similarity arithmetic
//! widens to f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, ByteReader};
use crate::embedding::{CrossModalEmbedding, Dims, EmbeddingVector};
use crate::error::{Error, Result};

pub const CROSSMODAL_FILE: &str = "crossmodal.db";
pub const TEXT_FILE: &str = "text.db";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

const CROSSMODAL_MAGIC: &[u8; 5] = b"CMDB1";
const TEXT_MAGIC: &[u8; 5] = b"TXDB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSource {
    SeedCorpus,
    HumanCorrection,
}

/// A caption that was replaced by a correction, kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRevision {
    pub revision: u32,
    pub previous_caption: String,
    pub previous_source: CaseSource,
    pub operator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub index: usize,
    pub image_ref: String,
    pub caption: String,
    pub source: CaseSource,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub revision: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<CaptionRevision>,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl CaseRecord {
    pub fn new(index: usize, image_ref: impl Into<String>, caption: impl Into<String>, source: CaseSource) -> Self {
        Self {
            index,
            image_ref: image_ref.into(),
            caption: caption.into(),
            source,
            revision: 0,
            history: Vec::new(),
        }
    }
}

/// A case before it has been assigned an index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewCase {
    pub image_ref: String,
    pub caption: String,
    pub source: CaseSource,
}

impl NewCase {
    pub fn new(image_ref: impl Into<String>, caption: impl Into<String>, source: CaseSource) -> Self {
        Self {
            image_ref: image_ref.into(),
            caption: caption.into(),
            source,
        }
    }
}

/// Everything stored under one index.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCase {
    pub record: CaseRecord,
    pub embedding: CrossModalEmbedding,
    pub text_vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorePair {
    dims: Dims,
    records: Vec<CaseRecord>,
    // row i: dims.image values of the image segment, then dims.text values of the text segment
    cross_modal: Vec<f32>,
    text_only: Vec<f32>,
    image_norms: Vec<f64>,
    text_norms: Vec<f64>,
}

pub(crate) fn norm_f32(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| {
            let x = f64::from(v);
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

fn quantize(v: &EmbeddingVector) -> Vec<f32> {
    v.as_slice().iter().map(|&x| x as f32).collect()
}

impl StorePair {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            records: Vec::new(),
            cross_modal: Vec::new(),
            text_only: Vec::new(),
            image_norms: Vec::new(),
            text_norms: Vec::new(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CaseRecord] {
        &self.records
    }

    fn row_width(&self) -> usize {
        self.dims.image + self.dims.text
    }

    /// Appends a case to both databases and returns its shared index.
    ///
    /// Every check runs before any collection is touched, so a failed insert
    /// leaves the store unchanged.
    pub fn insert(&mut self, case: NewCase, cm: &CrossModalEmbedding, text_vector: &EmbeddingVector) -> Result<usize> {
        if case.caption.trim().is_empty() {
            return Err(Error::Precondition("caption must be non-empty".into()));
        }
        self.dims.check(cm)?;
        text_vector.expect_dim(self.dims.text, "text-only vector")?;

        let img = quantize(&cm.image_segment);
        let txt = quantize(&cm.text_segment);
        let (img_norm, txt_norm) = (norm_f32(&img), norm_f32(&txt));
        if img_norm == 0.0 || txt_norm == 0.0 {
            return Err(Error::DegenerateInput(
                "cross-modal segments must have non-zero norm".into(),
            ));
        }
        let tv = quantize(text_vector);

        let index = self.records.len();
        self.cross_modal.extend_from_slice(&img);
        self.cross_modal.extend_from_slice(&txt);
        self.text_only.extend_from_slice(&tv);
        self.image_norms.push(img_norm);
        self.text_norms.push(txt_norm);
        self.records
            .push(CaseRecord::new(index, case.image_ref, case.caption, case.source));
        Ok(index)
    }

    pub fn record(&self, index: usize) -> Result<&CaseRecord> {
        self.records.get(index).ok_or(Error::NotFound(index))
    }

    pub fn get(&self, index: usize) -> Result<StoredCase> {
        let record = self.record(index)?.clone();
        Ok(StoredCase {
            record,
            embedding: CrossModalEmbedding {
                image_segment: EmbeddingVector::from_f32(self.image_segment(index))?,
                text_segment: EmbeddingVector::from_f32(self.text_segment(index))?,
            },
            text_vector: EmbeddingVector::from_f32(self.text_vector(index))?,
        })
    }

    /// Replaces the caption and both text embeddings of a case, keeping the
    /// superseded caption in the record history. Returns the new revision.
    pub fn correct_caption(
        &mut self,
        index: usize,
        caption: &str,
        text_vector: &EmbeddingVector,
        operator_id: &str,
    ) -> Result<u32> {
        if caption.trim().is_empty() {
            return Err(Error::Precondition("corrected caption must be non-empty".into()));
        }
        self.record(index)?;
        text_vector.expect_dim(self.dims.text, "corrected text vector")?;
        let tv = quantize(text_vector);
        let norm = norm_f32(&tv);
        if norm == 0.0 {
            return Err(Error::DegenerateInput("corrected text vector is zero".into()));
        }

        let width = self.row_width();
        let seg = index * width + self.dims.image;
        self.cross_modal[seg..seg + self.dims.text].copy_from_slice(&tv);
        let t = index * self.dims.text;
        self.text_only[t..t + self.dims.text].copy_from_slice(&tv);
        self.text_norms[index] = norm;

        let rec = &mut self.records[index];
        rec.revision += 1;
        rec.history.push(CaptionRevision {
            revision: rec.revision,
            previous_caption: std::mem::replace(&mut rec.caption, caption.to_string()),
            previous_source: rec.source,
            operator_id: operator_id.to_string(),
        });
        rec.source = CaseSource::HumanCorrection;
        Ok(rec.revision)
    }

    pub fn image_segment(&self, index: usize) -> &[f32] {
        let start = index * self.row_width();
        &self.cross_modal[start..start + self.dims.image]
    }

    pub fn text_segment(&self, index: usize) -> &[f32] {
        let start = index * self.row_width() + self.dims.image;
        &self.cross_modal[start..start + self.dims.text]
    }

    pub fn text_vector(&self, index: usize) -> &[f32] {
        let start = index * self.dims.text;
        &self.text_only[start..start + self.dims.text]
    }

    pub(crate) fn image_norm(&self, index: usize) -> f64 {
        self.image_norms[index]
    }

    pub(crate) fn text_norm(&self, index: usize) -> f64 {
        self.text_norms[index]
    }

    pub fn crossmodal_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(25 + self.cross_modal.len() * 4);
        out.extend_from_slice(CROSSMODAL_MAGIC);
        codec::put_u32(&mut out, codec::dim_u32(self.dims.image, "dim_img")?);
        codec::put_u32(&mut out, codec::dim_u32(self.dims.text, "dim_txt")?);
        codec::put_u64(&mut out, self.len() as u64);
        codec::put_f32s(&mut out, &self.cross_modal);
        Ok(codec::seal(out))
    }

    pub fn text_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(21 + self.text_only.len() * 4);
        out.extend_from_slice(TEXT_MAGIC);
        codec::put_u32(&mut out, codec::dim_u32(self.dims.text, "dim_txt")?);
        codec::put_u64(&mut out, self.len() as u64);
        codec::put_f32s(&mut out, &self.text_only);
        Ok(codec::seal(out))
    }

    pub fn manifest_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)
                .map_err(|e| Error::Data(format!("manifest encoding failed: {e}")))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// CRC32 over the three on-disk images of the store.
    pub fn checksum(&self) -> Result<u32> {
        let mut h = crc32fast::Hasher::new();
        h.update(&self.crossmodal_bytes()?);
        h.update(&self.text_bytes()?);
        h.update(&self.manifest_bytes()?);
        Ok(h.finalize())
    }

    /// Writes all three files. Each is staged as `<name>.tmp` and only
    /// renamed into place once every staged write has succeeded.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let files = [
            (CROSSMODAL_FILE, self.crossmodal_bytes()?),
            (TEXT_FILE, self.text_bytes()?),
            (MANIFEST_FILE, self.manifest_bytes()?),
        ];
        let mut staged = Vec::new();
        for (name, bytes) in &files {
            let tmp = dir.join(format!("{name}.tmp"));
            if let Err(e) = fs::write(&tmp, bytes) {
                for path in &staged {
                    let _ = fs::remove_file(path);
                }
                return Err(e.into());
            }
            staged.push(tmp);
        }
        for ((name, _), tmp) in files.iter().zip(staged) {
            fs::rename(tmp, dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cm_bytes = fs::read(dir.join(CROSSMODAL_FILE))?;
        let txt_bytes = fs::read(dir.join(TEXT_FILE))?;
        let manifest = fs::read(dir.join(MANIFEST_FILE))?;
        Self::from_parts(&cm_bytes, &txt_bytes, &manifest)
    }

    pub fn from_parts(crossmodal: &[u8], text: &[u8], manifest: &[u8]) -> Result<Self> {
        let (dims, count, cross_modal) = parse_crossmodal(crossmodal)?;
        let (dim_txt, text_count, text_only) = parse_text(text)?;
        if dim_txt != dims.text {
            return Err(Error::Schema(format!(
                "text.db dim {dim_txt} disagrees with crossmodal.db text dim {}",
                dims.text
            )));
        }
        if text_count != count {
            return Err(Error::format(
                0,
                format!("text.db holds {text_count} entries, crossmodal.db holds {count}"),
            ));
        }

        let mut records = Vec::with_capacity(count);
        let mut offset = 0u64;
        for line in manifest.split(|&b| b == b'\n') {
            if line.is_empty() {
                offset += 1;
                continue;
            }
            let rec: CaseRecord = serde_json::from_slice(line)
                .map_err(|e| Error::format(offset, format!("bad manifest line: {e}")))?;
            if rec.index != records.len() {
                return Err(Error::format(
                    offset,
                    format!("manifest index {} at position {}", rec.index, records.len()),
                ));
            }
            records.push(rec);
            offset += line.len() as u64 + 1;
        }
        if records.len() != count {
            return Err(Error::format(
                0,
                format!("manifest has {} records, databases hold {count}", records.len()),
            ));
        }

        let mut store = Self {
            dims,
            records,
            cross_modal,
            text_only,
            image_norms: Vec::with_capacity(count),
            text_norms: Vec::with_capacity(count),
        };
        for i in 0..count {
            let (a, b) = (norm_f32(store.image_segment(i)), norm_f32(store.text_segment(i)));
            store.image_norms.push(a);
            store.text_norms.push(b);
        }
        Ok(store)
    }
}

fn parse_crossmodal(bytes: &[u8]) -> Result<(Dims, usize, Vec<f32>)> {
    if !bytes.starts_with(CROSSMODAL_MAGIC) {
        return Err(Error::format(0, "crossmodal.db: bad magic"));
    }
    let body = codec::unseal(bytes, CROSSMODAL_FILE)?;
    let mut r = ByteReader::new(body);
    r.expect_magic(CROSSMODAL_MAGIC)?;
    let dims = Dims::new(r.u32("dim_img")? as usize, r.u32("dim_txt")? as usize)?;
    let count = r.u64("count")? as usize;
    let payload = r.f32s(count * (dims.image + dims.text), "cross-modal payload")?;
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), "crossmodal.db: trailing bytes"));
    }
    Ok((dims, count, payload))
}

fn parse_text(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if !bytes.starts_with(TEXT_MAGIC) {
        return Err(Error::format(0, "text.db: bad magic"));
    }
    let body = codec::unseal(bytes, TEXT_FILE)?;
    let mut r = ByteReader::new(body);
    r.expect_magic(TEXT_MAGIC)?;
    let dim = r.u32("dim_txt")? as usize;
    let count = r.u64("count")? as usize;
    let payload = r.f32s(count * dim, "text payload")?;
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), "text.db: trailing bytes"));
    }
    Ok((dim, count, payload))
}
