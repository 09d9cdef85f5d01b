//! `CMB1` precomputed-batch files: the offline path for seeding stores and
//! training without live encoders.
//!
//! Layout (little-endian): magic `CMB1`, u32 dim_img, u32 dim_txt, u64 count,
//! then per record: u32 caption length and UTF-8 caption, u32 image-path
//! length and UTF-8 path, dim_img f32 (image segment), dim_txt f32 (text segment),
//! dim_txt f32 (text-only vector).

use std::path::Path;

use super::{CrossModalEmbedding, Dims, EmbeddingVector};
use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::store::{CaseRecord, CaseSource};

const BATCH_MAGIC: &[u8; 4] = b"CMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedRecord {
    pub record: CaseRecord,
    pub embedding: CrossModalEmbedding,
    pub text_vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedBatch {
    pub dims: Dims,
    pub records: Vec<PrecomputedRecord>,
}

impl PrecomputedBatch {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(BATCH_MAGIC)?;
        let dim_img = r.u32("dim_img")? as usize;
        let dim_txt = r.u32("dim_txt")? as usize;
        let dims = Dims::new(dim_img, dim_txt)
            .map_err(|_| Error::format(4, "zero dimension in header"))?;
        let count = r.u64("count")?;
        let mut records = Vec::new();
        for index in 0..count as usize {
            let caption = r.string("caption")?;
            let image_ref = r.string("image path")?;
            let img = r.f32s(dim_img, "image segment")?;
            let txt = r.f32s(dim_txt, "text segment")?;
            let tv = r.f32s(dim_txt, "text-only vector")?;
            records.push(PrecomputedRecord {
                record: CaseRecord::new(index, image_ref, caption, CaseSource::SeedCorpus),
                embedding: CrossModalEmbedding {
                    image_segment: EmbeddingVector::from_f32(&img)?,
                    text_segment: EmbeddingVector::from_f32(&txt)?,
                },
                text_vector: EmbeddingVector::from_f32(&tv)?,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), "trailing bytes after last record"));
        }
        Ok(Self { dims, records })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(BATCH_MAGIC);
        codec::put_u32(&mut out, codec::dim_u32(self.dims.image, "dim_img")?);
        codec::put_u32(&mut out, codec::dim_u32(self.dims.text, "dim_txt")?);
        codec::put_u64(&mut out, self.records.len() as u64);
        for rec in &self.records {
            self.dims.check(&rec.embedding)?;
            rec.text_vector.expect_dim(self.dims.text, "text-only vector")?;
            codec::put_string(&mut out, &rec.record.caption);
            codec::put_string(&mut out, &rec.record.image_ref);
            for v in [
                &rec.embedding.image_segment,
                &rec.embedding.text_segment,
                &rec.text_vector,
            ] {
                let f: Vec<f32> = v.as_slice().iter().map(|&x| x as f32).collect();
                codec::put_f32s(&mut out, &f);
            }
        }
        Ok(out)
    }

    /// Image segment / text-only vector pairs, the training view of a batch.
    pub fn training_pairs(&self) -> Vec<(EmbeddingVector, EmbeddingVector)> {
        self.records
            .iter()
            .map(|r| (r.embedding.image_segment.clone(), r.text_vector.clone()))
            .collect()
    }
}

/// Reads a batch file; records come back in file order with indices `0..N`.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedBatch> {
    PrecomputedBatch::parse(&std::fs::read(path)?)
}

pub fn write_precomputed(path: &Path, batch: &PrecomputedBatch) -> Result<()> {
    std::fs::write(path, batch.to_bytes()?)?;
    Ok(())
}
