use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::EmbeddingVector;
use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};

const HEAD_MAGIC: &[u8; 5] = b"HEAD1";

/// Linear map applied to image embeddings before similarity.
///
/// Stands in for fine-tuned encoder weights: the base encoders stay frozen
/// and only this `dim_out × dim_in` matrix is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    weights: DMatrix<f64>,
}

impl ProjectionHead {
    pub fn identity(dim: usize) -> Self {
        Self {
            weights: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Schema("projection head must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("projection head has non-finite weights".into()));
        }
        Ok(Self { weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim_out = rows.len();
        let dim_in = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim_in) {
            return Err(Error::Schema("ragged projection rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_weights(DMatrix::from_row_slice(dim_out, dim_in, &flat))
    }

    pub fn dim_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_identity(&self) -> bool {
        self.dim_in() == self.dim_out() && self.weights == DMatrix::identity(self.dim_in(), self.dim_in())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(13 + self.weights.len() * 4 + 4);
        out.extend_from_slice(HEAD_MAGIC);
        codec::put_u32(&mut out, codec::dim_u32(self.dim_in(), "dim_in")?);
        codec::put_u32(&mut out, codec::dim_u32(self.dim_out(), "dim_out")?);
        let row_major: Vec<f32> = self
            .weights
            .row_iter()
            .flat_map(|row| row.iter().map(|&w| w as f32).collect::<Vec<_>>())
            .collect();
        codec::put_f32s(&mut out, &row_major);
        Ok(codec::seal(out))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(HEAD_MAGIC) {
            return Err(Error::format(0, "not a projection head file"));
        }
        let body = codec::unseal(bytes, "head")?;
        let mut r = ByteReader::new(body);
        r.expect_magic(HEAD_MAGIC)?;
        let dim_in = r.u32("dim_in")? as usize;
        let dim_out = r.u32("dim_out")? as usize;
        let weights = r.f32s(dim_in * dim_out, "weights")?;
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), "trailing bytes after weights"));
        }
        let weights: Vec<f64> = weights.into_iter().map(f64::from).collect();
        Self::from_weights(DMatrix::from_row_slice(dim_out, dim_in, &weights))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Applies `W·v`.
pub fn project(v: &EmbeddingVector, head: &ProjectionHead) -> Result<EmbeddingVector> {
    if v.dim() != head.dim_in() {
        return Err(Error::Schema(format!(
            "projection expects dim {}, got {}",
            head.dim_in(),
            v.dim()
        )));
    }
    if head.is_identity() {
        return Ok(v.clone());
    }
    let out = &head.weights * DVector::from_column_slice(v.as_slice());
    EmbeddingVector::new(out.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vecf(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn identity_head_is_exact() {
        let v = vecf(&[0.3, -0.4]);
        assert_eq!(project(&v, &ProjectionHead::identity(2)).unwrap(), v);
    }

    #[test]
    fn scaling_and_swap() {
        let scale = ProjectionHead::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(project(&vecf(&[1.0, 1.0]), &scale).unwrap().as_slice(), &[2.0, 2.0]);
        let swap = ProjectionHead::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(project(&vecf(&[1.0, 2.0]), &swap).unwrap().as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn rectangular_head_changes_dim() {
        let head = ProjectionHead::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let out = project(&vecf(&[1.0, 2.0, 3.0]), &head).unwrap();
        assert_eq!(out.as_slice(), &[6.0]);
        assert!(matches!(
            project(&vecf(&[1.0, 2.0]), &head),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn head_file_round_trip_and_corruption() {
        let head = ProjectionHead::from_rows(&[vec![0.5, -1.25], vec![3.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let bytes = head.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"HEAD1");
        assert_eq!(ProjectionHead::from_bytes(&bytes).unwrap(), head);

        let mut bad = bytes.clone();
        bad[15] ^= 0x01;
        assert!(matches!(ProjectionHead::from_bytes(&bad), Err(Error::Corruption { .. })));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(matches!(ProjectionHead::from_bytes(&bad_magic), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            w in prop::collection::vec(-2.0f64..2.0, 12),
            u in prop::collection::vec(-5.0f64..5.0, 4),
            v in prop::collection::vec(-5.0f64..5.0, 4),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let head = ProjectionHead::from_weights(DMatrix::from_row_slice(3, 4, &w)).unwrap();
            let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = project(&vecf(&combo), &head).unwrap();
            let pu = project(&vecf(&u), &head).unwrap();
            let pv = project(&vecf(&v), &head).unwrap();
            for k in 0..3 {
                let rhs = a * pu.as_slice()[k] + b * pv.as_slice()[k];
                let scale = lhs.as_slice()[k].abs().max(rhs.abs()).max(1.0);
                prop_assert!((lhs.as_slice()[k] - rhs).abs() / scale < 1e-9);
            }
        }

        #[test]
        fn identity_leaves_any_vector(v in prop::collection::vec(-1e6f64..1e6, 1..16)) {
            let e = vecf(&v);
            prop_assert_eq!(project(&e, &ProjectionHead::identity(v.len())).unwrap(), e);
        }
    }
}
