//! Unit-norm embedding vectors.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

/// Vectors whose norm is within this distance of 1 are stored as given.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("cannot normalize a zero vector")]
    Zero,
    #[error("vector contains non-finite components")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("malformed embedding encoding: {0}")]
    Encoding(String),
}

/// An L2-normalized vector of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` unless already unit-norm within tolerance.
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EmbeddingError::Zero);
        }
        if (norm - 1.0).abs() < UNIT_NORM_TOLERANCE {
            return Ok(Self(values));
        }
        Ok(Self(
            values.iter().map(|&v| (v as f64 / norm) as f32).collect(),
        ))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Exact cosine similarity, accumulated in f64. Dividing by the stored
    /// norms removes the residual f32 rounding of normalization.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        dot / (self.norm() * other.norm())
    }

    /// Base64 of the little-endian f32 bytes.
    pub fn to_base64(&self) -> String {
        let bytes: Vec<u8> = self.0.iter().flat_map(|v| v.to_le_bytes()).collect();
        STANDARD.encode(bytes)
    }

    pub fn from_base64(encoded: &str) -> Result<Self, EmbeddingError> {
        let bytes = STANDARD
            .decode(encoded)
            .map_err(|e| EmbeddingError::Encoding(e.to_string()))?;
        if bytes.len() % 4 != 0 {
            return Err(EmbeddingError::Encoding(format!(
                "{} bytes is not a whole number of f32 values",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(values)
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_on_construction() {
        let v = EmbeddingVector::new(vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        let w = EmbeddingVector::new(vec![1.2, -0.4, 0.9, 0.3]).unwrap();
        assert!((w.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
    }

    #[test]
    fn unit_vectors_kept_bitwise() {
        let raw = vec![0.6f32, 0.8];
        let v = EmbeddingVector::new(raw.clone()).unwrap();
        assert_eq!(v.values(), raw.as_slice());
    }

    #[test]
    fn zero_and_nan_rejected() {
        assert_eq!(EmbeddingVector::new(vec![0.0; 8]), Err(EmbeddingError::Zero));
        assert_eq!(
            EmbeddingVector::new(vec![f32::NAN, 1.0]),
            Err(EmbeddingError::NonFinite)
        );
    }

    #[test]
    fn self_cosine_is_one() {
        let v = EmbeddingVector::new(vec![0.3, 0.1, 0.7, 0.2, 0.9]).unwrap();
        assert!((v.cosine(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base64_round_trip_is_bitwise() {
        let v = EmbeddingVector::new(vec![0.3, -0.1, 0.7, 0.2]).unwrap();
        let back = EmbeddingVector::from_base64(&v.to_base64()).unwrap();
        assert_eq!(v, back);
        assert!(EmbeddingVector::from_base64("AAA").is_err());
    }
}
