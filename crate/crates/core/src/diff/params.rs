use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DiffError;

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable 2-D tensors.
///
/// Vectors are stored as `1 x n` row tensors so every parameter can be
/// broadcast directly against a batch on the tape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor. Names must be unique and values finite.
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<ParamId, DiffError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(DiffError::DuplicateParam(name));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFiniteParam(name));
        }
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    /// Adds a tensor filled with `N(0, std^2)` draws.
    pub fn insert_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let value = if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("positive std");
            Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
        } else {
            Array2::zeros((rows, cols))
        };
        self.insert(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_dim(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// All values concatenated in insertion order (row-major per tensor).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for v in &self.values {
            out.extend(v.iter().copied());
        }
        out
    }

    /// Overwrites every value from a flat vector laid out as in [`ParamStore::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), DiffError> {
        if flat.len() != self.total_dim() {
            return Err(DiffError::DimMismatch {
                expected: self.total_dim(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        for v in &mut self.values {
            for (dst, src) in v.iter_mut().zip(&flat[offset..]) {
                *dst = *src;
            }
            offset += v.len();
        }
        Ok(())
    }

    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| ParamRecord {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                values: v.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<ParamRecord>) -> Result<Self, DiffError> {
        let mut store = Self::new();
        for r in records {
            let expected = r.shape[0] * r.shape[1];
            if r.values.len() != expected {
                return Err(DiffError::DimMismatch {
                    expected,
                    found: r.values.len(),
                });
            }
            let value = Array2::from_shape_vec((r.shape[0], r.shape[1]), r.values).expect("length checked above");
            store.insert(r.name, value)?;
        }
        Ok(store)
    }
}

/// Serialized form of one named tensor: shape plus flat row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", array![[1.0]]).unwrap();
        assert!(matches!(
            s.insert("w", array![[2.0]]),
            Err(DiffError::DuplicateParam(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut s = ParamStore::new();
        assert!(s.insert("w", array![[f64::NAN]]).is_err());
    }

    #[test]
    fn flat_layout_follows_insertion_order() {
        let mut s = ParamStore::new();
        s.insert("a", array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        s.insert("b", array![[5.0]]).unwrap();
        assert_eq!(s.total_dim(), 5);
        assert_eq!(s.to_flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        s.set_flat(&[0.0, 0.0, 0.0, 0.0, 9.0]).unwrap();
        assert_eq!(s.get(s.id("b").unwrap())[[0, 0]], 9.0);
        assert!(s.set_flat(&[1.0]).is_err());
    }

    #[test]
    fn records_round_trip() {
        let mut s = ParamStore::new();
        s.insert("a", array![[0.1, -2.5e-300]]).unwrap();
        s.insert("b", array![[1.0 / 3.0], [7.0]]).unwrap();
        let back = ParamStore::from_records(s.to_records()).unwrap();
        assert_eq!(back, s);
    }
}
