//! Dense row-major `f64` tensors and named parameter collections.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the data length and
    /// that every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::domain(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::domain(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value {} at flat index {i}", data[i])));
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for results of arithmetic on already-valid tensors.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::domain("cannot build a tensor from zero rows"));
        };
        let width = first.len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::domain("rows have inconsistent widths"));
        }
        Tensor::new(vec![rows.len(), width], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the leading (batch) dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of values per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Gathers leading-dimension slices in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let w = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::from_parts(shape, data)
    }

    /// Concatenates along the leading dimension.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::domain("nothing to concatenate"))?;
        let tail = &first.shape[1..];
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::domain("concatenated tensors disagree on trailing shape"));
            }
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = rows;
        Ok(Tensor::from_parts(shape, data))
    }

    /// Splits along the leading dimension at `at`.
    pub fn split_rows(&self, at: usize) -> (Tensor, Tensor) {
        let w = self.row_len();
        let mut s1 = self.shape.clone();
        let mut s2 = self.shape.clone();
        s1[0] = at;
        s2[0] = self.shape[0] - at;
        (
            Tensor::from_parts(s1, self.data[..at * w].to_vec()),
            Tensor::from_parts(s2, self.data[at * w..].to_vec()),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|v| v * factor).collect())
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::internal(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Ordered map of named tensors; iteration follows insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    entries: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::internal(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> ParameterSet {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
            .collect();
        ParameterSet { entries }
    }

    /// Checks that both sets hold the same names, in the same order, with equal shapes.
    pub fn check_aligned(&self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::internal(format!(
                "parameter sets differ in size: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::internal(format!(
                    "parameter {ka}{:?} does not align with {kb}{:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &ParameterSet) -> Result<ParameterSet> {
        self.check_aligned(other)?;
        let mut out = ParameterSet::new();
        for ((k, a), (_, b)) in self.entries.iter().zip(&other.entries) {
            out.entries.insert(k.clone(), a.add(b)?);
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> ParameterSet {
        let entries = self.entries.iter().map(|(k, v)| (k.clone(), v.scale(factor))).collect();
        ParameterSet { entries }
    }

    /// `self * a + other * b`, elementwise.
    pub fn combine(&self, a: f64, other: &ParameterSet, b: f64) -> Result<ParameterSet> {
        self.check_aligned(other)?;
        let mut out = ParameterSet::new();
        for ((k, x), (_, y)) in self.entries.iter().zip(&other.entries) {
            let data = x.data().iter().zip(y.data()).map(|(p, q)| p * a + q * b).collect();
            out.entries.insert(k.clone(), Tensor::from_parts(x.shape().to_vec(), data));
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// Flat view of every value, in entry order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            h.update((v.shape().len() as u64).to_le_bytes());
            for d in v.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in v.data() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Prefixes every name with `prefix/`.
    pub fn prefixed(&self, prefix: &str) -> ParameterSet {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (format!("{prefix}/{k}"), v.clone()))
            .collect();
        ParameterSet { entries }
    }

    /// Extracts entries named `prefix/...`, stripping the prefix.
    pub fn strip_prefix(&self, prefix: &str) -> ParameterSet {
        let lead = format!("{prefix}/");
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&lead).map(|s| (s.to_string(), v.clone())))
            .collect();
        ParameterSet { entries }
    }

    pub fn extend(&mut self, other: ParameterSet) -> Result<()> {
        for (k, v) in other.entries {
            self.insert(k, v)?;
        }
        Ok(())
    }
}

impl FromIterator<(String, Tensor)> for ParameterSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParameterSet { entries: iter.into_iter().collect() }
    }
}
