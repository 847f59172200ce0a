//! Batch representation on the unit sphere, cosine similarity kernel and
//! anchor/positive/noise index bookkeeping.
//!
//! Indices are 0-based throughout.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, dot, norm};

/// Tolerance on `| ||z_i|| - 1 |` for rows of an [`EmbeddingMatrix`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Borrowed row-major `n x d` view with no unit-norm requirement.
///
/// Gradients and finite differences work on raw coordinates, so the
/// differentiable entry points accept this view rather than an
/// [`EmbeddingMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    d: usize,
    data: &'a [f64],
}

impl<'a> Rows<'a> {
    pub fn new(d: usize, data: &'a [f64]) -> Result<Self> {
        if d == 0 || data.len() % d != 0 {
            return Err(Error::Shape {
                expected: format!("a multiple of d = {d}"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { d, data })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }
}

/// `n` unit vectors in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Validates shape (`n >= 2`, `d >= 1`) and that every row is unit-norm.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(n, d, values.len())?;
        for (i, row) in values.chunks_exact(d).enumerate() {
            let r = norm(row);
            if !(abs(r - 1.0) <= UNIT_NORM_TOLERANCE) {
                return Err(Error::NonUnitRow { row: i, norm: r });
            }
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Shape {
                    expected: format!("row {i} of length {d}"),
                    found: format!("length {}", r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows {
            d: self.d,
            data: &self.values,
        }
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &j in perm {
            values.extend_from_slice(self.row(j));
        }
        Self {
            n: self.n,
            d: self.d,
            values,
        }
    }

    pub fn similarity(&self) -> SimilarityMatrix {
        SimilarityMatrix::gram(self.rows())
    }
}

fn check_shape(n: usize, d: usize, len: usize) -> Result<()> {
    if n < 2 || d < 1 || n * d != len {
        return Err(Error::Shape {
            expected: format!("n >= 2, d >= 1 and n*d values (n = {n}, d = {d})"),
            found: format!("{len} values"),
        });
    }
    Ok(())
}

/// Scales each row of a raw `n x d` array onto the unit sphere.
pub fn renormalize_rows(n: usize, d: usize, mut values: Vec<f64>) -> Result<EmbeddingMatrix> {
    check_shape(n, d, values.len())?;
    for (i, row) in values.chunks_exact_mut(d).enumerate() {
        project_row(row).map_err(|_| Error::ZeroRow { row: i })?;
    }
    Ok(EmbeddingMatrix { n, d, values })
}

/// In-place projection of one vector onto the unit sphere.
pub fn project_row(row: &mut [f64]) -> Result<()> {
    let r = norm(row);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::ZeroRow { row: 0 });
    }
    // Already-unit rows are left bit-identical.
    if r != 1.0 {
        row.iter_mut().for_each(|v| *v /= r);
    }
    Ok(())
}

/// Class ids for a batch; any `u32` values are accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelVector {
    labels: Vec<u32>,
}

impl LabelVector {
    pub fn new(labels: Vec<u32>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<u32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            labels: perm.iter().map(|&j| self.labels[j]).collect(),
        }
    }
}

impl From<Vec<u32>> for LabelVector {
    fn from(labels: Vec<u32>) -> Self {
        Self::new(labels)
    }
}

/// Full `n x n` matrix of pairwise dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Pairwise dot products of raw rows. Only cosine similarities when the rows are unit-norm.
    pub fn gram(rows: Rows<'_>) -> Self {
        let n = rows.n();
        let mut values = alloc::vec![0.0; n * n];
        for i in 0..n {
            let zi = rows.row(i);
            for j in i..n {
                let s = dot(zi, rows.row(j));
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        Self { n, values }
    }

    /// Builds a matrix from explicit entries (useful for hand-constructed cases).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape {
                expected: format!("{n}x{n} entries"),
                found: format!("{}", values.len()),
            });
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Cosine similarity of every pair of rows, checking that each row is unit-norm.
pub fn cosine_similarity_matrix(rows: Rows<'_>) -> Result<SimilarityMatrix> {
    for i in 0..rows.n() {
        let r = norm(rows.row(i));
        if !(abs(r - 1.0) <= UNIT_NORM_TOLERANCE) {
            return Err(Error::NonUnitRow { row: i, norm: r });
        }
    }
    Ok(SimilarityMatrix::gram(rows))
}

/// Roles of every index relative to one anchor `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPartition {
    anchor: usize,
    positives: Vec<usize>,
    noise: Vec<usize>,
    universe: usize,
}

impl IndexPartition {
    /// Partition of `0..n` with the given anchor and positives; noise is the complement.
    pub fn new(n: usize, anchor: usize, positives: Vec<usize>) -> Result<Self> {
        if anchor >= n {
            return Err(Error::IndexOutOfRange { index: anchor, len: n });
        }
        let mut is_pos = alloc::vec![false; n];
        for &p in &positives {
            if p >= n {
                return Err(Error::IndexOutOfRange { index: p, len: n });
            }
            if p == anchor || is_pos[p] {
                return Err(Error::invalid(
                    "positives",
                    format!("index {p} repeated or equal to the anchor"),
                ));
            }
            is_pos[p] = true;
        }
        let noise = (0..n).filter(|&i| i != anchor && !is_pos[i]).collect();
        Ok(Self {
            anchor,
            positives,
            noise,
            universe: n,
        })
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn noise(&self) -> &[usize] {
        &self.noise
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.positives.contains(&i)
    }

    /// Target indices `T = P ∪ {S}`, anchor first.
    pub fn targets(&self) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.positives.len() + 1);
        t.push(self.anchor);
        t.extend_from_slice(&self.positives);
        t
    }

    /// The same target set viewed from positive `p`: `p` becomes the anchor, `S` a positive.
    pub fn swap_anchor(&self, p: usize) -> Result<Self> {
        if !self.is_positive(p) {
            return Err(Error::invalid("p", format!("{p} is not a positive of the partition")));
        }
        let positives = self
            .targets()
            .into_iter()
            .filter(|&i| i != p)
            .collect::<Vec<_>>();
        Self::new(self.universe, p, positives)
    }

    pub(crate) fn require_positive(&self, p: usize) -> Result<()> {
        if self.is_positive(p) {
            Ok(())
        } else {
            Err(Error::invalid("p", format!("{p} is not a positive of anchor {}", self.anchor)))
        }
    }

    pub(crate) fn require_noise(&self) -> Result<()> {
        if self.noise.is_empty() {
            Err(Error::EmptyNoise { anchor: self.anchor })
        } else {
            Ok(())
        }
    }
}

/// Positives are the other members of the anchor's class; everything else is noise.
pub fn partition_for_anchor(labels: &LabelVector, anchor: usize) -> Result<IndexPartition> {
    let n = labels.len();
    if anchor >= n {
        return Err(Error::IndexOutOfRange { index: anchor, len: n });
    }
    let y = labels.get(anchor);
    let mut positives = Vec::new();
    let mut noise = Vec::new();
    for i in (0..n).filter(|&i| i != anchor) {
        if labels.get(i) == y {
            positives.push(i);
        } else {
            noise.push(i);
        }
    }
    if noise.is_empty() {
        return Err(Error::EmptyNoise { anchor });
    }
    Ok(IndexPartition {
        anchor,
        positives,
        noise,
        universe: n,
    })
}

/// Softmax temperature `τ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(Error::invalid("temperature", format!("{tau} is not a positive finite number")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}
