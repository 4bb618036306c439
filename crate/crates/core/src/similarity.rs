//! Asymmetric low-rank factorization of the label similarity matrix.
//!
//! With `Y` the `n × l` label indicator matrix, `P = [a·Y, 1]` and
//! `R = [Y, -1]` (where `a = similar_value + 1`) satisfy
//! `(P·Rᵀ)ᵢⱼ = a·|labels(i) ∩ labels(j)| - 1`. For single-label data this is
//! exactly `S`: `similar_value` for pairs sharing the label, `-1` otherwise.
//! The factors are stored as sparse rows so `S` is never materialized.

use crate::error::{Error, Result};
use crate::scalar::Exact;

/// Per-sample label sets over `classes` distinct class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<Vec<u32>>,
    classes: usize,
}

impl LabelVector {
    /// Build from per-sample label sets. Each set is sorted and deduplicated.
    /// When `classes` is `None` it is taken as `max id + 1`.
    pub fn new(mut labels: Vec<Vec<u32>>, classes: Option<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, set) in labels.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidArgument(format!("sample {i} has no label")));
            }
            set.sort_unstable();
            set.dedup();
        }
        let max_id = labels.iter().flat_map(|s| s.last()).copied().max().unwrap() as usize;
        let classes = classes.unwrap_or(max_id + 1);
        if max_id >= classes {
            return Err(Error::InvalidArgument(format!(
                "label id {max_id} not below class count {classes}"
            )));
        }
        Ok(Self { labels, classes })
    }

    /// One label per sample.
    pub fn single(labels: &[u32]) -> Result<Self> {
        Self::new(labels.iter().map(|&l| vec![l]).collect(), None)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.iter().any(|s| s.len() > 1)
    }

    /// Number of labels samples `i` and `j` have in common.
    pub fn shared(&self, i: usize, j: usize) -> usize {
        shared_labels(&self.labels[i], &self.labels[j])
    }

    /// Labels of the selected rows, keeping the class count.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for &i in rows {
            let set = self
                .labels
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("row {i} out of range")))?;
            out.push(set.clone());
        }
        Self::new(out, Some(self.classes))
    }
}

/// Size of the intersection of two sorted label sets.
pub fn shared_labels(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Sparse factors `P`, `R` (both `n × (l+1)`) with `S ≈ P·Rᵀ`.
///
/// `P` and `R` share their sparsity pattern, so one CSR index structure is
/// stored with two value arrays. Column indices within a row are ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPair<T> {
    n: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    p_values: Vec<T>,
    r_values: Vec<T>,
    similar_value: T,
}

/// Build `P = [(similar_value + 1)·Y, 1]`, `R = [Y, -1]` from labels.
pub fn factorize_labels<T: Exact>(labels: &LabelVector, similar_value: T) -> Result<LowRankPair<T>> {
    if labels.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(similar_value > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "similar value must be positive, got {similar_value:?}"
        )));
    }
    let weight = similar_value + T::one();
    let l = labels.classes();
    let nnz: usize = labels.labels.iter().map(|s| s.len() + 1).sum();
    let mut indptr = Vec::with_capacity(labels.n() + 1);
    let mut indices = Vec::with_capacity(nnz);
    let mut p_values = Vec::with_capacity(nnz);
    let mut r_values = Vec::with_capacity(nnz);
    indptr.push(0);
    for set in &labels.labels {
        for &c in set {
            indices.push(c as usize);
            p_values.push(weight);
            r_values.push(T::one());
        }
        indices.push(l);
        p_values.push(T::one());
        r_values.push(T::zero() - T::one());
        indptr.push(indices.len());
    }
    Ok(LowRankPair {
        n: labels.n(),
        cols: l + 1,
        indptr,
        indices,
        p_values,
        r_values,
        similar_value,
    })
}

impl<T: Exact> LowRankPair<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of factor columns, `l + 1`.
    pub fn rank(&self) -> usize {
        self.cols
    }

    pub fn similar_value(&self) -> T {
        self.similar_value
    }

    /// Average number of nonzeros per row of `P` (equal for `R`).
    pub fn avg_nnz(&self) -> f64 {
        self.indices.len() as f64 / self.n as f64
    }

    /// Nonzeros of row `i` of `P` as `(column, value)`.
    pub fn p_row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.p_values[span].iter().copied())
    }

    /// Nonzeros of row `i` of `R` as `(column, value)`.
    pub fn r_row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.r_values[span].iter().copied())
    }

    /// `(P·Rᵀ)ᵢⱼ` without densifying.
    pub fn entry(&self, i: usize, j: usize) -> T {
        let (ai, bi) = (self.indptr[i], self.indptr[i + 1]);
        let (aj, bj) = (self.indptr[j], self.indptr[j + 1]);
        let (mut x, mut y) = (ai, aj);
        let mut acc = T::zero();
        while x < bi && y < bj {
            match self.indices[x].cmp(&self.indices[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    acc = acc + self.p_values[x] * self.r_values[y];
                    x += 1;
                    y += 1;
                }
            }
        }
        acc
    }

    fn check_len(&self, v: &[T], expected: usize, what: &str) -> Result<()> {
        if v.len() != expected {
            return Err(Error::Dimension(format!(
                "{what}: vector has length {}, expected {expected}",
                v.len()
            )));
        }
        Ok(())
    }

    /// `Rᵀ·v` (length `l + 1`).
    pub fn r_transpose_mul(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v, self.n, "Rᵀv")?;
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (c, rv) in self.r_row(i) {
                out[c] = out[c] + rv * vi;
            }
        }
        Ok(out)
    }

    /// Sum of the rows of `R` at `rows`, i.e. `Rᵀ·c` for an indicator `c`.
    pub fn r_row_sum(&self, rows: impl IntoIterator<Item = usize>) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in rows {
            for (c, rv) in self.r_row(i) {
                out[c] = out[c] + rv;
            }
        }
        out
    }

    /// `P·s` for `s` of length `l + 1`.
    pub fn p_mul(&self, s: &[T]) -> Result<Vec<T>> {
        self.check_len(s, self.cols, "Ps")?;
        Ok((0..self.n)
            .map(|i| self.p_row(i).fold(T::zero(), |acc, (c, pv)| acc + pv * s[c]))
            .collect())
    }

    /// `P·(Rᵀ·v)` in `O(n·p)`.
    pub fn left_multiply(&self, v: &[T]) -> Result<Vec<T>> {
        let s = self.r_transpose_mul(v)?;
        self.p_mul(&s)
    }

    /// Dense row-major `P·Rᵀ`; only for small instances.
    pub fn densify(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                out[i * self.n + j] = self.entry(i, j);
            }
        }
        out
    }
}
