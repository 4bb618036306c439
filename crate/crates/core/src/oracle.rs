//! Brute-force references: dense similarity and code-subproblem matrices,
//! exhaustive balanced BQP, the dense objective and a definitional retrieval
//! evaluator. Everything here is deliberately naive and independent of the
//! implicit computations it is used to check.

use nalgebra::DMatrix;

use crate::cbcd::LossKind;
use crate::codes::{CodeMatrix, PackedCodes};
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, MetricReport};
use crate::scalar::Real;
use crate::similarity::LowRankPair;

/// Largest `n` [`exhaustive_bqp`] accepts by default.
pub const EXHAUSTIVE_CAP: usize = 14;

/// Explicit matrices of one column subproblem.
#[derive(Debug, Clone)]
pub struct DenseInstance<T> {
    n: usize,
    /// `Q = r·S − H'H'ᵀ`, row-major.
    q_matrix: Vec<T>,
    q: Vec<T>,
    q0: Vec<T>,
}

/// Row-major `n × n` `P·Rᵀ`, entry by entry.
pub fn dense_similarity<T: Real>(pair: &LowRankPair<T>) -> Vec<T> {
    pair.densify()
}

impl<T: Real> DenseInstance<T> {
    /// Densify the subproblem for column `k` of `codes` with linear term `q`.
    pub fn new(pair: &LowRankPair<T>, codes: &CodeMatrix, k: usize, q: &[T]) -> Result<Self> {
        let n = codes.n();
        let r = codes.bits();
        if pair.n() != n || q.len() != n || k >= r {
            return Err(Error::Dimension(format!(
                "dense instance: pair n={}, codes {}x{}, q len {}, column {}",
                pair.n(),
                n,
                r,
                q.len(),
                k
            )));
        }
        let s = dense_similarity(pair);
        let mut q_matrix = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut hh = 0i64;
                for c in (0..r).filter(|&c| c != k) {
                    hh += i64::from(codes.get(i, c)) * i64::from(codes.get(j, c));
                }
                q_matrix[i * n + j] = T::of_usize(r) * s[i * n + j] - T::of(hh as f64);
            }
        }
        Ok(Self::from_parts(n, q_matrix, q.to_vec()))
    }

    /// Instance from an explicit symmetric `Q` and linear term `q`.
    pub fn from_parts(n: usize, q_matrix: Vec<T>, q: Vec<T>) -> Self {
        assert_eq!(q_matrix.len(), n * n);
        assert_eq!(q.len(), n);
        let q0 = (0..n)
            .map(|i| {
                let off: T = (0..n).filter(|&j| j != i).map(|j| q_matrix[j * n + i]).sum();
                -T::of(4.0) * off - q[i]
            })
            .collect();
        Self { n, q_matrix, q, q0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q_matrix(&self) -> &[T] {
        &self.q_matrix
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn q0(&self) -> &[T] {
        &self.q0
    }

    /// The `(n+1) × (n+1)` matrix `[[8(Q − diag Q), q₀], [q₀ᵀ, 0]]`.
    pub fn q0_matrix(&self) -> DMatrix<T> {
        let n = self.n;
        DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) if i == j => T::zero(),
            (true, true) => T::of(8.0) * self.q_matrix[i * n + j],
            (true, false) => self.q0[i],
            (false, true) => self.q0[j],
            (false, false) => T::zero(),
        })
    }

    /// `g'(b) = 2·bᵀQb − qᵀb`.
    pub fn g_prime(&self, b: &[i8]) -> T {
        let n = self.n;
        let mut quad = T::zero();
        for i in 0..n {
            for j in 0..n {
                quad += T::of(f64::from(b[i]) * f64::from(b[j])) * self.q_matrix[i * n + j];
            }
        }
        let lin: T = (0..n).map(|i| self.q[i] * T::of(f64::from(b[i]))).sum();
        T::of(2.0) * quad - lin
    }

    /// `c̃ᵀQ₀c̃` with `c̃ = [(b + 1)/2, 1]`.
    pub fn lifted_objective(&self, b: &[i8]) -> T {
        let m = self.q0_matrix();
        let c: Vec<T> = b
            .iter()
            .map(|&v| if v > 0 { T::one() } else { T::zero() })
            .chain(std::iter::once(T::one()))
            .collect();
        let mut acc = T::zero();
        for i in 0..=self.n {
            for j in 0..=self.n {
                acc += c[i] * m[(i, j)] * c[j];
            }
        }
        acc
    }

    /// `Σ_{j ∈ V₁} [Q₀ + λI]ᵢⱼ` for `i < n`, with `V₁` = `members` plus the
    /// constant coordinate.
    pub fn shifted_row_sums(&self, members: &[bool], lambda: T) -> Vec<T> {
        let mut m = self.q0_matrix();
        for i in 0..=self.n {
            m[(i, i)] += lambda;
        }
        (0..self.n)
            .map(|i| {
                let inner: T = (0..self.n).filter(|&j| members[j]).map(|j| m[(i, j)]).sum();
                inner + m[(i, self.n)]
            })
            .collect()
    }
}

/// Exact maximizer of `g'` over all `b ∈ {−1, 1}ⁿ` (or only those with
/// `bᵀ1 = n mod 2` when `balanced`). Ties go to the lexicographically
/// smallest `b` with `−1 < +1`.
pub fn exhaustive_bqp<T: Real>(inst: &DenseInstance<T>, balanced: bool) -> Result<(Vec<i8>, T)> {
    exhaustive_bqp_with_cap(inst, balanced, EXHAUSTIVE_CAP)
}

pub fn exhaustive_bqp_with_cap<T: Real>(
    inst: &DenseInstance<T>,
    balanced: bool,
    cap: usize,
) -> Result<(Vec<i8>, T)> {
    let n = inst.n;
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let parity = (n % 2) as i64;
    let mut best: Option<(Vec<i8>, T)> = None;
    let mut b = vec![-1i8; n];
    // Mask order with b[0] as the most significant bit is lexicographic order.
    for mask in 0u64..(1u64 << n) {
        for (i, v) in b.iter_mut().enumerate() {
            *v = if mask >> (n - 1 - i) & 1 == 1 { 1 } else { -1 };
        }
        if balanced && b.iter().map(|&v| i64::from(v)).sum::<i64>() != parity {
            continue;
        }
        let value = inst.g_prime(&b);
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((b.clone(), value));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no feasible sign vector".into()))
}

/// `‖r·S − HHᵀ‖²_F + n·ν·Σᵢₖ l(hᵢₖ, fₖ(xᵢ))` with `S` given densely.
pub fn dense_objective<T: Real>(
    codes: &CodeMatrix,
    s: &[T],
    nu: T,
    outputs: Option<&[T]>,
    loss: LossKind,
) -> Result<T> {
    let n = codes.n();
    let r = codes.bits();
    if s.len() != n * n || outputs.is_some_and(|f| f.len() != n * r) {
        return Err(Error::Dimension("dense objective operands disagree".into()));
    }
    let mut frob = T::zero();
    for i in 0..n {
        for j in 0..n {
            let e = T::of_usize(r) * s[i * n + j] - T::of(codes.inner_product(i, j) as f64);
            frob += e * e;
        }
    }
    let quant = match outputs {
        Some(f) => (0..n * r)
            .map(|idx| loss.eval(T::of(f64::from(codes.as_slice()[idx])), f[idx]))
            .sum(),
        None => T::zero(),
    };
    Ok(frob + T::of_usize(n) * nu * quant)
}

/// Independent re-implementation of [`crate::eval::evaluate`]: unpacked
/// codes, element-wise distances and a full sort per query.
pub fn definitional_retrieval(
    db: &PackedCodes,
    queries: &PackedCodes,
    truth: &GroundTruth,
    cutoff: Option<usize>,
    ks: &[usize],
) -> Result<MetricReport> {
    if db.bits() != queries.bits()
        || truth.database().n() != db.n()
        || truth.queries().n() != queries.n()
    {
        return Err(Error::Dimension("definitional retrieval operands disagree".into()));
    }
    let r = db.bits();
    let dbm = db.unpack();
    let qm = queries.unpack();
    let n = dbm.n();
    let nq = qm.n();

    let mut ap_sum = 0.0;
    let mut r2_sum = 0.0;
    let mut topk_sums = vec![0.0; ks.len()];
    let mut pooled_retrieved = vec![0u64; r + 1];
    let mut pooled_hits = vec![0u64; r + 1];
    for qi in 0..nq {
        let mut ranked: Vec<(usize, usize)> = (0..n)
            .map(|i| {
                let d = qm.row(qi).iter().zip(dbm.row(i)).filter(|(a, b)| a != b).count();
                (d, i)
            })
            .collect();
        ranked.sort();
        let rel = |i: usize| {
            truth
                .queries()
                .labels(qi)
                .iter()
                .any(|l| truth.database().labels(i).contains(l))
        };

        let limit = cutoff.unwrap_or(n).min(n);
        let mut hits = 0usize;
        let mut precisions = 0.0;
        for (rank, &(_, i)) in ranked[..limit].iter().enumerate() {
            if rel(i) {
                hits += 1;
                precisions += hits as f64 / (rank + 1) as f64;
            }
        }
        ap_sum += if hits == 0 { 0.0 } else { precisions / hits as f64 };

        let within: Vec<usize> = ranked.iter().filter(|(d, _)| *d <= 2).map(|&(_, i)| i).collect();
        r2_sum += if within.is_empty() {
            0.0
        } else {
            within.iter().filter(|&&i| rel(i)).count() as f64 / within.len() as f64
        };

        for (slot, &k) in ks.iter().enumerate() {
            let k = k.min(n).max(1);
            topk_sums[slot] += ranked[..k].iter().filter(|&&(_, i)| rel(i)).count() as f64 / k as f64;
        }

        for &(d, i) in &ranked {
            pooled_retrieved[d] += 1;
            if rel(i) {
                pooled_hits[d] += 1;
            }
        }
    }
    let total: u64 = pooled_hits.iter().sum();
    let mut pr_curve = Vec::with_capacity(r + 1);
    let (mut ret, mut hit) = (0u64, 0u64);
    for d in 0..=r {
        ret += pooled_retrieved[d];
        hit += pooled_hits[d];
        pr_curve.push((
            if total == 0 { 0.0 } else { hit as f64 / total as f64 },
            if ret == 0 { 0.0 } else { hit as f64 / ret as f64 },
        ));
    }
    Ok(MetricReport {
        map: ap_sum / nq as f64,
        precision_at_radius2: r2_sum / nq as f64,
        topk_precision: ks.iter().zip(topk_sums).map(|(&k, s)| (k, s / nq as f64)).collect(),
        pr_curve,
    })
}
