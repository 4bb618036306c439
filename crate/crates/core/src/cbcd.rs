//! Column-wise discrete solver for the code matrix (fast clustering-based
//! batch coordinate descent).
//!
//! For column `k` with the other columns `H'` fixed, the code subproblem is
//! the balanced binary quadratic program
//!
//! ```text
//! max  g'(b) = 2·bᵀQb − qᵀb   s.t.  b ∈ {−1, 1}ⁿ,  bᵀ1 = n mod 2,
//! Q = r·P·Rᵀ − H'·H'ᵀ
//! ```
//!
//! Substituting `b = 2c − 1` and appending a constant coordinate turns it into
//! `max c̃ᵀQ₀c̃` over `c̃ = [c, 1]` with `cᵀ1 = ⌊(n+1)/2⌋`, where
//! `Q₀ = [[8(Q − diag Q), q₀], [q₀ᵀ, 0]]` and `q₀ = −4(Q − diag Q)·1 − q`.
//! With `Q₀ + λI = VᵀV` that is a one-cluster selection problem over the
//! columns of `V`, solved by alternating "take the ⌊(n+1)/2⌋ points most
//! similar to the mean" and "recompute the mean". Similarities to the mean are
//! row sums of `Q₀ + λI` over the current members, which the factorization of
//! `S` and the thin `H'` make `O(n·(p + r))` per iteration.

use std::str::FromStr;

use crate::codes::CodeMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::similarity::LowRankPair;

/// Per-entry classification loss `l(h, f)` coupling codes to classifier outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `(h − f)²`
    #[default]
    Squared,
    /// `max(0, 1 − h·f)²`
    Hinge,
    /// `ln(1 + exp(−h·f))`
    Logistic,
}

impl LossKind {
    pub fn eval<T: Real>(self, h: T, f: T) -> T {
        match self {
            LossKind::Squared => (h - f) * (h - f),
            LossKind::Hinge => {
                let m = T::one() - h * f;
                if m > T::zero() {
                    m * m
                } else {
                    T::zero()
                }
            }
            LossKind::Logistic => {
                // ln(1 + e^z) without overflow for large z.
                let z = -(h * f);
                if z > T::zero() {
                    z + (T::one() + (-z).exp()).ln()
                } else {
                    (T::one() + z.exp()).ln()
                }
            }
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// `qᵢ = (n·ν/2)·[l(1, fᵢ) − l(−1, fᵢ)]`, the linear coefficients of the
/// quantization loss in the code bits.
pub fn linearize_loss<T: Real>(outputs: &[T], loss: LossKind, n: usize, nu: T) -> Vec<T> {
    let scale = T::of_usize(n) * nu / T::of(2.0);
    outputs
        .iter()
        .map(|&f| scale * (loss.eval(T::one(), f) - loss.eval(-T::one(), f)))
        .collect()
}

/// How the diagonal shift `λ` of `Q₀ + λI` is chosen per column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule<T> {
    /// [`psd_bound`]: guaranteed to make `Q₀ + λI` positive semidefinite.
    PsdBound,
    /// [`psd_bound`] multiplied by the given factor.
    ScaledBound(T),
    Fixed(T),
}

/// Upper bound on the spectral radius of `Q₀` from factor norms:
/// `8·n·(r·max‖Pᵢ‖·max‖Rⱼ‖ + r) + ‖q₀‖₂`.
///
/// The first term bounds the absolute row sums of `8(Q − diag Q)`; the border
/// `[[0, q₀], [q₀ᵀ, 0]]` has spectral norm `‖q₀‖₂`.
pub fn psd_bound<T: Real>(pair: &LowRankPair<T>, codes: &CodeMatrix, q0: &[T]) -> T {
    let max_norm = |row: &mut dyn Iterator<Item = (usize, T)>| {
        row.map(|(_, v)| v * v).fold(T::zero(), |a, b| a + b).sqrt()
    };
    let mut max_p = T::zero();
    let mut max_r = T::zero();
    for i in 0..pair.n() {
        max_p = max_p.max(max_norm(&mut pair.p_row(i)));
        max_r = max_r.max(max_norm(&mut pair.r_row(i)));
    }
    psd_bound_from_norms(pair.n(), codes.bits(), max_p, max_r, q0)
}

/// [`psd_bound`] given the largest row norms of `P` and `R`.
pub fn psd_bound_from_norms<T: Real>(n: usize, r: usize, max_p: T, max_r: T, q0: &[T]) -> T {
    let n = T::of_usize(n);
    let r = T::of_usize(r);
    let border = q0.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b).sqrt();
    T::of(8.0) * n * (r * max_p * max_r + r) + border
}

/// Outcome of one column update.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolveReport<T> {
    /// Zero-based column index.
    pub column: usize,
    pub inner_iterations: usize,
    /// Clustering objective of each balanced iterate, offset by the constant
    /// `(K − 1)·λ`: `−c̃ᵀQ₀c̃ / K` with `K = ⌊(n+1)/2⌋ + 1`.
    pub objective_trace: Vec<T>,
    pub changed_bits: usize,
    /// Whether the loop stopped at a fixed point (rather than the iteration cap).
    pub converged: bool,
    pub lambda: T,
}

/// Mutable state for solving the code subproblem column by column.
#[derive(Debug, Clone)]
pub struct CbcdWorkspace<'a, T: Real> {
    pair: &'a LowRankPair<T>,
    codes: CodeMatrix,
    outputs: Option<&'a [T]>,
    q: Vec<T>,
    lambda: LambdaRule<T>,
    nu: T,
    loss: LossKind,
    max_inner: usize,
}

/// The matrices of one column subproblem, held implicitly.
struct ColumnSystem<T> {
    k: usize,
    diag_q: Vec<T>,
    q0: Vec<T>,
}

impl<'a, T: Real> CbcdWorkspace<'a, T> {
    pub fn new(pair: &'a LowRankPair<T>, codes: CodeMatrix) -> Result<Self> {
        if pair.n() != codes.n() {
            return Err(Error::Dimension(format!(
                "factorization has {} rows, codes have {}",
                pair.n(),
                codes.n()
            )));
        }
        let n = codes.n();
        Ok(Self {
            pair,
            codes,
            outputs: None,
            q: vec![T::zero(); n],
            lambda: LambdaRule::PsdBound,
            nu: T::of(1e-4),
            loss: LossKind::Squared,
            max_inner: 50,
        })
    }

    /// Classifier outputs `F(X)` (row-major `n × r`) used to linearize the
    /// quantization loss. Without outputs the linear term is zero.
    pub fn with_outputs(mut self, outputs: &'a [T]) -> Result<Self> {
        if outputs.len() != self.codes.n() * self.codes.bits() {
            return Err(Error::Dimension(format!(
                "outputs have {} entries, expected {}",
                outputs.len(),
                self.codes.n() * self.codes.bits()
            )));
        }
        self.outputs = Some(outputs);
        Ok(self)
    }

    pub fn with_lambda(mut self, rule: LambdaRule<T>) -> Self {
        self.lambda = rule;
        self
    }

    pub fn with_nu(mut self, nu: T) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner.max(1);
        self
    }

    pub fn codes(&self) -> &CodeMatrix {
        &self.codes
    }

    pub fn into_codes(self) -> CodeMatrix {
        self.codes
    }

    pub fn linear_term(&self) -> &[T] {
        &self.q
    }

    /// Replace the linear coefficients `q` used by the next column solve.
    pub fn set_linear_term(&mut self, q: Vec<T>) -> Result<()> {
        if q.len() != self.codes.n() {
            return Err(Error::Dimension(format!(
                "linear term has length {}, expected {}",
                q.len(),
                self.codes.n()
            )));
        }
        self.q = q;
        Ok(())
    }

    /// Recompute `q` from the stored classifier outputs for column `k`.
    pub fn relinearize(&mut self, k: usize) -> Result<()> {
        self.check_column(k)?;
        let n = self.codes.n();
        let r = self.codes.bits();
        self.q = match self.outputs {
            Some(f) => {
                let col: Vec<T> = (0..n).map(|i| f[i * r + k]).collect();
                linearize_loss(&col, self.loss, n, self.nu)
            }
            None => vec![T::zero(); n],
        };
        Ok(())
    }

    fn check_column(&self, k: usize) -> Result<()> {
        if k >= self.codes.bits() {
            return Err(Error::InvalidArgument(format!(
                "column {k} out of range for {} bits",
                self.codes.bits()
            )));
        }
        Ok(())
    }

    /// `H'·(H'ᵀ·c)` where `H'` is the code matrix with column `k` removed and
    /// `c` the indicator of `members`.
    fn codes_gram_sums(&self, k: usize, members: impl Iterator<Item = usize>) -> Vec<T> {
        let r = self.codes.bits();
        let mut col_sums = vec![0i64; r];
        for j in members {
            for (s, &h) in col_sums.iter_mut().zip(self.codes.row(j)) {
                *s += i64::from(h);
            }
        }
        col_sums[k] = 0;
        (0..self.codes.n())
            .map(|i| {
                let dot: i64 = self
                    .codes
                    .row(i)
                    .iter()
                    .zip(&col_sums)
                    .map(|(&h, &s)| i64::from(h) * s)
                    .sum();
                T::of(dot as f64)
            })
            .collect()
    }

    /// `d₀ = Q·c = r·P·(Rᵀc) − H'·(H'ᵀc)` for the indicator `c` of `members`.
    fn gram_sums(&self, k: usize, members: &[bool]) -> Vec<T> {
        let r = T::of_usize(self.codes.bits());
        let rows = || members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i);
        let label_part = self
            .pair
            .p_mul(&self.pair.r_row_sum(rows()))
            .expect("factor dimensions are fixed at construction");
        let code_part = self.codes_gram_sums(k, rows());
        label_part
            .into_iter()
            .zip(code_part)
            .map(|(a, b)| r * a - b)
            .collect()
    }

    fn system(&self, k: usize) -> ColumnSystem<T> {
        let n = self.codes.n();
        let r = T::of_usize(self.codes.bits());
        let others = r - T::one();
        let diag_q: Vec<T> = (0..n).map(|i| r * self.pair.entry(i, i) - others).collect();
        let all = vec![true; n];
        let row_sums = self.gram_sums(k, &all);
        let q0 = row_sums
            .iter()
            .zip(&diag_q)
            .zip(&self.q)
            .map(|((&s, &d), &q)| -T::of(4.0) * (s - d) - q)
            .collect();
        ColumnSystem { k, diag_q, q0 }
    }

    /// `q₀ = −4·(Q − diag Q)·1 − q` for column `k`, using the current `q`.
    pub fn build_q0_border(&self, k: usize) -> Result<Vec<T>> {
        self.check_column(k)?;
        Ok(self.system(k).q0)
    }

    /// `diag(Q)ᵢ = r·(P·Rᵀ)ᵢᵢ − (r − 1)` for any column.
    pub fn q_diagonal(&self) -> Vec<T> {
        let r = T::of_usize(self.codes.bits());
        (0..self.codes.n())
            .map(|i| r * self.pair.entry(i, i) - (r - T::one()))
            .collect()
    }

    fn resolve_lambda(&self, sys: &ColumnSystem<T>) -> T {
        match self.lambda {
            LambdaRule::PsdBound => psd_bound(self.pair, &self.codes, &sys.q0),
            LambdaRule::ScaledBound(f) => f * psd_bound(self.pair, &self.codes, &sys.q0),
            LambdaRule::Fixed(l) => l,
        }
    }

    /// The shift `λ` the current rule selects for column `k`.
    pub fn lambda_for(&self, k: usize) -> Result<T> {
        self.check_column(k)?;
        Ok(self.resolve_lambda(&self.system(k)))
    }

    fn similarities(&self, sys: &ColumnSystem<T>, members: &[bool], lambda: T) -> (Vec<T>, Vec<T>) {
        let d0 = self.gram_sums(sys.k, members);
        let eight = T::of(8.0);
        let sims = (0..d0.len())
            .map(|i| {
                let base = eight * d0[i] + sys.q0[i];
                if members[i] {
                    base - eight * sys.diag_q[i] + lambda
                } else {
                    base
                }
            })
            .collect();
        (sims, d0)
    }

    /// `sim(vᵢ, m) = Σ_{j ∈ V₁} [Q₀ + λI]ᵢⱼ` for `i < n`, where `V₁` holds
    /// `members` plus the constant coordinate.
    pub fn similarity_to_mean(&self, k: usize, members: &[bool], lambda: T) -> Result<Vec<T>> {
        self.check_column(k)?;
        if members.len() != self.codes.n() {
            return Err(Error::Dimension(format!(
                "membership has length {}, expected {}",
                members.len(),
                self.codes.n()
            )));
        }
        let sys = self.system(k);
        Ok(self.similarities(&sys, members, lambda).0)
    }

    /// `−c̃ᵀQ₀c̃ / K` from `d₀ = Q·c`.
    fn clustering_objective(sys: &ColumnSystem<T>, members: &[bool], d0: &[T]) -> T {
        let mut quad = T::zero();
        let mut border = T::zero();
        let mut count = 0usize;
        for (i, _) in members.iter().enumerate().filter(|(_, &m)| m) {
            quad += d0[i] - sys.diag_q[i];
            border += sys.q0[i];
            count += 1;
        }
        let value = T::of(8.0) * quad + T::of(2.0) * border;
        -value / T::of_usize(count + 1)
    }

    /// Update column `k` (zero-based) in place using the current linear term.
    pub fn solve_column(&mut self, k: usize) -> Result<ColumnSolveReport<T>> {
        self.check_column(k)?;
        let n = self.codes.n();
        let initial = self.codes.column(k);

        if n == 1 {
            let b = (-self.q[0]).sign_bit();
            self.codes.set_column(k, &[b])?;
            return Ok(ColumnSolveReport {
                column: k,
                inner_iterations: 0,
                objective_trace: Vec::new(),
                changed_bits: usize::from(b != initial[0]),
                converged: true,
                lambda: T::zero(),
            });
        }

        let sys = self.system(k);
        let lambda = self.resolve_lambda(&sys);
        let target = n.div_ceil(2);
        let mut members: Vec<bool> = initial.iter().map(|&b| b > 0).collect();
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let mut order: Vec<usize> = (0..n).collect();

        let mut best: Option<(T, Vec<bool>)> = None;
        let mut keep_best = |value: T, members: &[bool]| {
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, members.to_vec()));
            }
        };

        while iterations < self.max_inner {
            iterations += 1;
            let (sims, d0) = self.similarities(&sys, &members, lambda);
            if members.iter().filter(|&&m| m).count() == target {
                let value = Self::clustering_objective(&sys, &members, &d0);
                keep_best(value, &members);
                trace.push(value);
            }
            order.sort_unstable_by(|&a, &b| {
                sims[b]
                    .partial_cmp(&sims[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut next = vec![false; n];
            for &i in &order[..target] {
                next[i] = true;
            }
            if next == members {
                converged = true;
                break;
            }
            members = next;
        }
        if !converged {
            let d0 = self.gram_sums(k, &members);
            let value = Self::clustering_objective(&sys, &members, &d0);
            keep_best(value, &members);
            trace.push(value);
        }
        // Without a PSD shift the iteration can move uphill; keep the best
        // balanced iterate. With a PSD shift that is always the last one.
        if let Some((value, best_members)) = best {
            if trace.last().is_some_and(|&last| value < last) {
                members = best_members;
            }
        }

        let b: Vec<i8> = members.iter().map(|&m| if m { 1 } else { -1 }).collect();
        let changed_bits = b.iter().zip(&initial).filter(|(a, c)| a != c).count();
        self.codes.set_column(k, &b)?;
        Ok(ColumnSolveReport {
            column: k,
            inner_iterations: iterations,
            objective_trace: trace,
            changed_bits,
            converged,
            lambda,
        })
    }

    /// One pass over all columns in order, re-linearizing the loss for each.
    pub fn solve_h_subproblem(&mut self) -> Result<Vec<ColumnSolveReport<T>>> {
        (0..self.codes.bits())
            .map(|k| {
                self.relinearize(k)?;
                self.solve_column(k)
            })
            .collect()
    }
}
