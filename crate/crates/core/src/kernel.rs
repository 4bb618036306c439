//! Kernel hash functions `hₖ(x) = sgn(wₖᵀ k(x))` over centered RBF features
//! against a set of anchors, the closed-form regression fit of `W`, and the
//! spectral initialization of `W` and `H`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codes::CodeMatrix;
use crate::dataio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::similarity::LowRankPair;

/// Number of (sample, anchor) pairs used to pick the bandwidth automatically.
const BANDWIDTH_SAMPLE_PAIRS: usize = 1000;

/// RBF bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Mean sample-to-anchor distance over a seeded sample of pairs.
    Auto,
    Fixed(f64),
}

/// Anchors, bandwidth and centering offsets: everything needed to map raw
/// features to `k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap<T: Real> {
    /// `m × d`.
    anchors: DMatrix<T>,
    sigma: T,
    /// Training-set mean of `φ(·, anchor_j)` for each anchor.
    centering: Vec<T>,
}

/// A fitted kernel hash function.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel<T: Real> {
    pub map: KernelMap<T>,
    /// `m × r`.
    pub weights: DMatrix<T>,
    pub ridge: T,
}

/// Result of the spectral initialization.
#[derive(Debug, Clone)]
pub struct SpectralInit<T: Real> {
    /// `m × r`.
    pub weights: DMatrix<T>,
    pub codes: CodeMatrix,
    /// Leading generalized eigenvalue for each bit.
    pub eigenvalues: Vec<T>,
}

fn squared_distance<T: Real>(x: &[f32], anchors: &DMatrix<T>, j: usize) -> T {
    x.iter()
        .enumerate()
        .map(|(c, &v)| {
            let diff = T::of(f64::from(v)) - anchors[(j, c)];
            diff * diff
        })
        .sum()
}

impl<T: Real> KernelMap<T> {
    pub fn from_parts(anchors: DMatrix<T>, sigma: T, centering: Vec<T>) -> Result<Self> {
        if anchors.nrows() == 0 || anchors.ncols() == 0 {
            return Err(Error::InvalidArgument("kernel map needs at least one anchor".into()));
        }
        if centering.len() != anchors.nrows() {
            return Err(Error::Dimension(format!(
                "{} centering offsets for {} anchors",
                centering.len(),
                anchors.nrows()
            )));
        }
        if !(sigma > T::zero()) {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        Ok(Self {
            anchors,
            sigma,
            centering,
        })
    }

    pub fn anchors(&self) -> &DMatrix<T> {
        &self.anchors
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn centering(&self) -> &[T] {
        &self.centering
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.ncols()
    }

    /// Uncentered `φ(xᵢ, anchor_j) = exp(−‖xᵢ − anchor_j‖² / (2σ²))`, `n × m`.
    fn raw_features(&self, x: &FeatureMatrix) -> Result<DMatrix<T>> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "features have dimension {}, anchors have {}",
                x.dim(),
                self.dim()
            )));
        }
        let m = self.num_anchors();
        let denom = T::of(2.0) * self.sigma * self.sigma;
        let mut rows = vec![T::zero(); x.n() * m];
        rows.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
            let xi = x.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                *o = (-squared_distance(xi, &self.anchors, j) / denom).exp();
            }
        });
        Ok(DMatrix::from_row_slice(x.n(), m, &rows))
    }

    /// Centered kernel features `K(X)`, `n × m`.
    pub fn features(&self, x: &FeatureMatrix) -> Result<DMatrix<T>> {
        let mut k = self.raw_features(x)?;
        for (j, mut col) in k.column_iter_mut().enumerate() {
            let c = self.centering[j];
            col.iter_mut().for_each(|v| *v -= c);
        }
        Ok(k)
    }
}

/// Draw `m` anchors from `x` without replacement, pick the bandwidth, and
/// return the map with the centered training features.
pub fn fit_kernel_map<T: Real>(
    x: &FeatureMatrix,
    m: usize,
    bandwidth: Bandwidth,
    seed: u64,
) -> Result<(KernelMap<T>, DMatrix<T>)> {
    let n = x.n();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= anchors <= samples, got {m} anchors for {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    let d = x.dim();
    let anchors = DMatrix::from_fn(m, d, |j, c| T::of(f64::from(x.row(picked[j])[c])));

    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {s}")));
            }
            T::of(s)
        }
        Bandwidth::Auto => {
            let mut total = T::zero();
            for _ in 0..BANDWIDTH_SAMPLE_PAIRS {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..m);
                total += squared_distance(x.row(i), &anchors, j).sqrt();
            }
            let mean = total / T::of_usize(BANDWIDTH_SAMPLE_PAIRS);
            if !(mean > T::zero()) {
                return Err(Error::InvalidArgument(
                    "features have zero variance; cannot pick a bandwidth".into(),
                ));
            }
            mean
        }
    };

    let mut map = KernelMap {
        anchors,
        sigma,
        centering: vec![T::zero(); m],
    };
    let mut k = map.raw_features(x)?;
    let inv_n = T::one() / T::of_usize(n);
    for (j, mut col) in k.column_iter_mut().enumerate() {
        let mean = col.iter().copied().sum::<T>() * inv_n;
        map.centering[j] = mean;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    Ok((map, k))
}

fn codes_matrix<T: Real>(codes: &CodeMatrix) -> DMatrix<T> {
    DMatrix::from_fn(codes.n(), codes.bits(), |i, k| T::of(f64::from(codes.get(i, k))))
}

/// Solve `(KᵀK + ridge·I)·W = KᵀH`; falls back to an eigenvalue
/// pseudo-inverse when the system is singular.
pub fn solve_regression<T: Real>(k: &DMatrix<T>, codes: &CodeMatrix, ridge: T) -> Result<DMatrix<T>> {
    if k.nrows() != codes.n() {
        return Err(Error::Dimension(format!(
            "kernel features have {} rows, codes have {}",
            k.nrows(),
            codes.n()
        )));
    }
    if ridge < T::zero() {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    let h = codes_matrix::<T>(codes);
    let mut gram = k.tr_mul(k);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = k.tr_mul(&h);
    if let Some(chol) = Cholesky::new(gram.clone()) {
        let w = chol.solve(&rhs);
        if w.iter().all(|v| v.is_finite()) {
            return Ok(w);
        }
    }
    pseudo_solve(gram, &rhs)
}

fn pseudo_solve<T: Real>(gram: DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v.magnitude()));
    let tol = top * T::of_usize(m) * T::default_epsilon();
    let mut proj = eig.eigenvectors.tr_mul(rhs);
    for (i, mut row) in proj.row_iter_mut().enumerate() {
        let lam = eig.eigenvalues[i];
        let inv = if lam > tol { T::one() / lam } else { T::zero() };
        row.iter_mut().for_each(|v| *v *= inv);
    }
    let w = &eig.eigenvectors * proj;
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::Numerical("regression solve produced non-finite weights".into()))
    }
}

/// `Kᵀ·F` where `F` is one of the sparse factors given row by row.
fn kernel_times_factor<'p, T: Real, I>(k: &DMatrix<T>, cols: usize, row: impl Fn(usize) -> I) -> DMatrix<T>
where
    I: Iterator<Item = (usize, T)> + 'p,
{
    let m = k.ncols();
    let mut out = DMatrix::zeros(m, cols);
    for i in 0..k.nrows() {
        for (c, v) in row(i) {
            for a in 0..m {
                out[(a, c)] += k[(i, a)] * v;
            }
        }
    }
    out
}

/// Per-bit generalized eigenproblem initialization.
///
/// For each bit `k`, maximize `(Kw)ᵀ(P·Rᵀ − H_k·H_kᵀ)(Kw)` subject to
/// `‖Kw‖² = n`, where `H_k` holds the codes of the previous bits. The
/// generalized problem `A·w = μ·B·w` with `B = KᵀK + εI`
/// (`ε = 1e-6·tr(KᵀK)/m`) is reduced with the Cholesky factor of `B` to a
/// standard symmetric problem. Products with `P·Rᵀ` go through the factors.
pub fn spectral_init<T: Real>(k: &DMatrix<T>, pair: &LowRankPair<T>, r: usize) -> Result<SpectralInit<T>> {
    let n = k.nrows();
    let m = k.ncols();
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one bit".into()));
    }
    if pair.n() != n {
        return Err(Error::Dimension(format!(
            "kernel features have {n} rows, factorization has {}",
            pair.n()
        )));
    }
    let kp = kernel_times_factor(k, pair.rank(), |i| pair.p_row(i));
    let kr = kernel_times_factor(k, pair.rank(), |i| pair.r_row(i));
    let a = &kp * kr.transpose();
    let a = (&a + a.transpose()) * T::of(0.5);

    let mut b = k.tr_mul(k);
    let eps = T::of(1e-6) * b.trace() / T::of_usize(m);
    for i in 0..m {
        b[(i, i)] += eps;
    }
    let chol = Cholesky::new(b).ok_or_else(|| {
        Error::Numerical("kernel Gram matrix is not positive definite after regularization".into())
    })?;
    let l = chol.l();
    // C = L⁻¹·A·L⁻ᵀ
    let la = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&la.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    c = (&c + c.transpose()) * T::of(0.5);

    let lt = l.transpose();
    let mut weights = DMatrix::zeros(m, r);
    let mut values = vec![0i8; n * r];
    let mut eigenvalues = Vec::with_capacity(r);
    for bit in 0..r {
        let eig = SymmetricEigen::new(c.clone());
        let (top, &mu) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &T)>, (i, v)| match best {
                Some((_, bv)) if *bv >= *v => best,
                _ => Some((i, v)),
            })
            .ok_or_else(|| Error::Numerical("empty eigendecomposition".into()))?;
        let y = eig.eigenvectors.column(top).clone_owned();
        let mut w = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let kw = k * &w;
        let norm2 = kw.norm_squared();
        if !(norm2 > T::zero()) || !norm2.is_finite() {
            return Err(Error::Numerical(format!("bit {bit}: zero eigenvector")));
        }
        let mut scale = (T::of_usize(n) / norm2).sqrt();
        if let Some(first) = w.iter().find(|v| **v != T::zero()) {
            if *first < T::zero() {
                scale = -scale;
            }
        }
        w *= scale;
        let kw = kw * scale;
        weights.set_column(bit, &w);
        eigenvalues.push(mu);

        let h: Vec<i8> = kw.iter().map(|v| v.sign_bit()).collect();
        for (i, &hv) in h.iter().enumerate() {
            values[i * r + bit] = hv;
        }
        // Deflate: C ← C − (L⁻¹Kᵀh)(L⁻¹Kᵀh)ᵀ.
        let hv = nalgebra::DVector::from_iterator(n, h.iter().map(|&v| T::of(f64::from(v))));
        let kth = k.tr_mul(&hv);
        let z = l
            .solve_lower_triangular(&kth)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        c -= &z * z.transpose();
    }
    Ok(SpectralInit {
        weights,
        codes: CodeMatrix::new(n, r, values)?,
        eigenvalues,
    })
}

impl<T: Real> KernelModel<T> {
    pub fn new(map: KernelMap<T>, weights: DMatrix<T>, ridge: T) -> Result<Self> {
        if weights.nrows() != map.num_anchors() || weights.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "weights are {}x{}, expected {} rows",
                weights.nrows(),
                weights.ncols(),
                map.num_anchors()
            )));
        }
        Ok(Self { map, weights, ridge })
    }

    pub fn bits(&self) -> usize {
        self.weights.ncols()
    }

    /// Classifier outputs `F = K(X)·W` and codes `sgn(F)`.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<(DMatrix<T>, CodeMatrix)> {
        let k = self.map.features(x)?;
        let f = k * &self.weights;
        let codes = codes_from_outputs(&f)?;
        Ok((f, codes))
    }
}

/// `sgn` of an `n × r` output matrix with `sgn(0) = +1`.
pub fn codes_from_outputs<T: Real>(f: &DMatrix<T>) -> Result<CodeMatrix> {
    let (n, r) = f.shape();
    let values = (0..n)
        .flat_map(|i| (0..r).map(move |k| f[(i, k)].sign_bit()))
        .collect();
    CodeMatrix::new(n, r, values)
}

/// Row-major copy of an `n × r` output matrix.
pub fn row_major<T: Real>(f: &DMatrix<T>) -> Vec<T> {
    let (n, r) = f.shape();
    (0..n).flat_map(|i| (0..r).map(move |k| f[(i, k)])).collect()
}

#[allow(dead_code)]
type DynMatrix<T> = nalgebra::OMatrix<T, Dyn, Dyn>;
