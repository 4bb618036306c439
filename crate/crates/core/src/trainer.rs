//! Alternating optimization: spectral initialization, then rounds of a code
//! pass (column-wise discrete solver) followed by a kernel regression fit.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cbcd::{CbcdWorkspace, LambdaRule, LossKind};
use crate::codes::CodeMatrix;
use crate::dataio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::kernel::{codes_from_outputs, fit_kernel_map, row_major, solve_regression, spectral_init, Bandwidth, KernelModel};
use crate::scalar::Real;
use crate::similarity::{factorize_labels, LabelVector, LowRankPair};

/// Pairs sampled for the similarity-loss estimate.
pub const SIMILARITY_SAMPLE_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub bits: usize,
    /// Outer rounds; 0 returns the initialization.
    pub iters: usize,
    pub nu: f64,
    /// Number of anchors; `None` means `min(1000, n)`.
    pub anchors: Option<usize>,
    pub bandwidth: Bandwidth,
    pub similar_value: f64,
    /// Probability of flipping each regression target bit, in `[0, 0.5)`.
    pub disturb_alpha: f64,
    pub ridge: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Diagonal shift for the code solver. Defaults to `Fixed(0)`: the
    /// PSD-guaranteeing bound is so large that the current column is already
    /// a fixed point and codes never move.
    pub lambda: LambdaRule<f64>,
    pub max_inner: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            bits: 32,
            iters: 5,
            nu: 1e-4,
            anchors: None,
            bandwidth: Bandwidth::Auto,
            similar_value: 1.0,
            disturb_alpha: 0.0,
            ridge: 0.0,
            seed: 0,
            loss: LossKind::Squared,
            lambda: LambdaRule::Fixed(0.0),
            max_inner: 50,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.bits == 0 {
            return bad("bits must be at least 1".into());
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be finite and non-negative, got {}", self.nu));
        }
        if !(0.0..0.5).contains(&self.disturb_alpha) {
            return bad(format!("disturb alpha must be in [0, 0.5), got {}", self.disturb_alpha));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be finite and non-negative, got {}", self.ridge));
        }
        if !(self.similar_value > 0.0 && self.similar_value.is_finite()) {
            return bad(format!("similar value must be positive, got {}", self.similar_value));
        }
        if self.anchors == Some(0) {
            return bad("anchors must be at least 1".into());
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("bandwidth must be positive, got {s}"));
            }
        }
        if self.max_inner == 0 {
            return bad("max inner iterations must be at least 1".into());
        }
        match self.lambda {
            LambdaRule::ScaledBound(f) | LambdaRule::Fixed(f) if !(f >= 0.0 && f.is_finite()) => {
                bad(format!("lambda parameter must be finite and non-negative, got {f}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Spectral initialization plus the first regression fit.
    Init,
    H,
    F,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::H => "H",
            Phase::F => "F",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    /// Outer round, 0 for the initialization.
    pub iter: usize,
    pub phase: Phase,
    pub changed_bits: usize,
    /// `Σ l(hᵢₖ, fₖ(xᵢ))` with the codes and outputs current after the phase.
    pub quantization_loss: f64,
    /// Mean of `(r·sᵢⱼ − hᵢᵀhⱼ)²` over a fixed sample of pairs.
    pub similarity_loss: f64,
    pub elapsed_ms: f64,
}

impl fmt::Display for PhaseRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} phase={} changed_bits={} quantization_loss={} elapsed_ms={:.3}",
            self.iter, self.phase, self.changed_bits, self.quantization_loss, self.elapsed_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub phases: Vec<PhaseRecord>,
    /// True when a code pass changed no bits and training stopped early.
    pub converged: bool,
    pub total_ms: f64,
}

impl TrainReport {
    /// Structured text: one `key=value` line per phase plus a summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.phases {
            out.push_str(&format!("{p} similarity_loss={}\n", p.similarity_loss));
        }
        out.push_str(&format!("converged={} total_ms={:.3}\n", self.converged, self.total_ms));
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T: Real> {
    pub model: KernelModel<T>,
    /// Codes from the last code pass (or the initialization when `iters = 0`).
    pub codes: CodeMatrix,
    pub report: TrainReport,
}

/// Flip each entry independently with probability `alpha`.
pub fn disturb_codes(codes: &CodeMatrix, alpha: f64, seed: u64) -> Result<CodeMatrix> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 0.5), got {alpha}")));
    }
    let mut out = codes.clone();
    if alpha == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..codes.n() {
        for k in 0..codes.bits() {
            if rng.random_bool(alpha) {
                out.flip(i, k);
            }
        }
    }
    Ok(out)
}

fn quantization_loss<T: Real>(codes: &CodeMatrix, f: &DMatrix<T>, loss: LossKind) -> f64 {
    let mut total = 0.0;
    for i in 0..codes.n() {
        for k in 0..codes.bits() {
            total += loss.eval(T::of(f64::from(codes.get(i, k))), f[(i, k)]).to_f64();
        }
    }
    total
}

struct PairSample(Vec<(usize, usize)>);

impl PairSample {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self(
            (0..SIMILARITY_SAMPLE_PAIRS)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                .collect(),
        )
    }

    fn loss<T: Real>(&self, pair: &LowRankPair<T>, codes: &CodeMatrix) -> f64 {
        let r = codes.bits() as f64;
        let total: f64 = self
            .0
            .iter()
            .map(|&(i, j)| {
                let diff = r * pair.entry(i, j).to_f64() - codes.inner_product(i, j) as f64;
                diff * diff
            })
            .sum();
        total / self.0.len() as f64
    }
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn train<T: Real>(x: &FeatureMatrix, labels: &LabelVector, cfg: &TrainerConfig) -> Result<TrainOutput<T>> {
    train_with_progress(x, labels, cfg, |_| {})
}

/// [`train`], calling `progress` after every phase.
pub fn train_with_progress<T: Real>(
    x: &FeatureMatrix,
    labels: &LabelVector,
    cfg: &TrainerConfig,
    mut progress: impl FnMut(&PhaseRecord),
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    let n = x.n();
    if labels.n() != n {
        return Err(Error::Dimension(format!("{n} feature rows, {} label rows", labels.n())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let start = Instant::now();
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let anchor_seed = seeds.next_u64();
    let sample_seed = seeds.next_u64();

    let pair = factorize_labels(labels, T::of(cfg.similar_value))?;
    let m = cfg.anchors.unwrap_or(1000).min(n);
    let (map, k) = fit_kernel_map::<T>(x, m, cfg.bandwidth, anchor_seed)?;
    let init = spectral_init(&k, &pair, cfg.bits)?;
    let ridge = T::of(cfg.ridge);
    let mut weights = solve_regression(&k, &init.codes, ridge)?;
    let mut f = &k * &weights;
    let mut codes = codes_from_outputs(&f)?;
    let sample = PairSample::new(n, sample_seed);

    let mut phases = Vec::new();
    let mut record = |phases: &mut Vec<PhaseRecord>, rec: PhaseRecord| -> Result<()> {
        if !rec.quantization_loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite quantization loss after {} phase", rec.phase)));
        }
        progress(&rec);
        phases.push(rec);
        Ok(())
    };
    record(
        &mut phases,
        PhaseRecord {
            iter: 0,
            phase: Phase::Init,
            changed_bits: 0,
            quantization_loss: quantization_loss(&codes, &f, cfg.loss),
            similarity_loss: sample.loss(&pair, &codes),
            elapsed_ms: millis(start),
        },
    )?;

    let mut converged = false;
    for iter in 1..=cfg.iters {
        let phase_start = Instant::now();
        let outputs = row_major(&f);
        let mut ws = CbcdWorkspace::new(&pair, codes)?
            .with_outputs(&outputs)?
            .with_nu(T::of(cfg.nu))
            .with_loss(cfg.loss)
            .with_max_inner(cfg.max_inner)
            .with_lambda(match cfg.lambda {
                LambdaRule::PsdBound => LambdaRule::PsdBound,
                LambdaRule::ScaledBound(s) => LambdaRule::ScaledBound(T::of(s)),
                LambdaRule::Fixed(l) => LambdaRule::Fixed(T::of(l)),
            });
        let changed: usize = ws.solve_h_subproblem()?.iter().map(|c| c.changed_bits).sum();
        codes = ws.into_codes();
        record(
            &mut phases,
            PhaseRecord {
                iter,
                phase: Phase::H,
                changed_bits: changed,
                quantization_loss: quantization_loss(&codes, &f, cfg.loss),
                similarity_loss: sample.loss(&pair, &codes),
                elapsed_ms: millis(phase_start),
            },
        )?;
        let disturb_seed = seeds.next_u64();
        if changed == 0 {
            converged = true;
            break;
        }

        let phase_start = Instant::now();
        let targets = disturb_codes(&codes, cfg.disturb_alpha, disturb_seed)?;
        weights = solve_regression(&k, &targets, ridge)?;
        f = &k * &weights;
        record(
            &mut phases,
            PhaseRecord {
                iter,
                phase: Phase::F,
                changed_bits: targets.count_differences(&codes),
                quantization_loss: quantization_loss(&codes, &f, cfg.loss),
                similarity_loss: sample.loss(&pair, &codes),
                elapsed_ms: millis(phase_start),
            },
        )?;
    }

    Ok(TrainOutput {
        model: KernelModel::new(map, weights, ridge)?,
        codes,
        report: TrainReport {
            phases,
            converged,
            total_ms: millis(start),
        },
    })
}
