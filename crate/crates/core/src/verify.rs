//! Randomized cross-checks of the implicit computations against the
//! brute-force references in [`crate::oracle`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cbcd::{CbcdWorkspace, LambdaRule};
use crate::codes::CodeMatrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate, GroundTruth};
use crate::oracle::{definitional_retrieval, exhaustive_bqp, DenseInstance, EXHAUSTIVE_CAP};
use crate::similarity::{factorize_labels, LabelVector};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Largest problem size for the exhaustive checks (at most 14).
    pub max_n: usize,
    pub instances: usize,
    pub seed: u64,
    /// Deliberately corrupt one comparison; used to test the failure path.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            max_n: 12,
            instances: 100,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} {}", self.name, self.detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Result<LabelVector> {
    let classes = rng.random_range(1..=5u32);
    let multi = rng.random_bool(0.5);
    let rows = (0..n)
        .map(|_| {
            let mut ids = vec![rng.random_range(0..classes)];
            if multi {
                ids.extend((0..classes).filter(|_| rng.random_bool(0.3)));
            }
            ids
        })
        .collect();
    LabelVector::new(rows, Some(classes as usize))
}

fn random_codes(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Result<CodeMatrix> {
    let mut codes = CodeMatrix::new(n, r, (0..n * r).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())?;
    // Balanced columns so that the solver starts from a feasible point.
    for k in 0..r {
        let mut col: Vec<i8> = (0..n).map(|i| if i < n.div_ceil(2) { 1 } else { -1 }).collect();
        col.shuffle(rng);
        codes.set_column(k, &col)?;
    }
    Ok(codes)
}

fn random_q(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn suite(name: &'static str, failures: Vec<String>, checked: usize) -> SuiteResult {
    SuiteResult {
        name,
        passed: failures.is_empty(),
        detail: match failures.first() {
            None => format!("checked={checked}"),
            Some(first) => format!("failures={} first: {first}", failures.len()),
        },
    }
}

fn check_factorization(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for inst in 0..cfg.instances {
        let n = rng.random_range(1..=cfg.max_n * 4);
        let labels = random_labels(rng, n)?;
        let sv = rng.random_range(1..=3i64);
        let pair = factorize_labels(&labels, sv)?;
        let dense = pair.densify();
        for i in 0..n {
            for j in 0..n {
                let expected = (sv + 1) * labels.shared(i, j) as i64 - 1;
                if dense[i * n + j] != expected {
                    failures.push(format!("instance {inst} entry ({i},{j}): {} != {expected}", dense[i * n + j]));
                }
            }
        }
    }
    Ok(suite("factorization", failures, cfg.instances))
}

fn check_transformation_chain(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for inst in 0..cfg.instances {
        let n = rng.random_range(1..=cfg.max_n);
        let r = rng.random_range(1..=4);
        let pair = factorize_labels(&random_labels(rng, n)?, 1.0)?;
        let codes = random_codes(rng, n, r)?;
        let dense = DenseInstance::new(&pair, &codes, rng.random_range(0..r), &random_q(rng, n))?;
        let mut constant = None;
        for mask in 0u32..(1 << n) {
            let b: Vec<i8> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
            let diff = dense.g_prime(&b) - dense.lifted_objective(&b);
            match constant {
                None => constant = Some(diff),
                Some(c) if !close(diff, c, 1e-9) => {
                    failures.push(format!("instance {inst}: offset {diff} vs {c}"));
                    break;
                }
                _ => {}
            }
        }
    }
    Ok(suite("transformation_chain", failures, cfg.instances))
}

fn check_low_rank_similarity(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for inst in 0..cfg.instances {
        let n = rng.random_range(1..=cfg.max_n * 8);
        let r = rng.random_range(1..=6);
        let pair = factorize_labels(&random_labels(rng, n)?, 1.0)?;
        let codes = random_codes(rng, n, r)?;
        let k = rng.random_range(0..r);
        let q = random_q(rng, n);
        let members: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let lambda = rng.random_range(0.0..10.0);
        let mut ws = CbcdWorkspace::new(&pair, codes.clone())?;
        ws.set_linear_term(q.clone())?;
        let mut fast = ws.similarity_to_mean(k, &members, lambda)?;
        if cfg.inject_fault && inst == 0 {
            fast[0] += 1e-3;
        }
        let slow = DenseInstance::new(&pair, &codes, k, &q)?.shifted_row_sums(&members, lambda);
        if let Some(i) = (0..n).find(|&i| !close(fast[i], slow[i], 1e-8)) {
            failures.push(format!("instance {inst} row {i}: {} vs {}", fast[i], slow[i]));
        }
    }
    Ok(suite("low_rank_similarity", failures, cfg.instances))
}

fn check_column_solver(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    let mut gaps = Vec::new();
    for inst in 0..cfg.instances {
        let n = rng.random_range(2..=cfg.max_n);
        let r = rng.random_range(1..=4);
        let pair = factorize_labels(&random_labels(rng, n)?, 1.0)?;
        let codes = random_codes(rng, n, r)?;
        let k = rng.random_range(0..r);
        let q = random_q(rng, n);
        let dense = DenseInstance::new(&pair, &codes, k, &q)?;
        let before = dense.g_prime(&codes.column(k));
        let mut ws = CbcdWorkspace::new(&pair, codes)?.with_lambda(LambdaRule::PsdBound);
        ws.set_linear_term(q)?;
        let report = ws.solve_column(k)?;
        let after = dense.g_prime(&ws.codes().column(k));
        let (_, optimum) = exhaustive_bqp(&dense, true)?;
        if report.objective_trace.windows(2).any(|w| w[1] > w[0] + 1e-9 * w[0].abs().max(1.0)) {
            failures.push(format!("instance {inst}: clustering objective increased"));
        }
        if after < before - 1e-9 * before.abs().max(1.0) {
            failures.push(format!("instance {inst}: objective fell from {before} to {after}"));
        }
        if after > optimum + 1e-9 * optimum.abs().max(1.0) {
            failures.push(format!("instance {inst}: {after} exceeds the exhaustive optimum {optimum}"));
        }
        gaps.push(optimum - after);
    }
    let mut result = suite("column_solver", failures, cfg.instances);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    result.detail.push_str(&format!(" mean_gap={mean_gap}"));
    Ok(result)
}

fn check_retrieval(rng: &mut ChaCha8Rng, cfg: &VerifyConfig) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for inst in 0..cfg.instances {
        let n = rng.random_range(1..=cfg.max_n * 20);
        let nq = rng.random_range(1..=10);
        let r = rng.random_range(1..=70);
        let db = random_codes(rng, n, r)?;
        let queries = random_codes(rng, nq, r)?;
        let truth = GroundTruth::new(random_labels(rng, nq)?, random_labels(rng, n)?);
        let cutoff = if rng.random_bool(0.5) { Some(rng.random_range(1..=n)) } else { None };
        let ks = [1, 5, 100];
        let fast = evaluate(&db.pack(), &queries.pack(), &truth, cutoff, &ks)?;
        let slow = definitional_retrieval(&db.pack(), &queries.pack(), &truth, cutoff, &ks)?;
        if fast != slow {
            failures.push(format!("instance {inst}: map {} vs {}", fast.map, slow.map));
        }
    }
    Ok(suite("retrieval_metrics", failures, cfg.instances))
}

/// Run every suite; the caller decides what a failure means.
pub fn run_verify(cfg: &VerifyConfig) -> Result<Vec<SuiteResult>> {
    if cfg.max_n < 2 || cfg.max_n > EXHAUSTIVE_CAP {
        return Err(Error::InvalidArgument(format!(
            "max n must be between 2 and {EXHAUSTIVE_CAP}, got {}",
            cfg.max_n
        )));
    }
    if cfg.instances == 0 {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(vec![
        check_factorization(&mut rng, cfg)?,
        check_transformation_chain(&mut rng, cfg)?,
        check_low_rank_similarity(&mut rng, cfg)?,
        check_column_solver(&mut rng, cfg)?,
        check_retrieval(&mut rng, cfg)?,
    ])
}
