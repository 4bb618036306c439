//! Retrieval metrics over Hamming rankings: MAP (optionally truncated),
//! precision within Hamming radius 2, top-k precision and precision-recall
//! curves.
//!
//! Rankings order the database by ascending Hamming distance with ties broken
//! by ascending database index. A database item is relevant to a query when
//! the two share at least one label.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::codes::PackedCodes;
use crate::error::{Error, Result};
use crate::similarity::{shared_labels, LabelVector};

/// Query and database labels; relevance is "shares at least one label".
#[derive(Debug, Clone)]
pub struct GroundTruth {
    queries: LabelVector,
    database: LabelVector,
}

impl GroundTruth {
    pub fn new(queries: LabelVector, database: LabelVector) -> Self {
        Self { queries, database }
    }

    pub fn queries(&self) -> &LabelVector {
        &self.queries
    }

    pub fn database(&self) -> &LabelVector {
        &self.database
    }

    pub fn is_relevant(&self, query: usize, item: usize) -> bool {
        shared_labels(self.queries.labels(query), self.database.labels(item)) > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub map: f64,
    pub precision_at_radius2: f64,
    /// `(k, mean precision of the first k results)`.
    pub topk_precision: Vec<(usize, f64)>,
    /// `(recall, precision)` at Hamming thresholds `0..=r`, pooled over queries.
    pub pr_curve: Vec<(f64, f64)>,
}

impl MetricReport {
    /// One `metric=value` line per metric.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "map={}", self.map).unwrap();
        writeln!(out, "p_at_r2={}", self.precision_at_radius2).unwrap();
        for (k, p) in &self.topk_precision {
            writeln!(out, "top_{k}_precision={p}").unwrap();
        }
        out
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.pr_curve {
            writeln!(out, "{r},{p}").unwrap();
        }
        out
    }
}

/// Mean over relevant hits within `cutoff` of `hits_so_far / rank`; zero when
/// nothing relevant is retrieved.
pub fn average_precision(ranking: &[usize], relevant: &HashSet<usize>, cutoff: Option<usize>) -> Result<f64> {
    if ranking.is_empty() {
        return Err(Error::InvalidArgument("empty ranking".into()));
    }
    Ok(ap_from_flags(ranking.iter().map(|i| relevant.contains(i)), cutoff))
}

fn ap_from_flags(flags: impl Iterator<Item = bool>, cutoff: Option<usize>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, rel) in flags.take(cutoff.unwrap_or(usize::MAX)).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

struct QueryStats {
    ap: f64,
    radius2: f64,
    topk: Vec<f64>,
    /// Per-distance counts of retrieved and relevant-retrieved items.
    retrieved_at: Vec<u64>,
    relevant_at: Vec<u64>,
}

fn check_dims(db: &PackedCodes, queries: &PackedCodes, truth: &GroundTruth) -> Result<()> {
    if db.bits() != queries.bits() {
        return Err(Error::Dimension(format!(
            "database codes have {} bits, queries have {}",
            db.bits(),
            queries.bits()
        )));
    }
    if truth.database.n() != db.n() || truth.queries.n() != queries.n() {
        return Err(Error::Dimension(format!(
            "ground truth covers {} queries / {} items, codes have {} / {}",
            truth.queries.n(),
            truth.database.n(),
            queries.n(),
            db.n()
        )));
    }
    Ok(())
}

/// Evaluate query codes against database codes.
pub fn evaluate(
    db: &PackedCodes,
    queries: &PackedCodes,
    truth: &GroundTruth,
    cutoff: Option<usize>,
    ks: &[usize],
) -> Result<MetricReport> {
    check_dims(db, queries, truth)?;
    let r = db.bits();
    let n = db.n();
    let stats: Vec<QueryStats> = (0..queries.n())
        .into_par_iter()
        .map(|qi| {
            let dist = db.distances(queries.row(qi)).expect("dimensions checked");
            // Counting sort keeps index order within each distance bucket.
            let mut starts = vec![0usize; r + 2];
            for &d in &dist {
                starts[d as usize + 1] += 1;
            }
            for d in 0..=r {
                starts[d + 1] += starts[d];
            }
            let mut ranking = vec![0usize; n];
            let mut fill = starts.clone();
            for (i, &d) in dist.iter().enumerate() {
                ranking[fill[d as usize]] = i;
                fill[d as usize] += 1;
            }
            let relevant: Vec<bool> = (0..n).map(|i| truth.is_relevant(qi, i)).collect();

            let ap = ap_from_flags(ranking.iter().map(|&i| relevant[i]), cutoff);
            let topk = ks
                .iter()
                .map(|&k| {
                    let k = k.min(n).max(1);
                    ranking[..k].iter().filter(|&&i| relevant[i]).count() as f64 / k as f64
                })
                .collect();
            let mut retrieved_at = vec![0u64; r + 1];
            let mut relevant_at = vec![0u64; r + 1];
            for (i, &d) in dist.iter().enumerate() {
                retrieved_at[d as usize] += 1;
                if relevant[i] {
                    relevant_at[d as usize] += 1;
                }
            }
            let within: u64 = retrieved_at.iter().take(3).sum();
            let hits: u64 = relevant_at.iter().take(3).sum();
            let radius2 = if within == 0 { 0.0 } else { hits as f64 / within as f64 };
            QueryStats {
                ap,
                radius2,
                topk,
                retrieved_at,
                relevant_at,
            }
        })
        .collect();
    Ok(aggregate(&stats, ks, r))
}

fn aggregate(stats: &[QueryStats], ks: &[usize], r: usize) -> MetricReport {
    let nq = stats.len() as f64;
    let map = stats.iter().map(|s| s.ap).sum::<f64>() / nq;
    let precision_at_radius2 = stats.iter().map(|s| s.radius2).sum::<f64>() / nq;
    let topk_precision = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| (k, stats.iter().map(|s| s.topk[j]).sum::<f64>() / nq))
        .collect();
    let total_relevant: u64 = stats.iter().flat_map(|s| &s.relevant_at).sum();
    let mut pr_curve = Vec::with_capacity(r + 1);
    let (mut retrieved, mut hits) = (0u64, 0u64);
    for d in 0..=r {
        for s in stats {
            retrieved += s.retrieved_at[d];
            hits += s.relevant_at[d];
        }
        let precision = if retrieved == 0 { 0.0 } else { hits as f64 / retrieved as f64 };
        let recall = if total_relevant == 0 { 0.0 } else { hits as f64 / total_relevant as f64 };
        pr_curve.push((recall, precision));
    }
    MetricReport {
        map,
        precision_at_radius2,
        topk_precision,
        pr_curve,
    }
}
