//! Feature and label files, synthetic datasets, and model/code persistence.
//!
//! Formats (all integers and floats little-endian):
//!
//! * features, csv: one sample per line, comma-separated reals.
//! * features, raw-f32: `u32 n`, `u32 d`, then `n·d` f32 values row-major.
//! * labels: one line per sample, space-separated integer class ids.
//! * model: `"DISHM1"`, `u32 version`, `u32 d`, `u32 m`, `u32 r`,
//!   `f64 sigma`, `f64 ridge`, then `m` centering values, `m·d` anchor values
//!   and `m·r` weights, each f64 row-major.
//! * codes: see [`PackedCodes::write_to`].
//!
//! Synthetic data uses ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`) so
//! the same seed gives the same dataset on every platform.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codes::{read_exact_or_truncated, PackedCodes};
use crate::error::{Error, Result};
use crate::kernel::{KernelMap, KernelModel};
use crate::similarity::LabelVector;

pub const MODEL_MAGIC: &[u8; 6] = b"DISHM1";
pub const MODEL_VERSION: u32 = 1;

/// Dense `n × d` feature matrix stored row-major as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if data.len() != n * d {
            return Err(Error::Dimension(format!("{} values for a {n}x{d} matrix", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Scale every row to unit ℓ₂ norm; all-zero rows are left alone.
    pub fn l2_normalize(&mut self) {
        for row in self.data.chunks_mut(self.d) {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = (f64::from(*v) / norm) as f32);
            }
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!("row {i} out of range for {} rows", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(rows.len(), self.d, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Csv,
    RawF32,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "raw-f32" => Ok(FeatureFormat::RawF32),
            other => Err(Error::InvalidArgument(format!("unknown feature format {other:?}"))),
        }
    }
}

pub fn parse_features_csv<R: BufRead>(input: R) -> Result<FeatureMatrix> {
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "non-finite value".into(),
                });
            }
            data.push(v);
        }
        let width = data.len() - before;
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {w} columns, found {width}"),
                })
            }
            _ => {}
        }
        n += 1;
    }
    FeatureMatrix::new(n, d.unwrap_or(0), data)
}

pub fn read_features_raw<R: Read>(mut input: R, available: Option<u64>) -> Result<FeatureMatrix> {
    let mut header = [0u8; 8];
    read_exact_or_truncated(&mut input, &mut header, "feature header")?;
    let n = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
    let bytes = (n as u64) * (d as u64) * 4;
    if let Some(avail) = available {
        if avail != 8 + bytes {
            return Err(Error::Truncated(format!(
                "raw feature file holds {avail} bytes, header promises {}",
                8 + bytes
            )));
        }
    }
    let mut raw = vec![0u8; usize::try_from(bytes).map_err(|_| Error::Truncated("feature file too large".into()))?];
    read_exact_or_truncated(&mut input, &mut raw, "feature values")?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(n, d, data)
}

pub fn load_features(path: &Path, format: FeatureFormat, normalize: bool) -> Result<FeatureMatrix> {
    let file = File::open(path)?;
    let mut x = match format {
        FeatureFormat::Csv => parse_features_csv(BufReader::new(file))?,
        FeatureFormat::RawF32 => {
            let len = file.metadata()?.len();
            read_features_raw(BufReader::new(file), Some(len))?
        }
    };
    if normalize {
        x.l2_normalize();
    }
    Ok(x)
}

pub fn write_features<W: Write>(x: &FeatureMatrix, format: FeatureFormat, mut out: W) -> Result<()> {
    match format {
        FeatureFormat::Csv => {
            for i in 0..x.n() {
                let line: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        FeatureFormat::RawF32 => {
            out.write_all(&(x.n() as u32).to_le_bytes())?;
            out.write_all(&(x.dim() as u32).to_le_bytes())?;
            for v in x.as_slice() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_features(path: &Path, x: &FeatureMatrix, format: FeatureFormat) -> Result<()> {
    write_features(x, format, BufWriter::new(File::create(path)?))
}

pub fn parse_labels<R: BufRead>(input: R) -> Result<LabelVector> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "empty label line".into(),
            });
        }
        let ids = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("not a class id: {t:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ids);
    }
    LabelVector::new(rows, None)
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    parse_labels(BufReader::new(File::open(path)?))
}

pub fn write_labels<W: Write>(labels: &LabelVector, mut out: W) -> Result<()> {
    for i in 0..labels.n() {
        let ids: Vec<String> = labels.labels(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    write_labels(labels, BufWriter::new(File::create(path)?))
}

/// Features with labels and an optional query/database split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    /// `(query rows, database rows)`, disjoint.
    pub split: Option<(Vec<usize>, Vec<usize>)>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: LabelVector, split: Option<(Vec<usize>, Vec<usize>)>) -> Result<Self> {
        if features.n() != labels.n() {
            return Err(Error::Dimension(format!(
                "{} feature rows, {} label rows",
                features.n(),
                labels.n()
            )));
        }
        if let Some((q, db)) = &split {
            let mut seen = vec![false; features.n()];
            for &i in q.iter().chain(db) {
                if i >= features.n() || seen[i] {
                    return Err(Error::InvalidArgument(format!("bad or repeated split index {i}")));
                }
                seen[i] = true;
            }
        }
        Ok(Self { features, labels, split })
    }

    fn part(&self, query: bool) -> Result<(FeatureMatrix, LabelVector)> {
        let (q, db) = self
            .split
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("dataset has no query/database split".into()))?;
        let rows = if query { q } else { db };
        Ok((self.features.select_rows(rows)?, self.labels.select_rows(rows)?))
    }

    pub fn queries(&self) -> Result<(FeatureMatrix, LabelVector)> {
        self.part(true)
    }

    pub fn database(&self) -> Result<(FeatureMatrix, LabelVector)> {
        self.part(false)
    }
}

/// Parameters of a Gaussian-mixture dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    /// Query rows drawn from each class; `None` means 10% (at least one).
    pub queries_per_class: Option<usize>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            dim,
            separation,
            queries_per_class: None,
            seed,
        }
    }
}

/// Class centers uniform on a sphere of radius `separation`, unit-variance
/// isotropic noise around each, and a stratified query split.
pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if cfg.per_class < 2 || cfg.dim == 0 {
        return Err(Error::InvalidArgument("need per_class >= 2 and dim >= 1".into()));
    }
    if !(cfg.separation >= 0.0 && cfg.separation.is_finite()) {
        return Err(Error::InvalidArgument("separation must be finite and non-negative".into()));
    }
    let q_per = cfg
        .queries_per_class
        .unwrap_or_else(|| ((cfg.per_class as f64 * 0.1).round() as usize).max(1));
    if q_per >= cfg.per_class {
        return Err(Error::InvalidArgument(format!(
            "{q_per} queries per class leaves no database rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut centers = Vec::with_capacity(cfg.classes * cfg.dim);
    for _ in 0..cfg.classes {
        let dir: Vec<f64> = (0..cfg.dim).map(|_| gauss()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        centers.extend(dir.iter().map(|v| v / norm * cfg.separation));
    }
    let n = cfg.classes * cfg.per_class;
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..cfg.classes {
        for _ in 0..cfg.per_class {
            for j in 0..cfg.dim {
                data.push((centers[c * cfg.dim + j] + gauss()) as f32);
            }
            labels.push(c as u32);
        }
    }
    let mut query = Vec::with_capacity(cfg.classes * q_per);
    let mut is_query = vec![false; n];
    for c in 0..cfg.classes {
        let mut rows: Vec<usize> = (c * cfg.per_class..(c + 1) * cfg.per_class).collect();
        rows.shuffle(&mut rng);
        for &i in &rows[..q_per] {
            is_query[i] = true;
        }
    }
    query.extend((0..n).filter(|&i| is_query[i]));
    let database = (0..n).filter(|&i| !is_query[i]).collect();
    Dataset::new(
        FeatureMatrix::new(n, cfg.dim, data)?,
        LabelVector::single(&labels)?,
        Some((query, database)),
    )
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(input: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; count * 8];
    read_exact_or_truncated(input, &mut raw, what)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_model<W: Write>(model: &KernelModel<f64>, mut out: W) -> Result<()> {
    let map = &model.map;
    let (m, d, r) = (map.num_anchors(), map.dim(), model.bits());
    out.write_all(MODEL_MAGIC)?;
    for v in [MODEL_VERSION, d as u32, m as u32, r as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&map.sigma().to_le_bytes())?;
    out.write_all(&model.ridge.to_le_bytes())?;
    for v in map.centering() {
        out.write_all(&v.to_le_bytes())?;
    }
    for i in 0..m {
        for j in 0..d {
            out.write_all(&map.anchors()[(i, j)].to_le_bytes())?;
        }
    }
    for i in 0..m {
        for k in 0..r {
            out.write_all(&model.weights[(i, k)].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a model; `available` is the total input size when known and is
/// checked against the header before anything large is allocated.
pub fn read_model<R: Read>(mut input: R, available: Option<u64>) -> Result<KernelModel<f64>> {
    let mut magic = [0u8; 6];
    read_exact_or_truncated(&mut input, &mut magic, "model magic")?;
    if &magic != MODEL_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(&mut input, "model version")?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let d = read_u32(&mut input, "model header")? as usize;
    let m = read_u32(&mut input, "model header")? as usize;
    let r = read_u32(&mut input, "model header")? as usize;
    if d == 0 || m == 0 || r == 0 {
        return Err(Error::InvalidArgument("model header has a zero dimension".into()));
    }
    let body = (m as u64) * (1 + d as u64 + r as u64) * 8;
    let expected = 6 + 16 + 16 + body;
    if let Some(avail) = available {
        if avail != expected {
            return Err(Error::Truncated(format!(
                "model file holds {avail} bytes, header promises {expected}"
            )));
        }
    }
    let head = read_f64s(&mut input, 2, "model header")?;
    let centering = read_f64s(&mut input, m, "centering")?;
    let anchors = read_f64s(&mut input, m * d, "anchors")?;
    let weights = read_f64s(&mut input, m * r, "weights")?;
    let map = KernelMap::from_parts(DMatrix::from_row_slice(m, d, &anchors), head[0], centering)?;
    if !(head[1] >= 0.0) {
        return Err(Error::InvalidArgument("model ridge is negative".into()));
    }
    KernelModel::new(map, DMatrix::from_row_slice(m, r, &weights), head[1])
}

pub fn save_model(path: &Path, model: &KernelModel<f64>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<KernelModel<f64>> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    read_model(BufReader::new(file), Some(len))
}

pub fn save_codes(path: &Path, codes: &PackedCodes) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    codes.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_codes(path: &Path) -> Result<PackedCodes> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    PackedCodes::read_from(BufReader::new(file), Some(len))
}
