//! Binary code matrices in ±1 form, packed hashcodes and Hamming-space
//! primitives.
//!
//! A code entry `+1` is stored as bit 1 and `-1` as bit 0, so the popcount of
//! the XOR of two packed rows is their Hamming distance. Bit `j` of a code
//! lives in word `j / 64` at position `j % 64`; unused high bits of the last
//! word are always zero.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

const CODES_MAGIC: &[u8; 6] = b"DISHC1";

/// `n × r` matrix of ±1 entries, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    n: usize,
    r: usize,
    values: Vec<i8>,
}

impl CodeMatrix {
    pub fn new(n: usize, r: usize, values: Vec<i8>) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument(format!(
                "code matrix needs n >= 1 and r >= 1, got {n}x{r}"
            )));
        }
        if values.len() != n * r {
            return Err(Error::Dimension(format!(
                "expected {} code entries, got {}",
                n * r,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(format!(
                "code entry {pos} is {}, expected -1 or +1",
                values[pos]
            )));
        }
        Ok(Self { n, r, values })
    }

    /// Matrix with every entry equal to `value` (which must be ±1).
    pub fn filled(n: usize, r: usize, value: i8) -> Result<Self> {
        Self::new(n, r, vec![value; n * r])
    }

    /// Element-wise `sgn` of a row-major `n × r` real matrix, `sgn(0) = +1`.
    pub fn from_signs<T: Real>(n: usize, r: usize, outputs: &[T]) -> Result<Self> {
        if outputs.len() != n * r {
            return Err(Error::Dimension(format!(
                "expected {} outputs, got {}",
                n * r,
                outputs.len()
            )));
        }
        Self::new(n, r, outputs.iter().map(|v| v.sign_bit()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> usize {
        self.r
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.values[i * self.r..(i + 1) * self.r]
    }

    pub fn get(&self, i: usize, k: usize) -> i8 {
        self.values[i * self.r + k]
    }

    pub fn column(&self, k: usize) -> Vec<i8> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    /// Flip the sign of entry `(i, k)`.
    pub fn flip(&mut self, i: usize, k: usize) {
        let v = &mut self.values[i * self.r + k];
        *v = -*v;
    }

    pub fn set_column(&mut self, k: usize, column: &[i8]) -> Result<()> {
        if k >= self.r {
            return Err(Error::InvalidArgument(format!(
                "column {k} out of range for {} bits",
                self.r
            )));
        }
        if column.len() != self.n {
            return Err(Error::Dimension(format!(
                "column has {} entries, expected {}",
                column.len(),
                self.n
            )));
        }
        if column.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument("column entries must be ±1".into()));
        }
        for (i, &v) in column.iter().enumerate() {
            self.values[i * self.r + k] = v;
        }
        Ok(())
    }

    /// `h_iᵀ h_j` over the ±1 entries.
    pub fn inner_product(&self, i: usize, j: usize) -> i64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(&a, &b)| i64::from(a) * i64::from(b))
            .sum()
    }

    /// Number of entries that differ from `other`.
    pub fn count_differences(&self, other: &CodeMatrix) -> usize {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Codes of the selected rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.r);
        for &i in rows {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!("row {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(rows.len(), self.r, values)
    }

    pub fn pack(&self) -> PackedCodes {
        pack(self)
    }
}

/// Packed hashcodes: `n` codes of `r` bits, `ceil(r / 64)` words per code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    n: usize,
    r: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

pub fn words_for_bits(r: usize) -> usize {
    r.div_ceil(64)
}

fn tail_mask(r: usize) -> u64 {
    match r % 64 {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

pub fn pack(codes: &CodeMatrix) -> PackedCodes {
    let wpc = words_for_bits(codes.r);
    let mut words = vec![0u64; codes.n * wpc];
    for i in 0..codes.n {
        let dst = &mut words[i * wpc..(i + 1) * wpc];
        for (j, &v) in codes.row(i).iter().enumerate() {
            if v > 0 {
                dst[j / 64] |= 1u64 << (j % 64);
            }
        }
    }
    PackedCodes {
        n: codes.n,
        r: codes.r,
        words_per_code: wpc,
        words,
    }
}

pub fn unpack(packed: &PackedCodes) -> CodeMatrix {
    let mut values = Vec::with_capacity(packed.n * packed.r);
    for i in 0..packed.n {
        let row = packed.row(i);
        for j in 0..packed.r {
            values.push(if row[j / 64] >> (j % 64) & 1 == 1 { 1 } else { -1 });
        }
    }
    CodeMatrix {
        n: packed.n,
        r: packed.r,
        values,
    }
}

/// Number of differing bits between two packed rows.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "packed rows have {} and {} words",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

/// Inner product of two ±1 codes of length `r` at Hamming distance `d`: `r - 2d`.
pub fn inner_product_from_hamming(d: u32, r: u32) -> Result<i64> {
    if d > r {
        return Err(Error::InvalidArgument(format!(
            "hamming distance {d} exceeds code length {r}"
        )));
    }
    Ok(i64::from(r) - 2 * i64::from(d))
}

/// Indices of database rows within `radius` of `query`, ascending.
pub fn radius_search(db: &PackedCodes, query: &[u64], radius: u32) -> Result<Vec<usize>> {
    db.check_query(query)?;
    Ok((0..db.n)
        .into_par_iter()
        .filter(|&i| distance_unchecked(db.row(i), query) <= radius)
        .collect())
}

#[inline]
fn distance_unchecked(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

impl PackedCodes {
    /// Build from raw words, validating the word count and zero tail bits.
    pub fn from_words(n: usize, r: usize, words: Vec<u64>) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument(format!(
                "packed codes need n >= 1 and r >= 1, got {n}x{r}"
            )));
        }
        let wpc = words_for_bits(r);
        if words.len() != n * wpc {
            return Err(Error::Dimension(format!(
                "expected {} words, got {}",
                n * wpc,
                words.len()
            )));
        }
        let mask = tail_mask(r);
        if let Some(i) = (0..n).find(|&i| words[i * wpc + wpc - 1] & !mask != 0) {
            return Err(Error::InvalidArgument(format!(
                "code {i} has bits set beyond bit {r}"
            )));
        }
        Ok(Self {
            n,
            r,
            words_per_code: wpc,
            words,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> usize {
        self.r
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub fn unpack(&self) -> CodeMatrix {
        unpack(self)
    }

    fn check_query(&self, query: &[u64]) -> Result<()> {
        if query.len() != self.words_per_code {
            return Err(Error::Dimension(format!(
                "query has {} words, database codes have {}",
                query.len(),
                self.words_per_code
            )));
        }
        if query[query.len() - 1] & !tail_mask(self.r) != 0 {
            return Err(Error::Dimension(format!(
                "query has bits set beyond bit {}",
                self.r
            )));
        }
        Ok(())
    }

    /// Hamming distance from `query` to every database row.
    pub fn distances(&self, query: &[u64]) -> Result<Vec<u32>> {
        self.check_query(query)?;
        Ok((0..self.n)
            .map(|i| distance_unchecked(self.row(i), query))
            .collect())
    }

    /// Write the `DISHC1` format: magic, little-endian `u32 n`, `u32 r`, then
    /// the words as little-endian `u64`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let n = u32::try_from(self.n)
            .map_err(|_| Error::InvalidArgument("too many codes for u32 header".into()))?;
        let r = u32::try_from(self.r)
            .map_err(|_| Error::InvalidArgument("code length exceeds u32".into()))?;
        out.write_all(CODES_MAGIC)?;
        out.write_all(&n.to_le_bytes())?;
        out.write_all(&r.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Read the `DISHC1` format. `available` bounds the payload size when the
    /// caller knows it (e.g. the file length) so bogus headers fail before
    /// allocation.
    pub fn read_from<R: Read>(mut input: R, available: Option<u64>) -> Result<Self> {
        let mut magic = [0u8; 6];
        read_exact_or_truncated(&mut input, &mut magic, "codes magic")?;
        if &magic != CODES_MAGIC {
            return Err(Error::BadMagic);
        }
        let mut header = [0u8; 8];
        read_exact_or_truncated(&mut input, &mut header, "codes header")?;
        let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let r = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument(format!(
                "codes header declares {n}x{r}"
            )));
        }
        let payload = (n as u64)
            .checked_mul(words_for_bits(r) as u64)
            .and_then(|w| w.checked_mul(8))
            .ok_or_else(|| Error::Truncated("codes header size overflows".into()))?;
        if let Some(avail) = available {
            if avail < 14 + payload {
                return Err(Error::Truncated(format!(
                    "codes file holds {} payload bytes, header needs {payload}",
                    avail.saturating_sub(14)
                )));
            }
        }
        let mut bytes = vec![0u8; payload as usize];
        read_exact_or_truncated(&mut input, &mut bytes, "codes payload")?;
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_words(n, r, words)
    }
}

pub(crate) fn read_exact_or_truncated<R: Read>(
    input: &mut R,
    buf: &mut [u8],
    what: &str,
) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(what.to_string())
        } else {
            Error::Io(e)
        }
    })
}
