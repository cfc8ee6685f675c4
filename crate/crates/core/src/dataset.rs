//! Vector datasets, query sets and ground truth.
//!
//! Two on-disk encodings are supported, both little-endian:
//!
//! * `fvecs` / `ivecs`: repeated records `[i32 d][d x f32|i32]`.
//! * `bin`: `[u32 n][u32 d][n*d x f32]`.
//!
//! Ground truth is written as an `ivecs` file of ids plus an `fvecs` file of
//! squared distances with the same row count.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::distance::l2_sq;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Bin,
}

impl VectorFormat {
    /// Guess the format from a file extension; anything other than `.bin`
    /// (or `.fbin`) is treated as fvecs.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("fbin") => VectorFormat::Bin,
            _ => VectorFormat::Fvecs,
        }
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "bin" | "fbin" => Ok(VectorFormat::Bin),
            other => Err(Error::invalid(format!("unknown vector format '{other}'"))),
        }
    }
}

/// `count` x `dim` row-major f32 vectors. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl VectorDataset {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("dataset has zero rows"));
        }
        if dim == 0 {
            return Err(Error::invalid("dataset has zero dimensions"));
        }
        if data.len() != count * dim {
            return Err(Error::invalid(format!(
                "data length {} != {count} x {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { count, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::format("inconsistent dimension"));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Self::new(ids.len(), self.dim, data)
    }
}

pub fn read_vectors(path: impl AsRef<Path>, format: VectorFormat) -> Result<VectorDataset> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    match format {
        VectorFormat::Fvecs => decode_fvecs(&mut r),
        VectorFormat::Bin => decode_bin(&mut r),
    }
}

pub fn write_vectors(ds: &VectorDataset, path: impl AsRef<Path>, format: VectorFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    match format {
        VectorFormat::Fvecs => {
            for row in ds.rows() {
                w.write_i32::<LittleEndian>(ds.dim as i32)?;
                for &v in row {
                    w.write_f32::<LittleEndian>(v)?;
                }
            }
        }
        VectorFormat::Bin => {
            w.write_u32::<LittleEndian>(ds.count as u32)?;
            w.write_u32::<LittleEndian>(ds.dim as u32)?;
            for &v in &ds.data {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn decode_fvecs<R: Read>(r: &mut R) -> Result<VectorDataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let rows = decode_vecs_records(&bytes, |b| f32::from_le_bytes(b))?;
    let (count, dim, data) = rows;
    VectorDataset::new(count, dim, data)
}

/// Shared record walker for fvecs/ivecs payloads.
fn decode_vecs_records<T>(bytes: &[u8], conv: impl Fn([u8; 4]) -> T) -> Result<(usize, usize, Vec<T>)> {
    if bytes.is_empty() {
        return Err(Error::format("zero rows"));
    }
    let mut dim = None;
    let mut pos = 0usize;
    let mut count = 0usize;
    let mut data = Vec::new();
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::format("truncated record header"));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        pos += 4;
        if d <= 0 {
            return Err(Error::format(format!("invalid dimension {d} in row {count}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::format(format!(
                    "inconsistent dimension: row {count} has {d}, expected {prev}"
                )))
            }
            _ => {}
        }
        let need = d * 4;
        if bytes.len() - pos < need {
            return Err(Error::format("truncated record payload"));
        }
        data.extend(
            bytes[pos..pos + need]
                .chunks_exact(4)
                .map(|c| conv(c.try_into().unwrap())),
        );
        pos += need;
        count += 1;
    }
    Ok((count, dim.unwrap_or(0), data))
}

fn decode_bin<R: Read>(r: &mut R) -> Result<VectorDataset> {
    let n = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::format("truncated bin header"))? as usize;
    let d = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::format("truncated bin header"))? as usize;
    if n == 0 {
        return Err(Error::format("zero rows"));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != n * d * 4 {
        return Err(Error::format(format!(
            "bin payload is {} bytes, header implies {}",
            payload.len(),
            n * d * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VectorDataset::new(n, d, data)
}

/// Row-major `u32` matrix read from / written to `ivecs`.
pub fn read_ivecs(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u32>)> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    decode_vecs_records(&bytes, u32::from_le_bytes)
}

pub fn write_ivecs(path: impl AsRef<Path>, dim: usize, data: &[u32]) -> Result<()> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::invalid("ivecs payload is not a whole number of rows"));
    }
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for row in data.chunks_exact(dim) {
        w.write_i32::<LittleEndian>(dim as i32)?;
        for &v in row {
            w.write_u32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Exact k-NN of every query: ids plus squared distances, rows ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub query_count: usize,
    pub k: usize,
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
}

impl GroundTruth {
    pub fn ids_row(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn dists_row(&self, q: usize) -> &[f32] {
        &self.dists[q * self.k..(q + 1) * self.k]
    }

    /// Writes `ids` as ivecs and `dists` as fvecs.
    pub fn write(&self, ids_path: impl AsRef<Path>, dists_path: impl AsRef<Path>) -> Result<()> {
        write_ivecs(ids_path, self.k, &self.ids)?;
        let ds = VectorDataset::new(self.query_count, self.k, self.dists.clone())?;
        write_vectors(&ds, dists_path, VectorFormat::Fvecs)
    }

    /// Reads ids and, when present, the matching distance file.
    pub fn read(ids_path: impl AsRef<Path>, dists_path: Option<&Path>) -> Result<Self> {
        let (query_count, k, ids) = read_ivecs(ids_path)?;
        let dists = match dists_path {
            Some(p) => {
                let ds = read_vectors(p, VectorFormat::Fvecs)?;
                if ds.count() != query_count || ds.dim() != k {
                    return Err(Error::format(format!(
                        "ground-truth distances are {}x{}, ids are {query_count}x{k}",
                        ds.count(),
                        ds.dim()
                    )));
                }
                ds.into_data()
            }
            None => vec![f32::NAN; ids.len()],
        };
        Ok(Self {
            query_count,
            k,
            ids,
            dists,
        })
    }
}

/// Linear-scan ground truth. Ties on distance resolve to the smaller id.
pub fn brute_force_topk(base: &VectorDataset, queries: &VectorDataset, k: usize) -> Result<GroundTruth> {
    if base.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: queries.dim(),
        });
    }
    if k == 0 || k > base.count() {
        return Err(Error::invalid(format!(
            "k = {k} out of range 1..={}",
            base.count()
        )));
    }
    let rows: Vec<Vec<(f32, u32)>> = queries
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| topk_scan(base, q, k))
        .collect();
    let mut ids = Vec::with_capacity(queries.count() * k);
    let mut dists = Vec::with_capacity(queries.count() * k);
    for row in rows {
        for (d, id) in row {
            ids.push(id);
            dists.push(d);
        }
    }
    Ok(GroundTruth {
        query_count: queries.count(),
        k,
        ids,
        dists,
    })
}

#[inline]
pub(crate) fn cmp_dist_id(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn topk_scan(base: &VectorDataset, q: &[f32], k: usize) -> Vec<(f32, u32)> {
    // Bounded max-heap keyed on (dist, id).
    let mut heap: std::collections::BinaryHeap<HeapItem> = std::collections::BinaryHeap::with_capacity(k + 1);
    for (i, row) in base.rows().enumerate() {
        let item = HeapItem(l2_sq(q, row), i as u32);
        if heap.len() < k {
            heap.push(item);
        } else if item < *heap.peek().unwrap() {
            heap.pop();
            heap.push(item);
        }
    }
    let mut out: Vec<(f32, u32)> = heap.into_iter().map(|h| (h.0, h.1)).collect();
    out.sort_by(cmp_dist_id);
    out
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f32, u32);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_dist_id(&(self.0, self.1), &(other.0, other.1))
    }
}
