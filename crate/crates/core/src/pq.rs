//! 4-bit product quantization of the principal component.
//!
//! Each of the `m` sub-spaces has 16 centroids, so a code is `m` nibbles.
//! Per query, squared sub-distances to every centroid are quantized to
//! `u8` with a single affine map `bias + scale * raw`, which lets a 16-entry
//! table row be evaluated for 16 neighbors with one byte shuffle.
//!
//! [`adc_scalar`] is the reference path. [`adc_block`] evaluates a whole
//! interleaved neighbor block; both sum raw entries in integers and apply the
//! affine map once, so they agree bit for bit.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::VectorDataset;
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, nearest_centroid, DEFAULT_MAX_ITERS};
use crate::layout::interleave::{InterleavedRef, LANES};

/// Centroids per sub-space (4-bit codes).
pub const CENTROIDS: usize = 16;

/// Default sub-space width; `m = d_pca / 4`.
pub const DEFAULT_SUB_DIM: usize = 4;

/// Largest `m` for which `255 * m` fits the kernels' accumulators.
pub const MAX_SUBSPACES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    m: usize,
    sub_dim: usize,
    /// `m * 16 * sub_dim`, sub-space major.
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn from_parts(m: usize, sub_dim: usize, centroids: Vec<f32>) -> Result<Self> {
        if m == 0 || sub_dim == 0 || m > MAX_SUBSPACES {
            return Err(Error::invalid(format!("invalid codebook shape m={m}, sub_dim={sub_dim}")));
        }
        if centroids.len() != m * CENTROIDS * sub_dim {
            return Err(Error::format("codebook size does not match its header"));
        }
        Ok(Self { m, sub_dim, centroids })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn d_pca(&self) -> usize {
        self.m * self.sub_dim
    }

    pub fn centroid(&self, s: usize, c: usize) -> &[f32] {
        let start = (s * CENTROIDS + c) * self.sub_dim;
        &self.centroids[start..start + self.sub_dim]
    }

    fn subspace(&self, s: usize) -> &[f32] {
        let w = CENTROIDS * self.sub_dim;
        &self.centroids[s * w..(s + 1) * w]
    }

    /// Nibble per sub-space = nearest centroid, ties to the smaller index.
    pub fn encode(&self, p: &[f32]) -> Result<QuantizedCode> {
        self.check_dim(p.len())?;
        let mut code = QuantizedCode::zeroed(self.m);
        for (s, sub) in p.chunks_exact(self.sub_dim).enumerate() {
            let (c, _) = nearest_centroid(self.subspace(s), self.sub_dim, sub);
            code.set(s, c as u8);
        }
        Ok(code)
    }

    /// Concatenation of the selected centroids.
    pub fn reconstruct(&self, code: &QuantizedCode) -> Vec<f32> {
        (0..self.m)
            .flat_map(|s| self.centroid(s, code.get(s) as usize).iter().copied())
            .collect()
    }

    /// Squared sub-distances from `q_principal` to every centroid, `m x 16`.
    pub fn sub_distances(&self, q_principal: &[f32]) -> Result<Vec<f32>> {
        self.check_dim(q_principal.len())?;
        let mut out = Vec::with_capacity(self.m * CENTROIDS);
        for (s, sub) in q_principal.chunks_exact(self.sub_dim).enumerate() {
            out.extend(self.subspace(s).chunks_exact(self.sub_dim).map(|c| l2_sq(sub, c)));
        }
        Ok(out)
    }

    pub fn build_lut(&self, q_principal: &[f32]) -> Result<QueryLut> {
        let f = self.sub_distances(q_principal)?;
        Ok(QueryLut::quantize(self.m, &f))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d_pca() {
            return Err(Error::DimensionMismatch {
                expected: self.d_pca(),
                got,
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_u32::<LittleEndian>(self.m as u32)?;
        w.write_u32::<LittleEndian>(self.sub_dim as u32)?;
        for &v in &self.centroids {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let m = r.read_u32::<LittleEndian>()? as usize;
        let sub_dim = r.read_u32::<LittleEndian>()? as usize;
        if m == 0 || m > MAX_SUBSPACES || sub_dim == 0 || sub_dim > 1 << 12 {
            return Err(Error::format(format!("implausible codebook shape m={m}, sub_dim={sub_dim}")));
        }
        let mut centroids = vec![0.0; m * CENTROIDS * sub_dim];
        r.read_f32_into::<LittleEndian>(&mut centroids)?;
        Self::from_parts(m, sub_dim, centroids)
    }

    pub fn serialized_len(&self) -> usize {
        8 + 4 * self.centroids.len()
    }
}

/// Trains one 16-means codebook per sub-space. Deterministic for a seed.
pub fn train_codebook(principals: &VectorDataset, m: usize, seed: u64) -> Result<PqCodebook> {
    let d = principals.dim();
    if m == 0 || d % m != 0 {
        return Err(Error::invalid(format!("d_pca = {d} is not divisible by m = {m}")));
    }
    if m > MAX_SUBSPACES {
        return Err(Error::invalid(format!("m = {m} exceeds {MAX_SUBSPACES}")));
    }
    if principals.count() < CENTROIDS {
        return Err(Error::invalid(format!(
            "need at least {CENTROIDS} training vectors, got {}",
            principals.count()
        )));
    }
    let sub_dim = d / m;
    let n = principals.count();
    let mut centroids = Vec::with_capacity(m * CENTROIDS * sub_dim);
    let mut buf = Vec::with_capacity(n * sub_dim);
    for s in 0..m {
        buf.clear();
        for row in principals.rows() {
            buf.extend_from_slice(&row[s * sub_dim..(s + 1) * sub_dim]);
        }
        let km = kmeans(&buf, sub_dim, CENTROIDS, DEFAULT_MAX_ITERS, seed.wrapping_add(s as u64));
        centroids.extend_from_slice(&km.centroids);
    }
    PqCodebook::from_parts(m, sub_dim, centroids)
}

/// `m` nibbles packed two per byte; sub-space `s` lives in byte `s / 2`,
/// low nibble when `s` is even.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedCode {
    m: usize,
    bytes: Vec<u8>,
}

impl QuantizedCode {
    pub fn zeroed(m: usize) -> Self {
        Self {
            m,
            bytes: vec![0; m.div_ceil(2)],
        }
    }

    pub fn from_nibbles(nibbles: &[u8]) -> Result<Self> {
        let mut code = Self::zeroed(nibbles.len());
        for (s, &n) in nibbles.iter().enumerate() {
            if n >= CENTROIDS as u8 {
                return Err(Error::invalid(format!("nibble {n} out of range")));
            }
            code.set(s, n);
        }
        Ok(code)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn get(&self, s: usize) -> u8 {
        let b = self.bytes[s / 2];
        if s % 2 == 0 {
            b & 0x0f
        } else {
            b >> 4
        }
    }

    #[inline]
    pub fn set(&mut self, s: usize, v: u8) {
        debug_assert!(v < 16);
        let b = &mut self.bytes[s / 2];
        if s % 2 == 0 {
            *b = (*b & 0xf0) | v;
        } else {
            *b = (*b & 0x0f) | (v << 4);
        }
    }

    pub fn nibbles(&self) -> Vec<u8> {
        (0..self.m).map(|s| self.get(s)).collect()
    }
}

/// Per-query `m x 16` table of 8-bit quantized sub-distances.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLut {
    m: usize,
    table: Vec<u8>,
    scale: f32,
    bias: f32,
}

impl QueryLut {
    /// Quantizes `m x 16` float sub-distances with one global affine map.
    pub fn quantize(m: usize, sub_dists: &[f32]) -> Self {
        assert_eq!(sub_dists.len(), m * CENTROIDS);
        let bias = sub_dists.iter().copied().fold(f32::INFINITY, f32::min);
        let max = sub_dists.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let scale = (max - bias) / 255.0;
        let table = if scale > 0.0 {
            sub_dists
                .iter()
                .map(|&f| ((f - bias) / scale).round().clamp(0.0, 255.0) as u8)
                .collect()
        } else {
            vec![0; sub_dists.len()]
        };
        Self {
            m,
            table,
            scale: if scale > 0.0 { scale } else { 0.0 },
            bias,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn bias(&self) -> f32 {
        self.bias
    }

    pub fn table(&self) -> &[u8] {
        &self.table
    }

    #[inline]
    pub fn raw(&self, s: usize, c: usize) -> u8 {
        self.table[s * CENTROIDS + c]
    }

    pub fn dequantize(&self, s: usize, c: usize) -> f32 {
        self.bias + self.scale * self.raw(s, c) as f32
    }

    /// Maps an integer sum of `m` raw entries to a distance. Shared by every
    /// evaluation path so they round identically.
    #[inline]
    pub fn finish(&self, raw_sum: u32) -> f32 {
        self.m as f32 * self.bias + self.scale * raw_sum as f32
    }
}

pub fn adc_scalar(lut: &QueryLut, code: &QuantizedCode) -> f32 {
    debug_assert_eq!(lut.m, code.m);
    let sum: u32 = (0..lut.m).map(|s| lut.raw(s, code.get(s) as usize) as u32).sum();
    lut.finish(sum)
}

/// Approximate distances for the first `n_valid` slots of an interleaved
/// block, using the widest shuffle kernel the CPU supports.
pub fn adc_block(lut: &QueryLut, block: InterleavedRef<'_>, n_valid: usize) -> Vec<f32> {
    let mut sums = vec![0u32; block.capacity()];
    raw_sums(lut, block, n_valid, &mut sums, Kernel::best());
    sums.truncate(n_valid);
    sums.into_iter().map(|s| lut.finish(s)).collect()
}

/// [`adc_block`] writing into reusable buffers; `out` receives `n_valid` values.
pub fn adc_block_into(lut: &QueryLut, block: InterleavedRef<'_>, n_valid: usize, scratch: &mut Vec<u32>, out: &mut Vec<f32>) {
    scratch.clear();
    scratch.resize(block.capacity(), 0);
    raw_sums(lut, block, n_valid, scratch, Kernel::best());
    out.clear();
    out.extend(scratch[..n_valid].iter().map(|&s| lut.finish(s)));
}

/// [`adc_block`] forced onto a specific kernel.
pub fn adc_block_with(lut: &QueryLut, block: InterleavedRef<'_>, n_valid: usize, kernel: Kernel) -> Vec<f32> {
    let mut sums = vec![0u32; block.capacity()];
    raw_sums(lut, block, n_valid, &mut sums, kernel);
    sums.truncate(n_valid);
    sums.into_iter().map(|s| lut.finish(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Ssse3,
    #[cfg(target_arch = "x86_64")]
    Avx2,
}

impl Kernel {
    pub fn best() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                return Kernel::Avx2;
            }
            if std::arch::is_x86_feature_detected!("ssse3") {
                return Kernel::Ssse3;
            }
        }
        Kernel::Portable
    }

    /// Every kernel usable on this CPU.
    pub fn available() -> Vec<Self> {
        #[allow(unused_mut)]
        let mut v = vec![Kernel::Portable];
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("ssse3") {
                v.push(Kernel::Ssse3);
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                v.push(Kernel::Avx2);
            }
        }
        v
    }
}

fn raw_sums(lut: &QueryLut, block: InterleavedRef<'_>, n_valid: usize, sums: &mut [u32], kernel: Kernel) {
    assert_eq!(lut.m, block.m(), "LUT and block disagree on m");
    assert!(n_valid <= block.capacity());
    if n_valid == 0 {
        return;
    }
    let m = lut.m;
    let groups = n_valid.div_ceil(LANES).min(block.full_groups());
    for g in 0..groups {
        let bytes = block.group_bytes(g);
        let out: &mut [u32; LANES] = (&mut sums[g * LANES..(g + 1) * LANES]).try_into().unwrap();
        match kernel {
            Kernel::Portable => group_portable(&lut.table, bytes, m, out),
            #[cfg(target_arch = "x86_64")]
            Kernel::Ssse3 => unsafe { x86::group_ssse3(&lut.table, bytes, m, out) },
            #[cfg(target_arch = "x86_64")]
            Kernel::Avx2 => unsafe { x86::group_avx2(&lut.table, bytes, m, out) },
        }
    }
    // Trailing partial group (capacity not a multiple of 16).
    let tail_start = block.full_groups() * LANES;
    for slot in tail_start..n_valid {
        sums[slot] = (0..m)
            .map(|s| lut.table[s * CENTROIDS + block.nibble(slot, s) as usize] as u32)
            .sum();
    }
}

/// One 16-lane group: 8 bytes per position, byte `b` holds lanes `2b`
/// (low nibble) and `2b + 1` (high nibble).
fn group_portable(table: &[u8], bytes: &[u8], m: usize, out: &mut [u32; LANES]) {
    for s in 0..m {
        let row = &table[s * CENTROIDS..(s + 1) * CENTROIDS];
        let pos = &bytes[s * 8..s * 8 + 8];
        for (b, &byte) in pos.iter().enumerate() {
            out[2 * b] += row[(byte & 0x0f) as usize] as u32;
            out[2 * b + 1] += row[(byte >> 4) as usize] as u32;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    use super::{CENTROIDS, LANES};

    /// u16 lanes may absorb this many 8-bit entries before spilling.
    const FLUSH_EVERY: usize = 256;

    #[inline]
    #[target_feature(enable = "ssse3")]
    unsafe fn spill(acc_lo: __m128i, acc_hi: __m128i, out: &mut [u32; LANES]) {
        let mut tmp = [0u16; 16];
        _mm_storeu_si128(tmp.as_mut_ptr().cast(), acc_lo);
        _mm_storeu_si128(tmp.as_mut_ptr().add(8).cast(), acc_hi);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o += t as u32;
        }
    }

    /// Lanes 0..15 of position `s` as byte indices in lane order.
    #[inline]
    #[target_feature(enable = "ssse3")]
    unsafe fn lane_indices(ptr: *const u8) -> __m128i {
        let mask = _mm_set1_epi8(0x0f);
        let packed = _mm_loadl_epi64(ptr.cast());
        let lo = _mm_and_si128(packed, mask);
        let hi = _mm_and_si128(_mm_srli_epi16(packed, 4), mask);
        _mm_unpacklo_epi8(lo, hi)
    }

    #[target_feature(enable = "ssse3")]
    pub(super) unsafe fn group_ssse3(table: &[u8], bytes: &[u8], m: usize, out: &mut [u32; LANES]) {
        assert!(table.len() >= m * CENTROIDS && bytes.len() >= m * 8);
        let zero = _mm_setzero_si128();
        let mut acc_lo = zero;
        let mut acc_hi = zero;
        for s in 0..m {
            let idx = lane_indices(bytes.as_ptr().add(s * 8));
            let row = _mm_loadu_si128(table.as_ptr().add(s * CENTROIDS).cast());
            let vals = _mm_shuffle_epi8(row, idx);
            acc_lo = _mm_add_epi16(acc_lo, _mm_unpacklo_epi8(vals, zero));
            acc_hi = _mm_add_epi16(acc_hi, _mm_unpackhi_epi8(vals, zero));
            if (s + 1) % FLUSH_EVERY == 0 {
                spill(acc_lo, acc_hi, out);
                acc_lo = zero;
                acc_hi = zero;
            }
        }
        spill(acc_lo, acc_hi, out);
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    unsafe fn flush(acc_lo: __m256i, acc_hi: __m256i, out: &mut [u32; LANES]) {
        let lo = _mm_add_epi16(_mm256_castsi256_si128(acc_lo), _mm256_extracti128_si256(acc_lo, 1));
        let hi = _mm_add_epi16(_mm256_castsi256_si128(acc_hi), _mm256_extracti128_si256(acc_hi, 1));
        spill(lo, hi, out);
    }

    /// Two positions per iteration: position `s` in the low 128-bit half,
    /// `s + 1` in the high half, each shuffled against its own table row.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn group_avx2(table: &[u8], bytes: &[u8], m: usize, out: &mut [u32; LANES]) {
        assert!(table.len() >= m * CENTROIDS && bytes.len() >= m * 8);
        let zero = _mm256_setzero_si256();
        let mut acc_lo = zero;
        let mut acc_hi = zero;
        let mut since_flush = 0usize;
        let mut s = 0usize;
        while s + 2 <= m {
            let a = lane_indices(bytes.as_ptr().add(s * 8));
            let b = lane_indices(bytes.as_ptr().add((s + 1) * 8));
            let idx = _mm256_inserti128_si256(_mm256_castsi128_si256(a), b, 1);
            let rows = _mm256_loadu_si256(table.as_ptr().add(s * CENTROIDS).cast());
            let vals = _mm256_shuffle_epi8(rows, idx);
            acc_lo = _mm256_add_epi16(acc_lo, _mm256_unpacklo_epi8(vals, zero));
            acc_hi = _mm256_add_epi16(acc_hi, _mm256_unpackhi_epi8(vals, zero));
            s += 2;
            // Each u16 lane of a half sees one entry per step; the two halves
            // are added at spill time, so budget for both.
            since_flush += 2;
            if since_flush >= FLUSH_EVERY {
                flush(acc_lo, acc_hi, out);
                acc_lo = zero;
                acc_hi = zero;
                since_flush = 0;
            }
        }
        flush(acc_lo, acc_hi, out);
        if s < m {
            let idx = lane_indices(bytes.as_ptr().add(s * 8));
            let row = _mm_loadu_si128(table.as_ptr().add(s * CENTROIDS).cast());
            let vals = _mm_shuffle_epi8(row, idx);
            let z = _mm_setzero_si128();
            spill(_mm_unpacklo_epi8(vals, z), _mm_unpackhi_epi8(vals, z), out);
        }
    }
}
