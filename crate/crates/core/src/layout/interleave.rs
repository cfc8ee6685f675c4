//! Position-major packing of a node's neighbor codes.
//!
//! Neighbors are grouped 16 at a time. Inside a full group, sub-space
//! position `s` occupies 8 consecutive bytes: byte `b` carries lane `2b` in
//! its low nibble and lane `2b + 1` in its high nibble, so one 8-byte load
//! plus a nibble unpack yields the 16 table indices for position `s`.
//!
//! A trailing group of `w < 16` lanes stores its nibbles as a dense
//! position-major stream (`s * w + lane`), keeping the block at exactly
//! `ceil(capacity * m / 2)` bytes.
//!
//! ```text
//! group g (16 lanes), m positions, 8m bytes:
//!   [s=0: l0|l1 l2|l3 .. l14|l15][s=1: ...] ... [s=m-1: ...]
//! ```

use crate::error::{Error, Result};
use crate::pq::QuantizedCode;

/// Neighbors per lane group; one byte shuffle covers a group.
pub const LANES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavedBlock {
    capacity: usize,
    m: usize,
    bytes: Vec<u8>,
}

/// Borrowed view over interleaved bytes, e.g. straight out of a page buffer.
#[derive(Debug, Clone, Copy)]
pub struct InterleavedRef<'a> {
    capacity: usize,
    m: usize,
    bytes: &'a [u8],
}

pub fn block_len(capacity: usize, m: usize) -> usize {
    (capacity * m).div_ceil(2)
}

#[inline]
fn nibble_index(capacity: usize, m: usize, slot: usize, s: usize) -> usize {
    let full = capacity / LANES;
    let g = slot / LANES;
    if g < full {
        g * LANES * m + s * LANES + slot % LANES
    } else {
        let w = capacity - full * LANES;
        full * LANES * m + s * w + (slot - full * LANES)
    }
}

impl InterleavedBlock {
    /// Packs `codes` into a block of `capacity` slots; slots past
    /// `codes.len()` hold the all-zero code.
    pub fn interleave(codes: &[QuantizedCode], capacity: usize) -> Result<Self> {
        let m = codes.first().map(QuantizedCode::m).unwrap_or(0);
        Self::interleave_m(codes, m, capacity)
    }

    /// As [`interleave`](Self::interleave) with an explicit `m`, so an empty
    /// neighbor list still produces a correctly sized block.
    pub fn interleave_m(codes: &[QuantizedCode], m: usize, capacity: usize) -> Result<Self> {
        if codes.len() > capacity {
            return Err(Error::invalid(format!(
                "{} codes exceed block capacity {capacity}",
                codes.len()
            )));
        }
        if let Some(c) = codes.iter().find(|c| c.m() != m) {
            return Err(Error::invalid(format!("code has m = {}, expected {m}", c.m())));
        }
        let mut bytes = vec![0u8; block_len(capacity, m)];
        for (slot, code) in codes.iter().enumerate() {
            for s in 0..m {
                let idx = nibble_index(capacity, m, slot, s);
                let v = code.get(s);
                if idx % 2 == 0 {
                    bytes[idx / 2] |= v;
                } else {
                    bytes[idx / 2] |= v << 4;
                }
            }
        }
        Ok(Self { capacity, m, bytes })
    }

    pub fn from_bytes(capacity: usize, m: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != block_len(capacity, m) {
            return Err(Error::format(format!(
                "interleaved block is {} bytes, expected {}",
                bytes.len(),
                block_len(capacity, m)
            )));
        }
        Ok(Self { capacity, m, bytes })
    }

    pub fn view(&self) -> InterleavedRef<'_> {
        InterleavedRef {
            capacity: self.capacity,
            m: self.m,
            bytes: &self.bytes,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn de_interleave(&self) -> Vec<QuantizedCode> {
        self.view().de_interleave()
    }
}

impl<'a> InterleavedRef<'a> {
    pub fn new(capacity: usize, m: usize, bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() != block_len(capacity, m) {
            return Err(Error::format(format!(
                "interleaved block is {} bytes, expected {}",
                bytes.len(),
                block_len(capacity, m)
            )));
        }
        Ok(Self { capacity, m, bytes })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bytes(&self) -> &'a [u8] {
        self.bytes
    }

    pub fn full_groups(&self) -> usize {
        self.capacity / LANES
    }

    /// The `8 * m` bytes of full group `g`.
    #[inline]
    pub fn group_bytes(&self, g: usize) -> &'a [u8] {
        let len = LANES * self.m / 2;
        &self.bytes[g * len..(g + 1) * len]
    }

    #[inline]
    pub fn nibble(&self, slot: usize, s: usize) -> u8 {
        let idx = nibble_index(self.capacity, self.m, slot, s);
        let b = self.bytes[idx / 2];
        if idx % 2 == 0 {
            b & 0x0f
        } else {
            b >> 4
        }
    }

    pub fn code(&self, slot: usize) -> QuantizedCode {
        let mut code = QuantizedCode::zeroed(self.m);
        for s in 0..self.m {
            code.set(s, self.nibble(slot, s));
        }
        code
    }

    pub fn de_interleave(&self) -> Vec<QuantizedCode> {
        (0..self.capacity).map(|slot| self.code(slot)).collect()
    }

    pub fn to_owned(&self) -> InterleavedBlock {
        InterleavedBlock {
            capacity: self.capacity,
            m: self.m,
            bytes: self.bytes.to_vec(),
        }
    }
}
