//! On-disk index format.
//!
//! ```text
//! [magic u32][version u32][count u32][d u32][d_pca u32][r u32][page_size u32][medoid u32][E u32]
//! [PcaModel][PqCodebook][E x (u32 id, d x f32)]
//! [zero pad to a page boundary]
//! [page 0][page 1] ... [page count-1]
//! ```
//!
//! Every node owns one page, self-contained for search:
//!
//! ```text
//! [principal d_pca x f32][residual (d - d_pca) x f32]
//! [n_neighbors u32][neighbor ids r x u32, padded with SENTINEL]
//! [interleaved neighbor codes, ceil(r * m / 2) bytes][reserved 12r - 4 bytes]
//! [zero pad to page_size]
//! ```
//!
//! With 4-wide sub-spaces the payload is exactly `4d + 4r + r(d_pca/8 + 12)`.

pub mod interleave;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::VectorDataset;
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyList, EntryTable, MAX_DEGREE};
use crate::pca::PcaModel;
use crate::pq::{PqCodebook, QuantizedCode};
use interleave::{block_len, InterleavedBlock, InterleavedRef};

pub const MAGIC: u32 = 0x4750_4741; // "AGPG" little-endian
pub const VERSION: u32 = 1;
pub const PAGE_ALIGN: usize = 4096;
pub const HEADER_BYTES: usize = 9 * 4;
/// Neighbor id stored in unused slots.
pub const SENTINEL: u32 = u32::MAX;

/// Node payload in bytes before page alignment: `4d + 4r + r(d_pca/8 + 12)`.
pub fn node_payload_bytes(d: usize, r: usize, d_pca: usize) -> usize {
    4 * d + 4 * r + r * (d_pca / 8 + 12)
}

/// Smallest multiple of 4 KiB holding `payload` bytes.
pub fn page_size_for(payload: usize) -> usize {
    payload.div_ceil(PAGE_ALIGN).max(1) * PAGE_ALIGN
}

/// Byte offsets of each field inside a node page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    pub dim: usize,
    pub d_pca: usize,
    pub r: usize,
    pub m: usize,
    pub page_size: usize,
}

impl NodeLayout {
    pub fn new(dim: usize, d_pca: usize, r: usize, m: usize) -> Result<Self> {
        if d_pca == 0 || d_pca > dim {
            return Err(Error::invalid(format!("d_pca = {d_pca} must be in 1..={dim}")));
        }
        if r == 0 || r > MAX_DEGREE {
            return Err(Error::invalid(format!("r = {r} must be in 1..={MAX_DEGREE}")));
        }
        let mut layout = Self {
            dim,
            d_pca,
            r,
            m,
            page_size: 0,
        };
        layout.page_size = page_size_for(layout.payload_bytes());
        Ok(layout)
    }

    pub fn count_offset(&self) -> usize {
        4 * self.dim
    }

    pub fn ids_offset(&self) -> usize {
        self.count_offset() + 4
    }

    pub fn codes_offset(&self) -> usize {
        self.ids_offset() + 4 * self.r
    }

    pub fn codes_len(&self) -> usize {
        block_len(self.r, self.m)
    }

    pub fn reserved_len(&self) -> usize {
        12 * self.r - 4
    }

    pub fn payload_bytes(&self) -> usize {
        self.codes_offset() + self.codes_len() + self.reserved_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexHeader {
    pub count: usize,
    pub dim: usize,
    pub d_pca: usize,
    pub r: usize,
    pub page_size: usize,
    pub medoid: u32,
    pub entries: usize,
}

impl IndexHeader {
    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for v in [
            MAGIC,
            VERSION,
            self.count as u32,
            self.dim as u32,
            self.d_pca as u32,
            self.r as u32,
            self.page_size as u32,
            self.medoid,
            self.entries as u32,
        ] {
            w.write_u32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut f = [0u32; 9];
        r.read_u32_into::<LittleEndian>(&mut f)
            .map_err(|_| Error::format("truncated index header"))?;
        if f[0] != MAGIC {
            return Err(Error::format(format!("bad magic {:#x}", f[0])));
        }
        if f[1] != VERSION {
            return Err(Error::format(format!("unsupported index version {}", f[1])));
        }
        let h = Self {
            count: f[2] as usize,
            dim: f[3] as usize,
            d_pca: f[4] as usize,
            r: f[5] as usize,
            page_size: f[6] as usize,
            medoid: f[7],
            entries: f[8] as usize,
        };
        if h.count == 0 || h.page_size == 0 || h.page_size % PAGE_ALIGN != 0 || h.entries == 0 {
            return Err(Error::format("index header has invalid sizes"));
        }
        if h.medoid as usize >= h.count {
            return Err(Error::format("medoid out of range"));
        }
        Ok(h)
    }
}

/// Parsed, owned node page.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePage {
    pub principal: Vec<f32>,
    pub residual: Vec<f32>,
    pub neighbors: Vec<u32>,
    pub codes: InterleavedBlock,
}

impl NodePage {
    /// Neighbor codes in slot order, padding slots included.
    pub fn neighbor_codes(&self) -> Vec<QuantizedCode> {
        self.codes.de_interleave()
    }
}

/// Zero-copy view over a page buffer.
#[derive(Debug, Clone, Copy)]
pub struct PageView<'a> {
    layout: &'a NodeLayout,
    bytes: &'a [u8],
    n_neighbors: usize,
}

impl<'a> PageView<'a> {
    pub fn n_neighbors(&self) -> usize {
        self.n_neighbors
    }

    pub fn neighbor(&self, i: usize) -> u32 {
        let off = self.layout.ids_offset() + 4 * i;
        u32::from_le_bytes(self.bytes[off..off + 4].try_into().unwrap())
    }

    pub fn neighbors(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.n_neighbors).map(|i| self.neighbor(i))
    }

    pub fn codes(&self) -> InterleavedRef<'a> {
        let off = self.layout.codes_offset();
        InterleavedRef::new(self.layout.r, self.layout.m, &self.bytes[off..off + self.layout.codes_len()])
            .expect("layout-sized slice")
    }

    fn floats(&self, from: usize, len: usize) -> impl Iterator<Item = f32> + 'a {
        self.bytes[from * 4..(from + len) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
    }

    /// Decodes principal and residual (the full rotated vector) into `out`.
    pub fn read_vector(&self, out: &mut [f32]) {
        for (o, v) in out.iter_mut().zip(self.floats(0, self.layout.dim)) {
            *o = v;
        }
    }

    /// Exact squared distance to a rotated query, split into the principal and
    /// residual contributions. `scratch` must hold `dim` floats.
    pub fn exact_distance(&self, q_rot: &[f32], scratch: &mut [f32]) -> f32 {
        self.read_vector(scratch);
        let p = self.layout.d_pca;
        l2_sq(&q_rot[..p], &scratch[..p]) + l2_sq(&q_rot[p..], &scratch[p..])
    }

    pub fn to_owned(&self) -> NodePage {
        NodePage {
            principal: self.floats(0, self.layout.d_pca).collect(),
            residual: self.floats(self.layout.d_pca, self.layout.dim - self.layout.d_pca).collect(),
            neighbors: self.neighbors().collect(),
            codes: self.codes().to_owned(),
        }
    }
}

/// Validates and wraps a page buffer.
pub fn parse_page<'a>(bytes: &'a [u8], layout: &'a NodeLayout, node_count: usize) -> Result<PageView<'a>> {
    if bytes.len() != layout.page_size {
        return Err(Error::format(format!(
            "page buffer is {} bytes, expected {}",
            bytes.len(),
            layout.page_size
        )));
    }
    let off = layout.count_offset();
    let n = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    if n > layout.r {
        return Err(Error::format(format!("corrupt neighbor count {n} > r = {}", layout.r)));
    }
    let view = PageView {
        layout,
        bytes,
        n_neighbors: n,
    };
    for i in 0..layout.r {
        let id = view.neighbor(i);
        if i < n && id as usize >= node_count {
            return Err(Error::format(format!("neighbor id {id} out of range")));
        }
        if i >= n && id != SENTINEL {
            return Err(Error::format(format!("padding slot {i} holds {id}, not the sentinel")));
        }
    }
    Ok(view)
}

/// Fills `page` (already `page_size` long) with one node's record.
pub fn encode_page(
    layout: &NodeLayout,
    rotated: &[f32],
    neighbors: &[u32],
    neighbor_codes: &[QuantizedCode],
    page: &mut [u8],
) -> Result<()> {
    if rotated.len() != layout.dim {
        return Err(Error::DimensionMismatch {
            expected: layout.dim,
            got: rotated.len(),
        });
    }
    if neighbors.len() > layout.r || neighbors.len() != neighbor_codes.len() {
        return Err(Error::invalid("neighbor list and codes disagree or exceed r"));
    }
    page.fill(0);
    for (chunk, v) in page[..4 * layout.dim].chunks_exact_mut(4).zip(rotated) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    let off = layout.count_offset();
    page[off..off + 4].copy_from_slice(&(neighbors.len() as u32).to_le_bytes());
    for i in 0..layout.r {
        let id = neighbors.get(i).copied().unwrap_or(SENTINEL);
        let o = layout.ids_offset() + 4 * i;
        page[o..o + 4].copy_from_slice(&id.to_le_bytes());
    }
    let block = InterleavedBlock::interleave_m(neighbor_codes, layout.m, layout.r)?;
    let o = layout.codes_offset();
    page[o..o + layout.codes_len()].copy_from_slice(block.bytes());
    Ok(())
}

/// Everything outside the pages: header, models and entry table.
#[derive(Debug, Clone)]
pub struct IndexPrefix {
    pub header: IndexHeader,
    pub pca: PcaModel,
    pub codebook: PqCodebook,
    pub entries: EntryTable,
    pub layout: NodeLayout,
    /// Byte offset of page 0.
    pub data_offset: u64,
}

impl IndexPrefix {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);
        let header = IndexHeader::read_from(&mut r)?;
        let pca = PcaModel::read_from(&mut r)?;
        let codebook = PqCodebook::read_from(&mut r)?;
        if pca.dim() != header.dim || pca.d_pca() != header.d_pca || codebook.d_pca() != header.d_pca {
            return Err(Error::format("models disagree with the index header"));
        }
        let mut ids = Vec::with_capacity(header.entries);
        let mut vectors = vec![0.0f32; header.entries * header.dim];
        for e in 0..header.entries {
            ids.push(r.read_u32::<LittleEndian>()?);
            r.read_f32_into::<LittleEndian>(&mut vectors[e * header.dim..(e + 1) * header.dim])?;
        }
        let entries = EntryTable::new(header.dim, ids, vectors)?;
        if entries.ids().iter().any(|&id| id as usize >= header.count) {
            return Err(Error::format("entry point id out of range"));
        }
        let layout = NodeLayout::new(header.dim, header.d_pca, header.r, codebook.m())?;
        if layout.page_size != header.page_size {
            return Err(Error::format(format!(
                "header page size {} disagrees with layout {}",
                header.page_size, layout.page_size
            )));
        }
        let prefix_len = HEADER_BYTES + pca.serialized_len() + codebook.serialized_len() + entries.serialized_len();
        let data_offset = (prefix_len.div_ceil(header.page_size) * header.page_size) as u64;
        let expected = data_offset + (header.count * header.page_size) as u64;
        if file_len != expected {
            return Err(Error::format(format!(
                "index file is {file_len} bytes, header implies {expected}"
            )));
        }
        Ok(Self {
            header,
            pca,
            codebook,
            entries,
            layout,
            data_offset,
        })
    }

    pub fn page_offset(&self, id: u32) -> u64 {
        self.data_offset + id as u64 * self.header.page_size as u64
    }
}

/// Writes the complete index file. Base vectors are rotated with `pca` and
/// their principal parts encoded with `codebook`.
pub fn serialize_index(
    ds: &VectorDataset,
    adj: &AdjacencyList,
    medoid: u32,
    entries: &EntryTable,
    pca: &PcaModel,
    codebook: &PqCodebook,
    out_path: impl AsRef<Path>,
) -> Result<IndexHeader> {
    let n = ds.count();
    let d = ds.dim();
    if adj.len() != n {
        return Err(Error::invalid(format!("adjacency has {} nodes, dataset {n}", adj.len())));
    }
    if pca.dim() != d || codebook.d_pca() != pca.d_pca() {
        return Err(Error::invalid("PCA model and codebook do not match the dataset"));
    }
    if entries.dim() != d || entries.is_empty() {
        return Err(Error::invalid("entry table does not match the dataset"));
    }
    if medoid as usize >= n {
        return Err(Error::invalid("medoid out of range"));
    }
    let layout = NodeLayout::new(d, pca.d_pca(), adj.max_degree(), codebook.m())?;
    let header = IndexHeader {
        count: n,
        dim: d,
        d_pca: pca.d_pca(),
        r: layout.r,
        page_size: layout.page_size,
        medoid,
        entries: entries.len(),
    };

    let rotated = pca.transform_dataset(ds)?;
    let p = pca.d_pca();
    let codes: Vec<QuantizedCode> = rotated
        .chunks_exact(d)
        .map(|row| codebook.encode(&row[..p]))
        .collect::<Result<_>>()?;

    let mut w = BufWriter::with_capacity(1 << 20, File::create(out_path.as_ref())?);
    header.write_to(&mut w)?;
    pca.write_to(&mut w)?;
    codebook.write_to(&mut w)?;
    entries.write_to(&mut w)?;
    let prefix_len = HEADER_BYTES + pca.serialized_len() + codebook.serialized_len() + entries.serialized_len();
    let data_offset = prefix_len.div_ceil(layout.page_size) * layout.page_size;
    w.write_all(&vec![0u8; data_offset - prefix_len])?;

    let mut page = vec![0u8; layout.page_size];
    let mut nbr_codes = Vec::with_capacity(layout.r);
    for i in 0..n {
        let nbrs = adj.neighbors(i);
        nbr_codes.clear();
        nbr_codes.extend(nbrs.iter().map(|&j| codes[j as usize].clone()));
        encode_page(&layout, &rotated[i * d..(i + 1) * d], nbrs, &nbr_codes, &mut page)?;
        w.write_all(&page)?;
    }
    w.flush()?;
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_formula_examples() {
        assert_eq!(node_payload_bytes(128, 32, 64), 1280);
        assert_eq!(page_size_for(1280), 4096);
        assert_eq!(node_payload_bytes(960, 64, 256), 6912);
        assert_eq!(page_size_for(6912), 8192);
        assert_eq!(node_payload_bytes(960, 128, 256), 9984);
        assert_eq!(page_size_for(9984), 12288);
    }

    #[test]
    fn layout_matches_formula_for_4_wide_subspaces() {
        for &(d, r, p) in &[(128, 32, 64), (960, 64, 256), (960, 128, 256), (96, 1, 48), (768, 48, 8)] {
            let l = NodeLayout::new(d, p, r, p / 4).unwrap();
            assert_eq!(l.payload_bytes(), node_payload_bytes(d, r, p), "{d} {r} {p}");
        }
    }

    #[test]
    fn layout_rejects_bad_degree() {
        assert!(NodeLayout::new(64, 32, 129, 8).is_err());
        assert!(NodeLayout::new(64, 65, 16, 8).is_err());
    }

    fn sample_page(layout: &NodeLayout, n_nbrs: usize) -> (Vec<u8>, Vec<f32>, Vec<u32>, Vec<QuantizedCode>) {
        let rotated: Vec<f32> = (0..layout.dim).map(|i| i as f32 * 0.25 - 3.0).collect();
        let nbrs: Vec<u32> = (0..n_nbrs as u32).map(|i| i * 3 + 1).collect();
        let codes: Vec<QuantizedCode> = (0..n_nbrs)
            .map(|i| QuantizedCode::from_nibbles(&(0..layout.m).map(|s| ((i + s) % 16) as u8).collect::<Vec<_>>()).unwrap())
            .collect();
        let mut page = vec![0u8; layout.page_size];
        encode_page(layout, &rotated, &nbrs, &codes, &mut page).unwrap();
        (page, rotated, nbrs, codes)
    }

    #[test]
    fn page_round_trip() {
        let layout = NodeLayout::new(24, 16, 20, 4).unwrap();
        let (page, rotated, nbrs, codes) = sample_page(&layout, 13);
        let view = parse_page(&page, &layout, 1000).unwrap();
        let owned = view.to_owned();
        assert_eq!(owned.principal, &rotated[..16]);
        assert_eq!(owned.residual, &rotated[16..]);
        assert_eq!(owned.neighbors, nbrs);
        assert_eq!(&owned.neighbor_codes()[..13], codes.as_slice());
    }

    #[test]
    fn empty_neighbor_list() {
        let layout = NodeLayout::new(8, 8, 4, 2).unwrap();
        let (page, ..) = sample_page(&layout, 0);
        let view = parse_page(&page, &layout, 10).unwrap();
        assert_eq!(view.n_neighbors(), 0);
        assert_eq!(view.neighbors().count(), 0);
    }

    #[test]
    fn parse_errors() {
        let layout = NodeLayout::new(8, 8, 4, 2).unwrap();
        let (mut page, ..) = sample_page(&layout, 2);
        assert!(parse_page(&page[..100], &layout, 10).is_err());
        let off = layout.count_offset();
        page[off..off + 4].copy_from_slice(&5u32.to_le_bytes());
        assert!(parse_page(&page, &layout, 10).is_err());
        page[off..off + 4].copy_from_slice(&2u32.to_le_bytes());
        // Padding slot without the sentinel.
        let o = layout.ids_offset() + 4 * 3;
        page[o..o + 4].copy_from_slice(&1u32.to_le_bytes());
        assert!(parse_page(&page, &layout, 10).is_err());
    }
}
