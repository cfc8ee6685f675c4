mod common;

use pagegraph::graph::{build_vamana, EntryTable, VamanaParams};
use pagegraph::index::{build_index, BuildConfig, DiskIndex};
use pagegraph::layout::{node_payload_bytes, page_size_for, parse_page, IndexPrefix, NodeLayout, SENTINEL};
use pagegraph::pca::fit_pca;
use pagegraph::pq::train_codebook;
use pagegraph::store::StoreOptions;

#[test]
fn payload_formula_by_hand() {
    // 4*128 + 4*32 + 32*(64/8 + 12) = 512 + 128 + 640.
    assert_eq!(node_payload_bytes(128, 32, 64), 1280);
    let l = NodeLayout::new(128, 64, 32, 16).unwrap();
    assert_eq!(l.payload_bytes(), 1280);
    assert_eq!(l.page_size, 4096);
    assert_eq!(page_size_for(4096), 4096);
    assert_eq!(page_size_for(4097), 8192);
    for (d, r, p) in [(96, 64, 48), (960, 64, 256), (100, 48, 48), (128, 128, 64)] {
        let l = NodeLayout::new(d, p, r, p / 4).unwrap();
        assert_eq!(l.payload_bytes(), node_payload_bytes(d, r, p));
        assert_eq!(l.page_size % 4096, 0);
        assert!(l.page_size >= l.payload_bytes() && l.page_size - l.payload_bytes() < 4096);
    }
}

#[test]
fn pages_reproduce_graph_vectors_and_codes() {
    let ds = common::clustered(600, 32, 6, 8, 0.1, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("i.idx");
    let pca = fit_pca(&ds, 16, 5).unwrap();
    let rotated = pca.transform_dataset(&ds).unwrap();
    let principals: Vec<f32> = rotated.chunks(32).flat_map(|r| r[..16].to_vec()).collect();
    let cb = train_codebook(&pagegraph::dataset::VectorDataset::new(600, 16, principals).unwrap(), 4, 5).unwrap();
    let g = build_vamana(&ds, &VamanaParams { r: 24, l_build: 48, ..Default::default() }).unwrap();
    let table = EntryTable::single(&ds, g.medoid);
    let header = pagegraph::layout::serialize_index(&ds, &g.adjacency, g.medoid, &table, &pca, &cb, &path).unwrap();

    let prefix = IndexPrefix::read(&path).unwrap();
    assert_eq!(prefix.header, header);
    assert_eq!(prefix.pca, pca);
    let len = std::fs::metadata(&path).unwrap().len();
    assert_eq!(len, prefix.data_offset + 600 * header.page_size as u64);
    assert_eq!(prefix.data_offset % header.page_size as u64, 0);

    let bytes = std::fs::read(&path).unwrap();
    for id in 0..600u32 {
        let off = prefix.page_offset(id) as usize;
        let page = parse_page(&bytes[off..off + header.page_size], &prefix.layout, 600).unwrap();
        let owned = page.to_owned();
        assert_eq!(owned.neighbors, g.adjacency.neighbors(id as usize));
        let row = &rotated[id as usize * 32..(id as usize + 1) * 32];
        assert_eq!(owned.principal, row[..16]);
        assert_eq!(owned.residual, row[16..]);
        let codes = owned.neighbor_codes();
        for (slot, &nb) in owned.neighbors.iter().enumerate() {
            let nrow = &rotated[nb as usize * 32..nb as usize * 32 + 16];
            assert_eq!(codes[slot], cb.encode(nrow).unwrap());
        }
        let raw_ids = &bytes[off + prefix.layout.ids_offset()..off + prefix.layout.codes_offset()];
        for slot in owned.neighbors.len()..24 {
            assert_eq!(u32::from_le_bytes(raw_ids[4 * slot..4 * slot + 4].try_into().unwrap()), SENTINEL);
        }
    }
}

#[test]
fn built_index_reopens_with_identical_adjacency() {
    let ds = common::clustered(800, 24, 6, 8, 0.1, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.idx");
    let cfg = BuildConfig {
        r: 16,
        l_build: 32,
        d_pca: Some(12),
        entries: 10,
        ..Default::default()
    };
    let report = build_index(&ds, &cfg, &path).unwrap();
    let idx = DiskIndex::open(&path, StoreOptions::default()).unwrap();
    assert_eq!(*idx.header(), report.header);
    let g = pagegraph::graph::build_vamana(&ds, &cfg.vamana()).unwrap();
    assert_eq!(idx.read_adjacency().unwrap(), g.adjacency);
    assert_eq!(idx.prefix().entries.len(), 10);
}

#[test]
fn corrupted_files_are_rejected() {
    let ds = common::clustered(100, 16, 4, 4, 0.1, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.idx");
    build_index(&ds, &BuildConfig { r: 8, l_build: 16, entries: 4, ..Default::default() }, &path).unwrap();
    let good = std::fs::read(&path).unwrap();

    let mut bad = good.clone();
    bad[0] ^= 0xff;
    std::fs::write(&path, &bad).unwrap();
    assert!(IndexPrefix::read(&path).is_err());

    std::fs::write(&path, &good[..good.len() - 1]).unwrap();
    assert!(IndexPrefix::read(&path).is_err());

    std::fs::write(&path, &good).unwrap();
    let prefix = IndexPrefix::read(&path).unwrap();
    let off = prefix.page_offset(3) as usize;
    let mut page = good[off..off + prefix.header.page_size].to_vec();
    let c = prefix.layout.count_offset();
    page[c..c + 4].copy_from_slice(&999u32.to_le_bytes());
    assert!(parse_page(&page, &prefix.layout, 100).is_err());
}
