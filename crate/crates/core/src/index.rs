//! Index build pipeline and the loaded on-disk index.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cache::{compute_in_degrees, NodeCache, CACHE_BUDGET_FRACTION};
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::graph::{build_ep_table, build_vamana, AdjacencyList, VamanaParams, DEFAULT_EP_SAMPLE, MAX_DEGREE};
use crate::layout::{parse_page, serialize_index, IndexHeader, IndexPrefix};
use crate::pca::{fit_pca, DEFAULT_PCA_SAMPLE};
use crate::pq::{train_codebook, DEFAULT_SUB_DIM, MAX_SUBSPACES};
use crate::store::{PageStore, StoreOptions};

pub const DEFAULT_ENTRIES: usize = 300;
pub const DEFAULT_PQ_SAMPLE: usize = 100_000;

/// `256` for wide vectors, otherwise the largest multiple of the sub-space
/// width not above `dim / 2`.
pub fn default_d_pca(dim: usize) -> usize {
    if dim >= 256 {
        256
    } else {
        (dim / 2 / DEFAULT_SUB_DIM * DEFAULT_SUB_DIM).max(DEFAULT_SUB_DIM.min(dim))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub r: usize,
    pub l_build: usize,
    pub alpha: f32,
    /// `None` picks [`default_d_pca`].
    pub d_pca: Option<usize>,
    /// Number of PQ sub-spaces; `None` uses 4-wide sub-spaces.
    pub m: Option<usize>,
    /// Entry-point table size, clamped to the dataset size.
    pub entries: usize,
    pub seed: u64,
    pub threads: usize,
    pub pca_sample: usize,
    pub pq_sample: usize,
    pub ep_sample: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            r: 64,
            l_build: 200,
            alpha: 1.2,
            d_pca: None,
            m: None,
            entries: DEFAULT_ENTRIES,
            seed: 0,
            threads: 1,
            pca_sample: DEFAULT_PCA_SAMPLE,
            pq_sample: DEFAULT_PQ_SAMPLE,
            ep_sample: DEFAULT_EP_SAMPLE,
        }
    }
}

/// Parameters after defaults are applied for a concrete dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedBuild {
    pub count: usize,
    pub dim: usize,
    pub d_pca: usize,
    pub m: usize,
    pub entries: usize,
    pub vamana: VamanaParams,
}

impl BuildConfig {
    pub fn vamana(&self) -> VamanaParams {
        VamanaParams {
            r: self.r,
            l_build: self.l_build,
            alpha: self.alpha,
            seed: self.seed,
            threads: self.threads,
        }
    }

    /// Checks every parameter against `count x dim` input without doing work.
    pub fn resolve(&self, count: usize, dim: usize) -> Result<ResolvedBuild> {
        self.vamana().validate()?;
        if count == 0 || dim == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        let d_pca = self.d_pca.unwrap_or_else(|| default_d_pca(dim));
        if d_pca == 0 || d_pca > dim {
            return Err(Error::invalid(format!("d_pca = {d_pca} must be in 1..={dim}")));
        }
        let m = match self.m {
            Some(m) => m,
            None => {
                if d_pca % DEFAULT_SUB_DIM != 0 {
                    return Err(Error::invalid(format!(
                        "d_pca = {d_pca} is not divisible by the sub-space width {DEFAULT_SUB_DIM}"
                    )));
                }
                d_pca / DEFAULT_SUB_DIM
            }
        };
        if m == 0 || m > MAX_SUBSPACES || d_pca % m != 0 {
            return Err(Error::invalid(format!(
                "d_pca = {d_pca} must split into m = {m} equal sub-spaces (m <= {MAX_SUBSPACES})"
            )));
        }
        if self.entries == 0 {
            return Err(Error::invalid("entries must be >= 1"));
        }
        if self.pca_sample == 0 || self.pq_sample < 16 || self.ep_sample == 0 {
            return Err(Error::invalid("sample sizes too small"));
        }
        if count < 16 {
            return Err(Error::invalid(format!("need at least 16 vectors to train the codebook, got {count}")));
        }
        debug_assert!(self.r <= MAX_DEGREE);
        Ok(ResolvedBuild {
            count,
            dim,
            d_pca,
            m,
            entries: self.entries.min(count),
            vamana: self.vamana(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub header: IndexHeader,
    pub resolved: ResolvedBuild,
    /// `(stage, duration)` in execution order.
    pub stages: Vec<(&'static str, Duration)>,
    pub repaired_nodes: usize,
}

impl BuildReport {
    pub fn total(&self) -> Duration {
        self.stages.iter().map(|s| s.1).sum()
    }
}

fn sample_rows(ds: &VectorDataset, cap: usize, seed: u64) -> Result<VectorDataset> {
    if ds.count() <= cap {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, ds.count(), cap).into_vec();
    ids.sort_unstable();
    ds.select(&ids)
}

/// Fits PCA and balances it, trains the codebook, builds the graph and the
/// entry table, then writes the index file.
pub fn build_index(ds: &VectorDataset, config: &BuildConfig, out: impl AsRef<Path>) -> Result<BuildReport> {
    let resolved = config.resolve(ds.count(), ds.dim())?;
    let mut stages = Vec::new();
    let seed = config.seed;

    let t = Instant::now();
    let pca = fit_pca(&sample_rows(ds, config.pca_sample, seed ^ 0x5043_4131)?, resolved.d_pca, seed)?;
    stages.push(("pca", t.elapsed()));

    let t = Instant::now();
    let pq_rows = sample_rows(ds, config.pq_sample, seed ^ 0x5051_3131)?;
    let rotated = pca.transform_dataset(&pq_rows)?;
    let principals: Vec<f32> = rotated
        .chunks_exact(ds.dim())
        .flat_map(|r| r[..resolved.d_pca].iter().copied())
        .collect();
    let principals = VectorDataset::new(pq_rows.count(), resolved.d_pca, principals)?;
    let codebook = train_codebook(&principals, resolved.m, seed)?;
    stages.push(("pq", t.elapsed()));

    let t = Instant::now();
    let graph = build_vamana(ds, &resolved.vamana)?;
    stages.push(("graph", t.elapsed()));

    let t = Instant::now();
    let entries = build_ep_table(ds, resolved.entries, seed, config.ep_sample)?;
    stages.push(("entry_points", t.elapsed()));

    let t = Instant::now();
    let header = serialize_index(ds, &graph.adjacency, graph.medoid, &entries, &pca, &codebook, out)?;
    stages.push(("serialize", t.elapsed()));

    Ok(BuildReport {
        header,
        resolved,
        stages,
        repaired_nodes: graph.repaired,
    })
}

/// A loaded index: header and models in memory, pages behind a store, and
/// an optional in-degree cache.
#[derive(Debug)]
pub struct DiskIndex {
    path: PathBuf,
    prefix: IndexPrefix,
    store: PageStore,
    cache: NodeCache,
}

impl DiskIndex {
    pub fn open(path: impl AsRef<Path>, options: StoreOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let prefix = IndexPrefix::read(&path)?;
        if prefix.header.count == 0 {
            return Err(Error::invalid("index is empty"));
        }
        let store = PageStore::open_index(&path, &prefix, options)?;
        Ok(Self {
            path,
            prefix,
            store,
            cache: NodeCache::disabled(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn prefix(&self) -> &IndexPrefix {
        &self.prefix
    }

    pub fn header(&self) -> &IndexHeader {
        &self.prefix.header
    }

    pub fn store(&self) -> &PageStore {
        &self.store
    }

    pub fn cache(&self) -> &NodeCache {
        &self.cache
    }

    pub fn count(&self) -> usize {
        self.prefix.header.count
    }

    /// Bytes occupied by node pages.
    pub fn pages_bytes(&self) -> u64 {
        (self.prefix.header.count * self.prefix.header.page_size) as u64
    }

    /// Reads every page and reconstructs the adjacency lists.
    pub fn read_adjacency(&self) -> Result<AdjacencyList> {
        let n = self.count();
        let mut lists = Vec::with_capacity(n);
        for id in 0..n as u32 {
            let page = self.store.read_sync(id)?;
            lists.push(parse_page(&page, &self.prefix.layout, n)?.neighbors().collect());
        }
        AdjacencyList::new(self.prefix.header.r, lists)
    }

    /// Fills the cache from a total memory budget, of which
    /// [`CACHE_BUDGET_FRACTION`] goes to pages.
    pub fn populate_cache(&mut self, memory_budget_bytes: u64, degrees: &[u32]) -> Result<()> {
        let budget = (memory_budget_bytes as f64 * CACHE_BUDGET_FRACTION).floor() as u64;
        let mut cache = NodeCache::new(budget);
        cache.populate(&self.store, degrees)?;
        self.cache = cache;
        Ok(())
    }

    /// [`populate_cache`](Self::populate_cache) with in-degrees read from the pages.
    pub fn populate_cache_from_pages(&mut self, memory_budget_bytes: u64) -> Result<Vec<u32>> {
        let degrees = if memory_budget_bytes == 0 {
            vec![0; self.count()]
        } else {
            compute_in_degrees(&self.read_adjacency()?)
        };
        self.populate_cache(memory_budget_bytes, &degrees)?;
        Ok(degrees)
    }

    pub fn set_cache(&mut self, cache: NodeCache) {
        self.cache = cache;
    }
}
