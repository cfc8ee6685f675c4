//! Query execution over a [`DiskIndex`].
//!
//! Each hop expands up to `min(2^hop, bw_default)` of the best unvisited
//! candidates. Cached pages are processed immediately, the rest are read
//! through the query's [`IoContext`]. Processing a page yields the node's
//! exact distance (from the full-precision vector stored on the page) and
//! approximate distances for all its neighbors (from the interleaved codes).
//! In early-dispatch mode the next hop is selected once a fixed share of the
//! current hop's pages has been processed; the stragglers are merged into
//! the candidate queue whenever they arrive.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dataset::{cmp_dist_id, GroundTruth, VectorDataset};
use crate::error::{Error, Result};
use crate::graph::{EntryTable, VisitedSet};
use crate::index::DiskIndex;
use crate::layout::parse_page;
use crate::pq::{adc_block_into, QueryLut};
use crate::store::{IoContext, ReadRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    Synchronous,
    #[default]
    EarlyDispatch,
}

impl FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" | "synchronous" => Ok(Self::Synchronous),
            "early" | "early_dispatch" | "early-dispatch" => Ok(Self::EarlyDispatch),
            _ => Err(Error::invalid(format!("unknown search mode {s:?}"))),
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Synchronous => "synchronous",
            Self::EarlyDispatch => "early_dispatch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryPolicy {
    /// Nearest entry of the clustered entry-point table.
    #[default]
    Clustered,
    Medoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    pub l: usize,
    pub bw_default: usize,
    pub dispatch_ratio: f64,
    pub mode: SearchMode,
    pub entry: EntryPolicy,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            k: 10,
            l: 100,
            bw_default: 16,
            dispatch_ratio: 0.5,
            mode: SearchMode::EarlyDispatch,
            entry: EntryPolicy::Clustered,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.l {
            return Err(Error::invalid(format!("need 1 <= k <= l (k = {}, l = {})", self.k, self.l)));
        }
        if self.bw_default == 0 {
            return Err(Error::invalid("beam width must be >= 1"));
        }
        if !(self.dispatch_ratio > 0.0 && self.dispatch_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "dispatch ratio {} must be in (0, 1]",
                self.dispatch_ratio
            )));
        }
        Ok(())
    }
}

/// `min(2^hop, bw_default)`, saturating for large hops.
pub fn beam_width_at(hop: usize, bw_default: usize) -> usize {
    if hop >= usize::BITS as usize - 1 {
        bw_default
    } else {
        (1usize << hop).min(bw_default)
    }
}

/// Entry of `table` nearest `q` by exact distance; ties to the smaller id.
pub fn select_entry(table: &EntryTable, q: &[f32]) -> u32 {
    table.nearest(q).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CandState {
    Unvisited,
    InFlight,
    Visited,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    id: u32,
    dist: f32,
    state: CandState,
}

/// At most `l` candidates ordered by `(approximate distance, id)`.
#[derive(Debug, Clone)]
pub struct CandidateQueue {
    l: usize,
    items: Vec<Candidate>,
}

impl CandidateQueue {
    pub fn new(l: usize) -> Self {
        Self {
            l,
            items: Vec::with_capacity(l + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Returns false when the candidate falls outside the best `l` or the
    /// id is already present.
    pub fn insert(&mut self, id: u32, dist: f32) -> bool {
        if self.items.len() >= self.l {
            let last = self.items[self.items.len() - 1];
            if cmp_dist_id(&(dist, id), &(last.dist, last.id)).is_ge() {
                return false;
            }
        }
        if self.items.iter().any(|c| c.id == id) {
            return false;
        }
        let pos = self
            .items
            .partition_point(|c| cmp_dist_id(&(c.dist, c.id), &(dist, id)).is_lt());
        self.items.insert(
            pos,
            Candidate {
                id,
                dist,
                state: CandState::Unvisited,
            },
        );
        self.items.truncate(self.l);
        true
    }

    /// Marks up to `w` of the best unvisited candidates in flight and returns them.
    pub fn take_frontier(&mut self, w: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(w);
        for c in self.items.iter_mut() {
            if out.len() >= w {
                break;
            }
            if c.state == CandState::Unvisited {
                c.state = CandState::InFlight;
                out.push(c.id);
            }
        }
        out
    }

    pub fn mark_visited(&mut self, id: u32) {
        if let Some(c) = self.items.iter_mut().find(|c| c.id == id) {
            c.state = CandState::Visited;
        }
    }

    pub fn has_unvisited(&self) -> bool {
        self.items.iter().any(|c| c.state == CandState::Unvisited)
    }

    /// `(id, approximate distance)` in queue order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.items.iter().map(|c| (c.id, c.dist))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub hops: usize,
    /// Page reads submitted to the store.
    pub ios_issued: usize,
    /// Pages served from the node cache.
    pub cache_hits: usize,
    pub distances_approx: usize,
    pub distances_exact: usize,
    /// Pages processed after the search had moved on to a later hop.
    pub deferred_nodes: usize,
    pub wall_time: Duration,
    /// Query latency on the store's clock: virtual time under the synthetic
    /// latency model, otherwise equal to wall time.
    pub latency: Duration,
    /// Width allotted to each hop, `min(2^hop, bw_default)`.
    pub hop_widths: Vec<usize>,
    /// Candidates actually dispatched per hop (at most the allotted width).
    pub frontier_sizes: Vec<usize>,
}

impl SearchStats {
    pub fn pages(&self) -> usize {
        self.ios_issued + self.cache_hits
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchResult {
    /// Up to `k` ids ascending by exact distance.
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
    /// Every processed node with its exact distance, in processing order.
    pub visited: Vec<(u32, f32)>,
    pub stats: SearchStats,
}

/// Per-thread search state over a shared index.
pub struct Searcher<'a> {
    index: &'a DiskIndex,
    seen: VisitedSet,
    q_rot: Vec<f32>,
    scratch_vec: Vec<f32>,
    adc_sums: Vec<u32>,
    adc_out: Vec<f32>,
}

struct QueryState<'q> {
    queue: CandidateQueue,
    lut: &'q QueryLut,
    visited: Vec<(u32, f32)>,
    stats: SearchStats,
    /// Pages processed per hop.
    processed: Vec<usize>,
}

impl<'a> Searcher<'a> {
    pub fn new(index: &'a DiskIndex) -> Self {
        let d = index.header().dim;
        Self {
            index,
            seen: VisitedSet::new(index.count()),
            q_rot: vec![0.0; d],
            scratch_vec: vec![0.0; d],
            adc_sums: Vec::new(),
            adc_out: Vec::new(),
        }
    }

    /// Runs one query. `io_seed` seeds the store context, so a query's
    /// synthetic I/O timing depends only on it.
    pub fn search(&mut self, q: &[f32], params: &SearchParams, io_seed: u64) -> Result<SearchResult> {
        params.validate()?;
        let index = self.index;
        let prefix = index.prefix();
        if q.len() != prefix.header.dim {
            return Err(Error::DimensionMismatch {
                expected: prefix.header.dim,
                got: q.len(),
            });
        }
        let started = Instant::now();
        prefix.pca.transform_into(q, &mut self.q_rot)?;
        let lut = prefix.codebook.build_lut(&self.q_rot[..prefix.header.d_pca])?;
        let mut ctx = index.store().context(io_seed);

        let mut st = QueryState {
            queue: CandidateQueue::new(params.l),
            lut: &lut,
            visited: Vec::new(),
            stats: SearchStats::default(),
            processed: Vec::new(),
        };
        self.seen.clear();
        let (entry, entry_dist) = match params.entry {
            EntryPolicy::Clustered => prefix.entries.nearest(q),
            EntryPolicy::Medoid => (prefix.header.medoid, f32::INFINITY),
        };
        self.seen.insert(entry);
        st.queue.insert(entry, entry_dist);

        let mut hop = 0usize;
        loop {
            // Merge whatever has already completed before choosing the frontier.
            for c in ctx.poll()? {
                self.process(&mut st, &mut ctx, c.id, &c.buffer, c.tag as usize, hop)?;
            }
            let width = beam_width_at(hop, params.bw_default);
            let frontier = st.queue.take_frontier(width);
            if frontier.is_empty() {
                if ctx.in_flight() == 0 {
                    break;
                }
                for c in ctx.wait()? {
                    self.process(&mut st, &mut ctx, c.id, &c.buffer, c.tag as usize, hop)?;
                }
                continue;
            }
            st.stats.hop_widths.push(width);
            st.stats.frontier_sizes.push(frontier.len());
            st.processed.push(0);

            let mut hits = Vec::new();
            let mut misses = Vec::new();
            for &id in &frontier {
                match index.cache().get(id) {
                    Some(page) => hits.push((id, page.clone())),
                    None => misses.push(ReadRequest::new(id, hop as u64)),
                }
            }
            // Make room under the in-flight limit by consuming completions.
            while ctx.in_flight() + misses.len() > ctx.limit() && ctx.in_flight() > 0 {
                for c in ctx.wait()? {
                    self.process(&mut st, &mut ctx, c.id, &c.buffer, c.tag as usize, hop)?;
                }
            }
            for chunk in misses.chunks(ctx.limit()) {
                while ctx.in_flight() + chunk.len() > ctx.limit() {
                    for c in ctx.wait()? {
                        self.process(&mut st, &mut ctx, c.id, &c.buffer, c.tag as usize, hop)?;
                    }
                }
                ctx.submit(chunk)?;
            }
            st.stats.ios_issued += misses.len();
            st.stats.cache_hits += hits.len();
            for (id, page) in &hits {
                self.process(&mut st, &mut ctx, *id, page, hop, hop)?;
            }

            let target = match params.mode {
                SearchMode::Synchronous => frontier.len(),
                SearchMode::EarlyDispatch => {
                    ((params.dispatch_ratio * frontier.len() as f64).ceil() as usize).clamp(1, frontier.len())
                }
            };
            while st.processed[hop] < target {
                let batch = ctx.wait()?;
                if batch.is_empty() {
                    return Err(Error::invalid("hop pages missing from the completion stream"));
                }
                for c in batch {
                    self.process(&mut st, &mut ctx, c.id, &c.buffer, c.tag as usize, hop)?;
                }
            }
            hop += 1;
        }

        st.stats.hops = hop;
        st.stats.latency = if ctx.is_virtual() { ctx.elapsed() } else { started.elapsed() };
        st.stats.wall_time = started.elapsed();

        let mut ranked: Vec<(f32, u32)> = st.visited.iter().map(|&(id, d)| (d, id)).collect();
        ranked.sort_by(cmp_dist_id);
        ranked.truncate(params.k);
        Ok(SearchResult {
            ids: ranked.iter().map(|x| x.1).collect(),
            dists: ranked.iter().map(|x| x.0).collect(),
            visited: st.visited,
            stats: st.stats,
        })
    }

    fn process(
        &mut self,
        st: &mut QueryState<'_>,
        ctx: &mut IoContext<'_>,
        id: u32,
        page: &[u8],
        page_hop: usize,
        current_hop: usize,
    ) -> Result<()> {
        let prefix = self.index.prefix();
        let view = parse_page(page, &prefix.layout, prefix.header.count)?;
        let exact = view.exact_distance(&self.q_rot, &mut self.scratch_vec);
        st.visited.push((id, exact));
        st.stats.distances_exact += 1;
        st.queue.mark_visited(id);
        st.processed[page_hop] += 1;
        if page_hop < current_hop {
            st.stats.deferred_nodes += 1;
        }

        let n = view.n_neighbors();
        if n > 0 {
            adc_block_into(st.lut, view.codes(), n, &mut self.adc_sums, &mut self.adc_out);
            st.stats.distances_approx += n;
            for (i, nb) in view.neighbors().enumerate() {
                if self.seen.insert(nb) {
                    st.queue.insert(nb, self.adc_out[i]);
                }
            }
        }
        ctx.advance(ctx.compute_per_page());
        Ok(())
    }
}

/// Convenience wrapper for a single query.
pub fn search(index: &DiskIndex, q: &[f32], params: &SearchParams, io_seed: u64) -> Result<SearchResult> {
    Searcher::new(index).search(q, params, io_seed)
}

/// Mean over queries of `|returned ∩ true top-k| / k`. A returned id outside
/// the true set still counts when its distance ties the k-th true distance
/// (relative tolerance 1e-5).
pub fn recall_at_k(ids: &[Vec<u32>], dists: &[Vec<f32>], gt: &GroundTruth, k: usize) -> Result<f64> {
    if k == 0 || k > gt.k {
        return Err(Error::invalid(format!("k = {k} must be in 1..={}", gt.k)));
    }
    if ids.len() != gt.query_count || dists.len() != ids.len() {
        return Err(Error::invalid(format!(
            "{} result rows for {} ground-truth rows",
            ids.len(),
            gt.query_count
        )));
    }
    if ids.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (q, (row, drow)) in ids.iter().zip(dists).enumerate() {
        let truth = &gt.ids_row(q)[..k];
        let kth = gt.dists_row(q)[k - 1];
        let mut hit = 0usize;
        for (j, id) in row.iter().take(k).enumerate() {
            let tie = drow
                .get(j)
                .is_some_and(|&d| kth.is_finite() && (d - kth).abs() <= 1e-5 * kth.abs().max(f32::MIN_POSITIVE));
            if truth.contains(id) || tie {
                hit += 1;
            }
        }
        total += hit.min(k) as f64 / k as f64;
    }
    Ok(total / ids.len() as f64)
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub queries: usize,
    pub k: usize,
    pub l: usize,
    /// `None` without ground truth.
    pub recall: Option<f64>,
    pub qps: f64,
    pub mean_latency: Duration,
    pub median_latency: Duration,
    pub p99_latency: Duration,
    pub mean_ios: f64,
    pub mean_hops: f64,
    pub cache_hit_ratio: f64,
    pub results: Vec<SearchResult>,
}

impl BenchReport {
    pub fn mean_deferred(&self) -> f64 {
        mean(self.results.iter().map(|r| r.stats.deferred_nodes as f64))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// Runs every query on `threads` workers. Query `i` uses I/O seed `i`, so
/// results and synthetic latencies do not depend on the thread count.
pub fn bench(
    index: &DiskIndex,
    queries: &VectorDataset,
    gt: Option<&GroundTruth>,
    params: &SearchParams,
    threads: usize,
) -> Result<BenchReport> {
    params.validate()?;
    if threads == 0 {
        return Err(Error::invalid("threads must be >= 1"));
    }
    if let Some(gt) = gt {
        if gt.query_count != queries.count() {
            return Err(Error::invalid(format!(
                "ground truth has {} rows for {} queries",
                gt.query_count,
                queries.count()
            )));
        }
    }
    let n = queries.count();
    if n == 0 {
        return Ok(BenchReport {
            k: params.k,
            l: params.l,
            ..Default::default()
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let started = Instant::now();
    let results: Vec<SearchResult> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map_init(
                || Searcher::new(index),
                |s, i| s.search(queries.row(i), params, i as u64),
            )
            .collect::<Result<_>>()
    })?;
    let elapsed = started.elapsed();

    let mut lat: Vec<Duration> = results.iter().map(|r| r.stats.latency).collect();
    lat.sort();
    let pages: usize = results.iter().map(|r| r.stats.pages()).sum();
    let hits: usize = results.iter().map(|r| r.stats.cache_hits).sum();
    let recall = match gt {
        Some(gt) => {
            let ids: Vec<Vec<u32>> = results.iter().map(|r| r.ids.clone()).collect();
            let dists: Vec<Vec<f32>> = results.iter().map(|r| r.dists.clone()).collect();
            Some(recall_at_k(&ids, &dists, gt, params.k.min(gt.k))?)
        }
        None => None,
    };
    Ok(BenchReport {
        queries: n,
        k: params.k,
        l: params.l,
        recall,
        qps: n as f64 / elapsed.as_secs_f64().max(1e-12),
        mean_latency: lat.iter().sum::<Duration>() / n as u32,
        median_latency: lat[(n - 1) / 2],
        p99_latency: lat[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1],
        mean_ios: mean(results.iter().map(|r| r.stats.ios_issued as f64)),
        mean_hops: mean(results.iter().map(|r| r.stats.hops as f64)),
        cache_hit_ratio: if pages == 0 { 0.0 } else { hits as f64 / pages as f64 },
        results,
    })
}
