//! In-memory Vamana graph construction and the clustered entry-point table.

use std::collections::VecDeque;
use std::io::Write;

use byteorder::{LittleEndian, WriteBytesExt};
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{cmp_dist_id, VectorDataset};
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, DEFAULT_MAX_ITERS};

/// Upper bound on out-degree supported by the page layout.
pub const MAX_DEGREE: usize = 128;
/// Default k-means sample cap for the entry-point table.
pub const DEFAULT_EP_SAMPLE: usize = 200_000;

/// Per-node out-neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyList {
    max_degree: usize,
    lists: Vec<Vec<u32>>,
}

impl AdjacencyList {
    pub fn new(max_degree: usize, lists: Vec<Vec<u32>>) -> Result<Self> {
        let n = lists.len();
        for (i, l) in lists.iter().enumerate() {
            if l.len() > max_degree {
                return Err(Error::invalid(format!("node {i} has {} > {max_degree} neighbors", l.len())));
            }
            let mut seen = std::collections::HashSet::with_capacity(l.len());
            for &j in l {
                if j as usize >= n || j as usize == i || !seen.insert(j) {
                    return Err(Error::invalid(format!("node {i} has invalid neighbor {j}")));
                }
            }
        }
        Ok(Self { max_degree, lists })
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.lists[i]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Breadth-first reachability from `start`.
pub fn reachable_from(adj: &AdjacencyList, start: u32) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start as usize] = true;
    while let Some(u) = queue.pop_front() {
        for &v in adj.neighbors(u as usize) {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Node whose vector is nearest the dataset mean (ties to the smaller id).
pub fn medoid(ds: &VectorDataset) -> u32 {
    let centroid = mean_vector(ds);
    nearest_node(ds, &centroid, |_| true).0
}

fn mean_vector(ds: &VectorDataset) -> Vec<f32> {
    let mut sum = vec![0.0f64; ds.dim()];
    for row in ds.rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    sum.iter().map(|s| (s / ds.count() as f64) as f32).collect()
}

fn nearest_node(ds: &VectorDataset, q: &[f32], allowed: impl Fn(usize) -> bool + Sync) -> (u32, f32) {
    ds.rows()
        .enumerate()
        .collect::<Vec<_>>()
        .par_iter()
        .filter(|(i, _)| allowed(*i))
        .map(|&(i, row)| (l2_sq(q, row), i as u32))
        .min_by(cmp_dist_id)
        .map(|(d, i)| (i, d))
        .expect("at least one allowed node")
}

/// Generation-stamped membership set, reused across searches.
#[derive(Debug, Clone)]
pub struct VisitedSet {
    marks: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    pub fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    pub fn clear(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Returns true if `i` was not yet present.
    #[inline]
    pub fn insert(&mut self, i: u32) -> bool {
        let slot = &mut self.marks[i as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }

    #[inline]
    pub fn contains(&self, i: u32) -> bool {
        self.marks[i as usize] == self.epoch
    }
}

/// Result of an in-memory best-first search.
#[derive(Debug, Clone, Default)]
pub struct GreedyResult {
    /// Up to `l` closest candidates seen, ascending by `(distance, id)`.
    pub candidates: Vec<(u32, f32)>,
    /// Every expanded node with its distance to the query.
    pub visited: Vec<(u32, f32)>,
}

/// Beam-1 best-first search over full-precision vectors.
pub fn greedy_search_mem(ds: &VectorDataset, adj: &AdjacencyList, entry: u32, q: &[f32], l: usize) -> GreedyResult {
    let mut seen = VisitedSet::new(ds.count());
    greedy_search_with(ds, |i, out| out.extend_from_slice(adj.neighbors(i as usize)), entry, q, l, &mut seen)
}

fn greedy_search_with(
    ds: &VectorDataset,
    neighbors: impl Fn(u32, &mut Vec<u32>),
    entry: u32,
    q: &[f32],
    l: usize,
    seen: &mut VisitedSet,
) -> GreedyResult {
    let l = l.max(1);
    seen.clear();
    // (dist, id, expanded)
    let mut list: Vec<(f32, u32, bool)> = Vec::with_capacity(l + 1);
    let mut visited = Vec::new();
    let mut nbrs = Vec::new();
    seen.insert(entry);
    list.push((l2_sq(q, ds.row(entry as usize)), entry, false));
    let mut cur = 0usize;
    while cur < list.len() {
        if list[cur].2 {
            cur += 1;
            continue;
        }
        list[cur].2 = true;
        let (dist, node, _) = list[cur];
        visited.push((node, dist));
        nbrs.clear();
        neighbors(node, &mut nbrs);
        let mut lowest = usize::MAX;
        for &v in &nbrs {
            if !seen.insert(v) {
                continue;
            }
            let d = l2_sq(q, ds.row(v as usize));
            if list.len() >= l {
                let last = list[list.len() - 1];
                if cmp_dist_id(&(d, v), &(last.0, last.1)).is_ge() {
                    continue;
                }
            }
            let pos = list.partition_point(|e| cmp_dist_id(&(e.0, e.1), &(d, v)).is_lt());
            list.insert(pos, (d, v, false));
            list.truncate(l);
            lowest = lowest.min(pos);
        }
        if lowest < cur {
            cur = lowest;
        }
    }
    GreedyResult {
        candidates: list.into_iter().map(|(d, i, _)| (i, d)).collect(),
        visited,
    }
}

/// Alpha-relaxed pruning. `candidates` carry their distance to `node`;
/// `node` itself and duplicates are dropped. Greedily keeps the closest
/// remaining candidate `p*` and discards every `c` with
/// `alpha * d(p*, c) <= d(node, c)`.
pub fn robust_prune(ds: &VectorDataset, node: u32, candidates: &[(u32, f32)], alpha: f32, r: usize) -> Vec<u32> {
    let mut cands: Vec<(f32, u32)> = candidates
        .iter()
        .filter(|(id, _)| *id != node)
        .map(|&(id, d)| (d, id))
        .collect();
    cands.sort_by(cmp_dist_id);
    cands.dedup_by_key(|c| c.1);

    let mut kept = Vec::with_capacity(r);
    let mut alive = vec![true; cands.len()];
    for i in 0..cands.len() {
        if kept.len() >= r {
            break;
        }
        if !alive[i] {
            continue;
        }
        let star = cands[i].1;
        kept.push(star);
        let star_vec = ds.row(star as usize);
        for j in i + 1..cands.len() {
            if alive[j] && alpha * l2_sq(star_vec, ds.row(cands[j].1 as usize)) <= cands[j].0 {
                alive[j] = false;
            }
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VamanaParams {
    pub r: usize,
    pub l_build: usize,
    pub alpha: f32,
    pub seed: u64,
    /// 1 gives a fully deterministic build.
    pub threads: usize,
}

impl Default for VamanaParams {
    fn default() -> Self {
        Self {
            r: 64,
            l_build: 200,
            alpha: 1.2,
            seed: 0,
            threads: 1,
        }
    }
}

impl VamanaParams {
    pub fn validate(&self) -> Result<()> {
        if self.r < 4 || self.r > MAX_DEGREE {
            return Err(Error::invalid(format!("r = {} must be in 4..={MAX_DEGREE}", self.r)));
        }
        if self.l_build < self.r {
            return Err(Error::invalid(format!("l_build = {} must be >= r = {}", self.l_build, self.r)));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::invalid(format!("alpha = {} must be >= 1", self.alpha)));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VamanaGraph {
    pub adjacency: AdjacencyList,
    pub medoid: u32,
    /// Nodes that needed an in-edge added to become reachable.
    pub repaired: usize,
}

/// Two-pass Vamana build (alpha = 1, then `params.alpha`) from a random
/// `r`-regular start, followed by reachability repair from the medoid.
pub fn build_vamana(ds: &VectorDataset, params: &VamanaParams) -> Result<VamanaGraph> {
    params.validate()?;
    let n = ds.count();
    let r = params.r;
    let medoid = medoid(ds);

    if n <= r + 1 {
        let lists = (0..n as u32)
            .map(|i| (0..n as u32).filter(|&j| j != i).collect())
            .collect();
        return Ok(VamanaGraph {
            adjacency: AdjacencyList::new(r, lists)?,
            medoid,
            repaired: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let graph: Vec<Mutex<Vec<u32>>> = (0..n)
        .map(|i| {
            let mut nb = Vec::with_capacity(r + 1);
            while nb.len() < r {
                let j = rng.random_range(0..n as u32);
                if j as usize != i && !nb.contains(&j) {
                    nb.push(j);
                }
            }
            Mutex::new(nb)
        })
        .collect();

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;

    for alpha in [1.0f32, params.alpha] {
        if params.threads == 1 {
            let mut seen = VisitedSet::new(n);
            for &p in &order {
                insert_node(ds, &graph, medoid, p, alpha, params, &mut seen);
            }
        } else {
            pool.install(|| {
                order.par_chunks(256).for_each_init(
                    || VisitedSet::new(n),
                    |seen, chunk| {
                        for &p in chunk {
                            insert_node(ds, &graph, medoid, p, alpha, params, seen);
                        }
                    },
                );
            });
        }
    }

    let lists: Vec<Vec<u32>> = graph.into_iter().map(Mutex::into_inner).collect();
    let mut adjacency = AdjacencyList::new(r, lists)?;
    let repaired = repair_reachability(ds, &mut adjacency, medoid, params.l_build);
    Ok(VamanaGraph {
        adjacency,
        medoid,
        repaired,
    })
}

fn insert_node(
    ds: &VectorDataset,
    graph: &[Mutex<Vec<u32>>],
    medoid: u32,
    p: u32,
    alpha: f32,
    params: &VamanaParams,
    seen: &mut VisitedSet,
) {
    let q = ds.row(p as usize);
    let res = greedy_search_with(
        ds,
        |i, out| out.extend_from_slice(&graph[i as usize].lock()),
        medoid,
        q,
        params.l_build,
        seen,
    );
    let mut cands = res.visited;
    for &j in graph[p as usize].lock().iter() {
        cands.push((j, l2_sq(q, ds.row(j as usize))));
    }
    let pruned = robust_prune(ds, p, &cands, alpha, params.r);
    *graph[p as usize].lock() = pruned.clone();

    for &j in &pruned {
        let mut list = graph[j as usize].lock();
        if list.contains(&p) {
            continue;
        }
        if list.len() < params.r {
            list.push(p);
        } else {
            let base = ds.row(j as usize);
            let mut c: Vec<(u32, f32)> = list.iter().map(|&x| (x, l2_sq(base, ds.row(x as usize)))).collect();
            c.push((p, l2_sq(base, q)));
            *list = robust_prune(ds, j, &c, alpha, params.r);
        }
    }
}

/// Gives every node unreachable from `start` an in-edge from its nearest
/// reachable node, evicting that node's farthest out-edge when full.
/// Returns the number of edges added.
fn repair_reachability(ds: &VectorDataset, adj: &mut AdjacencyList, start: u32, l: usize) -> usize {
    let n = adj.len();
    let mut added = 0;
    let mut seen = VisitedSet::new(n);
    for _round in 0..n {
        let reach = reachable_from(adj, start);
        let Some(u) = reach.iter().position(|&x| !x) else {
            break;
        };
        let q = ds.row(u);
        let res = greedy_search_with(
            ds,
            |i, out| out.extend_from_slice(&adj.lists[i as usize]),
            start,
            q,
            l,
            &mut seen,
        );
        let (from, _) = res.candidates[0];
        let list = &mut adj.lists[from as usize];
        if list.len() >= adj.max_degree {
            let base = ds.row(from as usize);
            let far = list
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    l2_sq(base, ds.row(*a.1 as usize))
                        .total_cmp(&l2_sq(base, ds.row(*b.1 as usize)))
                        .then(b.0.cmp(&a.0))
                })
                .map(|x| x.0)
                .unwrap();
            list.remove(far);
        }
        list.push(u as u32);
        added += 1;
    }
    added
}

/// Entry-point candidates: node ids with their full-precision vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryTable {
    dim: usize,
    ids: Vec<u32>,
    vectors: Vec<f32>,
}

impl EntryTable {
    pub fn new(dim: usize, ids: Vec<u32>, vectors: Vec<f32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("entry table must not be empty"));
        }
        if vectors.len() != ids.len() * dim {
            return Err(Error::invalid("entry table vectors do not match ids"));
        }
        Ok(Self { dim, ids, vectors })
    }

    /// A one-entry table holding `id`.
    pub fn single(ds: &VectorDataset, id: u32) -> Self {
        Self {
            dim: ds.dim(),
            ids: vec![id],
            vectors: ds.row(id as usize).to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn vector(&self, e: usize) -> &[f32] {
        &self.vectors[e * self.dim..(e + 1) * self.dim]
    }

    /// Sequential scan for the entry nearest `q`: `(node id, distance)`.
    /// Ties resolve to the smaller node id.
    pub fn nearest(&self, q: &[f32]) -> (u32, f32) {
        let mut best = (f32::INFINITY, u32::MAX);
        for (e, &id) in self.ids.iter().enumerate() {
            let cand = (l2_sq(q, self.vector(e)), id);
            if cmp_dist_id(&cand, &best).is_lt() {
                best = cand;
            }
        }
        (best.1, best.0)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for (e, &id) in self.ids.iter().enumerate() {
            w.write_u32::<LittleEndian>(id)?;
            for &v in self.vector(e) {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn serialized_len(&self) -> usize {
        self.ids.len() * (4 + 4 * self.dim)
    }
}

/// k-means (k = `e`) over a sample of at most `sample_cap` vectors, each
/// centroid snapped to its nearest not-yet-taken base node.
pub fn build_ep_table(ds: &VectorDataset, e: usize, seed: u64, sample_cap: usize) -> Result<EntryTable> {
    if e < 1 {
        return Err(Error::invalid("entry table size must be >= 1"));
    }
    if e > ds.count() {
        return Err(Error::invalid(format!("entry table size {e} exceeds {} vectors", ds.count())));
    }
    let n = ds.count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<f32> = if n > sample_cap.max(e) {
        let mut idx = rand::seq::index::sample(&mut rng, n, sample_cap.max(e)).into_vec();
        idx.sort_unstable();
        idx.iter().flat_map(|&i| ds.row(i).iter().copied()).collect()
    } else {
        ds.data().to_vec()
    };
    let km = kmeans(&sample, ds.dim(), e, DEFAULT_MAX_ITERS, rng.random());

    let mut taken = vec![false; n];
    let mut ids = Vec::with_capacity(e);
    let mut vectors = Vec::with_capacity(e * ds.dim());
    for c in 0..e {
        let (id, _) = nearest_node(ds, km.centroid(c), |i| !taken[i]);
        taken[id as usize] = true;
        ids.push(id);
        vectors.extend_from_slice(ds.row(id as usize));
    }
    EntryTable::new(ds.dim(), ids, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_ds(n: usize, d: usize, seed: u64) -> VectorDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        VectorDataset::new(n, d, data).unwrap()
    }

    fn line(n: usize) -> VectorDataset {
        VectorDataset::from_rows(&(0..n).map(|i| vec![i as f32]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn tiny_graph_is_complete() {
        let ds = line(5);
        let g = build_vamana(&ds, &VamanaParams { r: 4, l_build: 8, ..Default::default() }).unwrap();
        for i in 0..5 {
            let mut nb = g.adjacency.neighbors(i).to_vec();
            nb.sort();
            let want: Vec<u32> = (0..5).filter(|&j| j != i as u32).collect();
            assert_eq!(nb, want);
        }
        assert_eq!(g.medoid, 2);
    }

    #[test]
    fn degree_bound_and_reachability() {
        let ds = random_ds(2000, 16, 1);
        let params = VamanaParams {
            r: 32,
            l_build: 64,
            seed: 3,
            ..Default::default()
        };
        let g = build_vamana(&ds, &params).unwrap();
        assert!(g.adjacency.lists().iter().all(|l| l.len() <= 32));
        assert!(reachable_from(&g.adjacency, g.medoid).iter().all(|&x| x));
    }

    #[test]
    fn build_is_deterministic() {
        let ds = random_ds(400, 8, 2);
        let params = VamanaParams {
            r: 12,
            l_build: 24,
            seed: 9,
            ..Default::default()
        };
        let a = build_vamana(&ds, &params).unwrap();
        let b = build_vamana(&ds, &params).unwrap();
        assert_eq!(a.adjacency, b.adjacency);
    }

    #[test]
    fn parallel_build_keeps_invariants() {
        let ds = random_ds(600, 8, 5);
        let params = VamanaParams {
            r: 16,
            l_build: 32,
            seed: 1,
            threads: 4,
            ..Default::default()
        };
        let g = build_vamana(&ds, &params).unwrap();
        assert!(g.adjacency.lists().iter().all(|l| l.len() <= 16));
        assert!(reachable_from(&g.adjacency, g.medoid).iter().all(|&x| x));
    }

    #[test]
    fn params_validated() {
        let ds = random_ds(50, 4, 1);
        assert!(build_vamana(&ds, &VamanaParams { r: 3, l_build: 10, ..Default::default() }).is_err());
        assert!(build_vamana(&ds, &VamanaParams { r: 16, l_build: 10, ..Default::default() }).is_err());
        assert!(build_vamana(&ds, &VamanaParams { r: 200, l_build: 300, ..Default::default() }).is_err());
    }

    #[test]
    fn greedy_l1_and_exact_entry() {
        let ds = random_ds(300, 6, 4);
        let g = build_vamana(&ds, &VamanaParams { r: 16, l_build: 32, seed: 2, ..Default::default() }).unwrap();
        let q = ds.row(17).to_vec();
        let res = greedy_search_mem(&ds, &g.adjacency, g.medoid, &q, 1);
        assert_eq!(res.candidates.len(), 1);
        let res = greedy_search_mem(&ds, &g.adjacency, 17, &q, 10);
        assert_eq!(res.candidates[0], (17, 0.0));
    }

    #[test]
    fn prune_keeps_both_when_alpha_large() {
        let ds = VectorDataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let kept = robust_prune(&ds, 0, &[(1, 1.0), (2, 1.0)], 100.0, 2);
        assert_eq!(kept, vec![1, 2]);
    }

    #[test]
    fn prune_drops_dominated_collinear_candidate() {
        // node 0 at x=0, candidates at x=1 and x=3.
        // d(0,1)=1, d(0,3)=9, d(1,3)=4; alpha*4 = 4.8 <= 9 -> pruned.
        let ds = VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(robust_prune(&ds, 0, &[(1, 1.0), (2, 9.0)], 1.2, 8), vec![1]);
        // A candidate at x=-2 is on the other side: d(1,-2)=9 > 4/1.2, kept.
        let ds = VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![-2.0]]).unwrap();
        assert_eq!(robust_prune(&ds, 0, &[(1, 1.0), (2, 4.0)], 1.2, 8), vec![1, 2]);
    }

    #[test]
    fn prune_of_only_self_is_empty() {
        let ds = line(3);
        assert!(robust_prune(&ds, 1, &[(1, 0.0)], 1.2, 4).is_empty());
    }

    #[test]
    fn ep_table_edge_cases() {
        let ds = random_ds(40, 3, 8);
        let one = build_ep_table(&ds, 1, 1, DEFAULT_EP_SAMPLE).unwrap();
        assert_eq!(one.ids(), &[medoid(&ds)]);
        let all = build_ep_table(&ds, 40, 1, DEFAULT_EP_SAMPLE).unwrap();
        let mut ids = all.ids().to_vec();
        ids.sort();
        assert_eq!(ids, (0..40).collect::<Vec<u32>>());
        assert!(build_ep_table(&ds, 0, 1, DEFAULT_EP_SAMPLE).is_err());
        assert!(build_ep_table(&ds, 41, 1, DEFAULT_EP_SAMPLE).is_err());
    }

    #[test]
    fn ep_table_one_entry_per_blob() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let centers = [[0.0f32, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let mut rows = Vec::new();
        for i in 0..300 {
            let c = centers[i % 3];
            let (a, b): (f32, f32) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            rows.push(vec![c[0] + a, c[1] + b]);
        }
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let t = build_ep_table(&ds, 3, 2, DEFAULT_EP_SAMPLE).unwrap();
        let mut blobs: Vec<usize> = t.ids().iter().map(|&i| i as usize % 3).collect();
        blobs.sort();
        assert_eq!(blobs, vec![0, 1, 2]);
    }

    #[test]
    fn entry_nearest_prefers_smaller_id_on_tie() {
        let t = EntryTable::new(1, vec![9, 4], vec![1.0, -1.0]).unwrap();
        assert_eq!(t.nearest(&[0.0]).0, 4);
        assert_eq!(t.nearest(&[1.0]).0, 9);
    }

    #[test]
    fn adjacency_validation() {
        assert!(AdjacencyList::new(2, vec![vec![0]]).is_err());
        assert!(AdjacencyList::new(2, vec![vec![1, 1], vec![]]).is_err());
        assert!(AdjacencyList::new(1, vec![vec![1], vec![0]]).is_ok());
    }
}
