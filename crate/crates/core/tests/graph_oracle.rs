mod common;

use std::collections::{HashSet, VecDeque};

use pagegraph::cache::compute_in_degrees;
use pagegraph::graph::{build_ep_table, build_vamana, greedy_search_mem, medoid, AdjacencyList, VamanaParams};

/// Independent BFS over the raw lists.
fn bfs_count(lists: &[Vec<u32>], start: usize) -> usize {
    let mut seen = vec![false; lists.len()];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    let mut n = 1;
    while let Some(u) = q.pop_front() {
        for &v in &lists[u] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                n += 1;
                q.push_back(v as usize);
            }
        }
    }
    n
}

fn params(r: usize, seed: u64) -> VamanaParams {
    VamanaParams {
        r,
        l_build: 64,
        seed,
        ..Default::default()
    }
}

#[test]
fn random_graph_is_bounded_simple_and_connected() {
    let ds = common::gaussian(2_000, 16, 1);
    let g = build_vamana(&ds, &params(32, 1)).unwrap();
    let lists = g.adjacency.lists();
    for (i, l) in lists.iter().enumerate() {
        assert!(l.len() <= 32);
        assert!(!l.contains(&(i as u32)));
        assert_eq!(l.iter().collect::<HashSet<_>>().len(), l.len());
    }
    assert_eq!(bfs_count(lists, g.medoid as usize), 2_000);
    assert_eq!(g.medoid, medoid(&ds));
}

#[test]
fn in_degrees_match_transpose() {
    let ds = common::clustered(1_500, 24, 6, 8, 0.1, 2);
    let g = build_vamana(&ds, &params(16, 2)).unwrap();
    let mut transpose: Vec<Vec<u32>> = vec![Vec::new(); ds.count()];
    for (u, l) in g.adjacency.lists().iter().enumerate() {
        for &v in l {
            transpose[v as usize].push(u as u32);
        }
    }
    let deg = compute_in_degrees(&g.adjacency);
    for (v, t) in transpose.iter().enumerate() {
        assert_eq!(deg[v] as usize, t.len());
    }
}

#[test]
fn in_memory_search_finds_true_neighbors() {
    let ds = common::clustered(3_000, 32, 8, 16, 0.1, 3);
    let g = build_vamana(&ds, &params(32, 3)).unwrap();
    let mut hits = 0;
    for i in (0..3_000).step_by(30) {
        let res = greedy_search_mem(&ds, &g.adjacency, g.medoid, ds.row(i), 32);
        if res.candidates.first().map(|c| c.0) == Some(i as u32) {
            hits += 1;
        }
    }
    assert!(hits >= 98, "{hits}/100 self-queries found");
}

#[test]
fn self_query_at_small_l_ranks_first() {
    let ds = common::gaussian(2_000, 16, 8);
    let g = build_vamana(&ds, &params(32, 8)).unwrap();
    let mut hits = 0;
    for i in (0..2_000).step_by(20) {
        let res = greedy_search_mem(&ds, &g.adjacency, g.medoid, ds.row(i), 10);
        // Brute-force rank 1 is the vector itself: distance 0, unique here.
        if res.candidates[0].0 == i as u32 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn entry_table_ids_are_distinct_members() {
    let ds = common::clustered(2_000, 16, 4, 10, 0.1, 4);
    let t = build_ep_table(&ds, 40, 4, 1_000).unwrap();
    assert_eq!(t.len(), 40);
    assert_eq!(t.ids().iter().collect::<HashSet<_>>().len(), 40);
    for (e, &id) in t.ids().iter().enumerate() {
        assert_eq!(t.vector(e), ds.row(id as usize));
    }
    // Every base vector is its own nearest entry when it is one.
    for &id in t.ids() {
        assert_eq!(t.nearest(ds.row(id as usize)).0, id);
    }
}

#[test]
fn adjacency_rejects_invalid_lists() {
    assert!(AdjacencyList::new(2, vec![vec![1, 2, 0], vec![], vec![]]).is_err());
    assert!(AdjacencyList::new(2, vec![vec![0], vec![]]).is_err());
    assert!(AdjacencyList::new(2, vec![vec![1, 1], vec![]]).is_err());
    assert!(AdjacencyList::new(2, vec![vec![5], vec![]]).is_err());
}
