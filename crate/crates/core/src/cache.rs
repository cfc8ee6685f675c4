//! Static in-memory cache of the pages of the highest in-degree nodes.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::Result;
use crate::graph::AdjacencyList;
use crate::store::PageStore;

/// Share of the memory budget given to the cache; the rest is headroom.
pub const CACHE_BUDGET_FRACTION: f64 = 0.8;

/// Exact in-degree of every node.
pub fn compute_in_degrees(adj: &AdjacencyList) -> Vec<u32> {
    let mut deg = vec![0u32; adj.len()];
    for list in adj.lists() {
        for &j in list {
            deg[j as usize] += 1;
        }
    }
    deg
}

/// Node ids by descending in-degree, ties to the smaller id.
pub fn rank_by_in_degree(degrees: &[u32]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..degrees.len() as u32).collect();
    ids.sort_by(|&a, &b| degrees[b as usize].cmp(&degrees[a as usize]).then(a.cmp(&b)));
    ids
}

#[derive(Debug, Default)]
pub struct NodeCache {
    budget_bytes: u64,
    page_size: usize,
    entries: HashMap<u32, Arc<[u8]>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl NodeCache {
    pub fn new(budget_bytes: u64) -> Self {
        Self {
            budget_bytes,
            ..Default::default()
        }
    }

    /// Empty cache; every lookup misses.
    pub fn disabled() -> Self {
        Self::new(0)
    }

    pub fn budget_bytes(&self) -> u64 {
        self.budget_bytes
    }

    /// Number of pages the budget admits for `page_size`-byte pages.
    pub fn capacity_for(&self, page_size: usize) -> usize {
        (self.budget_bytes / page_size.max(1) as u64) as usize
    }

    /// Replaces the contents with the top `floor(budget / page_size)` nodes
    /// by in-degree, read through `store`.
    pub fn populate(&mut self, store: &PageStore, degrees: &[u32]) -> Result<()> {
        let take = self.capacity_for(store.page_size()).min(degrees.len());
        let mut entries = HashMap::with_capacity(take);
        for id in rank_by_in_degree(degrees).into_iter().take(take) {
            entries.insert(id, Arc::from(store.read_sync(id)?));
        }
        self.entries = entries;
        self.page_size = store.page_size();
        self.reset_stats();
        Ok(())
    }

    /// Counts a hit or a miss.
    pub fn get(&self, id: u32) -> Option<&Arc<[u8]>> {
        let hit = self.entries.get(&id);
        if hit.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        } else {
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        hit
    }

    /// Membership test that leaves the counters alone.
    pub fn contains(&self, id: u32) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes_used(&self) -> u64 {
        (self.entries.len() * self.page_size) as u64
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn reset_stats(&self) {
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }
}
