use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::{NodeLayout, NODE_LAYOUT};
use super::{compute_lmax, HnswBuildParams, HnswIndex, HnswMeta};
use crate::dataset::{Dataset, DistanceMetric};
use crate::error::{Error, Result};
use crate::storage::{HeapFile, IndexTid, PagedStore};

/// Max-heap key over `(score, node)`; ties by node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f32, u32);

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

struct Graph<'a> {
    data: &'a Dataset,
    metric: DistanceMetric,
    m: usize,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
    visited: Vec<u32>,
    epoch: u32,
}

impl Graph<'_> {
    fn dist(&self, a: u32, b: u32) -> f32 {
        self.metric.eval(self.data.row(a), self.data.row(b))
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.visited.fill(0);
            self.epoch = 1;
        }
    }

    /// Beam search over one layer; returns up to `ef` nodes ascending by score.
    fn search_layer(&mut self, q: u32, entries: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        self.next_epoch();
        let mut cand: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut w: BinaryHeap<Scored> = BinaryHeap::new();
        for &e in entries {
            self.visited[e.1 as usize] = self.epoch;
            cand.push(Reverse(e));
            w.push(e);
        }
        while w.len() > ef {
            w.pop();
        }
        while let Some(Reverse(c)) = cand.pop() {
            if w.len() >= ef && c > *w.peek().expect("non-empty") {
                break;
            }
            for i in 0..self.links[c.1 as usize][layer].len() {
                let n = self.links[c.1 as usize][layer][i];
                if self.visited[n as usize] == self.epoch {
                    continue;
                }
                self.visited[n as usize] = self.epoch;
                let s = Scored(self.dist(q, n), n);
                if w.len() < ef || s < *w.peek().expect("non-empty") {
                    cand.push(Reverse(s));
                    w.push(s);
                    if w.len() > ef {
                        w.pop();
                    }
                }
            }
        }
        w.into_sorted_vec()
    }

    /// Keeps a candidate only if it is closer to the base node than to every
    /// neighbor already kept. `sorted` is ascending by score to the base.
    fn select_heuristic(&self, sorted: &[Scored], cap: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(cap);
        for c in sorted {
            if kept.len() >= cap {
                break;
            }
            if kept.iter().all(|&k| self.dist(c.1, k) > c.0) {
                kept.push(c.1);
            }
        }
        kept
    }

    fn connect_back(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.cap(layer);
        let list = &mut self.links[to as usize][layer];
        list.push(from);
        if list.len() <= cap {
            return;
        }
        let mut scored: Vec<Scored> = self.links[to as usize][layer]
            .iter()
            .map(|&n| Scored(self.dist(to, n), n))
            .collect();
        scored.sort();
        scored.truncate(cap);
        self.links[to as usize][layer] = scored.into_iter().map(|s| s.1).collect();
    }
}

/// Highest level whose tuple still fits on one page.
fn fit_cap(layout: NodeLayout, usable: usize, lmax: usize) -> usize {
    let mut cap = lmax.min(u8::MAX as usize);
    while layout.tuple_bytes(cap) > usable {
        if cap == 0 {
            break;
        }
        cap -= 1;
    }
    cap
}

impl HnswIndex {
    /// Builds the graph over `data`, whose rows must already be in `heap`
    /// under the same rowids, and lays the nodes out in a new index file.
    pub fn build(store: &mut PagedStore, heap: &HeapFile, data: &Dataset, params: HnswBuildParams) -> Result<Self> {
        params.validate()?;
        let geometry = *store.geometry();
        let lmax = compute_lmax(params.m, &geometry)?;
        let layout = NodeLayout {
            dim: data.dim(),
            m: params.m,
        };
        let level_cap = fit_cap(layout, geometry.usable_bytes, lmax);
        if layout.tuple_bytes(level_cap) > geometry.usable_bytes {
            return Err(Error::TupleTooLarge {
                size: layout.tuple_len(level_cap),
                usable: geometry.usable_bytes,
            });
        }
        if heap.dim() != data.dim() || heap.len() != data.len() {
            return Err(Error::param("heap does not hold the dataset being indexed"));
        }

        let n = data.len();
        let ml = params.level_multiplier();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                ((-u.ln() * ml).floor() as usize).min(level_cap)
            })
            .collect();

        let mut g = Graph {
            data,
            metric: data.metric(),
            m: params.m,
            links: levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect(),
            visited: vec![0; n],
            epoch: 0,
        };
        let mut entry: Option<u32> = None;
        let mut top = 0usize;
        for node in 0..n as u32 {
            let level = levels[node as usize];
            let Some(ep) = entry else {
                entry = Some(node);
                top = level;
                continue;
            };
            let mut cur = Scored(g.dist(node, ep), ep);
            for layer in (level + 1..=top).rev() {
                cur = g.search_layer(node, &[cur], 1, layer)[0];
            }
            let mut eps = vec![cur];
            for layer in (0..=level.min(top)).rev() {
                let found = g.search_layer(node, &eps, params.ef_construction, layer);
                let chosen = g.select_heuristic(&found, params.m);
                for &c in &chosen {
                    g.connect_back(node, c, layer);
                }
                g.links[node as usize][layer] = chosen;
                eps = found;
            }
            if level > top {
                top = level;
                entry = Some(node);
            }
        }

        // Assign TIDs first (tuple length does not depend on link contents),
        // then write each tuple with its final neighbor TIDs.
        let file = store.create_file("hnsw");
        let mut tids = Vec::with_capacity(n);
        for (node, &level) in levels.iter().enumerate() {
            let heaptid = heap
                .tid_of(node as u32)
                .ok_or_else(|| Error::param(format!("rowid {node} missing from heap")))?;
            let empty: Vec<Vec<IndexTid>> = vec![Vec::new(); level + 1];
            let t = layout.encode(level, heaptid, data.row(node as u32), &empty);
            tids.push(IndexTid(store.append(file, NODE_LAYOUT, &t)?));
        }
        for (node, &level) in levels.iter().enumerate() {
            let heaptid = heap.tid_of(node as u32).expect("checked above");
            let links: Vec<Vec<IndexTid>> = g.links[node]
                .iter()
                .map(|l| l.iter().map(|&o| tids[o as usize]).collect())
                .collect();
            let t = layout.encode(level, heaptid, data.row(node as u32), &links);
            let slot = store.tuple_mut(file, tids[node].0)?;
            assert!(t.len() <= geometry.usable_bytes, "node tuple exceeds one page");
            slot.copy_from_slice(&t);
        }

        let meta = HnswMeta {
            file,
            heap_file: heap.file(),
            dim: data.dim(),
            metric: data.metric(),
            params,
            lmax,
            level_cap,
            entry: entry.map(|e| tids[e as usize]),
            top_level: top,
            len: n,
        };
        let index = HnswIndex::open(store, meta, heap.clone())?;
        debug_assert!(tids.iter().enumerate().all(|(i, &t)| index.ordinal(t) == i as u32));
        Ok(index)
    }
}
