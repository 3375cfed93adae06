use std::cmp::Reverse;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::acorn::FilterFirst;
use super::{check_args, finish, passes, SearchOutcome, TranslationMap};
use crate::bitmap::FilterBitmap;
use crate::dataset::Vector;
use crate::error::{Error, Result};
use crate::hnsw::{Cand, HnswIndex, SearchState};
use crate::storage::{IndexTid, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    /// All 1-hop neighbors, then 2-hop through the failing ones.
    Blind,
    /// Score every 1-hop neighbor, then take 2-hop lists nearest-first.
    Directed,
    /// Passing 1-hop neighbors only.
    OnehopS,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavixParams {
    pub k: usize,
    pub ef: usize,
    pub theta_low: f64,
    pub theta_high: f64,
    /// Number of recent 1-hop filter checks the local estimate looks at.
    pub window: usize,
}

impl NavixParams {
    pub fn new(k: usize, ef: usize) -> Self {
        Self {
            k,
            ef,
            theta_low: 0.05,
            theta_high: 0.5,
            window: 256,
        }
    }
}

/// Sliding-window estimate of local selectivity. Until the window fills,
/// the empty part counts at the global selectivity.
#[derive(Debug, Clone)]
pub struct NavixHeuristicState {
    recent: VecDeque<bool>,
    passed: usize,
    window: usize,
    prior: f64,
    theta_low: f64,
    theta_high: f64,
}

impl NavixHeuristicState {
    pub fn new(prior: f64, theta_low: f64, theta_high: f64, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window must be positive"));
        }
        if !(0.0..=1.0).contains(&prior) || theta_low > theta_high {
            return Err(Error::param("need 0 <= prior <= 1 and theta_low <= theta_high"));
        }
        Ok(Self {
            recent: VecDeque::with_capacity(window),
            passed: 0,
            window,
            prior,
            theta_low,
            theta_high,
        })
    }

    pub fn record(&mut self, pass: bool) {
        if self.recent.len() == self.window && self.recent.pop_front() == Some(true) {
            self.passed -= 1;
        }
        self.recent.push_back(pass);
        self.passed += pass as usize;
    }

    pub fn estimate(&self) -> f64 {
        let unseen = (self.window - self.recent.len()) as f64;
        ((self.passed as f64 + self.prior * unseen) / self.window as f64).clamp(0.0, 1.0)
    }

    pub fn choose(&self) -> Heuristic {
        let e = self.estimate();
        if e >= self.theta_high {
            Heuristic::OnehopS
        } else if e >= self.theta_low {
            Heuristic::Directed
        } else {
            Heuristic::Blind
        }
    }
}

/// Filter-first search that switches among three expansion heuristics at
/// every step according to the locally observed selectivity.
pub fn navix_search(
    index: &HnswIndex,
    session: &mut Session<'_>,
    q: &Vector,
    bitmap: &FilterBitmap,
    tm: &TranslationMap,
    p: NavixParams,
) -> Result<SearchOutcome> {
    check_args(index, q, p.k, bitmap)?;
    let mut state = NavixHeuristicState::new(bitmap.selectivity(), p.theta_low, p.theta_high, p.window)?;
    let mut ff = FilterFirst {
        index,
        bitmap,
        tm,
        q: q.as_slice(),
        st: SearchState::new(index.len(), p.ef.max(p.k)),
    };
    if !ff.seed(session)? {
        return Ok(SearchOutcome::default());
    }
    let budget = index.params().m;
    let mut trace = Vec::new();
    let mut max_pages = 0;
    let mut one_hop = Vec::new();
    let mut list = Vec::new();
    let mut failing: Vec<Vec<IndexTid>> = Vec::new();
    let mut ranked: Vec<(Cand, Vec<IndexTid>)> = Vec::new();
    while let Some(Reverse(c)) = ff.st.c.pop() {
        if ff.st.should_stop(&c) {
            break;
        }
        let h = state.choose();
        trace.push(h);
        index.expand(session, c.tid, 0, &mut one_hop)?;
        let mut pages = 1u64;
        match h {
            Heuristic::OnehopS | Heuristic::Blind => {
                failing.clear();
                for &n in &one_hop {
                    if ff.st.is_visited(index.ordinal(n)) {
                        continue;
                    }
                    let ht = ff.read_one_hop(session, n, &mut list)?;
                    pages += 1;
                    let pass = passes(index, bitmap, ht, session.ledger_mut());
                    state.record(pass);
                    if pass {
                        ff.st.visit(index.ordinal(n));
                        ff.score_and_offer(session, n)?;
                    } else if h == Heuristic::Blind {
                        failing.push(std::mem::take(&mut list));
                    }
                }
                for l in &failing {
                    pages += ff.expand_two_hop(session, l)?.0;
                }
            }
            Heuristic::Directed => {
                ranked.clear();
                let mut collected = 0;
                for &n in &one_hop {
                    if ff.st.is_visited(index.ordinal(n)) {
                        continue;
                    }
                    let w = &ff.st.w;
                    let mut pass = false;
                    let r = index.read_node(session, n, Some(ff.q), Some(&mut list), |c, ht, ledger| {
                        pass = passes(index, bitmap, ht, ledger);
                        pass && w.admits(c.expect("scored"))
                    })?;
                    pages += 1;
                    state.record(pass);
                    let cand = r.cand.expect("scored");
                    if pass {
                        ff.st.visit(cand.ord);
                        collected += 1;
                        if let Some(copy) = r.copy {
                            ff.st.c.push(Reverse(cand));
                            ff.st.w.push(crate::hnsw::Admitted {
                                cand,
                                heaptid: r.heaptid,
                                copy,
                            });
                        }
                    }
                    ranked.push((cand, std::mem::take(&mut list)));
                }
                ranked.sort_by_key(|a| a.0);
                for (_, l) in &ranked {
                    if collected >= budget {
                        break;
                    }
                    let (pg, found) = ff.expand_two_hop(session, l)?;
                    pages += pg;
                    collected += found;
                }
            }
        }
        max_pages = max_pages.max(pages);
    }
    let (neighbors, truncated) = finish(index, ff.st.w, p.k);
    Ok(SearchOutcome {
        neighbors,
        truncated,
        rounds: 1,
        max_expansion_pages: max_pages,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_starts_at_prior_and_tracks_window() {
        let mut s = NavixHeuristicState::new(0.2, 0.05, 0.5, 4).unwrap();
        assert!((s.estimate() - 0.2).abs() < 1e-12);
        assert_eq!(s.choose(), Heuristic::Directed);
        for _ in 0..4 {
            s.record(true);
        }
        assert_eq!(s.estimate(), 1.0);
        assert_eq!(s.choose(), Heuristic::OnehopS);
        for _ in 0..4 {
            s.record(false);
        }
        assert_eq!(s.estimate(), 0.0);
        assert_eq!(s.choose(), Heuristic::Blind);
    }

    #[test]
    fn zero_high_threshold_forces_onehop() {
        let s = NavixHeuristicState::new(0.0, 0.0, 0.0, 8).unwrap();
        assert_eq!(s.choose(), Heuristic::OnehopS);
    }
}
