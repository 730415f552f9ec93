//! Memoized record of quantile queries.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::OracleError;

/// Result of one unmemoized quantile query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOutcome {
    pub log_value: f64,
    /// MAP solver invocations spent on this query.
    pub map_calls: u64,
    /// Solver calls that stopped at a limit with a non-optimal incumbent.
    pub incumbent_only: u64,
}

impl QueryOutcome {
    pub fn exact(log_value: f64) -> Self {
        Self {
            log_value,
            map_calls: 0,
            incumbent_only: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub depth: usize,
    pub log_value: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub memo: BTreeMap<usize, f64>,
    pub distinct_queries: u64,
    pub map_calls: u64,
    pub cache_hits: u64,
    pub incumbent_only: u64,
    pub trace: Vec<TraceEntry>,
}

impl LedgerSnapshot {
    pub fn queried_indices(&self) -> BTreeSet<usize> {
        self.memo.keys().copied().collect()
    }
}

#[derive(Debug, Default)]
struct State {
    memo: BTreeMap<usize, f64>,
    in_flight: BTreeSet<usize>,
    distinct_queries: u64,
    map_calls: u64,
    cache_hits: u64,
    incumbent_only: u64,
    trace: Vec<TraceEntry>,
}

/// Memo table plus counters. Concurrent requests for the same index are
/// coalesced: the first caller computes, later callers block until the value
/// lands in the memo and then count as cache hits.
#[derive(Debug, Default)]
pub struct QueryLedger {
    state: Mutex<State>,
    ready: Condvar,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the memoized value for `index`, computing it with `compute` on
    /// first use.
    pub fn fetch<F>(&self, index: usize, depth: usize, compute: F) -> Result<f64, OracleError>
    where
        F: FnOnce(usize) -> Result<QueryOutcome, OracleError>,
    {
        let mut state = self.state.lock().expect("ledger lock");
        loop {
            if let Some(&v) = state.memo.get(&index) {
                state.cache_hits += 1;
                state.trace.push(TraceEntry {
                    index,
                    depth,
                    log_value: v,
                    cached: true,
                });
                return Ok(v);
            }
            if !state.in_flight.contains(&index) {
                break;
            }
            state = self.ready.wait(state).expect("ledger lock");
        }
        state.in_flight.insert(index);
        drop(state);

        let result = compute(index);

        let mut state = self.state.lock().expect("ledger lock");
        state.in_flight.remove(&index);
        let out = result.map(|q| {
            state.memo.insert(index, q.log_value);
            state.distinct_queries += 1;
            state.map_calls += q.map_calls;
            state.incumbent_only += q.incumbent_only;
            state.trace.push(TraceEntry {
                index,
                depth,
                log_value: q.log_value,
                cached: false,
            });
            q.log_value
        });
        drop(state);
        self.ready.notify_all();
        out
    }

    pub fn memo_get(&self, index: usize) -> Option<f64> {
        self.state.lock().expect("ledger lock").memo.get(&index).copied()
    }

    pub fn distinct_queries(&self) -> u64 {
        self.state.lock().expect("ledger lock").distinct_queries
    }

    pub fn map_calls(&self) -> u64 {
        self.state.lock().expect("ledger lock").map_calls
    }

    pub fn cache_hits(&self) -> u64 {
        self.state.lock().expect("ledger lock").cache_hits
    }

    pub fn incumbent_only(&self) -> u64 {
        self.state.lock().expect("ledger lock").incumbent_only
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let s = self.state.lock().expect("ledger lock");
        LedgerSnapshot {
            memo: s.memo.clone(),
            distinct_queries: s.distinct_queries,
            map_calls: s.map_calls,
            cache_hits: s.cache_hits,
            incumbent_only: s.incumbent_only,
            trace: s.trace.clone(),
        }
    }
}
