//! Residual flow network with real capacities and integer arc costs.
//!
//! Max-flow uses blocking flows (Dinic); min-cost flow uses successive
//! shortest augmenting paths with Dijkstra on reduced costs. Costs are
//! integers so potentials stay exact; capacities are reals and an arc
//! counts as open while its residual exceeds a scale-relative epsilon.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::num::Real;

#[derive(Debug, Clone)]
struct Arc<T> {
    to: usize,
    cap: T,
    residual: T,
    cost: i64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork<T> {
    arcs: Vec<Arc<T>>,
    adj: Vec<Vec<usize>>,
}

/// Counters from one solve, useful as diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowStats {
    pub phases: usize,
    pub augmentations: usize,
}

impl<T: Real> FlowNetwork<T> {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    /// Adds `u -> v` with the given capacity and per-unit cost; returns the arc id.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: T, cost: i64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to: v,
            cap,
            residual: cap,
            cost,
        });
        self.arcs.push(Arc {
            to: u,
            cap: T::zero(),
            residual: T::zero(),
            cost: -cost,
        });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow currently routed on arc `id` (as returned by `add_arc`).
    pub fn flow(&self, id: usize) -> T {
        (self.arcs[id].cap - self.arcs[id].residual).max(T::zero())
    }

    fn open_eps(&self) -> T {
        let scale = self
            .arcs
            .iter()
            .step_by(2)
            .map(|a| a.cap)
            .filter(|c| c.is_finite())
            .fold(T::one(), T::max);
        scale * (T::epsilon() * T::lit(4096.0)).min(T::lit(T::RATE_TOL / 4.0))
    }

    fn push(&mut self, id: usize, amount: T) {
        // exact saturation keeps the bottleneck arc closed
        if amount >= self.arcs[id].residual {
            self.arcs[id].residual = T::zero();
        } else {
            self.arcs[id].residual -= amount;
        }
        self.arcs[id ^ 1].residual += amount;
    }

    /// Maximum `s -> t` flow by blocking flows.
    pub fn max_flow(&mut self, s: usize, t: usize) -> (T, FlowStats) {
        let eps = self.open_eps();
        let n = self.node_count();
        let mut stats = FlowStats::default();
        let mut total = T::zero();
        let mut level = vec![usize::MAX; n];
        let mut cursor = vec![0usize; n];
        loop {
            level.fill(usize::MAX);
            level[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &id in &self.adj[u] {
                    let a = &self.arcs[id];
                    if a.residual > eps && level[a.to] == usize::MAX {
                        level[a.to] = level[u] + 1;
                        queue.push_back(a.to);
                    }
                }
            }
            if level[t] == usize::MAX {
                break;
            }
            stats.phases += 1;
            cursor.fill(0);
            loop {
                let pushed = self.blocking_dfs(s, t, T::infinity(), eps, &level, &mut cursor);
                if pushed <= T::zero() {
                    break;
                }
                stats.augmentations += 1;
                total += pushed;
            }
        }
        (total, stats)
    }

    fn blocking_dfs(
        &mut self,
        u: usize,
        t: usize,
        limit: T,
        eps: T,
        level: &[usize],
        cursor: &mut [usize],
    ) -> T {
        if u == t {
            return limit;
        }
        while cursor[u] < self.adj[u].len() {
            let id = self.adj[u][cursor[u]];
            let (to, residual) = (self.arcs[id].to, self.arcs[id].residual);
            if residual > eps && level[to] == level[u] + 1 {
                let pushed = self.blocking_dfs(to, t, limit.min(residual), eps, level, cursor);
                if pushed > T::zero() {
                    self.push(id, pushed);
                    return pushed;
                }
            }
            cursor[u] += 1;
        }
        T::zero()
    }

    /// Cheapest flow of value up to `limit` from `s` to `t`.
    ///
    /// Requires nonnegative costs on the forward arcs. Returns the routed
    /// amount and its total cost.
    pub fn min_cost_flow(&mut self, s: usize, t: usize, limit: T) -> (T, T, FlowStats) {
        let eps = self.open_eps();
        let n = self.node_count();
        let mut stats = FlowStats::default();
        let mut potential = vec![0i64; n];
        let mut dist = vec![i64::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut sent = T::zero();
        let mut cost = T::zero();
        while limit - sent > eps {
            dist.fill(i64::MAX);
            parent.fill(usize::MAX);
            dist[s] = 0;
            let mut heap = BinaryHeap::from([Reverse((0i64, s))]);
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &id in &self.adj[u] {
                    let a = &self.arcs[id];
                    if a.residual <= eps {
                        continue;
                    }
                    let reduced = a.cost + potential[u] - potential[a.to];
                    debug_assert!(reduced >= 0, "negative reduced cost");
                    let nd = d + reduced;
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        parent[a.to] = id;
                        heap.push(Reverse((nd, a.to)));
                    }
                }
            }
            if dist[t] == i64::MAX {
                break;
            }
            let cap_dist = dist[t];
            for v in 0..n {
                potential[v] += dist[v].min(cap_dist);
            }
            let mut amount = limit - sent;
            let mut v = t;
            while v != s {
                let id = parent[v];
                amount = amount.min(self.arcs[id].residual);
                v = self.arcs[id ^ 1].to;
            }
            let mut v = t;
            let mut unit_cost = 0i64;
            while v != s {
                let id = parent[v];
                unit_cost += self.arcs[id].cost;
                self.push(id, amount);
                v = self.arcs[id ^ 1].to;
            }
            stats.augmentations += 1;
            sent += amount;
            cost += amount * T::lit(unit_cost as f64);
        }
        stats.phases = stats.augmentations;
        (sent, cost, stats)
    }
}
