//! Dinic max-flow on an adjacency-list residual graph.
//!
//! Augmenting paths in the time-expanded graph can be thousands of arcs
//! long, so the blocking-flow search is iterative rather than recursive.

use std::collections::VecDeque;

pub const INF: u64 = u64::MAX / 4;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: u64,
}

#[derive(Clone, Debug, Default)]
pub struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    pub fn new(vertices: usize) -> Self {
        FlowGraph {
            arcs: Vec::new(),
            adj: vec![Vec::new(); vertices],
        }
    }

    pub fn vertices(&self) -> usize {
        self.adj.len()
    }

    /// Adds `from -> to` with capacity `cap`; returns the arc id.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: u64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap });
        self.arcs.push(Arc { to: from, cap: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Pre-load `amount` units of flow on arc `id`.
    pub fn push(&mut self, id: usize, amount: u64) {
        assert!(self.arcs[id].cap >= amount, "pre-flow exceeds capacity");
        self.arcs[id].cap -= amount;
        self.arcs[id ^ 1].cap += amount;
    }

    /// Flow currently on arc `id`.
    pub fn flow(&self, id: usize) -> u64 {
        self.arcs[id ^ 1].cap
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<u32>> {
        let mut level = vec![u32::MAX; self.vertices()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &e in &self.adj[v] {
                let a = &self.arcs[e];
                if a.cap > 0 && level[a.to] == u32::MAX {
                    level[a.to] = level[v] + 1;
                    q.push_back(a.to);
                }
            }
        }
        (level[t] != u32::MAX).then_some(level)
    }

    fn blocking_flow(&mut self, s: usize, t: usize, level: &[u32]) -> u64 {
        let mut next = vec![0usize; self.vertices()];
        let mut total = 0;
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let bottleneck = path.iter().map(|&e| self.arcs[e].cap).min().unwrap_or(0);
                for &e in &path {
                    self.arcs[e].cap -= bottleneck;
                    self.arcs[e ^ 1].cap += bottleneck;
                }
                total += bottleneck;
                // restart from the tail of the first saturated arc
                let cut = path
                    .iter()
                    .position(|&e| self.arcs[e].cap == 0)
                    .unwrap_or(0);
                path.truncate(cut);
                v = match path.last() {
                    Some(&e) => self.arcs[e].to,
                    None => s,
                };
                continue;
            }
            let mut advanced = false;
            while next[v] < self.adj[v].len() {
                let e = self.adj[v][next[v]];
                let a = &self.arcs[e];
                if a.cap > 0 && level[a.to] == level[v] + 1 {
                    path.push(e);
                    v = a.to;
                    advanced = true;
                    break;
                }
                next[v] += 1;
            }
            if advanced {
                continue;
            }
            // dead end: retreat
            match path.pop() {
                Some(e) => {
                    v = self.arcs[e ^ 1].to;
                    next[v] += 1;
                }
                None => return total,
            }
        }
    }

    /// Augments to a maximum flow; returns the flow added by this call.
    pub fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0;
        while let Some(level) = self.levels(s, t) {
            total += self.blocking_flow(s, t, &level);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        // CLRS figure 26.1, max flow 23
        let mut g = FlowGraph::new(6);
        for (a, b, c) in [
            (0, 1, 16),
            (0, 2, 13),
            (1, 3, 12),
            (2, 1, 4),
            (2, 4, 14),
            (3, 2, 9),
            (3, 5, 20),
            (4, 3, 7),
            (4, 5, 4),
        ] {
            g.add_arc(a, b, c);
        }
        assert_eq!(g.max_flow(0, 5), 23);
        assert_eq!(g.max_flow(0, 5), 0);
    }

    #[test]
    fn preflow_is_respected() {
        let mut g = FlowGraph::new(4);
        let a = g.add_arc(0, 1, 1);
        let b = g.add_arc(1, 3, 1);
        g.add_arc(0, 2, 1);
        g.add_arc(2, 1, 1);
        g.add_arc(2, 3, 1);
        g.push(a, 1);
        g.push(b, 1);
        assert_eq!(g.max_flow(0, 3), 1);
        assert_eq!(g.flow(a) + g.flow(b), 2);
    }

    #[test]
    fn long_chain() {
        let n = 50_000;
        let mut g = FlowGraph::new(n);
        for v in 0..n - 1 {
            g.add_arc(v, v + 1, 3);
        }
        assert_eq!(g.max_flow(0, n - 1), 3);
    }
}
