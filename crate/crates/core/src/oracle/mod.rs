//! Offline ground truth.
//!
//! [`offline_optimum`] is the largest number of packets any schedule with
//! full knowledge of the trace can deliver. It is the max-flow value of a
//! time-expanded network:
//!
//! ```text
//! source -> (i,t)        whole packets first spendable by node i in slot t
//! (i,t)  -> (i,t+1)      carried energy (battery cap, unbounded by default)
//! (i,t)  -> slot t       capacity 1: one packet per node per slot
//! slot t -> sink         capacity k
//! ```
//!
//! With a finite cap each `(i,t)` is split into an in/out pair joined by an
//! arc of capacity `floor(cap)`, so a node never holds more than the cap
//! while transmitting. That is exact for integer harvests and caps.
//!
//! The flow is warm-started from a longest-queue-first schedule and then
//! completed by Dinic, so the greedy start only affects running time.

mod flow;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, BatteryCap, HarvestTrace, NetworkConfig, NodeState, ScheduleDecision};
use crate::policies::RoundRobin;
use crate::sim::run_simulation;

pub use flow::{FlowGraph, INF};

/// Whole packets arriving per node per slot (`t = 1..=N`, 0-based index).
fn packet_arrivals(trace: &HarvestTrace, cfg: &NetworkConfig) -> Vec<Vec<u64>> {
    trace
        .spendable_floors(cfg.harvest_timing)
        .into_iter()
        .map(|c| {
            (1..c.len())
                .map(|t| if t == 1 { c[1] } else { c[t] - c[t - 1] })
                .collect()
        })
        .collect()
}

fn carry_cap(cap: BatteryCap) -> Option<u64> {
    match cap {
        BatteryCap::Unbounded => None,
        BatteryCap::Finite(c) => Some(model::whole_packets(c)),
    }
}

/// Longest-queue-first schedule: per node, effective cumulative arrivals
/// (after the cap) and the slots it transmits in.
struct GreedySchedule {
    cum_arrivals: Vec<Vec<u64>>,
    sends: Vec<Vec<bool>>,
}

fn greedy_schedule(arrivals: &[Vec<u64>], k: usize, cap: Option<u64>) -> GreedySchedule {
    let m = arrivals.len();
    let n = arrivals.first().map_or(0, Vec::len);
    let mut queue = vec![0u64; m];
    let mut cum_arrivals = vec![vec![0u64; n]; m];
    let mut sends = vec![vec![false; n]; m];
    let mut acc = vec![0u64; m];
    let mut ready: Vec<usize> = Vec::with_capacity(m);
    for t in 0..n {
        ready.clear();
        for i in 0..m {
            let mut q = queue[i] + arrivals[i][t];
            if let Some(c) = cap {
                q = q.min(c);
            }
            acc[i] += q - queue[i];
            cum_arrivals[i][t] = acc[i];
            queue[i] = q;
            if q > 0 {
                ready.push(i);
            }
        }
        let by_queue = |a: &usize, b: &usize| queue[*b].cmp(&queue[*a]).then(a.cmp(b));
        if ready.len() > k {
            ready.select_nth_unstable_by(k, by_queue);
            ready.truncate(k);
        }
        for &i in &ready {
            queue[i] -= 1;
            sends[i][t] = true;
        }
    }
    GreedySchedule {
        cum_arrivals,
        sends,
    }
}

/// Maximum packets any offline schedule can deliver on `trace`.
pub fn offline_optimum(trace: &HarvestTrace, cfg: &NetworkConfig) -> Result<u64> {
    cfg.validate()?;
    trace.check_matches(cfg)?;
    let (m, n, k) = (cfg.nodes, cfg.horizon, cfg.channels);
    let arrivals = packet_arrivals(trace, cfg);
    let cap = carry_cap(cfg.battery_cap);
    let width = if cap.is_some() { 2 } else { 1 };

    let source = 0;
    let sink = 1;
    let slot_v = |t: usize| 2 + t;
    let base = 2 + n;
    let in_v = |i: usize, t: usize| base + (i * n + t) * width;
    let out_v = |i: usize, t: usize| in_v(i, t) + width - 1;

    let mut g = FlowGraph::new(base + m * n * width);
    let sink_arcs: Vec<usize> = (0..n)
        .map(|t| g.add_arc(slot_v(t), sink, k as u64))
        .collect();

    let greedy = greedy_schedule(&arrivals, k, cap);
    let mut warm_total = 0u64;
    let mut slot_load = vec![0u64; n];

    for (i, arrivals) in arrivals.iter().enumerate() {
        let sends = &greedy.sends[i];
        let cum = &greedy.cum_arrivals[i];
        let used: u64 = sends.iter().filter(|s| **s).count() as u64;
        warm_total += used;
        // FIFO: the first `used` effective arrivals feed the transmissions
        let mut sent_so_far = 0u64;
        let mut prev_cum_used = 0u64;
        for t in 0..n {
            let src = g.add_arc(source, in_v(i, t), arrivals[t]);
            let cum_used = cum[t].min(used);
            g.push(src, cum_used - prev_cum_used);
            if let Some(c) = cap {
                let split = g.add_arc(in_v(i, t), out_v(i, t), c);
                g.push(split, cum_used - sent_so_far);
            }
            let tx = g.add_arc(out_v(i, t), slot_v(t), 1);
            if sends[t] {
                g.push(tx, 1);
                sent_so_far += 1;
                slot_load[t] += 1;
            }
            if t + 1 < n {
                let carry = g.add_arc(out_v(i, t), in_v(i, t + 1), cap.unwrap_or(INF));
                g.push(carry, cum_used - sent_so_far);
            }
            prev_cum_used = cum_used;
        }
    }
    for (t, &arc) in sink_arcs.iter().enumerate() {
        g.push(arc, slot_load[t]);
    }

    Ok(warm_total + g.max_flow(source, sink))
}

/// Largest instance [`brute_force_optimum`] accepts.
pub const BRUTE_FORCE_LIMITS: (usize, usize, usize) = (4, 8, 2);

/// Exact optimum by exhaustive search over every sequence of `k`-subsets,
/// replaying the simulator's own slot dynamics.
pub fn brute_force_optimum(trace: &HarvestTrace, cfg: &NetworkConfig) -> Result<u64> {
    cfg.validate()?;
    trace.check_matches(cfg)?;
    let (max_m, max_n, max_k) = BRUTE_FORCE_LIMITS;
    if cfg.nodes > max_m || cfg.horizon > max_n || cfg.channels > max_k {
        return Err(Error::SizeLimit(format!(
            "brute force handles m<={max_m}, N<={max_n}, k<={max_k}; got m={}, N={}, k={}",
            cfg.nodes, cfg.horizon, cfg.channels
        )));
    }
    let subsets = combinations(cfg.nodes, cfg.channels);
    let columns: Vec<Vec<f64>> = (1..=cfg.horizon).map(|t| trace.column(t)).collect();
    let start: Vec<NodeState> = trace
        .initial_battery
        .iter()
        .map(|&b| NodeState::initial(b, cfg.battery_cap))
        .collect();
    let mut memo = HashMap::new();
    Ok(best_from(cfg, &columns, &subsets, 0, &start, &mut memo))
}

fn best_from(
    cfg: &NetworkConfig,
    columns: &[Vec<f64>],
    subsets: &[ScheduleDecision],
    t: usize,
    states: &[NodeState],
    memo: &mut HashMap<(usize, Vec<u64>), u64>,
) -> u64 {
    if t == columns.len() {
        return 0;
    }
    let key = (t, states.iter().map(|s| s.battery.to_bits()).collect());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut best = 0;
    for d in subsets {
        let mut next = states.to_vec();
        let fb = model::advance_slot(
            &mut next,
            d,
            &columns[t],
            cfg.battery_cap,
            cfg.channels,
            cfg.harvest_timing,
        )
        .expect("enumerated decisions are valid");
        let here = fb.transmissions() as u64;
        best = best.max(here + best_from(cfg, columns, subsets, t + 1, &next, memo));
    }
    memo.insert(key, best);
    best
}

fn combinations(m: usize, k: usize) -> Vec<ScheduleDecision> {
    fn rec(
        start: usize,
        m: usize,
        k: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<ScheduleDecision>,
    ) {
        if cur.len() == k {
            out.push(ScheduleDecision::from_nodes(cur));
            return;
        }
        for n in start..m {
            cur.push(n);
            rec(n + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrExtremes {
    pub min_throughput: u64,
    pub max_throughput: u64,
    /// Distinct schedules simulated.
    pub orderings: usize,
}

impl RrExtremes {
    pub fn gap(&self) -> u64 {
        self.max_throughput - self.min_throughput
    }
}

pub const RR_ENUMERATION_MAX_NODES: usize = 6;

/// Throughput range of quantum-1 round robin over every node ordering.
///
/// Orderings that differ only inside a block of `k` co-scheduled nodes
/// produce the same schedule and are simulated once.
pub fn enumerate_rr_orderings(trace: &HarvestTrace, cfg: &NetworkConfig) -> Result<RrExtremes> {
    cfg.validate()?;
    trace.check_matches(cfg)?;
    let (m, k) = (cfg.nodes, cfg.channels);
    if m > RR_ENUMERATION_MAX_NODES {
        return Err(Error::SizeLimit(format!(
            "round-robin enumeration handles m<={RR_ENUMERATION_MAX_NODES}, got {m}"
        )));
    }
    if m % k != 0 {
        return Err(Error::Parameter(format!(
            "round-robin enumeration needs m/k integral, got m={m}, k={k}"
        )));
    }
    let mut seen = HashSet::new();
    let mut lo = u64::MAX;
    let mut hi = 0;
    for mut perm in permutations(m) {
        for block in perm.chunks_mut(k) {
            block.sort_unstable();
        }
        if !seen.insert(perm.clone()) {
            continue;
        }
        let mut rr = RoundRobin::with_order(perm, k, 1);
        let sent = run_simulation(cfg, trace, &mut rr)?.total_sent();
        lo = lo.min(sent);
        hi = hi.max(sent);
    }
    Ok(RrExtremes {
        min_throughput: lo,
        max_throughput: hi,
        orderings: seen.len(),
    })
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm
    let mut a: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_three_node_trace() {
        let cfg = NetworkConfig::new(3, 1, 7).unwrap();
        let trace = HarvestTrace::from_initial(vec![2.0, 1.0, 0.0], 7).unwrap();
        assert_eq!(offline_optimum(&trace, &cfg).unwrap(), 3);
        assert_eq!(brute_force_optimum(&trace, &cfg).unwrap(), 3);
    }

    #[test]
    fn capped_by_channel_capacity() {
        let cfg = NetworkConfig::new(2, 1, 2).unwrap();
        let trace = HarvestTrace::from_initial(vec![2.0, 2.0], 2).unwrap();
        assert_eq!(offline_optimum(&trace, &cfg).unwrap(), 2);
        assert_eq!(brute_force_optimum(&trace, &cfg).unwrap(), 2);
    }

    #[test]
    fn zero_energy() {
        let cfg = NetworkConfig::new(4, 2, 8).unwrap();
        let trace = HarvestTrace::from_initial(vec![0.0; 4], 8).unwrap();
        assert_eq!(offline_optimum(&trace, &cfg).unwrap(), 0);
        assert_eq!(brute_force_optimum(&trace, &cfg).unwrap(), 0);
    }

    #[test]
    fn greedy_start_can_be_beaten_by_augmentation() {
        // node 0 has a big backlog but can only use one slot at a time;
        // node 1's energy arrives only in the last slot
        let cfg = NetworkConfig::new(3, 2, 3).unwrap();
        let trace = HarvestTrace::new(
            vec![
                vec![3.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![2.0, 0.0, 0.0],
            ],
            vec![0.0; 3],
        )
        .unwrap();
        assert_eq!(
            offline_optimum(&trace, &cfg).unwrap(),
            brute_force_optimum(&trace, &cfg).unwrap()
        );
    }

    #[test]
    fn brute_force_size_limit() {
        let cfg = NetworkConfig::new(5, 1, 3).unwrap();
        let trace = HarvestTrace::from_initial(vec![0.0; 5], 3).unwrap();
        assert!(matches!(
            brute_force_optimum(&trace, &cfg),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn brute_force_with_all_nodes_scheduled() {
        let cfg = NetworkConfig::new(2, 2, 4).unwrap();
        let trace = HarvestTrace::new(vec![vec![0.5; 4], vec![1.0, 0.0, 0.0, 1.0]], vec![0.0, 1.0])
            .unwrap();
        // node 0 sends at t=2,4; node 1 at t=1,2,4
        assert_eq!(brute_force_optimum(&trace, &cfg).unwrap(), 5);
        assert_eq!(offline_optimum(&trace, &cfg).unwrap(), 5);
    }

    #[test]
    fn finite_cap_is_exact_on_integer_traces() {
        let cfg = NetworkConfig::new(2, 1, 6)
            .unwrap()
            .with_battery_cap(BatteryCap::Finite(2.0))
            .unwrap();
        let trace = HarvestTrace::new(
            vec![
                vec![3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ],
            vec![0.0; 2],
        )
        .unwrap();
        // each node holds at most 2 units, so 4 packets at most
        assert_eq!(brute_force_optimum(&trace, &cfg).unwrap(), 4);
        assert_eq!(offline_optimum(&trace, &cfg).unwrap(), 4);
    }

    #[test]
    fn permutations_are_complete() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p.iter().collect::<HashSet<_>>().len(), 24);
    }

    #[test]
    fn rr_enumeration_preconditions() {
        let cfg = NetworkConfig::new(7, 1, 3).unwrap();
        let trace = HarvestTrace::from_initial(vec![0.0; 7], 3).unwrap();
        assert!(matches!(
            enumerate_rr_orderings(&trace, &cfg),
            Err(Error::SizeLimit(_))
        ));
        let cfg = NetworkConfig::new(3, 2, 3).unwrap();
        let trace = HarvestTrace::from_initial(vec![0.0; 3], 3).unwrap();
        assert!(matches!(
            enumerate_rr_orderings(&trace, &cfg),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn rr_dedup_counts_block_partitions() {
        let cfg = NetworkConfig::new(4, 2, 2).unwrap();
        let trace = HarvestTrace::from_initial(vec![1.0; 4], 2).unwrap();
        let ex = enumerate_rr_orderings(&trace, &cfg).unwrap();
        // 4!/(2!*2!) ordered block partitions
        assert_eq!(ex.orderings, 6);
        assert_eq!(ex.gap(), 0);
    }
}
