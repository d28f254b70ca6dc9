//! Open-loop round robin with quantum `q`.

use crate::model::{NodeId, ScheduleDecision};

use super::{random_order, Observation, Policy};

/// Channels assigned in slot `t` (1-based).
///
/// Slots are grouped in blocks of `quantum`; block `b` hands channel `j`
/// to `order[(b*k + j) mod m]`.
pub fn rr_decide(
    order: &[NodeId],
    channels: usize,
    quantum: usize,
    slot: usize,
) -> ScheduleDecision {
    assert!(slot >= 1 && quantum >= 1);
    let m = order.len();
    let block = (slot - 1) / quantum;
    let start = (block % m) * channels % m;
    ScheduleDecision::new(
        (0..channels.min(m))
            .map(|j| (j, order[(start + j) % m]))
            .collect(),
    )
}

#[derive(Clone, Debug)]
pub struct RoundRobin {
    order: Vec<NodeId>,
    channels: usize,
    quantum: usize,
}

impl RoundRobin {
    pub fn new(nodes: usize, channels: usize, quantum: usize, seed: u64) -> Self {
        Self::with_order(random_order(nodes, seed), channels, quantum)
    }

    pub fn with_order(order: Vec<NodeId>, channels: usize, quantum: usize) -> Self {
        assert!(quantum >= 1, "quantum must be at least 1");
        assert!(channels <= order.len(), "more channels than nodes");
        RoundRobin {
            order,
            channels,
            quantum,
        }
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }
}

impl Policy for RoundRobin {
    fn name(&self) -> String {
        format!("rr(q={})", self.quantum)
    }

    fn decide(&mut self, obs: &Observation<'_>) -> ScheduleDecision {
        rr_decide(&self.order, self.channels, self.quantum, obs.slot)
    }
}
