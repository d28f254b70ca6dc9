//! Omniscient uniformizing policy.
//!
//! Keeps every scheduled node that can still send, and refills channels of
//! depleted nodes by walking a fixed order for nodes holding a whole
//! packet of energy.

use crate::model::{can_transmit, NodeId, ScheduleDecision};

use super::{random_order, Observation, Policy};

#[derive(Clone, Debug)]
pub struct Uniformizing {
    order: Vec<NodeId>,
    cursor: usize,
    active: Vec<Option<NodeId>>,
    holding: Vec<bool>,
}

impl Uniformizing {
    pub fn new(nodes: usize, channels: usize, seed: u64) -> Self {
        Self::with_order(random_order(nodes, seed), channels)
    }

    pub fn with_order(order: Vec<NodeId>, channels: usize) -> Self {
        assert!(channels <= order.len(), "more channels than nodes");
        let nodes = order.len();
        Uniformizing {
            order,
            cursor: 0,
            active: vec![None; channels],
            holding: vec![false; nodes],
        }
    }

    /// One slot of the procedure against the true `batteries`.
    pub fn up_decide(&mut self, batteries: &[f64]) -> ScheduleDecision {
        let m = self.order.len();
        for c in 0..self.active.len() {
            if let Some(n) = self.active[c] {
                if !can_transmit(batteries[n]) {
                    self.active[c] = None;
                    self.holding[n] = false;
                }
            }
        }
        for c in 0..self.active.len() {
            if self.active[c].is_some() {
                continue;
            }
            for step in 0..m {
                let pos = (self.cursor + step) % m;
                let node = self.order[pos];
                if !self.holding[node] && can_transmit(batteries[node]) {
                    self.active[c] = Some(node);
                    self.holding[node] = true;
                    self.cursor = (pos + 1) % m;
                    break;
                }
            }
        }
        ScheduleDecision::new(
            self.active
                .iter()
                .enumerate()
                .filter_map(|(c, n)| n.map(|n| (c, n)))
                .collect(),
        )
    }
}

impl Policy for Uniformizing {
    fn name(&self) -> String {
        "up".into()
    }

    fn omniscient(&self) -> bool {
        true
    }

    fn decide(&mut self, obs: &Observation<'_>) -> ScheduleDecision {
        let batteries = obs
            .batteries
            .expect("the simulator hands batteries to omniscient policies");
        self.up_decide(batteries)
    }
}
