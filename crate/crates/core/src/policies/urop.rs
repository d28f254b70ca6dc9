//! Uniformizing Random Ordered Policy.
//!
//! The fusion center fixes a random cyclic order of the nodes. A scheduled
//! node keeps its channel for as long as it transmits; the first idle slot
//! drops it, and the vacated channel goes to the next node in the cyclic
//! order. A single cursor walks that order. When the cursor lands on a node
//! that is still holding a channel it has transmitted on every slot since
//! it was selected (an elephant): it keeps its channel and the cursor moves
//! past it.

use crate::model::{NodeId, ScheduleDecision, SlotOutcome};

use super::{random_order, Observation, Policy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisitKind {
    Selected,
    ElephantSkip,
}

/// One step of the cursor, recorded when visit logging is enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CursorVisit {
    pub slot: usize,
    pub node: NodeId,
    pub kind: VisitKind,
}

#[derive(Clone, Debug)]
pub struct Urop {
    order: Vec<NodeId>,
    cursor: usize,
    /// Channel -> node currently holding it.
    active: Vec<Option<NodeId>>,
    holding: Vec<bool>,
    started: bool,
    elephant_skips: u64,
    visits: Option<Vec<CursorVisit>>,
}

impl Urop {
    pub fn new(nodes: usize, channels: usize, seed: u64) -> Self {
        Self::with_order(random_order(nodes, seed), channels)
    }

    pub fn with_order(order: Vec<NodeId>, channels: usize) -> Self {
        assert!(channels <= order.len(), "more channels than nodes");
        let nodes = order.len();
        Urop {
            order,
            cursor: 0,
            active: vec![None; channels],
            holding: vec![false; nodes],
            started: false,
            elephant_skips: 0,
            visits: None,
        }
    }

    /// Keep a log of every cursor step.
    pub fn record_visits(mut self) -> Self {
        self.visits = Some(Vec::new());
        self
    }

    pub fn visits(&self) -> &[CursorVisit] {
        self.visits.as_deref().unwrap_or(&[])
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn elephant_skips(&self) -> u64 {
        self.elephant_skips
    }

    fn drop_idle(&mut self, outcomes: &[SlotOutcome]) {
        for (c, o) in outcomes.iter().enumerate() {
            if let SlotOutcome::Idle(n) = *o {
                debug_assert_eq!(self.active[c], Some(n));
                self.active[c] = None;
                self.holding[n] = false;
            }
        }
    }

    fn fill_vacant(&mut self, slot: usize) {
        let m = self.order.len();
        for c in 0..self.active.len() {
            if self.active[c].is_some() {
                continue;
            }
            // at most one lap; a full lap of holders leaves the channel empty
            for _ in 0..m {
                let node = self.order[self.cursor];
                self.cursor = (self.cursor + 1) % m;
                if self.holding[node] {
                    self.elephant_skips += 1;
                    self.log(slot, node, VisitKind::ElephantSkip);
                } else {
                    self.active[c] = Some(node);
                    self.holding[node] = true;
                    self.log(slot, node, VisitKind::Selected);
                    break;
                }
            }
        }
    }

    fn log(&mut self, slot: usize, node: NodeId, kind: VisitKind) {
        if let Some(v) = self.visits.as_mut() {
            v.push(CursorVisit { slot, node, kind });
        }
    }
}

impl Policy for Urop {
    fn name(&self) -> String {
        "urop".into()
    }

    fn decide(&mut self, obs: &Observation<'_>) -> ScheduleDecision {
        if self.started {
            if let Some(fb) = obs.feedback {
                self.drop_idle(&fb.outcomes);
            }
        } else {
            self.started = true;
        }
        self.fill_vacant(obs.slot);
        ScheduleDecision::new(
            self.active
                .iter()
                .enumerate()
                .filter_map(|(c, n)| n.map(|n| (c, n)))
                .collect(),
        )
    }
}
