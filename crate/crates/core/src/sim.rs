//! The slot loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    self, whole_packets, HarvestTiming, HarvestTrace, NetworkConfig, NodeId, NodeState,
    SlotFeedback, SlotOutcome,
};
use crate::policies::{Observation, Policy};

/// An idle outcome for a node that still had a whole packet of energy
/// banked. Never produced by a correct simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialOptimalityViolation {
    pub slot: usize,
    pub node: NodeId,
    pub sent: u64,
    pub floor: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: NetworkConfig,
    pub seed: Option<u64>,
    pub policy: String,
    pub initial_battery: Vec<f64>,
    pub nodes: Vec<NodeState>,
    /// `slots[t-1]` is the feedback of slot `t`.
    pub slots: Vec<SlotFeedback>,
    pub violations: Vec<PartialOptimalityViolation>,
}

impl RunRecord {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn total_sent(&self) -> u64 {
        self.nodes.iter().map(|n| n.packets_sent).sum()
    }

    pub fn sent_per_node(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.packets_sent).collect()
    }

    pub fn idle_channel_slots(&self) -> usize {
        self.slots
            .iter()
            .flat_map(|f| &f.outcomes)
            .filter(|o| matches!(o, SlotOutcome::Idle(_)))
            .count()
    }

    /// Packets delivered network-wide in slots `1..=t`.
    pub fn cumulative_sent(&self) -> Vec<u64> {
        let mut acc = 0u64;
        std::iter::once(0)
            .chain(self.slots.iter().map(|f| {
                acc += f.transmissions() as u64;
                acc
            }))
            .collect()
    }

    /// Packets delivered per node in slots `1..=t`.
    pub fn sent_by_node_until(&self, t: usize) -> Vec<u64> {
        let mut sent = vec![0u64; self.config.nodes];
        for fb in &self.slots[..t] {
            for o in &fb.outcomes {
                if let SlotOutcome::Transmitted(n) = *o {
                    sent[n] += 1;
                }
            }
        }
        sent
    }

    /// Slot of each node's last idle (drop) event, if any.
    pub fn last_idle_slot(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.config.nodes];
        for (t, fb) in self.slots.iter().enumerate() {
            for o in &fb.outcomes {
                if let SlotOutcome::Idle(n) = *o {
                    last[n] = Some(t + 1);
                }
            }
        }
        last
    }

    /// Largest per-node `|B(0) + E^tot - sent - overflow - battery|`.
    pub fn max_conservation_residual(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.initial_battery)
            .map(|(n, b0)| n.conservation_residual(*b0).abs())
            .fold(0.0, f64::max)
    }

    /// Slot log as CSV: `slot,channel,node_id,outcome`.
    pub fn write_slot_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "slot,channel,node_id,outcome")?;
        for (t, fb) in self.slots.iter().enumerate() {
            for (c, o) in fb.outcomes.iter().enumerate() {
                match o.node() {
                    Some(n) => writeln!(w, "{},{},{},{}", t + 1, c, n, o.label())?,
                    None => writeln!(w, "{},{},,{}", t + 1, c, o.label())?,
                }
            }
        }
        Ok(())
    }
}

/// Run `policy` over `trace` for the configured horizon.
///
/// Non-omniscient policies see only the previous slot's feedback. Every
/// idle outcome is checked against the partial-optimality identity
/// `sent == floor(B(0) + E^tot - overflow)`; mismatches are collected in
/// [`RunRecord::violations`].
pub fn run_simulation(
    config: &NetworkConfig,
    trace: &HarvestTrace,
    policy: &mut dyn Policy,
) -> Result<RunRecord> {
    config.validate()?;
    trace.validate()?;
    trace.check_matches(config)?;

    let k = config.channels;
    let mut states: Vec<NodeState> = trace
        .initial_battery
        .iter()
        .map(|&b| NodeState::initial(b, config.battery_cap))
        .collect();
    let mut slots: Vec<SlotFeedback> = Vec::with_capacity(config.horizon);
    let mut violations = Vec::new();
    let omniscient = policy.omniscient();
    let mut batteries = Vec::new();

    for t in 1..=config.horizon {
        let column = trace.column(t);
        if config.harvest_timing == HarvestTiming::SameSlot {
            model::harvest(&mut states, &column, config.battery_cap)?;
        }
        if omniscient {
            batteries.clear();
            batteries.extend(states.iter().map(|s| s.battery));
        }
        let decision = policy.decide(&Observation {
            slot: t,
            feedback: slots.last(),
            batteries: omniscient.then_some(batteries.as_slice()),
        });
        let feedback = model::transmit(&mut states, &decision, k)
            .map_err(|reason| Error::InvalidDecision { slot: t, reason })?;

        for o in &feedback.outcomes {
            if let SlotOutcome::Idle(n) = *o {
                let s = &states[n];
                let floor =
                    whole_packets(trace.initial_battery[n] + s.total_harvested - s.overflow_lost);
                if s.packets_sent != floor {
                    violations.push(PartialOptimalityViolation {
                        slot: t,
                        node: n,
                        sent: s.packets_sent,
                        floor,
                    });
                }
            }
        }

        if config.harvest_timing == HarvestTiming::NextSlot {
            model::harvest(&mut states, &column, config.battery_cap)?;
        }
        slots.push(feedback);
    }

    Ok(RunRecord {
        config: config.clone(),
        seed: None,
        policy: policy.name(),
        initial_battery: trace.initial_battery.clone(),
        nodes: states,
        slots,
        violations,
    })
}
