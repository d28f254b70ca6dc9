//! Domain types and the single-slot battery dynamics.
//!
//! Energy is a real number measured in packet-energy units: sending one
//! packet costs exactly `1.0`. Packets are integers. Within a slot the
//! default order is harvest, clamp to capacity, then transmit
//! ([`HarvestTiming::SameSlot`]); [`HarvestTiming::NextSlot`] transmits from
//! the previous slot's battery and banks the harvest afterwards.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type ChannelId = usize;

/// Slack used when turning accumulated fractional energy into packets.
///
/// Sums such as `0.03 * 34` land a few ulps below the integer they
/// represent; every "is there a whole packet" test goes through
/// [`whole_packets`] or [`can_transmit`] so the simulator, the metrics and
/// the oracle agree on the same floor.
pub const ENERGY_EPS: f64 = 1e-9;

/// Number of whole packets `energy` can pay for.
pub fn whole_packets(energy: f64) -> u64 {
    let v = (energy + ENERGY_EPS).floor();
    if v <= 0.0 {
        0
    } else {
        v as u64
    }
}

/// Whether a battery holding `energy` can send one packet.
pub fn can_transmit(energy: f64) -> bool {
    energy + ENERGY_EPS >= 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum BatteryCap {
    #[default]
    Unbounded,
    Finite(f64),
}

impl BatteryCap {
    pub fn clamp(self, energy: f64) -> f64 {
        match self {
            BatteryCap::Unbounded => energy,
            BatteryCap::Finite(cap) => energy.min(cap),
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, BatteryCap::Finite(_))
    }
}

impl Serialize for BatteryCap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatteryCap::Unbounded => s.serialize_str("unbounded"),
            BatteryCap::Finite(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for BatteryCap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(BatteryCap::Finite(c)),
            Raw::Int(c) => Ok(BatteryCap::Finite(c as f64)),
            Raw::Text(t) if t == "unbounded" => Ok(BatteryCap::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "battery cap must be a number or \"unbounded\", got {t:?}"
            ))),
        }
    }
}

/// When energy harvested during slot `t` becomes spendable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestTiming {
    /// Harvest, clamp, then transmit: slot-`t` energy is usable in slot `t`.
    #[default]
    SameSlot,
    /// Transmit from the slot-`t-1` battery, then harvest and clamp.
    NextSlot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Node count `m`.
    pub nodes: usize,
    /// Orthogonal channel count `k`.
    pub channels: usize,
    /// Horizon `N` in slots.
    pub horizon: usize,
    #[serde(default)]
    pub battery_cap: BatteryCap,
    #[serde(default)]
    pub harvest_timing: HarvestTiming,
}

impl NetworkConfig {
    pub fn new(nodes: usize, channels: usize, horizon: usize) -> Result<Self> {
        let cfg = NetworkConfig {
            nodes,
            channels,
            horizon,
            battery_cap: BatteryCap::Unbounded,
            harvest_timing: HarvestTiming::SameSlot,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_battery_cap(mut self, cap: BatteryCap) -> Result<Self> {
        self.battery_cap = cap;
        self.validate()?;
        Ok(self)
    }

    pub fn with_harvest_timing(mut self, timing: HarvestTiming) -> Self {
        self.harvest_timing = timing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Config("node count must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if self.channels > self.nodes {
            return Err(Error::Config(format!(
                "channel count {} exceeds node count {}",
                self.channels, self.nodes
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one slot".into()));
        }
        if let BatteryCap::Finite(c) = self.battery_cap {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Config(format!(
                    "battery cap must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Fair share `kN/m` of slots per node over the horizon.
    pub fn fair_share(&self) -> f64 {
        (self.channels * self.horizon) as f64 / self.nodes as f64
    }
}

/// Per-node, per-slot harvested energy plus initial battery levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestTrace {
    /// `grid[i][t-1]` is the energy node `i` harvests during slot `t`.
    pub grid: Vec<Vec<f64>>,
    pub initial_battery: Vec<f64>,
}

impl HarvestTrace {
    pub fn new(grid: Vec<Vec<f64>>, initial_battery: Vec<f64>) -> Result<Self> {
        let trace = HarvestTrace {
            grid,
            initial_battery,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// A trace with no harvest at all, only initial energy.
    pub fn from_initial(initial_battery: Vec<f64>, horizon: usize) -> Result<Self> {
        let grid = vec![vec![0.0; horizon]; initial_battery.len()];
        Self::new(grid, initial_battery)
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn horizon(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_battery.len() != self.grid.len() {
            return Err(Error::Config(format!(
                "initial battery vector has {} entries for {} nodes",
                self.initial_battery.len(),
                self.grid.len()
            )));
        }
        let n = self.horizon();
        for (i, row) in self.grid.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "node {i} has {} slots, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!("node {i} has invalid harvest {v}")));
            }
        }
        if let Some(b) = self
            .initial_battery
            .iter()
            .find(|b| !b.is_finite() || **b < 0.0)
        {
            return Err(Error::Config(format!("invalid initial battery {b}")));
        }
        Ok(())
    }

    pub fn check_matches(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.nodes() != cfg.nodes || self.horizon() != cfg.horizon {
            return Err(Error::Config(format!(
                "trace is {}x{} but config expects {}x{}",
                self.nodes(),
                self.horizon(),
                cfg.nodes,
                cfg.horizon
            )));
        }
        Ok(())
    }

    /// Harvest of every node during slot `t` (1-based).
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.grid.iter().map(|row| row[t - 1]).collect()
    }

    /// `E_i^tot(t)` for `t = 0..=N`, per node.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        self.grid
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                std::iter::once(0.0)
                    .chain(row.iter().map(|e| {
                        acc += e;
                        acc
                    }))
                    .collect()
            })
            .collect()
    }

    /// Whole packets each node could have paid for by slot `t`, i.e.
    /// `floor(B_i(0) + E_i^tot(t))`, for `t = 0..=N`.
    pub fn packet_floors(&self) -> Vec<Vec<u64>> {
        self.cumulative()
            .iter()
            .zip(&self.initial_battery)
            .map(|(cum, b0)| cum.iter().map(|e| whole_packets(b0 + e)).collect())
            .collect()
    }

    /// Same as [`packet_floors`](Self::packet_floors) but indexed by the
    /// slot in which the energy is spendable under `timing`.
    pub fn spendable_floors(&self, timing: HarvestTiming) -> Vec<Vec<u64>> {
        let floors = self.packet_floors();
        match timing {
            HarvestTiming::SameSlot => floors,
            HarvestTiming::NextSlot => floors
                .into_iter()
                .map(|row| {
                    // slot t can spend what had arrived by t-1
                    let mut shifted = Vec::with_capacity(row.len());
                    shifted.push(row[0]);
                    shifted.extend_from_slice(&row[..row.len() - 1]);
                    shifted
                })
                .collect(),
        }
    }

    /// `floor(B_i(0) + E_i^tot(N))` per node.
    pub fn total_floors(&self) -> Vec<u64> {
        self.packet_floors()
            .into_iter()
            .map(|row| *row.last().unwrap_or(&0))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub battery: f64,
    pub total_harvested: f64,
    pub packets_sent: u64,
    pub overflow_lost: f64,
}

impl NodeState {
    pub fn with_battery(battery: f64) -> Self {
        NodeState {
            battery,
            ..Default::default()
        }
    }

    /// Starting state; energy above `cap` is discarded and metered.
    pub fn initial(battery: f64, cap: BatteryCap) -> Self {
        let kept = cap.clamp(battery);
        NodeState {
            battery: kept,
            overflow_lost: battery - kept,
            ..Default::default()
        }
    }

    /// `B(0) + E^tot - sent - overflow - battery`; zero up to rounding.
    pub fn conservation_residual(&self, initial_battery: f64) -> f64 {
        initial_battery + self.total_harvested
            - self.packets_sent as f64
            - self.overflow_lost
            - self.battery
    }
}

/// The set `S(t)` as `(channel, node)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub assignments: Vec<(ChannelId, NodeId)>,
}

impl ScheduleDecision {
    pub fn new(assignments: Vec<(ChannelId, NodeId)>) -> Self {
        ScheduleDecision { assignments }
    }

    /// Assign `nodes[j]` to channel `j`.
    pub fn from_nodes(nodes: &[NodeId]) -> Self {
        ScheduleDecision {
            assignments: nodes.iter().copied().enumerate().collect(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.assignments.iter().map(|&(_, n)| n)
    }

    pub fn validate(&self, nodes: usize, channels: usize) -> std::result::Result<(), String> {
        if self.assignments.len() > channels {
            return Err(format!(
                "{} assignments for {channels} channels",
                self.assignments.len()
            ));
        }
        let mut seen_node = vec![false; nodes];
        let mut seen_channel = vec![false; channels];
        for &(c, n) in &self.assignments {
            if c >= channels {
                return Err(format!("channel {c} out of range"));
            }
            if n >= nodes {
                return Err(format!("node {n} out of range"));
            }
            if std::mem::replace(&mut seen_channel[c], true) {
                return Err(format!("channel {c} assigned twice"));
            }
            if std::mem::replace(&mut seen_node[n], true) {
                return Err(format!("node {n} scheduled twice"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "node", rename_all = "snake_case")]
pub enum SlotOutcome {
    Transmitted(NodeId),
    Idle(NodeId),
    Unassigned,
}

impl SlotOutcome {
    pub fn node(self) -> Option<NodeId> {
        match self {
            SlotOutcome::Transmitted(n) | SlotOutcome::Idle(n) => Some(n),
            SlotOutcome::Unassigned => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SlotOutcome::Transmitted(_) => "transmitted",
            SlotOutcome::Idle(_) => "idle",
            SlotOutcome::Unassigned => "unassigned",
        }
    }
}

/// What the fusion center observes after a slot, one entry per channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotFeedback {
    pub outcomes: Vec<SlotOutcome>,
}

impl SlotFeedback {
    pub fn unassigned(channels: usize) -> Self {
        SlotFeedback {
            outcomes: vec![SlotOutcome::Unassigned; channels],
        }
    }

    pub fn transmissions(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, SlotOutcome::Transmitted(_)))
            .count()
    }

    pub fn decision(&self) -> ScheduleDecision {
        ScheduleDecision {
            assignments: self
                .outcomes
                .iter()
                .enumerate()
                .filter_map(|(c, o)| o.node().map(|n| (c, n)))
                .collect(),
        }
    }
}

/// Bank one slot of harvest into every node, clamping at `cap`.
pub fn harvest(states: &mut [NodeState], harvest_column: &[f64], cap: BatteryCap) -> Result<()> {
    if states.len() != harvest_column.len() {
        return Err(Error::Config(format!(
            "harvest column has {} entries for {} nodes",
            harvest_column.len(),
            states.len()
        )));
    }
    for (s, &e) in states.iter_mut().zip(harvest_column) {
        if e.is_nan() || e < 0.0 {
            return Err(Error::Config(format!("negative harvest {e}")));
        }
        s.total_harvested += e;
        let raw = s.battery + e;
        let kept = cap.clamp(raw);
        s.overflow_lost += raw - kept;
        s.battery = kept;
    }
    Ok(())
}

/// Let every scheduled node with a whole packet of energy transmit.
pub fn transmit(
    states: &mut [NodeState],
    decision: &ScheduleDecision,
    channels: usize,
) -> std::result::Result<SlotFeedback, String> {
    decision.validate(states.len(), channels)?;
    let mut feedback = SlotFeedback::unassigned(channels);
    for &(c, n) in &decision.assignments {
        let s = &mut states[n];
        feedback.outcomes[c] = if can_transmit(s.battery) {
            s.battery -= 1.0;
            s.packets_sent += 1;
            SlotOutcome::Transmitted(n)
        } else {
            SlotOutcome::Idle(n)
        };
    }
    Ok(feedback)
}

/// One full slot: harvest and transmit in the order `timing` prescribes.
pub fn advance_slot(
    states: &mut [NodeState],
    decision: &ScheduleDecision,
    harvest_column: &[f64],
    cap: BatteryCap,
    channels: usize,
    timing: HarvestTiming,
) -> Result<SlotFeedback> {
    if states.len() != harvest_column.len() {
        return Err(Error::Config(format!(
            "harvest column has {} entries for {} nodes",
            harvest_column.len(),
            states.len()
        )));
    }
    let invalid = |reason| Error::InvalidDecision { slot: 0, reason };
    match timing {
        HarvestTiming::SameSlot => {
            harvest(states, harvest_column, cap)?;
            transmit(states, decision, channels).map_err(invalid)
        }
        HarvestTiming::NextSlot => {
            let fb = transmit(states, decision, channels).map_err(invalid)?;
            harvest(states, harvest_column, cap)?;
            Ok(fb)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(battery: f64) -> Vec<NodeState> {
        vec![NodeState::with_battery(battery)]
    }

    const SCHED: fn() -> ScheduleDecision = || ScheduleDecision::from_nodes(&[0]);

    #[test]
    fn harvest_then_transmit() {
        let mut s = one(0.5);
        let fb = advance_slot(
            &mut s,
            &SCHED(),
            &[0.6],
            BatteryCap::Unbounded,
            1,
            HarvestTiming::SameSlot,
        )
        .unwrap();
        assert_eq!(fb.outcomes, vec![SlotOutcome::Transmitted(0)]);
        assert!((s[0].battery - 0.1).abs() < 1e-12);
        assert_eq!(s[0].packets_sent, 1);
    }

    #[test]
    fn short_of_a_packet_is_idle() {
        let mut s = one(0.5);
        let fb = advance_slot(
            &mut s,
            &SCHED(),
            &[0.3],
            BatteryCap::Unbounded,
            1,
            HarvestTiming::SameSlot,
        )
        .unwrap();
        assert_eq!(fb.outcomes, vec![SlotOutcome::Idle(0)]);
        assert!((s[0].battery - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clamp_meters_overflow() {
        let mut s = one(0.8);
        let fb = advance_slot(
            &mut s,
            &ScheduleDecision::default(),
            &[0.5],
            BatteryCap::Finite(1.0),
            1,
            HarvestTiming::SameSlot,
        )
        .unwrap();
        assert_eq!(fb.outcomes, vec![SlotOutcome::Unassigned]);
        assert_eq!(s[0].battery, 1.0);
        assert!((s[0].overflow_lost - 0.3).abs() < 1e-12);
        assert!(s[0].conservation_residual(0.8).abs() < 1e-12);
    }

    #[test]
    fn next_slot_timing_spends_old_energy_only() {
        let mut s = one(0.5);
        let fb = advance_slot(
            &mut s,
            &SCHED(),
            &[0.6],
            BatteryCap::Unbounded,
            1,
            HarvestTiming::NextSlot,
        )
        .unwrap();
        assert_eq!(fb.outcomes, vec![SlotOutcome::Idle(0)]);
        assert!((s[0].battery - 1.1).abs() < 1e-12);
    }

    #[test]
    fn duplicate_node_rejected() {
        let mut s = vec![NodeState::default(); 3];
        let d = ScheduleDecision::new(vec![(0, 1), (1, 1)]);
        let err = advance_slot(
            &mut s,
            &d,
            &[0.0; 3],
            BatteryCap::Unbounded,
            2,
            HarvestTiming::SameSlot,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDecision { .. }));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut s = vec![NodeState::default(); 2];
        let err = advance_slot(
            &mut s,
            &ScheduleDecision::default(),
            &[0.0; 3],
            BatteryCap::Unbounded,
            1,
            HarvestTiming::SameSlot,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn config_rejects_more_channels_than_nodes() {
        assert!(NetworkConfig::new(2, 3, 10).is_err());
        assert!(NetworkConfig::new(3, 3, 0).is_err());
        assert!(NetworkConfig::new(3, 3, 1)
            .unwrap()
            .with_battery_cap(BatteryCap::Finite(0.0))
            .is_err());
    }

    #[test]
    fn floors_tolerate_accumulated_rounding() {
        let trace = HarvestTrace::new(vec![vec![0.03; 100]], vec![0.0]).unwrap();
        let floors = trace.packet_floors();
        assert_eq!(floors[0][100], 3);
        // 0.03 summed 34 times is a hair under 1.02 but well over 1
        assert_eq!(floors[0][34], 1);
        assert_eq!(floors[0][33], 0);
    }

    #[test]
    fn battery_cap_serde() {
        let c: BatteryCap = serde_json::from_str("\"unbounded\"").unwrap();
        assert_eq!(c, BatteryCap::Unbounded);
        let c: BatteryCap = serde_json::from_str("50").unwrap();
        assert_eq!(c, BatteryCap::Finite(50.0));
        assert_eq!(
            serde_json::to_string(&BatteryCap::Finite(50.0)).unwrap(),
            "50.0"
        );
    }
}
