//! Scheduling policies.
//!
//! A policy sees only the feedback of the previous slot unless it declares
//! itself omniscient, in which case the simulator also hands it the true
//! battery vector for the current slot.

mod rr;
mod up;
mod urop;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{NodeId, ScheduleDecision, SlotFeedback};

pub use rr::{rr_decide, RoundRobin};
pub use up::Uniformizing;
pub use urop::{CursorVisit, Urop, VisitKind};

/// Everything a policy may look at when deciding slot `slot`.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    /// 1-based slot index being decided.
    pub slot: usize,
    /// Outcome of slot `slot - 1`; `None` for the first slot.
    pub feedback: Option<&'a SlotFeedback>,
    /// Battery levels, only for omniscient policies.
    pub batteries: Option<&'a [f64]>,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Omniscient policies are handed the current battery vector.
    fn omniscient(&self) -> bool {
        false
    }

    fn decide(&mut self, obs: &Observation<'_>) -> ScheduleDecision;
}

/// A fixed random permutation of `0..nodes` drawn from `seed`.
pub fn random_order(nodes: usize, seed: u64) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..nodes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Policy selection as it appears in experiment files.
///
/// `seed` pins the node ordering; when absent the ordering seed is derived
/// from the run seed so each replication draws a fresh order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Urop {
        #[serde(default)]
        seed: Option<u64>,
    },
    Rr {
        #[serde(default = "one")]
        quantum: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Up {
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn one() -> usize {
    1
}

impl PolicySpec {
    pub fn build(&self, nodes: usize, channels: usize, run_seed: u64) -> Box<dyn Policy> {
        let seed = |s: &Option<u64>| s.unwrap_or_else(|| order_seed(run_seed, self.salt()));
        match self {
            PolicySpec::Urop { seed: s } => Box::new(Urop::new(nodes, channels, seed(s))),
            PolicySpec::Rr { quantum, seed: s } => {
                Box::new(RoundRobin::new(nodes, channels, *quantum, seed(s)))
            }
            PolicySpec::Up { seed: s } => Box::new(Uniformizing::new(nodes, channels, seed(s))),
        }
    }

    fn salt(&self) -> u64 {
        match self {
            PolicySpec::Urop { .. } => 0x5552_4f50,
            PolicySpec::Rr { .. } => 0x0052_5252,
            PolicySpec::Up { .. } => 0x0000_5550,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            PolicySpec::Rr { quantum: 0, .. } => Err("quantum must be at least 1".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Urop { .. } => write!(f, "urop"),
            PolicySpec::Rr { quantum, .. } => write!(f, "rr(q={quantum})"),
            PolicySpec::Up { .. } => write!(f, "up"),
        }
    }
}

/// Ordering seed for a policy, decorrelated from the harvest seed.
pub fn order_seed(run_seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = run_seed ^ salt.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
