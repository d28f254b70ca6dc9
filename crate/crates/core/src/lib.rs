//! Slot-level simulation of a fusion center scheduling `k` of `m`
//! energy-harvesting sensor nodes per time slot.
//!
//! The crate is organised around the slot dynamics in [`model`] and the
//! slot loop in [`sim`]. Harvest processes live in [`harvest`], the
//! scheduling policies (UROP, round robin, and the omniscient uniformizing
//! policy) in [`policies`], efficiency/fairness figures and closed-form
//! bounds in [`metrics`], and the offline optimum used as ground truth in
//! [`oracle`].

pub mod error;
pub mod harvest;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    BatteryCap, HarvestTiming, HarvestTrace, NetworkConfig, NodeId, NodeState, ScheduleDecision,
    SlotFeedback, SlotOutcome,
};
pub use policies::{Policy, PolicySpec};
pub use sim::{run_simulation, RunRecord};
