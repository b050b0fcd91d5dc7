//! Discrete-time EV charging scheduling: online policies (sLLF and the
//! usual baselines), a flow-based offline feasibility oracle, resource
//! augmentation search and a seeded synthetic corpus.
//!
//! Everything numeric is generic over [`Real`] (`f64` or `f32`); the
//! `*64` / `*32` aliases below pin the scalar.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmentation;
pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod feasibility;
pub mod flow;
pub mod model;
pub mod num;
pub mod schedulers;
pub mod simulator;

pub use augmentation::{
    augment, min_feasible_eps, reference_eps, theorem1_bound, theorem2_bound, AugmentationMode,
    BoundInputs, EpsSearch,
};
pub use corpus::{generate, read_corpus, read_instance, write_corpus, write_instance, CorpusSpec};
pub use dynamics::{energy_delivered, laxity, Laxity, SimState};
pub use error::{Error, Result};
pub use feasibility::{
    min_power_capacity, offline_feasible, validate_schedule, OfflineFeasibility, ScheduleViolation,
};
pub use model::{ChargingSession, Instance, PowerProfile, Violation};
pub use num::Real;
pub use schedulers::{
    edf_rates, es_rates, llf_rates, olp_rates, rep_rates, sllf_rates, Algorithm, RateDecision,
    SlotView,
};
pub use simulator::{
    instance_metrics, is_online_feasible, quantile_bins, simulate, simulate_with, success_rate,
    InstanceMetrics, RunVerdict, Schedule, SimOptions,
};

pub type Session64 = ChargingSession<f64>;
pub type Instance64 = Instance<f64>;
pub type Schedule64 = Schedule<f64>;
pub type State64 = SimState<f64>;
pub type Verdict64 = RunVerdict<f64>;

pub type Session32 = ChargingSession<f32>;
pub type Instance32 = Instance<f32>;
pub type Schedule32 = Schedule<f32>;
pub type State32 = SimState<f32>;
pub type Verdict32 = RunVerdict<f32>;
