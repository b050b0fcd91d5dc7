//! Offline feasibility oracle, minimum constant power capacity, and schedule
//! validation.
//!
//! Offline feasibility is a transportation problem on the time-expanded
//! network `source -> session -> slot -> sink`: session arcs carry the
//! demand, session-to-slot arcs the peak rate inside the sojourn window,
//! slot arcs the power limit. The instance is feasible iff the max flow
//! saturates every demand.

use crate::dynamics::{laxity, Laxity};
use crate::error::{Error, Result};
use crate::flow::{FlowNetwork, FlowStats};
use crate::model::{Instance, PowerProfile};
use crate::num::Real;
use crate::simulator::{oscillation, switch_count, RunVerdict, Schedule};

/// Time-expanded transportation network for slots `from_slot..horizon`.
#[derive(Debug, Clone)]
pub struct TransportNetwork<T> {
    pub graph: FlowNetwork<T>,
    pub source: usize,
    pub sink: usize,
    /// Source arc of each session.
    pub demand_arcs: Vec<usize>,
    /// `(session, slot, arc)` for every session-to-slot arc.
    pub rate_arcs: Vec<(usize, usize, usize)>,
}

impl<T: Real> TransportNetwork<T> {
    /// Builds the network; `energies` overrides the session demands (used for
    /// residual instances), and with `slot_costs` every session-to-slot arc
    /// costs its slot index per unit.
    pub fn build(
        instance: &Instance<T>,
        from_slot: usize,
        energies: Option<&[T]>,
        slot_costs: bool,
    ) -> Self {
        let n = instance.len();
        let horizon = instance.horizon;
        let slots = horizon.saturating_sub(from_slot);
        let mut graph = FlowNetwork::new(2 + n + slots);
        let (source, sink) = (0, 1);
        let slot_node = |t: usize| 2 + n + (t - from_slot);
        for t in from_slot..horizon {
            graph.add_arc(slot_node(t), sink, instance.power.at(t), 0);
        }
        let mut demand_arcs = Vec::with_capacity(n);
        let mut rate_arcs = Vec::new();
        for (i, s) in instance.sessions.iter().enumerate() {
            let e = energies.map_or(s.energy, |e| e[i]);
            demand_arcs.push(graph.add_arc(source, 2 + i, e.max(T::zero()), 0));
            for t in s.arrival.max(from_slot)..s.departure.min(horizon) {
                let cost = if slot_costs { t as i64 } else { 0 };
                let arc = graph.add_arc(2 + i, slot_node(t), s.max_rate, cost);
                rate_arcs.push((i, t, arc));
            }
        }
        Self {
            graph,
            source,
            sink,
            demand_arcs,
            rate_arcs,
        }
    }

    pub fn max_flow(&mut self) -> (T, FlowStats) {
        self.graph.max_flow(self.source, self.sink)
    }

    /// Rates read off the session-to-slot arcs.
    pub fn schedule(&self, sessions: usize, horizon: usize) -> Schedule<T> {
        let mut sched = Schedule::zeros(sessions, horizon);
        for &(i, t, arc) in &self.rate_arcs {
            sched.set(i, t, self.graph.flow(arc));
        }
        sched
    }

    /// Whether each session's demand arc carries its demand within `DEMAND_TOL * e`.
    pub fn demands_met(&self, energies: &[T]) -> bool {
        self.demands_met_within(energies, T::lit(T::DEMAND_TOL))
    }

    /// Whether each demand arc carries at least `(1 - rel) * e`.
    pub fn demands_met_within(&self, energies: &[T], rel: T) -> bool {
        self.demand_arcs
            .iter()
            .zip(energies)
            .all(|(&arc, &e)| self.graph.flow(arc) >= e - rel * e)
    }
}

/// Outcome of the offline oracle.
#[derive(Debug, Clone)]
pub struct OfflineFeasibility<T> {
    pub feasible: bool,
    /// A schedule meeting every constraint, present iff `feasible`.
    pub witness: Option<Schedule<T>>,
    pub max_flow: T,
    pub stats: FlowStats,
}

/// Decides offline feasibility and returns a witness schedule when feasible.
pub fn offline_feasible<T: Real>(instance: &Instance<T>) -> OfflineFeasibility<T> {
    let mut net = TransportNetwork::build(instance, 0, None, false);
    let (max_flow, stats) = net.max_flow();
    let energies: Vec<T> = instance.sessions.iter().map(|s| s.energy).collect();
    let feasible = net.demands_met(&energies);
    OfflineFeasibility {
        feasible,
        witness: feasible.then(|| net.schedule(instance.len(), instance.horizon)),
        max_flow,
        stats,
    }
}

/// `instance` with its power profile replaced by a constant.
pub fn with_constant_power<T: Real>(instance: &Instance<T>, p: T) -> Instance<T> {
    Instance {
        sessions: instance.sessions.clone(),
        power: PowerProfile::Constant(p),
        horizon: instance.horizon,
    }
}

/// Bisection steps for [`min_power_capacity`].
pub const CAPACITY_BISECTION_STEPS: usize = 60;

/// Smallest constant power limit under which the instance is offline feasible.
///
/// Requires every session to be individually satisfiable, which makes
/// `sum(rmax)` a feasible upper bracket. The returned value is the upper end
/// of the final bracket, so it is always feasible.
pub fn min_power_capacity<T: Real>(instance: &Instance<T>) -> T {
    let mut lo = T::zero();
    let mut hi = instance.total_max_rate();
    if instance.is_empty() {
        return T::zero();
    }
    let two = T::lit(2.0);
    // near-exact demands, so the answer does not sit a demand tolerance low,
    // yet always strictly inside the oracle's tolerance
    let rel = (T::epsilon() * T::lit(1024.0)).min(T::lit(T::DEMAND_TOL / 8.0));
    let energies: Vec<T> = instance.sessions.iter().map(|s| s.energy).collect();
    for _ in 0..CAPACITY_BISECTION_STEPS {
        let mid = (lo + hi) / two;
        let mut net = TransportNetwork::build(&with_constant_power(instance, mid), 0, None, false);
        net.max_flow();
        if net.demands_met_within(&energies, rel) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// A schedule entry that breaks one of the box, power or demand constraints.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    /// Negative rate, or above the peak rate.
    RateBound {
        session: usize,
        slot: usize,
        rate: f64,
    },
    /// Nonzero rate outside `[arrival, departure)`.
    OutsideWindow {
        session: usize,
        slot: usize,
        rate: f64,
    },
    PowerLimit {
        slot: usize,
        total: f64,
        limit: f64,
    },
    Demand {
        session: usize,
        delivered: f64,
        required: f64,
    },
}

impl ScheduleViolation {
    /// Which constraint family is broken: 1 = rate box, 2 = power, 3 = demand.
    pub fn family(&self) -> u8 {
        match self {
            ScheduleViolation::RateBound { .. } | ScheduleViolation::OutsideWindow { .. } => 1,
            ScheduleViolation::PowerLimit { .. } => 2,
            ScheduleViolation::Demand { .. } => 3,
        }
    }
}

impl std::fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleViolation::RateBound {
                session,
                slot,
                rate,
            } => {
                write!(
                    f,
                    "session {session} slot {slot}: rate {rate} outside [0, rmax]"
                )
            }
            ScheduleViolation::OutsideWindow {
                session,
                slot,
                rate,
            } => {
                write!(
                    f,
                    "session {session} slot {slot}: rate {rate} outside sojourn"
                )
            }
            ScheduleViolation::PowerLimit { slot, total, limit } => {
                write!(f, "slot {slot}: total {total} exceeds limit {limit}")
            }
            ScheduleViolation::Demand {
                session,
                delivered,
                required,
            } => write!(f, "session {session}: delivered {delivered} of {required}"),
        }
    }
}

fn f64_of<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Checks a full schedule against every constraint and computes run metrics.
pub fn validate_schedule<T: Real>(
    instance: &Instance<T>,
    schedule: &Schedule<T>,
) -> Result<RunVerdict<T>> {
    if schedule.sessions() != instance.len() || schedule.horizon() != instance.horizon {
        return Err(Error::Contract(format!(
            "schedule is {}x{} but instance has {} sessions over {} slots",
            schedule.sessions(),
            schedule.horizon(),
            instance.len(),
            instance.horizon
        )));
    }
    let mut violations = Vec::new();
    let mut unmet = Vec::with_capacity(instance.len());
    let mut min_laxity = T::infinity();
    for (i, s) in instance.sessions.iter().enumerate() {
        let mut delivered = T::zero();
        for t in 0..instance.horizon {
            if t >= s.arrival {
                if let Laxity::Finite(l) = laxity(s, t, s.energy - delivered) {
                    min_laxity = min_laxity.min(l);
                }
            }
            let r = schedule.rate(i, t);
            let tol = T::rate_tol(instance.power.at(t));
            if s.is_present(t) {
                if r < -tol || r > s.max_rate + tol || !r.is_finite() {
                    violations.push(ScheduleViolation::RateBound {
                        session: i,
                        slot: t,
                        rate: f64_of(r),
                    });
                }
            } else if r.abs() > tol {
                violations.push(ScheduleViolation::OutsideWindow {
                    session: i,
                    slot: t,
                    rate: f64_of(r),
                });
            }
            delivered += r;
        }
        let tol = T::lit(T::DEMAND_TOL) * s.energy;
        if (delivered - s.energy).abs() > tol {
            violations.push(ScheduleViolation::Demand {
                session: i,
                delivered: f64_of(delivered),
                required: f64_of(s.energy),
            });
        }
        unmet.push((s.energy - delivered).max(T::zero()));
        if let Laxity::Finite(l) = laxity(s, instance.horizon, s.energy - delivered) {
            min_laxity = min_laxity.min(l);
        }
    }
    for t in 0..instance.horizon {
        let total = schedule.total(t);
        let limit = instance.power.at(t);
        if total > limit + T::rate_tol(limit) {
            violations.push(ScheduleViolation::PowerLimit {
                slot: t,
                total: f64_of(total),
                limit: f64_of(limit),
            });
        }
    }
    Ok(RunVerdict {
        feasible: violations.is_empty(),
        min_laxity,
        unmet_energy: unmet,
        oscillation: oscillation(schedule),
        switch_count: switch_count(instance, schedule),
        violations,
        completed_slots: instance.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::two_ev_unit;
    use crate::model::ChargingSession;

    fn sllf_schedule() -> Schedule<f64> {
        Schedule::from_rows(vec![vec![0.25, 0.5], vec![0.75, 0.5]])
    }

    #[test]
    fn two_ev_unit_is_feasible_with_witness() {
        let inst = two_ev_unit();
        let res = offline_feasible::<f64>(&inst);
        assert!(res.feasible);
        let verdict = validate_schedule(&inst, res.witness.as_ref().unwrap()).unwrap();
        assert!(verdict.feasible, "{:?}", verdict.violations);
    }

    #[test]
    fn overloaded_slot_is_infeasible() {
        let inst = Instance::new(
            vec![
                ChargingSession::new("a", 0, 1, 1.0, 1.0),
                ChargingSession::new("b", 0, 1, 1.0, 1.0),
            ],
            PowerProfile::Constant(1.0),
        );
        let res = offline_feasible::<f64>(&inst);
        assert!(!res.feasible);
        assert!(res.witness.is_none());
        assert!((res.max_flow - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_instance_is_feasible() {
        let inst = Instance::<f64>::new(vec![], PowerProfile::Constant(0.0));
        assert!(offline_feasible(&inst).feasible);
        assert_eq!(min_power_capacity(&inst), 0.0);
    }

    #[test]
    fn min_power_capacity_examples() {
        let two = Instance::new(
            vec![
                ChargingSession::new("a", 0, 2, 2.0_f64, 2.0),
                ChargingSession::new("b", 0, 2, 2.0, 2.0),
            ],
            PowerProfile::Constant(10.0),
        );
        assert!((min_power_capacity(&two) - 2.0).abs() < 1e-9);
        let one = Instance::new(
            vec![ChargingSession::new("a", 0, 2, 1.0_f64, 1.0)],
            PowerProfile::Constant(1.0),
        );
        assert!((min_power_capacity(&one) - 0.5).abs() < 1e-9);
        assert!((min_power_capacity(&two_ev_unit()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn validate_schedule_examples() {
        let inst = two_ev_unit();
        assert!(validate_schedule(&inst, &sllf_schedule()).unwrap().feasible);

        let zero = validate_schedule(&inst, &Schedule::zeros(2, 2)).unwrap();
        assert!(!zero.feasible);
        let demand: Vec<_> = zero.violations.iter().filter(|v| v.family() == 3).collect();
        assert_eq!(demand.len(), 2);
        assert!(zero.min_laxity < 0.0);

        let mut over = Schedule::zeros(2, 2);
        over.set(1, 0, 2.0);
        let v = validate_schedule(&inst, &over).unwrap();
        assert!(v.violations.iter().any(|x| x.family() == 1));
        assert!(v.violations.iter().any(|x| x.family() == 2));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            validate_schedule(&two_ev_unit(), &Schedule::zeros(3, 2)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn outside_window_rate_is_flagged() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 1, 2, 0.5, 1.0)],
            PowerProfile::Constant(1.0),
        );
        let sched = Schedule::from_rows(vec![vec![0.5, 0.0]]);
        let v = validate_schedule(&inst, &sched).unwrap();
        assert!(matches!(
            v.violations[0],
            ScheduleViolation::OutsideWindow { slot: 0, .. }
        ));
    }

    #[test]
    fn stepwise_profile_feasibility() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 0, 3, 2.0, 1.0)],
            PowerProfile::Stepwise(vec![0.0, 1.0, 1.0]),
        );
        assert!(offline_feasible(&inst).feasible);
        let tight = Instance::new(
            vec![ChargingSession::new("a", 0, 3, 2.0, 1.0)],
            PowerProfile::Stepwise(vec![1.0, 0.0, 0.5]),
        );
        assert!(!offline_feasible(&tight).feasible);
    }
}
