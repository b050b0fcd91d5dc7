//! Slot-by-slot driver for online policies, plus run metrics.

use rayon::prelude::*;

use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::feasibility::{validate_schedule, ScheduleViolation};
use crate::model::Instance;
use crate::num::Real;
use crate::schedulers::{Algorithm, SlotView};

/// Rate matrix `sessions x slots` with cached per-slot totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    rates: Vec<Vec<T>>,
    totals: Vec<T>,
}

impl<T: Real> Schedule<T> {
    pub fn zeros(sessions: usize, horizon: usize) -> Self {
        Self {
            rates: vec![vec![T::zero(); horizon]; sessions],
            totals: vec![T::zero(); horizon],
        }
    }

    /// Builds from per-session rows; all rows must have the same length.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let horizon = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == horizon),
            "ragged schedule rows"
        );
        let totals = (0..horizon)
            .map(|t| rows.iter().map(|r| r[t]).sum())
            .collect();
        Self {
            rates: rows,
            totals,
        }
    }

    pub fn sessions(&self) -> usize {
        self.rates.len()
    }

    pub fn horizon(&self) -> usize {
        self.totals.len()
    }

    pub fn rate(&self, i: usize, t: usize) -> T {
        self.rates[i][t]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rates[i]
    }

    pub fn total(&self, t: usize) -> T {
        self.totals[t]
    }

    pub fn set(&mut self, i: usize, t: usize, rate: T) {
        let old = self.rates[i][t];
        self.rates[i][t] = rate;
        self.totals[t] = self.totals[t] - old + rate;
    }

    fn set_column(&mut self, t: usize, rates: &[(usize, T)]) {
        let mut total = T::zero();
        for &(i, r) in rates {
            self.rates[i][t] = r;
            total += r;
        }
        self.totals[t] = total;
    }
}

/// Outcome of a run (or of checking any schedule).
#[derive(Debug, Clone)]
pub struct RunVerdict<T> {
    pub feasible: bool,
    /// Smallest laxity of any arrived session at any instant up to the horizon.
    pub min_laxity: T,
    /// `max(0, e_i - delivered_i)` per session.
    pub unmet_energy: Vec<T>,
    /// Total variation `sum_i sum_t |r_i(t+1) - r_i(t)|`.
    pub oscillation: T,
    /// Number of on/off switches inside sojourn windows.
    pub switch_count: usize,
    pub violations: Vec<ScheduleViolation>,
    /// Slots actually simulated (less than the horizon after an early stop).
    pub completed_slots: usize,
}

impl<T: Real> RunVerdict<T> {
    pub fn total_unmet(&self) -> T {
        self.unmet_energy.iter().copied().sum()
    }
}

pub fn oscillation<T: Real>(schedule: &Schedule<T>) -> T {
    (0..schedule.sessions())
        .map(|i| {
            schedule
                .row(i)
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .sum::<T>()
        })
        .sum()
}

/// Transitions between charging and idle within each sojourn window.
pub fn switch_count<T: Real>(instance: &Instance<T>, schedule: &Schedule<T>) -> usize {
    instance
        .sessions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let eps = T::lit(T::RATE_TOL) * s.max_rate;
            let end = s.departure.min(schedule.horizon());
            let on: Vec<bool> = (s.arrival.min(end)..end)
                .map(|t| schedule.rate(i, t) > eps)
                .collect();
            on.windows(2).filter(|w| w[0] != w[1]).count()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// Stop once some session's laxity drops below its demand tolerance;
    /// laxity never recovers, so the run is already infeasible.
    pub stop_when_infeasible: bool,
}

/// Runs `algorithm` over every slot of `instance`.
pub fn simulate<T: Real>(
    instance: &Instance<T>,
    algorithm: Algorithm,
) -> Result<(Schedule<T>, RunVerdict<T>)> {
    simulate_with(instance, algorithm, SimOptions::default())
}

pub fn simulate_with<T: Real>(
    instance: &Instance<T>,
    algorithm: Algorithm,
    options: SimOptions,
) -> Result<(Schedule<T>, RunVerdict<T>)> {
    let violations = instance.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    let mut schedule = Schedule::zeros(instance.len(), instance.horizon);
    let mut state = SimState::initial(instance);
    let mut completed = instance.horizon;
    for t in 0..instance.horizon {
        debug_assert_eq!(state.t, t);
        let view = SlotView::capture(instance, &state);
        let decision = algorithm.decide(&view);
        decision.check(&view)?;
        state = state.step(&decision.rates, instance)?;
        schedule.set_column(t, &decision.rates);
        if options.stop_when_infeasible && doomed(instance, &state) {
            completed = t + 1;
            break;
        }
    }
    let mut verdict = validate_schedule(instance, &schedule)?;
    verdict.completed_slots = completed;
    Ok((schedule, verdict))
}

fn doomed<T: Real>(instance: &Instance<T>, state: &SimState<T>) -> bool {
    instance.sessions.iter().enumerate().any(|(i, s)| {
        state.t >= s.arrival
            && state
                .laxity(instance, i)
                .finite()
                .is_some_and(|l| l < -T::lit(T::DEMAND_TOL) * s.energy / s.max_rate)
    })
}

/// Whether `algorithm` meets every demand on `instance` (early-stopping run).
pub fn is_online_feasible<T: Real>(instance: &Instance<T>, algorithm: Algorithm) -> Result<bool> {
    let (_, verdict) = simulate_with(
        instance,
        algorithm,
        SimOptions {
            stop_when_infeasible: true,
        },
    )?;
    Ok(verdict.feasible)
}

/// Fraction of `instances` on which `algorithm` is feasible.
///
/// An empty list has success rate 1 (logged as a warning).
pub fn success_rate<T: Real>(instances: &[Instance<T>], algorithm: Algorithm) -> Result<f64> {
    if instances.is_empty() {
        log::warn!("success rate of {algorithm} over an empty corpus is defined as 1");
        return Ok(1.0);
    }
    let outcomes: Vec<bool> = instances
        .par_iter()
        .map(|inst| is_online_feasible(inst, algorithm))
        .collect::<Result<_>>()?;
    let ok = outcomes.iter().filter(|&&f| f).count();
    Ok(ok as f64 / instances.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceMetrics {
    /// Longest over shortest sojourn.
    pub max_sojourn_ratio: f64,
    /// Smallest `l_i(a_i) / (d_i - a_i)`.
    pub min_normalized_laxity: f64,
}

pub fn instance_metrics<T: Real>(instance: &Instance<T>) -> InstanceMetrics {
    let sojourns = instance.sessions.iter().map(|s| s.sojourn());
    let longest = sojourns.clone().max().unwrap_or(0);
    let shortest = sojourns.min().unwrap_or(0);
    let ratio = if shortest == 0 {
        f64::NAN
    } else {
        longest as f64 / shortest as f64
    };
    let norm = instance
        .sessions
        .iter()
        .map(|s| s.initial_laxity().to_f64().unwrap_or(f64::NAN) / s.sojourn() as f64)
        .fold(f64::INFINITY, f64::min);
    InstanceMetrics {
        max_sojourn_ratio: ratio,
        min_normalized_laxity: norm,
    }
}

/// Assigns each value to one of `k` equal-count bins in increasing order.
///
/// Equal values always share a bin, so bins can be uneven and some may be
/// empty. NaN values sort last.
pub fn quantile_bins(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let k = k.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut bins = vec![0; n];
    let mut group_start = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[i].total_cmp(&values[order[rank - 1]]).is_ne() {
            group_start = rank;
        }
        bins[i] = group_start * k / n.max(1);
    }
    bins
}
