//! Online rate-allocation policies.
//!
//! Every policy sees a [`SlotView`]: the current slot, its power limit and
//! the EVs that are plugged in with unmet demand. Sessions that have not
//! arrived are not part of the view, so a policy cannot depend on them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{Laxity, SimState};
use crate::error::Error;
use crate::feasibility::{offline_feasible, TransportNetwork};
use crate::model::{ChargingSession, Instance, PowerProfile};
use crate::num::Real;

/// Hard cap on threshold bisection steps.
pub const SLLF_MAX_BISECTION: u32 = 80;

/// An EV that is present and still needs energy.
#[derive(Debug, Clone)]
pub struct ActiveEv<'a, T> {
    /// Index into `Instance::sessions`.
    pub index: usize,
    pub id: &'a str,
    pub arrival: usize,
    pub departure: usize,
    pub remaining: T,
    pub max_rate: T,
    pub laxity: T,
}

impl<T: Real> ActiveEv<'_, T> {
    /// Most this EV can take in one slot: `min(rmax, e(t))`.
    pub fn cap(&self) -> T {
        self.max_rate.min(self.remaining)
    }

    /// Laxity at the next slot if charged at `rate` now.
    pub fn next_laxity(&self, t: usize, rate: T) -> T {
        let left = T::from_usize_lossy(self.departure.saturating_sub(t + 1));
        left - (self.remaining - rate) / self.max_rate
    }
}

/// Everything an online policy may look at in slot `t`.
#[derive(Debug, Clone)]
pub struct SlotView<'a, T> {
    pub t: usize,
    /// `P(t)`.
    pub power: T,
    /// Station limits for the current and later slots.
    pub profile: &'a PowerProfile<T>,
    pub horizon: usize,
    pub evs: Vec<ActiveEv<'a, T>>,
}

impl<'a, T: Real> SlotView<'a, T> {
    pub fn capture(instance: &'a Instance<T>, state: &SimState<T>) -> Self {
        let t = state.t;
        let evs = instance
            .sessions
            .iter()
            .enumerate()
            .filter(|(i, s)| s.is_present(t) && state.remaining[*i] > T::zero())
            .map(|(i, s)| ActiveEv {
                index: i,
                id: &s.id,
                arrival: s.arrival,
                departure: s.departure,
                remaining: state.remaining[i],
                max_rate: s.max_rate,
                laxity: match state.laxity(instance, i) {
                    Laxity::Finite(l) => l,
                    Laxity::Infinite => unreachable!("present session has finite laxity"),
                },
            })
            .collect();
        Self {
            t,
            power: instance.power.at(t),
            profile: &instance.power,
            horizon: instance.horizon,
            evs,
        }
    }

    /// Total that can be delivered this slot: `min(P(t), sum min(rmax, e(t)))`.
    pub fn deliverable(&self) -> T {
        let caps: T = self.evs.iter().map(|e| e.cap()).sum();
        caps.min(self.power.max(T::zero()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub bisection_iterations: u32,
    pub fill_rounds: u32,
    pub flow_augmentations: usize,
    /// OLP found its residual problem infeasible and used sLLF for this slot.
    pub olp_fallback: bool,
}

/// Rates chosen for one slot.
#[derive(Debug, Clone)]
pub struct RateDecision<T> {
    /// `(session index, rate)` for every EV in the view, in view order.
    pub rates: Vec<(usize, T)>,
    /// sLLF threshold; `Some(Infinite)` when every EV gets its cap.
    pub threshold: Option<Laxity<T>>,
    pub diagnostics: Diagnostics,
}

impl<T: Real> RateDecision<T> {
    fn plain(rates: Vec<(usize, T)>) -> Self {
        Self {
            rates,
            threshold: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn total(&self) -> T {
        self.rates.iter().map(|&(_, r)| r).sum()
    }

    pub fn rate_of(&self, index: usize) -> T {
        self.rates
            .iter()
            .find(|&&(i, _)| i == index)
            .map_or(T::zero(), |&(_, r)| r)
    }

    /// Checks the decision against the view: rates only for listed EVs,
    /// each within `[0, min(rmax, e(t))]`, total within `P(t)`.
    pub fn check(&self, view: &SlotView<'_, T>) -> Result<(), Error> {
        let tol = T::rate_tol(view.power);
        for &(i, r) in &self.rates {
            let ev = view.evs.iter().find(|e| e.index == i).ok_or_else(|| {
                Error::Contract(format!("slot {}: rate for inactive session {i}", view.t))
            })?;
            if !r.is_finite() || r < -tol || r > ev.cap() + tol {
                return Err(Error::Contract(format!(
                    "slot {}: session `{}` rate {r} outside [0, {}]",
                    view.t,
                    ev.id,
                    ev.cap()
                )));
            }
        }
        let total = self.total();
        if total > view.power + tol {
            return Err(Error::Contract(format!(
                "slot {}: total {total} exceeds power {}",
                view.t, view.power
            )));
        }
        Ok(())
    }
}

/// Rate of one EV at threshold `level`: `clamp(rmax * (level - l + 1), 0, cap)`.
pub fn threshold_rate<T: Real>(ev: &ActiveEv<'_, T>, level: T) -> T {
    (ev.max_rate * (level - ev.laxity + T::one())).clamp_to(T::zero(), ev.cap())
}

fn total_at<T: Real>(evs: &[ActiveEv<'_, T>], level: T) -> T {
    evs.iter().map(|e| threshold_rate(e, level)).sum()
}

/// Smoothed least-laxity-first.
///
/// Every EV that is neither idle nor capped ends the slot with the same
/// laxity `L`; `L` is found by bisection on the (continuous, nondecreasing)
/// total rate so that the total equals `min(P(t), sum caps)`.
pub fn sllf<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    let evs = &view.evs;
    let power = view.power.max(T::zero());
    let caps: T = evs.iter().map(|e| e.cap()).sum();
    if caps <= power {
        return RateDecision {
            rates: evs.iter().map(|e| (e.index, e.cap())).collect(),
            threshold: Some(Laxity::Infinite),
            diagnostics: Diagnostics::default(),
        };
    }
    let (lmin, lmax) = evs
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), e| {
            (lo.min(e.laxity), hi.max(e.laxity))
        });
    let mut lo = lmin - T::one();
    let mut hi = lmax + T::one();
    let half_delta = T::rate_tol(power) / T::lit(2.0);
    let two = T::lit(2.0);
    let mut iterations = 0;
    let mut at_lo = total_at(evs, lo);
    while iterations < SLLF_MAX_BISECTION && power - at_lo > half_delta {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let at_mid = total_at(evs, mid);
        if at_mid <= power {
            lo = mid;
            at_lo = at_mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let level = polish_threshold(evs, power, lo, hi, at_lo);
    RateDecision {
        rates: evs
            .iter()
            .map(|e| (e.index, threshold_rate(e, level)))
            .collect(),
        threshold: Some(Laxity::Finite(level)),
        diagnostics: Diagnostics {
            bisection_iterations: iterations,
            ..Diagnostics::default()
        },
    }
}

/// One linear solve on the segment of the piecewise-linear total that the
/// final bracket sits on; falls back to `lo` if the solve leaves the bracket.
fn polish_threshold<T: Real>(evs: &[ActiveEv<'_, T>], power: T, lo: T, hi: T, at_lo: T) -> T {
    let mid = (lo + hi) / T::lit(2.0);
    let mut fixed = T::zero();
    let mut slope = T::zero();
    let mut offset = T::zero();
    for e in evs {
        let raw = e.max_rate * (mid - e.laxity + T::one());
        if raw >= e.cap() {
            fixed += e.cap();
        } else if raw > T::zero() {
            slope += e.max_rate;
            offset += e.max_rate * (T::one() - e.laxity);
        }
    }
    if slope <= T::zero() {
        return lo;
    }
    let level = (power - fixed - offset) / slope;
    if !(level >= lo && level <= hi) {
        return lo;
    }
    let at = total_at(evs, level);
    if at <= power + T::rate_tol(power) / T::lit(4.0) && (power - at).abs() <= (power - at_lo).abs()
    {
        level
    } else {
        lo
    }
}

/// Serve EVs in `order` (indices into `view.evs`), each up to its cap, until power runs out.
fn greedy_fill<T: Real>(view: &SlotView<'_, T>, order: &[usize]) -> Vec<(usize, T)> {
    let mut left = view.power.max(T::zero());
    let mut rates: Vec<(usize, T)> = view.evs.iter().map(|e| (e.index, T::zero())).collect();
    for &k in order {
        let give = view.evs[k].cap().min(left);
        rates[k].1 = give;
        left = (left - give).max(T::zero());
    }
    rates
}

fn sorted_by<T: Real, F>(view: &SlotView<'_, T>, mut key: F) -> Vec<usize>
where
    F: FnMut(&ActiveEv<'_, T>, &ActiveEv<'_, T>) -> Ordering,
{
    let mut order: Vec<usize> = (0..view.evs.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&view.evs[a], &view.evs[b]);
        key(x, y)
            .then(x.arrival.cmp(&y.arrival))
            .then_with(|| x.id.cmp(y.id))
    });
    order
}

/// Least-laxity-first greedy fill; ties by arrival, then id.
pub fn llf<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    let order = sorted_by(view, |x, y| {
        x.laxity.partial_cmp(&y.laxity).unwrap_or(Ordering::Equal)
    });
    RateDecision::plain(greedy_fill(view, &order))
}

/// Earliest-deadline-first greedy fill; ties by arrival, then id.
pub fn edf<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    let order = sorted_by(view, |x, y| x.departure.cmp(&y.departure));
    RateDecision::plain(greedy_fill(view, &order))
}

/// Repeated weighted water-filling: split the residual power by `weights`
/// among EVs below their cap until the power or the EVs are exhausted.
fn weighted_fill<T: Real>(view: &SlotView<'_, T>, weights: &[T]) -> (Vec<(usize, T)>, u32) {
    let n = view.evs.len();
    let power = view.power.max(T::zero());
    let stop = T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * power.max(T::one());
    let mut alloc = vec![T::zero(); n];
    let mut open: Vec<usize> = (0..n).filter(|&k| view.evs[k].cap() > T::zero()).collect();
    let mut residual = power;
    let mut rounds = 0u32;
    while residual >= stop && !open.is_empty() {
        let weight: T = open.iter().map(|&k| weights[k]).sum();
        if weight <= T::zero() {
            break;
        }
        rounds += 1;
        let mut still_open = Vec::with_capacity(open.len());
        for &k in &open {
            let room = view.evs[k].cap() - alloc[k];
            let share = residual * weights[k] / weight;
            if share >= room {
                alloc[k] = view.evs[k].cap();
            } else {
                alloc[k] += share;
                still_open.push(k);
            }
        }
        open = still_open;
        let used: T = alloc.iter().copied().sum();
        residual = (power - used).max(T::zero());
    }
    assert!(
        rounds as usize <= n,
        "water-filling took {rounds} rounds for {n} EVs"
    );
    (
        view.evs
            .iter()
            .zip(alloc)
            .map(|(e, r)| (e.index, r))
            .collect(),
        rounds,
    )
}

/// Equal share, redistributed until exhaustion.
pub fn es<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    let weights = vec![T::one(); view.evs.len()];
    let (rates, rounds) = weighted_fill(view, &weights);
    let mut d = RateDecision::plain(rates);
    d.diagnostics.fill_rounds = rounds;
    d
}

/// Shares proportional to remaining demand, redistributed until exhaustion.
pub fn rep<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    let weights: Vec<T> = view.evs.iter().map(|e| e.remaining).collect();
    let (rates, rounds) = weighted_fill(view, &weights);
    let mut d = RateDecision::plain(rates);
    d.diagnostics.fill_rounds = rounds;
    d
}

/// Online LP: front-load the present EVs' remaining demand as early as the
/// future power limits allow, assuming nobody else arrives, and apply the
/// first slot of that plan. Solved as a min-cost flow with cost `tau` per
/// unit delivered in slot `tau`.
///
/// If the residual problem is infeasible the slot is decided by sLLF and
/// `diagnostics.olp_fallback` is set.
pub fn olp<T: Real>(view: &SlotView<'_, T>) -> RateDecision<T> {
    if view.evs.is_empty() {
        return RateDecision::plain(Vec::new());
    }
    let residual = Instance {
        sessions: view
            .evs
            .iter()
            .map(|e| ChargingSession {
                id: e.id.to_string(),
                arrival: view.t,
                departure: e.departure,
                energy: e.remaining,
                max_rate: e.max_rate,
            })
            .collect(),
        power: view.profile.clone(),
        horizon: view.horizon,
    };
    if !offline_feasible(&residual).feasible {
        let mut d = sllf(view);
        d.diagnostics.olp_fallback = true;
        return d;
    }
    let mut net = TransportNetwork::build(&residual, view.t, None, true);
    let demand: T = view.evs.iter().map(|e| e.remaining).sum();
    let (_, _, stats) = net.graph.min_cost_flow(net.source, net.sink, demand);
    let mut rates: Vec<(usize, T)> = view.evs.iter().map(|e| (e.index, T::zero())).collect();
    for &(k, slot, arc) in &net.rate_arcs {
        if slot == view.t {
            rates[k].1 = net.graph.flow(arc).min(view.evs[k].cap());
        }
    }
    let mut d = RateDecision::plain(rates);
    d.diagnostics.flow_augmentations = stats.augmentations;
    d
}

/// Policy names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Sllf,
    Llf,
    Edf,
    Es,
    Rep,
    Olp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sllf,
        Algorithm::Llf,
        Algorithm::Edf,
        Algorithm::Es,
        Algorithm::Rep,
        Algorithm::Olp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sllf => "sllf",
            Algorithm::Llf => "llf",
            Algorithm::Edf => "edf",
            Algorithm::Es => "es",
            Algorithm::Rep => "rep",
            Algorithm::Olp => "olp",
        }
    }

    pub fn decide<T: Real>(self, view: &SlotView<'_, T>) -> RateDecision<T> {
        match self {
            Algorithm::Sllf => sllf(view),
            Algorithm::Llf => llf(view),
            Algorithm::Edf => edf(view),
            Algorithm::Es => es(view),
            Algorithm::Rep => rep(view),
            Algorithm::Olp => olp(view),
        }
    }

    /// Decision for slot `state.t` of `instance`.
    pub fn rates<T: Real>(self, state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
        self.decide(&SlotView::capture(instance, state))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

pub fn sllf_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Sllf.rates(state, instance)
}

pub fn llf_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Llf.rates(state, instance)
}

pub fn edf_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Edf.rates(state, instance)
}

pub fn es_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Es.rates(state, instance)
}

pub fn rep_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Rep.rates(state, instance)
}

pub fn olp_rates<T: Real>(state: &SimState<T>, instance: &Instance<T>) -> RateDecision<T> {
    Algorithm::Olp.rates(state, instance)
}
