//! Laxity, per-slot state evolution and interval energy accounting.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{ChargingSession, Instance};
use crate::num::Real;
use crate::simulator::Schedule;

/// Remaining slack of a session: finite once it has arrived, `Infinite` before.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Laxity<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Laxity<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Laxity::Finite(v) => Some(v),
            Laxity::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Laxity::Infinite)
    }

    /// Finite value or `+inf` as a float, for reporting.
    pub fn to_f64(self) -> f64 {
        match self {
            Laxity::Finite(v) => v.to_f64().unwrap_or(f64::NAN),
            Laxity::Infinite => f64::INFINITY,
        }
    }
}

impl<T: Real> PartialOrd for Laxity<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Laxity::Finite(a), Laxity::Finite(b)) => a.partial_cmp(b),
            (Laxity::Finite(_), Laxity::Infinite) => Some(Ordering::Less),
            (Laxity::Infinite, Laxity::Finite(_)) => Some(Ordering::Greater),
            (Laxity::Infinite, Laxity::Infinite) => Some(Ordering::Equal),
        }
    }
}

/// `[d - t]^+ - e(t) / rmax` for `t >= a`, infinite before arrival.
pub fn laxity<T: Real>(session: &ChargingSession<T>, t: usize, remaining: T) -> Laxity<T> {
    if t < session.arrival {
        return Laxity::Infinite;
    }
    let time_left = T::from_usize_lossy(session.departure.saturating_sub(t));
    Laxity::Finite(time_left - remaining / session.max_rate)
}

/// Simulation state at the start of slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub t: usize,
    /// Remaining demand `e_i(t)`, indexed like `Instance::sessions`.
    pub remaining: Vec<T>,
}

impl<T: Real> SimState<T> {
    pub fn initial(instance: &Instance<T>) -> Self {
        Self {
            t: 0,
            remaining: instance.sessions.iter().map(|s| s.energy).collect(),
        }
    }

    pub fn laxity(&self, instance: &Instance<T>, i: usize) -> Laxity<T> {
        laxity(&instance.sessions[i], self.t, self.remaining[i])
    }

    /// Laxities of every session (infinite for those not yet arrived).
    pub fn laxities(&self, instance: &Instance<T>) -> Vec<Laxity<T>> {
        (0..instance.len())
            .map(|i| self.laxity(instance, i))
            .collect()
    }

    /// Advances one slot under `rates` (`(session index, rate)` pairs).
    ///
    /// Rates must respect `0 <= r <= min(rmax, e(t))` for present sessions,
    /// be zero otherwise, and sum to at most `P(t)`, each up to
    /// `RATE_TOL * max(1, P(t))`.
    pub fn step(&self, rates: &[(usize, T)], instance: &Instance<T>) -> Result<SimState<T>> {
        let t = self.t;
        let p = instance.power.at(t);
        let tol = T::rate_tol(p);
        let mut next = self.remaining.clone();
        let mut total = T::zero();
        for &(i, r) in rates {
            let s = instance.sessions.get(i).ok_or(Error::UnknownSession(i))?;
            if !r.is_finite() || r < -tol {
                return Err(Error::Contract(format!(
                    "slot {t}: session `{}` rate {r} is negative",
                    s.id
                )));
            }
            if !s.is_present(t) {
                if r > tol {
                    return Err(Error::Contract(format!(
                        "slot {t}: session `{}` charged outside its window",
                        s.id
                    )));
                }
                continue;
            }
            let cap = s.max_rate.min(self.remaining[i]);
            if r > cap + tol {
                return Err(Error::Contract(format!(
                    "slot {t}: session `{}` rate {r} exceeds min(rmax, e(t)) = {cap}",
                    s.id
                )));
            }
            let r = r.max(T::zero());
            total += r;
            next[i] = (next[i] - r).max(T::zero());
        }
        if total > p + tol {
            return Err(Error::Contract(format!(
                "slot {t}: total rate {total} exceeds power limit {p}"
            )));
        }
        Ok(SimState {
            t: t + 1,
            remaining: next,
        })
    }
}

/// Energy delivered to `ids` over the inclusive slot range `[t1, t2]`.
pub fn energy_delivered<T: Real>(
    schedule: &Schedule<T>,
    ids: &[usize],
    t1: usize,
    t2: usize,
) -> Result<T> {
    let horizon = schedule.horizon();
    if t1 > t2 || t2 > horizon {
        return Err(Error::SlotOutOfRange {
            slot: t2.max(t1),
            horizon,
        });
    }
    let mut sum = T::zero();
    for &i in ids {
        if i >= schedule.sessions() {
            return Err(Error::UnknownSession(i));
        }
        // slot `horizon` is the terminal instant and carries no rate
        for t in t1..=t2.min(horizon) {
            if t < horizon {
                sum += schedule.rate(i, t);
            }
        }
    }
    Ok(sum)
}

/// Laxity of every session at every instant `0..=horizon` under `schedule`,
/// recomputed from the closed form (never accumulated).
pub fn laxity_trajectory<T: Real>(
    instance: &Instance<T>,
    schedule: &Schedule<T>,
) -> Vec<Vec<Laxity<T>>> {
    instance
        .sessions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut remaining = s.energy;
            let mut row = Vec::with_capacity(instance.horizon + 1);
            for t in 0..=instance.horizon {
                row.push(laxity(s, t, remaining));
                if t < schedule.horizon() {
                    remaining -= schedule.rate(i, t);
                }
            }
            row
        })
        .collect()
}
