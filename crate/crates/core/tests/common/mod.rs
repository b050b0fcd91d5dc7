//! Independent oracles and random generators shared by integration tests.
#![allow(dead_code)]

use evcs_core::dynamics::laxity;
use evcs_core::schedulers::SlotView;
use evcs_core::*;
use rand::Rng;

/// The two-EV unit instance used throughout the examples.
pub fn two_ev_unit() -> Instance64 {
    Instance::new(
        vec![
            ChargingSession::new("EV1", 0, 2, 0.75, 1.0),
            ChargingSession::new("EV2", 0, 2, 1.25, 1.0),
        ],
        PowerProfile::Constant(1.0),
    )
}

/// Threshold allocation solved exactly: the total is piecewise linear in
/// the level with kinks at `l - 1` and `l - 1 + cap / rmax`, so sort the
/// kinks and interpolate on the segment that crosses `power`.
pub fn exact_threshold(laxities: &[f64], rmax: &[f64], caps: &[f64], power: f64) -> Option<f64> {
    let total = |level: f64| -> f64 {
        (0..laxities.len())
            .map(|i| (rmax[i] * (level - laxities[i] + 1.0)).clamp(0.0, caps[i]))
            .sum()
    };
    if caps.iter().sum::<f64>() <= power {
        return None;
    }
    let mut kinks: Vec<f64> = (0..laxities.len())
        .flat_map(|i| [laxities[i] - 1.0, laxities[i] - 1.0 + caps[i] / rmax[i]])
        .collect();
    kinks.sort_by(f64::total_cmp);
    let mut prev = kinks[0];
    if total(prev) >= power {
        return Some(prev);
    }
    for &k in &kinks[1..] {
        let (g0, g1) = (total(prev), total(k));
        if g1 >= power {
            if g1 == g0 {
                return Some(prev);
            }
            return Some(prev + (power - g0) * (k - prev) / (g1 - g0));
        }
        prev = k;
    }
    unreachable!("caps exceed power so some kink reaches it")
}

/// A random mid-run state: up to `max_evs` sessions present at slot `t`
/// with random remaining demands (some zero, some near their limit).
pub fn random_state<R: Rng>(rng: &mut R, max_evs: usize) -> (Instance64, State64) {
    let t = rng.gen_range(0..5);
    let n = rng.gen_range(1..=max_evs);
    let mut sessions = Vec::with_capacity(n);
    let mut remaining = Vec::with_capacity(n);
    for k in 0..n {
        let a = rng.gen_range(0..=t);
        let d = t + rng.gen_range(1..=10);
        let r = rng.gen_range(0.5..3.0);
        let span = (d - t) as f64;
        let e = match rng.gen_range(0..10) {
            0 => 0.0,
            1 => r * span,
            _ => rng.gen_range(0.0..1.2 * r * span),
        };
        sessions.push(ChargingSession::new(
            format!("ev{k}"),
            a,
            d,
            e + rng.gen_range(0.0..2.0),
            r,
        ));
        remaining.push(e);
    }
    let p = match rng.gen_range(0..10) {
        0 => 0.0,
        _ => rng.gen_range(0.0..10.0),
    };
    let inst = Instance::new(sessions, PowerProfile::Constant(p));
    (inst, SimState { t, remaining })
}

/// Next-slot laxity of each EV in the view under `rates` (aligned with `view.evs`).
pub fn next_laxities(instance: &Instance64, view: &SlotView<'_, f64>, rates: &[f64]) -> Vec<f64> {
    view.evs
        .iter()
        .zip(rates)
        .map(|(ev, &r)| {
            laxity(&instance.sessions[ev.index], view.t + 1, ev.remaining - r)
                .finite()
                .expect("present session")
        })
        .collect()
}

/// Random feasible rate vectors for the view: uniform points in the box
/// scaled into the power limit, and perturbations of `around`.
pub fn alternatives<R: Rng>(
    rng: &mut R,
    view: &SlotView<'_, f64>,
    around: &[f64],
    count: usize,
) -> Vec<Vec<f64>> {
    let caps: Vec<f64> = view.evs.iter().map(|e| e.cap()).collect();
    let power = view.power.max(0.0);
    (0..count)
        .map(|k| {
            let mut r: Vec<f64> = if k % 2 == 0 {
                caps.iter().map(|&c| c * rng.gen::<f64>()).collect()
            } else {
                let scale = 10f64.powi(-rng.gen_range(1..6));
                around
                    .iter()
                    .zip(&caps)
                    .map(|(&x, &c)| (x + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, c))
                    .collect()
            };
            let total: f64 = r.iter().sum();
            if total > power {
                let f = power / total;
                r.iter_mut().for_each(|x| *x *= f);
            }
            r
        })
        .collect()
}

/// Outcome of the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridVerdict {
    /// Demands rounded up to whole grid units fit: sufficient for feasibility.
    pub strict: bool,
    /// Demands less one unit per window slot fit: necessary for feasibility.
    pub relaxed: bool,
}

/// Exhaustive search over rates that are whole multiples of `rmax / units`.
///
/// Only for tiny instances (at most three sessions and three slots).
pub fn grid_search(instance: &Instance64, units: u32) -> GridVerdict {
    GridVerdict {
        strict: grid_fits(instance, units, false),
        relaxed: grid_fits(instance, units, true),
    }
}

fn grid_fits(instance: &Instance64, units: u32, relaxed: bool) -> bool {
    let horizon = instance.horizon;
    let power: Vec<f64> = (0..horizon).map(|t| instance.power.at(t)).collect();
    let mut evs: Vec<(usize, usize, f64, i64)> = instance
        .sessions
        .iter()
        .map(|s| {
            let step = s.max_rate / units as f64;
            let need = (s.energy / step).ceil() as i64;
            let w = s.departure.min(horizon) as i64 - s.arrival as i64;
            let need = if relaxed { (need - w).max(0) } else { need };
            (s.arrival, s.departure.min(horizon), step, need)
        })
        .collect();
    // the widest window goes last, where it is checked in closed form
    evs.sort_by_key(|e| e.1 - e.0);
    let mut load = vec![0.0; horizon];
    place(&evs, 0, &mut load, &power, units as i64)
}

fn room(load: f64, power: f64, step: f64, units: i64) -> i64 {
    let free = power - load;
    if free < -1e-12 {
        return -1;
    }
    (((free + 1e-12) / step).floor() as i64).clamp(0, units)
}

fn place(
    evs: &[(usize, usize, f64, i64)],
    k: usize,
    load: &mut [f64],
    power: &[f64],
    units: i64,
) -> bool {
    let Some(&(a, d, step, need)) = evs.get(k) else {
        return true;
    };
    let slots: Vec<usize> = (a..d).collect();
    let rooms: Vec<i64> = slots
        .iter()
        .map(|&t| room(load[t], power[t], step, units))
        .collect();
    if rooms.iter().any(|&r| r < 0) {
        return false;
    }
    if k + 1 == evs.len() {
        return rooms.iter().sum::<i64>() >= need;
    }
    let mut alloc = vec![0i64; slots.len()];
    distribute(need, 0, &rooms, &mut alloc, &mut |alloc| {
        for (j, &t) in slots.iter().enumerate() {
            load[t] += alloc[j] as f64 * step;
        }
        let ok = place(evs, k + 1, load, power, units);
        for (j, &t) in slots.iter().enumerate() {
            load[t] -= alloc[j] as f64 * step;
        }
        ok
    })
}

/// Calls `f` on every way to split `left` units over the remaining slots
/// within `rooms`; stops at the first `true`.
fn distribute(
    left: i64,
    j: usize,
    rooms: &[i64],
    alloc: &mut Vec<i64>,
    f: &mut dyn FnMut(&[i64]) -> bool,
) -> bool {
    if j + 1 == rooms.len() {
        if left > rooms[j] {
            return false;
        }
        alloc[j] = left;
        return f(alloc);
    }
    let rest: i64 = rooms[j + 1..].iter().sum();
    let lo = (left - rest).max(0);
    let hi = left.min(rooms[j]);
    for u in lo..=hi {
        alloc[j] = u;
        if distribute(left - u, j + 1, rooms, alloc, f) {
            return true;
        }
    }
    false
}
