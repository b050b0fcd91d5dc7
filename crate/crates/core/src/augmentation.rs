//! Resource augmentation: scaled instances, minimum-augmentation search and
//! the closed-form sufficient augmentation levels for sLLF.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::num::Real;
use crate::schedulers::Algorithm;
use crate::simulator::is_online_feasible;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationMode {
    /// Scale the station power limit only.
    Power,
    /// Scale the power limit and every peak rate.
    PowerAndRate,
}

impl AugmentationMode {
    pub fn name(self) -> &'static str {
        match self {
            AugmentationMode::Power => "power",
            AugmentationMode::PowerAndRate => "power-rate",
        }
    }
}

/// `(1 + eps)` times the power profile, and the peak rates too in
/// `PowerAndRate` mode.
pub fn augment<T: Real>(
    instance: &Instance<T>,
    mode: AugmentationMode,
    eps: T,
) -> Result<Instance<T>> {
    if !(eps >= T::zero()) {
        return Err(Error::Contract(format!(
            "augmentation must be nonnegative, got {eps}"
        )));
    }
    let factor = T::one() + eps;
    let mut out = instance.clone();
    out.power = instance.power.scaled(factor);
    if mode == AugmentationMode::PowerAndRate {
        for s in &mut out.sessions {
            s.max_rate *= factor;
        }
    }
    Ok(out)
}

/// Absolute tolerance of the minimum-augmentation search.
pub const EPS_SEARCH_TOL: f64 = 1e-3;
/// Initial upper bracket of the search.
pub const EPS_INITIAL_BRACKET: f64 = 8.0;
/// The bracket doubles up to this value before the search gives up.
pub const EPS_LIMIT: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EpsSearch {
    /// Smallest augmentation found (upper end of the final bracket).
    pub eps: f64,
    /// Re-verified: the policy is feasible on every instance at `eps`.
    pub feasible_at_eps: bool,
    /// Re-verified: some instance fails at `eps - 2 * tol`. `None` when
    /// `eps < 2 * tol`, where there is nothing below to check.
    pub infeasible_below: Option<bool>,
    /// Number of corpus-wide feasibility evaluations.
    pub evaluations: usize,
}

impl EpsSearch {
    /// A feasible level below `eps` means feasibility was not monotone in eps.
    pub fn monotone_anomaly(&self) -> bool {
        self.infeasible_below == Some(false)
    }
}

fn all_feasible<T: Real>(
    instances: &[Instance<T>],
    algorithm: Algorithm,
    mode: AugmentationMode,
    eps: f64,
) -> Result<bool> {
    let eps_t = T::lit(eps);
    instances
        .par_iter()
        .try_fold(
            || true,
            |acc, inst| -> Result<bool> {
                if !acc {
                    return Ok(false);
                }
                is_online_feasible(&augment(inst, mode, eps_t)?, algorithm)
            },
        )
        .try_reduce(|| true, |a, b| Ok(a && b))
}

/// Smallest `eps` (to within [`EPS_SEARCH_TOL`]) at which `algorithm` is
/// feasible on the `mode`-augmented version of every instance.
///
/// Bisection assumes feasibility is monotone in `eps`; both ends of the
/// answer are re-simulated and reported rather than trusted.
pub fn min_feasible_eps<T: Real>(
    instances: &[Instance<T>],
    algorithm: Algorithm,
    mode: AugmentationMode,
) -> Result<EpsSearch> {
    let tol = EPS_SEARCH_TOL;
    let mut evaluations = 1;
    if all_feasible(instances, algorithm, mode, 0.0)? {
        return Ok(EpsSearch {
            eps: 0.0,
            feasible_at_eps: true,
            infeasible_below: None,
            evaluations,
        });
    }
    let mut lo = 0.0;
    let mut hi = EPS_INITIAL_BRACKET;
    loop {
        evaluations += 1;
        if all_feasible(instances, algorithm, mode, hi)? {
            break;
        }
        if hi >= EPS_LIMIT {
            return Err(Error::NoFiniteEps(EPS_LIMIT));
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if all_feasible(instances, algorithm, mode, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let feasible_at_eps = all_feasible(instances, algorithm, mode, hi)?;
    let below = hi - 2.0 * tol;
    let infeasible_below = if below >= 0.0 {
        Some(!all_feasible(instances, algorithm, mode, below)?)
    } else {
        None
    };
    evaluations += 1 + usize::from(infeasible_below.is_some());
    Ok(EpsSearch {
        eps: hi,
        feasible_at_eps,
        infeasible_below,
        evaluations,
    })
}

/// Published minimum augmentations on the original (unavailable) traces,
/// as `(algorithm, power, power + rate)`. Reports carry these as
/// annotations; synthetic corpora are not expected to reproduce them.
pub const REFERENCE_EPS: [(Algorithm, f64, f64); 6] = [
    (Algorithm::Rep, 4.61, 4.61),
    (Algorithm::Es, 3.65, 3.24),
    (Algorithm::Edf, 1.39, 0.54),
    (Algorithm::Llf, 0.07, 0.05),
    (Algorithm::Olp, 0.28, 0.28),
    (Algorithm::Sllf, 0.07, 0.05),
];

pub fn reference_eps(algorithm: Algorithm, mode: AugmentationMode) -> f64 {
    let &(_, power, power_rate) = REFERENCE_EPS
        .iter()
        .find(|(a, _, _)| *a == algorithm)
        .expect("every algorithm has a reference entry");
    match mode {
        AugmentationMode::Power => power,
        AugmentationMode::PowerAndRate => power_rate,
    }
}

/// Parameters of the bounded-demand, separated-arrival regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    /// Upper bound `X` on any single energy demand.
    pub max_energy: T,
    /// Arrivals are more than `N` slots apart.
    pub min_gap: T,
    pub p_min: T,
    pub p_max: T,
}

impl<T: Real> BoundInputs<T> {
    pub fn check(&self) -> Result<()> {
        let ok = self.max_energy > T::zero()
            && self.min_gap >= T::one()
            && self.p_min > T::zero()
            && self.p_min <= self.p_max
            && self.p_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "bound inputs need X > 0, N >= 1, 0 < Pmin <= Pmax; got X={}, N={}, Pmin={}, Pmax={}",
                self.max_energy, self.min_gap, self.p_min, self.p_max
            )))
        }
    }
}

/// Power augmentation sufficient for sLLF when demands are at most `X` and
/// arrivals are more than `N` apart:
/// `(Pmax/Pmin) * (log_phi(sqrt(5) X / (N Pmax) + 1/2) + 2) - 1`.
pub fn theorem1_bound<T: Real>(inputs: &BoundInputs<T>) -> Result<T> {
    inputs.check()?;
    let sqrt5 = T::lit(5.0).sqrt();
    let phi = (T::one() + sqrt5) / T::lit(2.0);
    let arg = sqrt5 * inputs.max_energy / (inputs.min_gap * inputs.p_max) + T::lit(0.5);
    Ok(inputs.p_max / inputs.p_min * (arg.ln() / phi.ln() + T::lit(2.0)) - T::one())
}

/// Power+rate augmentation sufficient for sLLF on `instance`, with no
/// arrival assumptions: the largest, over sessions, of the power swing
/// inside the session's window minus its best rate-to-power ratio there.
///
/// Windows are the charging slots `[a_i, d_i)`. The raw value may be
/// negative; callers report it clamped at zero.
pub fn theorem2_bound<T: Real>(instance: &Instance<T>) -> Result<T> {
    let mut best = T::neg_infinity();
    for s in &instance.sessions {
        let mut p_lo = T::infinity();
        let mut p_hi = T::zero();
        for t in s.arrival..s.departure {
            let p = instance.power.at(t);
            if !(p > T::zero()) {
                return Err(Error::Contract(format!(
                    "session `{}` has zero power in slot {t}",
                    s.id
                )));
            }
            p_lo = p_lo.min(p);
            p_hi = p_hi.max(p);
        }
        if p_lo.is_infinite() {
            continue;
        }
        best = best.max(p_hi / p_lo - s.max_rate / p_lo);
    }
    Ok(if best.is_finite() { best } else { T::zero() })
}
