//! Charging-instance data model.
//!
//! Time is slotted with unit slot length, so a rate held for one slot is
//! also the energy delivered in that slot.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::num::Real;

/// One EV's stay at the station.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingSession<T> {
    pub id: String,
    /// First slot in which the EV can charge.
    pub arrival: usize,
    /// First slot in which the EV is gone; charging happens in `[arrival, departure)`.
    pub departure: usize,
    /// Energy demand.
    pub energy: T,
    /// Peak charging rate.
    pub max_rate: T,
}

impl<T: Real> ChargingSession<T> {
    pub fn new(
        id: impl Into<String>,
        arrival: usize,
        departure: usize,
        energy: T,
        max_rate: T,
    ) -> Self {
        Self {
            id: id.into(),
            arrival,
            departure,
            energy,
            max_rate,
        }
    }

    pub fn sojourn(&self) -> usize {
        self.departure.saturating_sub(self.arrival)
    }

    /// Whether the EV is plugged in during slot `t`.
    pub fn is_present(&self, t: usize) -> bool {
        self.arrival <= t && t < self.departure
    }

    /// Laxity on arrival: `(d - a) - e / rmax`.
    pub fn initial_laxity(&self) -> T {
        T::from_usize_lossy(self.sojourn()) - self.energy / self.max_rate
    }
}

/// Station power limit per slot.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerProfile<T> {
    Constant(T),
    /// One value per slot; slots past the end have zero power.
    Stepwise(Vec<T>),
}

impl<T: Real> PowerProfile<T> {
    pub fn at(&self, t: usize) -> T {
        match self {
            PowerProfile::Constant(p) => *p,
            PowerProfile::Stepwise(v) => v.get(t).copied().unwrap_or_else(T::zero),
        }
    }

    /// Smallest limit over slots `0..horizon`.
    pub fn min_over(&self, horizon: usize) -> T {
        match self {
            PowerProfile::Constant(p) => *p,
            PowerProfile::Stepwise(_) => (0..horizon.max(1))
                .map(|t| self.at(t))
                .fold(T::infinity(), T::min),
        }
    }

    /// Largest limit over slots `0..horizon`.
    pub fn max_over(&self, horizon: usize) -> T {
        match self {
            PowerProfile::Constant(p) => *p,
            PowerProfile::Stepwise(_) => (0..horizon.max(1))
                .map(|t| self.at(t))
                .fold(T::neg_infinity(), T::max),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        match self {
            PowerProfile::Constant(p) => PowerProfile::Constant(*p * factor),
            PowerProfile::Stepwise(v) => {
                PowerProfile::Stepwise(v.iter().map(|&p| p * factor).collect())
            }
        }
    }
}

/// A full charging instance: sessions, power profile and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    pub sessions: Vec<ChargingSession<T>>,
    pub power: PowerProfile<T>,
    /// Number of slots; slot indices run over `0..horizon`, with `horizon`
    /// itself the terminal instant at which every EV has left.
    pub horizon: usize,
}

impl<T: Real> Instance<T> {
    /// Builds an instance whose horizon is the latest departure.
    pub fn new(sessions: Vec<ChargingSession<T>>, power: PowerProfile<T>) -> Self {
        let horizon = sessions.iter().map(|s| s.departure).max().unwrap_or(0);
        Self {
            sessions,
            power,
            horizon,
        }
    }

    /// Extends the horizon; never shrinks it below the latest departure.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = self.horizon.max(horizon);
        self
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sessions.iter().position(|s| s.id == id)
    }

    pub fn total_energy(&self) -> T {
        self.sessions.iter().map(|s| s.energy).sum()
    }

    pub fn total_max_rate(&self) -> T {
        self.sessions.iter().map(|s| s.max_rate).sum()
    }

    pub fn latest_departure(&self) -> usize {
        self.sessions.iter().map(|s| s.departure).max().unwrap_or(0)
    }

    /// Indices of sessions present in slot `t` (`a <= t < d`).
    pub fn active_set(&self, t: usize) -> Result<Vec<usize>> {
        if t > self.horizon {
            return Err(Error::SlotOutOfRange {
                slot: t,
                horizon: self.horizon,
            });
        }
        Ok(self
            .sessions
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_present(t))
            .map(|(i, _)| i)
            .collect())
    }

    /// Checks every structural invariant; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for (i, s) in self.sessions.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                out.push(Violation::DuplicateId { id: s.id.clone() });
            }
            if !s.energy.is_finite() || !s.max_rate.is_finite() {
                out.push(Violation::NonFinite { session: i });
                continue;
            }
            if s.arrival >= s.departure {
                out.push(Violation::EmptySojourn { session: i });
            }
            if s.energy <= T::zero() {
                out.push(Violation::NonPositiveEnergy { session: i });
            }
            if s.max_rate <= T::zero() {
                out.push(Violation::NonPositiveRate { session: i });
            }
            if s.departure > self.horizon {
                out.push(Violation::OutsideHorizon {
                    session: i,
                    departure: s.departure,
                    horizon: self.horizon,
                });
            }
            if s.arrival < s.departure && s.energy > T::zero() && s.max_rate > T::zero() {
                let lax = s.initial_laxity();
                if lax < T::zero() {
                    out.push(Violation::IndividuallyUnsatisfiable {
                        session: i,
                        laxity: lax.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        match &self.power {
            PowerProfile::Constant(p) => {
                if !(p.is_finite() && *p >= T::zero()) {
                    out.push(Violation::InvalidPower { slot: None });
                }
            }
            PowerProfile::Stepwise(v) => {
                for (t, p) in v.iter().enumerate() {
                    if !(p.is_finite() && *p >= T::zero()) {
                        out.push(Violation::InvalidPower { slot: Some(t) });
                    }
                }
                if v.len() < self.horizon {
                    out.push(Violation::ProfileTooShort {
                        len: v.len(),
                        horizon: self.horizon,
                    });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// A broken structural invariant. Session fields are indices into `Instance::sessions`.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySojourn {
        session: usize,
    },
    NonPositiveEnergy {
        session: usize,
    },
    NonPositiveRate {
        session: usize,
    },
    NonFinite {
        session: usize,
    },
    IndividuallyUnsatisfiable {
        session: usize,
        laxity: f64,
    },
    OutsideHorizon {
        session: usize,
        departure: usize,
        horizon: usize,
    },
    DuplicateId {
        id: String,
    },
    InvalidPower {
        slot: Option<usize>,
    },
    ProfileTooShort {
        len: usize,
        horizon: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySojourn { session } => write!(f, "session {session}: empty sojourn"),
            Violation::NonPositiveEnergy { session } => {
                write!(f, "session {session}: energy demand must be positive")
            }
            Violation::NonPositiveRate { session } => {
                write!(f, "session {session}: peak rate must be positive")
            }
            Violation::NonFinite { session } => {
                write!(f, "session {session}: non-finite energy or rate")
            }
            Violation::IndividuallyUnsatisfiable { session, laxity } => {
                write!(
                    f,
                    "session {session}: individually unsatisfiable (initial laxity {laxity})"
                )
            }
            Violation::OutsideHorizon {
                session,
                departure,
                horizon,
            } => write!(
                f,
                "session {session}: departure {departure} beyond horizon {horizon}"
            ),
            Violation::DuplicateId { id } => write!(f, "duplicate session id `{id}`"),
            Violation::InvalidPower { slot: Some(t) } => {
                write!(f, "slot {t}: power limit must be finite and nonnegative")
            }
            Violation::InvalidPower { slot: None } => {
                write!(f, "power limit must be finite and nonnegative")
            }
            Violation::ProfileTooShort { len, horizon } => {
                write!(
                    f,
                    "power profile has {len} slots but the horizon is {horizon}"
                )
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_ev_unit;
    use super::*;

    #[test]
    fn valid_single_session() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 0, 2, 1.0, 1.0)],
            PowerProfile::Constant(1.0),
        );
        assert!(inst.validate().is_empty());
        assert_eq!(inst.horizon, 2);
    }

    #[test]
    fn empty_sojourn_is_reported() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 2, 2, 1.0, 1.0)],
            PowerProfile::Constant(1.0),
        );
        let v = inst.validate();
        assert!(v.contains(&Violation::EmptySojourn { session: 0 }));
        assert!(v[0].to_string().contains("empty sojourn"));
    }

    #[test]
    fn unsatisfiable_session_is_reported() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 0, 2, 3.0, 1.0)],
            PowerProfile::Constant(1.0),
        );
        let v = inst.validate();
        assert_eq!(
            v,
            vec![Violation::IndividuallyUnsatisfiable {
                session: 0,
                laxity: -1.0
            }]
        );
        assert!(v[0].to_string().contains("individually unsatisfiable"));
    }

    #[test]
    fn zero_energy_and_duplicates_rejected() {
        let inst = Instance::new(
            vec![
                ChargingSession::new("a", 0, 2, 0.0, 1.0),
                ChargingSession::new("a", 0, 2, 1.0, 0.0),
            ],
            PowerProfile::Constant(1.0),
        );
        let v = inst.validate();
        assert!(v.contains(&Violation::NonPositiveEnergy { session: 0 }));
        assert!(v.contains(&Violation::NonPositiveRate { session: 1 }));
        assert!(v.contains(&Violation::DuplicateId { id: "a".into() }));
    }

    #[test]
    fn short_profile_and_negative_power() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 0, 3, 1.0, 1.0)],
            PowerProfile::Stepwise(vec![1.0, -1.0]),
        );
        let v = inst.validate();
        assert!(v.contains(&Violation::InvalidPower { slot: Some(1) }));
        assert!(v.contains(&Violation::ProfileTooShort { len: 2, horizon: 3 }));
    }

    #[test]
    fn validate_is_idempotent() {
        let inst = Instance::new(
            vec![ChargingSession::new("a", 1, 1, 5.0, 1.0)],
            PowerProfile::Constant(1.0),
        );
        assert_eq!(inst.validate(), inst.validate());
    }

    #[test]
    fn active_set_examples() {
        let inst = two_ev_unit();
        assert_eq!(inst.active_set(0).unwrap(), vec![0, 1]);
        assert!(inst.active_set(2).unwrap().is_empty());
        assert!(matches!(
            inst.active_set(3),
            Err(Error::SlotOutOfRange { .. })
        ));

        let late = Instance::new(
            vec![ChargingSession::new("a", 1, 3, 1.0, 1.0)],
            PowerProfile::Constant(1.0),
        );
        assert!(late.active_set(0).unwrap().is_empty());
        assert_eq!(late.active_set(1).unwrap(), vec![0]);
    }

    #[test]
    fn profile_extremes() {
        let p = PowerProfile::Stepwise(vec![2.0, 1.0, 3.0]);
        assert_eq!(p.min_over(3), 1.0);
        assert_eq!(p.max_over(3), 3.0);
        assert_eq!(p.at(7), 0.0);
        assert_eq!(PowerProfile::Constant(1.5).min_over(0), 1.5);
    }
}
