//! Instance files and the seeded synthetic corpus generator.
//!
//! File format, one instance per file:
//!
//! ```text
//! evcs-v1
//! power constant <P>          | power step <v0> <v1> ...
//! horizon <T>                 (optional, only when T differs from max d)
//! <id> <arrival> <departure> <energy> <max_rate>
//! ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Reals are written
//! with 17 significant digits so a round trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::feasibility::{min_power_capacity, offline_feasible};
use crate::model::{ChargingSession, Instance, PowerProfile};
use crate::num::Real;

pub const SCHEMA: &str = "evcs-v1";
pub const FILE_EXTENSION: &str = "evcs";

/// `(min, mean, max)` targets of a positive quantity, in slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Target {
    fn check(&self, what: &str) -> Result<()> {
        let ok = self.min > 0.0
            && self.min <= self.mean
            && self.mean <= self.max
            && self.max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Generation(format!(
                "{what}: need 0 < min <= mean <= max, got ({}, {}, {})",
                self.min, self.mean, self.max
            )))
        }
    }
}

/// Bounded-demand, separated-arrival generation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatedArrivals {
    /// Consecutive arrivals are more than this many slots apart.
    pub min_gap: usize,
    /// Every energy demand is at most this.
    pub max_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    /// Reporting scale only.
    #[serde(default = "default_slot_minutes")]
    pub slot_minutes: f64,
    /// Inclusive range of sessions per instance.
    pub evs_per_instance: [usize; 2],
    /// Peak rates are drawn uniformly from this range.
    pub rate_cap: [f64; 2],
    /// Arrivals are drawn uniformly from `[0, arrival_window)`.
    pub arrival_window: usize,
    pub sojourn: Target,
    /// Initial laxity `l_i(a_i)` per session.
    pub laxity: Target,
    #[serde(default)]
    pub separated: Option<SeparatedArrivals>,
}

fn default_slot_minutes() -> f64 {
    12.0
}

impl CorpusSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::Parse {
                path: "<spec>".into(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse {
                line,
                column,
                message,
                ..
            } => Error::Parse {
                path: path.display().to_string(),
                line,
                column,
                message,
            },
            other => other,
        })
    }

    pub fn check(&self) -> Result<()> {
        self.sojourn.check("sojourn")?;
        self.laxity.check("laxity")?;
        let [lo, hi] = self.evs_per_instance;
        if lo == 0 || lo > hi {
            return Err(Error::Generation(format!(
                "evs_per_instance: need 1 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        let [rlo, rhi] = self.rate_cap;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return Err(Error::Generation(format!(
                "rate_cap: need 0 < lo <= hi, got [{rlo}, {rhi}]"
            )));
        }
        if self.arrival_window == 0 {
            return Err(Error::Generation("arrival_window must be positive".into()));
        }
        if !(self.slot_minutes > 0.0) {
            return Err(Error::Generation("slot_minutes must be positive".into()));
        }
        if let Some(sep) = self.separated {
            if sep.min_gap == 0 {
                return Err(Error::Generation(
                    "separated.min_gap must be at least 1".into(),
                ));
            }
            if !(sep.max_energy > 0.0 && sep.max_energy.is_finite()) {
                return Err(Error::Generation(format!(
                    "separated.max_energy must be positive, got {}",
                    sep.max_energy
                )));
            }
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Log-normal restricted to `[min, max]`, with `mu` fitted so the
/// restricted mean equals `target.mean`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedLogNormal {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    min: f64,
    max: f64,
}

impl TruncatedLogNormal {
    pub fn fit(target: Target) -> Result<Self> {
        target.check("distribution")?;
        let (ln_a, ln_b) = (target.min.ln(), target.max.ln());
        let sigma = ((ln_b - ln_a) / 6.0).max(1e-9);
        let degenerate = Self {
            mu: target.mean.ln(),
            sigma,
            lo: 0.0,
            hi: 1.0,
            min: target.mean,
            max: target.mean,
        };
        if target.max - target.min <= 1e-12 * target.max {
            return Ok(degenerate);
        }
        let mut lo = ln_a - 8.0 * sigma;
        let mut hi = ln_b + 8.0 * sigma;
        let mean_at = |mu: f64| truncated_mean(mu, sigma, ln_a, ln_b);
        if !(mean_at(lo) <= target.mean && target.mean <= mean_at(hi)) {
            return Err(Error::Generation(format!(
                "cannot fit a truncated log-normal with mean {} on [{}, {}]",
                target.mean, target.min, target.max
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_at(mid) < target.mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        let n = Normal::new(0.0, 1.0).expect("standard normal");
        Ok(Self {
            mu,
            sigma,
            lo: n.cdf((ln_a - mu) / sigma),
            hi: n.cdf((ln_b - mu) / sigma),
            min: target.min,
            max: target.max,
        })
    }

    pub fn mean(&self) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            truncated_mean(self.mu, self.sigma, self.min.ln(), self.max.ln())
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            return self.min;
        }
        let n = Normal::new(0.0, 1.0).expect("standard normal");
        let u = self.lo + (self.hi - self.lo) * rng.gen::<f64>();
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (self.mu + self.sigma * n.inverse_cdf(u))
            .exp()
            .clamp(self.min, self.max)
    }
}

/// Mean of `exp(N(mu, sigma^2))` conditioned on `[exp(ln_a), exp(ln_b)]`.
fn truncated_mean(mu: f64, sigma: f64, ln_a: f64, ln_b: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let mass = n.cdf((ln_b - mu) / sigma) - n.cdf((ln_a - mu) / sigma);
    if mass < 1e-300 {
        // all mass piles up at the nearer end
        return if mu < ln_a { ln_a.exp() } else { ln_b.exp() };
    }
    let shifted =
        n.cdf((ln_b - mu - sigma * sigma) / sigma) - n.cdf((ln_a - mu - sigma * sigma) / sigma);
    let m = (mu + 0.5 * sigma * sigma).exp() * shifted / mass;
    m.clamp(ln_a.exp(), ln_b.exp())
}

/// Retries before a laxity sample that exceeds its sojourn is replaced.
const LAXITY_REDRAWS: usize = 64;
/// Draws used to calibrate the laxity distribution.
const CALIBRATION_DRAWS: usize = 20_000;
const CALIBRATION_SEED: u64 = 0x5eed_1a71;

/// Joint sampler of `(sojourn, initial laxity)` in slots.
///
/// Sojourns are rounded to whole slots and laxities must stay below the
/// sojourn, which drags the realized laxity mean under the nominal one.
/// The nominal laxity mean is therefore calibrated so that the realized
/// mean matches the target.
#[derive(Debug, Clone, Copy)]
pub struct SessionSampler {
    sojourn: TruncatedLogNormal,
    laxity: TruncatedLogNormal,
}

impl SessionSampler {
    pub fn fit(sojourn: Target, laxity: Target) -> Result<Self> {
        let sojourn_dist = TruncatedLogNormal::fit(sojourn)?;
        let with_mean = |mean: f64| {
            TruncatedLogNormal::fit(Target { mean, ..laxity }).map(|l| Self {
                sojourn: sojourn_dist,
                laxity: l,
            })
        };
        let realized = |s: &Self| {
            let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
            (0..CALIBRATION_DRAWS)
                .map(|_| s.draw(&mut rng).1)
                .sum::<f64>()
                / CALIBRATION_DRAWS as f64
        };
        let mut best = with_mean(laxity.mean)?;
        if laxity.max - laxity.min <= 1e-12 * laxity.max || realized(&best) >= laxity.mean {
            return Ok(best);
        }
        let (mut lo, mut hi) = (laxity.mean, laxity.max);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let cand = with_mean(mid)?;
            if realized(&cand) < laxity.mean {
                lo = mid;
            } else {
                hi = mid;
                best = cand;
            }
            if hi - lo <= 1e-4 * laxity.mean {
                break;
            }
        }
        let got = realized(&best);
        if (got - laxity.mean).abs() > 0.05 * laxity.mean {
            log::warn!(
                "realized laxity mean {got:.3} misses target {:.3}",
                laxity.mean
            );
        }
        Ok(best)
    }

    /// One `(sojourn, laxity)` pair with `1 <= sojourn` and `0 < laxity < sojourn`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let s = self.sojourn.sample(rng).round().max(1.0);
        let mut lax = self.laxity.sample(rng);
        let mut tries = 0;
        while lax >= s && tries < LAXITY_REDRAWS {
            lax = self.laxity.sample(rng);
            tries += 1;
        }
        if lax >= s {
            lax = s * rng.gen::<f64>();
        }
        (s, lax)
    }
}

/// Generates `spec.count` instances. Instance `k` depends only on
/// `spec.seed + k`, so generation is parallel and reproducible.
///
/// Every instance gets the smallest constant power limit that keeps it
/// offline feasible. In separated mode the limit is raised to at least
/// `X / N` so that `N >= X / P` holds.
pub fn generate<T: Real>(spec: &CorpusSpec) -> Result<Vec<Instance<T>>> {
    spec.check()?;
    if spec.count == 0 {
        return Ok(Vec::new());
    }
    let sampler = SessionSampler::fit(spec.sojourn, spec.laxity)?;
    (0..spec.count)
        .into_par_iter()
        .map(|k| generate_one(spec, &sampler, k))
        .collect()
}

fn generate_one<T: Real>(
    spec: &CorpusSpec,
    sampler: &SessionSampler,
    index: usize,
) -> Result<Instance<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(index as u64));
    let n = rng.gen_range(spec.evs_per_instance[0]..=spec.evs_per_instance[1]);
    let mut arrivals: Vec<usize> = match spec.separated {
        None => (0..n)
            .map(|_| rng.gen_range(0..spec.arrival_window))
            .collect(),
        Some(sep) => {
            let mut a = rng.gen_range(0..=sep.min_gap);
            (0..n)
                .map(|_| {
                    let cur = a;
                    a += sep.min_gap + 1 + rng.gen_range(0..=sep.min_gap);
                    cur
                })
                .collect()
        }
    };
    arrivals.sort_unstable();
    let mut sessions = Vec::with_capacity(n);
    for (j, &a) in arrivals.iter().enumerate() {
        let (s, lax) = sampler.draw(&mut rng);
        let r = rng.gen_range(spec.rate_cap[0]..=spec.rate_cap[1]);
        let mut e = r * (s - lax);
        if let Some(sep) = spec.separated {
            e = e.min(sep.max_energy);
        }
        if !(e > 0.0) {
            return Err(Error::Generation(format!(
                "instance {index}: nonpositive demand drawn"
            )));
        }
        sessions.push(ChargingSession::new(
            format!("ev{j:03}"),
            a,
            a + s as usize,
            T::lit(e),
            T::lit(r),
        ));
    }
    let mut inst = Instance::new(sessions, PowerProfile::Constant(T::one()));
    let mut p = min_power_capacity(&inst);
    if let Some(sep) = spec.separated {
        p = p.max(T::lit(sep.max_energy / sep.min_gap as f64));
    }
    inst.power = PowerProfile::Constant(p);
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(Error::Generation(format!(
            "instance {index}: {}",
            Error::InvalidInstance(violations)
        )));
    }
    if !offline_feasible(&inst).feasible {
        return Err(Error::Generation(format!(
            "instance {index}: power limit {p} is not offline feasible"
        )));
    }
    Ok(inst)
}

/// Serializes in the `evcs-v1` format.
pub fn format_instance<T: Real>(instance: &Instance<T>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{SCHEMA}").unwrap();
    match &instance.power {
        PowerProfile::Constant(p) => writeln!(out, "power constant {}", real(*p)).unwrap(),
        PowerProfile::Stepwise(v) => {
            out.push_str("power step");
            for p in v {
                write!(out, " {}", real(*p)).unwrap();
            }
            out.push('\n');
        }
    }
    if instance.horizon != instance.latest_departure() {
        writeln!(out, "horizon {}", instance.horizon).unwrap();
    }
    for s in &instance.sessions {
        if s.id.is_empty() || s.id.chars().any(char::is_whitespace) || s.id.starts_with('#') {
            return Err(Error::Contract(format!(
                "session id `{}` cannot be written",
                s.id
            )));
        }
        writeln!(
            out,
            "{} {} {} {} {}",
            s.id,
            s.arrival,
            s.departure,
            real(s.energy),
            real(s.max_rate)
        )
        .unwrap();
    }
    Ok(out)
}

fn real<T: Real>(x: T) -> String {
    format!("{x:.16e}")
}

pub fn write_instance<T: Real>(instance: &Instance<T>, path: &Path) -> Result<()> {
    fs::write(path, format_instance(instance)?)?;
    Ok(())
}

pub fn read_instance<T: Real>(path: &Path) -> Result<Instance<T>> {
    let text = fs::read_to_string(path)?;
    parse_instance(&text, &path.display().to_string())
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (col, (byte, ch)) in line.char_indices().enumerate() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some((byte, col + 1)),
            (true, Some((b, c))) => {
                out.push(Token {
                    text: &line[b..byte],
                    column: c,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some((b, c)) = start {
        out.push(Token {
            text: &line[b..],
            column: c,
        });
    }
    out
}

/// Parses the `evcs-v1` format. Semantic problems (such as `d <= a`) are
/// left to [`Instance::validate`].
pub fn parse_instance<T: Real>(text: &str, origin: &str) -> Result<Instance<T>> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        })
        .peekable();
    let eof_line = text.lines().count() + 1;

    let (ln, header) = lines
        .next()
        .ok_or_else(|| err(eof_line, 1, format!("empty file, expected `{SCHEMA}`")))?;
    let header = header.trim();
    if header != SCHEMA {
        if header.starts_with("evcs-v") {
            return Err(Error::SchemaVersion {
                found: header.to_string(),
                expected: SCHEMA.to_string(),
            });
        }
        return Err(err(
            ln,
            1,
            format!("expected header `{SCHEMA}`, found `{header}`"),
        ));
    }

    let parse_real = |tok: &Token, ln: usize, what: &str| -> Result<T> {
        tok.text
            .parse::<T>()
            .map_err(|_| err(ln, tok.column, format!("invalid {what} `{}`", tok.text)))
    };
    let parse_slot = |tok: &Token, ln: usize, what: &str| -> Result<usize> {
        tok.text
            .parse::<usize>()
            .map_err(|_| err(ln, tok.column, format!("invalid {what} `{}`", tok.text)))
    };

    let (ln, line) = lines.next().ok_or_else(|| {
        err(
            eof_line,
            1,
            "unexpected end of file, expected `power` line".into(),
        )
    })?;
    let toks = tokens(line);
    if toks[0].text != "power" {
        return Err(err(
            ln,
            toks[0].column,
            format!("expected `power`, found `{}`", toks[0].text),
        ));
    }
    let end_col = line.chars().count() + 1;
    let kind = toks
        .get(1)
        .ok_or_else(|| err(ln, end_col, "expected `constant` or `step`".into()))?;
    let power = match kind.text {
        "constant" => {
            let v = toks
                .get(2)
                .ok_or_else(|| err(ln, end_col, "expected power value".into()))?;
            if let Some(extra) = toks.get(3) {
                return Err(err(
                    ln,
                    extra.column,
                    "unexpected token after power value".into(),
                ));
            }
            PowerProfile::Constant(parse_real(v, ln, "power value")?)
        }
        "step" => {
            if toks.len() < 3 {
                return Err(err(ln, end_col, "expected at least one power value".into()));
            }
            PowerProfile::Stepwise(
                toks[2..]
                    .iter()
                    .map(|t| parse_real(t, ln, "power value"))
                    .collect::<Result<_>>()?,
            )
        }
        other => {
            return Err(err(
                ln,
                kind.column,
                format!("expected `constant` or `step`, found `{other}`"),
            ));
        }
    };

    let mut horizon = None;
    if let Some(&(ln, line)) = lines.peek() {
        let toks = tokens(line);
        if toks[0].text == "horizon" {
            lines.next();
            let v = toks.get(1).ok_or_else(|| {
                err(
                    ln,
                    line.chars().count() + 1,
                    "expected horizon value".into(),
                )
            })?;
            if let Some(extra) = toks.get(2) {
                return Err(err(
                    ln,
                    extra.column,
                    "unexpected token after horizon".into(),
                ));
            }
            horizon = Some(parse_slot(v, ln, "horizon")?);
        }
    }

    let mut sessions = Vec::new();
    for (ln, line) in lines {
        let toks = tokens(line);
        if toks.len() < 5 {
            return Err(err(
                ln,
                line.chars().count() + 1,
                format!(
                    "session line has {} fields, expected 5 (id a d e rmax)",
                    toks.len()
                ),
            ));
        }
        if let Some(extra) = toks.get(5) {
            return Err(err(
                ln,
                extra.column,
                "unexpected token after session fields".into(),
            ));
        }
        sessions.push(ChargingSession::new(
            toks[0].text,
            parse_slot(&toks[1], ln, "arrival")?,
            parse_slot(&toks[2], ln, "departure")?,
            parse_real(&toks[3], ln, "energy")?,
            parse_real(&toks[4], ln, "max rate")?,
        ));
    }
    let inst = Instance::new(sessions, power);
    Ok(match horizon {
        Some(h) => inst.with_horizon(h),
        None => inst,
    })
}

/// Writes `inst-NNNN.evcs` files into `dir` (created if missing).
pub fn write_corpus<T: Real>(instances: &[Instance<T>], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let width = instances.len().saturating_sub(1).to_string().len().max(4);
    instances
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            let path = dir.join(format!("inst-{k:0width$}.{FILE_EXTENSION}"));
            write_instance(inst, &path)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.evcs` file in `dir`, sorted by path.
pub fn read_corpus<T: Real>(dir: &Path) -> Result<Vec<(PathBuf, Instance<T>)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|x| x == FILE_EXTENSION));
    paths.sort();
    paths
        .into_par_iter()
        .map(|p| {
            let inst = read_instance(&p)?;
            Ok((p, inst))
        })
        .collect()
}

/// A spec mirroring the Google Mountain View row of the trace statistics:
/// mean sojourn 149 min (10 to 720), mean laxity 35 min (0.001 to 694),
/// in 12-minute slots.
pub fn google_mtv_like(count: usize, seed: u64) -> CorpusSpec {
    let slot = 12.0;
    CorpusSpec {
        count,
        seed,
        slot_minutes: slot,
        evs_per_instance: [3, 10],
        rate_cap: [1.0, 3.0],
        arrival_window: 48,
        sojourn: Target {
            min: 10.0 / slot,
            mean: 149.0 / slot,
            max: 720.0 / slot,
        },
        laxity: Target {
            min: 0.001 / slot,
            mean: 35.0 / slot,
            max: 694.0 / slot,
        },
        separated: None,
    }
}
