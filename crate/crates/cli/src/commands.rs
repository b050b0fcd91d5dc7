use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use evcs_core::corpus::{read_corpus, read_instance, write_corpus};
use evcs_core::{
    generate, instance_metrics, min_feasible_eps, min_power_capacity, offline_feasible,
    quantile_bins, reference_eps, simulate, theorem1_bound, theorem2_bound, Algorithm,
    AugmentationMode, BoundInputs, CorpusSpec, Error, Instance64,
};
use rayon::prelude::*;

use crate::report::*;

pub enum Status {
    Ok,
    /// `run` finished but some demand was missed.
    Infeasible,
}

fn canonical(algs: &[Algorithm]) -> Vec<Algorithm> {
    let mut algs = algs.to_vec();
    algs.sort_unstable();
    algs.dedup();
    algs
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

pub fn gen<W: Write>(
    out: W,
    format: Format,
    spec: &Path,
    dir: &Path,
    seed: Option<u64>,
) -> Result<Status> {
    let mut spec = CorpusSpec::load(spec)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let instances: Vec<Instance64> = generate(&spec)?;
    let paths = write_corpus(&instances, dir)
        .with_context(|| format!("writing corpus to {}", dir.display()))?;
    let records: Vec<GenRecord> = paths
        .iter()
        .zip(&instances)
        .map(|(p, inst)| GenRecord {
            path: display(p),
            sessions: inst.len(),
            horizon: inst.horizon,
            power: inst.power.at(0),
        })
        .collect();
    emit(out, format, "gen", &records)?;
    Ok(Status::Ok)
}

pub fn check<W: Write>(out: W, format: Format, file: &Path) -> Result<Status> {
    let inst: Instance64 = read_instance(file)?;
    let violations = inst.validate();
    let valid = violations.is_empty();
    // the flow oracle and the capacity search assume a structurally valid instance
    let oracle = valid.then(|| offline_feasible(&inst));
    let record = CheckRecord {
        path: display(file),
        sessions: inst.len(),
        horizon: inst.horizon,
        valid,
        violations: violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; "),
        offline_feasible: oracle.as_ref().map(|o| o.feasible),
        total_energy: inst.total_energy(),
        max_flow: oracle.as_ref().map(|o| o.max_flow),
        min_power_capacity: valid.then(|| min_power_capacity(&inst)),
    };
    emit(out, format, "check", &[record])?;
    Ok(Status::Ok)
}

fn run_record(path: &Path, inst: &Instance64, alg: Algorithm) -> Result<RunRecord> {
    let (_, verdict) = simulate(inst, alg)?;
    let metrics = instance_metrics(inst);
    Ok(RunRecord {
        path: display(path),
        algorithm: alg.name(),
        feasible: verdict.feasible,
        min_laxity: verdict.min_laxity,
        oscillation: verdict.oscillation,
        switch_count: verdict.switch_count,
        unmet_energy: verdict.total_unmet(),
        violations: verdict.violations.len(),
        max_sojourn_ratio: metrics.max_sojourn_ratio,
        min_normalized_laxity: metrics.min_normalized_laxity,
    })
}

pub fn run<W: Write>(
    out: W,
    format: Format,
    file: &Path,
    alg: Algorithm,
    schedule_path: Option<&Path>,
) -> Result<Status> {
    let inst: Instance64 = read_instance(file)?;
    let record = run_record(file, &inst, alg)?;
    if let Some(path) = schedule_path {
        let (schedule, _) = simulate(&inst, alg)?;
        let rows: Vec<ScheduleRecord> = inst
            .sessions
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..inst.horizon).map(move |t| (i, s, t)))
            .map(|(i, s, t)| ScheduleRecord {
                session: s.id.clone(),
                slot: t,
                rate: schedule.rate(i, t),
            })
            .collect();
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        emit(file, Format::Csv, "schedule", &rows)?;
    }
    let feasible = record.feasible;
    emit(out, format, "run", &[record])?;
    Ok(if feasible {
        Status::Ok
    } else {
        Status::Infeasible
    })
}

fn load_corpus(dir: &Path) -> Result<Vec<(std::path::PathBuf, Instance64)>> {
    read_corpus(dir).with_context(|| format!("reading corpus {}", dir.display()))
}

pub fn sweep<W: Write>(
    out: W,
    format: Format,
    dir: &Path,
    algs: &[Algorithm],
    binning: Option<(bool, usize)>,
    per_instance: bool,
) -> Result<Status> {
    let corpus = load_corpus(dir)?;
    let algs = canonical(algs);
    if corpus.is_empty() {
        log::warn!(
            "corpus {} is empty; success rates are reported as 1",
            dir.display()
        );
    }
    if per_instance {
        let records: Vec<RunRecord> = corpus
            .par_iter()
            .map(|(path, inst)| {
                algs.iter()
                    .map(|&a| run_record(path, inst, a))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        emit(out, format, "sweep", &records)?;
        return Ok(Status::Ok);
    }
    // outcome[k][j]: instance k under algs[j]
    let outcome: Vec<Vec<bool>> = corpus
        .par_iter()
        .map(|(_, inst)| {
            algs.iter()
                .map(|&a| evcs_core::is_online_feasible(inst, a))
                .collect::<evcs_core::Result<Vec<_>>>()
        })
        .collect::<evcs_core::Result<_>>()?;
    let group_row =
        |j: usize, members: &[usize], group: &'static str, bin: Option<(usize, f64, f64)>| {
            let feasible = members.iter().filter(|&&k| outcome[k][j]).count();
            SweepRecord {
                algorithm: algs[j].name(),
                group,
                bin: bin.map(|b| b.0),
                bin_lo: bin.map(|b| b.1),
                bin_hi: bin.map(|b| b.2),
                instances: members.len(),
                feasible,
                success_rate: if members.is_empty() {
                    1.0
                } else {
                    feasible as f64 / members.len() as f64
                },
            }
        };
    let everyone: Vec<usize> = (0..corpus.len()).collect();
    let mut records = Vec::new();
    for j in 0..algs.len() {
        records.push(group_row(j, &everyone, "all", None));
    }
    if let Some((by_laxity, k)) = binning {
        let (group, values): (&'static str, Vec<f64>) = if by_laxity {
            (
                "norm-laxity",
                corpus
                    .iter()
                    .map(|(_, i)| instance_metrics(i).min_normalized_laxity)
                    .collect(),
            )
        } else {
            (
                "sojourn-ratio",
                corpus
                    .iter()
                    .map(|(_, i)| instance_metrics(i).max_sojourn_ratio)
                    .collect(),
            )
        };
        let bins = quantile_bins(&values, k);
        for j in 0..algs.len() {
            for b in 0..k {
                let members: Vec<usize> =
                    everyone.iter().copied().filter(|&x| bins[x] == b).collect();
                if members.is_empty() {
                    continue;
                }
                let lo = members
                    .iter()
                    .map(|&x| values[x])
                    .fold(f64::INFINITY, f64::min);
                let hi = members
                    .iter()
                    .map(|&x| values[x])
                    .fold(f64::NEG_INFINITY, f64::max);
                records.push(group_row(j, &members, group, Some((b, lo, hi))));
            }
        }
    }
    emit(out, format, "sweep", &records)?;
    Ok(Status::Ok)
}

/// Largest per-instance bound for the separated-arrival regime, or why it does not apply.
fn corpus_theorem1(instances: &[Instance64]) -> std::result::Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    for (k, inst) in instances.iter().enumerate() {
        let mut arrivals: Vec<usize> = inst.sessions.iter().map(|s| s.arrival).collect();
        arrivals.sort_unstable();
        let gap = arrivals
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(usize::MAX);
        let n = gap.saturating_sub(1).min(inst.horizon.max(1)) as f64;
        let inputs = BoundInputs {
            max_energy: inst.sessions.iter().map(|s| s.energy).fold(0.0, f64::max),
            min_gap: n,
            p_min: inst.power.min_over(inst.horizon),
            p_max: inst.power.max_over(inst.horizon),
        };
        if inputs.check().is_err() || inputs.min_gap * inputs.p_max < inputs.max_energy {
            return Err(format!("theorem1 assumptions fail on instance {k}"));
        }
        worst = worst.max(theorem1_bound(&inputs).map_err(|e| e.to_string())?);
    }
    Ok(worst)
}

fn corpus_theorem2(instances: &[Instance64]) -> std::result::Result<f64, String> {
    instances
        .iter()
        .map(theorem2_bound)
        .try_fold(f64::NEG_INFINITY, |acc, b| b.map(|b| acc.max(b)))
        .map_err(|e| format!("theorem2 not defined: {e}"))
}

pub fn augment<W: Write>(
    out: W,
    format: Format,
    dir: &Path,
    algs: &[Algorithm],
    mode: AugmentationMode,
) -> Result<Status> {
    let corpus = load_corpus(dir)?;
    let instances: Vec<Instance64> = corpus.into_iter().map(|(_, i)| i).collect();
    let algs = canonical(algs);
    let mut notes = Vec::new();
    let mut clamp = |name: &str, raw: std::result::Result<f64, String>| match raw {
        _ if instances.is_empty() => {
            notes.push(format!("{name}: empty corpus"));
            None
        }
        Ok(b) if b < 0.0 => {
            notes.push(format!("{name} clamped from {b} to 0"));
            Some(0.0)
        }
        Ok(b) => Some(b),
        Err(why) => {
            notes.push(why);
            None
        }
    };
    let bound1 = clamp("theorem1", corpus_theorem1(&instances));
    let bound2 = clamp("theorem2", corpus_theorem2(&instances));
    let mut records = Vec::with_capacity(algs.len());
    for alg in algs {
        let mut note = notes.clone();
        let search = match min_feasible_eps(&instances, alg, mode) {
            Ok(s) => Some(s),
            Err(Error::NoFiniteEps(limit)) => {
                note.push(format!("no finite eps up to {limit}"));
                None
            }
            Err(e) => return Err(e.into()),
        };
        if search.as_ref().is_some_and(|s| s.monotone_anomaly()) {
            note.push("feasibility not monotone in eps near the answer".to_string());
        }
        records.push(AugmentRecord {
            algorithm: alg.name(),
            mode: mode.name(),
            eps: search.as_ref().map(|s| s.eps),
            feasible_at_eps: search.as_ref().is_some_and(|s| s.feasible_at_eps),
            infeasible_below: search.as_ref().and_then(|s| s.infeasible_below),
            monotone_anomaly: search.as_ref().is_some_and(|s| s.monotone_anomaly()),
            evaluations: search.as_ref().map_or(0, |s| s.evaluations),
            theorem1_bound: bound1,
            theorem2_bound: bound2,
            note: note.join("; "),
            reference_eps: reference_eps(alg, mode),
        });
    }
    emit(out, format, "augment", &records)?;
    Ok(Status::Ok)
}
