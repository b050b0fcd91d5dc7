//! Report records and their CSV / JSON rendering.
//!
//! Every command emits one flat record type, so a CSV report has a fixed
//! column set and the JSON envelope carries the same values.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;

pub const REPORT_SCHEMA: &str = "evcs-report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct Envelope<'a, R> {
    schema: &'static str,
    command: &'a str,
    records: &'a [R],
}

pub fn emit<R: Serialize, W: Write>(
    out: W,
    format: Format,
    command: &str,
    records: &[R],
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(
                &mut out,
                &Envelope {
                    schema: REPORT_SCHEMA,
                    command,
                    records,
                },
            )?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GenRecord {
    pub path: String,
    pub sessions: usize,
    pub horizon: usize,
    pub power: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub path: String,
    pub sessions: usize,
    pub horizon: usize,
    pub valid: bool,
    pub violations: String,
    pub offline_feasible: Option<bool>,
    pub total_energy: f64,
    pub max_flow: Option<f64>,
    pub min_power_capacity: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub path: String,
    pub algorithm: &'static str,
    pub feasible: bool,
    pub min_laxity: f64,
    pub oscillation: f64,
    pub switch_count: usize,
    pub unmet_energy: f64,
    pub violations: usize,
    pub max_sojourn_ratio: f64,
    pub min_normalized_laxity: f64,
}

#[derive(Debug, Serialize)]
pub struct ScheduleRecord {
    pub session: String,
    pub slot: usize,
    pub rate: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepRecord {
    pub algorithm: &'static str,
    /// `all` for the overall row, else the binning metric.
    pub group: &'static str,
    pub bin: Option<usize>,
    pub bin_lo: Option<f64>,
    pub bin_hi: Option<f64>,
    pub instances: usize,
    pub feasible: usize,
    pub success_rate: f64,
}

#[derive(Debug, Serialize)]
pub struct AugmentRecord {
    pub algorithm: &'static str,
    pub mode: &'static str,
    pub eps: Option<f64>,
    pub feasible_at_eps: bool,
    pub infeasible_below: Option<bool>,
    pub monotone_anomaly: bool,
    pub evaluations: usize,
    pub theorem1_bound: Option<f64>,
    pub theorem2_bound: Option<f64>,
    pub note: String,
    pub reference_eps: f64,
}
