//! CSV and JSON formats shared by the CLI and the fuzz targets.
//!
//! CSV files are comma separated with a mandatory header row and `\n` line
//! endings. Floats are written with 17 significant digits so they read back
//! bit for bit.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::NarmaxConfig;
use crate::harness::{AggregateRow, EstimatorKind, ExperimentPlan, PriorSpec, RunRecord};
use crate::predict::SimulationResult;
use crate::vmp::{Checkpoint, FreeEnergyTrace, VmpSettings};
use crate::{Error, Result};

/// Measured input/output data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Signals {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// Lossless float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(line, e.to_string())
}

/// Reads the header and then every row, checking the column count.
fn rows(text: &str, accept_header: impl Fn(&[&str]) -> bool, expected: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = reader(text);
    let mut iter = rdr.records();
    let header = match iter.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(parse_error(1, format!("missing header, expected \"{expected}\""))),
    };
    let names: Vec<&str> = header.iter().collect();
    if !accept_header(&names) {
        return Err(parse_error(line_of(&header), format!("header must be \"{expected}\", found \"{}\"", names.join(","))));
    }
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    for r in iter {
        let r = r.map_err(csv_error)?;
        if r.len() != names.len() {
            return Err(parse_error(line_of(&r), format!("expected {} fields, found {}", names.len(), r.len())));
        }
        out.push(r);
    }
    Ok((names, out))
}

fn field_f64(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = &record[idx];
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_error(line_of(record), format!("column {name}: cannot parse \"{raw}\" as a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line_of(record), format!("column {name}: value must be finite")));
    }
    Ok(v)
}

fn field_opt_f64(record: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
    if record[idx].trim().is_empty() {
        Ok(None)
    } else {
        field_f64(record, idx, name).map(Some)
    }
}

fn field_usize(record: &csv::StringRecord, idx: usize, name: &str) -> Result<usize> {
    let raw = &record[idx];
    raw.trim()
        .parse()
        .map_err(|_| parse_error(line_of(record), format!("column {name}: cannot parse \"{raw}\" as a count")))
}

fn field_bool(record: &csv::StringRecord, idx: usize, name: &str) -> Result<bool> {
    match record[idx].trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        raw => Err(parse_error(line_of(record), format!("column {name}: expected true or false, found \"{raw}\""))),
    }
}

/// Parses identification data with header exactly `t,u,y`.
pub fn parse_data_csv(text: &str) -> Result<Signals> {
    let (_, records) = rows(text, |h| h == ["t", "u", "y"], "t,u,y")?;
    let mut s = Signals::default();
    for r in &records {
        s.t.push(field_f64(r, 0, "t")?);
        s.u.push(field_f64(r, 1, "u")?);
        s.y.push(field_f64(r, 2, "y")?);
    }
    Ok(s)
}

/// Parses simulation inputs: header `t,u` or `t,u,y` (outputs are ignored).
pub fn parse_input_csv(text: &str) -> Result<Signals> {
    let (names, records) = rows(text, |h| h == ["t", "u"] || h == ["t", "u", "y"], "t,u")?;
    let mut s = Signals::default();
    for r in &records {
        s.t.push(field_f64(r, 0, "t")?);
        s.u.push(field_f64(r, 1, "u")?);
        if names.len() == 3 {
            s.y.push(field_f64(r, 2, "y")?);
        }
    }
    Ok(s)
}

pub const RECORDS_HEADER: &str = "sweep_value,estimator,realization,rms_sim,rms_pred,failed";
pub const AGGREGATES_HEADER: &str =
    "sweep_value,estimator,n_runs,n_failed,failure_proportion,mean_rms_sim,sem_rms_sim,mean_rms_pred,sem_rms_pred";

fn estimator_field(record: &csv::StringRecord, idx: usize) -> Result<EstimatorKind> {
    EstimatorKind::parse(record[idx].trim())
        .ok_or_else(|| parse_error(line_of(record), format!("unknown estimator \"{}\"", &record[idx])))
}

pub fn write_records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.sweep_value),
            r.estimator.as_str(),
            r.realization,
            fmt_opt(r.rms_simulation),
            fmt_opt(r.rms_prediction),
            r.failed
        );
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    let expected: Vec<&str> = RECORDS_HEADER.split(',').collect();
    let (_, records) = rows(text, |h| h == expected.as_slice(), RECORDS_HEADER)?;
    records
        .iter()
        .map(|r| {
            Ok(RunRecord {
                sweep_value: field_f64(r, 0, "sweep_value")?,
                estimator: estimator_field(r, 1)?,
                realization: field_usize(r, 2, "realization")?,
                rms_simulation: field_opt_f64(r, 3, "rms_sim")?,
                rms_prediction: field_opt_f64(r, 4, "rms_pred")?,
                failed: field_bool(r, 5, "failed")?,
            })
        })
        .collect()
}

pub fn write_aggregates_csv(rows_: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATES_HEADER);
    out.push('\n');
    for r in rows_ {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.sweep_value),
            r.estimator.as_str(),
            r.n_runs,
            r.n_failed,
            fmt_f64(r.failure_proportion),
            fmt_opt(r.mean_rms_simulation),
            fmt_opt(r.sem_rms_simulation),
            fmt_opt(r.mean_rms_prediction),
            fmt_opt(r.sem_rms_prediction)
        );
    }
    out
}

pub fn parse_aggregates_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let expected: Vec<&str> = AGGREGATES_HEADER.split(',').collect();
    let (_, records) = rows(text, |h| h == expected.as_slice(), AGGREGATES_HEADER)?;
    records
        .iter()
        .map(|r| {
            let row = AggregateRow {
                sweep_value: field_f64(r, 0, "sweep_value")?,
                estimator: estimator_field(r, 1)?,
                n_runs: field_usize(r, 2, "n_runs")?,
                n_failed: field_usize(r, 3, "n_failed")?,
                failure_proportion: field_f64(r, 4, "failure_proportion")?,
                mean_rms_simulation: field_opt_f64(r, 5, "mean_rms_sim")?,
                sem_rms_simulation: field_opt_f64(r, 6, "sem_rms_sim")?,
                mean_rms_prediction: field_opt_f64(r, 7, "mean_rms_pred")?,
                sem_rms_prediction: field_opt_f64(r, 8, "sem_rms_pred")?,
            };
            if row.n_failed > row.n_runs || !(0.0..=1.0).contains(&row.failure_proportion) {
                return Err(parse_error(line_of(r), "inconsistent failure counts"));
            }
            Ok(row)
        })
        .collect()
}

/// `index,u,y_hat,variance` for a simulation run.
pub fn write_simulation_csv(inputs: &[f64], result: &SimulationResult) -> String {
    let mut out = String::from("index,u,y_hat,variance\n");
    for (i, (y, v)) in result.predictions.iter().zip(&result.variances).enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", fmt_f64(inputs[i]), fmt_f64(*y), fmt_f64(*v));
    }
    out
}

/// `index,t,u,y,y_hat,error` for an online identification run.
pub fn write_predictions_csv(signals: &Signals, predictions: &[f64]) -> String {
    let mut out = String::from("index,t,u,y,y_hat,error\n");
    for (i, p) in predictions.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            fmt_f64(signals.t[i]),
            fmt_f64(signals.u[i]),
            fmt_f64(signals.y[i]),
            fmt_f64(*p),
            fmt_f64(signals.y[i] - p)
        );
    }
    out
}

/// `step,iteration,free_energy` in long format.
pub fn write_free_energy_csv(traces: &[FreeEnergyTrace]) -> String {
    let mut out = String::from("step,iteration,free_energy\n");
    for (k, trace) in traces.iter().enumerate() {
        for (i, f) in trace.values.iter().enumerate() {
            let _ = writeln!(out, "{k},{i},{}", fmt_f64(*f));
        }
    }
    out
}

/// `t,u,y` export of a signal pair, sampled at `1/sample_rate`.
pub fn write_signals_csv(u: &[f64], y: &[f64], sample_rate: f64) -> String {
    let mut out = String::from("t,u,y\n");
    for (k, (u, y)) in u.iter().zip(y).enumerate() {
        let _ = writeln!(out, "{},{},{}", fmt_f64(k as f64 / sample_rate), fmt_f64(*u), fmt_f64(*y));
    }
    out
}

/// Identification settings read by `identify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    #[serde(default = "NarmaxConfig::benchmark")]
    pub model: NarmaxConfig,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(default)]
    pub settings: VmpSettings,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { model: NarmaxConfig::benchmark(), priors: PriorSpec::default(), settings: VmpSettings::default() }
    }
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let line = e.line() as u64;
        Error::Parse { line, message: format!("invalid JSON: {e}") }
    })
}

pub fn parse_identify_config(text: &str) -> Result<IdentifyConfig> {
    let c: IdentifyConfig = parse_json(text)?;
    c.model.validate()?;
    c.settings.validate()?;
    c.priors.priors(1)?;
    Ok(c)
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let p: ExperimentPlan = parse_json(text)?;
    p.validate()?;
    Ok(p)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let ck: Checkpoint = parse_json(text)?;
    ck.config.validate()?;
    Ok(ck)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
