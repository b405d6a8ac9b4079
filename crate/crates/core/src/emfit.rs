//! Click-log ingestion and EM estimation of position-based model parameters.
//!
//! Logs are CSV with header `query_id,arm_id,position,click` (an extra
//! `user_id` column is accepted and ignored) or pre-aggregated
//! `query_id,arm_id,position,impressions,clicks`. Positions are 1-based in
//! files and 0-based in memory.
//!
//! Each query gets its own `(kappa, theta)` fit. The likelihood only depends
//! on the products `kappa_l * theta_k`, so `kappa -> c * kappa`,
//! `theta -> theta / c` is invisible to the data. No rescaling is applied:
//! the reported parameters are whatever EM converges to from the fixed
//! initialization `kappa_l = 1 / l`, and only the products are meaningful
//! across fits.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PbmModel};

pub const DEFAULT_MIN_IMPRESSIONS: u64 = 1000;
pub const DEFAULT_MIN_ARMS: usize = 5;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Fitted parameters are clamped to `[PARAM_FLOOR, 1 - PARAM_FLOOR]`.
pub const PARAM_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: position {position} outside 1..={num_positions}")]
    Position { line: u64, position: usize, num_positions: usize },
    #[error("no impressions to fit")]
    Empty,
    #[error("query {query}: no impressions at position {position}")]
    UncoveredPosition { query: String, position: usize },
    #[error("query {query}: log-likelihood is not finite at iteration {iteration}")]
    NonFinite { query: String, iteration: usize },
    #[error("fixed kappa has length {got}, expected {expected}")]
    KappaLength { got: usize, expected: usize },
    #[error("invalid fit file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickLogRecord {
    pub query_id: String,
    pub arm_id: String,
    /// 1-based.
    pub position: usize,
    pub click: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub impressions: u64,
    pub clicks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOptions {
    /// Minimum impressions an arm needs at every position.
    pub min_impressions: u64,
    /// Minimum surviving arms for a query to be kept.
    pub min_arms: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            min_impressions: DEFAULT_MIN_IMPRESSIONS,
            min_arms: DEFAULT_MIN_ARMS,
        }
    }
}

/// Impression and click counts per `(query, arm, position)`, in key order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatedCounts {
    num_positions: usize,
    cells: BTreeMap<String, BTreeMap<String, Vec<CellCounts>>>,
}

impl AggregatedCounts {
    pub fn new(num_positions: usize) -> Self {
        AggregatedCounts {
            num_positions,
            cells: BTreeMap::new(),
        }
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn num_queries(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    /// Adds `impressions` and `clicks` at 0-based `position`.
    ///
    /// # Panics
    /// If `position >= num_positions` or `clicks > impressions`.
    pub fn add(&mut self, query: &str, arm: &str, position: usize, impressions: u64, clicks: u64) {
        assert!(position < self.num_positions && clicks <= impressions);
        let row = self
            .cells
            .entry(query.to_owned())
            .or_default()
            .entry(arm.to_owned())
            .or_insert_with(|| vec![CellCounts::default(); self.num_positions]);
        row[position].impressions += impressions;
        row[position].clicks += clicks;
    }

    pub fn add_record(&mut self, record: &ClickLogRecord) -> Result<(), EmError> {
        if record.position == 0 || record.position > self.num_positions {
            return Err(EmError::Position {
                line: 0,
                position: record.position,
                num_positions: self.num_positions,
            });
        }
        self.add(&record.query_id, &record.arm_id, record.position - 1, 1, u64::from(record.click));
        Ok(())
    }

    pub fn cell(&self, query: &str, arm: &str, position: usize) -> CellCounts {
        self.cells
            .get(query)
            .and_then(|arms| arms.get(arm))
            .map(|row| row[position])
            .unwrap_or_default()
    }

    pub fn total_impressions(&self) -> u64 {
        self.cells
            .values()
            .flat_map(|arms| arms.values())
            .flatten()
            .map(|c| c.impressions)
            .sum()
    }

    /// Keeps arms with at least `min_impressions` at every position, then
    /// queries with at least `min_arms` such arms.
    pub fn filter(&self, options: &FilterOptions) -> AggregatedCounts {
        let cells = self
            .cells
            .iter()
            .filter_map(|(query, arms)| {
                let kept: BTreeMap<String, Vec<CellCounts>> = arms
                    .iter()
                    .filter(|(_, row)| row.iter().all(|c| c.impressions >= options.min_impressions))
                    .map(|(arm, row)| (arm.clone(), row.clone()))
                    .collect();
                (kept.len() >= options.min_arms).then(|| (query.clone(), kept))
            })
            .collect();
        AggregatedCounts {
            num_positions: self.num_positions,
            cells,
        }
    }

    /// Dense table for one query, arms in key order.
    pub fn query(&self, query: &str) -> Option<QueryCounts> {
        let arms = self.cells.get(query)?;
        let l = self.num_positions;
        let mut table = QueryCounts {
            query_id: query.to_owned(),
            arms: Vec::with_capacity(arms.len()),
            num_positions: l,
            impressions: Vec::with_capacity(arms.len() * l),
            clicks: Vec::with_capacity(arms.len() * l),
        };
        for (arm, row) in arms {
            table.arms.push(arm.clone());
            table.impressions.extend(row.iter().map(|c| c.impressions));
            table.clicks.extend(row.iter().map(|c| c.clicks));
        }
        Some(table)
    }

    /// Writes the pre-aggregated CSV form, one row per stored cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EmError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["query_id", "arm_id", "position", "impressions", "clicks"])
            .map_err(csv_write_error)?;
        for (query, arms) in &self.cells {
            for (arm, row) in arms {
                for (l, c) in row.iter().enumerate() {
                    out.write_record([
                        query.as_str(),
                        arm.as_str(),
                        &(l + 1).to_string(),
                        &c.impressions.to_string(),
                        &c.clicks.to_string(),
                    ])
                    .map_err(csv_write_error)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_write_error(e: csv::Error) -> EmError {
    EmError::Io(std::io::Error::other(e))
}

/// Exact per-cell aggregation of a click log, without filtering.
pub fn aggregate<R: Read>(source: R, num_positions: usize) -> Result<AggregatedCounts, EmError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| EmError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| EmError::Parse {
        line: 1,
        message: format!("missing column `{name}`"),
    };
    let query_col = column("query_id").ok_or_else(|| missing("query_id"))?;
    let arm_col = column("arm_id").ok_or_else(|| missing("arm_id"))?;
    let position_col = column("position").ok_or_else(|| missing("position"))?;
    let layout = match (column("click"), column("impressions"), column("clicks")) {
        (Some(c), _, _) => Layout::Events { click: c },
        (None, Some(n), Some(s)) => Layout::Aggregated { impressions: n, clicks: s },
        _ => return Err(missing("click")),
    };

    let mut counts = AggregatedCounts::new(num_positions);
    for row in reader.records() {
        let row = row.map_err(|e| EmError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let integer = |i: usize, what: &str| -> Result<u64, EmError> {
            field(i).parse::<u64>().map_err(|_| EmError::Parse {
                line,
                message: format!("invalid {what} `{}`", field(i)),
            })
        };
        let position = integer(position_col, "position")? as usize;
        if position == 0 || position > num_positions {
            return Err(EmError::Position {
                line,
                position,
                num_positions,
            });
        }
        let (impressions, clicks) = match layout {
            Layout::Events { click } => match field(click) {
                "0" => (1, 0),
                "1" => (1, 1),
                other => {
                    return Err(EmError::Parse {
                        line,
                        message: format!("click must be 0 or 1, got `{other}`"),
                    });
                }
            },
            Layout::Aggregated { impressions, clicks } => {
                let (n, s) = (integer(impressions, "impressions")?, integer(clicks, "clicks")?);
                if s > n {
                    return Err(EmError::Parse {
                        line,
                        message: format!("clicks {s} exceed impressions {n}"),
                    });
                }
                (n, s)
            }
        };
        counts.add(field(query_col), field(arm_col), position - 1, impressions, clicks);
    }
    Ok(counts)
}

#[derive(Clone, Copy)]
enum Layout {
    Events { click: usize },
    Aggregated { impressions: usize, clicks: usize },
}

/// [`aggregate`] followed by [`AggregatedCounts::filter`].
pub fn ingest<R: Read>(source: R, num_positions: usize, filter: &FilterOptions) -> Result<AggregatedCounts, EmError> {
    Ok(aggregate(source, num_positions)?.filter(filter))
}

/// Dense `K x L` counts of one query, row-major by arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCounts {
    pub query_id: String,
    pub arms: Vec<String>,
    num_positions: usize,
    impressions: Vec<u64>,
    clicks: Vec<u64>,
}

impl QueryCounts {
    /// Builds a table from row-major `impressions` and `clicks`.
    ///
    /// # Panics
    /// On mismatched lengths or `clicks > impressions`.
    pub fn from_dense(query_id: &str, arms: Vec<String>, num_positions: usize, impressions: Vec<u64>, clicks: Vec<u64>) -> Self {
        assert_eq!(impressions.len(), arms.len() * num_positions);
        assert_eq!(clicks.len(), impressions.len());
        assert!(clicks.iter().zip(&impressions).all(|(s, n)| s <= n));
        QueryCounts {
            query_id: query_id.to_owned(),
            arms,
            num_positions,
            impressions,
            clicks,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn impressions(&self, arm: usize, position: usize) -> u64 {
        self.impressions[arm * self.num_positions + position]
    }

    pub fn clicks(&self, arm: usize, position: usize) -> u64 {
        self.clicks[arm * self.num_positions + position]
    }

    pub fn total_impressions(&self) -> u64 {
        self.impressions.iter().sum()
    }
}

/// `sum_{k,l} s log(kappa_l theta_k) + (n - s) log(1 - kappa_l theta_k)`,
/// with `0 log 0 = 0`; a click on a zero-probability cell gives `-inf`.
pub fn log_likelihood(counts: &QueryCounts, kappa: &[f64], theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, &th) in theta.iter().enumerate() {
        for (l, &ka) in kappa.iter().enumerate() {
            let (n, s) = (counts.impressions(k, l), counts.clicks(k, l));
            let p = ka * th;
            if s > 0 {
                total += s as f64 * p.ln();
            }
            if n > s {
                total += (n - s) as f64 * (-p).ln_1p();
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tol: f64,
    /// Holds `kappa` fixed and fits `theta` only.
    pub fixed_kappa: Option<Vec<f64>>,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            fixed_kappa: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFit {
    pub query_id: String,
    pub arms: Vec<String>,
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    /// Log-likelihood at the initialization, then after each iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub impressions: u64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl QueryFit {
    pub fn model(&self) -> Result<PbmModel, ModelError> {
        PbmModel::new(self.theta.clone(), self.kappa.clone())
    }
}

fn clamp_param(x: f64) -> f64 {
    x.clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR)
}

/// EM with the examination indicator as latent variable.
pub fn em_fit(counts: &QueryCounts, options: &EmOptions) -> Result<QueryFit, EmError> {
    let (num_arms, l) = (counts.num_arms(), counts.num_positions());
    if num_arms == 0 || counts.total_impressions() == 0 {
        return Err(EmError::Empty);
    }
    let mut kappa = match &options.fixed_kappa {
        Some(fixed) if fixed.len() != l => {
            return Err(EmError::KappaLength {
                got: fixed.len(),
                expected: l,
            });
        }
        Some(fixed) => fixed.clone(),
        None => {
            if let Some(position) = (0..l).find(|&p| (0..num_arms).all(|k| counts.impressions(k, p) == 0)) {
                return Err(EmError::UncoveredPosition {
                    query: counts.query_id.clone(),
                    position: position + 1,
                });
            }
            (1..=l).map(|p| 1.0 / p as f64).collect()
        }
    };
    let global_ctr = counts.clicks.iter().sum::<u64>() as f64 / counts.total_impressions() as f64;
    let mut theta: Vec<f64> = (0..num_arms)
        .map(|k| {
            let n = counts.impressions(k, 0);
            let ctr = if n > 0 { counts.clicks(k, 0) as f64 / n as f64 } else { global_ctr };
            clamp_param(ctr)
        })
        .collect();

    let non_finite = |iteration| EmError::NonFinite {
        query: counts.query_id.clone(),
        iteration,
    };
    let mut ll = log_likelihood(counts, &kappa, &theta);
    if !ll.is_finite() {
        return Err(non_finite(0));
    }
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    let mut examined = vec![0.0; num_arms * l];
    while iterations < options.max_iters {
        iterations += 1;
        for k in 0..num_arms {
            for p in 0..l {
                let (n, s) = (counts.impressions(k, p), counts.clicks(k, p));
                let missed = (n - s) as f64 * kappa[p] * (1.0 - theta[k]) / (1.0 - kappa[p] * theta[k]);
                examined[k * l + p] = s as f64 + missed;
            }
        }
        if options.fixed_kappa.is_none() {
            for (p, ka) in kappa.iter_mut().enumerate() {
                let n: u64 = (0..num_arms).map(|k| counts.impressions(k, p)).sum();
                let e: f64 = (0..num_arms).map(|k| examined[k * l + p]).sum();
                *ka = clamp_param(e / n as f64);
            }
        }
        for (k, th) in theta.iter_mut().enumerate() {
            let e: f64 = examined[k * l..(k + 1) * l].iter().sum();
            if e > 0.0 {
                let s: u64 = (0..l).map(|p| counts.clicks(k, p)).sum();
                *th = clamp_param(s as f64 / e);
            }
        }
        let next = log_likelihood(counts, &kappa, &theta);
        if !next.is_finite() {
            return Err(non_finite(iterations));
        }
        trace.push(next);
        let improvement = (next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if improvement < options.tol {
            converged = true;
            break;
        }
    }
    let theta_min = theta.iter().copied().fold(f64::INFINITY, f64::min);
    let theta_max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(QueryFit {
        query_id: counts.query_id.clone(),
        arms: counts.arms.clone(),
        kappa,
        theta,
        log_likelihood_trace: trace,
        iterations,
        converged,
        impressions: counts.total_impressions(),
        theta_min,
        theta_max,
    })
}

/// Per-query fits of a whole log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Impression-weighted mean of the per-query `kappa` vectors.
    pub kappa: Vec<f64>,
    pub queries: Vec<QueryFit>,
    /// Largest iteration count over queries.
    pub iterations: usize,
    /// True when every query converged.
    pub converged: bool,
}

impl FitResult {
    pub fn from_path(path: &Path) -> Result<Self, EmError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| EmError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }

    /// One model per query, in query order.
    pub fn models(&self) -> Result<Vec<PbmModel>, ModelError> {
        self.queries.iter().map(QueryFit::model).collect()
    }

    /// CSV `query_id,arm_id,theta`.
    pub fn write_theta_csv<W: Write>(&self, writer: W) -> Result<(), EmError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["query_id", "arm_id", "theta"]).map_err(csv_write_error)?;
        for q in &self.queries {
            for (arm, theta) in q.arms.iter().zip(&q.theta) {
                out.write_record([q.query_id.as_str(), arm.as_str(), &theta.to_string()])
                    .map_err(csv_write_error)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Fits every query independently, in parallel.
pub fn fit_all(counts: &AggregatedCounts, options: &EmOptions) -> Result<FitResult, EmError> {
    if counts.is_empty() {
        return Err(EmError::Empty);
    }
    let tables: Vec<QueryCounts> = counts.queries().filter_map(|q| counts.query(q)).collect();
    let queries = tables
        .par_iter()
        .map(|t| em_fit(t, options))
        .collect::<Result<Vec<_>, _>>()?;
    let total: f64 = queries.iter().map(|q| q.impressions as f64).sum();
    let kappa = (0..counts.num_positions())
        .map(|p| queries.iter().map(|q| q.kappa[p] * q.impressions as f64).sum::<f64>() / total)
        .collect();
    Ok(FitResult {
        kappa,
        iterations: queries.iter().map(|q| q.iterations).max().unwrap_or(0),
        converged: queries.iter().all(|q| q.converged),
        queries,
    })
}
