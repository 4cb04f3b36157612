use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::layered::{scenario_at_split, LayeredModelSpec};
use crate::error::{Error, Result};
use crate::sca_solver::{benchmark_setup, grid_oracle, solve_benchmark, BenchmarkScheme, SolveStatus};
use crate::system_model::{evaluate, Decision, Metrics, Scenario};

pub const CSV_HEADER: &str = "axis,axis_value,scheme,status,objective_dhat,rho,f_device_hz,p_tx_w,rho_server,f_server_hz,t_total_s,e_total_j,rate_bps,iters,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TMax,
    EMax,
    SplitPoint,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::TMax => "t_max",
            SweepAxis::EMax => "e_max",
            SweepAxis::SplitPoint => "split_point",
        }
    }
}

fn default_schemes() -> Vec<BenchmarkScheme> {
    BenchmarkScheme::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<BenchmarkScheme>,
}

impl SweepSpec {
    pub fn validate(&self, layered: Option<&LayeredModelSpec>) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::field("values", "sweep needs at least one value"));
        }
        if self.schemes.is_empty() {
            return Err(Error::field("schemes", "sweep needs at least one scheme"));
        }
        match self.axis {
            SweepAxis::TMax | SweepAxis::EMax => {
                if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::field("values", "budgets must be finite and > 0"));
                }
                if self.values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::field("values", "budget values must be strictly increasing"));
                }
            }
            SweepAxis::SplitPoint => {
                let l = layered.ok_or_else(|| {
                    Error::field("layered_model", "a split_point sweep needs a layered model")
                })?;
                for v in &self.values {
                    if !(v.fract() == 0.0 && *v >= 0.0 && *v <= l.num_layers() as f64) {
                        return Err(Error::field(
                            "values",
                            format!("split {v} is not an integer in 0..={}", l.num_layers()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Grid points per axis for the oracle column.
    pub grid_oracle: Option<usize>,
    /// Record wall-clock times (makes the output non-reproducible).
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub scheme: BenchmarkScheme,
    /// `converged`, `max_iter`, `infeasible` or `error`.
    pub status: String,
    pub objective: Option<f64>,
    pub decision: Option<Decision>,
    pub metrics: Option<Metrics>,
    pub iters: Option<usize>,
    pub wall_ms: Option<f64>,
    pub oracle_objective: Option<f64>,
    pub error: Option<String>,
}

fn cell_scenario(cfg: &Config, base: &Scenario, axis: SweepAxis, v: f64) -> Result<Scenario> {
    let mut sc = base.clone();
    match axis {
        SweepAxis::TMax => sc.qos.t_max = v,
        SweepAxis::EMax => sc.qos.e_max = v,
        SweepAxis::SplitPoint => {
            let l = cfg
                .layered_model
                .as_ref()
                .ok_or_else(|| Error::field("layered_model", "missing"))?;
            sc = scenario_at_split(l, v as usize, base)?;
        }
    }
    Ok(sc)
}

fn run_cell(cfg: &Config, base: &Scenario, axis: SweepAxis, v: f64, kind: BenchmarkScheme, opts: &RunOptions) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        axis,
        axis_value: v,
        scheme: kind,
        status: "error".into(),
        objective: None,
        decision: None,
        metrics: None,
        iters: None,
        wall_ms: None,
        oracle_objective: None,
        error: None,
    };
    let result = cell_scenario(cfg, base, axis, v).and_then(|sc| {
        let tr = solve_benchmark(kind, &sc, &cfg.solver, cfg.raw_input_bits())?;
        let oracle = match opts.grid_oracle {
            Some(n) => {
                let (s, pins) = benchmark_setup(kind, &sc, cfg.raw_input_bits())?;
                grid_oracle(&s, n, &pins)?.objective
            }
            None => None,
        };
        let (s, _) = benchmark_setup(kind, &sc, cfg.raw_input_bits())?;
        Ok((tr, oracle, s))
    });
    match result {
        Ok((tr, oracle, sc)) => {
            row.status = tr.status.as_str().to_string();
            row.oracle_objective = oracle;
            if tr.status != SolveStatus::Infeasible {
                if let Some(best) = tr.best() {
                    row.objective = Some(best.objective);
                    row.decision = Some(best.decision);
                    row.metrics = Some(evaluate(&best.decision, &sc));
                    row.iters = Some(tr.iterations());
                }
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if opts.timing && row.objective.is_some() {
        row.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// Runs every (value, scheme) cell of the config's sweep. Rows come back
/// sorted by axis value, then scheme.
pub fn run_sweep(cfg: &Config, opts: &RunOptions) -> Result<Vec<SweepRow>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::field("sweep", "config has no sweep section"))?;
    spec.validate(cfg.layered_model.as_ref())?;
    let base = match spec.axis {
        // a split sweep overrides the model, so a layered model without a
        // default split is fine
        SweepAxis::SplitPoint => {
            let l = cfg.layered_model.as_ref().expect("validated");
            let mut c = cfg.clone();
            c.layered_model = Some(LayeredModelSpec { split: Some(l.split.unwrap_or(0)), ..l.clone() });
            c.scenario()?
        }
        _ => cfg.scenario()?,
    };
    let cells: Vec<(f64, BenchmarkScheme)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.schemes.iter().map(move |&k| (v, k)))
        .collect();
    let work = || -> Vec<SweepRow> {
        cells
            .par_iter()
            .map(|&(v, k)| run_cell(cfg, &base, spec.axis, v, k, opts))
            .collect()
    };
    let mut rows = if opts.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::field("workers", e.to_string()))?
            .install(work)
    } else {
        work()
    };
    rows.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value).then(a.scheme.cmp(&b.scheme)));
    Ok(rows)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text of `rows`; an `oracle_dhat` column is appended when
/// `with_oracle` is set.
pub fn csv_string(rows: &[SweepRow], with_oracle: bool) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::domain("emit_csv", "refusing to write an empty table"));
    }
    let mut out = String::from(CSV_HEADER);
    if with_oracle {
        out.push_str(",oracle_dhat");
    }
    out.push('\n');
    for r in rows {
        let d = r.decision;
        let m = r.metrics;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.axis.as_str(),
            r.axis_value,
            r.scheme,
            r.status,
            opt(r.objective),
            opt(d.map(|d| d.rho)),
            opt(d.map(|d| d.f_device)),
            opt(d.map(|d| d.p_tx)),
            opt(d.map(|d| d.rho_server)),
            opt(d.map(|d| d.f_server)),
            opt(m.map(|m| m.t_total)),
            opt(m.map(|m| m.e_total)),
            opt(m.map(|m| m.rate_bps)),
            opt(r.iters),
            opt(r.wall_ms),
        );
        if with_oracle {
            let _ = write!(out, ",{}", opt(r.oracle_objective));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `rows` as CSV. An empty table is an error and creates no file.
pub fn emit_csv(rows: &[SweepRow], path: &Path, with_oracle: bool) -> Result<()> {
    let text = csv_string(rows, with_oracle)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
