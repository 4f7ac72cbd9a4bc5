//! Replicated simulation sweeps: generate, fit, score, summarize.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::metrics::{
    estimation_error, prediction_error, selection_rates, summarize, FitScore, ScoreSummary,
};
use crate::peer::{fit_peer, PeerConfig};
use crate::simgen::{generate, SimScenario};

/// Grid of scenarios sharing one template. Every `(p, snr, missing_rate)`
/// cell runs `replicates` independent draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: SimScenario,
    pub p_values: Vec<usize>,
    pub snr_values: Vec<f64>,
    pub missing_rates: Vec<f64>,
    pub replicates: usize,
    /// Defaults to `r* + 1`.
    #[serde(default)]
    pub initial_rank: Option<usize>,
}

impl SweepSpec {
    /// A single cell taken from `scenario` itself.
    pub fn single(scenario: SimScenario, replicates: usize) -> Self {
        SweepSpec {
            p_values: vec![scenario.p],
            snr_values: vec![scenario.snr],
            missing_rates: vec![scenario.missing_rate],
            scenario,
            replicates,
            initial_rank: None,
        }
    }

    pub fn cells(&self) -> Vec<SimScenario> {
        let mut out = Vec::new();
        for &p in &self.p_values {
            for &snr in &self.snr_values {
                for &missing_rate in &self.missing_rates {
                    out.push(SimScenario {
                        p,
                        snr,
                        missing_rate,
                        ..self.scenario.clone()
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(PeerError::invalid("replicates must be positive"));
        }
        if self.p_values.is_empty() || self.snr_values.is_empty() || self.missing_rates.is_empty() {
            return Err(PeerError::invalid("sweep lists must be nonempty"));
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Worker threads for the replicate pool.
    pub threads: usize,
    /// Template fit configuration; its `rank` is replaced per cell.
    pub fit: PeerConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        let mut fit = PeerConfig::new(1);
        // replicates already saturate the pool
        fit.parallel_layers = false;
        BenchOptions { threads: 1, fit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub cell: usize,
    pub replicate_id: u64,
    pub score: Option<FitScore>,
    pub estimated_rank: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: SimScenario,
    pub summary: Option<ScoreSummary>,
    pub failures: usize,
    /// Share of successful replicates whose estimated rank equals `r*`.
    pub rank_recovery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// Generates, fits and scores one replicate. Returns the score and the
/// estimated rank.
pub fn run_replicate(scn: &SimScenario, cfg: &PeerConfig) -> Result<(FitScore, usize)> {
    let data = generate::<f64>(scn)?;
    let start = Instant::now();
    let model = fit_peer(&data.obs, &data.x, cfg)?;
    let runtime_seconds = start.elapsed().as_secs_f64();

    let truth = &data.truth;
    let estimated: Vec<Vec<usize>> = model.retained_supports();
    let (fpr, fnr) = selection_rates(&estimated, &truth.supports, scn.p)?;
    Ok((
        FitScore {
            er_c: estimation_error(&model.coefficients, &truth.c_star)?,
            er_xc: prediction_error(&data.x, &model.coefficients, &truth.c_star)?,
            fpr,
            fnr,
            runtime_seconds,
        },
        model.estimated_rank,
    ))
}

/// Runs every replicate of every cell on a pool of `opts.threads` workers.
/// Results are collected by `(cell, replicate)` index, so the report does not
/// depend on the thread count (apart from measured runtimes).
pub fn run_sweep(spec: &SweepSpec, opts: &BenchOptions) -> Result<SweepReport> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..spec.replicates as u64).map(move |r| (c, r)))
        .collect();

    let rank = spec.initial_rank.unwrap_or(spec.scenario.r_star + 1);
    let cfg = PeerConfig { rank, ..opts.fit };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| PeerError::invalid(format!("cannot build thread pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, replicate_id)| {
                let scn = cells[cell].clone().with_replicate(replicate_id);
                match run_replicate(&scn, &cfg) {
                    Ok((score, r_hat)) => ReplicateOutcome {
                        cell,
                        replicate_id,
                        score: Some(score),
                        estimated_rank: Some(r_hat),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("cell {cell} replicate {replicate_id} failed: {e}");
                        ReplicateOutcome {
                            cell,
                            replicate_id,
                            score: None,
                            estimated_rank: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });

    let reports = cells
        .iter()
        .enumerate()
        .map(|(c, scenario)| {
            let mine: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.cell == c).collect();
            let scores: Vec<FitScore> = mine.iter().filter_map(|o| o.score).collect();
            let recovered = mine
                .iter()
                .filter(|o| o.estimated_rank == Some(scenario.r_star))
                .count();
            CellReport {
                scenario: scenario.clone(),
                summary: summarize(&scores).ok(),
                failures: mine.len() - scores.len(),
                rank_recovery: if scores.is_empty() {
                    0.0
                } else {
                    recovered as f64 / scores.len() as f64
                },
            }
        })
        .collect();
    Ok(SweepReport {
        cells: reports,
        outcomes,
    })
}

pub const RESULTS_HEADER: [&str; 17] = [
    "method",
    "p",
    "snr",
    "missing_rate",
    "er_c_e3",
    "er_xc",
    "fpr_pct",
    "fnr_pct",
    "time_s",
    "er_c_e3_sd",
    "er_xc_sd",
    "fpr_pct_sd",
    "fnr_pct_sd",
    "time_s_sd",
    "replicates",
    "failures",
    "rank_recovery",
];

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Summary table, one row per cell. Estimation error is scaled by 1e3 and
/// selection rates are percentages. With `record_time = false` the time
/// columns hold `NA`, which makes the file a pure function of the inputs.
pub fn write_results_csv<W: Write>(
    writer: W,
    report: &SweepReport,
    record_time: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for cell in &report.cells {
        let s = &cell.scenario;
        let mut row = vec![
            "PEER".to_string(),
            s.p.to_string(),
            s.snr.to_string(),
            s.missing_rate.to_string(),
        ];
        let time = |v: f64| if record_time { num(v) } else { "NA".into() };
        match &cell.summary {
            Some(sum) => {
                let (m, d) = (&sum.mean, &sum.sd);
                row.extend([
                    num(m.er_c * 1e3),
                    num(m.er_xc),
                    num(m.fpr * 100.0),
                    num(m.fnr * 100.0),
                    time(m.runtime_seconds),
                    num(d.er_c * 1e3),
                    num(d.er_xc),
                    num(d.fpr * 100.0),
                    num(d.fnr * 100.0),
                    time(d.runtime_seconds),
                    sum.count.to_string(),
                ]);
            }
            None => {
                row.extend(std::iter::repeat_n("NA".to_string(), 10));
                row.push("0".into());
            }
        }
        row.push(cell.failures.to_string());
        row.push(num(cell.rank_recovery));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replicate, for external plotting.
pub fn write_tidy_csv<W: Write>(writer: W, report: &SweepReport, record_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "p",
        "snr",
        "missing_rate",
        "replicate",
        "er_c",
        "er_xc",
        "fpr",
        "fnr",
        "time_s",
        "r_hat",
        "error",
    ])?;
    for o in &report.outcomes {
        let s = &report.cells[o.cell].scenario;
        let mut row = vec![
            s.p.to_string(),
            s.snr.to_string(),
            s.missing_rate.to_string(),
            o.replicate_id.to_string(),
        ];
        match o.score {
            Some(sc) => row.extend([
                format!("{:e}", sc.er_c),
                format!("{:e}", sc.er_xc),
                num(sc.fpr),
                num(sc.fnr),
                if record_time {
                    num(sc.runtime_seconds)
                } else {
                    "NA".into()
                },
            ]),
            None => row.extend(std::iter::repeat_n("NA".to_string(), 5)),
        }
        row.push(o.estimated_rank.map_or("NA".into(), |r| r.to_string()));
        row.push(o.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
