use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{evaluate_student, train_items, Checkpoint, TrainConfig, TrainItem, Trainer};
use crate::as2::As2Dataset;
use crate::error::{Error, Result};
use crate::metrics::{EvalOptions, EvalReport};
use crate::student::HASH_VERSION;

pub const TAU_GRID: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub p_at_1: f64,
    pub map: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<EvalReport>,
    pub mean: MetricSummary,
    /// Population standard deviation.
    pub stddev: MetricSummary,
    pub selected_tau: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunReport {
    pub fn from_reports(seeds: Vec<u64>, per_seed: Vec<EvalReport>) -> Result<Self> {
        if per_seed.is_empty() || seeds.len() != per_seed.len() {
            return Err(Error::InvalidInput(format!(
                "{} seeds but {} reports",
                seeds.len(),
                per_seed.len()
            )));
        }
        let stat = |f: fn(&EvalReport) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        let (p, sp) = stat(|r| r.p_at_1);
        let (m, sm) = stat(|r| r.map);
        let (r, sr) = stat(|r| r.mrr);
        Ok(RunReport {
            seeds,
            per_seed,
            mean: MetricSummary {
                p_at_1: p,
                map: m,
                mrr: r,
            },
            stddev: MetricSummary {
                p_at_1: sp,
                map: sm,
                mrr: sr,
            },
            selected_tau: None,
        })
    }
}

/// Runs `f` over `items` with at most `jobs` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let mut out = Vec::with_capacity(items.len());
    for wave in items.chunks(jobs.max(1)) {
        let f = &f;
        let results: Vec<R> = thread::scope(|s| {
            let handles: Vec<_> = wave.iter().map(|x| s.spawn(move || f(x))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        out.extend(results);
    }
    out
}

/// Trains and evaluates once per seed. Any failing seed fails the whole
/// report; every failure is logged.
pub fn seeded_runs<F>(seeds: &[u64], jobs: usize, run: F) -> Result<RunReport>
where
    F: Fn(u64) -> Result<EvalReport> + Sync,
{
    let results = parallel_map(seeds, jobs, |&s| run(s));
    let mut reports = Vec::with_capacity(seeds.len());
    let mut first_err = None;
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    RunReport::from_reports(seeds.to_vec(), reports)
}

/// Highest dev MAP; ties go to the smaller temperature.
pub fn select_tau(results: &[(f64, f64)]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(tau, map) in results {
        if !map.is_finite() {
            return Err(Error::Numeric(format!("dev MAP for tau {tau} is {map}")));
        }
        best = match best {
            Some((bt, bm)) if bm > map || (bm == map && bt <= tau) => Some((bt, bm)),
            _ => Some((tau, map)),
        };
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::InvalidInput("no temperatures to select from".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    pub dev: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tau: f64,
    pub candidates: Vec<TauResult>,
    pub report: RunReport,
}

/// Trains one model per temperature with `cfg.seed`, picks the temperature
/// with the best dev MAP, then evaluates it over seeds `seed, seed+1, seed+2`
/// on `eval` (the dev set when `None`). Also returns the final checkpoint of
/// the winning first-seed run.
pub fn sweep_temperature(
    items: &[TrainItem],
    dev: &As2Dataset,
    eval: Option<&As2Dataset>,
    cfg: &TrainConfig,
    taus: &[f64],
    jobs: usize,
) -> Result<(SweepReport, Checkpoint)> {
    let opts = EvalOptions::default();
    let trained = parallel_map(taus, jobs, |&tau| -> Result<(Checkpoint, EvalReport)> {
        let mut t = Trainer::new(TrainConfig { tau, ..cfg.clone() }, items, None)?;
        t.run(None)?;
        let report = evaluate_student(t.params(), dev, opts)?;
        log::info!("tau {tau}: dev MAP {:.4}", report.map);
        Ok((t.checkpoint(), report))
    });
    let mut candidates = Vec::with_capacity(taus.len());
    let mut models = Vec::with_capacity(taus.len());
    for (&tau, r) in taus.iter().zip(trained) {
        let (ck, dev_report) = r.inspect_err(|_| log::error!("sweep aborted at tau {tau}"))?;
        candidates.push(TauResult { tau, dev: dev_report });
        models.push(ck);
    }
    let pairs: Vec<(f64, f64)> = candidates.iter().map(|c| (c.tau, c.dev.map)).collect();
    let tau = select_tau(&pairs)?;
    let best = models.swap_remove(taus.iter().position(|&t| t == tau).expect("selected from taus"));

    let target = eval.unwrap_or(dev);
    let seeds = [cfg.seed, cfg.seed + 1, cfg.seed + 2];
    let mut report = seeded_runs(&seeds, jobs, |seed| {
        if seed == cfg.seed {
            return evaluate_student(&best.params, target, opts);
        }
        let params = train_items(
            items,
            &TrainConfig {
                tau,
                seed,
                ..cfg.clone()
            },
            None,
        )?;
        evaluate_student(&params, target, opts)
    })?;
    report.selected_tau = Some(tau);
    Ok((
        SweepReport {
            tau,
            candidates,
            report,
        },
        best,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub crate_version: String,
    pub hash_version: u32,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpus: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            hash_version: HASH_VERSION,
        }
    }
}

/// Written beside every training output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub environment: Environment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<TauResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_tau: Option<f64>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
