use std::path::{Path, PathBuf};

use clap::Args;
use clkd_core::as2::{As2Dataset, Candidate, Language, Question};
use clkd_core::data::read_jsonl;
use clkd_core::error::{Error, Result};
use clkd_core::metrics::{evaluate_dataset, EvalOptions, EvalReport};
use clkd_core::teacher::{load_scores, Strictness};
use clkd_core::trainer::{
    distill_items, evaluate_student, finetune_items, load_checkpoint, load_params, select_languages, sweep_temperature,
    write_manifest, Environment, Method, RunManifest, RunReport, TrainConfig, TrainItem, Trainer, TAU_GRID,
};
use clkd_core::translation::read_parallel_jsonl;

use crate::data::{print_json, write_json};
use crate::PoolArgs;

/// Training flags. Anything given here overrides the config file, which
/// overrides the defaults.
#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// TOML training config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `finetune` or `clkd`.
    #[arg(long)]
    method: Option<String>,
    /// `single:<code>` or `all`.
    #[arg(long)]
    languages: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Allow an alpha other than the method's own.
    #[arg(long)]
    override_alpha: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Fail on pairs without a teacher score.
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Skip pairs without a teacher score.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    eval_every: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        if let Some(m) = &self.method {
            cfg.method = m.parse()?;
        }
        if let Some(l) = &self.languages {
            cfg.languages = l.parse()?;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = Some(a);
        }
        cfg.override_alpha |= self.override_alpha;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.iters {
            cfg.total_iters = n;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.base_lr = lr;
        }
        if self.strict {
            cfg.strictness = Strictness::Strict;
        }
        if self.lenient {
            cfg.strictness = Strictness::Lenient;
        }
        if let Some(k) = self.eval_every {
            cfg.eval_every = Some(k);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Dev set for periodic and final evaluation.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output directory for `model.ckpt` and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint; its stored config wins over flags.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also write the checkpoint every `k` iterations.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    dev: PathBuf,
    /// Held-out set for the seeded runs at the selected temperature.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = TAU_GRID.to_vec())]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for `best.ckpt` and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "teacher", required_unless_present = "teacher")]
    checkpoint: Option<PathBuf>,
    /// Teacher-scores JSONL keyed by pair id.
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long)]
    include_all_negative: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Items grouped by language in order of first appearance.
fn by_language(items: Vec<TrainItem>) -> Vec<(Language, Vec<TrainItem>)> {
    let mut groups: Vec<(Language, Vec<TrainItem>)> = Vec::new();
    for item in items {
        match groups.iter_mut().find(|(l, _)| *l == item.language) {
            Some((_, g)) => g.push(item),
            None => groups.push((item.language.clone(), vec![item])),
        }
    }
    groups
}

fn build_pool(pool: &PoolArgs, cfg: &TrainConfig) -> Result<Vec<TrainItem>> {
    let mut items = Vec::new();
    match cfg.method {
        Method::Finetune => {
            if pool.data.is_empty() {
                return Err(Error::Config("finetune needs at least one --data file".into()));
            }
            for path in &pool.data {
                items.extend(finetune_items(&read_jsonl(path)?, &cfg.model)?);
            }
        }
        Method::Clkd => {
            let (Some(teacher), false) = (&pool.teacher, pool.pairs.is_empty()) else {
                return Err(Error::Config("clkd needs --pairs and --teacher".into()));
            };
            let store = load_scores(teacher)?;
            let keep_labels = cfg.effective_alpha() > 0.0;
            for path in &pool.pairs {
                let pairs = read_parallel_jsonl(path)?;
                items.extend(distill_items(&pairs, &store, cfg.strictness, &cfg.model, keep_labels)?.0);
            }
        }
    }
    select_languages(by_language(items), &cfg.languages)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn out_path(dir: &Path, name: &str) -> (PathBuf, String) {
    let p = dir.join(name);
    let s = p.display().to_string();
    (p, s)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let cfg = match &resumed {
        Some(ck) => ck.config.clone(),
        None => a.config.resolve()?,
    };
    let items = build_pool(&a.pool, &cfg)?;
    log::info!(
        "training {} on {} pairs for {} iterations",
        cfg.method,
        items.len(),
        cfg.total_iters
    );
    let dev = a.dev.as_deref().map(read_jsonl).transpose()?;
    create_dir(&a.out)?;
    let (ckpt, ckpt_name) = out_path(&a.out, "model.ckpt");

    let mut trainer = match resumed {
        Some(ck) => Trainer::resume(ck, &items)?,
        None => Trainer::new(cfg.clone(), &items, None)?,
    };
    let mut log = Default::default();
    let step = a.checkpoint_every.unwrap_or(cfg.total_iters).max(1);
    while !trainer.is_done() {
        let next = (trainer.iteration() / step + 1) * step;
        trainer.run_until(next, dev.as_ref(), &mut log)?;
        trainer.checkpoint().save(&ckpt)?;
    }
    trainer.checkpoint().save(&ckpt)?;

    let report = match &dev {
        Some(d) => {
            let r = evaluate_student(trainer.params(), d, EvalOptions::default())?;
            log::info!("dev P@1 {:.4} MAP {:.4} MRR {:.4}", r.p_at_1, r.map, r.mrr);
            Some(RunReport::from_reports(vec![cfg.seed], vec![r])?)
        }
        None => None,
    };
    let (manifest, _) = out_path(&a.out, "manifest.json");
    write_manifest(
        &RunManifest {
            command: command_line(),
            config: serde_json::to_value(&cfg)?,
            environment: Environment::current(),
            report,
            sweep: Vec::new(),
            selected_tau: None,
            outputs: vec![ckpt_name],
        },
        &manifest,
    )
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    if cfg.method != Method::Clkd {
        return Err(Error::Config("the temperature sweep applies to clkd only".into()));
    }
    let items = build_pool(&a.pool, &cfg)?;
    let dev = read_jsonl(&a.dev)?;
    let test = a.test.as_deref().map(read_jsonl).transpose()?;
    let (report, best) = sweep_temperature(&items, &dev, test.as_ref(), &cfg, &a.taus, a.jobs)?;
    create_dir(&a.out)?;
    let (ckpt, ckpt_name) = out_path(&a.out, "best.ckpt");
    best.save(&ckpt)?;
    log::info!(
        "selected tau {}: P@1 {:.4} ± {:.4} over {} seeds",
        report.tau,
        report.report.mean.p_at_1,
        report.report.stddev.p_at_1,
        report.report.seeds.len()
    );
    let (manifest, _) = out_path(&a.out, "manifest.json");
    write_manifest(
        &RunManifest {
            command: command_line(),
            config: serde_json::to_value(TrainConfig { tau: report.tau, ..cfg })?,
            environment: Environment::current(),
            report: Some(report.report),
            sweep: report.candidates,
            selected_tau: Some(report.tau),
            outputs: vec![ckpt_name],
        },
        &manifest,
    )
}

fn teacher_eval(ds: &As2Dataset, path: &Path, opts: EvalOptions) -> Result<EvalReport> {
    let store = load_scores(path)?;
    let scorer = |q: &Question, c: &Candidate| -> Result<f64> {
        let id = clkd_core::as2::pair_id(&q.id, &c.id);
        store.get(&id).map(|s| s.prob_pos).ok_or(Error::MissingTeacher(id))
    };
    evaluate_dataset(ds, &scorer, opts)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = read_jsonl(&a.data)?;
    let opts = EvalOptions {
        include_all_negative: a.include_all_negative,
    };
    let report = match (&a.checkpoint, &a.teacher) {
        (Some(ck), _) => evaluate_student(&load_params(ck)?, &ds, opts)?,
        (None, Some(t)) => teacher_eval(&ds, t, opts)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    print_json(&report)?;
    if let Some(path) = a.out {
        write_json(&report, &path)?;
    }
    Ok(())
}
