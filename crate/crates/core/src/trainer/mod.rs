//! Training drivers for finetuning and cross-lingual distillation, plus
//! checkpoints, seeded repetitions and the temperature sweep.

mod checkpoint;
mod runs;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::as2::{As2Dataset, Candidate, Language, Question};
use crate::distill::{kd_loss, kd_loss_grad, KdConfig, Logits, Reduction};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, EvalOptions, EvalReport, PairScorer};
use crate::student::{
    adamw_step, backward_cached, featurize, forward, forward_cached, lr_at, AdamHyper, FeatureVector, Gradients,
    ModelConfig, OptimState, Schedule, StudentParams,
};
use crate::teacher::{Strictness, TeacherLookup, TeacherStore};
use crate::translation::ParallelPair;

pub use checkpoint::{load_checkpoint, load_params, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use runs::{
    seeded_runs, select_tau, sweep_temperature, write_manifest, Environment, MetricSummary, RunManifest, RunReport,
    SweepReport, TauResult, TAU_GRID,
};

/// Lenient teacher lookups may drop at most this share of pairs.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Finetune,
    Clkd,
}

impl Method {
    pub fn default_alpha(self) -> f64 {
        match self {
            Method::Finetune => 1.0,
            Method::Clkd => 0.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Finetune => "finetune",
            Method::Clkd => "clkd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune" => Ok(Method::Finetune),
            "clkd" => Ok(Method::Clkd),
            other => Err(Error::Config(format!("unknown method `{other}` (finetune or clkd)"))),
        }
    }
}

/// `single:<code>` or `all`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LanguageSelection {
    Single(Language),
    All,
}

impl fmt::Display for LanguageSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageSelection::Single(l) => write!(f, "single:{l}"),
            LanguageSelection::All => f.write_str("all"),
        }
    }
}

impl FromStr for LanguageSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(LanguageSelection::All);
        }
        match s.strip_prefix("single:") {
            Some(code) => Ok(LanguageSelection::Single(Language::new(code)?)),
            None => Err(Error::Config(format!(
                "languages must be `single:<code>` or `all`, got `{s}`"
            ))),
        }
    }
}

impl TryFrom<String> for LanguageSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LanguageSelection> for String {
    fn from(l: LanguageSelection) -> String {
        l.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Explicit alpha. Only honoured when it matches the method or
    /// `override_alpha` is set.
    pub alpha: Option<f64>,
    pub override_alpha: bool,
    pub tau: f64,
    pub total_iters: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub languages: LanguageSelection,
    pub strictness: Strictness,
    pub model: ModelConfig,
    /// Evaluate on the dev set every `k` iterations. Final-only when unset.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Clkd,
            alpha: None,
            override_alpha: false,
            tau: 1.0,
            total_iters: 20_000,
            batch_size: 32,
            base_lr: 1e-3,
            warmup_frac: 0.025,
            weight_decay: 0.01,
            seed: 0,
            languages: LanguageSelection::All,
            strictness: Strictness::Strict,
            model: ModelConfig::default(),
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_alpha(&self) -> f64 {
        match self.alpha {
            Some(a) if self.override_alpha => a,
            _ => self.method.default_alpha(),
        }
    }

    pub fn kd_config(&self) -> KdConfig {
        KdConfig {
            alpha: self.effective_alpha(),
            tau: self.tau,
            reduction: Reduction::Mean,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            base_lr: self.base_lr,
            total_iters: self.total_iters,
            warmup_frac: self.warmup_frac,
        }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            weight_decay: self.weight_decay,
            ..AdamHyper::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !self.override_alpha && a != self.method.default_alpha() {
                return Err(Error::Config(format!(
                    "{} uses alpha = {}; pass the alpha override to train with alpha = {a}",
                    self.method,
                    self.method.default_alpha()
                )));
            }
        }
        self.kd_config().validate()?;
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::Config(format!(
                "warmup fraction {} outside (0, 1)",
                self.warmup_frac
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.base_lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        self.model.validate()
    }
}

/// One pre-featurized training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub pair_id: String,
    pub language: Language,
    pub fq: FeatureVector,
    pub fs: FeatureVector,
    pub teacher: Option<Logits>,
    pub gold: Option<bool>,
}

/// Gold-labeled pairs of a dataset, without teacher logits.
pub fn finetune_items(dataset: &As2Dataset, model: &ModelConfig) -> Result<Vec<TrainItem>> {
    let mut items = Vec::with_capacity(dataset.num_pairs());
    for ex in &dataset.examples {
        let labels = ex.gold_labels()?;
        for (i, (c, gold)) in ex.candidates.iter().zip(labels).enumerate() {
            let (fq, fs) = featurize(&ex.question.text, &c.text, model.hash_bits);
            items.push(TrainItem {
                pair_id: ex.pair_id(i),
                language: dataset.language.clone(),
                fq,
                fs,
                teacher: None,
                gold: Some(gold),
            });
        }
    }
    Ok(items)
}

/// Target-side pairs with source-side teacher logits. Labels are dropped
/// unless `keep_labels` is set. Returns the items and the number of pairs
/// skipped for lack of a teacher score.
pub fn distill_items(
    pairs: &[ParallelPair],
    teacher: &TeacherStore,
    mode: Strictness,
    model: &ModelConfig,
    keep_labels: bool,
) -> Result<(Vec<TrainItem>, usize)> {
    let mut lookup = TeacherLookup::new(teacher, mode);
    let mut items = Vec::with_capacity(pairs.len());
    for p in pairs {
        let Some(z) = lookup.logits(&p.pair_id)? else {
            continue;
        };
        let (fq, fs) = featurize(&p.target.question, &p.target.sentence, model.hash_bits);
        items.push(TrainItem {
            pair_id: p.pair_id.clone(),
            language: p.target.language.clone(),
            fq,
            fs,
            teacher: Some(z),
            gold: if keep_labels { p.gold } else { None },
        });
    }
    if !pairs.is_empty() && lookup.skipped as f64 > MAX_SKIP_FRACTION * pairs.len() as f64 {
        return Err(Error::Data(format!(
            "{} of {} pairs have no teacher score (limit {:.0}%)",
            lookup.skipped,
            pairs.len(),
            MAX_SKIP_FRACTION * 100.0
        )));
    }
    if lookup.skipped > 0 {
        log::warn!(
            "skipped {} of {} pairs without teacher scores",
            lookup.skipped,
            pairs.len()
        );
    }
    Ok((items, lookup.skipped))
}

/// Concatenates per-language pair pools. Pair ids must be unique overall.
pub fn multilingual_mix(collections: Vec<Vec<TrainItem>>) -> Result<Vec<TrainItem>> {
    if collections.is_empty() {
        return Err(Error::InvalidInput("nothing to mix".into()));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(collections.iter().map(Vec::len).sum());
    for item in collections.into_iter().flatten() {
        if !seen.insert(item.pair_id.clone()) {
            return Err(Error::Data(format!(
                "pair id `{}` appears in more than one input",
                item.pair_id
            )));
        }
        out.push(item);
    }
    Ok(out)
}

/// Picks the pool for `selection` from per-language collections.
pub fn select_languages(
    collections: Vec<(Language, Vec<TrainItem>)>,
    selection: &LanguageSelection,
) -> Result<Vec<TrainItem>> {
    match selection {
        LanguageSelection::All => multilingual_mix(collections.into_iter().map(|(_, c)| c).collect()),
        LanguageSelection::Single(lang) => {
            let mut matching: Vec<Vec<TrainItem>> = collections
                .into_iter()
                .filter(|(l, _)| l == lang)
                .map(|(_, c)| c)
                .collect();
            if matching.is_empty() {
                return Err(Error::Config(format!("no training data for language {lang}")));
            }
            if matching.len() == 1 {
                Ok(matching.pop().unwrap())
            } else {
                multilingual_mix(matching)
            }
        }
    }
}

/// Epoch-wise shuffled index stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    len: usize,
}

const SAMPLER_STREAM: u64 = 1;

impl Sampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        Sampler {
            rng,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            len,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Scores pairs with a trained student.
pub struct StudentScorer<'a> {
    pub params: &'a StudentParams,
}

impl PairScorer for StudentScorer<'_> {
    fn score(&self, question: &Question, candidate: &Candidate) -> Result<f64> {
        let (fq, fs) = featurize(&question.text, &candidate.text, self.params.config.hash_bits);
        Ok(crate::distill::prob_pos(forward(self.params, &fq, &fs)?))
    }
}

pub fn evaluate_student(params: &StudentParams, dataset: &As2Dataset, opts: EvalOptions) -> Result<EvalReport> {
    evaluate_dataset(dataset, &StudentScorer { params }, opts)
}

/// Owns parameters, optimizer state and sampler for one run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    kd: KdConfig,
    items: &'a [TrainItem],
    params: StudentParams,
    optim: OptimState,
    sampler: Sampler,
    iteration: usize,
    grads: Gradients,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<f64>,
    pub evals: Vec<(usize, EvalReport)>,
}

impl<'a> Trainer<'a> {
    /// Starts a run, from `init` when given and otherwise from the seeded
    /// initialization.
    pub fn new(cfg: TrainConfig, items: &'a [TrainItem], init: Option<StudentParams>) -> Result<Self> {
        cfg.validate()?;
        let params = match init {
            Some(p) => {
                if p.config != cfg.model {
                    return Err(Error::Config("initial parameters do not match the model config".into()));
                }
                p
            }
            None => StudentParams::init_from_seed(cfg.model, cfg.seed)?,
        };
        let optim = OptimState::new(&params);
        let sampler = Sampler::new(items.len(), cfg.seed);
        Self::assemble(cfg, items, params, optim, sampler, 0)
    }

    fn assemble(
        cfg: TrainConfig,
        items: &'a [TrainItem],
        params: StudentParams,
        optim: OptimState,
        sampler: Sampler,
        iteration: usize,
    ) -> Result<Self> {
        let kd = cfg.kd_config();
        if cfg.total_iters > iteration && items.is_empty() {
            return Err(Error::Data("no training pairs".into()));
        }
        for item in items {
            if kd.alpha > 0.0 && item.gold.is_none() {
                return Err(Error::Data(format!("pair `{}` has no gold label", item.pair_id)));
            }
            if kd.alpha < 1.0 && item.teacher.is_none() {
                return Err(Error::MissingTeacher(item.pair_id.clone()));
            }
        }
        let grads = Gradients::zeros(&cfg.model);
        Ok(Trainer {
            cfg,
            kd,
            items,
            params,
            optim,
            sampler,
            iteration,
            grads,
        })
    }

    /// Continues a checkpointed run on the same items.
    pub fn resume(checkpoint: Checkpoint, items: &'a [TrainItem]) -> Result<Self> {
        let digest = items_digest(items);
        if digest != checkpoint.data_digest {
            return Err(Error::Data("training data differs from the checkpointed run".into()));
        }
        checkpoint.config.validate()?;
        Self::assemble(
            checkpoint.config,
            items,
            checkpoint.params,
            checkpoint.optim,
            checkpoint.sampler,
            checkpoint.iteration,
        )
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &StudentParams {
        &self.params
    }

    pub fn into_params(self) -> StudentParams {
        self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.total_iters
    }

    /// Mean loss of a fixed set of items under the current parameters.
    pub fn loss_on(&self, items: &[TrainItem]) -> Result<f64> {
        let mut total = 0.0;
        for item in items {
            let z = forward(&self.params, &item.fq, &item.fs)?;
            total += kd_loss(z, item.teacher, item.gold, &self.kd)?;
        }
        Ok(total / items.len().max(1) as f64)
    }

    /// One optimizer update. Returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        if self.is_done() {
            return Err(Error::InvalidInput(format!(
                "run already finished at iteration {}",
                self.iteration
            )));
        }
        let b = self.cfg.batch_size;
        let scale = match self.kd.reduction {
            Reduction::Mean => 1.0 / b as f64,
            Reduction::Sum => 1.0,
        };
        self.grads.clear();
        let mut loss = 0.0;
        for _ in 0..b {
            let item = &self.items[self.sampler.next_index()];
            let cache = forward_cached(&self.params, &item.fq, &item.fs)?;
            loss += kd_loss(cache.logits, item.teacher, item.gold, &self.kd)?;
            let g = kd_loss_grad(cache.logits, item.teacher, item.gold, &self.kd)?;
            backward_cached(
                &self.params,
                &item.fq,
                &item.fs,
                &cache,
                [g[0] * scale, g[1] * scale],
                &mut self.grads,
            )?;
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {}",
                self.iteration + 1
            )));
        }
        let lr = lr_at(self.iteration + 1, &self.cfg.schedule())?;
        adamw_step(&mut self.params, &self.grads, &mut self.optim, lr, &self.cfg.adam()).map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("iteration {}: {m}", self.iteration + 1)),
            other => other,
        })?;
        self.iteration += 1;
        Ok(loss)
    }

    /// Trains up to `until` iterations (capped at the configured total).
    pub fn run_until(&mut self, until: usize, dev: Option<&As2Dataset>, log: &mut TrainLog) -> Result<()> {
        let until = until.min(self.cfg.total_iters);
        while self.iteration < until {
            log.losses.push(self.step()?);
            if let (Some(k), Some(dev)) = (self.cfg.eval_every, dev) {
                if self.iteration.is_multiple_of(k) {
                    let report = evaluate_student(&self.params, dev, EvalOptions::default())?;
                    log::info!(
                        "iteration {}: dev P@1 {:.4} MAP {:.4} MRR {:.4}",
                        self.iteration,
                        report.p_at_1,
                        report.map,
                        report.mrr
                    );
                    log.evals.push((self.iteration, report));
                }
            }
        }
        Ok(())
    }

    pub fn run(&mut self, dev: Option<&As2Dataset>) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        self.run_until(self.cfg.total_iters, dev, &mut log)?;
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            iteration: self.iteration,
            params: self.params.clone(),
            optim: self.optim.clone(),
            sampler: self.sampler.clone(),
            data_digest: items_digest(self.items),
        }
    }
}

/// Stable digest of a training pool, stored in checkpoints.
pub fn items_digest(items: &[TrainItem]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for item in items {
        h.update(item.pair_id.as_bytes());
        h.update([0u8]);
        h.update([match item.gold {
            None => 2u8,
            Some(g) => g as u8,
        }]);
        if let Some(z) = item.teacher {
            h.update(z.0[0].to_le_bytes());
            h.update(z.0[1].to_le_bytes());
        }
        for f in [&item.fq, &item.fs] {
            for &(i, c) in f.entries() {
                h.update(i.to_le_bytes());
                h.update(c.to_le_bytes());
            }
            h.update([0xff]);
        }
    }
    hex::encode(h.finalize())
}

/// Trains on pre-built items for the full configured length.
pub fn train_items(items: &[TrainItem], cfg: &TrainConfig, init: Option<StudentParams>) -> Result<StudentParams> {
    let mut t = Trainer::new(cfg.clone(), items, init)?;
    t.run(None)?;
    Ok(t.into_params())
}

/// Cross-entropy on gold labels.
pub fn train_finetune(dataset: &As2Dataset, cfg: &TrainConfig) -> Result<StudentParams> {
    if cfg.method != Method::Finetune {
        return Err(Error::Config(format!(
            "train_finetune called with method {}",
            cfg.method
        )));
    }
    let items = finetune_items(dataset, &cfg.model)?;
    train_items(&items, cfg, None)
}

/// Distillation of source-side teacher logits into a student reading the target side.
pub fn train_clkd(
    pairs: &[ParallelPair],
    teacher: &TeacherStore,
    cfg: &TrainConfig,
    init: Option<StudentParams>,
) -> Result<StudentParams> {
    if cfg.method != Method::Clkd {
        return Err(Error::Config(format!("train_clkd called with method {}", cfg.method)));
    }
    let keep_labels = cfg.effective_alpha() > 0.0;
    let (items, _) = distill_items(pairs, teacher, cfg.strictness, &cfg.model, keep_labels)?;
    train_items(&items, cfg, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    pub(crate) fn tiny_model() -> ModelConfig {
        ModelConfig {
            hash_bits: 10,
            embed_dim: 8,
            hidden: 16,
            ..ModelConfig::default()
        }
    }

    fn cfg(method: Method, iters: usize) -> TrainConfig {
        TrainConfig {
            method,
            total_iters: iters,
            batch_size: 8,
            model: tiny_model(),
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn corpus() -> crate::synth::SynthCorpus {
        generate(
            &SynthConfig {
                questions: 12,
                ..SynthConfig::default()
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn alpha_guard() {
        let mut c = cfg(Method::Clkd, 10);
        c.alpha = Some(0.5);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.override_alpha = true;
        c.validate().unwrap();
        assert_eq!(c.effective_alpha(), 0.5);
        let mut f = cfg(Method::Finetune, 10);
        f.alpha = Some(1.0);
        f.validate().unwrap();
        assert_eq!(f.effective_alpha(), 1.0);
        assert_eq!(cfg(Method::Clkd, 1).effective_alpha(), 0.0);
    }

    #[test]
    fn language_selection_parses() {
        assert_eq!("all".parse::<LanguageSelection>().unwrap(), LanguageSelection::All);
        assert_eq!(
            "single:bn".parse::<LanguageSelection>().unwrap(),
            LanguageSelection::Single(Language::new("bn").unwrap())
        );
        assert!("bn".parse::<LanguageSelection>().is_err());
    }

    #[test]
    fn zero_iterations_returns_init() {
        let c = corpus();
        let conf = cfg(Method::Finetune, 0);
        let trained = train_finetune(&c.target, &conf).unwrap();
        assert_eq!(trained, StudentParams::init_from_seed(conf.model, conf.seed).unwrap());
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = Sampler::new(7, 3);
        for _ in 0..4 {
            let mut seen: Vec<usize> = (0..7).map(|_| s.next_index()).collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
        assert_eq!(s.epoch(), 4);
    }

    #[test]
    fn mixing_rejects_duplicates_and_keeps_tags() {
        let c = corpus();
        let items = finetune_items(&c.target, &tiny_model()).unwrap();
        assert!(multilingual_mix(vec![items.clone(), items.clone()]).is_err());
        let en = finetune_items(&c.source, &tiny_model()).unwrap();
        let en: Vec<TrainItem> = en
            .into_iter()
            .map(|mut i| {
                i.pair_id = format!("en-{}", i.pair_id);
                i
            })
            .collect();
        let mixed = multilingual_mix(vec![items.clone(), en]).unwrap();
        assert_eq!(mixed.len(), 2 * items.len());
        let langs: HashSet<_> = mixed.iter().map(|i| i.language.clone()).collect();
        assert_eq!(langs.len(), 2);
        assert_eq!(multilingual_mix(vec![items.clone()]).unwrap(), items);
    }

    #[test]
    fn lenient_skips_are_bounded() {
        let c = corpus();
        let mut partial = TeacherStore::default();
        let n = c.pairs.len();
        for s in c.teacher.iter().take(n - n / 20) {
            partial.insert(s.clone()).unwrap();
        }
        let (items, skipped) = distill_items(&c.pairs, &partial, Strictness::Lenient, &tiny_model(), false).unwrap();
        assert_eq!(skipped, n / 20);
        assert_eq!(items.len() + skipped, n);
        assert!(distill_items(&c.pairs, &partial, Strictness::Strict, &tiny_model(), false).is_err());

        let mut sparse = TeacherStore::default();
        for s in c.teacher.iter().take(n / 2) {
            sparse.insert(s.clone()).unwrap();
        }
        assert!(matches!(
            distill_items(&c.pairs, &sparse, Strictness::Lenient, &tiny_model(), false),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn finetune_requires_labels() {
        let c = corpus();
        assert!(train_finetune(&c.target.without_labels(), &cfg(Method::Finetune, 5)).is_err());
    }

    #[test]
    fn loss_decreases_on_fifty_pairs() {
        let c = corpus();
        let model = ModelConfig::default();
        let items: Vec<TrainItem> = finetune_items(&c.target, &model)
            .unwrap()
            .into_iter()
            .take(50)
            .collect();
        // full batch; 200 planned iterations so the schedule is still nonzero at step 100
        let conf = TrainConfig {
            batch_size: 50,
            model,
            ..cfg(Method::Finetune, 200)
        };
        let mut t = Trainer::new(conf, &items, None).unwrap();
        let mut prev = t.loss_on(&items).unwrap();
        for _ in 0..100 {
            t.step().unwrap();
            let now = t.loss_on(&items).unwrap();
            assert!(
                now < prev,
                "loss went from {prev} to {now} at iteration {}",
                t.iteration()
            );
            prev = now;
        }
    }

    #[test]
    fn non_finite_loss_names_iteration() {
        let c = corpus();
        let conf = cfg(Method::Clkd, 5);
        let (mut items, _) = distill_items(&c.pairs, &c.teacher, Strictness::Strict, &conf.model, false).unwrap();
        let mut t = Trainer::new(conf.clone(), &items, None).unwrap();
        t.step().unwrap();
        let mut params = t.into_params();
        params.w2[0] = f64::NAN;
        items.truncate(8);
        let mut t = Trainer::new(conf, &items, Some(params)).unwrap();
        let err = t.step().unwrap_err();
        assert!(matches!(err, Error::Numeric(_) | Error::InvalidInput(_)), "{err}");
    }
}
