use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Subcommand};
use clkd_core::as2::{As2Dataset, Language, Split};
use clkd_core::data::{
    convert_qa_dataset, filter_train_all_negative, parse_wikiqa_tsv, read_jsonl, read_qadoc_jsonl, split_train_dev,
    splitter_by_name, write_jsonl,
};
use clkd_core::distill::Logits;
use clkd_core::error::{Error, Result};
use clkd_core::metrics::EvalOptions;
use clkd_core::synth::{generate, SynthConfig};
use clkd_core::teacher::{
    load_scores, PairText, Provenance, RemoteConfig, RemoteTeacher, TeacherScore, TeacherScorer, TeacherStore,
};
use clkd_core::translation::{
    build_parallel_dataset, mt_teacher_baseline, read_parallel_jsonl, write_parallel_jsonl, Direction, ParallelPair,
};

use crate::provider::{parse_provider, translator};

#[derive(Subcommand)]
pub enum Convert {
    /// WikiQA TSV (5 or 7 columns).
    Wikiqa {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "en")]
        language: String,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Question/document/answer-span JSONL.
    Qadoc {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "en")]
        language: String,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value = "rule")]
        splitter: String,
    },
}

#[derive(Args)]
pub struct FilterTrain {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    dev_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    dev_out: PathBuf,
}

#[derive(Args)]
pub struct Translate {
    #[arg(long)]
    input: PathBuf,
    /// `identity`, `dictionary:<tsv>` or `synthetic[:vocab[:seed]]`.
    #[arg(long)]
    provider: String,
    /// `to-english`, or `from-english:<code>`.
    #[arg(long, default_value = "to-english")]
    direction: String,
    /// ParallelPair JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Also write the translated side as an AS2 dataset.
    #[arg(long)]
    dataset_out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Teacher {
    /// Score the source side of parallel pairs through a scoring endpoint.
    Score {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        max_batch: usize,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        /// Name recorded in the provenance sidecar.
        #[arg(long, default_value = "")]
        teacher_name: String,
    },
    /// Validate and normalize existing scores (JSONL, or TSV `id<TAB>z_neg<TAB>z_pos`).
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        teacher_name: String,
        #[arg(long, default_value = "")]
        dataset: String,
    },
}

#[derive(Subcommand)]
pub enum Baseline {
    /// Translate test inputs to English and rank them with the English teacher.
    MtTeacher {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        provider: String,
        /// Precomputed teacher scores keyed by pair id.
        #[arg(long, conflicts_with = "endpoint")]
        teacher: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        include_all_negative: bool,
    },
}

#[derive(Subcommand)]
pub enum Synth {
    /// Write source/target datasets, parallel pairs and oracle teacher scores.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML with synthetic benchmark settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        questions: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        permutation_seed: Option<u64>,
        #[arg(long)]
        split: Option<String>,
    },
}

pub fn language(code: &str) -> Result<Language> {
    Language::new(code).map_err(|e| Error::Config(e.to_string()))
}

pub fn split_of(s: &str) -> Result<Split> {
    s.parse().map_err(|e: Error| Error::Config(e.to_string()))
}

pub fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Pretty JSON on stdout. A closed pipe (`| head`) is not an error.
pub fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("writing stdout", e)),
        _ => Ok(()),
    }
}

fn summary(ds: &As2Dataset) -> String {
    format!(
        "{} questions, {} pairs, {} positives",
        ds.examples.len(),
        ds.num_pairs(),
        ds.num_positives()
    )
}

pub fn convert(c: Convert) -> Result<()> {
    let (ds, out) = match c {
        Convert::Wikiqa {
            input,
            out,
            language: l,
            split,
        } => (parse_wikiqa_tsv(&input, language(&l)?, split_of(&split)?)?, out),
        Convert::Qadoc {
            input,
            out,
            language: l,
            split,
            splitter,
        } => {
            let splitter = splitter_by_name(&splitter)?;
            let instances = read_qadoc_jsonl(&input)?;
            let (ds, skipped) = convert_qa_dataset(&instances, splitter.as_ref(), split_of(&split)?, language(&l)?)?;
            if skipped > 0 {
                log::warn!("skipped {skipped} instances without sentences");
            }
            (ds, out)
        }
    };
    write_jsonl(&ds, &out)?;
    log::info!("wrote {}: {}", out.display(), summary(&ds));
    Ok(())
}

pub fn filter_train(a: FilterTrain) -> Result<()> {
    let ds = filter_train_all_negative(&read_jsonl(&a.input)?)?;
    write_jsonl(&ds, &a.out)?;
    log::info!("wrote {}: {}", a.out.display(), summary(&ds));
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let (train, dev) = split_train_dev(&read_jsonl(&a.input)?, a.dev_frac, a.seed)?;
    write_jsonl(&train, &a.train_out)?;
    write_jsonl(&dev, &a.dev_out)?;
    log::info!("train: {}; dev: {}", summary(&train), summary(&dev));
    Ok(())
}

fn direction(choice: &str) -> Result<Direction> {
    match choice {
        "to-english" => Ok(Direction::ToEnglish),
        _ => match choice.strip_prefix("from-english:") {
            Some(code) => Ok(Direction::FromEnglish(language(code)?)),
            None => Err(Error::Config(format!(
                "direction must be `to-english` or `from-english:<code>`, got `{choice}`"
            ))),
        },
    }
}

/// The translated side of `pairs` in the question/candidate layout of `ds`.
fn translated_dataset(ds: &As2Dataset, pairs: &[ParallelPair], dir: &Direction) -> Result<As2Dataset> {
    let mut out = ds.clone();
    let mut it = pairs.iter();
    for ex in &mut out.examples {
        for c in &mut ex.candidates {
            let p = it.next().expect("one pair per candidate");
            let side = match dir {
                Direction::ToEnglish => &p.source,
                Direction::FromEnglish(_) => &p.target,
            };
            ex.question.text = side.question.clone();
            ex.question.language = side.language.clone();
            c.text = side.sentence.clone();
        }
    }
    out.language = match dir {
        Direction::ToEnglish => Language::english(),
        Direction::FromEnglish(l) => l.clone(),
    };
    out.validate()?;
    Ok(out)
}

pub fn translate(a: Translate) -> Result<()> {
    let ds = read_jsonl(&a.input)?;
    let dir = direction(&a.direction)?;
    let (src, tgt) = match &dir {
        Direction::ToEnglish => (ds.language.clone(), Language::english()),
        Direction::FromEnglish(l) => (Language::english(), l.clone()),
    };
    let provider = parse_provider(&a.provider, &src, &tgt)?;
    let translator = translator(provider.as_ref())?;
    let pairs = build_parallel_dataset(&ds, &translator, &dir)?;
    write_parallel_jsonl(&pairs, &a.out)?;
    log::info!(
        "wrote {} pairs to {} ({} provider calls)",
        pairs.len(),
        a.out.display(),
        translator.provider_calls()
    );
    if let Some(path) = a.dataset_out {
        write_jsonl(&translated_dataset(&ds, &pairs, &dir)?, &path)?;
    }
    Ok(())
}

fn now() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

fn read_tsv_scores(path: &Path) -> Result<TeacherStore> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut store = TeacherStore::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Data(format!("{}:{}: {m}", path.display(), i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected `pair_id<TAB>z_neg<TAB>z_pos`"));
        }
        let z: Vec<f64> = f[1..]
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(&format!("bad logit `{v}`"))))
            .collect::<Result<_>>()?;
        let logits = Logits::new(z[0], z[1]).map_err(|e| bad(&e.to_string()))?;
        store
            .insert(TeacherScore::from_logits(f[0].trim(), logits)?)
            .map_err(|e| bad(&e.to_string()))?;
    }
    Ok(store)
}

pub fn teacher(t: Teacher) -> Result<()> {
    match t {
        Teacher::Score {
            pairs,
            endpoint,
            out,
            max_batch,
            retries,
            teacher_name,
        } => {
            let parallel = read_parallel_jsonl(&pairs)?;
            let texts: Vec<PairText> = parallel
                .iter()
                .map(|p| PairText {
                    id: p.pair_id.clone(),
                    question: p.source.question.clone(),
                    sentence: p.source.sentence.clone(),
                })
                .collect();
            let remote = RemoteTeacher::new(RemoteConfig {
                endpoint: endpoint.clone(),
                max_batch,
                retries,
                ..RemoteConfig::default()
            })?;
            let mut store = TeacherStore::from_scores(remote.score_all(&texts)?)?;
            store.provenance = Provenance {
                teacher: if teacher_name.is_empty() {
                    endpoint
                } else {
                    teacher_name
                },
                dataset: pairs.display().to_string(),
                created: now(),
            };
            store.save(&out)?;
            log::info!("wrote {} teacher scores to {}", store.len(), out.display());
        }
        Teacher::Import {
            input,
            out,
            teacher_name,
            dataset,
        } => {
            let mut store = if input.extension().is_some_and(|e| e == "tsv") {
                read_tsv_scores(&input)?
            } else {
                load_scores(&input)?
            };
            if !teacher_name.is_empty() || !dataset.is_empty() {
                store.provenance = Provenance {
                    teacher: teacher_name,
                    dataset,
                    created: now(),
                };
            }
            store.save(&out)?;
            log::info!("wrote {} teacher scores to {}", store.len(), out.display());
        }
    }
    Ok(())
}

pub fn baseline(b: Baseline) -> Result<()> {
    let Baseline::MtTeacher {
        data,
        provider,
        teacher,
        endpoint,
        include_all_negative,
    } = b;
    let ds = read_jsonl(&data)?;
    let provider = parse_provider(&provider, &ds.language, &Language::english())?;
    let translator = translator(provider.as_ref())?;
    let scorer: Box<dyn TeacherScorer> = match (teacher, endpoint) {
        (Some(path), _) => Box::new(load_scores(&path)?),
        (None, Some(url)) => Box::new(RemoteTeacher::new(RemoteConfig {
            endpoint: url,
            ..RemoteConfig::default()
        })?),
        (None, None) => return Err(Error::Config("pass --teacher or --endpoint".into())),
    };
    let report = mt_teacher_baseline(&ds, &translator, scorer.as_ref(), EvalOptions { include_all_negative })?;
    print_json(&report)?;
    Ok(())
}

pub fn synth(s: Synth) -> Result<()> {
    let Synth::Generate {
        out,
        seed,
        config,
        questions,
        candidates,
        vocab,
        noise,
        permutation_seed,
        split,
    } = s;
    let mut cfg: SynthConfig = match config {
        Some(path) => {
            let text =
                std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = questions {
        cfg.questions = v;
    }
    if let Some(v) = candidates {
        cfg.candidates = v;
    }
    if let Some(v) = vocab {
        cfg.vocab_size = v;
    }
    if let Some(v) = noise {
        cfg.noise = v;
    }
    if let Some(v) = permutation_seed {
        cfg.permutation_seed = v;
    }
    if let Some(v) = split {
        cfg.split = split_of(&v)?;
    }
    let corpus = generate(&cfg, seed)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_jsonl(&corpus.source, &out.join("source.jsonl"))?;
    write_jsonl(&corpus.target, &out.join("target.jsonl"))?;
    write_parallel_jsonl(&corpus.pairs, &out.join("pairs.jsonl"))?;
    corpus.teacher.save(&out.join("teacher.jsonl"))?;
    write_json(
        &serde_json::json!({ "config": cfg, "seed": seed }),
        &out.join("synth.json"),
    )?;
    log::info!(
        "wrote synthetic corpus to {}: {}",
        out.display(),
        summary(&corpus.target)
    );
    Ok(())
}
