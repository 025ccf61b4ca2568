//! Machine-translation providers, a caching translator, parallel-pair
//! construction and the translate-then-teacher baseline.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::as2::{pair_id, As2Dataset, Language};
use crate::data::jsonl::{append_records, read_records, write_records};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, EvalOptions, EvalReport};
use crate::teacher::{PairText, TeacherScorer};

pub trait MtProvider: Send + Sync {
    fn name(&self) -> &str;
    fn supports(&self, src: &Language, tgt: &Language) -> bool;
    fn max_batch(&self) -> usize {
        64
    }
    fn translate(&self, texts: &[String], src: &Language, tgt: &Language) -> Result<Vec<String>>;
}

/// Returns its input. Accepts every language pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl MtProvider for IdentityProvider {
    fn name(&self) -> &str {
        "identity"
    }

    fn supports(&self, _: &Language, _: &Language) -> bool {
        true
    }

    fn translate(&self, texts: &[String], _: &Language, _: &Language) -> Result<Vec<String>> {
        Ok(texts.to_vec())
    }
}

/// Word-by-word substitution over whitespace tokens. Unknown words pass through.
#[derive(Debug, Clone)]
pub struct DictionaryProvider {
    name: String,
    src: Language,
    tgt: Language,
    words: HashMap<String, String>,
}

impl DictionaryProvider {
    pub fn new(
        name: impl Into<String>,
        src: Language,
        tgt: Language,
        words: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        DictionaryProvider {
            name: name.into(),
            src,
            tgt,
            words: words.into_iter().collect(),
        }
    }

    /// The reverse direction. Fails if two words share a translation.
    pub fn inverse(&self) -> Result<Self> {
        let mut words = HashMap::with_capacity(self.words.len());
        for (k, v) in &self.words {
            if words.insert(v.clone(), k.clone()).is_some() {
                return Err(Error::Config(format!(
                    "dictionary `{}` is not invertible at `{v}`",
                    self.name
                )));
            }
        }
        Ok(DictionaryProvider {
            name: format!("{}-inverse", self.name),
            src: self.tgt.clone(),
            tgt: self.src.clone(),
            words,
        })
    }

    /// Reads a two-column TSV of `source<TAB>target` words.
    pub fn from_tsv(name: impl Into<String>, src: Language, tgt: Language, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut words = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((a, b)) = line.split_once('\t') else {
                return Err(Error::parse(path, i + 1, "expected `source<TAB>target`"));
            };
            words.insert(a.trim().to_string(), b.trim().to_string());
        }
        Ok(Self::new(name, src, tgt, words))
    }

    pub fn translate_text(&self, text: &str) -> String {
        text.split_whitespace()
            .map(|w| self.words.get(w).map(String::as_str).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl MtProvider for DictionaryProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports(&self, src: &Language, tgt: &Language) -> bool {
        *src == self.src && *tgt == self.tgt
    }

    fn translate(&self, texts: &[String], _: &Language, _: &Language) -> Result<Vec<String>> {
        Ok(texts.iter().map(|t| self.translate_text(t)).collect())
    }
}

/// One line of the append-only translation cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub src: Language,
    pub tgt: Language,
    pub provider: String,
    pub input_hash: String,
    pub input: String,
    pub output: String,
}

type CacheKey = (String, Language, Language, String);

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy)]
pub struct TranslatorOptions {
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for TranslatorOptions {
    fn default() -> Self {
        TranslatorOptions {
            retries: 3,
            backoff: Duration::from_millis(50),
            max_in_flight: 4,
        }
    }
}

/// Caching, batching front end over a provider.
pub struct Translator<'p> {
    provider: &'p dyn MtProvider,
    options: TranslatorOptions,
    cache: Mutex<HashMap<CacheKey, String>>,
    cache_file: Option<PathBuf>,
    calls: AtomicUsize,
}

impl<'p> Translator<'p> {
    pub fn new(provider: &'p dyn MtProvider) -> Self {
        Translator {
            provider,
            options: TranslatorOptions::default(),
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_options(mut self, options: TranslatorOptions) -> Self {
        self.options = options;
        self
    }

    /// Loads and appends to a JSONL cache at `path`. Missing files start empty.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self> {
        if path.exists() {
            let records: Vec<(usize, CacheRecord)> = read_records(path)?;
            let cache = self.cache.get_mut().unwrap();
            for (line, r) in records {
                if text_hash(&r.input) != r.input_hash {
                    return Err(Error::parse(path, line, "input_hash does not match input"));
                }
                cache.insert((r.provider, r.src, r.tgt, r.input_hash), r.output);
            }
        }
        self.cache_file = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn provider(&self) -> &dyn MtProvider {
        self.provider
    }

    /// Number of provider invocations so far, retries included.
    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn key(&self, src: &Language, tgt: &Language, text: &str) -> CacheKey {
        (
            self.provider.name().to_string(),
            src.clone(),
            tgt.clone(),
            text_hash(text),
        )
    }

    fn call_with_retry(&self, texts: &[String], src: &Language, tgt: &Language) -> Result<Vec<String>> {
        let mut delay = self.options.backoff;
        let mut last = None;
        for attempt in 0..=self.options.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.translate(texts, src, tgt) {
                Ok(out) if out.len() == texts.len() => return Ok(out),
                Ok(out) => {
                    last = Some(Error::Translation(format!(
                        "provider `{}` returned {} outputs for {} inputs",
                        self.provider.name(),
                        out.len(),
                        texts.len()
                    )))
                }
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Translation(format!(
            "provider `{}` failed after {} retries: {}",
            self.provider.name(),
            self.options.retries,
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    /// Translates `texts` in order. Cached inputs never reach the provider.
    pub fn translate_batch(&self, texts: &[String], src: &Language, tgt: &Language) -> Result<Vec<String>> {
        if !self.provider.supports(src, tgt) {
            return Err(Error::Translation(format!(
                "provider `{}` does not support {src} -> {tgt}",
                self.provider.name()
            )));
        }
        let mut todo: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut seen = HashSet::new();
            for t in texts {
                if !cache.contains_key(&self.key(src, tgt, t)) && seen.insert(t.as_str()) {
                    todo.push(t.clone());
                }
            }
        }

        let chunk = self.provider.max_batch().max(1);
        let chunks: Vec<&[String]> = todo.chunks(chunk).collect();
        for wave in chunks.chunks(self.options.max_in_flight.max(1)) {
            let results: Vec<Result<Vec<String>>> = thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|c| s.spawn(move || self.call_with_retry(c, src, tgt)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("translation worker panicked"))
                    .collect()
            });
            for (inputs, outputs) in wave.iter().zip(results) {
                self.store(inputs, &outputs?, src, tgt)?;
            }
        }

        let cache = self.cache.lock().unwrap();
        Ok(texts.iter().map(|t| cache[&self.key(src, tgt, t)].clone()).collect())
    }

    fn store(&self, inputs: &[String], outputs: &[String], src: &Language, tgt: &Language) -> Result<()> {
        let mut cache = self.cache.lock().unwrap();
        let records: Vec<CacheRecord> = inputs
            .iter()
            .zip(outputs)
            .map(|(i, o)| CacheRecord {
                src: src.clone(),
                tgt: tgt.clone(),
                provider: self.provider.name().to_string(),
                input_hash: text_hash(i),
                input: i.clone(),
                output: o.clone(),
            })
            .collect();
        if let Some(path) = &self.cache_file {
            append_records(path, &records)?;
        }
        for r in records {
            cache.insert((r.provider, r.src, r.tgt, r.input_hash), r.output);
        }
        Ok(())
    }
}

pub fn translate_batch(
    translator: &Translator<'_>,
    texts: &[String],
    src: &Language,
    tgt: &Language,
) -> Result<Vec<String>> {
    translator.translate_batch(texts, src, tgt)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSide {
    pub question: String,
    pub sentence: String,
    pub language: Language,
}

/// The same (question, sentence) pair in a teacher-side and a student-side language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub pair_id: String,
    pub source: PairSide,
    pub target: PairSide,
    pub gold: Option<bool>,
}

impl ParallelPair {
    pub fn strip_label(mut self) -> Self {
        self.gold = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Source is the English translation, target is the original text.
    ToEnglish,
    /// Source is the original English, target is its translation into the given language.
    FromEnglish(Language),
}

/// Translates questions and sentences separately and pairs each translated
/// pair with its original.
pub fn build_parallel_dataset(
    dataset: &As2Dataset,
    translator: &Translator<'_>,
    direction: &Direction,
) -> Result<Vec<ParallelPair>> {
    let (src, tgt) = match direction {
        Direction::ToEnglish => (dataset.language.clone(), Language::english()),
        Direction::FromEnglish(target) => {
            if dataset.language != Language::english() {
                return Err(Error::InvalidInput(format!(
                    "from_english needs an English dataset, got {}",
                    dataset.language
                )));
            }
            (Language::english(), target.clone())
        }
    };
    let questions: Vec<String> = dataset.examples.iter().map(|e| e.question.text.clone()).collect();
    let sentences: Vec<String> = dataset
        .examples
        .iter()
        .flat_map(|e| e.candidates.iter().map(|c| c.text.clone()))
        .collect();
    let context = |what: &str, e: Error| Error::Translation(format!("translating {what} of {}: {e}", dataset.language));
    let q_out = translator
        .translate_batch(&questions, &src, &tgt)
        .map_err(|e| context("questions", e))?;
    let s_out = translator
        .translate_batch(&sentences, &src, &tgt)
        .map_err(|e| context("sentences", e))?;

    let mut pairs = Vec::with_capacity(sentences.len());
    let mut s_iter = s_out.into_iter();
    for (ex, q_tr) in dataset.examples.iter().zip(q_out) {
        for c in &ex.candidates {
            let s_tr = s_iter.next().expect("one translation per sentence");
            let original = PairSide {
                question: ex.question.text.clone(),
                sentence: c.text.clone(),
                language: dataset.language.clone(),
            };
            let translated = PairSide {
                question: q_tr.clone(),
                sentence: s_tr,
                language: tgt.clone(),
            };
            let (source, target) = match direction {
                Direction::ToEnglish => (translated, original),
                Direction::FromEnglish(_) => (original, translated),
            };
            pairs.push(ParallelPair {
                pair_id: pair_id(&ex.question.id, &c.id),
                source,
                target,
                gold: c.gold,
            });
        }
    }
    Ok(pairs)
}

pub fn write_parallel_jsonl(pairs: &[ParallelPair], path: &Path) -> Result<()> {
    write_records(path, pairs)
}

pub fn read_parallel_jsonl(path: &Path) -> Result<Vec<ParallelPair>> {
    let records: Vec<(usize, ParallelPair)> = read_records(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, p) in records {
        if !seen.insert(p.pair_id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate pair id `{}`", p.pair_id)));
        }
        out.push(p);
    }
    Ok(out)
}

/// Translates every question and candidate to English, scores the
/// translations with the teacher and evaluates the resulting ranking.
pub fn mt_teacher_baseline(
    dataset: &As2Dataset,
    translator: &Translator<'_>,
    teacher: &dyn TeacherScorer,
    opts: EvalOptions,
) -> Result<EvalReport> {
    for ex in &dataset.examples {
        ex.gold_labels()?;
    }
    let pairs = build_parallel_dataset(dataset, translator, &Direction::ToEnglish)?;
    let texts: Vec<PairText> = pairs
        .iter()
        .map(|p| PairText {
            id: p.pair_id.clone(),
            question: p.source.question.clone(),
            sentence: p.source.sentence.clone(),
        })
        .collect();
    let scores: HashMap<String, f64> = teacher
        .score_pairs(&texts)?
        .into_iter()
        .map(|s| (s.pair_id, s.prob_pos))
        .collect();
    let scorer = |q: &crate::as2::Question, c: &crate::as2::Candidate| -> Result<f64> {
        let id = pair_id(&q.id, &c.id);
        scores.get(&id).copied().ok_or(Error::MissingTeacher(id))
    };
    evaluate_dataset(dataset, &scorer, opts)
}
