//! Synthetic parallel AS2 corpora with a known oracle teacher.
//!
//! Tokens are pseudo-words. A question is its key token plus a few filler
//! tokens, and a candidate is positive iff it contains the key token.
//! Language B writes token `i` with the surface form of token `perm[i]`.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::as2::{pair_id, As2Dataset, As2Example, Candidate, Language, Question, Split};
use crate::distill::Logits;
use crate::error::{Error, Result};
use crate::teacher::{Provenance, TeacherScore, TeacherStore};
use crate::translation::{DictionaryProvider, PairSide, ParallelPair};

/// Oracle logit magnitude.
pub const ORACLE_MARGIN: f64 = 4.0;
/// The trigram-disjoint lexicon cannot grow much beyond this.
pub const MAX_VOCAB: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub questions: usize,
    pub candidates: usize,
    pub positive_rate: f64,
    pub permutation_seed: u64,
    pub noise: f64,
    /// Share of the vocabulary reserved for question filler words.
    pub filler_frac: f64,
    pub question_fillers: usize,
    pub candidate_len: usize,
    pub source_language: Language,
    pub target_language: Language,
    pub split: Split,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 200,
            questions: 300,
            candidates: 8,
            positive_rate: 0.2,
            permutation_seed: 0,
            noise: 0.0,
            filler_frac: 0.2,
            question_fillers: 1,
            candidate_len: 3,
            source_language: Language::english(),
            target_language: Language::new("xb").expect("valid code"),
            split: Split::Train,
        }
    }
}

impl SynthConfig {
    fn n_fillers(&self) -> usize {
        ((self.vocab_size as f64 * self.filler_frac).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 20 || self.vocab_size > MAX_VOCAB {
            return Err(Error::Config(format!(
                "vocab size {} outside [20, {MAX_VOCAB}]",
                self.vocab_size
            )));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::Config(format!(
                "positive rate {} outside (0, 1)",
                self.positive_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 1]", self.noise)));
        }
        if self.candidates < 1 {
            return Err(Error::Config("at least one candidate per question is required".into()));
        }
        if self.candidate_len < 1 {
            return Err(Error::Config("candidate length must be positive".into()));
        }
        if !(self.filler_frac > 0.0 && self.filler_frac < 1.0) {
            return Err(Error::Config(format!(
                "filler fraction {} outside (0, 1)",
                self.filler_frac
            )));
        }
        let content = self.vocab_size - self.n_fillers();
        if content < self.candidate_len + 1 {
            return Err(Error::Config(format!(
                "{content} content tokens cannot fill candidates of length {}",
                self.candidate_len
            )));
        }
        if self.source_language == self.target_language {
            return Err(Error::Config("source and target languages must differ".into()));
        }
        Ok(())
    }
}

/// Surface forms and the A→B token permutation. Depends only on the vocabulary
/// size and the permutation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    words: Vec<String>,
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

const WORD_LEN: usize = 5;

fn trigrams(word: &[u8]) -> impl Iterator<Item = [u8; 3]> + '_ {
    word.windows(3).map(|w| [w[0], w[1], w[2]])
}

impl Lexicon {
    /// Random lowercase words; no two words share a character trigram.
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c65_7869_636f_6e00);
        let mut used = HashSet::new();
        let mut words = Vec::with_capacity(vocab_size);
        while words.len() < vocab_size {
            let w: Vec<u8> = (0..WORD_LEN).map(|_| rng.random_range(b'a'..=b'z')).collect();
            let grams: Vec<[u8; 3]> = trigrams(&w).collect();
            let distinct: HashSet<_> = grams.iter().collect();
            if distinct.len() == grams.len() && grams.iter().all(|g| !used.contains(g)) {
                used.extend(grams);
                words.push(String::from_utf8(w).expect("ascii"));
            }
        }
        let mut perm: Vec<usize> = (0..vocab_size).collect();
        perm.shuffle(&mut rng);
        let mut inverse = vec![0; vocab_size];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Lexicon { words, perm, inverse }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_a(&self, token: usize) -> &str {
        &self.words[token]
    }

    pub fn word_b(&self, token: usize) -> &str {
        &self.words[self.perm[token]]
    }

    fn render(&self, tokens: &[usize], b_side: bool) -> String {
        tokens
            .iter()
            .map(|&t| if b_side { self.word_b(t) } else { self.word_a(t) })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn map_text(&self, text: &str, table: &[usize]) -> String {
        let index: std::collections::HashMap<&str, usize> =
            self.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        text.split_whitespace()
            .map(|w| index.get(w).map(|&i| self.words[table[i]].as_str()).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn a_to_b(&self, text: &str) -> String {
        self.map_text(text, &self.perm)
    }

    pub fn b_to_a(&self, text: &str) -> String {
        self.map_text(text, &self.inverse)
    }

    /// Exact translator from `src` to `tgt`.
    pub fn provider(&self, src: Language, tgt: Language) -> DictionaryProvider {
        let words = (0..self.len()).map(|t| (self.word_a(t).to_string(), self.word_b(t).to_string()));
        DictionaryProvider::new("synthetic-permutation", src, tgt, words)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub source: As2Dataset,
    pub target: As2Dataset,
    /// Scores of the source-side pairs.
    pub teacher: TeacherStore,
    pub pairs: Vec<ParallelPair>,
    pub lexicon: Lexicon,
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let lexicon = Lexicon::new(cfg.vocab_size, cfg.permutation_seed);
    let n_fillers = cfg.n_fillers();
    let fillers: Vec<usize> = (0..n_fillers).collect();
    let content: Vec<usize> = (n_fillers..cfg.vocab_size).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_6500_0000);

    let mut src_examples = Vec::with_capacity(cfg.questions);
    let mut tgt_examples = Vec::with_capacity(cfg.questions);
    let mut teacher = TeacherStore::new(Provenance {
        teacher: "synthetic-oracle".into(),
        dataset: format!("synthetic seed={seed}"),
        created: String::new(),
    });
    let mut pairs = Vec::with_capacity(cfg.questions * cfg.candidates);

    for qi in 0..cfg.questions {
        let key = *content.choose(&mut rng).unwrap();
        let mut q_tokens = vec![key];
        q_tokens.extend((0..cfg.question_fillers).map(|_| *fillers.choose(&mut rng).unwrap()));
        q_tokens.shuffle(&mut rng);

        let mut labels: Vec<bool> = (0..cfg.candidates)
            .map(|_| rng.random_bool(cfg.positive_rate))
            .collect();
        if !labels.iter().any(|&l| l) {
            let j = rng.random_range(0..cfg.candidates);
            labels[j] = true;
        }
        let others: Vec<usize> = content.iter().copied().filter(|&t| t != key).collect();
        let cand_tokens: Vec<Vec<usize>> = labels
            .iter()
            .map(|&positive| {
                let n_other = if positive {
                    cfg.candidate_len - 1
                } else {
                    cfg.candidate_len
                };
                let mut toks: Vec<usize> = others.choose_multiple(&mut rng, n_other).copied().collect();
                if positive {
                    toks.push(key);
                }
                toks.shuffle(&mut rng);
                toks
            })
            .collect();

        let qid = format!("s{seed}q{qi}");
        let q_a = lexicon.render(&q_tokens, false);
        let noisy = |tokens: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
            tokens
                .iter()
                .map(|&t| {
                    if cfg.noise > 0.0 && rng.random_bool(cfg.noise) {
                        rng.random_range(0..cfg.vocab_size)
                    } else {
                        t
                    }
                })
                .collect()
        };
        let q_b = lexicon.render(&noisy(&q_tokens, &mut noise_rng), true);

        let mut src_cands = Vec::with_capacity(cfg.candidates);
        let mut tgt_cands = Vec::with_capacity(cfg.candidates);
        for (j, (toks, &gold)) in cand_tokens.iter().zip(&labels).enumerate() {
            let cid = format!("c{j}");
            let s_a = lexicon.render(toks, false);
            let s_b = lexicon.render(&noisy(toks, &mut noise_rng), true);
            let id = pair_id(&qid, &cid);
            let z = if gold {
                Logits([-ORACLE_MARGIN, ORACLE_MARGIN])
            } else {
                Logits([ORACLE_MARGIN, -ORACLE_MARGIN])
            };
            teacher.insert(TeacherScore::from_logits(id.clone(), z)?)?;
            pairs.push(ParallelPair {
                pair_id: id,
                source: PairSide {
                    question: q_a.clone(),
                    sentence: s_a.clone(),
                    language: cfg.source_language.clone(),
                },
                target: PairSide {
                    question: q_b.clone(),
                    sentence: s_b.clone(),
                    language: cfg.target_language.clone(),
                },
                gold: Some(gold),
            });
            src_cands.push(Candidate::new(cid.clone(), s_a, Some(gold)));
            tgt_cands.push(Candidate::new(cid, s_b, Some(gold)));
        }
        let question = |text: String, language: &Language| Question {
            id: qid.clone(),
            text,
            language: language.clone(),
        };
        src_examples.push(As2Example::new(question(q_a, &cfg.source_language), src_cands)?);
        tgt_examples.push(As2Example::new(question(q_b, &cfg.target_language), tgt_cands)?);
    }

    Ok(SynthCorpus {
        source: As2Dataset::new(src_examples, cfg.split, cfg.source_language.clone())?,
        target: As2Dataset::new(tgt_examples, cfg.split, cfg.target_language.clone())?,
        teacher,
        pairs,
        lexicon,
    })
}
