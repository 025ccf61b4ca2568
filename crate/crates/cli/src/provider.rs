use std::path::PathBuf;

use clkd_core::as2::Language;
use clkd_core::error::{Error, Result};
use clkd_core::synth::Lexicon;
use clkd_core::translation::{DictionaryProvider, IdentityProvider, MtProvider, Translator};

/// Directory holding the translation cache, if any.
pub const CACHE_DIR_VAR: &str = "CLKD_CACHE_DIR";

/// Builds a provider from `identity`, `dictionary:<tsv>` or
/// `synthetic[:<vocab>[:<permutation seed>]]`.
///
/// The synthetic provider maps between English and `other`, in whichever
/// direction `src`/`tgt` ask for.
pub fn parse_provider(choice: &str, src: &Language, tgt: &Language) -> Result<Box<dyn MtProvider>> {
    let (kind, rest) = choice.split_once(':').unwrap_or((choice, ""));
    match kind {
        "identity" => Ok(Box::new(IdentityProvider)),
        "dictionary" if !rest.is_empty() => Ok(Box::new(DictionaryProvider::from_tsv(
            format!("dictionary:{rest}"),
            src.clone(),
            tgt.clone(),
            &PathBuf::from(rest),
        )?)),
        "synthetic" => {
            let mut parts = rest.split(':').filter(|p| !p.is_empty());
            let num = |p: Option<&str>, default: u64| -> Result<u64> {
                p.map_or(Ok(default), |v| {
                    v.parse()
                        .map_err(|_| Error::Config(format!("bad number `{v}` in provider `{choice}`")))
                })
            };
            let vocab = num(parts.next(), 200)? as usize;
            let seed = num(parts.next(), 0)?;
            let lex = Lexicon::new(vocab, seed);
            let english = Language::english();
            let name = format!("synthetic:{vocab}:{seed}");
            let words = (0..lex.len()).map(|t| (lex.word_a(t).to_string(), lex.word_b(t).to_string()));
            if *src == english {
                Ok(Box::new(DictionaryProvider::new(name, english, tgt.clone(), words)))
            } else if *tgt == english {
                Ok(Box::new(
                    DictionaryProvider::new(name, english, src.clone(), words).inverse()?,
                ))
            } else {
                Err(Error::Config(
                    "the synthetic provider translates to or from English".into(),
                ))
            }
        }
        _ => Err(Error::Config(format!(
            "unknown provider `{choice}` (identity, dictionary:<tsv>, synthetic[:vocab[:seed]])"
        ))),
    }
}

/// Translator over `provider`, cached under `$CLKD_CACHE_DIR` when set.
pub fn translator(provider: &dyn MtProvider) -> Result<Translator<'_>> {
    let t = Translator::new(provider);
    match std::env::var_os(CACHE_DIR_VAR) {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            t.with_cache_file(&dir.join("translations.jsonl"))
        }
        None => Ok(t),
    }
}
