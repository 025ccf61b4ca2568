//! Conversion of reading-comprehension instances (question, document,
//! answer spans) into ranked candidate lists.
//!
//! Offsets everywhere in this module count Unicode scalar values, not bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_records, write_records};
use crate::as2::{As2Dataset, As2Example, Candidate, Language, Question, Split};
use crate::error::{Error, Result};

/// Half-open character range `[start, end)` of an answer in its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
}

impl SpanAnnotation {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start.max(start) < self.end.min(end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaDocInstance {
    pub question: Question,
    pub document: String,
    pub spans: Vec<SpanAnnotation>,
}

impl QaDocInstance {
    pub fn validate(&self) -> Result<()> {
        let len = self.document.chars().count();
        for s in &self.spans {
            if s.start >= s.end || s.end > len {
                return Err(Error::InvalidInput(format!(
                    "question `{}`: span [{}, {}) invalid for a document of {len} characters",
                    self.question.id, s.start, s.end
                )));
            }
        }
        Ok(())
    }
}

/// One sentence of a document with its character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub trait SentenceSplitter: Send + Sync {
    fn name(&self) -> &str;
    fn split(&self, document: &str) -> Vec<SentenceSpan>;
}

/// Splits after `. ! ? ।` when followed by whitespace or end of text, and
/// after the full-width terminals `。 ！ ？` unconditionally. Closing quotes
/// and brackets directly after a terminal stay with the sentence.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleSplitter;

fn is_spaced_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '।')
}

fn is_fullwidth_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '”' | '’' | '」' | '』' | '）')
}

fn make_span(chars: &[char], start: usize, end: usize) -> SentenceSpan {
    SentenceSpan {
        text: chars[start..end].iter().collect(),
        start,
        end,
    }
}

impl SentenceSplitter for RuleSplitter {
    fn name(&self) -> &str {
        "rule"
    }

    fn split(&self, document: &str) -> Vec<SentenceSpan> {
        let chars: Vec<char> = document.chars().collect();
        let n = chars.len();
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut i = 0;
        while i < n {
            let c = chars[i];
            if start.is_none() && !c.is_whitespace() {
                start = Some(i);
            }
            if is_spaced_terminal(c) || is_fullwidth_terminal(c) {
                let mut fullwidth = is_fullwidth_terminal(c);
                let mut j = i + 1;
                while j < n && (is_spaced_terminal(chars[j]) || is_fullwidth_terminal(chars[j]) || is_closer(chars[j]))
                {
                    fullwidth |= is_fullwidth_terminal(chars[j]);
                    j += 1;
                }
                if fullwidth || j == n || chars[j].is_whitespace() {
                    if let Some(s) = start.take() {
                        spans.push(make_span(&chars, s, j));
                    }
                }
                i = j;
                continue;
            }
            i += 1;
        }
        if let Some(s) = start {
            let mut end = n;
            while end > s && chars[end - 1].is_whitespace() {
                end -= 1;
            }
            spans.push(make_span(&chars, s, end));
        }
        spans
    }
}

/// One sentence per non-blank line.
#[derive(Debug, Default, Clone, Copy)]
pub struct LineSplitter;

impl SentenceSplitter for LineSplitter {
    fn name(&self) -> &str {
        "line"
    }

    fn split(&self, document: &str) -> Vec<SentenceSpan> {
        let chars: Vec<char> = document.chars().collect();
        let mut spans = Vec::new();
        let mut offset = 0;
        for line in chars.split(|&c| c == '\n') {
            let lead = line.iter().take_while(|c| c.is_whitespace()).count();
            let trail = line.iter().rev().take_while(|c| c.is_whitespace()).count();
            if lead < line.len() {
                spans.push(make_span(&chars, offset + lead, offset + line.len() - trail));
            }
            offset += line.len() + 1;
        }
        spans
    }
}

pub const SPLITTER_NAMES: [&str; 2] = ["rule", "line"];

/// Looks up a registered splitter by name.
pub fn splitter_by_name(name: &str) -> Result<Box<dyn SentenceSplitter>> {
    match name {
        "rule" => Ok(Box::new(RuleSplitter)),
        "line" => Ok(Box::new(LineSplitter)),
        other => Err(Error::Config(format!(
            "unknown sentence splitter `{other}` (known: {})",
            SPLITTER_NAMES.join(", ")
        ))),
    }
}

pub fn split_sentences(document: &str, splitter: &dyn SentenceSplitter) -> Vec<SentenceSpan> {
    splitter.split(document)
}

/// One candidate per sentence; a sentence is positive iff it overlaps at
/// least one answer span by one character or more.
pub fn convert_qa_to_as2(instance: &QaDocInstance, splitter: &dyn SentenceSplitter) -> Result<As2Example> {
    instance.validate()?;
    let sentences = splitter.split(&instance.document);
    if sentences.is_empty() {
        return Err(Error::Data(format!(
            "question `{}`: document has no sentences",
            instance.question.id
        )));
    }
    let candidates = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let positive = instance.spans.iter().any(|a| a.overlaps(s.start, s.end));
            Candidate::new(format!("s{i}"), s.text.clone(), Some(positive))
        })
        .collect();
    As2Example::new(instance.question.clone(), candidates)
}

/// Converts many instances, skipping those whose document yields no
/// sentences. Returns the dataset and the number of skipped instances.
pub fn convert_qa_dataset(
    instances: &[QaDocInstance],
    splitter: &dyn SentenceSplitter,
    split: Split,
    language: Language,
) -> Result<(As2Dataset, usize)> {
    let mut examples = Vec::with_capacity(instances.len());
    let mut skipped = 0;
    for inst in instances {
        inst.validate()?;
        if splitter.split(&inst.document).is_empty() {
            skipped += 1;
            continue;
        }
        examples.push(convert_qa_to_as2(inst, splitter)?);
    }
    Ok((As2Dataset::new(examples, split, language)?, skipped))
}

#[derive(Debug, Serialize, Deserialize)]
struct QaDocRecord {
    qid: String,
    question: String,
    language: Language,
    document: String,
    spans: Vec<SpanAnnotation>,
}

pub fn read_qadoc_jsonl(path: &Path) -> Result<Vec<QaDocInstance>> {
    let records: Vec<(usize, QaDocRecord)> = read_records(path)?;
    records
        .into_iter()
        .map(|(line, r)| {
            let inst = QaDocInstance {
                question: Question {
                    id: r.qid,
                    text: r.question,
                    language: r.language,
                },
                document: r.document,
                spans: r.spans,
            };
            inst.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(inst)
        })
        .collect()
}

pub fn write_qadoc_jsonl(instances: &[QaDocInstance], path: &Path) -> Result<()> {
    let records: Vec<QaDocRecord> = instances
        .iter()
        .map(|i| QaDocRecord {
            qid: i.question.id.clone(),
            question: i.question.text.clone(),
            language: i.question.language.clone(),
            document: i.document.clone(),
            spans: i.spans.clone(),
        })
        .collect();
    write_records(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn offsets(spans: &[SentenceSpan]) -> Vec<(usize, usize)> {
        spans.iter().map(|s| (s.start, s.end)).collect()
    }

    fn instance(doc: &str, spans: &[(usize, usize)]) -> QaDocInstance {
        QaDocInstance {
            question: Question {
                id: "q".into(),
                text: "question?".into(),
                language: Language::english(),
            },
            document: doc.into(),
            spans: spans
                .iter()
                .map(|&(start, end)| SpanAnnotation { start, end })
                .collect(),
        }
    }

    #[test]
    fn splitter_examples() {
        let s = RuleSplitter.split("A b. C d.");
        assert_eq!(offsets(&s), vec![(0, 4), (5, 9)]);
        assert_eq!(s[1].text, "C d.");

        let s = RuleSplitter.split("No terminal punctuation");
        assert_eq!(offsets(&s), vec![(0, 23)]);

        let s = RuleSplitter.split("一文。二文。");
        assert_eq!(offsets(&s), vec![(0, 3), (3, 6)]);
        assert_eq!(s[0].text, "一文。");
    }

    #[test]
    fn splitter_edge_cases() {
        assert!(RuleSplitter.split("").is_empty());
        assert!(RuleSplitter.split("   \n ").is_empty());
        // no whitespace after the period: not a boundary
        assert_eq!(RuleSplitter.split("v1.2 is out. Yes").len(), 2);
        let s = RuleSplitter.split("He said \"stop.\" Then left!");
        assert_eq!(s[0].text, "He said \"stop.\"");
        assert_eq!(s[1].text, "Then left!");
        let s = RuleSplitter.split("  Leading space?! Trailing   ");
        assert_eq!(s[0].text, "Leading space?!");
        assert_eq!(s[1].text, "Trailing");
        assert_eq!(RuleSplitter.split("यह एक वाक्य है। दूसरा।").len(), 2);
    }

    #[test]
    fn line_splitter() {
        let s = LineSplitter.split("first line\n\n  second  \nthird");
        assert_eq!(
            s.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            vec!["first line", "second", "third"]
        );
        assert_eq!((s[1].start, s[1].end), (14, 20));
    }

    #[test]
    fn registry() {
        assert_eq!(splitter_by_name("rule").unwrap().name(), "rule");
        assert!(splitter_by_name("nltk").is_err());
    }

    #[test]
    fn conversion_examples() {
        let doc = "One here. Two here. Three here.";
        let ex = convert_qa_to_as2(&instance(doc, &[(12, 15)]), &RuleSplitter).unwrap();
        let labels: Vec<bool> = ex.candidates.iter().map(|c| c.gold.unwrap()).collect();
        assert_eq!(labels, vec![false, true, false]);

        // straddles sentences 1 and 2
        let ex = convert_qa_to_as2(&instance(doc, &[(5, 13)]), &RuleSplitter).unwrap();
        let labels: Vec<bool> = ex.candidates.iter().map(|c| c.gold.unwrap()).collect();
        assert_eq!(labels, vec![true, true, false]);

        let ex = convert_qa_to_as2(&instance(doc, &[]), &RuleSplitter).unwrap();
        assert_eq!(ex.num_positives(), 0);
    }

    #[test]
    fn whitespace_only_span_labels_nothing() {
        let ex = convert_qa_to_as2(&instance("Aa. Bb.", &[(3, 4)]), &RuleSplitter).unwrap();
        assert_eq!(ex.num_positives(), 0);
    }

    #[test]
    fn conversion_rejects_span_outside_document() {
        assert!(convert_qa_to_as2(&instance("Short.", &[(3, 40)]), &RuleSplitter).is_err());
        assert!(convert_qa_to_as2(&instance("Short.", &[(3, 3)]), &RuleSplitter).is_err());
    }

    #[test]
    fn offsets_are_characters_not_bytes() {
        let doc = "東京は大きい。大阪も大きい。";
        let ex = convert_qa_to_as2(&instance(doc, &[(7, 9)]), &RuleSplitter).unwrap();
        assert_eq!(ex.candidates[1].text, "大阪も大きい。");
        assert_eq!(ex.candidates[1].gold, Some(true));
        assert_eq!(ex.candidates[0].gold, Some(false));
    }

    #[test]
    fn dataset_conversion_skips_empty_documents() {
        let insts = vec![instance("A. B.", &[(0, 1)]), {
            let mut i = instance("  ", &[]);
            i.question.id = "empty".into();
            i
        }];
        let (ds, skipped) = convert_qa_dataset(&insts, &RuleSplitter, Split::Train, Language::english()).unwrap();
        assert_eq!((ds.examples.len(), skipped), (1, 1));
    }

    #[test]
    fn qadoc_jsonl_round_trip() {
        let insts = vec![instance("One. Two.", &[(0, 4)])];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_qadoc_jsonl(&insts, f.path()).unwrap();
        assert_eq!(read_qadoc_jsonl(f.path()).unwrap(), insts);
    }

    proptest! {
        #[test]
        fn spans_sorted_disjoint_and_covering(doc in "[a-c .!?。\n\t]{0,60}") {
            let spans = RuleSplitter.split(&doc);
            let chars: Vec<char> = doc.chars().collect();
            let mut last_end = 0;
            for s in &spans {
                prop_assert!(s.start >= last_end && s.start < s.end);
                prop_assert_eq!(&s.text, &chars[s.start..s.end].iter().collect::<String>());
                prop_assert!(!s.text.trim().is_empty());
                last_end = s.end;
            }
            for (i, c) in chars.iter().enumerate() {
                if !c.is_whitespace() {
                    prop_assert!(spans.iter().any(|s| s.start <= i && i < s.end), "char {} uncovered", i);
                }
            }
        }

        #[test]
        fn labels_match_brute_force_overlap(
            doc in "[ab]{1,4}([.!?] [ab]{1,4}){0,5}",
            raw in proptest::collection::vec((0usize..40, 1usize..6), 0..4),
        ) {
            let len = doc.chars().count();
            let spans: Vec<(usize, usize)> = raw
                .into_iter()
                .filter(|&(s, _)| s < len)
                .map(|(s, w)| (s, (s + w).min(len)))
                .collect();
            let inst = instance(&doc, &spans);
            let sentences = RuleSplitter.split(&doc);
            let ex = convert_qa_to_as2(&inst, &RuleSplitter).unwrap();
            for (sent, cand) in sentences.iter().zip(&ex.candidates) {
                let brute = (sent.start..sent.end)
                    .any(|ch| spans.iter().any(|&(a, b)| a <= ch && ch < b));
                prop_assert_eq!(cand.gold, Some(brute));
            }
        }
    }
}
