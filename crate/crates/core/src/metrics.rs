//! Ranking metrics over scored candidate lists: P@1, average precision and
//! reciprocal rank, plus dataset-level macro averaging.
//!
//! Per-example metrics return `Ok(None)` (the skip marker) for questions
//! without any positive candidate. Whether such questions count towards the
//! dataset averages is controlled by [`EvalOptions::include_all_negative`].

use serde::{Deserialize, Serialize};

use crate::as2::{pair_id, As2Dataset, As2Example, Candidate, Question};
use crate::error::{Error, Result};

/// Something that assigns a ranking score to a (question, candidate) pair.
pub trait PairScorer {
    fn score(&self, question: &Question, candidate: &Candidate) -> Result<f64>;
}

impl<F> PairScorer for F
where
    F: Fn(&Question, &Candidate) -> Result<f64>,
{
    fn score(&self, question: &Question, candidate: &Candidate) -> Result<f64> {
        self(question, candidate)
    }
}

fn check_scores(example: &As2Example, scores: &[f64]) -> Result<()> {
    if scores.len() != example.candidates.len() {
        return Err(Error::InvalidInput(format!(
            "question `{}`: {} scores for {} candidates",
            example.question.id,
            scores.len(),
            example.candidates.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite score for pair `{}`",
            example.pair_id(i)
        )));
    }
    Ok(())
}

/// Candidate indices ordered by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Index of the best candidate; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Id of the highest-scoring candidate.
pub fn select_answer<'a>(example: &'a As2Example, scores: &[f64]) -> Result<&'a str> {
    check_scores(example, scores)?;
    let best = argmax(scores).expect("examples have at least one candidate");
    Ok(&example.candidates[best].id)
}

/// Gold-relevance flags in ranked order, or `None` when nothing is positive.
fn ranked_relevance(example: &As2Example, scores: &[f64]) -> Result<Option<Vec<bool>>> {
    check_scores(example, scores)?;
    let labels = example.gold_labels()?;
    if !labels.iter().any(|&l| l) {
        return Ok(None);
    }
    Ok(Some(ranking(scores).into_iter().map(|i| labels[i]).collect()))
}

pub fn precision_at_1(example: &As2Example, scores: &[f64]) -> Result<Option<f64>> {
    Ok(ranked_relevance(example, scores)?.map(|rel| if rel[0] { 1.0 } else { 0.0 }))
}

pub fn average_precision(example: &As2Example, scores: &[f64]) -> Result<Option<f64>> {
    Ok(ranked_relevance(example, scores)?.map(|rel| {
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (rank, &r) in rel.iter().enumerate() {
            if r {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        sum / hits as f64
    }))
}

pub fn reciprocal_rank(example: &As2Example, scores: &[f64]) -> Result<Option<f64>> {
    Ok(ranked_relevance(example, scores)?.map(|rel| {
        let first = rel.iter().position(|&r| r).expect("at least one positive");
        1.0 / (first + 1) as f64
    }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Count questions without positives as zero on every metric instead of
    /// skipping them.
    pub include_all_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p_at_1: f64,
    pub map: f64,
    pub mrr: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

/// Per-question metric triple, `None` when the question is skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMetrics {
    pub p_at_1: f64,
    pub ap: f64,
    pub rr: f64,
}

pub fn example_metrics(example: &As2Example, scores: &[f64]) -> Result<Option<ExampleMetrics>> {
    let Some(rel) = ranked_relevance(example, scores)? else {
        return Ok(None);
    };
    let mut hits = 0usize;
    let mut ap = 0.0;
    let mut first = None;
    for (rank, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
            first.get_or_insert(rank);
        }
    }
    Ok(Some(ExampleMetrics {
        p_at_1: if rel[0] { 1.0 } else { 0.0 },
        ap: ap / hits as f64,
        rr: 1.0 / (first.expect("at least one positive") + 1) as f64,
    }))
}

/// Scores every pair of `example`, reporting the failing pair id on error.
pub fn score_example<S: PairScorer + ?Sized>(example: &As2Example, scorer: &S) -> Result<Vec<f64>> {
    example
        .candidates
        .iter()
        .map(|c| {
            scorer.score(&example.question, c).map_err(|e| Error::Scorer {
                pair_id: pair_id(&example.question.id, &c.id),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Aggregates per-question metrics (`None` = no positive) into a report.
pub fn aggregate(per_example: &[Option<ExampleMetrics>], opts: EvalOptions) -> EvalReport {
    let mut sums = (0.0, 0.0, 0.0);
    let mut n_evaluated = 0usize;
    let mut n_skipped = 0usize;
    for m in per_example {
        match m {
            Some(m) => {
                sums.0 += m.p_at_1;
                sums.1 += m.ap;
                sums.2 += m.rr;
                n_evaluated += 1;
            }
            None if opts.include_all_negative => n_evaluated += 1,
            None => n_skipped += 1,
        }
    }
    let denom = n_evaluated.max(1) as f64;
    EvalReport {
        p_at_1: sums.0 / denom,
        map: sums.1 / denom,
        mrr: sums.2 / denom,
        n_evaluated,
        n_skipped,
    }
}

/// Macro-averaged P@1/MAP/MRR over the questions of `dataset`.
pub fn evaluate_dataset<S: PairScorer + ?Sized>(
    dataset: &As2Dataset,
    scorer: &S,
    opts: EvalOptions,
) -> Result<EvalReport> {
    let mut per_example = Vec::with_capacity(dataset.examples.len());
    for ex in &dataset.examples {
        let scores = score_example(ex, scorer)?;
        per_example.push(example_metrics(ex, &scores)?);
    }
    Ok(aggregate(&per_example, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::as2::{Language, Split};
    use proptest::prelude::*;

    fn example(labels: &[bool]) -> As2Example {
        As2Example::new(
            Question {
                id: "q".into(),
                text: "question".into(),
                language: Language::english(),
            },
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Candidate::new(format!("c{i}"), format!("sentence {i}"), Some(l)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn select_answer_examples() {
        let ex = example(&[false, true, false]);
        assert_eq!(select_answer(&ex, &[0.1, 0.9, 0.3]).unwrap(), "c1");
        let ex2 = example(&[false, false]);
        assert_eq!(select_answer(&ex2, &[0.5, 0.5]).unwrap(), "c0");
        let ex1 = example(&[false]);
        assert_eq!(select_answer(&ex1, &[-3.2]).unwrap(), "c0");
    }

    #[test]
    fn select_answer_errors() {
        let ex = example(&[false, true]);
        assert!(select_answer(&ex, &[0.1]).is_err());
        assert!(select_answer(&ex, &[0.1, f64::NAN]).is_err());
        assert!(select_answer(&ex, &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn precision_at_1_examples() {
        let ex = example(&[false, true]);
        assert_eq!(precision_at_1(&ex, &[0.0, 1.0]).unwrap(), Some(1.0));
        assert_eq!(precision_at_1(&ex, &[1.0, 0.0]).unwrap(), Some(0.0));
        let none = example(&[false, false]);
        assert_eq!(precision_at_1(&none, &[1.0, 0.0]).unwrap(), None);
    }

    #[test]
    fn missing_labels_are_errors() {
        let mut ex = example(&[false, true]);
        ex.candidates[0].gold = None;
        assert!(precision_at_1(&ex, &[0.0, 1.0]).is_err());
        assert!(average_precision(&ex, &[0.0, 1.0]).is_err());
        assert!(reciprocal_rank(&ex, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn average_precision_examples() {
        // positives at ranks 1 and 3 of 4: (1/1 + 2/3) / 2
        let ex = example(&[true, false, true, false]);
        let ap = average_precision(&ex, &[0.9, 0.8, 0.7, 0.6]).unwrap().unwrap();
        assert!((ap - 0.833_333_333_333_333_3).abs() < 1e-12);

        let first = example(&[true, false, false]);
        assert_eq!(average_precision(&first, &[3.0, 2.0, 1.0]).unwrap(), Some(1.0));

        let n = 7;
        let mut labels = vec![false; n];
        labels[n - 1] = true;
        let last = example(&labels);
        let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        let ap = average_precision(&last, &scores).unwrap().unwrap();
        assert!((ap - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_rank_examples() {
        let ex = example(&[false, true, false]);
        assert_eq!(reciprocal_rank(&ex, &[0.9, 0.8, 0.1]).unwrap(), Some(0.5));
        assert_eq!(reciprocal_rank(&ex, &[0.1, 0.8, 0.2]).unwrap(), Some(1.0));
        let five = example(&[false, false, true, false, false]);
        let rr = reciprocal_rank(&five, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap().unwrap();
        assert!((rr - 1.0 / 3.0).abs() < 1e-15);
    }

    fn dataset(examples: Vec<As2Example>) -> As2Dataset {
        let examples = examples
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| {
                e.question.id = format!("q{i}");
                e
            })
            .collect();
        As2Dataset::new(examples, Split::Test, Language::english()).unwrap()
    }

    fn by_text(scores: Vec<Vec<f64>>) -> impl Fn(&Question, &Candidate) -> Result<f64> {
        move |q, c| {
            let qi: usize = q.id[1..].parse().unwrap();
            let ci: usize = c.id[1..].parse().unwrap();
            Ok(scores[qi][ci])
        }
    }

    #[test]
    fn evaluate_hit_and_miss() {
        let ds = dataset(vec![example(&[true, false]), example(&[true, false])]);
        let report = evaluate_dataset(
            &ds,
            &by_text(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(report.p_at_1, 0.5);
        assert_eq!(report.n_evaluated, 2);
    }

    #[test]
    fn gold_scorer_is_perfect() {
        let ds = dataset(vec![
            example(&[false, true, true]),
            example(&[true]),
            example(&[false, false, false, true]),
        ]);
        let gold = |_: &Question, c: &Candidate| Ok(if c.gold == Some(true) { 1.0 } else { 0.0 });
        let report = evaluate_dataset(&ds, &gold, EvalOptions::default()).unwrap();
        assert_eq!((report.p_at_1, report.map, report.mrr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_policy() {
        let ds = dataset(vec![example(&[true, false]), example(&[false, false])]);
        let s = by_text(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let skip = evaluate_dataset(&ds, &s, EvalOptions::default()).unwrap();
        assert_eq!((skip.n_evaluated, skip.n_skipped, skip.p_at_1), (1, 1, 1.0));
        let include = evaluate_dataset(
            &ds,
            &s,
            EvalOptions {
                include_all_negative: true,
            },
        )
        .unwrap();
        assert_eq!((include.n_evaluated, include.n_skipped, include.p_at_1), (2, 0, 0.5));
    }

    #[test]
    fn scorer_failure_names_pair() {
        let ds = dataset(vec![example(&[true, false])]);
        let failing = |_: &Question, c: &Candidate| {
            if c.id == "c1" {
                Err(Error::Data("boom".into()))
            } else {
                Ok(0.0)
            }
        };
        match evaluate_dataset(&ds, &failing, EvalOptions::default()) {
            Err(Error::Scorer { pair_id, .. }) => assert_eq!(pair_id, "q0::c1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn select_answer_monotone_invariant(scores in proptest::collection::vec(-50.0f64..50.0, 1..10)) {
            let ex = example(&vec![false; scores.len()]);
            let a = select_answer(&ex, &scores).unwrap().to_string();
            let transformed: Vec<f64> = scores.iter().map(|s| (s / 10.0).exp() * 3.0 + 1.0).collect();
            let b = select_answer(&ex, &transformed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn metric_bounds_and_permutation(
            rows in proptest::collection::vec((any::<bool>(), -1e3f64..1e3), 1..9),
            seed in any::<u64>(),
        ) {
            let labels: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let scores: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ex = example(&labels);
            if let Some(m) = example_metrics(&ex, &scores).unwrap() {
                prop_assert!(0.0 <= m.p_at_1 && m.p_at_1 <= m.rr && m.rr <= 1.0);
                prop_assert!((0.0..=1.0).contains(&m.ap));
                prop_assert_eq!(m.rr == 1.0, labels[ranking(&scores)[0]]);

                // permute candidates and scores together
                let mut perm: Vec<usize> = (0..labels.len()).collect();
                let mut state = seed;
                for i in (1..perm.len()).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    perm.swap(i, (state >> 33) as usize % (i + 1));
                }
                let mut distinct = scores.clone();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.len() == scores.len() {
                    let pl: Vec<bool> = perm.iter().map(|&i| labels[i]).collect();
                    let ps: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
                    let pm = example_metrics(&example(&pl), &ps).unwrap().unwrap();
                    prop_assert_eq!(pm, m);
                }
            }
        }
    }
}
