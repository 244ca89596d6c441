//! Survey questions: the built-in bank, population answer vectors,
//! entropy-based divisiveness ranking, option-order variants and probing
//! backends for opinion matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{softmax, Backend, BackendError, SurveyRequest};
use crate::opinion::{OpinionError, OpinionMatrix, PopulationMix};

const SWAP_SUFFIX: &str = "~swapped";

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Opinion(#[from] OpinionError),
    #[error("question bank: {0}")]
    Bank(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    #[serde(rename = "id")]
    pub question_id: String,
    pub text: String,
    pub options: Vec<String>,
}

impl Question {
    pub fn validate(&self) -> Result<(), SurveyError> {
        if self.options.len() < 2 {
            return Err(SurveyError::InvalidInput(format!(
                "question {} has fewer than two options",
                self.question_id
            )));
        }
        for (i, o) in self.options.iter().enumerate() {
            if self.options[..i].contains(o) {
                return Err(SurveyError::InvalidInput(format!(
                    "question {} repeats option {o:?}",
                    self.question_id
                )));
            }
        }
        Ok(())
    }
}

/// Parses a bank file: a JSON list of `{id, text, options}`.
pub fn parse_bank(json: &str) -> Result<Vec<Question>, SurveyError> {
    let bank: Vec<Question> = serde_json::from_str(json)?;
    for q in &bank {
        q.validate()?;
    }
    Ok(bank)
}

/// The 42 binary divisive questions, ids `Q1`..`Q42` in entropy-table order.
pub fn builtin_bank() -> Vec<Question> {
    parse_bank(include_str!("../../data/questions.json")).expect("bundled bank is valid")
}

pub fn find_question<'a>(bank: &'a [Question], question_id: &str) -> Option<&'a Question> {
    bank.iter().find(|q| q.question_id == question_id)
}

/// Weighted mean of the models' answer rows for `question_id`, renormalized.
pub fn population_answer_vector(
    question_id: &str,
    matrices: &BTreeMap<String, OpinionMatrix>,
    mix: &PopulationMix,
) -> Result<Vec<f64>, SurveyError> {
    let mut v: Vec<f64> = Vec::new();
    for (label, &w) in mix.labels.iter().zip(&mix.weights) {
        let matrix = matrices.get(label).ok_or_else(|| {
            SurveyError::InvalidInput(format!("no opinion matrix for model {label}"))
        })?;
        let row = matrix.row(question_id).ok_or_else(|| {
            SurveyError::InvalidInput(format!("model {label} has no row for {question_id}"))
        })?;
        if v.is_empty() {
            v = vec![0.0; row.len()];
        } else if v.len() != row.len() {
            return Err(SurveyError::InvalidInput(format!(
                "models disagree on the option count of {question_id}"
            )));
        }
        for (acc, p) in v.iter_mut().zip(row) {
            *acc += w * p;
        }
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(SurveyError::InvalidInput(format!(
            "answer vector for {question_id} has no mass"
        )));
    }
    Ok(v.into_iter().map(|x| x / total).collect())
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn question_entropy(v: &[f64]) -> f64 {
    -v.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Bank sorted by descending entropy of the population answer vector;
/// equal entropies fall back to question id order.
pub fn rank_questions(
    bank: &[Question],
    matrices: &BTreeMap<String, OpinionMatrix>,
    mix: &PopulationMix,
) -> Result<Vec<(Question, f64)>, SurveyError> {
    let mut ranked = bank
        .iter()
        .map(|q| {
            let v = population_answer_vector(&q.question_id, matrices, mix)?;
            Ok((q.clone(), question_entropy(&v)))
        })
        .collect::<Result<Vec<_>, SurveyError>>()?;
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.question_id.cmp(&b.0.question_id))
    });
    Ok(ranked)
}

/// Reverses the option order and rewrites the wording to match: the
/// "answer with 'A' or 'B'" clause, and an "A or B" alternative in the stem
/// when its halves mention the options. Answer vectors are not assumed to be
/// invariant under the swap.
pub fn swap_options(question: &Question) -> Question {
    let mut options = question.options.clone();
    options.reverse();
    let mut text = question.text.clone();
    if let [a, b] = question.options.as_slice() {
        text = swap_binary_wording(&text, a, b);
    }
    let question_id = match question.question_id.strip_suffix(SWAP_SUFFIX) {
        Some(original) => original.to_string(),
        None => format!("{}{SWAP_SUFFIX}", question.question_id),
    };
    Question {
        question_id,
        text,
        options,
    }
}

fn swap_binary_wording(text: &str, a: &str, b: &str) -> String {
    let clause = format!("'{a}' or '{b}'");
    let swapped_clause = format!("'{b}' or '{a}'");
    let (stem, rest) = match text.find('?') {
        Some(i) => text.split_at(i),
        None => (text, ""),
    };
    let rest = rest.replacen(&clause, &swapped_clause, 1);
    let stem = swap_stem(stem, a, b).unwrap_or_else(|| stem.to_string());
    format!("{stem}{rest}")
}

fn swap_stem(stem: &str, a: &str, b: &str) -> Option<String> {
    if stem.matches(" or ").count() != 1 {
        return None;
    }
    let (left, right) = stem.split_once(" or ")?;
    let (left, comma) = match left.strip_suffix(',') {
        Some(l) => (l, ","),
        None => (left, ""),
    };
    let right_words = right.split_whitespace().count();
    let left_words: Vec<&str> = left.split_whitespace().collect();
    if right_words == 0 || left_words.len() < right_words {
        return None;
    }
    let split = left_words.len() - right_words;
    let first_alt = left_words[split..].join(" ");
    let contains = |hay: &str, needle: &str| hay.to_lowercase().contains(&needle.to_lowercase());
    if !contains(&first_alt, a) || !contains(right, b) {
        return None;
    }
    let prefix = left_words[..split].join(" ");
    let sep = if prefix.is_empty() { "" } else { " " };
    Some(format!("{prefix}{sep}{right}{comma} or {first_alt}"))
}

/// Identity presented to a backend while probing it.
#[derive(Debug, Clone, Default)]
pub struct ProbeIdentity {
    pub agent_id: usize,
    pub cluster_id: usize,
    pub persona: String,
}

/// Asks the backend every question with an empty context and turns the
/// returned log scores into answer probabilities.
pub fn probe_opinion_matrix(
    backend: &mut dyn Backend,
    identity: &ProbeIdentity,
    bank: &[Question],
) -> Result<OpinionMatrix, SurveyError> {
    let mut ids = Vec::with_capacity(bank.len());
    let mut rows = Vec::with_capacity(bank.len());
    for q in bank {
        q.validate()?;
        let request = SurveyRequest {
            agent_id: identity.agent_id,
            cluster_id: identity.cluster_id,
            persona: identity.persona.clone(),
            context: Vec::new(),
            question: q.text.clone(),
            options: q.options.clone(),
        };
        let response = backend.survey(&request)?;
        response.validate(q.options.len())?;
        ids.push(q.question_id.clone());
        rows.push(softmax(&response.log_scores));
    }
    Ok(OpinionMatrix::new(ids, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{StubOpinionAgent, StubPopulation};

    fn single(rows: &[(&str, [f64; 2])]) -> (BTreeMap<String, OpinionMatrix>, PopulationMix) {
        let m = OpinionMatrix::new(
            rows.iter().map(|(q, _)| q.to_string()).collect(),
            rows.iter().map(|(_, r)| r.to_vec()).collect(),
        )
        .unwrap();
        let mut map = BTreeMap::new();
        map.insert("m".to_string(), m);
        (map, PopulationMix::uniform(vec!["m".into()]))
    }

    #[test]
    fn answer_vector_examples() {
        let (map, mix) = single(&[("q", [0.3, 0.7])]);
        assert_eq!(population_answer_vector("q", &map, &mix).unwrap(), vec![0.3, 0.7]);
        assert!(population_answer_vector("missing", &map, &mix).is_err());

        let mut two = BTreeMap::new();
        two.insert("a".to_string(), OpinionMatrix::new(vec!["q".into()], vec![vec![1.0, 0.0]]).unwrap());
        two.insert("b".to_string(), OpinionMatrix::new(vec!["q".into()], vec![vec![0.0, 1.0]]).unwrap());
        let mix = PopulationMix::uniform(vec!["a".into(), "b".into()]);
        assert_eq!(population_answer_vector("q", &two, &mix).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(question_entropy(&[0.5, 0.5]), 1.0);
        assert_eq!(question_entropy(&[1.0, 0.0]), 0.0);
        assert!((question_entropy(&[0.4846, 0.5154]) - 0.9993).abs() < 5e-4);
        assert!((question_entropy(&[0.8897, 0.1103]) - 0.5008).abs() < 5e-4);
    }

    #[test]
    fn ranking_prefers_divisive() {
        let (map, mix) = single(&[("a", [0.9, 0.1]), ("b", [0.5, 0.5])]);
        let bank = vec![
            Question { question_id: "a".into(), text: "A?".into(), options: vec!["y".into(), "n".into()] },
            Question { question_id: "b".into(), text: "B?".into(), options: vec!["y".into(), "n".into()] },
        ];
        let ranked = rank_questions(&bank, &map, &mix).unwrap();
        assert_eq!(ranked[0].0.question_id, "b");
        assert_eq!(rank_questions(&bank[..1], &map, &mix).unwrap().len(), 1);
    }

    #[test]
    fn builtin_bank_shape() {
        let bank = builtin_bank();
        assert_eq!(bank.len(), 42);
        assert!(bank.iter().all(|q| q.options.len() == 2));
        assert_eq!(bank[27].question_id, "Q28");
        assert!(bank[27].text.contains("free healthcare"));
    }

    #[test]
    fn swap_reverses_and_rewrites() {
        let q = Question {
            question_id: "x".into(),
            text: "Pick? You may only answer with 'A' or 'B'.".into(),
            options: vec!["A".into(), "B".into()],
        };
        let s = swap_options(&q);
        assert_eq!(s.options, vec!["B".to_string(), "A".to_string()]);
        assert_eq!(s.text, "Pick? You may only answer with 'B' or 'A'.");
        assert_eq!(swap_options(&s), q);
    }

    #[test]
    fn swap_reproduces_mirrored_bank_questions() {
        let bank = builtin_bank();
        let by_id = |id: &str| find_question(&bank, id).unwrap().clone();
        for (a, b) in [("Q3", "Q40"), ("Q13", "Q41"), ("Q15", "Q38"), ("Q26", "Q37"), ("Q27", "Q36"), ("Q31", "Q35"), ("Q42", "Q34")] {
            let swapped = swap_options(&by_id(a));
            assert_eq!(swapped.text, by_id(b).text, "{a} -> {b}");
            assert_eq!(swapped.options, by_id(b).options);
        }
        // "circuses or zoos" is not an answer alternative and stays put.
        let q32 = by_id("Q32");
        assert!(swap_options(&q32).text.contains("circuses or zoos"));
        for q in &bank {
            assert_eq!(&swap_options(&swap_options(q)), q);
        }
    }

    #[test]
    fn probing_stub_backends() {
        let q = Question {
            question_id: "q".into(),
            text: "Yes or no?".into(),
            options: vec!["Yes".into(), "No".into()],
        };
        for (p, expected) in [(0.5, [0.5, 0.5]), (0.9, [0.1, 0.9])] {
            let mut pop = StubPopulation::new();
            pop.insert(0, StubOpinionAgent::new(q.text.clone(), p, 0.0, 1));
            let m = probe_opinion_matrix(&mut pop, &ProbeIdentity::default(), std::slice::from_ref(&q)).unwrap();
            for (got, want) in m.row("q").unwrap().iter().zip(expected) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }
}
