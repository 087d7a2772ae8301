//! Three-dimension summary rubric scored by one or more judge models.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::{catalog, Gateway, GenerationParams, PromptSpec};

pub const RUBRIC_DIMENSIONS: [&str; 3] =
    ["Conciseness and Sentence Structure", "Coverage and Coherence", "Information Span & Economy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricScores {
    pub per_judge: Vec<(String, [f64; 3])>,
    pub mean: [f64; 3],
}

/// Parses three comma- or whitespace-separated scores, each a whole or half
/// point in [0, 5].
pub fn parse_rubric_reply(reply: &str) -> Result<[f64; 3], EvalError> {
    let parse_err = |message: String| EvalError::Parse { raw: reply.to_string(), message };
    let numbers: Vec<f64> = reply
        .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .map(|t| t.trim_end_matches('.'))
        .filter(|t| !t.is_empty() && *t != "-")
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if numbers.len() != 3 {
        return Err(parse_err(format!("expected 3 scores, found {}", numbers.len())));
    }
    for &s in &numbers {
        if !(0.0..=5.0).contains(&s) {
            return Err(parse_err(format!("score {s} outside [0, 5]")));
        }
        if (s * 2.0).fract() != 0.0 {
            return Err(parse_err(format!("score {s} is not a whole or half point")));
        }
    }
    Ok([numbers[0], numbers[1], numbers[2]])
}

/// Scores `summary` with each judge configuration and averages per dimension.
pub fn rubric_score_summary(
    summary: &str,
    gateway: &Gateway,
    judges: &[GenerationParams],
) -> Result<RubricScores, EvalError> {
    if summary.trim().is_empty() {
        return Err(EvalError::Empty("summary is empty".into()));
    }
    if judges.is_empty() {
        return Err(EvalError::Empty("no judge models configured".into()));
    }
    let prompt = PromptSpec::new(catalog::SUMMARY_RUBRIC).var("summary", summary);
    let mut per_judge = Vec::with_capacity(judges.len());
    for params in judges {
        let reply = gateway.complete(&prompt, params)?;
        per_judge.push((params.model_name.clone(), parse_rubric_reply(&reply.text)?));
    }
    let mut mean = [0.0; 3];
    for (_, s) in &per_judge {
        for i in 0..3 {
            mean[i] += s[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= per_judge.len() as f64);
    Ok(RubricScores { per_judge, mean })
}
