//! Vertex extraction: paragraph-wise summarization into simple, agent-centered
//! sentences, followed by validation and at most one repair round per
//! failing sentence.

mod validate;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{catalog, Gateway, GatewayError, GenerationParams, PromptSpec};
use crate::model::{SourceSpan, Vertex, VertexId};

pub use validate::{validate_vertex, ValidationReport, RULE_ACTIVE, RULE_AGENT, RULE_CONCISE};

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("narrative is empty")]
    EmptyNarrative,
    #[error("no extractable sentences for narrative {0}")]
    EmptyOutput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot read narrative {path}: {message}")]
    Io { path: String, message: String },
}

/// A narrative with paragraph boundaries (character offsets into `body`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeText {
    pub id: String,
    pub title: Option<String>,
    pub body: String,
    pub paragraphs: Vec<SourceSpan>,
}

impl NarrativeText {
    /// Splits `body` into paragraphs at blank lines. A short first paragraph
    /// on a single line without terminal punctuation is taken as the title.
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, ExtractionError> {
        let body: String = body.into();
        if body.trim().is_empty() {
            return Err(ExtractionError::EmptyNarrative);
        }
        let mut paragraphs = paragraph_spans(&body);
        let mut title = None;
        if paragraphs.len() > 1 {
            let first = slice_chars(&body, paragraphs[0]).trim().to_string();
            let terminal = first.ends_with(['.', '!', '?', '"', '\u{201d}']);
            if !first.contains('\n') && first.chars().count() <= 80 && !terminal {
                title = Some(first.trim_start_matches('#').trim().to_string());
                paragraphs.remove(0);
            }
        }
        Ok(NarrativeText { id: id.into(), title, body, paragraphs })
    }

    /// Reads a UTF-8 file; the narrative id is the file stem.
    pub fn from_file(path: &Path) -> Result<Self, ExtractionError> {
        let body = std::fs::read_to_string(path).map_err(|e| ExtractionError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "narrative".into());
        Self::new(id, body)
    }

    pub fn paragraph_text(&self, span: SourceSpan) -> &str {
        slice_chars(&self.body, span)
    }
}

fn paragraph_spans(body: &str) -> Vec<SourceSpan> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_content_end = 0;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let len = line.chars().count();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            if let Some(s) = start.take() {
                spans.push(SourceSpan { start: s, end: last_content_end });
            }
        } else {
            let lead = content.chars().take_while(|c| c.is_whitespace()).count();
            if start.is_none() {
                start = Some(offset + lead);
            }
            last_content_end = offset + content.trim_end().chars().count();
        }
        offset += len;
    }
    if let Some(s) = start {
        spans.push(SourceSpan { start: s, end: last_content_end });
    }
    spans
}

fn char_range(text: &str, span: SourceSpan) -> Range<usize> {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let start = indices.nth(span.start).unwrap_or(text.len());
    let end = if span.end > span.start {
        indices.nth(span.end - span.start - 1).unwrap_or(text.len())
    } else {
        start
    };
    start..end
}

fn slice_chars(text: &str, span: SourceSpan) -> &str {
    &text[char_range(text, span)]
}

/// Splits a model reply into sentences: one per line, with list markers
/// removed and lines holding several sentences split at terminators.
pub fn parse_sentences(reply: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let line = strip_list_marker(line.trim());
        if line.is_empty() || line.ends_with(':') {
            continue;
        }
        let mut current = String::new();
        let chars: Vec<char> = line.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            current.push(c);
            let terminal = matches!(c, '.' | '!' | '?');
            let next_starts = chars.get(i + 1).is_some_and(|n| n.is_whitespace())
                && chars[i + 1..].iter().find(|n| !n.is_whitespace()).is_some_and(|n| n.is_uppercase() || *n == '"');
            if terminal && next_starts {
                push_sentence(&mut out, &current);
                current.clear();
            }
        }
        push_sentence(&mut out, &current);
    }
    out
}

fn push_sentence(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if s.chars().any(char::is_alphabetic) {
        out.push(s.to_string());
    }
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    line
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub max_vertices: usize,
    pub params: GenerationParams,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { max_vertices: 40, params: GenerationParams::default() }
    }
}

/// A sentence that failed validation after its repair round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedSentence {
    pub sentence: String,
    pub paragraph: usize,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extraction {
    pub narrative_id: String,
    pub vertices: Vec<Vertex>,
    pub reports: Vec<ValidationReport>,
    pub repaired: usize,
    pub dropped: Vec<DroppedSentence>,
    /// Sentences cut by the `max_vertices` limit.
    pub truncated: usize,
    /// Request hashes of every exchange, in issue order.
    pub request_hashes: Vec<String>,
}

struct Candidate {
    paragraph: usize,
    sentence: String,
    report: ValidationReport,
}

/// Runs summarization over every paragraph, validates each produced sentence,
/// gives failures one repair prompt, and numbers the survivors `v001`, `v002`, …
pub fn extract_vertices(
    text: &NarrativeText,
    gateway: &Gateway,
    config: &ExtractionConfig,
) -> Result<Extraction, ExtractionError> {
    if text.paragraphs.is_empty() {
        return Err(ExtractionError::EmptyNarrative);
    }
    let prompts: Vec<PromptSpec> = text
        .paragraphs
        .iter()
        .map(|&p| PromptSpec::new(catalog::VERTEX_EXTRACTION).var("paragraph", text.paragraph_text(p)))
        .collect();
    let mut request_hashes = Vec::new();
    let mut candidates = Vec::new();
    for (i, reply) in gateway.complete_many(&prompts, &config.params).into_iter().enumerate() {
        let reply = reply?;
        request_hashes.push(reply.request_hash);
        for sentence in parse_sentences(&reply.text) {
            let report = validate_vertex(&sentence);
            candidates.push(Candidate { paragraph: i, sentence, report });
        }
    }

    let failing: Vec<usize> = candidates.iter().enumerate().filter(|(_, c)| !c.report.is_valid()).map(|(i, _)| i).collect();
    let repair_prompts: Vec<PromptSpec> = failing
        .iter()
        .map(|&i| {
            let c = &candidates[i];
            PromptSpec::new(catalog::VERTEX_REPAIR)
                .var("violations", c.report.violations.join(", "))
                .var("paragraph", text.paragraph_text(text.paragraphs[c.paragraph]))
                .var("sentence", c.sentence.clone())
        })
        .collect();
    let mut repairs: Vec<Option<Vec<Candidate>>> = (0..candidates.len()).map(|_| None).collect();
    let mut dropped = Vec::new();
    let mut repaired = 0;
    for (&i, reply) in failing.iter().zip(gateway.complete_many(&repair_prompts, &config.params)) {
        let reply = reply?;
        request_hashes.push(reply.request_hash);
        let paragraph = candidates[i].paragraph;
        let mut fixed = Vec::new();
        for sentence in parse_sentences(&reply.text) {
            let report = validate_vertex(&sentence);
            if report.is_valid() {
                fixed.push(Candidate { paragraph, sentence, report });
            } else {
                tracing::warn!(%sentence, violations = ?report.violations, "dropping sentence after repair");
                dropped.push(DroppedSentence { sentence, paragraph, violations: report.violations });
            }
        }
        if !fixed.is_empty() {
            repaired += 1;
        }
        repairs[i] = Some(fixed);
    }

    let mut accepted = Vec::new();
    for (i, c) in candidates.into_iter().enumerate() {
        match repairs[i].take() {
            Some(fixed) => accepted.extend(fixed),
            None => accepted.push(c),
        }
    }
    if accepted.is_empty() {
        return Err(ExtractionError::EmptyOutput(text.id.clone()));
    }
    let truncated = accepted.len().saturating_sub(config.max_vertices);
    accepted.truncate(config.max_vertices);

    let width = accepted.len().to_string().len().max(3);
    let mut vertices = Vec::with_capacity(accepted.len());
    let mut reports = Vec::with_capacity(accepted.len());
    for (n, c) in accepted.into_iter().enumerate() {
        vertices.push(Vertex {
            id: VertexId(format!("v{:0width$}", n + 1)),
            text: c.sentence,
            source_span: Some(text.paragraphs[c.paragraph]),
            expert_index: None,
            stac: None,
        });
        reports.push(c.report);
    }
    Ok(Extraction {
        narrative_id: text.id.clone(),
        vertices,
        reports,
        repaired,
        dropped,
        truncated,
        request_hashes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatProvider, ChatRequest, GatewayMode};
    use std::sync::Arc;

    fn gateway(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
        let provider: Arc<dyn ChatProvider> =
            Arc::new(move |req: &ChatRequest| Ok(f(&req.messages.last().unwrap().content)));
        Gateway::builder(GatewayMode::Live).provider(provider).build().unwrap()
    }

    fn paragraph_of(prompt: &str) -> String {
        prompt.rsplit("Paragraph:\n").next().unwrap().to_string()
    }

    #[test]
    fn paragraphs_and_title() {
        let t = NarrativeText::new("n", "The Fox\n\nThe fox ran.\nIt was fast.\n\n\n  The hound slept.  \n").unwrap();
        assert_eq!(t.title.as_deref(), Some("The Fox"));
        assert_eq!(t.paragraphs.len(), 2);
        assert_eq!(t.paragraph_text(t.paragraphs[0]), "The fox ran.\nIt was fast.");
        assert_eq!(t.paragraph_text(t.paragraphs[1]), "The hound slept.");
    }

    #[test]
    fn empty_narrative_rejected() {
        assert!(matches!(NarrativeText::new("n", "  \n "), Err(ExtractionError::EmptyNarrative)));
    }

    #[test]
    fn parse_sentences_strips_markers_and_splits() {
        let s = parse_sentences("1. The fox ran. The hound chased the fox.\n- The farmer woke.\n\nSummary:\n");
        assert_eq!(s, vec!["The fox ran.", "The hound chased the fox.", "The farmer woke."]);
    }

    #[test]
    fn single_simple_sentence_is_kept_verbatim() {
        let g = gateway(paragraph_of);
        let t = NarrativeText::new("fox", "The fox ran.").unwrap();
        let out = extract_vertices(&t, &g, &ExtractionConfig::default()).unwrap();
        assert_eq!(out.vertices.len(), 1);
        assert_eq!(out.vertices[0].text, "The fox ran.");
        assert_eq!(out.vertices[0].id.as_str(), "v001");
    }

    #[test]
    fn first_person_narrator_becomes_the_protagonist() {
        // The first reply keeps a pronoun; the repair prompt fixes it.
        let g = gateway(|prompt| {
            if prompt.contains("breaks these requirements") {
                "The Protagonist opened the gate.".to_string()
            } else {
                "The Protagonist woke early.\nI opened the gate.".to_string()
            }
        });
        let t = NarrativeText::new("me", "I woke early. I opened the gate.").unwrap();
        let out = extract_vertices(&t, &g, &ExtractionConfig::default()).unwrap();
        let texts: Vec<&str> = out.vertices.iter().map(|v| v.text.as_str()).collect();
        assert_eq!(texts, vec!["The Protagonist woke early.", "The Protagonist opened the gate."]);
        assert!(out.vertices.iter().all(|v| !v.text.split_whitespace().any(|w| w == "I")));
        assert_eq!(out.repaired, 1);
    }

    #[test]
    fn unrepairable_sentence_is_dropped() {
        let g = gateway(|prompt| {
            if prompt.contains("breaks these requirements") {
                "The gate was opened by the guard.".to_string()
            } else {
                "The guard woke.\nThe gate was opened by the guard.".to_string()
            }
        });
        let t = NarrativeText::new("g", "A guard and a gate.").unwrap();
        let out = extract_vertices(&t, &g, &ExtractionConfig::default()).unwrap();
        assert_eq!(out.vertices.len(), 1);
        assert_eq!(out.dropped.len(), 1);
        assert!(out.reports.iter().all(ValidationReport::is_valid));
    }

    #[test]
    fn empty_output_names_narrative() {
        let g = gateway(|_| "".to_string());
        let t = NarrativeText::new("silent", "Nothing happens.").unwrap();
        match extract_vertices(&t, &g, &ExtractionConfig::default()) {
            Err(ExtractionError::EmptyOutput(id)) => assert_eq!(id, "silent"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_vertices_truncates_and_spans_are_monotone() {
        let g = gateway(|p| {
            let para = paragraph_of(p);
            format!("{para}\nThe crowd cheered.")
        });
        let body = (0..5).map(|i| format!("The soldier {i} marched.")).collect::<Vec<_>>().join("\n\n");
        let t = NarrativeText::new("m", body).unwrap();
        let cfg = ExtractionConfig { max_vertices: 7, ..Default::default() };
        let out = extract_vertices(&t, &g, &cfg).unwrap();
        assert_eq!(out.vertices.len(), 7);
        assert_eq!(out.truncated, 3);
        let starts: Vec<usize> = out.vertices.iter().map(|v| v.source_span.unwrap().start).collect();
        assert!(starts.windows(2).all(|w| w[0] <= w[1]));
    }
}
