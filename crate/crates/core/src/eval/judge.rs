//! Pairwise graph judging over eight fixed dimensions, and win-rate tables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::llm::{catalog, Gateway, GenerationParams, PromptSpec};
use crate::model::{serialize_graph, CausalGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dimension {
    CausalityVsChronology,
    ExplicitMotivation,
    Granularity,
    LogicalCompleteness,
    Hierarchy,
    AccuracyOfConnections,
    DecisionPoints,
    EaseOfReading,
}

impl Dimension {
    pub const ALL: [Dimension; 8] = [
        Dimension::CausalityVsChronology,
        Dimension::ExplicitMotivation,
        Dimension::Granularity,
        Dimension::LogicalCompleteness,
        Dimension::Hierarchy,
        Dimension::AccuracyOfConnections,
        Dimension::DecisionPoints,
        Dimension::EaseOfReading,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::CausalityVsChronology => "Causality vs. Chronology",
            Dimension::ExplicitMotivation => "Explicit Motivations/Intent",
            Dimension::Granularity => "Granularity",
            Dimension::LogicalCompleteness => "Logical Completeness",
            Dimension::Hierarchy => "Hierarchy or Grouping",
            Dimension::AccuracyOfConnections => "Accuracy of Connections",
            Dimension::DecisionPoints => "Decision Points as Branches",
            Dimension::EaseOfReading => "Ease of Reading",
        }
    }

    fn keywords(self) -> &'static [&'static str] {
        match self {
            Dimension::CausalityVsChronology => &["causality", "chronology"],
            Dimension::ExplicitMotivation => &["motivation", "intent"],
            Dimension::Granularity => &["granularity", "level of detail"],
            Dimension::LogicalCompleteness => &["completeness"],
            Dimension::Hierarchy => &["hierarchy", "grouping"],
            Dimension::AccuracyOfConnections => &["accuracy", "connections"],
            Dimension::DecisionPoints => &["decision", "branches"],
            Dimension::EaseOfReading => &["ease of reading", "ease"],
        }
    }

    fn from_line_head(head: &str) -> Option<Dimension> {
        let h = head.trim().trim_start_matches(['-', '*', '#']).trim().to_ascii_lowercase();
        let digits: String = h.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() {
            let rest = h[digits.len()..].trim_start();
            if rest.is_empty() || rest.starts_with('.') || rest.starts_with(')') {
                if let Ok(n) = digits.parse::<usize>() {
                    if (1..=8).contains(&n) {
                        return Some(Dimension::ALL[n - 1]);
                    }
                }
            }
        }
        Dimension::ALL.into_iter().find(|d| d.keywords().iter().any(|k| h.contains(k)))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JudgeKind {
    Human,
    #[serde(rename = "LLM")]
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionVerdict {
    pub narrative_id: String,
    pub dimension: Dimension,
    pub winner: Side,
    pub judge: JudgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub verdicts: Vec<DimensionVerdict>,
    /// Graph B was shown first.
    pub swapped: bool,
    pub request_hash: String,
}

/// Seeded presentation order for one narrative.
pub fn presentation_swapped(seed: u64, narrative_id: &str) -> bool {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(narrative_id.as_bytes());
    h.finalize()[0] & 1 == 1
}

/// Reads `<dimension>: Graph 1|2` lines. Returns per-dimension winners by
/// presented position (1 or 2); dimensions without a clear answer are absent.
pub fn parse_judge_reply(reply: &str) -> BTreeMap<Dimension, u8> {
    let mut out = BTreeMap::new();
    for line in reply.lines() {
        let Some((head, tail)) = line.rsplit_once(':') else { continue };
        let Some(dim) = Dimension::from_line_head(head) else { continue };
        let t = tail.to_ascii_lowercase();
        let one = t.contains("graph 1") || t.trim().trim_end_matches('.') == "1";
        let two = t.contains("graph 2") || t.trim().trim_end_matches('.') == "2";
        let pick = match (one, two) {
            (true, false) => 1,
            (false, true) => 2,
            _ => continue,
        };
        out.entry(dim).or_insert(pick);
    }
    out
}

/// Asks the judge model which graph wins on each dimension. The order in which
/// the two graphs are shown is decided by `seed` and the narrative id, and
/// winners are mapped back to `graph_a` / `graph_b`.
pub fn judge_pair(
    narrative_id: &str,
    story: &str,
    graph_a: &CausalGraph,
    graph_b: &CausalGraph,
    gateway: &Gateway,
    params: &GenerationParams,
    seed: u64,
) -> Result<JudgeOutcome, EvalError> {
    let doc_a = serialize_graph(graph_a).map_err(|e| EvalError::Input(format!("graph A: {e}")))?;
    let doc_b = serialize_graph(graph_b).map_err(|e| EvalError::Input(format!("graph B: {e}")))?;
    if doc_a == doc_b {
        tracing::warn!(narrative_id, "refusing to judge identical graph documents");
        return Err(EvalError::DegeneratePair(narrative_id.to_string()));
    }
    let swapped = presentation_swapped(seed, narrative_id);
    let (first, second) = if swapped { (&doc_b, &doc_a) } else { (&doc_a, &doc_b) };
    let prompt = PromptSpec::new(catalog::GRAPH_JUDGE)
        .var("story", story)
        .var("graph_1", first.trim_end())
        .var("graph_2", second.trim_end());
    let reply = gateway.complete(&prompt, params)?;
    let picks = parse_judge_reply(&reply.text);
    let missing: Vec<String> =
        Dimension::ALL.iter().filter(|d| !picks.contains_key(d)).map(|d| d.name().to_string()).collect();
    if !missing.is_empty() {
        return Err(EvalError::PartialVerdicts { narrative_id: narrative_id.to_string(), missing, raw: reply.text });
    }
    let verdicts = Dimension::ALL
        .iter()
        .map(|&dimension| {
            let shown_first = picks[&dimension] == 1;
            let winner = if shown_first != swapped { Side::A } else { Side::B };
            DimensionVerdict { narrative_id: narrative_id.to_string(), dimension, winner, judge: JudgeKind::Llm }
        })
        .collect();
    Ok(JudgeOutcome { verdicts, swapped, request_hash: reply.request_hash })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateRow {
    pub dimension: Dimension,
    pub wins_a: usize,
    pub n: usize,
    pub percent_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateTable {
    pub rows: Vec<WinRateRow>,
    pub n_narratives: usize,
}

/// Per-dimension share of verdicts won by side A, in percent.
pub fn win_rate_table(verdicts: &[DimensionVerdict]) -> WinRateTable {
    let mut narratives = std::collections::BTreeSet::new();
    let mut tally: BTreeMap<Dimension, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        narratives.insert(v.narrative_id.as_str());
        let e = tally.entry(v.dimension).or_default();
        e.1 += 1;
        if v.winner == Side::A {
            e.0 += 1;
        }
    }
    let rows = Dimension::ALL
        .iter()
        .filter_map(|d| {
            tally.get(d).map(|&(wins_a, n)| WinRateRow {
                dimension: *d,
                wins_a,
                n,
                percent_a: wins_a as f64 / n as f64 * 100.0,
            })
        })
        .collect();
    WinRateTable { rows, n_narratives: narratives.len() }
}

impl WinRateTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<30} {:>9}\n", "Dimension", "Win rate");
        for r in &self.rows {
            out.push_str(&format!("{:<30} {:>8.0}%\n", r.dimension.name(), r.percent_a));
        }
        out.push_str(&format!("(n = {} narratives)\n", self.n_narratives));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(id: &str, d: Dimension, w: Side) -> DimensionVerdict {
        DimensionVerdict { narrative_id: id.into(), dimension: d, winner: w, judge: JudgeKind::Human }
    }

    #[test]
    fn parses_names_and_numbers() {
        let reply = "Causality vs. Chronology: Graph 1\n2. Explicit Motivations/Intent: Graph 2\n\
                     Granularity (Level of Detail): Graph 2\nLogical Completeness: graph 1\n\
                     Hierarchy or Grouping: Graph 1\nAccuracy of Connections: Graph 2\n\
                     Decision Points as Branches: Graph 1\nEase of Reading: Graph 2\nSomething else: Graph 1";
        let p = parse_judge_reply(reply);
        assert_eq!(p.len(), 8);
        assert_eq!(p[&Dimension::ExplicitMotivation], 2);
        assert_eq!(p[&Dimension::LogicalCompleteness], 1);
    }

    #[test]
    fn ambiguous_line_is_skipped() {
        let p = parse_judge_reply("Ease of Reading: Graph 1 or Graph 2");
        assert!(p.is_empty());
    }

    #[test]
    fn win_rates() {
        let mut v: Vec<DimensionVerdict> =
            (0..10).map(|i| verdict(&format!("n{i}"), Dimension::Hierarchy, Side::A)).collect();
        for i in 0..100 {
            v.push(verdict(&format!("m{i}"), Dimension::EaseOfReading, if i < 52 { Side::A } else { Side::B }));
        }
        let t = win_rate_table(&v);
        assert_eq!(t.rows.iter().find(|r| r.dimension == Dimension::Hierarchy).unwrap().percent_a, 100.0);
        assert_eq!(t.rows.iter().find(|r| r.dimension == Dimension::EaseOfReading).unwrap().percent_a, 52.0);
        assert_eq!(t.n_narratives, 110);
        assert!(t.render().contains("Ease of Reading"));
    }
}
