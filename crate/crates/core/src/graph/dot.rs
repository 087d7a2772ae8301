//! Graphviz DOT rendering.

use super::{BuildTrace, Verdict};
use crate::model::CausalGraph;

pub const DOT_LABEL_CHARS: usize = 60;

#[derive(Debug, Clone, Copy, Default)]
pub struct DotOptions {
    /// Draw edges removed by counterfactual pruning as dashed lines.
    pub include_pruned: bool,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

fn truncate(s: &str) -> String {
    if s.chars().count() <= DOT_LABEL_CHARS {
        return s.to_string();
    }
    let mut out: String = s.chars().take(DOT_LABEL_CHARS - 3).collect();
    out.push_str("...");
    out
}

pub fn to_dot(graph: &CausalGraph, trace: Option<&BuildTrace>, options: DotOptions) -> String {
    let mut out = String::new();
    let name = if graph.metadata.narrative_id.is_empty() { "narrative" } else { &graph.metadata.narrative_id };
    out.push_str(&format!("digraph \"{}\" {{\n", escape(name)));
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for v in &graph.vertices {
        let label = match v.stac {
            Some(l) => format!("[{}] {}", l.letter(), truncate(&v.text)),
            None => truncate(&v.text),
        };
        out.push_str(&format!("  \"{}\" [label=\"{}\"];\n", escape(v.id.as_str()), escape(&label)));
    }
    for e in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            escape(e.from.as_str()),
            escape(e.to.as_str()),
            e.bond.short()
        ));
    }
    if options.include_pruned {
        if let Some(trace) = trace {
            for p in trace.prune_log.proposals.iter().filter(|p| p.verdict == Verdict::Pruned) {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [label=\"{}\", style=dashed, color=gray];\n",
                    escape(p.from.as_str()),
                    escape(p.to.as_str()),
                    p.bond.short()
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}
