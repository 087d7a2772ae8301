use std::sync::{Arc, Mutex};

use super::*;
use crate::llm::{ChatProvider, ChatRequest, GatewayMode};
use crate::model::StacLabel::{self, *};

fn gateway(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
    let provider: Arc<dyn ChatProvider> = Arc::new(move |req: &ChatRequest| Ok(f(&req.messages.last().unwrap().content)));
    Gateway::builder(GatewayMode::Live).provider(provider).build().unwrap()
}

fn vertices(labels: &[StacLabel]) -> Vec<Vertex> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| Vertex::new(format!("v{:03}", i + 1), format!("The agent number {} acted.", i + 1)).with_stac(*l))
        .collect()
}

fn handle() -> ConversationHandle {
    let g = gateway(|_| "UNDERSTOOD".into());
    condition_bond_schema(&BondSchema::default(), &g, &GenerationParams::default()).unwrap()
}

fn field<'a>(prompt: &'a str, prefix: &str) -> &'a str {
    prompt.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or("")
}

#[test]
fn conditioning_lists_every_bond() {
    let h = handle();
    for b in BondSchema::default().bonds() {
        assert!(h.system_preamble.contains(&format!("({})", b.short())), "missing {}", b.short());
    }
    assert!(!h.system_preamble.contains("(T→S)"));
    assert_eq!(handle().system_preamble, h.system_preamble);
}

#[test]
fn empty_schema_refused() {
    let g = gateway(|_| "UNDERSTOOD".into());
    assert!(matches!(
        condition_bond_schema(&BondSchema::empty(), &g, &GenerationParams::default()),
        Err(GraphError::Configuration(_))
    ));
}

#[test]
fn pair_count_and_schema_directions() {
    let asked = Arc::new(Mutex::new(Vec::new()));
    let a2 = asked.clone();
    let g = gateway(move |p| {
        a2.lock().unwrap().push((field(p, "Event A [").to_string(), field(p, "Event B [").to_string()));
        "YES\nIt does.".into()
    });
    let vs = vertices(&[Task, Situation, Action, Consequence, Action, Situation, Task, Consequence, Action, Action]);
    let log = propose_edges(&vs, &handle(), &g, &GenerationParams::default()).unwrap();
    assert_eq!(log.pairs.len(), 45);
    let asked = asked.lock().unwrap();
    assert!(!asked.iter().any(|(a, b)| a.starts_with("v001]") && b.starts_with("v002]")));
    assert!(asked.iter().any(|(a, b)| a.starts_with("v002]") && b.starts_with("v001]")));
    let schema = BondSchema::default();
    assert!(log.proposals.iter().all(|p| schema.allows(p.bond.0, p.bond.1)));
    assert_eq!(log.proposals.len(), asked.len());
}

#[test]
fn unparseable_proposal_is_no_edge() {
    let g = gateway(|_| "Hard to say.".into());
    let vs = vertices(&[Action, Consequence]);
    let log = propose_edges(&vs, &handle(), &g, &GenerationParams::default()).unwrap();
    assert!(log.proposals.is_empty());
    assert_eq!(log.unparseable, 2);
}

#[test]
fn unlabeled_vertex_rejected() {
    let g = gateway(|_| "YES".into());
    let vs = vec![Vertex::new("v001", "The fox ran.")];
    assert!(matches!(propose_edges(&vs, &handle(), &g, &GenerationParams::default()), Err(GraphError::Unlabeled(_))));
}

fn proposal(from: &str, to: &str, bond: Bond) -> EdgeProposal {
    EdgeProposal { from: VertexId::new(from), to: VertexId::new(to), bond, llm_rationale: String::new(), verdict: Verdict::Proposed }
}

#[test]
fn pruning_rules() {
    let vs = vertices(&[Action, Consequence, Action]);
    let props = vec![proposal("v001", "v002", Bond(Action, Consequence)), proposal("v003", "v002", Bond(Action, Consequence))];
    let g = gateway(|_| "B would still happen.".into());
    let log = prune_counterfactual(&vs, &props, &handle(), &g, &GenerationParams::default()).unwrap();
    assert!(log.proposals.iter().all(|p| p.verdict == Verdict::Pruned));
    assert_eq!(log.confirmed().count(), 0);

    let g = gateway(|_| "unclear".into());
    let log = prune_counterfactual(&vs, &props, &handle(), &g, &GenerationParams::default()).unwrap();
    assert_eq!(log.confirmed().count(), 2);
    assert_eq!(log.unparseable, 2);

    let log = prune_counterfactual(&vs, &[], &handle(), &g, &GenerationParams::default()).unwrap();
    assert!(log.proposals.is_empty());
}

fn edge(from: &str, to: &str, bond: Bond) -> CausalEdge {
    CausalEdge { from: VertexId::new(from), to: VertexId::new(to), bond, origin_iteration: 2, rationale: None }
}

#[test]
fn refinement_without_isolates_is_noop() {
    let vs = vertices(&[Action, Consequence]);
    let mut edges = vec![edge("v001", "v002", Bond(Action, Consequence))];
    let g = gateway(|_| panic!("no prompt expected"));
    let rounds = refine_isolated(&vs, &mut edges, &handle(), &g, &GenerationParams::default(), 2).unwrap();
    assert!(rounds.is_empty());
    assert_eq!(edges.len(), 1);
}

#[test]
fn refinement_admits_valid_and_rejects_schema_violations() {
    // v001 Task, v002 Situation, v003 Action, v004 Consequence; v001 and v002 start isolated.
    let vs = vertices(&[Task, Situation, Action, Consequence]);
    let mut edges = vec![edge("v003", "v004", Bond(Action, Consequence))];
    let g = gateway(|p| {
        if p.contains("has no causal connection yet") {
            if p.contains("Event [v001]") {
                "EFFECT: v002\nEFFECT: v003".into()
            } else {
                "NONE".into()
            }
        } else {
            "NO\nIt would not happen.".into()
        }
    });
    let rounds = refine_isolated(&vs, &mut edges, &handle(), &g, &GenerationParams::default(), 2).unwrap();
    let first = &rounds[0];
    assert_eq!(first.isolated, vec![VertexId::new("v001"), VertexId::new("v002")]);
    let status = |f: &str, t: &str| first.candidates.iter().find(|c| c.from.as_str() == f && c.to.as_str() == t).map(|c| c.status);
    assert_eq!(status("v001", "v002"), Some(CandidateStatus::SchemaViolation));
    assert_eq!(status("v001", "v003"), Some(CandidateStatus::Admitted));
    let added: Vec<&CausalEdge> = edges.iter().filter(|e| e.origin_iteration == 4).collect();
    assert_eq!(added.len(), 1);
    assert_eq!((added[0].from.as_str(), added[0].to.as_str()), ("v001", "v003"));
    assert_eq!(rounds.len(), 2);
    assert_eq!(rounds[1].isolated, vec![VertexId::new("v002")]);
}

#[test]
fn finalize_connectivity() {
    let vs = vertices(&[Action, Consequence]);
    let g = finalize_graph(vs, vec![edge("v001", "v002", Bond(Action, Consequence))], &BondSchema::default(), GraphMetadata::default()).unwrap();
    let c = g.metadata.connectivity.as_ref().unwrap();
    assert_eq!(c.components.len(), 1);
    assert_eq!(c.status, ConnectivityStatus::Connected);

    let vs = vertices(&[Action, Consequence, Action, Consequence]);
    let edges = vec![
        edge("v001", "v002", Bond(Action, Consequence)),
        edge("v003", "v004", Bond(Action, Consequence)),
        edge("v003", "v004", Bond(Action, Consequence)),
        edge("v003", "v003", Bond(Action, Action)),
    ];
    let g = finalize_graph(vs, edges, &BondSchema::default(), GraphMetadata::default()).unwrap();
    let c = g.metadata.connectivity.as_ref().unwrap();
    assert_eq!(c.components.len(), 2);
    assert_eq!(c.status, ConnectivityStatus::DisconnectedWarning);
    assert_eq!(g.edges.len(), 2);

    let vs = vertices(&[Action]);
    assert!(matches!(
        finalize_graph(vs, vec![edge("v001", "v009", Bond(Action, Action))], &BondSchema::default(), GraphMetadata::default()),
        Err(GraphError::Integrity(_))
    ));
}

#[test]
fn why_link_parsing() {
    assert_eq!(
        parse_why_links("CAUSE: v001, v002\n- EFFECT: [v004].\nNONE"),
        vec![(true, "v001".into()), (true, "v002".into()), (false, "v004".into())]
    );
}

#[test]
fn dot_rendering() {
    let mut vs = vertices(&[Action, Consequence]);
    vs[0].text = "x".repeat(80);
    let g = finalize_graph(vs.clone(), vec![edge("v001", "v002", Bond(Action, Consequence))], &BondSchema::default(), GraphMetadata::default()).unwrap();
    let dot = to_dot(&g, None, DotOptions::default());
    assert!(dot.contains("label=\"A→C\""));
    assert!(dot.contains(&format!("[A] {}...", "x".repeat(57))));
    assert!(!dot.contains(&"x".repeat(58)));

    let gw = gateway(|p| if p.contains("If A did not occur") { "YES\nStill happens.".into() } else if p.contains("Does Event A") { "YES".into() } else { "NONE".into() });
    let (built, trace) = build_graph(vs, &BondSchema::default(), &gw, &BuildConfig::default(), GraphMetadata::default()).unwrap();
    assert!(built.edges.is_empty());
    let dashed = to_dot(&built, Some(&trace), DotOptions { include_pruned: true });
    assert!(dashed.contains("style=dashed"));
    assert!(!to_dot(&built, Some(&trace), DotOptions::default()).contains("dashed"));
}
