//! Causal graph construction over STAC-labeled vertices: schema
//! conditioning, pairwise proposal, counterfactual pruning, isolated-vertex
//! refinement and final assembly.

mod dot;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::answer::parse_yes_no;
use crate::llm::{catalog, Gateway, GatewayError, GenerationParams, PromptSpec};
use crate::model::{
    Bond, BondSchema, CausalEdge, CausalGraph, Connectivity, ConnectivityStatus, GraphMetadata, ModelError, Vertex,
    VertexId,
};

pub use dot::{to_dot, DotOptions, DOT_LABEL_CHARS};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph configuration error: {0}")]
    Configuration(String),
    #[error("vertex {0} has no STAC label")]
    Unlabeled(VertexId),
    #[error("graph integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<ModelError> for GraphError {
    fn from(e: ModelError) -> Self {
        GraphError::Integrity(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Proposed,
    Pruned,
    Confirmed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeProposal {
    pub from: VertexId,
    pub to: VertexId,
    pub bond: Bond,
    pub llm_rationale: String,
    pub verdict: Verdict,
}

/// Model context carrying the bond schema into every later prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationHandle {
    pub schema: BondSchema,
    pub system_preamble: String,
    pub conditioning_hash: String,
}

impl ConversationHandle {
    fn prompt(&self, template: &str) -> PromptSpec {
        PromptSpec::new(template).system(self.system_preamble.clone())
    }
}

/// Bullet list of allowed bonds with their definitions.
pub fn bond_table(schema: &BondSchema) -> String {
    schema
        .bonds()
        .map(|b| {
            let def = BondSchema::definition(b).unwrap_or("A permitted causal bond.");
            format!("- {} -> {} ({}): {def}", b.0, b.1, b.short())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Sends the bond schema to the model; the rendered text becomes the system
/// preamble of every later prompt.
pub fn condition_bond_schema(
    schema: &BondSchema,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<ConversationHandle, GraphError> {
    if schema.is_empty() {
        return Err(GraphError::Configuration("bond schema is empty".into()));
    }
    let prompt = PromptSpec::new(catalog::BOND_CONDITIONING).var("bond_table", bond_table(schema));
    let text = gateway.render_prompt(&prompt)?;
    let reply = gateway.complete(&prompt, params)?;
    Ok(ConversationHandle { schema: schema.clone(), system_preamble: text, conditioning_hash: reply.request_hash })
}

fn narrative_listing(vertices: &[Vertex]) -> String {
    vertices
        .iter()
        .map(|v| match v.stac {
            Some(l) => format!("[{}] ({}) {}", v.id, l, v.text),
            None => format!("[{}] {}", v.id, v.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionQuery {
    pub from: VertexId,
    pub to: VertexId,
    pub request_hash: String,
    /// `None` when the reply could not be read.
    pub answer: Option<bool>,
}

/// One unordered vertex pair and the directions put to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub a: VertexId,
    pub b: VertexId,
    pub queried: Vec<DirectionQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalLog {
    pub pairs: Vec<PairEvaluation>,
    pub proposals: Vec<EdgeProposal>,
    pub unparseable: usize,
}

fn labeled(vertices: &[Vertex]) -> Result<Vec<crate::model::StacLabel>, GraphError> {
    vertices.iter().map(|v| v.stac.ok_or_else(|| GraphError::Unlabeled(v.id.clone()))).collect()
}

/// Considers every unordered pair once and asks about each direction the
/// schema allows. Only a clear YES produces a proposal.
pub fn propose_edges(
    vertices: &[Vertex],
    handle: &ConversationHandle,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<ProposalLog, GraphError> {
    let labels = labeled(vertices)?;
    let narrative = narrative_listing(vertices);
    let mut pair_dirs: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
    let mut prompts = Vec::new();
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            let mut dirs = Vec::new();
            for (f, t) in [(i, j), (j, i)] {
                if !handle.schema.allows(labels[f], labels[t]) {
                    continue;
                }
                let bond = Bond(labels[f], labels[t]);
                let (vf, vt) = (&vertices[f], &vertices[t]);
                prompts.push(
                    handle
                        .prompt(catalog::EDGE_PROPOSAL)
                        .var("narrative", narrative.clone())
                        .var("from_id", vf.id.as_str())
                        .var("from_label", labels[f].as_str())
                        .var("from_text", vf.text.clone())
                        .var("to_id", vt.id.as_str())
                        .var("to_label", labels[t].as_str())
                        .var("to_text", vt.text.clone())
                        .var("bond", bond.short())
                        .var("bond_definition", BondSchema::definition(bond).unwrap_or("A permitted causal bond."))
                        .var("answer_format", catalog::yes_no_format()),
                );
                dirs.push((f, t));
            }
            pair_dirs.push((i, j, dirs));
        }
    }
    let mut replies = gateway.complete_many(&prompts, params).into_iter();
    let mut log = ProposalLog { pairs: Vec::with_capacity(pair_dirs.len()), proposals: Vec::new(), unparseable: 0 };
    for (i, j, dirs) in pair_dirs {
        let mut queried = Vec::with_capacity(dirs.len());
        for (f, t) in dirs {
            let reply = replies.next().expect("one reply per prompt")?;
            let parsed = parse_yes_no(&reply.text);
            let (from, to) = (vertices[f].id.clone(), vertices[t].id.clone());
            match &parsed {
                Some(yn) if yn.yes => log.proposals.push(EdgeProposal {
                    from: from.clone(),
                    to: to.clone(),
                    bond: Bond(labels[f], labels[t]),
                    llm_rationale: yn.rationale.clone().unwrap_or_default(),
                    verdict: Verdict::Proposed,
                }),
                Some(_) => {}
                None => {
                    tracing::warn!(%from, %to, reply = %reply.text, "unreadable proposal verdict; no edge");
                    log.unparseable += 1;
                }
            }
            queried.push(DirectionQuery { from, to, request_hash: reply.request_hash, answer: parsed.map(|p| p.yes) });
        }
        log.pairs.push(PairEvaluation { a: vertices[i].id.clone(), b: vertices[j].id.clone(), queried });
    }
    Ok(log)
}

/// Counterfactual reading of a reply: `Some(true)` when B would still happen.
fn still_happens(reply: &str) -> Option<bool> {
    if let Some(yn) = parse_yes_no(reply) {
        return Some(yn.yes);
    }
    let lower = reply.to_lowercase();
    if lower.contains("would still happen") || lower.contains("would still occur") {
        Some(true)
    } else if lower.contains("would not happen") || lower.contains("would not occur") {
        Some(false)
    } else {
        None
    }
}

fn counterfactual_prompt(
    handle: &ConversationHandle,
    narrative: &str,
    from: &Vertex,
    to: &Vertex,
) -> PromptSpec {
    handle
        .prompt(catalog::COUNTERFACTUAL_PRUNE)
        .var("narrative", narrative)
        .var("from_id", from.id.as_str())
        .var("to_id", to.id.as_str())
        .var("from_text", from.text.clone())
        .var("to_text", to.text.clone())
        .var("answer_format", catalog::yes_no_format())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneLog {
    /// Every input proposal with its final verdict.
    pub proposals: Vec<EdgeProposal>,
    pub request_hashes: Vec<String>,
    pub unparseable: usize,
}

impl PruneLog {
    pub fn confirmed(&self) -> impl Iterator<Item = &EdgeProposal> {
        self.proposals.iter().filter(|p| p.verdict == Verdict::Confirmed)
    }
}

fn vertex_index(vertices: &[Vertex]) -> BTreeMap<&VertexId, usize> {
    vertices.iter().enumerate().map(|(i, v)| (&v.id, i)).collect()
}

/// Asks whether each target would still happen without its source. A clear
/// yes prunes the edge; anything unreadable keeps it.
pub fn prune_counterfactual(
    vertices: &[Vertex],
    proposals: &[EdgeProposal],
    handle: &ConversationHandle,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<PruneLog, GraphError> {
    let index = vertex_index(vertices);
    let narrative = narrative_listing(vertices);
    let mut prompts = Vec::with_capacity(proposals.len());
    for p in proposals {
        let f = *index.get(&p.from).ok_or_else(|| GraphError::Integrity(format!("unknown vertex {}", p.from)))?;
        let t = *index.get(&p.to).ok_or_else(|| GraphError::Integrity(format!("unknown vertex {}", p.to)))?;
        prompts.push(counterfactual_prompt(handle, &narrative, &vertices[f], &vertices[t]));
    }
    let mut log = PruneLog { proposals: Vec::with_capacity(proposals.len()), request_hashes: Vec::new(), unparseable: 0 };
    for (p, reply) in proposals.iter().zip(gateway.complete_many(&prompts, params)) {
        let reply = reply?;
        let verdict = match still_happens(&reply.text) {
            Some(true) => Verdict::Pruned,
            Some(false) => Verdict::Confirmed,
            None => {
                tracing::warn!(from = %p.from, to = %p.to, reply = %reply.text, "unreadable counterfactual verdict; keeping edge");
                log.unparseable += 1;
                Verdict::Confirmed
            }
        };
        log.request_hashes.push(reply.request_hash);
        log.proposals.push(EdgeProposal { verdict, ..p.clone() });
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateStatus {
    Admitted,
    UnknownVertex,
    SelfLoop,
    SchemaViolation,
    AlreadyPresent,
    PreviouslyRejected,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub isolate: VertexId,
    pub from: VertexId,
    pub to: VertexId,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub round: usize,
    pub isolated: Vec<VertexId>,
    pub candidates: Vec<Candidate>,
    pub request_hashes: Vec<String>,
}

/// Reads `CAUSE: <id>` / `EFFECT: <id>` lines; returns (is_cause, id) pairs.
pub fn parse_why_links(reply: &str) -> Vec<(bool, String)> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let Some((kind, rest)) = line.split_once(':') else { continue };
        let is_cause = match kind.trim().to_ascii_lowercase().as_str() {
            "cause" => true,
            "effect" => false,
            _ => continue,
        };
        for id in rest.split([',', ' ']).map(|s| s.trim().trim_matches(['[', ']', '.'])).filter(|s| !s.is_empty()) {
            out.push((is_cause, id.to_string()));
        }
    }
    out
}

/// Asks the model about each isolated vertex, for at most `max_rounds`
/// passes. Candidates must be schema-valid and survive the counterfactual
/// question; admitted edges carry `origin_iteration = 4`.
pub fn refine_isolated(
    vertices: &[Vertex],
    edges: &mut Vec<CausalEdge>,
    handle: &ConversationHandle,
    gateway: &Gateway,
    params: &GenerationParams,
    max_rounds: usize,
) -> Result<Vec<RefinementRound>, GraphError> {
    let labels = labeled(vertices)?;
    let index = vertex_index(vertices);
    let narrative = narrative_listing(vertices);
    let mut rejected: BTreeMap<VertexId, BTreeSet<(VertexId, VertexId)>> = BTreeMap::new();
    let mut rounds = Vec::new();
    for round in 1..=max_rounds {
        let mut degree = vec![0usize; vertices.len()];
        for e in edges.iter() {
            degree[index[&e.from]] += 1;
            degree[index[&e.to]] += 1;
        }
        let isolated: Vec<usize> = (0..vertices.len()).filter(|&i| degree[i] == 0).collect();
        if isolated.is_empty() {
            break;
        }
        let prompts: Vec<PromptSpec> = isolated
            .iter()
            .map(|&i| {
                let v = &vertices[i];
                let prior: Vec<String> = rejected
                    .get(&v.id)
                    .map(|s| s.iter().map(|(f, t)| format!("{f}->{t}")).collect())
                    .unwrap_or_default();
                handle
                    .prompt(catalog::ISOLATED_WHY)
                    .var("narrative", narrative.clone())
                    .var("vertex_id", v.id.as_str())
                    .var("vertex_label", labels[i].as_str())
                    .var("vertex_text", v.text.clone())
                    .var("round", round.to_string())
                    .var("rejected", if prior.is_empty() { "none".to_string() } else { prior.join(", ") })
            })
            .collect();
        let mut record = RefinementRound {
            round,
            isolated: isolated.iter().map(|&i| vertices[i].id.clone()).collect(),
            candidates: Vec::new(),
            request_hashes: Vec::new(),
        };
        let existing: BTreeSet<(VertexId, VertexId)> = edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
        let mut pending: Vec<(usize, usize, usize)> = Vec::new();
        let mut pending_set = BTreeSet::new();
        for (&iso, reply) in isolated.iter().zip(gateway.complete_many(&prompts, params)) {
            let reply = reply?;
            record.request_hashes.push(reply.request_hash);
            for (is_cause, other) in parse_why_links(&reply.text) {
                let iso_id = vertices[iso].id.clone();
                let Some(&o) = index.get(&VertexId::new(other.clone())) else {
                    tracing::warn!(isolate = %iso_id, candidate = %other, "candidate names an unknown vertex");
                    record.candidates.push(Candidate {
                        isolate: iso_id.clone(),
                        from: if is_cause { VertexId::new(other.clone()) } else { iso_id.clone() },
                        to: if is_cause { iso_id } else { VertexId::new(other) },
                        status: CandidateStatus::UnknownVertex,
                    });
                    continue;
                };
                let (f, t) = if is_cause { (o, iso) } else { (iso, o) };
                let key = (vertices[f].id.clone(), vertices[t].id.clone());
                let status = if f == t {
                    Some(CandidateStatus::SelfLoop)
                } else if !handle.schema.allows(labels[f], labels[t]) {
                    tracing::info!(from = %key.0, to = %key.1, "candidate rejected by bond schema");
                    Some(CandidateStatus::SchemaViolation)
                } else if existing.contains(&key) || pending_set.contains(&key) {
                    Some(CandidateStatus::AlreadyPresent)
                } else if rejected.get(&iso_id).is_some_and(|s| s.contains(&key)) {
                    Some(CandidateStatus::PreviouslyRejected)
                } else {
                    None
                };
                match status {
                    Some(status) => {
                        if matches!(status, CandidateStatus::SchemaViolation | CandidateStatus::SelfLoop) {
                            rejected.entry(iso_id.clone()).or_default().insert(key.clone());
                        }
                        record.candidates.push(Candidate { isolate: iso_id, from: key.0, to: key.1, status });
                    }
                    None => {
                        pending_set.insert(key);
                        pending.push((iso, f, t));
                    }
                }
            }
        }
        let cf_prompts: Vec<PromptSpec> =
            pending.iter().map(|&(_, f, t)| counterfactual_prompt(handle, &narrative, &vertices[f], &vertices[t])).collect();
        for (&(iso, f, t), reply) in pending.iter().zip(gateway.complete_many(&cf_prompts, params)) {
            let reply = reply?;
            record.request_hashes.push(reply.request_hash);
            let key = (vertices[f].id.clone(), vertices[t].id.clone());
            let iso_id = vertices[iso].id.clone();
            let status = if still_happens(&reply.text) == Some(true) {
                rejected.entry(iso_id.clone()).or_default().insert(key.clone());
                CandidateStatus::Counterfactual
            } else {
                edges.push(CausalEdge {
                    from: key.0.clone(),
                    to: key.1.clone(),
                    bond: Bond(labels[f], labels[t]),
                    origin_iteration: 4,
                    rationale: parse_yes_no(&reply.text).and_then(|y| y.rationale),
                });
                CandidateStatus::Admitted
            };
            record.candidates.push(Candidate { isolate: iso_id, from: key.0, to: key.1, status });
        }
        rounds.push(record);
    }
    Ok(rounds)
}

/// Drops self-loops, duplicates and bond-invalid edges, then attaches the
/// connectivity and cycle report.
pub fn finalize_graph(
    vertices: Vec<Vertex>,
    edges: Vec<CausalEdge>,
    schema: &BondSchema,
    mut metadata: GraphMetadata,
) -> Result<CausalGraph, GraphError> {
    let index = vertex_index(&vertices);
    let mut seen = BTreeSet::new();
    let mut kept = Vec::with_capacity(edges.len());
    for e in edges {
        let (Some(&f), Some(&t)) = (index.get(&e.from), index.get(&e.to)) else {
            return Err(GraphError::Integrity(format!("edge {}->{} references an unknown vertex", e.from, e.to)));
        };
        if f == t || !seen.insert((e.from.clone(), e.to.clone())) {
            continue;
        }
        let (Some(lf), Some(lt)) = (vertices[f].stac, vertices[t].stac) else {
            return Err(GraphError::Unlabeled(if vertices[f].stac.is_none() { e.from } else { e.to }));
        };
        if !schema.allows(lf, lt) || e.bond != Bond(lf, lt) {
            tracing::warn!(from = %e.from, to = %e.to, "dropping edge with invalid bond");
            continue;
        }
        kept.push(e);
    }
    let mut graph = CausalGraph { vertices, edges: kept, metadata: GraphMetadata::default() };
    graph.canonicalize();
    let components = graph.weak_components();
    let cycles = graph.cycles();
    let status = if components.len() <= 1 { ConnectivityStatus::Connected } else { ConnectivityStatus::DisconnectedWarning };
    if status == ConnectivityStatus::DisconnectedWarning {
        tracing::warn!(components = components.len(), "graph is not weakly connected");
    }
    metadata.connectivity = Some(Connectivity { status, components, cycles });
    graph.metadata = metadata;
    graph.validate_against(schema)?;
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub max_rounds: usize,
    pub params: GenerationParams,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { max_rounds: 2, params: GenerationParams::default() }
    }
}

type EdgeKey = (VertexId, VertexId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshots {
    pub iteration2: Vec<EdgeKey>,
    pub iteration3: Vec<EdgeKey>,
    pub iteration4: Vec<EdgeKey>,
    pub final_edges: Vec<EdgeKey>,
}

/// Record of one build, sufficient to audit each iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildTrace {
    pub narrative_id: String,
    pub conditioning_hash: String,
    pub pair_evaluations: usize,
    pub proposal_log: ProposalLog,
    pub prune_log: PruneLog,
    pub refinement: Vec<RefinementRound>,
    pub isolated_after_refinement: Vec<VertexId>,
    pub snapshots: Snapshots,
}

impl BuildTrace {
    /// Every request hash the build used, in issue order.
    pub fn request_hashes(&self) -> Vec<&str> {
        let mut out = vec![self.conditioning_hash.as_str()];
        for p in &self.proposal_log.pairs {
            out.extend(p.queried.iter().map(|q| q.request_hash.as_str()));
        }
        out.extend(self.prune_log.request_hashes.iter().map(String::as_str));
        for r in &self.refinement {
            out.extend(r.request_hashes.iter().map(String::as_str));
        }
        out
    }

    pub fn pruned(&self) -> impl Iterator<Item = &EdgeProposal> {
        self.prune_log.proposals.iter().filter(|p| p.verdict == Verdict::Pruned)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes") + "\n"
    }
}

fn keys<'a>(edges: impl Iterator<Item = (&'a VertexId, &'a VertexId)>) -> Vec<EdgeKey> {
    let set: BTreeSet<EdgeKey> = edges.map(|(f, t)| (f.clone(), t.clone())).collect();
    set.into_iter().collect()
}

/// Runs all five iterations. `metadata` supplies the narrative id and config
/// fingerprint; the build timestamp is the latest recorded exchange when the
/// gateway has a cassette, otherwise the current time.
pub fn build_graph(
    vertices: Vec<Vertex>,
    schema: &BondSchema,
    gateway: &Gateway,
    config: &BuildConfig,
    mut metadata: GraphMetadata,
) -> Result<(CausalGraph, BuildTrace), GraphError> {
    let params = &config.params;
    let handle = condition_bond_schema(schema, gateway, params)?;
    let proposal_log = propose_edges(&vertices, &handle, gateway, params)?;
    let prune_log = prune_counterfactual(&vertices, &proposal_log.proposals, &handle, gateway, params)?;
    let mut edges: Vec<CausalEdge> = prune_log
        .confirmed()
        .map(|p| CausalEdge {
            from: p.from.clone(),
            to: p.to.clone(),
            bond: p.bond,
            origin_iteration: 2,
            rationale: (!p.llm_rationale.is_empty()).then(|| p.llm_rationale.clone()),
        })
        .collect();
    let iteration3 = keys(edges.iter().map(|e| (&e.from, &e.to)));
    let refinement = refine_isolated(&vertices, &mut edges, &handle, gateway, params, config.max_rounds)?;
    let iteration4 = keys(edges.iter().map(|e| (&e.from, &e.to)));

    let mut trace = BuildTrace {
        narrative_id: metadata.narrative_id.clone(),
        conditioning_hash: handle.conditioning_hash.clone(),
        pair_evaluations: proposal_log.pairs.len(),
        snapshots: Snapshots {
            iteration2: keys(proposal_log.proposals.iter().map(|p| (&p.from, &p.to))),
            iteration3,
            iteration4,
            final_edges: Vec::new(),
        },
        proposal_log,
        prune_log,
        refinement,
        isolated_after_refinement: Vec::new(),
    };
    let stamp = gateway
        .latest_timestamp(trace.request_hashes())
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    metadata.timestamps.insert("graph_built".into(), stamp);
    let graph = finalize_graph(vertices, edges, schema, metadata)?;
    trace.snapshots.final_edges = keys(graph.edges.iter().map(|e| (&e.from, &e.to)));
    trace.isolated_after_refinement = graph.isolated();
    Ok((graph, trace))
}

#[cfg(test)]
mod tests;
