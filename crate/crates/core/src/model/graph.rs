use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Bond, BondSchema, ExpertIndex, ModelError, StacLabel};

/// Stable vertex identifier, unique within a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn new(s: impl Into<String>) -> Self {
        VertexId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Half-open character range `[start, end)` in the source narrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

/// One simplified event sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: VertexId,
    pub text: String,
    pub source_span: Option<SourceSpan>,
    pub expert_index: Option<ExpertIndex>,
    pub stac: Option<StacLabel>,
}

impl Vertex {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Vertex {
            id: VertexId::new(id),
            text: text.into(),
            source_span: None,
            expert_index: None,
            stac: None,
        }
    }

    pub fn with_stac(mut self, stac: StacLabel) -> Self {
        self.stac = Some(stac);
        self
    }
}

/// Directed causal edge `from → to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalEdge {
    pub from: VertexId,
    pub to: VertexId,
    pub bond: Bond,
    /// 2 for edges proposed pairwise, 4 for edges recovered for isolated vertices.
    pub origin_iteration: u8,
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectivityStatus {
    Connected,
    DisconnectedWarning,
}

/// Weak-connectivity and cycle report attached by graph finalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connectivity {
    pub status: ConnectivityStatus,
    /// Weakly connected components, each sorted, ordered by smallest member.
    pub components: Vec<Vec<VertexId>>,
    /// Strongly connected components with more than one vertex.
    pub cycles: Vec<Vec<VertexId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMetadata {
    pub narrative_id: String,
    pub timestamps: BTreeMap<String, String>,
    pub config_fingerprint: String,
    pub connectivity: Option<Connectivity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CausalGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<CausalEdge>,
    pub metadata: GraphMetadata,
}

impl CausalGraph {
    pub fn vertex(&self, id: &VertexId) -> Option<&Vertex> {
        self.vertices.iter().find(|v| &v.id == id)
    }

    /// Sorts vertices by id and edges by (from, to).
    pub fn canonicalize(&mut self) {
        self.vertices.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges
            .sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Checks every structural invariant that does not depend on a schema.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut ids = HashMap::with_capacity(self.vertices.len());
        for v in &self.vertices {
            if v.text.trim().is_empty() {
                return Err(ModelError::Integrity(format!("vertex {} has empty text", v.id)));
            }
            if ids.insert(&v.id, v).is_some() {
                return Err(ModelError::Integrity(format!("duplicate vertex id {}", v.id)));
            }
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            let (Some(from), Some(to)) = (ids.get(&e.from), ids.get(&e.to)) else {
                let missing = if ids.contains_key(&e.from) { &e.to } else { &e.from };
                return Err(ModelError::Integrity(format!(
                    "edge {} -> {} references unknown vertex {}",
                    e.from, e.to, missing
                )));
            };
            if e.from == e.to {
                return Err(ModelError::Integrity(format!("self-loop on {}", e.from)));
            }
            if !seen.insert((&e.from, &e.to)) {
                return Err(ModelError::Integrity(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
            if !matches!(e.origin_iteration, 2 | 4) {
                return Err(ModelError::Integrity(format!(
                    "edge {} -> {} has origin iteration {}",
                    e.from, e.to, e.origin_iteration
                )));
            }
            if let (Some(a), Some(b)) = (from.stac, to.stac) {
                if e.bond != Bond(a, b) {
                    return Err(ModelError::Integrity(format!(
                        "edge {} -> {} bond {} disagrees with vertex labels {}",
                        e.from,
                        e.to,
                        e.bond.short(),
                        Bond(a, b).short()
                    )));
                }
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus membership of every bond in `schema`.
    pub fn validate_against(&self, schema: &BondSchema) -> Result<(), ModelError> {
        self.validate()?;
        for e in &self.edges {
            if !schema.allows(e.bond.0, e.bond.1) {
                return Err(ModelError::Integrity(format!(
                    "edge {} -> {} has disallowed bond {}",
                    e.from,
                    e.to,
                    e.bond.short()
                )));
            }
        }
        Ok(())
    }

    /// Undirected degree per vertex id.
    pub fn degrees(&self) -> BTreeMap<&VertexId, usize> {
        let mut deg: BTreeMap<&VertexId, usize> = self.vertices.iter().map(|v| (&v.id, 0)).collect();
        for e in &self.edges {
            *deg.entry(&e.from).or_default() += 1;
            *deg.entry(&e.to).or_default() += 1;
        }
        deg
    }

    pub fn isolated(&self) -> Vec<VertexId> {
        self.degrees()
            .into_iter()
            .filter(|(_, d)| *d == 0)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Weakly connected components, each sorted, ordered by smallest member.
    pub fn weak_components(&self) -> Vec<Vec<VertexId>> {
        let index: HashMap<&VertexId, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (&v.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (index.get(&e.from), index.get(&e.to)) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<VertexId>> = BTreeMap::new();
        for i in 0..self.vertices.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(self.vertices[i].id.clone());
        }
        let mut comps: Vec<Vec<VertexId>> = groups
            .into_values()
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        comps.sort();
        comps
    }

    /// Strongly connected components of size ≥ 2 (Tarjan), sorted like
    /// [`weak_components`](Self::weak_components).
    pub fn cycles(&self) -> Vec<Vec<VertexId>> {
        let n = self.vertices.len();
        let index: HashMap<&VertexId, usize> =
            self.vertices.iter().enumerate().map(|(i, v)| (&v.id, i)).collect();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Some(&a), Some(&b)) = (index.get(&e.from), index.get(&e.to)) {
                adj[a].push(b);
            }
        }

        struct Tarjan<'a> {
            adj: &'a [Vec<usize>],
            counter: usize,
            idx: Vec<Option<usize>>,
            low: Vec<usize>,
            on_stack: Vec<bool>,
            stack: Vec<usize>,
            out: Vec<Vec<usize>>,
        }
        impl Tarjan<'_> {
            fn visit(&mut self, v: usize) {
                self.idx[v] = Some(self.counter);
                self.low[v] = self.counter;
                self.counter += 1;
                self.stack.push(v);
                self.on_stack[v] = true;
                for i in 0..self.adj[v].len() {
                    let w = self.adj[v][i];
                    match self.idx[w] {
                        None => {
                            self.visit(w);
                            self.low[v] = self.low[v].min(self.low[w]);
                        }
                        Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                        _ => {}
                    }
                }
                if Some(self.low[v]) == self.idx[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = self.stack.pop() {
                        self.on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    self.out.push(comp);
                }
            }
        }

        let mut t = Tarjan {
            adj: &adj,
            counter: 0,
            idx: vec![None; n],
            low: vec![0; n],
            on_stack: vec![false; n],
            stack: Vec::new(),
            out: Vec::new(),
        };
        for v in 0..n {
            if t.idx[v].is_none() {
                t.visit(v);
            }
        }
        let mut cycles: Vec<Vec<VertexId>> = t
            .out
            .into_iter()
            .filter(|c| c.len() > 1)
            .map(|c| {
                let mut ids: Vec<VertexId> = c.into_iter().map(|i| self.vertices[i].id.clone()).collect();
                ids.sort();
                ids
            })
            .collect();
        cycles.sort();
        cycles
    }

    /// Set of directed (from, to) pairs.
    pub fn edge_set(&self) -> BTreeSet<(VertexId, VertexId)> {
        self.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StacLabel::*;

    fn edge(from: &str, to: &str, bond: Bond) -> CausalEdge {
        CausalEdge {
            from: VertexId::new(from),
            to: VertexId::new(to),
            bond,
            origin_iteration: 2,
            rationale: None,
        }
    }

    fn sample() -> CausalGraph {
        CausalGraph {
            vertices: vec![
                Vertex::new("v1", "The emperor ordered new clothes.").with_stac(Action),
                Vertex::new("v2", "The weavers wove nothing.").with_stac(Action),
                Vertex::new("v3", "The child laughed.").with_stac(Action),
            ],
            edges: vec![edge("v1", "v2", Bond(Action, Action))],
            metadata: GraphMetadata::default(),
        }
    }

    #[test]
    fn validate_catches_dangling_and_loops() {
        let mut g = sample();
        assert!(g.validate().is_ok());
        g.edges.push(edge("v1", "v9", Bond(Action, Action)));
        assert!(matches!(g.validate(), Err(ModelError::Integrity(m)) if m.contains("v9")));
        g.edges.pop();
        g.edges.push(edge("v2", "v2", Bond(Action, Action)));
        assert!(g.validate().is_err());
        g.edges.pop();
        g.edges.push(edge("v1", "v2", Bond(Action, Action)));
        assert!(g.validate().is_err(), "duplicate edge accepted");
    }

    #[test]
    fn validate_checks_bond_against_labels() {
        let mut g = sample();
        g.edges[0].bond = Bond(Action, Consequence);
        assert!(g.validate().is_err());
    }

    #[test]
    fn components_and_isolates() {
        let g = sample();
        assert_eq!(g.isolated(), vec![VertexId::new("v3")]);
        let comps = g.weak_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], vec![VertexId::new("v1"), VertexId::new("v2")]);
    }

    #[test]
    fn detects_two_cycle() {
        let mut g = sample();
        g.edges.push(edge("v2", "v1", Bond(Action, Action)));
        assert_eq!(g.cycles(), vec![vec![VertexId::new("v1"), VertexId::new("v2")]]);
        g.edges.pop();
        assert!(g.cycles().is_empty());
    }
}
