//! Canonical JSON document form of a [`CausalGraph`].
//!
//! Vertices are written sorted by id and edges by `(from, to)`, all optional
//! fields are written explicitly as `null`, and the output ends with a single
//! newline, so structurally equal graphs produce byte-identical documents.

use serde::{Deserialize, Serialize};

use super::{CausalEdge, CausalGraph, GraphMetadata, ModelError, Vertex};

pub const GRAPH_DOCUMENT_VERSION: u32 = 1;

#[derive(Serialize)]
struct DocumentRef<'a> {
    version: u32,
    metadata: &'a GraphMetadata,
    vertices: &'a [Vertex],
    edges: &'a [CausalEdge],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    metadata: GraphMetadata,
    vertices: Vec<Vertex>,
    edges: Vec<CausalEdge>,
}

/// Writes the canonical document. The graph must satisfy its invariants.
pub fn serialize_graph(graph: &CausalGraph) -> Result<String, ModelError> {
    graph.validate()?;
    let canonical = graph.clone().canonical();
    let doc = DocumentRef {
        version: GRAPH_DOCUMENT_VERSION,
        metadata: &canonical.metadata,
        vertices: &canonical.vertices,
        edges: &canonical.edges,
    };
    let mut out = serde_json::to_string_pretty(&doc).map_err(|e| ModelError::Parse {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    out.push('\n');
    Ok(out)
}

/// Parses and integrity-checks a graph document.
pub fn deserialize_graph(document: &str) -> Result<CausalGraph, ModelError> {
    let doc: Document = serde_json::from_str(document).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.version != GRAPH_DOCUMENT_VERSION {
        return Err(ModelError::UnsupportedVersion(doc.version));
    }
    let graph = CausalGraph { vertices: doc.vertices, edges: doc.edges, metadata: doc.metadata };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bond, StacLabel::*, VertexId};

    fn two_vertex() -> CausalGraph {
        CausalGraph {
            vertices: vec![
                Vertex::new("v002", "The crowd laughed.").with_stac(Consequence),
                Vertex::new("v001", "The child shouted.").with_stac(Action),
            ],
            edges: vec![CausalEdge {
                from: VertexId::new("v001"),
                to: VertexId::new("v002"),
                bond: Bond(Action, Consequence),
                origin_iteration: 2,
                rationale: Some("The shout exposed the truth.".into()),
            }],
            metadata: GraphMetadata { narrative_id: "fable".into(), ..Default::default() },
        }
    }

    #[test]
    fn empty_graph_round_trips() {
        let g = CausalGraph::default();
        let doc = serialize_graph(&g).unwrap();
        assert_eq!(deserialize_graph(&doc).unwrap(), g);
    }

    #[test]
    fn small_graph_round_trips_canonically() {
        let g = two_vertex();
        let doc = serialize_graph(&g).unwrap();
        let back = deserialize_graph(&doc).unwrap();
        assert_eq!(back, g.clone().canonical());
        assert_eq!(serialize_graph(&back).unwrap(), doc);
    }

    #[test]
    fn parse_error_carries_location() {
        let err = deserialize_graph("{\n  \"version\": 1,\n  oops\n}").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let doc = serialize_graph(&two_vertex()).unwrap();
        let tampered = doc.replacen("\"version\": 1,", "\"version\": 1,\n  \"extra\": true,", 1);
        assert!(matches!(deserialize_graph(&tampered), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn dangling_endpoint_is_integrity_error() {
        let doc = serialize_graph(&two_vertex()).unwrap();
        let tampered = doc.replace("\"to\": \"v002\"", "\"to\": \"v404\"");
        assert!(matches!(deserialize_graph(&tampered), Err(ModelError::Integrity(_))));
    }
}
