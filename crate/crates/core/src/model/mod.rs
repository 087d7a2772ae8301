//! Shared domain types: labels, the Expert Index record, causal graphs, the
//! bond allowlist and the graph document format.

mod bond;
mod document;
mod graph;
mod labels;

pub use bond::{all_pairs, bond_allowed, Bond, BondSchema};
pub use document::{deserialize_graph, serialize_graph, GRAPH_DOCUMENT_VERSION};
pub use graph::{
    CausalEdge, CausalGraph, Connectivity, ConnectivityStatus, GraphMetadata, SourceSpan, Vertex,
    VertexId,
};
pub use labels::{
    Boundedness, EiTrait, Eventivity, EventivityArity, ExpertIndex, Genericity, Impact,
    Initiativity, StacLabel, TimeEnd, TimeStart,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown {kind} value {value:?}")]
    UnknownCategory { kind: &'static str, value: String },
    #[error("category index {index} out of range for trait {trait_name}")]
    CategoryOutOfRange { trait_name: &'static str, index: usize },
    #[error("graph document parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported graph document version {0}")]
    UnsupportedVersion(u32),
    #[error("graph integrity error: {0}")]
    Integrity(String),
}
