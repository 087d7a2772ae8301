use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::StacLabel;

/// An ordered (begin, end) pair of STAC labels classifying a causal edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond(pub StacLabel, pub StacLabel);

impl Bond {
    pub fn from_label(self) -> StacLabel {
        self.0
    }

    pub fn to_label(self) -> StacLabel {
        self.1
    }

    /// Short form, e.g. `A→C`.
    pub fn short(self) -> String {
        format!("{}→{}", self.0.letter(), self.1.letter())
    }
}

/// Definitions of the default bonds, expanded from the bonding table so that
/// a row covering "Task/Action" yields one entry per target label.
const DEFAULT_BONDS: [(StacLabel, StacLabel, &str); 13] = {
    use StacLabel::*;
    [
        (Situation, Situation, "The first situation may create a setting that directly influences or causes a change in another situation without any intermediate actions or tasks."),
        (Situation, Task, "The current environment imposes certain responsibilities or actions on the agent."),
        (Situation, Action, "The environment itself drives the behavior, without an explicit task being identified first."),
        (Situation, Consequence, "The scenarios where background factors alone create significant changes in the state of affairs."),
        (Task, Action, "This bond is a direct relationship where the execution of a task leads to a specific action."),
        (Task, Consequence, "In this bond, task itself will make an environment change as a result."),
        (Action, Task, "This bond describes a sequence where one action leads directly to another action. Represents chains of immediate, active responses."),
        (Action, Action, "This bond describes a sequence where one action leads directly to another action. Represents chains of immediate, active responses."),
        (Action, Consequence, "This bond reflects a causal relationship where an act brings about a lasting change or outcome."),
        (Consequence, Situation, "The consequence of a previous action or event sets up a new situation.(Different environment change)"),
        (Consequence, Task, "The consequence directly drives the agent's next move."),
        (Consequence, Action, "The consequence directly drives the agent's next move."),
        (Consequence, Consequence, "This bond reflects a sequence of cascading outcomes, where one consequence leads to another."),
    ]
};

/// Allowlist of directed STAC bonds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondSchema {
    allowed: BTreeSet<Bond>,
}

impl BondSchema {
    pub fn new(allowed: impl IntoIterator<Item = Bond>) -> Self {
        BondSchema { allowed: allowed.into_iter().collect() }
    }

    pub fn empty() -> Self {
        BondSchema { allowed: BTreeSet::new() }
    }

    pub fn allows(&self, from: StacLabel, to: StacLabel) -> bool {
        self.allowed.contains(&Bond(from, to))
    }

    /// Allowed bonds in canonical (S, T, A, C) lexicographic order.
    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        self.allowed.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    /// Ordered pairs outside the allowlist.
    pub fn excluded(&self) -> Vec<Bond> {
        all_pairs().filter(|b| !self.allowed.contains(b)).collect()
    }

    /// Definition text for a bond from the default table, when it has one.
    pub fn definition(bond: Bond) -> Option<&'static str> {
        DEFAULT_BONDS
            .iter()
            .find(|(f, t, _)| Bond(*f, *t) == bond)
            .map(|(_, _, d)| *d)
    }
}

impl Default for BondSchema {
    fn default() -> Self {
        BondSchema::new(DEFAULT_BONDS.iter().map(|(f, t, _)| Bond(*f, *t)))
    }
}

/// All 16 ordered STAC pairs.
pub fn all_pairs() -> impl Iterator<Item = Bond> {
    StacLabel::ALL
        .iter()
        .flat_map(|&f| StacLabel::ALL.iter().map(move |&t| Bond(f, t)))
}

/// True iff `(from, to)` is in the schema's allowlist.
pub fn bond_allowed(schema: &BondSchema, from: StacLabel, to: StacLabel) -> bool {
    schema.allows(from, to)
}
