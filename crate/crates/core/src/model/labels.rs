//! Categorical labels: the four STAC classes and the seven Expert Index traits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Declares a closed categorical enum with a canonical name per variant and a
/// case-insensitive parser that also accepts a few aliases.
macro_rules! categorical {
    (
        $(#[$meta:meta])*
        $name:ident { $( $variant:ident => $text:literal $(| $alias:literal)* ),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $( #[serde(rename = $text)] $variant ),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[ $( $name::$variant ),+ ];

            pub fn as_str(self) -> &'static str {
                match self {
                    $( $name::$variant => $text ),+
                }
            }

            /// Position of this value inside [`Self::ALL`].
            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).expect("variant listed in ALL")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = s.trim().to_ascii_lowercase();
                $(
                    if key == $text.to_ascii_lowercase() $(|| key == $alias)* {
                        return Ok($name::$variant);
                    }
                )+
                Err(ModelError::UnknownCategory {
                    kind: stringify!($name),
                    value: s.to_string(),
                })
            }
        }
    };
}

categorical! {
    /// Narrative sentence class. Declaration order is the canonical class
    /// order (S, T, A, C) used for sorting and tie-breaking.
    StacLabel {
        Situation => "Situation" | "s",
        Task => "Task" | "t",
        Action => "Action" | "a",
        Consequence => "Consequence" | "c",
    }
}

impl StacLabel {
    /// Single-letter abbreviation used in bond labels such as `A→C`.
    pub fn letter(self) -> char {
        match self {
            StacLabel::Situation => 'S',
            StacLabel::Task => 'T',
            StacLabel::Action => 'A',
            StacLabel::Consequence => 'C',
        }
    }
}

categorical! {
    Genericity {
        Specific => "Specific",
        Generic => "Generic",
    }
}

categorical! {
    /// `MentallyActive` only exists under the three-way eventivity schema;
    /// the two-way schema folds it into `Stative`.
    Eventivity {
        Dynamic => "Dynamic" | "dynamically active" | "d.active",
        Stative => "Stative",
        MentallyActive => "Mentally Active" | "mentallyactive" | "m.active",
    }
}

categorical! {
    Boundedness {
        Episodic => "Episodic",
        Habitual => "Habitual",
        Static => "Static",
    }
}

categorical! {
    Initiativity {
        Initiate => "Initiate",
        Receive => "Receive",
    }
}

categorical! {
    TimeStart {
        Past => "Past" | "p",
        Current => "Current" | "present" | "now" | "c",
    }
}

categorical! {
    TimeEnd {
        Current => "Current" | "present" | "c",
        Future => "Future" | "f",
    }
}

categorical! {
    Impact {
        Impactful => "Impactful" | "impact",
        Resolved => "Resolved",
    }
}

/// How many eventivity classes the active Expert Index schema uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventivityArity {
    /// Dynamic / Stative.
    #[default]
    Two,
    /// Dynamic / Stative / Mentally Active.
    Three,
}

impl EventivityArity {
    pub fn classes(self) -> &'static [Eventivity] {
        match self {
            EventivityArity::Two => &Eventivity::ALL[..2],
            EventivityArity::Three => Eventivity::ALL,
        }
    }

    /// Maps a value into this schema. Under the two-way schema mental
    /// activity counts as a state (deciding, thinking).
    pub fn normalize(self, value: Eventivity) -> Eventivity {
        match (self, value) {
            (EventivityArity::Two, Eventivity::MentallyActive) => Eventivity::Stative,
            (_, v) => v,
        }
    }
}

/// One of the seven Expert Index traits, in record order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EiTrait {
    Genericity,
    Eventivity,
    Boundedness,
    Initiativity,
    TimeStart,
    TimeEnd,
    Impact,
}

impl EiTrait {
    pub const ALL: [EiTrait; 7] = [
        EiTrait::Genericity,
        EiTrait::Eventivity,
        EiTrait::Boundedness,
        EiTrait::Initiativity,
        EiTrait::TimeStart,
        EiTrait::TimeEnd,
        EiTrait::Impact,
    ];

    /// Column / field name.
    pub fn key(self) -> &'static str {
        match self {
            EiTrait::Genericity => "genericity",
            EiTrait::Eventivity => "eventivity",
            EiTrait::Boundedness => "boundedness",
            EiTrait::Initiativity => "initiativity",
            EiTrait::TimeStart => "time_start",
            EiTrait::TimeEnd => "time_end",
            EiTrait::Impact => "impact",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            EiTrait::Genericity => "Genericity",
            EiTrait::Eventivity => "Eventivity",
            EiTrait::Boundedness => "Boundedness",
            EiTrait::Initiativity => "Initiativity",
            EiTrait::TimeStart => "Time Start",
            EiTrait::TimeEnd => "Time End",
            EiTrait::Impact => "Impact",
        }
    }

    /// Category names for this trait under the given schema, in one-hot order.
    pub fn classes(self, arity: EventivityArity) -> Vec<&'static str> {
        match self {
            EiTrait::Genericity => Genericity::ALL.iter().map(|v| v.as_str()).collect(),
            EiTrait::Eventivity => arity.classes().iter().map(|v| v.as_str()).collect(),
            EiTrait::Boundedness => Boundedness::ALL.iter().map(|v| v.as_str()).collect(),
            EiTrait::Initiativity => Initiativity::ALL.iter().map(|v| v.as_str()).collect(),
            EiTrait::TimeStart => TimeStart::ALL.iter().map(|v| v.as_str()).collect(),
            EiTrait::TimeEnd => TimeEnd::ALL.iter().map(|v| v.as_str()).collect(),
            EiTrait::Impact => Impact::ALL.iter().map(|v| v.as_str()).collect(),
        }
    }

    pub fn arity(self, arity: EventivityArity) -> usize {
        self.classes(arity).len()
    }
}

impl fmt::Display for EiTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for EiTrait {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let found = match key.as_str() {
            "genericity" | "generality" | "specificity" => EiTrait::Genericity,
            "eventivity" => EiTrait::Eventivity,
            "boundedness" | "boundness" => EiTrait::Boundedness,
            "initiativity" | "initiality" | "initiative" => EiTrait::Initiativity,
            "time_start" => EiTrait::TimeStart,
            "time_end" => EiTrait::TimeEnd,
            "impact" => EiTrait::Impact,
            _ => {
                return Err(ModelError::UnknownCategory {
                    kind: "EiTrait",
                    value: s.to_string(),
                })
            }
        };
        Ok(found)
    }
}

/// The seven-trait Expert Index record. Every field is always set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertIndex {
    pub genericity: Genericity,
    pub eventivity: Eventivity,
    pub boundedness: Boundedness,
    pub initiativity: Initiativity,
    pub time_start: TimeStart,
    pub time_end: TimeEnd,
    pub impact: Impact,
}

impl ExpertIndex {
    /// Category index of `t` within `t.classes(arity)`.
    pub fn category(&self, t: EiTrait, arity: EventivityArity) -> usize {
        match t {
            EiTrait::Genericity => self.genericity.index(),
            EiTrait::Eventivity => arity.normalize(self.eventivity).index(),
            EiTrait::Boundedness => self.boundedness.index(),
            EiTrait::Initiativity => self.initiativity.index(),
            EiTrait::TimeStart => self.time_start.index(),
            EiTrait::TimeEnd => self.time_end.index(),
            EiTrait::Impact => self.impact.index(),
        }
    }

    pub fn category_name(&self, t: EiTrait, arity: EventivityArity) -> &'static str {
        t.classes(arity)[self.category(t, arity)]
    }

    /// Builds a record from per-trait category indices (in [`EiTrait::ALL`] order).
    pub fn from_categories(idx: [usize; 7], arity: EventivityArity) -> Result<Self, ModelError> {
        for (t, &i) in EiTrait::ALL.iter().zip(idx.iter()) {
            if i >= t.arity(arity) {
                return Err(ModelError::CategoryOutOfRange { trait_name: t.key(), index: i });
            }
        }
        Ok(ExpertIndex {
            genericity: Genericity::ALL[idx[0]],
            eventivity: arity.classes()[idx[1]],
            boundedness: Boundedness::ALL[idx[2]],
            initiativity: Initiativity::ALL[idx[3]],
            time_start: TimeStart::ALL[idx[4]],
            time_end: TimeEnd::ALL[idx[5]],
            impact: Impact::ALL[idx[6]],
        })
    }

    /// Sets one trait from its category name.
    pub fn set_from_str(&mut self, t: EiTrait, value: &str) -> Result<(), ModelError> {
        match t {
            EiTrait::Genericity => self.genericity = value.parse()?,
            EiTrait::Eventivity => self.eventivity = value.parse()?,
            EiTrait::Boundedness => self.boundedness = value.parse()?,
            EiTrait::Initiativity => self.initiativity = value.parse()?,
            EiTrait::TimeStart => self.time_start = value.parse()?,
            EiTrait::TimeEnd => self.time_end = value.parse()?,
            EiTrait::Impact => self.impact = value.parse()?,
        }
        Ok(())
    }
}

impl Default for ExpertIndex {
    /// The all-first-category record.
    fn default() -> Self {
        ExpertIndex {
            genericity: Genericity::Specific,
            eventivity: Eventivity::Dynamic,
            boundedness: Boundedness::Episodic,
            initiativity: Initiativity::Initiate,
            time_start: TimeStart::Past,
            time_end: TimeEnd::Current,
            impact: Impact::Impactful,
        }
    }
}
