//! Well-formedness checking for global choreographies.
//!
//! A choreography describes the interactions of a protocol from a global
//! viewpoint. This crate decides whether such a description is realizable
//! by independent participants, two independent ways:
//!
//! * a semantic oracle built on partially ordered multisets ([`pomsets`]),
//! * an automata analysis built on groups of participants composed with a
//!   tensor product ([`gia`], [`projection`], [`analysis`]) that reports
//!   error states as concrete witnesses.
//!
//! The two paths are kept separate on purpose: agreement between them is
//! part of the test suite.

pub mod analysis;
pub mod gchor;
pub mod gia;
pub mod pomsets;
pub mod projection;

pub use analysis::{
    check_well_formed, check_well_formed_with_cap, error_states, explore_buffered_system,
    stripped_product, stripped_projections, ErrorWitness, Verdict, WitnessKind,
};
pub use gchor::{parse_gchor, participants, render_gchor, GChor, Message, ParseError, Participant};
pub use gia::{gia_isomorphic, tensor, ActionWord, Gia, GiaError, StateId};
pub use pomsets::{semantics, ActionLabel, Polarity, Pomset, SemanticsResult};
pub use projection::{language_equivalent, project, strip_tau, ProjectionTriple};
