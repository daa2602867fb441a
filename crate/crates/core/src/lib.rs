pub mod error;
pub mod exact;
pub mod experiment;
pub mod coupling;
pub mod generators;
pub mod graph;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{CompatGraph, DispatcherId, ServerId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/generators.md")]
    mod generators {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/skew.md")]
    mod skew {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
