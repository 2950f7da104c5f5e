//! Differentially private substring, document and q-gram counting.
//!
//! A [`corpus::Database`] of documents is preprocessed into a
//! [`countingtrie::PrivateCountTrie`] that answers noisy
//! `count_Δ(P, D)` queries for every pattern `P`. Frequent q-grams are served
//! by [`qgrams::QGramStructure`] and monotone counting functions on arbitrary
//! trees by [`treecount`].

pub mod candidates;
pub mod corpus;
pub mod countingtrie;
pub mod error;
pub mod mechanisms;
pub mod qgrams;
pub mod treecount;

pub use error::{Error, Result};
