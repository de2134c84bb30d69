//! Restrictions, weak expanders and greedy regularization of bounded-depth
//! Frege proofs over F2 linear systems.

pub mod assign;
pub mod classify;
pub mod f2sys;
pub mod formula;
pub mod frege;
pub mod graph;
pub mod regularize;
pub mod semantic;
