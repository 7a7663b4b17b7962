//! Oracles shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

pub mod induction;
pub mod sql_fuzz;
