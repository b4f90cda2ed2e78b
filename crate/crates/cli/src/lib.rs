//! Command-line driver: configuration, convergence studies and the property suite.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod direct;
pub mod dispatch;
pub mod selftest;
pub mod study;
