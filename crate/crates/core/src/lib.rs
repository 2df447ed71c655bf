//! Ground-truth benchmark for feature attribution on gender-controlled text:
//! template corpus, a one-layer attention classifier, ten attribution
//! methods and mass-accuracy reporting.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod cli;
pub mod corpus;
pub mod evaluation;
pub mod model;
pub mod numerics;
