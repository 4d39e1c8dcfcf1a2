// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod experiments;
pub mod lattice;
pub mod model;
pub mod pde;
pub mod tree;
