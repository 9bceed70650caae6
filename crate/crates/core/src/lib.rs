//! Model-predictive energy management for radial microgrids.

// Index loops mirror the matrix formulas; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembler;
pub mod ems;
pub mod experiments;
pub mod forecast;
pub mod netmodel;
pub mod opf;
pub mod scenario;
pub mod socp;
