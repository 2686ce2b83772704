// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brascamp_lieb;
pub mod connection;
pub mod descent;
pub mod error;
pub mod gconvex;
pub mod manifold;
pub mod matfun;
pub mod operator_scaling;
pub mod sampling;
pub mod selftest;
