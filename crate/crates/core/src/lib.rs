//! Chance-constrained optimal power flow: network data, power flow,
//! dispatch, semidefinite relaxation and the scenario-with-certificates
//! design with Monte Carlo risk validation.

// `!(a > b)` is used on purpose so that NaN takes the failure branch, and
// index loops read closer to the algebra in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conic;
pub mod dispatch;
pub mod netmodel;
pub mod powerflow;
pub mod relaxation;
pub mod swc;
pub mod uncertainty;
pub mod validate;
