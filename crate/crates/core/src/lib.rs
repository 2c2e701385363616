//! Phasor-domain simulation of small AC microgrids: synchronous machines,
//! a stiff grid, RL loads and current-injecting wind converters on a
//! quasi-static network.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod machine;
pub mod network;
pub mod phasor;
pub mod report;
pub mod scenario;
