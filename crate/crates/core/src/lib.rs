//! Cramér–Rao bounds for acoustic range estimation between two underwater
//! nodes that measure their depths, their mutual time of flight and a set
//! of noisy sound speed samples.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crb;
pub mod montecarlo;
pub mod numerics;
pub mod ray;
pub mod ssp;
pub mod synth;
