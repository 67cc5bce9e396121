//! Quantum-emitter fluorescence-lifetime imaging toolkit.
//!
//! * [`ldos`]: dipole-above-interface decay-rate enhancement and emitter rate algebra.
//! * [`tagstream`]: the binary photon time-tag format and cantilever height mapping.
//! * [`scene`]: ground-truth decay-rate fields and Monte-Carlo time-tag synthesis.
//! * [`reconstruct`]: height-resolved lifetime fits, topography correction, gradients, g².
//! * [`calibrate`]: emitter parameter estimation from approach curves.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN too

pub mod calibrate;
pub mod ldos;
pub mod lm;
pub mod quadrature;
pub mod reconstruct;
pub mod scene;
pub mod tagstream;
