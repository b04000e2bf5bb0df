//! Single-gain tuning regulators for stable multivariable plants.
//!
//! A tuning regulator drives the tracking error of a stable plant to zero
//! under constant and sinusoidal exogenous signals of known frequency. The
//! design here needs only the plant's frequency response at the exosystem
//! frequencies (which may be measured) and produces a whole family of gains
//! `F(eps)` tuned by one scalar.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod davison;
pub mod error;
pub mod format;
pub mod ident;
pub mod linalg;
pub mod lowgain;
pub mod lti;
pub mod servo;
pub mod sslg;

pub use error::{Error, Result};
pub use lowgain::{certify_low_gain, design_sgtr, SgtrDesign, StabilityCertificate};
pub use lti::{assemble_closed_loop, simulate, ClosedLoopModel, ExogenousSignal, StateSpaceModel};
pub use servo::{build_exosystem, build_servocompensator, spectral_projectors, Exosystem, ServoCompensator};
pub use sslg::{FrequencyData, Provenance};
