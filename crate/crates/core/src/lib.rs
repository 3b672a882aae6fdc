#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Reduced-order simulation and analysis of PMSG wind turbines under dual-port
//! grid-forming control.
//!
//! The crate is organised bottom-up: [`aero`] evaluates the power coefficient,
//! [`curtailment`] computes deloaded operating points, [`control`] holds the
//! converter and pitch control laws, [`plant`] integrates the closed loop,
//! [`smallsignal`] builds and certifies the linearised model and
//! [`gaindesign`] selects steady-state gains. [`harness`] runs scenarios and
//! writes results.

pub mod aero;
pub mod control;
pub mod curtailment;
pub mod error;
pub mod gaindesign;
pub mod harness;
pub mod params;
pub mod plant;
pub mod smallsignal;
pub mod svg;

pub use error::{Error, Result};
