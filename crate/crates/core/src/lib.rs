//! Real-time simulation of planar Cosserat microbeams (cantilevers and
//! microbridges) for haptic MEMS design: finite-element assembly of the
//! quadratic energy functional, static/transient/modal solvers, a stiction
//! failure model, the five-stage haptic force pipeline with a dual-rate
//! scheduler, and the session service that hosts it.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod contact;
pub mod error;
pub mod haptic;
pub mod service;
pub mod solver;

pub use error::{Error, Result};
