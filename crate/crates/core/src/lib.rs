//! Symbolic synthesis of event-triggered controllers for SIRS epidemic models.
//!
//! The pipeline runs `abstraction` (finite symbolic model), `games`
//! (terminal safety game, then reachability game), `refine` (concrete
//! policies through the approximate alternating simulation relations) and
//! `runtime` (closed-loop simulation with discounted-cost pair selection).

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod games;
pub mod reach;
pub mod refine;
pub mod runtime;

pub use error::{Error, Result};
