#![no_std]
//! Probabilistic programs, single-site Metropolis-Hastings over program
//! traces, and an adaptive variant that learns which choices to resample.

extern crate alloc;

pub mod adaptive;
pub mod builtins;
pub mod diagnostics;
pub mod dist;
pub mod equilibrium;
pub mod lmh;
pub mod math;
pub mod syntax;
pub mod trace;
pub mod value;

pub use dist::{DistError, Distribution, Family};
pub use syntax::{parse, ParseError, Program};
pub use trace::{execute, Address, ExecError, Provenance, Trace};
pub use value::Value;
