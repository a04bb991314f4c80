//! Lightweight Metropolis-Hastings: pick one latent choice uniformly, redraw
//! it from its prior, rerun the program and accept or reject.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::math;
use crate::syntax::Program;
use crate::trace::{execute, resampled_set, Address, ExecError, Trace};
use crate::value::Value;

/// Initialization gives up after this many impossible traces.
pub const INIT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("no trace with finite log-joint after {0} attempts")]
    Init(usize),
    #[error("trace has no latent choices to select from")]
    NoLatents,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Log acceptance ratio shared by both kernels. `log_sel_old` is the log
/// probability of selecting the proposed address in `old`, `log_sel_new`
/// the probability of selecting it back from `new`.
pub(crate) fn log_accept(old: &Trace, new: &Trace, log_sel_old: f64, log_sel_new: f64) -> f64 {
    let (lo, ln) = (old.log_joint(), new.log_joint());
    if lo == f64::NEG_INFINITY && ln == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let rs = resampled_set(old, new);
    let r = ln - lo + log_sel_new - log_sel_old + rs.log_dropped_old - rs.log_fresh_new;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r.min(0.0)
    }
}

/// Acceptance probability of `new` proposed from `old` under uniform
/// single-site selection.
pub fn lmh_accept_ratio(old: &Trace, new: &Trace) -> f64 {
    let sel_old = -math::ln(old.latent_count() as f64);
    let sel_new = -math::ln(new.latent_count() as f64);
    math::exp(log_accept(old, new, sel_old, sel_new))
}

/// Runs the program from scratch until the trace has finite log-joint.
pub fn initial_trace<R: Rng + ?Sized>(program: &Program, rng: &mut R) -> Result<Trace, InferenceError> {
    for _ in 0..INIT_ATTEMPTS {
        let t = execute(program, None, None, rng)?;
        if t.log_joint() > f64::NEG_INFINITY {
            return Ok(t);
        }
    }
    Err(InferenceError::Init(INIT_ATTEMPTS))
}

/// Redraws the choice at `index` from its distribution and reruns.
pub(crate) fn propose<R: Rng + ?Sized>(
    program: &Program,
    current: &Trace,
    index: usize,
    rng: &mut R,
) -> Result<(Address, Trace), ExecError> {
    let rec = &current.choices[index];
    let value = rec.dist.sample(rng);
    let address = rec.address.clone();
    let new = execute(program, Some(current), Some((&address, value)), rng)?;
    Ok((address, new))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// Position of the selected choice in the pre-step trace.
    pub selected: Option<usize>,
    pub ratio: f64,
}

/// A single LMH chain.
pub struct ChainState<'p, R> {
    program: &'p Program,
    pub(crate) rng: R,
    pub(crate) current: Trace,
    pub(crate) iteration: u64,
    pub(crate) accepted: u64,
}

impl<'p, R: Rng> ChainState<'p, R> {
    pub fn init(program: &'p Program, mut rng: R) -> Result<Self, InferenceError> {
        let current = initial_trace(program, &mut rng)?;
        Ok(ChainState {
            program,
            rng,
            current,
            iteration: 0,
            accepted: 0,
        })
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn current(&self) -> &Trace {
        &self.current
    }

    pub fn output(&self) -> &[Value] {
        &self.current.output
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    /// One transition. A trace without latent choices is kept as is.
    pub fn step(&mut self) -> Result<StepOutcome, InferenceError> {
        self.iteration += 1;
        let n = self.current.latent_count();
        if n == 0 {
            return Ok(StepOutcome {
                accepted: false,
                selected: None,
                ratio: 0.0,
            });
        }
        let k = self.rng.random_range(0..n);
        let (_, new) = propose(self.program, &self.current, k, &mut self.rng)?;
        let ratio = lmh_accept_ratio(&self.current, &new);
        let accepted = self.rng.random::<f64>() < ratio;
        if accepted {
            self.current = new;
            self.accepted += 1;
        }
        Ok(StepOutcome {
            accepted,
            selected: Some(k),
            ratio,
        })
    }
}

/// `n` outputs: the initial one followed by `n - 1` transitions.
pub fn run<R: Rng>(program: &Program, n: usize, rng: R) -> Result<Vec<Vec<Value>>, InferenceError> {
    let mut chain = ChainState::init(program, rng)?;
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(chain.output().to_vec());
    }
    for _ in 1..n {
        chain.step()?;
        out.push(chain.output().to_vec());
    }
    Ok(out)
}
