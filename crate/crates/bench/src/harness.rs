//! Independent restarts of one sampler on one corpus program, scored at
//! checkpoints.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use adlmh_core::adaptive::{AdaptiveChain, StatsSnapshot, DEFAULT_EXPLORATION};
use adlmh_core::diagnostics::{forward_backward, kl_discrete, ks_two_sample, quartiles, smoothed_empirical, HmmSpec};
use adlmh_core::lmh::ChainState;
use adlmh_core::{Program, Value};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::reference::ReferenceSet;
use crate::{numeric_output, restart_rng, BenchError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Lmh,
    Adlmh,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lmh => "lmh",
            Algorithm::Adlmh => "adlmh",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lmh" => Ok(Algorithm::Lmh),
            "adlmh" => Ok(Algorithm::Adlmh),
            _ => Err(BenchError::Config(format!("unknown algorithm `{s}` (expected lmh or adlmh)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub program: Corpus,
    pub algorithm: Algorithm,
    pub samples: usize,
    pub restarts: usize,
    pub seed: u64,
    pub exploration: f64,
    /// Sample counts at which the metric is evaluated, strictly increasing.
    pub checkpoints: Vec<usize>,
    /// Required for the gp program.
    pub reference: Option<Arc<ReferenceSet>>,
}

impl BenchConfig {
    /// 5 restarts of 1e5 samples.
    pub fn new(program: Corpus, algorithm: Algorithm) -> Self {
        let samples = 100_000;
        BenchConfig {
            program,
            algorithm,
            samples,
            restarts: 5,
            seed: 0,
            exploration: DEFAULT_EXPLORATION,
            checkpoints: default_checkpoints(samples),
            reference: None,
        }
    }

    /// 25 restarts of 5e5 samples.
    pub fn full_scale(mut self) -> Self {
        self.samples = 500_000;
        self.restarts = 25;
        self.checkpoints = default_checkpoints(self.samples);
        self
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.validate_schedule()?;
        match (self.program, &self.reference) {
            (Corpus::Gp, None) => Err(BenchError::Config("the gp program needs a reference set".into())),
            (Corpus::Gp, Some(r)) if r.program != Corpus::Gp => {
                Err(BenchError::Config("reference set is not for gp".into()))
            }
            _ => Ok(()),
        }
    }

    /// Everything except the reference set.
    pub fn validate_schedule(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.samples == 0 {
            return fail("samples must be positive".into());
        }
        if self.restarts == 0 {
            return fail("restarts must be positive".into());
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return fail(format!("exploration factor must be a nonnegative number, got {}", self.exploration));
        }
        if self.checkpoints.is_empty() {
            return fail("at least one checkpoint is required".into());
        }
        if self.checkpoints[0] == 0 || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return fail("checkpoints must be positive and strictly increasing".into());
        }
        if *self.checkpoints.last().unwrap() > self.samples {
            return fail(format!("checkpoint beyond {} samples", self.samples));
        }
        Ok(())
    }
}

/// 1, 3, 10, 30, ... from 100 up to `samples`, always ending at `samples`.
pub fn default_checkpoints(samples: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 100;
    while decade < samples {
        for m in [1, 3] {
            if m * decade < samples {
                out.push(m * decade);
            }
        }
        decade *= 10;
    }
    out.push(samples);
    out
}

/// Per-restart metric values, one per checkpoint, plus stats snapshots
/// taken at the same checkpoints for the adaptive sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartResult {
    pub restart: usize,
    pub values: Vec<f64>,
    pub snapshots: Vec<StatsSnapshot>,
    pub accepted: u64,
    /// Why the restart stopped early, if it did.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub program: Corpus,
    pub algorithm: Algorithm,
    pub metric: &'static str,
    pub checkpoints: Vec<usize>,
    pub restarts: Vec<RestartResult>,
}

impl RunReport {
    fn complete(&self) -> impl Iterator<Item = &RestartResult> {
        self.restarts.iter().filter(|r| r.error.is_none())
    }

    /// 25/50/75% quantiles over completed restarts, per checkpoint.
    pub fn quartiles(&self) -> Result<Vec<[f64; 3]>, BenchError> {
        (0..self.checkpoints.len())
            .map(|i| {
                let xs: Vec<f64> = self.complete().map(|r| r.values[i]).collect();
                Ok(quartiles(&xs)?)
            })
            .collect()
    }

    pub fn medians(&self) -> Result<Vec<f64>, BenchError> {
        Ok(self.quartiles()?.into_iter().map(|q| q[1]).collect())
    }

    /// `algorithm,restart,iteration,metric,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["algorithm", "restart", "iteration", "metric", "value"])?;
        for r in self.complete() {
            for (n, v) in self.checkpoints.iter().zip(&r.values) {
                w.write_record([
                    self.algorithm.name().to_string(),
                    r.restart.to_string(),
                    n.to_string(),
                    self.metric.to_string(),
                    format!("{v:?}"),
                ])?;
            }
        }
        w.flush().map_err(|e| BenchError::Io("csv".into(), e))?;
        Ok(())
    }

    /// `algorithm,iteration,metric,q25,q50,q75` rows.
    pub fn write_summary<W: Write>(&self, w: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["algorithm", "iteration", "metric", "q25", "q50", "q75"])?;
        for (n, q) in self.checkpoints.iter().zip(self.quartiles()?) {
            w.write_record([
                self.algorithm.name().to_string(),
                n.to_string(),
                self.metric.to_string(),
                format!("{:?}", q[0]),
                format!("{:?}", q[1]),
                format!("{:?}", q[2]),
            ])?;
        }
        w.flush().map_err(|e| BenchError::Io("csv".into(), e))?;
        Ok(())
    }

    /// `iteration,address,reward,count,accepts,rejects` rows of one restart.
    pub fn write_stats<W: Write>(&self, restart: usize, w: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["iteration", "address", "reward", "count", "accepts", "rejects"])?;
        if let Some(r) = self.restarts.iter().find(|r| r.restart == restart) {
            for s in &r.snapshots {
                for row in &s.rows {
                    w.write_record([
                        s.iteration.to_string(),
                        row.address.to_string(),
                        format!("{:?}", row.stats.reward),
                        format!("{:?}", row.stats.count),
                        row.tally.accepts.to_string(),
                        row.tally.rejects.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| BenchError::Io("csv".into(), e))?;
        Ok(())
    }

    /// Writes the metric, summary and stats files into `dir` and returns
    /// their paths.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
        let io = |p: &Path, e| BenchError::Io(p.display().to_string(), e);
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let stem = format!("{}_{}", self.program, self.algorithm);
        let mut paths = Vec::new();
        let mut create = |name: String| -> Result<(fs::File, PathBuf), BenchError> {
            let p = dir.join(name);
            let f = fs::File::create(&p).map_err(|e| io(&p, e))?;
            paths.push(p.clone());
            Ok((f, p))
        };
        self.write_csv(create(format!("{stem}.csv"))?.0)?;
        self.write_summary(create(format!("{stem}_summary.csv"))?.0)?;
        if self.algorithm == Algorithm::Adlmh {
            for r in &self.restarts {
                self.write_stats(r.restart, create(format!("{stem}_stats_{}.csv", r.restart))?.0)?;
            }
        }
        Ok(paths)
    }
}

/// Running convergence metric of one restart.
enum Tracker {
    Hmm {
        exact: [Vec<f64>; 2],
        counts: [[u64; 3]; 2],
    },
    Gp {
        columns: Vec<Vec<f64>>,
        draws: [Vec<f64>; 3],
    },
    Logistic {
        errors: f64,
        n: u64,
    },
}

impl Tracker {
    fn new(cfg: &BenchConfig) -> Result<Tracker, BenchError> {
        Ok(match cfg.program {
            Corpus::Hmm => {
                let m = forward_backward(&HmmSpec::default())?;
                Tracker::Hmm {
                    exact: [m[0].clone(), m[m.len() - 1].clone()],
                    counts: [[0; 3]; 2],
                }
            }
            Corpus::Gp => {
                let reference = cfg.reference.as_ref().expect("validated");
                let columns = (0..3).map(|j| reference.column(j)).collect();
                Tracker::Gp {
                    columns,
                    draws: Default::default(),
                }
            }
            Corpus::Logistic => Tracker::Logistic { errors: 0.0, n: 0 },
        })
    }

    fn observe(&mut self, z: &[Value]) -> Result<(), BenchError> {
        let z = numeric_output(z)?;
        match self {
            Tracker::Hmm { counts, .. } => {
                for (c, s) in counts.iter_mut().zip(&z) {
                    c[*s as usize] += 1;
                }
            }
            Tracker::Gp { draws, .. } => {
                for (d, x) in draws.iter_mut().zip(&z) {
                    d.push(*x);
                }
            }
            Tracker::Logistic { errors, n } => {
                // First prediction should be setosa, the second not.
                let wrong = (z[0] != 1.0) as u8 + (z[1] != 0.0) as u8;
                *errors += f64::from(wrong) / 2.0;
                *n += 1;
            }
        }
        Ok(())
    }

    fn value(&self) -> Result<f64, BenchError> {
        Ok(match self {
            Tracker::Hmm { exact, counts } => {
                let a = kl_discrete(&exact[0], &smoothed_empirical(&counts[0]))?;
                let b = kl_discrete(&exact[1], &smoothed_empirical(&counts[1]))?;
                a.max(b)
            }
            Tracker::Gp { columns, draws } => {
                let mut worst = 0.0f64;
                for (d, r) in draws.iter().zip(columns) {
                    worst = worst.max(ks_two_sample(d, r)?);
                }
                worst
            }
            Tracker::Logistic { errors, n } => errors / *n as f64,
        })
    }
}

enum Sampler<'p> {
    Lmh(ChainState<'p, ChaCha8Rng>),
    Adlmh(AdaptiveChain<'p, ChaCha8Rng>),
}

impl<'p> Sampler<'p> {
    fn new(cfg: &BenchConfig, program: &'p Program, rng: ChaCha8Rng) -> Result<Self, BenchError> {
        Ok(match cfg.algorithm {
            Algorithm::Lmh => Sampler::Lmh(ChainState::init(program, rng)?),
            Algorithm::Adlmh => Sampler::Adlmh(AdaptiveChain::init(program, cfg.exploration, rng)?),
        })
    }

    fn step(&mut self) -> Result<(), BenchError> {
        match self {
            Sampler::Lmh(c) => {
                c.step()?;
            }
            Sampler::Adlmh(c) => {
                c.step()?;
            }
        }
        Ok(())
    }

    fn output(&self) -> &[Value] {
        match self {
            Sampler::Lmh(c) => c.output(),
            Sampler::Adlmh(c) => c.output(),
        }
    }

    fn accepted(&self) -> u64 {
        match self {
            Sampler::Lmh(c) => c.accepted(),
            Sampler::Adlmh(c) => c.accepted(),
        }
    }

    fn snapshot(&self) -> Option<StatsSnapshot> {
        match self {
            Sampler::Lmh(_) => None,
            Sampler::Adlmh(c) => Some(c.snapshot()),
        }
    }
}

fn run_restart(cfg: &BenchConfig, restart: usize) -> Result<RestartResult, BenchError> {
    let mut rng = restart_rng(cfg.seed, restart as u64);
    let program = cfg.program.instantiate(&mut rng)?;
    let mut sampler = Sampler::new(cfg, &program, rng)?;
    let mut tracker = Tracker::new(cfg)?;
    let mut result = RestartResult {
        restart,
        values: Vec::with_capacity(cfg.checkpoints.len()),
        snapshots: Vec::new(),
        accepted: 0,
        error: None,
    };
    let mut next = cfg.checkpoints.iter().peekable();
    for n in 1..=cfg.samples {
        if n > 1 {
            if let Err(e) = sampler.step() {
                result.error = Some(e.to_string());
                break;
            }
        }
        tracker.observe(sampler.output())?;
        if next.peek() == Some(&&n) {
            next.next();
            match tracker.value() {
                Ok(v) => result.values.push(v),
                Err(e) => {
                    result.error = Some(e.to_string());
                    break;
                }
            }
            result.snapshots.extend(sampler.snapshot());
        }
    }
    result.accepted = sampler.accepted();
    Ok(result)
}

/// Runs all restarts (in parallel) and collects their metric curves.
/// Failures inside a restart are recorded on that restart; configuration
/// and initialization problems abort the run.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<RunReport, BenchError> {
    cfg.validate()?;
    let restarts = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(cfg, r))
        .collect::<Result<Vec<_>, _>>()?;
    if restarts.iter().all(|r| r.error.is_some()) {
        return Err(BenchError::Runtime(format!(
            "every restart failed; first error: {}",
            restarts[0].error.as_deref().unwrap_or_default()
        )));
    }
    Ok(RunReport {
        program: cfg.program,
        algorithm: cfg.algorithm,
        metric: cfg.program.metric(),
        checkpoints: cfg.checkpoints.clone(),
        restarts,
    })
}
