//! Adaptive LMH. Latent choices are selected with probability proportional
//! to an upper-confidence weight built from how often modifying them has
//! changed the program output.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use crate::lmh::{initial_trace, log_accept, propose, InferenceError, StepOutcome};
use crate::math;
use crate::syntax::Program;
use crate::trace::{Address, Trace};
use crate::value::Value;

pub const DEFAULT_EXPLORATION: f64 = 0.5;

/// Accumulated reward and count of one latent choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChoiceStats {
    pub reward: f64,
    pub count: f64,
}

impl ChoiceStats {
    /// Stats assumed for a choice that has never been involved.
    pub const OPTIMISTIC: ChoiceStats = ChoiceStats { reward: 1.0, count: 1.0 };

    pub fn unit_reward(&self) -> f64 {
        self.reward / self.count
    }
}

/// `r/c + C sqrt(ln(total) / c)`.
pub fn ucb_weight(s: ChoiceStats, total_count: f64, c: f64) -> f64 {
    s.unit_reward() + c * math::sqrt(math::ln(total_count) / s.count)
}

/// Fraction of output components that differ. A length mismatch compares
/// the common prefix and counts the rest as changed.
pub fn output_reward(prev: &[Value], new: &[Value]) -> f64 {
    let len = prev.len().max(new.len());
    if len == 0 {
        return 0.0;
    }
    let changed = (0..len).filter(|&k| prev.get(k) != new.get(k)).count();
    changed as f64 / len as f64
}

/// Per-address statistics and per-output-component histories.
#[derive(Clone, Debug)]
pub struct Scheduler {
    stats: BTreeMap<Address, ChoiceStats>,
    histories: Vec<Vec<Address>>,
    exploration: f64,
    previous_output: Vec<Value>,
}

impl Scheduler {
    pub fn new(exploration: f64, initial_output: &[Value]) -> Self {
        Scheduler {
            stats: BTreeMap::new(),
            histories: alloc::vec![Vec::new(); initial_output.len()],
            exploration,
            previous_output: initial_output.to_vec(),
        }
    }

    pub fn exploration(&self) -> f64 {
        self.exploration
    }

    pub fn stats(&self) -> &BTreeMap<Address, ChoiceStats> {
        &self.stats
    }

    pub fn stats_for(&self, a: &Address) -> ChoiceStats {
        self.stats.get(a).copied().unwrap_or(ChoiceStats::OPTIMISTIC)
    }

    pub fn histories(&self) -> &[Vec<Address>] {
        &self.histories
    }

    pub fn previous_output(&self) -> &[Value] {
        &self.previous_output
    }

    /// UCB weights of the trace's latent choices, in trace order.
    pub fn weights(&self, trace: &Trace) -> Vec<f64> {
        let stats: Vec<ChoiceStats> = trace.addresses().map(|a| self.stats_for(a)).collect();
        let total: f64 = stats.iter().map(|s| s.count).sum();
        stats
            .into_iter()
            .map(|s| ucb_weight(s, total, self.exploration))
            .collect()
    }

    /// Selection probabilities over the trace's latent choices.
    pub fn selection_probabilities(&self, trace: &Trace) -> Result<Vec<f64>, InferenceError> {
        let mut w = self.weights(trace);
        if w.is_empty() {
            return Err(InferenceError::NoLatents);
        }
        let sum: f64 = w.iter().sum();
        for x in &mut w {
            *x /= sum;
        }
        Ok(w)
    }

    /// Probability of selecting `a` in `trace`, if present.
    pub fn selection_probability(&self, trace: &Trace, a: &Address) -> Option<f64> {
        let pos = trace.position(a)?;
        let w = self.weights(trace);
        Some(w[pos] / w.iter().sum::<f64>())
    }

    /// Distributes the reward of an accepted transition to `z_new` over the
    /// histories and returns the total reward handed out.
    pub fn propagate(&mut self, selected: &Address, z_new: &[Value]) -> f64 {
        let len = self.previous_output.len().max(z_new.len());
        if len == 0 {
            return 0.0;
        }
        if self.histories.len() < len {
            self.histories.resize(len, Vec::new());
        }
        let share = 1.0 / len as f64;
        let mut distributed = 0.0;
        for k in 0..len {
            self.histories[k].push(selected.clone());
            if self.previous_output.get(k) != z_new.get(k) {
                let history = core::mem::take(&mut self.histories[k]);
                let w = share / history.len() as f64;
                for a in history {
                    let s = self.stats.entry(a).or_insert(ChoiceStats::OPTIMISTIC);
                    s.reward += w;
                    s.count += w;
                    distributed += w;
                }
            } else {
                self.stats
                    .entry(selected.clone())
                    .or_insert(ChoiceStats::OPTIMISTIC)
                    .count += share;
            }
        }
        self.previous_output = z_new.to_vec();
        distributed
    }
}

/// Acceptance probability under weighted selection. `alpha_new` is the
/// probability of selecting the same address in `new` with the same stats;
/// `None` (address absent from `new`) rejects.
pub fn adlmh_accept_ratio(old: &Trace, new: &Trace, alpha_old: f64, alpha_new: Option<f64>) -> f64 {
    match alpha_new {
        Some(a) => math::exp(log_accept(old, new, math::ln(alpha_old), math::ln(a))),
        None => 0.0,
    }
}

/// Accept and reject tallies of one address as the selected choice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub accepts: u64,
    pub rejects: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub address: Address,
    pub stats: ChoiceStats,
    pub tally: Tally,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsSnapshot {
    pub iteration: u64,
    pub rows: Vec<StatsRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveOutcome {
    pub step: StepOutcome,
    pub output_reward: f64,
    pub distributed_reward: f64,
}

/// An adaptive LMH chain. Freezing stops all stat updates, which turns the
/// chain into a fixed-kernel MH sampler.
pub struct AdaptiveChain<'p, R> {
    program: &'p Program,
    rng: R,
    current: Trace,
    scheduler: Scheduler,
    tallies: BTreeMap<Address, Tally>,
    frozen: bool,
    iteration: u64,
    accepted: u64,
}

impl<'p, R: Rng> AdaptiveChain<'p, R> {
    pub fn init(program: &'p Program, exploration: f64, mut rng: R) -> Result<Self, InferenceError> {
        let current = initial_trace(program, &mut rng)?;
        let scheduler = Scheduler::new(exploration, &current.output);
        Ok(AdaptiveChain {
            program,
            rng,
            current,
            scheduler,
            tallies: BTreeMap::new(),
            frozen: false,
            iteration: 0,
            accepted: 0,
        })
    }

    pub fn current(&self) -> &Trace {
        &self.current
    }

    pub fn output(&self) -> &[Value] {
        &self.current.output
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let mut rows: BTreeMap<&Address, StatsRow> = BTreeMap::new();
        for (a, s) in self.scheduler.stats() {
            rows.insert(
                a,
                StatsRow {
                    address: a.clone(),
                    stats: *s,
                    tally: Tally::default(),
                },
            );
        }
        for (a, t) in &self.tallies {
            rows.entry(a)
                .or_insert_with(|| StatsRow {
                    address: a.clone(),
                    stats: ChoiceStats::OPTIMISTIC,
                    tally: Tally::default(),
                })
                .tally = *t;
        }
        StatsSnapshot {
            iteration: self.iteration,
            rows: rows.into_values().collect(),
        }
    }

    pub fn step(&mut self) -> Result<AdaptiveOutcome, InferenceError> {
        self.iteration += 1;
        let probs = match self.scheduler.selection_probabilities(&self.current) {
            Ok(p) => p,
            Err(InferenceError::NoLatents) => {
                return Ok(AdaptiveOutcome {
                    step: StepOutcome {
                        accepted: false,
                        selected: None,
                        ratio: 0.0,
                    },
                    output_reward: 0.0,
                    distributed_reward: 0.0,
                })
            }
            Err(e) => return Err(e),
        };
        let k = pick(&probs, self.rng.random::<f64>());
        let (address, new) = propose(self.program, &self.current, k, &mut self.rng)?;
        let alpha_new = self.scheduler.selection_probability(&new, &address);
        let ratio = adlmh_accept_ratio(&self.current, &new, probs[k], alpha_new);
        let accepted = self.rng.random::<f64>() < ratio;
        let tally = self.tallies.entry(address.clone()).or_default();
        let (mut output_reward_value, mut distributed_reward) = (0.0, 0.0);
        if accepted {
            tally.accepts += 1;
            if !self.frozen {
                output_reward_value = output_reward(self.scheduler.previous_output(), &new.output);
                distributed_reward = self.scheduler.propagate(&address, &new.output);
            }
            self.current = new;
            self.accepted += 1;
        } else {
            tally.rejects += 1;
        }
        Ok(AdaptiveOutcome {
            step: StepOutcome {
                accepted,
                selected: Some(k),
                ratio,
            },
            output_reward: output_reward_value,
            distributed_reward,
        })
    }
}

/// Index drawn from `probs` by inverse CDF at `u`.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveRun {
    pub outputs: Vec<Vec<Value>>,
    pub snapshots: Vec<StatsSnapshot>,
}

/// `n` outputs of adaptive LMH with stats snapshots every `snapshot_every`
/// iterations (never when 0) and one after the last.
pub fn adlmh_run<R: Rng>(
    program: &Program,
    n: usize,
    exploration: f64,
    snapshot_every: u64,
    rng: R,
) -> Result<AdaptiveRun, InferenceError> {
    let mut chain = AdaptiveChain::init(program, exploration, rng)?;
    let mut outputs = Vec::with_capacity(n);
    let mut snapshots = Vec::new();
    if n > 0 {
        outputs.push(chain.output().to_vec());
    }
    for _ in 1..n {
        chain.step()?;
        outputs.push(chain.output().to_vec());
        if snapshot_every > 0 && chain.iteration() % snapshot_every == 0 {
            snapshots.push(chain.snapshot());
        }
    }
    if snapshots.last().map(|s| s.iteration) != Some(chain.iteration()) {
        snapshots.push(chain.snapshot());
    }
    Ok(AdaptiveRun { outputs, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmh::lmh_accept_ratio;
    use crate::syntax::{parse, SiteId};
    use crate::trace::execute;
    use alloc::sync::Arc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn addr(site: u32) -> Address {
        Address {
            site: SiteId(site),
            path: Arc::from(Vec::new()),
            occurrence: 0,
        }
    }

    fn num(x: f64) -> Value {
        Value::Num(x)
    }

    #[test]
    fn ucb_examples() {
        let s = ChoiceStats { reward: 0.5, count: 4.0 };
        let expected = 0.125 + 0.5 * libm::sqrt(libm::log(16.0) / 4.0);
        assert!((ucb_weight(s, 16.0, 0.5) - expected).abs() < 1e-15);
        assert!((ucb_weight(s, 16.0, 0.5) - 0.5413).abs() < 1e-4);
        assert_eq!(ucb_weight(s, 16.0, 0.0), 0.125);
        let one = ChoiceStats { reward: 0.7, count: 1.0 };
        assert_eq!(ucb_weight(one, 1.0, 0.5), 0.7);
    }

    #[test]
    fn output_reward_examples() {
        assert_eq!(output_reward(&[num(1.0)], &[num(1.0)]), 0.0);
        assert_eq!(output_reward(&[num(1.0), num(2.0)], &[num(0.0), num(0.0)]), 1.0);
        assert_eq!(output_reward(&[num(1.0), num(2.0)], &[num(1.0), num(0.0)]), 0.5);
        assert_eq!(output_reward(&[num(1.0)], &[num(1.0), num(2.0)]), 0.5);
    }

    #[test]
    fn scalar_propagation_follows_histories() {
        let (a, b) = (addr(0), addr(1));
        let mut s = Scheduler::new(0.5, &[num(0.0)]);
        assert_eq!(s.propagate(&a, &[num(0.0)]), 0.0);
        assert_eq!(s.stats_for(&a), ChoiceStats { reward: 1.0, count: 2.0 });
        assert_eq!(s.histories()[0], core::slice::from_ref(&a));
        assert_eq!(s.propagate(&b, &[num(1.0)]), 1.0);
        assert_eq!(s.stats_for(&a), ChoiceStats { reward: 1.5, count: 2.5 });
        assert_eq!(s.stats_for(&b), ChoiceStats { reward: 1.5, count: 1.5 });
        assert!(s.histories()[0].is_empty());
    }

    #[test]
    fn two_component_propagation() {
        let a = addr(0);
        let mut s = Scheduler::new(0.5, &[num(0.0), num(0.0)]);
        let d = s.propagate(&a, &[num(1.0), num(0.0)]);
        assert_eq!(d, 0.5);
        assert_eq!(d, output_reward(&[num(0.0), num(0.0)], &[num(1.0), num(0.0)]));
        assert_eq!(s.stats_for(&a), ChoiceStats { reward: 1.5, count: 2.0 });
        assert!(s.histories()[0].is_empty());
        assert_eq!(s.histories()[1].len(), 1);
    }

    fn trace_of(src: &str) -> Trace {
        let p = parse(src).unwrap();
        execute(&p, None, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn selection_probabilities_normalize() {
        let t = trace_of("[assume a (sample (normal 0 1))] [assume b (sample (normal 0 1))] [assume c (sample (normal 0 1))]");
        let s = Scheduler::new(0.5, &[]);
        let p = s.selection_probabilities(&t).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let empty = trace_of("[predict 1]");
        assert_eq!(s.selection_probabilities(&empty), Err(InferenceError::NoLatents));
    }

    #[test]
    fn weights_follow_stats() {
        let t = trace_of("[assume a (sample (normal 0 1))] [assume b (sample (normal 0 1))] [assume c (sample (normal 0 1))]");
        let mut s = Scheduler::new(0.0, &[num(0.0)]);
        let a = t.choices[0].address.clone();
        // Unit reward 2 against the optimistic 1 of the others: weights (2, 1, 1).
        s.propagate(&a, &[num(1.0)]);
        s.stats.get_mut(&a).unwrap().reward = 4.0;
        let p = s.selection_probabilities(&t).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_stats_reduce_to_lmh() {
        let src = "[assume a (sample (normal 0 1))] [assume b (sample (normal a 1))] [observe (normal b 1) 1.2]";
        let p = parse(src).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = execute(&p, None, None, &mut rng).unwrap();
        let s = Scheduler::new(0.5, &[]);
        for k in 0..2 {
            let (a, new) = propose(&p, &t, k, &mut rng).unwrap();
            let alpha = s.selection_probabilities(&t).unwrap()[k];
            let r6 = adlmh_accept_ratio(&t, &new, alpha, s.selection_probability(&new, &a));
            assert!((r6 - lmh_accept_ratio(&t, &new)).abs() < 1e-12);
        }
        assert_eq!(adlmh_accept_ratio(&t, &t, 0.5, Some(0.5)), 1.0);
        assert_eq!(adlmh_accept_ratio(&t, &t, 0.5, None), 0.0);
    }

    #[test]
    fn run_is_deterministic_and_snapshots() {
        let src = "[assume a (sample (flip 0.5))] [assume b (sample (flip 0.5))] [predict a]";
        let p = parse(src).unwrap();
        let r1 = adlmh_run(&p, 500, 0.5, 100, ChaCha8Rng::seed_from_u64(9)).unwrap();
        let r2 = adlmh_run(&p, 500, 0.5, 100, ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.outputs.len(), 500);
        let iters: Vec<u64> = r1.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, [100, 200, 300, 400, 499]);
        let one = adlmh_run(&p, 1, 0.5, 0, ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(one.snapshots[0].rows.is_empty());
    }

    #[test]
    fn penalty_touches_one_count() {
        let src = "[assume a (sample (flip 0.5))] [assume b (sample (flip 0.5))] [predict a]";
        let p = parse(src).unwrap();
        let mut chain = AdaptiveChain::init(&p, 0.5, ChaCha8Rng::seed_from_u64(1)).unwrap();
        for _ in 0..300 {
            let before = chain.scheduler().stats().clone();
            let prev = chain.output().to_vec();
            let o = chain.step().unwrap();
            let after = chain.scheduler().stats();
            if o.step.accepted && prev == chain.output() {
                let mut changed = 0;
                for (a, s) in after {
                    let b = before.get(a).copied().unwrap_or(ChoiceStats::OPTIMISTIC);
                    assert_eq!(s.reward, b.reward);
                    if s.count != b.count {
                        changed += 1;
                    }
                }
                assert_eq!(changed, 1);
            }
            for s in after.values() {
                assert!((0.0..=1.0).contains(&s.unit_reward()));
            }
        }
    }
}
