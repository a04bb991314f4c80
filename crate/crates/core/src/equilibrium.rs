//! Equilibrium of reward propagation in the two-variable model: one variable
//! always changes the output, the other never does.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("fixed point iteration did not converge in {0} iterations")]
    NoConvergence(usize),
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), EquilibriumError> {
    if ok {
        Ok(())
    } else {
        Err(EquilibriumError::Domain { name, value, range })
    }
}

/// Below this distance from 1, `b_function` switches to a series in `1 - p`.
pub const SERIES_CUTOFF: f64 = 1e-6;

/// Expected unit reward of the variable that never changes the output, as a
/// function of the probability `p` that an accepted step modifies the other
/// variable:
///
/// `B(p) = (1 + p ln p / (1 - p)) / (1/p + p ln p / (1 - p))`
pub fn b_function(p: f64) -> Result<f64, EquilibriumError> {
    check("p1", p, (0.0..=1.0).contains(&p), "[0, 1]")?;
    if p == 0.0 {
        return Ok(0.0);
    }
    let u = 1.0 - p;
    if u < SERIES_CUTOFF {
        let num = 0.5 + u / 6.0 + u * u / 12.0;
        let den = 1.5 + 7.0 * u / 6.0 + 13.0 * u * u / 12.0;
        return Ok(num / den);
    }
    let a = p * math::ln(p) / u;
    Ok((1.0 + a) / (1.0 / p + a))
}

/// Reward and count increments of one block: `k` non-changing accepts
/// followed by one changing accept.
pub fn poisson_geometric_deltas(k: u64) -> (f64, f64, f64, f64) {
    let k = k as f64;
    let share = k / (k + 1.0);
    (1.0 / (k + 1.0), 1.0 / (k + 1.0), share, k + share)
}

/// Nondecreasing on a uniform grid over [0, 1] and strictly increasing
/// between interior points.
pub fn b_monotonicity_check(grid_size: usize) -> Result<bool, EquilibriumError> {
    check("grid size", grid_size as f64, grid_size >= 2, "[2, inf)")?;
    let last = grid_size - 1;
    let values = (0..grid_size)
        .map(|i| b_function(if i == last { 1.0 } else { i as f64 / last as f64 }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(values.windows(2).enumerate().all(|(i, w)| {
        let interior = i > 0 && i + 1 < last;
        if interior {
            w[1] > w[0]
        } else {
            w[1] >= w[0] - 1e-12
        }
    }))
}

/// Selection, acceptance and output-change probabilities of two variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoVarModel {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
}

impl TwoVarModel {
    pub fn new(alpha: [f64; 2], beta: [f64; 2], gamma: [f64; 2]) -> Result<Self, EquilibriumError> {
        for a in alpha {
            check("alpha", a, a > 0.0 && a < 1.0, "(0, 1)")?;
        }
        check("alpha sum", alpha[0] + alpha[1], math::abs(alpha[0] + alpha[1] - 1.0) < 1e-12, "{1}")?;
        for b in beta {
            check("beta", b, b > 0.0 && b <= 1.0, "(0, 1]")?;
        }
        for g in gamma {
            check("gamma", g, (0.0..=1.0).contains(&g), "[0, 1]")?;
        }
        Ok(TwoVarModel { alpha, beta, gamma })
    }

    /// Equal selection, `gamma = (1, 0)`, and acceptance rates chosen so that
    /// an accepted step touches the first variable with probability `p1`.
    pub fn with_p1(p1: f64) -> Result<Self, EquilibriumError> {
        check("p1", p1, p1 > 0.0 && p1 < 1.0, "(0, 1)")?;
        let beta = if p1 <= 0.5 {
            [p1 / (1.0 - p1), 1.0]
        } else {
            [1.0, (1.0 - p1) / p1]
        };
        TwoVarModel::new([0.5, 0.5], beta, [1.0, 0.0])
    }

    /// Probability that an accepted step modifies the first variable.
    pub fn p1(&self) -> f64 {
        let a = self.alpha[0] * self.beta[0];
        a / (a + self.alpha[1] * self.beta[1])
    }
}

/// Increments accumulated between two output changes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Block {
    pub accepts: [u64; 2],
    pub delta_reward: [f64; 2],
    pub delta_count: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub reward: [f64; 2],
    pub count: [f64; 2],
    pub steps: u64,
    pub accepted: u64,
    /// Completed blocks, in order.
    pub blocks: Vec<Block>,
}

impl Simulation {
    pub fn unit_rewards(&self) -> [f64; 2] {
        [self.reward[0] / self.count[0], self.reward[1] / self.count[1]]
    }

    /// Ratio estimate of each unit reward over completed blocks, with a
    /// delta-method standard error treating blocks as independent.
    pub fn block_estimates(&self) -> [Estimate; 2] {
        let n = self.blocks.len() as f64;
        core::array::from_fn(|j| {
            let sr: f64 = self.blocks.iter().map(|b| b.delta_reward[j]).sum();
            let sc: f64 = self.blocks.iter().map(|b| b.delta_count[j]).sum();
            let mean = sr / sc;
            let resid: f64 = self
                .blocks
                .iter()
                .map(|b| {
                    let e = b.delta_reward[j] - mean * b.delta_count[j];
                    e * e
                })
                .sum();
            let std_error = math::sqrt(resid / (n * (n - 1.0))) / (sc / n);
            Estimate { mean, std_error }
        })
    }
}

#[derive(Default)]
struct Bookkeeping {
    reward: [f64; 2],
    count: [f64; 2],
    history: [u64; 2],
    block: Block,
    accepted: u64,
}

impl Bookkeeping {
    /// Reward propagation for one accepted step of variable `i`.
    fn accept(&mut self, i: usize, changed: bool, blocks: Option<&mut Vec<Block>>) {
        self.accepted += 1;
        self.history[i] += 1;
        self.block.accepts[i] += 1;
        if changed {
            let total = (self.history[0] + self.history[1]) as f64;
            for j in 0..2 {
                if self.history[j] > 0 {
                    let share = self.history[j] as f64 / total;
                    self.reward[j] += share;
                    self.count[j] += share;
                    self.block.delta_reward[j] += share;
                    self.block.delta_count[j] += share;
                }
            }
            self.history = [0, 0];
            let done = core::mem::take(&mut self.block);
            if let Some(b) = blocks {
                b.push(done);
            }
        } else {
            self.count[i] += 1.0;
            self.block.delta_count[i] += 1.0;
        }
    }
}

/// Runs the abstract two-variable process with fixed selection
/// probabilities. Block records are kept when `keep_blocks` is set.
pub fn simulate_two_variable<R: Rng + ?Sized>(
    model: &TwoVarModel,
    steps: u64,
    keep_blocks: bool,
    rng: &mut R,
) -> Simulation {
    let mut book = Bookkeeping::default();
    let mut blocks = Vec::new();
    for _ in 0..steps {
        let i = if rng.random::<f64>() < model.alpha[0] { 0 } else { 1 };
        if rng.random::<f64>() < model.beta[i] {
            let changed = rng.random::<f64>() < model.gamma[i];
            book.accept(i, changed, keep_blocks.then_some(&mut blocks));
        }
    }
    Simulation {
        reward: book.reward,
        count: book.count,
        steps,
        accepted: book.accepted,
        blocks,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matching {
    pub unit_rewards: [f64; 2],
    pub final_alpha: [f64; 2],
    pub min_alpha: [f64; 2],
}

/// The same process with selection probabilities proportional to current
/// unit rewards, starting from optimistic stats `r = c = 1`.
pub fn simulate_probability_matching<R: Rng + ?Sized>(
    beta: [f64; 2],
    gamma: [f64; 2],
    steps: u64,
    rng: &mut R,
) -> Matching {
    let mut book = Bookkeeping {
        reward: [1.0, 1.0],
        count: [1.0, 1.0],
        ..Bookkeeping::default()
    };
    let alpha = |b: &Bookkeeping| {
        let rho = [b.reward[0] / b.count[0], b.reward[1] / b.count[1]];
        let s = rho[0] + rho[1];
        [rho[0] / s, rho[1] / s]
    };
    let mut min_alpha = alpha(&book);
    for _ in 0..steps {
        let a = alpha(&book);
        min_alpha = [min_alpha[0].min(a[0]), min_alpha[1].min(a[1])];
        let i = if rng.random::<f64>() < a[0] { 0 } else { 1 };
        if rng.random::<f64>() < beta[i] {
            let changed = rng.random::<f64>() < gamma[i];
            book.accept(i, changed, None);
        }
    }
    let final_alpha = alpha(&book);
    Matching {
        unit_rewards: [book.reward[0] / book.count[0], book.reward[1] / book.count[1]],
        final_alpha,
        min_alpha: [min_alpha[0].min(final_alpha[0]), min_alpha[1].min(final_alpha[1])],
    }
}

pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
pub const FIXED_POINT_ITERATIONS: usize = 100_000;

/// Equilibrium ratio `r = alpha2 / alpha1` under probability matching:
/// the solution of `r = B(b1 / (b1 + r b2))`, by damped iteration.
pub fn probability_matching_fixed_point(beta: [f64; 2]) -> Result<f64, EquilibriumError> {
    for b in beta {
        check("beta", b, b > 0.0 && b <= 1.0, "(0, 1]")?;
    }
    let mut r = 1.0 / 3.0;
    for _ in 0..FIXED_POINT_ITERATIONS {
        let p1 = beta[0] / (beta[0] + r * beta[1]);
        let next = 0.5 * r + 0.5 * b_function(p1)?;
        if math::abs(next - r) < FIXED_POINT_TOLERANCE {
            return Ok(next);
        }
        r = next;
    }
    Err(EquilibriumError::NoConvergence(FIXED_POINT_ITERATIONS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn b_limits() {
        assert_eq!(b_function(0.0).unwrap(), 0.0);
        assert!((b_function(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let mid = b_function(0.5).unwrap();
        assert!(mid > 0.0 && mid < 1.0 / 3.0);
        assert!(b_function(-0.1).is_err());
        assert!(b_function(f64::NAN).is_err());
    }

    #[test]
    fn series_meets_raw_formula() {
        // Raw formula at 1e-5, well inside its accurate range, against the series.
        let p = 1.0 - 1e-5;
        let u = 1.0 - p;
        let a = p * libm::log(p) / u;
        let raw = (1.0 + a) / (1.0 / p + a);
        let series = (0.5 + u / 6.0 + u * u / 12.0) / (1.5 + 7.0 * u / 6.0 + 13.0 * u * u / 12.0);
        assert!((raw - series).abs() < 1e-9);
        let below = b_function(1.0 - 0.99e-6).unwrap();
        let above = b_function(1.0 - 1.01e-6).unwrap();
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn expected_block_share_closed_form() {
        for i in 1..10 {
            let p = i as f64 / 10.0;
            let mut sum = 0.0;
            let mut q = p;
            for k in 0..100_000u32 {
                sum += k as f64 / (k as f64 + 1.0) * q;
                q *= 1.0 - p;
            }
            let closed = 1.0 + p * libm::log(p) / (1.0 - p);
            assert!((sum - closed).abs() < 1e-8, "p = {p}");
        }
    }

    #[test]
    fn deltas_examples() {
        assert_eq!(poisson_geometric_deltas(0), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(poisson_geometric_deltas(1), (0.5, 0.5, 0.5, 1.5));
        assert_eq!(poisson_geometric_deltas(3), (0.25, 0.25, 0.75, 3.75));
    }

    #[test]
    fn monotone_on_grid() {
        assert!(b_monotonicity_check(10_000).unwrap());
        assert!(b_monotonicity_check(2).unwrap());
        assert!(b_monotonicity_check(1).is_err());
    }

    #[test]
    fn always_changing_outputs_give_unit_rewards() {
        let m = TwoVarModel::new([0.5, 0.5], [1.0, 1.0], [1.0, 1.0]).unwrap();
        let s = simulate_two_variable(&m, 10_000, false, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.unit_rewards(), [1.0, 1.0]);
    }

    #[test]
    fn blocks_match_deltas() {
        let m = TwoVarModel::with_p1(0.3).unwrap();
        let s = simulate_two_variable(&m, 20_000, true, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(s.blocks.len() > 1000);
        for b in &s.blocks {
            assert_eq!(b.accepts[0], 1);
            let (r1, c1, r2, c2) = poisson_geometric_deltas(b.accepts[1]);
            assert_eq!((b.delta_reward[0], b.delta_count[0], b.delta_reward[1], b.delta_count[1]), (r1, c1, r2, c2));
        }
    }

    #[test]
    fn with_p1_recovers_p1() {
        for p in [0.2, 0.5, 0.8] {
            assert!((TwoVarModel::with_p1(p).unwrap().p1() - p).abs() < 1e-15);
        }
        assert!(TwoVarModel::new([0.5, 0.5], [0.0, 1.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn fixed_point_examples() {
        let r = probability_matching_fixed_point([1.0, 1.0]).unwrap();
        assert!((r - b_function(1.0 / (1.0 + r)).unwrap()).abs() < 1e-9);
        let r = probability_matching_fixed_point([1.0, 1e-9]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn matching_keeps_selection_positive() {
        let m = simulate_probability_matching([0.7, 0.4], [1.0, 0.0], 100_000, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(m.min_alpha.iter().all(|&a| a > 1e-3));
    }

    proptest! {
        #[test]
        fn b_stays_in_range(p in 0.0f64..=1.0) {
            let b = b_function(p).unwrap();
            prop_assert!((0.0..=1.0 / 3.0 + 1e-15).contains(&b));
        }

        #[test]
        fn fixed_point_in_range(b1 in 0.01f64..=1.0, b2 in 0.01f64..=1.0) {
            let r = probability_matching_fixed_point([b1, b2]).unwrap();
            prop_assert!(r > 0.0 && r <= 1.0 / 3.0 + 1e-12);
        }
    }
}
