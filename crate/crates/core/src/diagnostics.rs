//! Exact HMM marginals and the distances used to track convergence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("q has no mass at index {0} where p does")]
    Support(usize),
    #[error("empty sample")]
    Empty,
    #[error("invalid hmm: {0}")]
    InvalidHmm(&'static str),
}

/// Discrete-state HMM with normal emissions. State 0 is unobserved;
/// `observations[t - 1]` is emitted by state `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmSpec {
    pub initial: Vec<f64>,
    /// Row-major, `transition[i][j] = P(next = j | current = i)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sd: f64,
    pub observations: Vec<f64>,
}

impl Default for HmmSpec {
    fn default() -> Self {
        HmmSpec {
            initial: alloc::vec![1.0 / 3.0; 3],
            transition: alloc::vec![
                alloc::vec![0.1, 0.5, 0.4],
                alloc::vec![0.2, 0.2, 0.6],
                alloc::vec![0.15, 0.15, 0.7],
            ],
            means: alloc::vec![-1.0, 1.0, 0.0],
            sd: 1.0,
            observations: alloc::vec![
                0.9, 0.8, 0.7, 0.0, -0.025, 5.0, 2.0, 0.1, 0.0, 0.13, 0.45, 6.0, 0.2, 0.3, -1.0, -1.0
            ],
        }
    }
}

impl HmmSpec {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let k = self.states();
        if k == 0 {
            return Err(MetricError::InvalidHmm("no states"));
        }
        if self.transition.len() != k || self.transition.iter().any(|r| r.len() != k) || self.means.len() != k {
            return Err(MetricError::InvalidHmm("dimensions disagree"));
        }
        let stochastic = |row: &[f64]| {
            row.iter().all(|&x| x >= 0.0) && math::abs(row.iter().sum::<f64>() - 1.0) < 1e-9
        };
        if !stochastic(&self.initial) || !self.transition.iter().all(|r| stochastic(r)) {
            return Err(MetricError::InvalidHmm("rows must be probability vectors"));
        }
        if !(self.sd > 0.0) {
            return Err(MetricError::InvalidHmm("sd must be positive"));
        }
        Ok(())
    }

    fn emission(&self, state: usize, y: f64) -> f64 {
        let z = (y - self.means[state]) / self.sd;
        math::exp(-0.5 * z * z) / (self.sd * math::sqrt(2.0 * core::f64::consts::PI))
    }

    /// The model as a program in the surface language, predicting the first
    /// and the one-past-last state.
    pub fn program_source(&self) -> String {
        let list = |xs: &[f64]| {
            let mut s = String::from("(list");
            for x in xs {
                let _ = write!(s, " {x:?}");
            }
            s.push(')');
            s
        };
        let mut src = format!("[assume initial-state-dist {}]\n", list(&self.initial));
        src.push_str("[assume get-t\n  (lambda (s)\n    (cond");
        for (i, row) in self.transition.iter().enumerate() {
            let _ = write!(src, "\n      ((= s {i}) {})", list(row));
        }
        src.push_str("))]\n");
        src.push_str("[assume transition (lambda (prev-state) (sample (discrete (get-t prev-state))))]\n");
        src.push_str(
            "[assume get-state\n  (mem (lambda (index)\n    (if (<= index 0)\n      (sample (discrete initial-state-dist))\n      (transition (get-state (- index 1))))))]\n",
        );
        src.push_str("[assume get-obs-mean\n  (lambda (s) (cond");
        for (i, m) in self.means.iter().enumerate() {
            let _ = write!(src, "\n    ((= s {i}) {m:?})");
        }
        src.push_str("))]\n");
        for (t, y) in self.observations.iter().enumerate() {
            let _ = writeln!(src, "[observe (normal (get-obs-mean (get-state {})) {:?}) {y:?}]", t + 1, self.sd);
        }
        let _ = writeln!(src, "[predict (get-state 0)]\n[predict (get-state {})]", self.observations.len() + 1);
        src
    }
}

/// Posterior marginals of states `0..=T + 1`, where `T` is the number of
/// observations; the last entry is the one-step predictive.
pub fn forward_backward(spec: &HmmSpec) -> Result<Vec<Vec<f64>>, MetricError> {
    spec.validate()?;
    let k = spec.states();
    let n = spec.observations.len();
    let normalize = |v: &mut Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    };
    let mut forward = Vec::with_capacity(n + 1);
    forward.push(spec.initial.clone());
    for (t, &y) in spec.observations.iter().enumerate() {
        let prev: &Vec<f64> = &forward[t];
        let mut next: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| prev[i] * spec.transition[i][j]).sum::<f64>() * spec.emission(j, y))
            .collect();
        normalize(&mut next);
        forward.push(next);
    }
    let mut backward = alloc::vec![alloc::vec![1.0; k]; n + 1];
    for t in (0..n).rev() {
        let y = spec.observations[t];
        let mut b: Vec<f64> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| spec.transition[i][j] * spec.emission(j, y) * backward[t + 1][j])
                    .sum()
            })
            .collect();
        normalize(&mut b);
        backward[t] = b;
    }
    let mut marginals: Vec<Vec<f64>> = (0..=n)
        .map(|t| {
            let mut m: Vec<f64> = (0..k).map(|i| forward[t][i] * backward[t][i]).collect();
            normalize(&mut m);
            m
        })
        .collect();
    let last = &marginals[n];
    let predictive: Vec<f64> = (0..k)
        .map(|j| (0..k).map(|i| last[i] * spec.transition[i][j]).sum())
        .collect();
    marginals.push(predictive);
    Ok(marginals)
}

/// `sum p log(p / q)`.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::LengthMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(MetricError::Support(i));
            }
            kl += pi * math::ln(pi / qi);
        }
    }
    Ok(kl.max(0.0))
}

/// Add-one smoothed frequencies.
pub fn smoothed_empirical(counts: &[u64]) -> Vec<f64> {
    let total = counts.iter().sum::<u64>() as f64 + counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + 1.0) / total).collect()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(math::abs(i as f64 / na - j as f64 / nb));
    }
    Ok(d)
}

/// Kolmogorov-Smirnov distance of a sample from a continuous CDF.
pub fn ks_vs_cdf(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, MetricError> {
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let a = sorted(a);
    let n = a.len() as f64;
    Ok(a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + math::erf((x - mean) / (sd * core::f64::consts::SQRT_2)))
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64, MetricError> {
    if xs.is_empty() {
        return Err(MetricError::Empty);
    }
    let v = sorted(xs);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// 25th, 50th and 75th percentiles.
pub fn quartiles(xs: &[f64]) -> Result<[f64; 3], MetricError> {
    Ok([quantile(xs, 0.25)?, quantile(xs, 0.5)?, quantile(xs, 0.75)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as _, StandardNormal};

    fn truncated(n: usize) -> HmmSpec {
        let mut s = HmmSpec::default();
        s.observations.truncate(n);
        s
    }

    /// Marginals by summing over every state path, including the predicted state.
    fn enumerate(spec: &HmmSpec) -> Vec<Vec<f64>> {
        let k = spec.states();
        let len = spec.observations.len() + 2;
        let mut marg = alloc::vec![alloc::vec![0.0; k]; len];
        let mut path = alloc::vec![0usize; len];
        loop {
            let mut w = spec.initial[path[0]];
            for t in 1..len {
                w *= spec.transition[path[t - 1]][path[t]];
                if t <= spec.observations.len() {
                    w *= spec.emission(path[t], spec.observations[t - 1]);
                }
            }
            for t in 0..len {
                marg[t][path[t]] += w;
            }
            let mut pos = 0;
            while pos < len && path[pos] == k - 1 {
                path[pos] = 0;
                pos += 1;
            }
            if pos == len {
                break;
            }
            path[pos] += 1;
        }
        for m in &mut marg {
            let s: f64 = m.iter().sum();
            m.iter_mut().for_each(|x| *x /= s);
        }
        marg
    }

    #[test]
    fn forward_backward_matches_enumeration() {
        let spec = truncated(6);
        let fb = forward_backward(&spec).unwrap();
        let brute = enumerate(&spec);
        assert_eq!(fb.len(), 8);
        for (a, b) in fb.iter().zip(&brute) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_spec_marginals_are_distributions() {
        let fb = forward_backward(&HmmSpec::default()).unwrap();
        assert_eq!(fb.len(), 18);
        for m in &fb {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_model_is_uniform() {
        let spec = HmmSpec {
            transition: alloc::vec![alloc::vec![1.0 / 3.0; 3]; 3],
            means: alloc::vec![0.0; 3],
            ..HmmSpec::default()
        };
        for m in forward_backward(&spec).unwrap() {
            assert!(m.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn sharp_emissions_pin_states() {
        let spec = HmmSpec {
            sd: 0.05,
            observations: alloc::vec![1.0; 5],
            ..HmmSpec::default()
        };
        let fb = forward_backward(&spec).unwrap();
        for m in &fb[1..=5] {
            assert!(m[1] > 1.0 - 1e-9);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = HmmSpec::default();
        s.transition[0][0] = 0.5;
        assert!(forward_backward(&s).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_discrete(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert!((kl_discrete(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_discrete(&[0.5, 0.5], &[1.0, 0.0]), Err(MetricError::Support(1)));
        assert!(kl_discrete(&[1.0], &[0.5, 0.5]).is_err());
        assert_eq!(smoothed_empirical(&[3, 0, 1]), [4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0]);
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0; 4], &[1.0; 7]).unwrap(), 1.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[2.0, 3.0]).unwrap(), 0.5);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn ks_of_normal_draws_is_small() {
        // With 1e4 draws the DKW bound puts the distance under 0.0163 with
        // probability 0.99.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_vs_cdf(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap() < 0.025);
    }

    #[test]
    fn quartile_interpolation() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap(), [2.0, 3.0, 4.0]);
        assert_eq!(quantile(&[1.0, 2.0], 0.5).unwrap(), 1.5);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn hmm_source_parses() {
        let src = HmmSpec::default().program_source();
        let p = crate::syntax::parse(&src).unwrap();
        assert_eq!(p.forms.len(), 5 + 16 + 2);
    }

    proptest! {
        #[test]
        fn kl_nonnegative(p in proptest::collection::vec(0.01f64..1.0, 4), q in proptest::collection::vec(0.01f64..1.0, 4)) {
            let n = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
            prop_assert!(kl_discrete(&n(p), &n(q)).unwrap() >= 0.0);
        }

        #[test]
        fn ks_in_unit_interval(a in proptest::collection::vec(-5.0f64..5.0, 1..40), b in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let d = ks_two_sample(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap());
        }
    }
}
