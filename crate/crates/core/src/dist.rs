//! Distribution families used by the modelling language.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::Rng;
use thiserror::Error;

use crate::math;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Normal,
    Gamma,
    Discrete,
    Flip,
    Mvn,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Gamma => "gamma",
            Family::Discrete => "discrete",
            Family::Flip => "flip",
            Family::Mvn => "mvn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameter { family: &'static str, reason: &'static str },
    #[error("{family} cannot score a {got}")]
    TypeMismatch { family: &'static str, got: &'static str },
    #[error("covariance is not positive definite after jitter")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A parameterized distribution. Parameters are validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    /// Shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
    /// Unnormalized weights over indices `0..n`.
    Discrete { weights: Vec<f64> },
    Flip { p: f64 },
    /// Row-major covariance.
    Mvn { mean: Vec<f64>, cov: Vec<f64> },
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl Distribution {
    pub fn normal(mean: f64, sd: f64) -> Result<Self, DistError> {
        if !mean.is_finite() {
            return Err(invalid("normal", "mean must be finite"));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(invalid("normal", "standard deviation must be positive"));
        }
        Ok(Distribution::Normal { mean, sd })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, DistError> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(invalid("gamma", "shape and rate must be positive"));
        }
        Ok(Distribution::Gamma { shape, rate })
    }

    pub fn discrete(weights: Vec<f64>) -> Result<Self, DistError> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("discrete", "weights must be finite and nonnegative"));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(invalid("discrete", "weights must have a positive sum"));
        }
        Ok(Distribution::Discrete { weights })
    }

    pub fn flip(p: f64) -> Result<Self, DistError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("flip", "probability must lie in [0, 1]"));
        }
        Ok(Distribution::Flip { p })
    }

    pub fn mvn(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self, DistError> {
        let n = mean.len();
        if n == 0 {
            return Err(invalid("mvn", "dimension must be positive"));
        }
        if cov.len() != n * n {
            return Err(DistError::Dimension {
                expected: n * n,
                got: cov.len(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("mvn", "parameters must be finite"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (cov[i * n + j], cov[j * n + i]);
                if math::abs(a - b) > 1e-12 * (1.0 + math::abs(a).max(math::abs(b))) {
                    return Err(invalid("mvn", "covariance must be symmetric"));
                }
            }
        }
        cholesky_jittered(&cov, n)?;
        Ok(Distribution::Mvn { mean, cov })
    }

    pub fn family(&self) -> Family {
        match self {
            Distribution::Normal { .. } => Family::Normal,
            Distribution::Gamma { .. } => Family::Gamma,
            Distribution::Discrete { .. } => Family::Discrete,
            Distribution::Flip { .. } => Family::Flip,
            Distribution::Mvn { .. } => Family::Mvn,
        }
    }

    /// Draws a value. Deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        use rand_distr::Distribution as _;
        match self {
            Distribution::Normal { mean, sd } => {
                let d = rand_distr::Normal::new(*mean, *sd).expect("validated normal");
                Value::Num(d.sample(rng))
            }
            Distribution::Gamma { shape, rate } => {
                let d = rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated gamma");
                Value::Num(d.sample(rng))
            }
            Distribution::Discrete { weights } => {
                let total: f64 = weights.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        last_positive = i;
                        acc += w;
                        if u < acc {
                            return Value::Num(i as f64);
                        }
                    }
                }
                Value::Num(last_positive as f64)
            }
            Distribution::Flip { p } => Value::Bool(rng.random::<f64>() < *p),
            Distribution::Mvn { mean, cov } => {
                let n = mean.len();
                let (l, _) = cholesky_jittered(cov, n).expect("checked at construction");
                let z: Vec<f64> = (0..n)
                    .map(|_| rand_distr::StandardNormal.sample(rng))
                    .collect();
                let ys = (0..n)
                    .map(|i| {
                        let s: f64 = (0..=i).map(|j| l[i * n + j] * z[j]).sum();
                        Value::Num(mean[i] + s)
                    })
                    .collect();
                Value::list(ys)
            }
        }
    }

    /// Log density (or mass) at `v`; negative infinity outside the support.
    pub fn log_density(&self, v: &Value) -> Result<f64, DistError> {
        match self {
            Distribution::Normal { mean, sd } => {
                let x = self.expect_num(v)?;
                let z = (x - mean) / sd;
                Ok(-LN_SQRT_2PI - math::ln(*sd) - 0.5 * z * z)
            }
            Distribution::Gamma { shape, rate } => {
                let x = self.expect_num(v)?;
                if x < 0.0 || x.is_nan() || x.is_infinite() {
                    return Ok(f64::NEG_INFINITY);
                }
                let norm = shape * math::ln(*rate) - math::lgamma(*shape);
                if x == 0.0 {
                    return Ok(match shape.partial_cmp(&1.0) {
                        Some(core::cmp::Ordering::Equal) => norm,
                        Some(core::cmp::Ordering::Less) => f64::INFINITY,
                        _ => f64::NEG_INFINITY,
                    });
                }
                Ok(norm + (shape - 1.0) * math::ln(x) - rate * x)
            }
            Distribution::Discrete { weights } => {
                let x = self.expect_num(v)?;
                if x < 0.0 || math::floor(x) != x || x >= weights.len() as f64 {
                    return Ok(f64::NEG_INFINITY);
                }
                let w = weights[x as usize];
                if w == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let total: f64 = weights.iter().sum();
                Ok(math::ln(w / total))
            }
            Distribution::Flip { p } => match v {
                Value::Bool(true) => Ok(math::ln(*p)),
                Value::Bool(false) => Ok(math::ln(1.0 - p)),
                other => Err(DistError::TypeMismatch {
                    family: "flip",
                    got: other.type_name(),
                }),
            },
            Distribution::Mvn { mean, cov } => {
                let ys = v
                    .as_list()
                    .ok_or(DistError::TypeMismatch {
                        family: "mvn",
                        got: v.type_name(),
                    })?
                    .iter()
                    .map(|y| self.expect_num(y))
                    .collect::<Result<Vec<_>, _>>()?;
                mvn_log_density(mean, cov, &ys)
            }
        }
    }

    /// True iff `v` has the family's value type and positive density.
    pub fn in_support(&self, v: &Value) -> bool {
        matches!(self.log_density(v), Ok(lp) if lp > f64::NEG_INFINITY)
    }

    fn expect_num(&self, v: &Value) -> Result<f64, DistError> {
        v.as_num().ok_or(DistError::TypeMismatch {
            family: self.family().name(),
            got: v.type_name(),
        })
    }

    pub fn into_value(self) -> Value {
        Value::Dist(Arc::new(self))
    }
}

fn invalid(family: &'static str, reason: &'static str) -> DistError {
    DistError::InvalidParameter { family, reason }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Distribution::Gamma { shape, rate } => write!(f, "gamma({shape}, {rate})"),
            Distribution::Discrete { weights } => write!(f, "discrete({weights:?})"),
            Distribution::Flip { p } => write!(f, "flip({p})"),
            Distribution::Mvn { mean, .. } => write!(f, "mvn(dim {})", mean.len()),
        }
    }
}

/// Lower Cholesky factor of `cov + eps I`. `eps` is 0 when `cov` factors
/// as is; otherwise it starts at 1e-9 times the mean diagonal and grows
/// tenfold up to three times. Returns the factor and the jitter used.
pub fn cholesky_jittered(cov: &[f64], n: usize) -> Result<(Vec<f64>, f64), DistError> {
    if let Some(l) = cholesky(cov, n, 0.0) {
        return Ok((l, 0.0));
    }
    let mean_diag = (0..n).map(|i| cov[i * n + i]).sum::<f64>() / n as f64;
    let mut eps = 1e-9 * math::abs(mean_diag);
    if eps == 0.0 {
        eps = 1e-9;
    }
    for _ in 0..4 {
        if let Some(l) = cholesky(cov, n, eps) {
            return Ok((l, eps));
        }
        eps *= 10.0;
    }
    Err(DistError::NotPositiveDefinite)
}

fn cholesky(cov: &[f64], n: usize, eps: f64) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = cov[i * n + j];
            if i == j {
                s += eps;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `log N(y; mean, cov + eps I)` through a jittered Cholesky factorization.
pub fn mvn_log_density(mean: &[f64], cov: &[f64], y: &[f64]) -> Result<f64, DistError> {
    let n = mean.len();
    if y.len() != n {
        return Err(DistError::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if cov.len() != n * n {
        return Err(DistError::Dimension {
            expected: n * n,
            got: cov.len(),
        });
    }
    let (l, _) = cholesky_jittered(cov, n)?;
    // Forward substitution: L u = y - mean.
    let mut u = alloc::vec![0.0; n];
    for i in 0..n {
        let mut s = y[i] - mean[i];
        for k in 0..i {
            s -= l[i * n + k] * u[k];
        }
        u[i] = s / l[i * n + i];
    }
    let quad: f64 = u.iter().map(|x| x * x).sum();
    let log_det: f64 = (0..n).map(|i| math::ln(l[i * n + i])).sum::<f64>() * 2.0;
    Ok(-0.5 * (n as f64 * math::ln(2.0 * PI) + log_det + quad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn degenerate_samples() {
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(Distribution::flip(1.0).unwrap().sample(&mut r), Value::Bool(true));
            assert_eq!(Distribution::flip(0.0).unwrap().sample(&mut r), Value::Bool(false));
            assert_eq!(
                Distribution::discrete(alloc::vec![0.0, 0.0, 1.0]).unwrap().sample(&mut r),
                Value::Num(2.0)
            );
        }
    }

    #[test]
    fn normal_sample_mean() {
        let mut r = rng();
        let d = Distribution::normal(0.0, 1.0).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut r).as_num().unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn gamma_sample_mean() {
        let mut r = rng();
        let d = Distribution::gamma(2.0, 4.0).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut r).as_num().unwrap()).sum::<f64>() / n as f64;
        // mean 0.5, sd sqrt(2)/4 / sqrt(n) ~ 0.0011
        assert!((mean - 0.5).abs() < 0.006, "mean {mean}");
    }

    #[test]
    fn closed_form_densities() {
        let n = Distribution::normal(0.0, 1.0).unwrap();
        assert!((n.log_density(&Value::Num(0.0)).unwrap() + 0.918_938_5).abs() < 1e-7);
        let f = Distribution::flip(0.5).unwrap();
        assert_eq!(f.log_density(&Value::Bool(true)).unwrap(), math::ln(0.5));
        let g = Distribution::gamma(1.0, 1.0).unwrap();
        assert_eq!(g.log_density(&Value::Num(-1.0)).unwrap(), f64::NEG_INFINITY);
        // Exponential(1) at 2.
        assert!((g.log_density(&Value::Num(2.0)).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(g.log_density(&Value::Num(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn support_queries() {
        let d = Distribution::discrete(alloc::vec![0.1, 0.5, 0.4]).unwrap();
        assert!(!d.in_support(&Value::Num(3.0)));
        assert!(!d.in_support(&Value::Num(1.5)));
        assert!(!d.in_support(&Value::Bool(true)));
        let d = Distribution::discrete(alloc::vec![0.2, 0.2, 0.6]).unwrap();
        assert!(d.in_support(&Value::Num(1.0)));
        let n = Distribution::normal(3.0, 0.5).unwrap();
        assert!(n.in_support(&Value::Num(-1e6)));
        assert!(!n.in_support(&Value::Bool(false)));
    }

    #[test]
    fn type_mismatch_is_error() {
        let n = Distribution::normal(0.0, 1.0).unwrap();
        assert!(matches!(n.log_density(&Value::Bool(true)), Err(DistError::TypeMismatch { .. })));
        let f = Distribution::flip(0.3).unwrap();
        assert!(matches!(f.log_density(&Value::Num(1.0)), Err(DistError::TypeMismatch { .. })));
    }

    #[test]
    fn invalid_parameters() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::normal(0.0, -1.0).is_err());
        assert!(Distribution::gamma(0.0, 1.0).is_err());
        assert!(Distribution::gamma(1.0, -1.0).is_err());
        assert!(Distribution::discrete(alloc::vec![]).is_err());
        assert!(Distribution::discrete(alloc::vec![0.0, 0.0]).is_err());
        assert!(Distribution::discrete(alloc::vec![-0.1, 1.0]).is_err());
        assert!(Distribution::flip(1.5).is_err());
        assert!(Distribution::mvn(alloc::vec![0.0, 0.0], alloc::vec![1.0, 0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn mvn_reduces_to_normals() {
        let lp = mvn_log_density(&[0.0], &[1.0], &[0.0]).unwrap();
        assert!((lp + 0.918_938_5).abs() < 1e-7);
        let lp = mvn_log_density(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((lp + 1.837_877_1).abs() < 1e-7);
        // Diagonal covariance equals a product of univariate normals.
        let lp = mvn_log_density(&[1.0, -2.0], &[4.0, 0.0, 0.0, 0.25], &[0.5, -1.5]).unwrap();
        let a = Distribution::normal(1.0, 2.0).unwrap().log_density(&Value::Num(0.5)).unwrap();
        let b = Distribution::normal(-2.0, 0.5).unwrap().log_density(&Value::Num(-1.5)).unwrap();
        assert!((lp - a - b).abs() < 1e-8);
    }

    #[test]
    fn mvn_singular_uses_jitter() {
        // Rank-one covariance factorizes once jitter is added.
        let lp = mvn_log_density(&[0.0, 0.0], &[1.0, 1.0, 1.0, 1.0], &[0.1, 0.1]).unwrap();
        assert!(lp.is_finite());
        assert_eq!(
            mvn_log_density(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0], &[0.0, 0.0]),
            Err(DistError::NotPositiveDefinite)
        );
    }

    /// Trapezoid quadrature of exp(log-density) over an interval.
    fn integrate(d: &Distribution, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let x = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * math::exp(d.log_density(&Value::Num(x)).unwrap())
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn densities_integrate_to_one() {
        let n = Distribution::normal(0.3, 1.7).unwrap();
        assert!((integrate(&n, -20.0, 20.0, 200_000) - 1.0).abs() < 1e-6);
        let g = Distribution::gamma(2.5, 1.5).unwrap();
        assert!((integrate(&g, 0.0, 60.0, 400_000) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normal_cdf_intervals_match_quadrature() {
        // P(a < X < b) against the erf closed form, on a grid of intervals.
        let d = Distribution::normal(0.0, 1.0).unwrap();
        for k in -4..4 {
            let (a, b) = (k as f64 * 0.5, k as f64 * 0.5 + 0.5);
            let exact = 0.5 * (math::erf(b / core::f64::consts::SQRT_2) - math::erf(a / core::f64::consts::SQRT_2));
            assert!((integrate(&d, a, b, 2000) - exact).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn discrete_mass_sums_to_one(ws in proptest::collection::vec(0.0f64..10.0, 1..8)) {
            prop_assume!(ws.iter().sum::<f64>() > 1e-6);
            let d = Distribution::discrete(ws.clone()).unwrap();
            let total: f64 = (0..ws.len())
                .map(|i| math::exp(d.log_density(&Value::Num(i as f64)).unwrap()))
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn samples_lie_in_support(seed in any::<u64>(), mean in -5.0f64..5.0, sd in 0.01f64..5.0,
                                  shape in 0.05f64..5.0, rate in 0.05f64..5.0, p in 0.0f64..=1.0,
                                  ws in proptest::collection::vec(0.0f64..1.0, 1..6)) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut dists = alloc::vec![
                Distribution::normal(mean, sd).unwrap(),
                Distribution::gamma(shape, rate).unwrap(),
                Distribution::flip(p).unwrap(),
                Distribution::mvn(alloc::vec![mean, 0.0], alloc::vec![1.0, 0.3, 0.3, 2.0]).unwrap(),
            ];
            if ws.iter().sum::<f64>() > 0.0 {
                dists.push(Distribution::discrete(ws).unwrap());
            }
            for d in &dists {
                for _ in 0..20 {
                    let v = d.sample(&mut r);
                    prop_assert!(d.in_support(&v), "{} produced {}", d, v);
                }
            }
        }

        #[test]
        fn mvn_permutation_invariant(a in 0.5f64..3.0, b in 0.5f64..3.0, c in 0.5f64..3.0,
                                     r1 in -0.4f64..0.4, r2 in -0.4f64..0.4,
                                     y in proptest::array::uniform3(-3.0f64..3.0),
                                     m in proptest::array::uniform3(-1.0f64..1.0)) {
            let sd = [a, b, c];
            let corr = [[1.0, r1, 0.0], [r1, 1.0, r2], [0.0, r2, 1.0]];
            let cov: Vec<f64> = (0..9).map(|k| sd[k / 3] * sd[k % 3] * corr[k / 3][k % 3]).collect();
            let base = mvn_log_density(&m, &cov, &y).unwrap();
            let perm = [2usize, 0, 1];
            let pm: Vec<f64> = perm.iter().map(|&i| m[i]).collect();
            let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let pc: Vec<f64> = (0..9).map(|k| cov[perm[k / 3] * 3 + perm[k % 3]]).collect();
            let permuted = mvn_log_density(&pm, &pc, &py).unwrap();
            prop_assert!((base - permuted).abs() < 1e-8);
        }
    }
}
