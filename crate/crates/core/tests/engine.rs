use adlmh_core::diagnostics::HmmSpec;
use adlmh_core::lmh::{lmh_accept_ratio, ChainState};
use adlmh_core::syntax::parse;
use adlmh_core::trace::{execute, resampled_set, Provenance};
use adlmh_core::Value;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn hmm() -> adlmh_core::Program {
    parse(&HmmSpec::default().program_source()).unwrap()
}

#[test]
fn hmm_trace_shape() {
    let p = hmm();
    let t = execute(&p, None, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    // Initial state plus one transition for each of states 1..=17.
    assert_eq!(t.choices.len(), 18);
    assert_eq!(t.image.len(), 16);
    assert_eq!(t.output.len(), 2);
    assert!(t.log_joint().is_finite());
    let distinct: BTreeSet<_> = t.addresses().cloned().collect();
    assert_eq!(distinct.len(), 18);
}

#[test]
fn hmm_addresses_are_stable() {
    let p = hmm();
    let a = execute(&p, None, None, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = execute(&p, None, None, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let c = execute(&p, None, None, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let set = |t: &adlmh_core::Trace| t.addresses().cloned().collect::<Vec<_>>();
    assert_eq!(set(&a), set(&b));
    // Structure does not depend on values.
    assert_eq!(set(&a), set(&c));
}

#[test]
fn hmm_forcing_a_transition_rescores_only_its_successor() {
    let p = hmm();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = execute(&p, None, None, &mut rng).unwrap();
    for k in 0..t.choices.len() {
        let old = t.choices[k].value.as_num().unwrap();
        let forced = Value::Num((old + 1.0) % 3.0);
        let new = execute(&p, Some(&t), Some((&t.choices[k].address, forced)), &mut rng).unwrap();
        for (j, rec) in new.choices.iter().enumerate() {
            let expected = if j == k {
                Provenance::ResampledProposal
            } else if j == k + 1 {
                Provenance::Rescored
            } else {
                Provenance::Reused
            };
            assert_eq!(rec.provenance, expected, "forced {k}, record {j}");
            if j != k {
                assert_eq!(rec.value, t.choices[j].value);
            }
        }
        let rs = resampled_set(&t, &new);
        assert_eq!(rs.addresses, vec![t.choices[k].address.clone()]);
        assert!((new.recomputed_log_joint().unwrap() - new.log_joint()).abs() < 1e-12);
    }
}

#[test]
fn reforcing_every_value_reproduces_output() {
    let p = hmm();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = execute(&p, None, None, &mut rng).unwrap();
    let again = execute(&p, Some(&t), None, &mut rng).unwrap();
    assert_eq!(again.output, t.output);
    assert!(again.choices.iter().all(|c| c.provenance == Provenance::Reused));
}

/// Two dependent coin flips and one noisy observation of their sum.
const TWO_FLIPS: &str = "
[assume a (sample (flip 0.3))]
[assume b (sample (flip (if a 0.8 0.4)))]
[observe (normal (+ (if a 1 0) (if b 1 0)) 0.7) 1.6]
[predict a]
[predict b]";

fn two_flips_posterior() -> [f64; 4] {
    let lik = |s: f64| (-(1.6 - s) * (1.6 - s) / (2.0 * 0.49)).exp();
    let mut w = [0.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        let (a, b) = (i & 2 != 0, i & 1 != 0);
        let pa = if a { 0.3 } else { 0.7 };
        let pb1 = if a { 0.8 } else { 0.4 };
        let pb = if b { pb1 } else { 1.0 - pb1 };
        *wi = pa * pb * lik(a as u8 as f64 + b as u8 as f64);
    }
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

fn index(z: &[Value]) -> usize {
    (z[0].is_truthy() as usize) * 2 + z[1].is_truthy() as usize
}

#[test]
fn lmh_ratio_matches_hand_computation() {
    let p = parse(TWO_FLIPS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = execute(&p, None, None, &mut rng).unwrap();
    for k in 0..2 {
        for v in [false, true] {
            let new = execute(&p, Some(&t), Some((&t.choices[k].address, Value::Bool(v))), &mut rng).unwrap();
            // Both traces have two choices, so the ratio is
            // p(x') p(x_k | .) / (p(x) p(x'_k | .)).
            let expected = (new.log_joint() - t.log_joint() + t.choices[k].log_prob - new.choices[k].log_prob)
                .exp()
                .min(1.0);
            assert!((lmh_accept_ratio(&t, &new) - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn lmh_short_run_matches_posterior() {
    let p = parse(TWO_FLIPS).unwrap();
    let exact = two_flips_posterior();
    let mut chain = ChainState::init(&p, ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut counts = [0u64; 4];
    let n = 100_000;
    for _ in 0..n {
        chain.step().unwrap();
        counts[index(chain.output())] += 1;
    }
    let tv: f64 = counts.iter().zip(exact).map(|(&c, e)| (c as f64 / n as f64 - e).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.01, "tv = {tv}");
}
