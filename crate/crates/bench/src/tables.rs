//! CSV tables for the equilibrium analysis and the HMM oracle.

use std::io::Write;

use adlmh_core::diagnostics::{forward_backward, HmmSpec};
use adlmh_core::equilibrium::{b_function, probability_matching_fixed_point};

use crate::BenchError;

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<(), BenchError> {
    w.flush().map_err(|e| BenchError::Io("output".into(), e))
}

/// `p1,b` on `grid` evenly spaced points of [0, 1].
pub fn write_b_table<W: Write>(grid: usize, w: W) -> Result<(), BenchError> {
    if grid < 2 {
        return Err(BenchError::Config("grid needs at least 2 points".into()));
    }
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["p1", "b"])?;
    for i in 0..grid {
        let p = i as f64 / (grid - 1) as f64;
        w.write_record([format!("{p:?}"), format!("{:?}", b_function(p)?)])?;
    }
    flush(w)
}

/// `beta1,beta2,ratio` for every pair of the given acceptance rates.
pub fn write_fixed_point_table<W: Write>(beta1: &[f64], beta2: &[f64], w: W) -> Result<(), BenchError> {
    for &b in beta1.iter().chain(beta2) {
        if !(b > 0.0 && b <= 1.0) {
            return Err(BenchError::Config(format!("acceptance rate {b} is outside (0, 1]")));
        }
    }
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["beta1", "beta2", "ratio"])?;
    for &b1 in beta1 {
        for &b2 in beta2 {
            let r = probability_matching_fixed_point([b1, b2])?;
            w.write_record([format!("{b1:?}"), format!("{b2:?}"), format!("{r:?}")])?;
        }
    }
    flush(w)
}

/// `state,p0,p1,p2` exact marginals of the benchmark HMM.
pub fn write_oracle_table<W: Write>(w: W) -> Result<(), BenchError> {
    let marginals = forward_backward(&HmmSpec::default())?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["state", "p0", "p1", "p2"])?;
    for (t, m) in marginals.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(m.iter().map(|x| format!("{x:?}")));
        w.write_record(row)?;
    }
    flush(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_table_endpoints() {
        let mut out = Vec::new();
        write_b_table(3, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1), Some("0.0,0.0"));
        assert!(text.lines().nth(3).unwrap().starts_with("1.0,0.333333333333"));
        assert!(write_b_table(1, Vec::new()).is_err());
    }

    #[test]
    fn oracle_table_has_all_states() {
        let mut out = Vec::new();
        write_oracle_table(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + 18);
    }

    #[test]
    fn fixed_point_rejects_bad_rates() {
        assert!(matches!(write_fixed_point_table(&[0.0], &[1.0], Vec::new()), Err(BenchError::Config(_))));
        let mut out = Vec::new();
        write_fixed_point_table(&[0.5, 1.0], &[1.0], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 3);
    }
}
