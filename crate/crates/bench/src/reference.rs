//! Reference posterior samples from long LMH runs, for programs without an
//! exact oracle.

use std::fs;
use std::path::Path;

use adlmh_core::lmh::ChainState;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::{restart_rng, BenchError};

/// How much simulation goes into a reference set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceBudget {
    pub restarts: usize,
    pub steps: usize,
    /// Samples are taken only from the last `tail` steps of each chain,
    pub tail: usize,
    /// every `thin`-th one.
    pub thin: usize,
}

impl Default for ReferenceBudget {
    fn default() -> Self {
        ReferenceBudget {
            restarts: 96,
            steps: 35_000,
            tail: 30_000,
            thin: 50,
        }
    }
}

impl ReferenceBudget {
    /// Budget in the shape of the original protocol: every 100th of the
    /// last 10000 samples of 500000-step chains.
    pub fn full_scale() -> Self {
        ReferenceBudget {
            restarts: 50,
            steps: 500_000,
            tail: 10_000,
            thin: 100,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.restarts == 0 || self.thin == 0 || self.tail == 0 || self.tail > self.steps {
            return Err(BenchError::Config(format!(
                "reference budget needs restarts, thin, tail > 0 and tail <= steps, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    pub program: Corpus,
    pub seed: u64,
    pub budget: ReferenceBudget,
    pub columns: Vec<String>,
    /// One row per retained sample.
    pub samples: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|r| r[j]).collect()
    }

    pub fn to_text(&self) -> Result<String, BenchError> {
        let b = &self.budget;
        let mut out = format!(
            "# program={}\n# seed={}\n# restarts={}\n# steps={}\n# tail={}\n# thin={}\n",
            self.program, self.seed, b.restarts, b.steps, b.tail, b.thin
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.samples {
            w.write_record(row.iter().map(|x| format!("{x:?}")))?;
        }
        let body = w.into_inner().map_err(|e| BenchError::Runtime(e.to_string()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self, BenchError> {
        let bad = |what: &str| BenchError::Config(format!("reference file: {what}"));
        let mut meta = std::collections::BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| -> Result<usize, BenchError> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
        let program: Corpus = get("program")?.parse()?;
        let seed = get("seed")?.parse().map_err(|_| bad("bad `seed`"))?;
        let budget = ReferenceBudget {
            restarts: num("restarts")?,
            steps: num("steps")?,
            tail: num("tail")?,
            thin: num("thin")?,
        };
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect::<Vec<_>>();
        let samples = r
            .deserialize::<Vec<f64>>()
            .collect::<Result<Vec<_>, _>>()?;
        if samples.iter().any(|s| s.len() != columns.len()) {
            return Err(bad("ragged rows"));
        }
        Ok(ReferenceSet {
            program,
            seed,
            budget,
            columns,
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchError> {
        fs::write(path, self.to_text()?).map_err(|e| BenchError::Io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }
}

/// Output names of the programs that support reference sets.
pub fn reference_columns(program: Corpus) -> Result<Vec<String>, BenchError> {
    match program {
        Corpus::Gp => Ok(["a", "b", "c"].map(String::from).to_vec()),
        Corpus::Hmm => Err(BenchError::Config("hmm has an exact oracle; no reference set is needed".into())),
        Corpus::Logistic => Err(BenchError::Config("logistic is scored on held-out data, not a reference".into())),
    }
}

/// Runs `budget.restarts` independent LMH chains and keeps thinned samples
/// from the tail of each.
pub fn reference_posterior(program: Corpus, budget: ReferenceBudget, seed: u64) -> Result<ReferenceSet, BenchError> {
    budget.validate()?;
    let columns = reference_columns(program)?;
    let chains: Vec<Vec<Vec<f64>>> = (0..budget.restarts)
        .into_par_iter()
        .map(|restart| chain_tail(program, budget, restart_rng(seed, restart as u64)))
        .collect::<Result<_, _>>()?;
    Ok(ReferenceSet {
        program,
        seed,
        budget,
        columns,
        samples: chains.into_iter().flatten().collect(),
    })
}

fn chain_tail(program: Corpus, budget: ReferenceBudget, mut rng: ChaCha8Rng) -> Result<Vec<Vec<f64>>, BenchError> {
    let p = program.instantiate(&mut rng)?;
    let mut chain = ChainState::init(&p, rng)?;
    let mut kept = Vec::with_capacity(budget.tail / budget.thin);
    for i in 1..=budget.steps {
        chain.step()?;
        if i > budget.steps - budget.tail && (i - (budget.steps - budget.tail)).is_multiple_of(budget.thin) {
            kept.push(crate::numeric_output(chain.output())?);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ReferenceBudget {
        ReferenceBudget {
            restarts: 3,
            steps: 400,
            tail: 200,
            thin: 20,
        }
    }

    #[test]
    fn sample_count_and_round_trip() {
        let r = reference_posterior(Corpus::Gp, small(), 5).unwrap();
        assert_eq!(r.samples.len(), 3 * 10);
        let text = r.to_text().unwrap();
        assert_eq!(ReferenceSet::from_text(&text).unwrap(), r);
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = reference_posterior(Corpus::Gp, small(), 9).unwrap().to_text().unwrap();
        let b = reference_posterior(Corpus::Gp, small(), 9).unwrap().to_text().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn routing() {
        assert!(matches!(reference_posterior(Corpus::Hmm, small(), 0), Err(BenchError::Config(_))));
        let bad = ReferenceBudget { tail: 500, ..small() };
        assert!(matches!(reference_posterior(Corpus::Gp, bad, 0), Err(BenchError::Config(_))));
        assert!(ReferenceSet::from_text("# program=gp\na,b\n1,2\n").is_err());
    }
}
