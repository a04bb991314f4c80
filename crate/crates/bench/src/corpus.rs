//! The benchmark programs and their data.

use std::fmt;
use std::str::FromStr;

use adlmh_core::syntax::Datum;
use adlmh_core::{parse, Program};
use rand::Rng;

use crate::BenchError;

pub const HMM_SOURCE: &str = include_str!("../programs/hmm.pp");
pub const GP_SOURCE: &str = include_str!("../programs/gp.pp");
pub const LOGISTIC_SOURCE: &str = include_str!("../programs/logistic.pp");
const IRIS_CSV: &str = include_str!("../data/iris.csv");

/// Species code of setosa in the iris table.
pub const SETOSA: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Corpus {
    Hmm,
    Gp,
    Logistic,
}

impl Corpus {
    pub const ALL: [Corpus; 3] = [Corpus::Hmm, Corpus::Gp, Corpus::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            Corpus::Hmm => "hmm",
            Corpus::Gp => "gp",
            Corpus::Logistic => "logistic",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Corpus::Hmm => HMM_SOURCE,
            Corpus::Gp => GP_SOURCE,
            Corpus::Logistic => LOGISTIC_SOURCE,
        }
    }

    /// Name of the convergence metric reported for this program.
    pub fn metric(self) -> &'static str {
        match self {
            Corpus::Hmm => "kl",
            Corpus::Gp => "ks",
            Corpus::Logistic => "error",
        }
    }

    /// The parsed program with any external data bound. Only the logistic
    /// program draws (its held-out pair) from `rng`.
    pub fn instantiate<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Program, BenchError> {
        let mut program = parse(self.source()).map_err(|e| BenchError::Runtime(format!("{}: {e}", self.name())))?;
        if self == Corpus::Logistic {
            let iris = iris()?;
            let split = HeldOut::draw(&iris, rng);
            split.bind(&mut program, &iris);
        }
        Ok(program)
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Corpus {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Corpus::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown program `{s}` (expected hmm, gp or logistic)")))
    }
}

/// Iris measurements followed by the species code.
pub type Record = [f64; 5];

pub fn iris() -> Result<Vec<Record>, BenchError> {
    let mut reader = csv::Reader::from_reader(IRIS_CSV.as_bytes());
    reader
        .deserialize::<Record>()
        .map(|r| r.map_err(|e| BenchError::Runtime(format!("iris data: {e}"))))
        .collect()
}

fn record_datum(r: &Record) -> Datum {
    Datum::List(r.iter().map(|&x| Datum::Num(x)).collect())
}

/// One setosa and one other record withheld from training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeldOut {
    pub setosa: usize,
    pub not_setosa: usize,
}

impl HeldOut {
    pub fn draw<R: Rng + ?Sized>(iris: &[Record], rng: &mut R) -> HeldOut {
        let (setosa, other): (Vec<usize>, Vec<usize>) = (0..iris.len()).partition(|&i| iris[i][4] == SETOSA);
        HeldOut {
            setosa: setosa[rng.random_range(0..setosa.len())],
            not_setosa: other[rng.random_range(0..other.len())],
        }
    }

    pub fn bind(&self, program: &mut Program, iris: &[Record]) {
        program.bind_external("iris-data", &Datum::List(iris.iter().map(record_datum).collect()));
        program.bind_external("iris-setosa", &Datum::Num(SETOSA));
        program.bind_external("test-setosa", &record_datum(&iris[self.setosa]));
        program.bind_external("test-not-setosa", &record_datum(&iris[self.not_setosa]));
    }
}
