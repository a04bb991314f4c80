//! Program execution with trace recording, value reuse and rescoring.
//!
//! A run walks the top-level forms in order. Every `sample` checkpoint is
//! identified by an [`Address`]; when a previous trace is supplied, a stored
//! value at the same address is reused (same distribution), rescored
//! (same family, changed parameters, value still in support) or replaced by a
//! fresh draw.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::OnceCell;
use core::cmp::Ordering;
use core::fmt;

use rand::Rng;
use thiserror::Error;

use crate::builtins::{Builtin, BuiltinError};
use crate::dist::{mvn_log_density, DistError, Distribution};
use crate::syntax::{Expr, Form, MemId, Program, SiteId, Span};
use crate::value::{Closure, Env, GaussianProcess, Memo, Value};

/// One dynamic memoization frame on the path to a sampling site.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frame {
    pub mem: MemId,
    /// Printed form of the memoized call's arguments.
    pub key: Arc<str>,
}

/// Identity of a random choice within one execution.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub site: SiteId,
    pub path: Arc<[Frame]>,
    /// Ordinal among hits of the same site under the same path.
    pub occurrence: u32,
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.site.0)?;
        for frame in self.path.iter() {
            write!(f, "/m{}[{}]", frame.mem.0, frame.key)?;
        }
        write!(f, "#{}", self.occurrence)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// The value forced by the proposal.
    ResampledProposal,
    Reused,
    Rescored,
    Fresh,
}

#[derive(Clone, Debug)]
pub struct ChoiceRecord {
    pub address: Address,
    pub dist: Arc<Distribution>,
    pub value: Value,
    pub log_prob: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct ObservationRecord {
    pub site: SiteId,
    pub dist: Arc<Distribution>,
    pub value: Value,
    pub log_prob: f64,
}

/// Latent choices, observations and output of one program run.
#[derive(Clone, Debug)]
pub struct Trace {
    pub choices: Vec<ChoiceRecord>,
    pub image: Vec<ObservationRecord>,
    pub output: Vec<Value>,
    pub log_prior: f64,
    pub log_likelihood: f64,
    index: OnceCell<BTreeMap<Address, usize>>,
}

impl Trace {
    pub fn log_joint(&self) -> f64 {
        self.log_prior + self.log_likelihood
    }

    pub fn latent_count(&self) -> usize {
        self.choices.len()
    }

    pub fn get(&self, address: &Address) -> Option<&ChoiceRecord> {
        self.position(address).map(|i| &self.choices[i])
    }

    pub fn position(&self, address: &Address) -> Option<usize> {
        self.index
            .get_or_init(|| {
                self.choices
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.address.clone(), i))
                    .collect()
            })
            .get(address)
            .copied()
    }

    /// Like [`Trace::position`], checking position `hint` first.
    pub fn position_near(&self, address: &Address, hint: usize) -> Option<usize> {
        match self.choices.get(hint) {
            Some(c) if c.address == *address => Some(hint),
            _ => self.position(address),
        }
    }

    fn get_near(&self, address: &Address, hint: usize) -> Option<&ChoiceRecord> {
        self.position_near(address, hint).map(|i| &self.choices[i])
    }

    pub fn addresses(&self) -> impl Iterator<Item = &Address> {
        self.choices.iter().map(|c| &c.address)
    }
}

/// Variables of a proposal that were drawn afresh, with the log-probabilities
/// entering the single-site acceptance ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct ResampledSet {
    /// Addresses of `new` whose values were drawn rather than kept.
    pub addresses: Vec<Address>,
    /// `log p(x' \ x | x' ∩ x)`, summed over `new`'s drawn records.
    pub log_fresh_new: f64,
    /// `log p(x \ x' | x ∩ x')`, summed over `old` records that were
    /// dropped or redrawn.
    pub log_dropped_old: f64,
}

/// Computes `x' \ x` and the two conditional log-probabilities. Rescored
/// records keep their value and count as shared.
pub fn resampled_set(old: &Trace, new: &Trace) -> ResampledSet {
    let mut addresses = Vec::new();
    let mut log_fresh_new = 0.0;
    for (i, rec) in new.choices.iter().enumerate() {
        let drawn = matches!(rec.provenance, Provenance::Fresh | Provenance::ResampledProposal)
            || old.get_near(&rec.address, i).is_none();
        if drawn {
            addresses.push(rec.address.clone());
            log_fresh_new += rec.log_prob;
        }
    }
    let mut log_dropped_old = 0.0;
    for (i, rec) in old.choices.iter().enumerate() {
        let kept = matches!(
            new.get_near(&rec.address, i).map(|r| r.provenance),
            Some(Provenance::Reused | Provenance::Rescored)
        );
        if !kept {
            log_dropped_old += rec.log_prob;
        }
    }
    ResampledSet {
        addresses,
        log_fresh_new,
        log_dropped_old,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{kind}", match .span { Some(s) => alloc::format!("{s}: "), None => String::new() })]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecErrorKind {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("cannot call a {0}")]
    NotCallable(&'static str),
    #[error("procedure expects {expected} argument(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("expected {expected}, got {got}")]
    Type { expected: &'static str, got: &'static str },
    #[error(transparent)]
    Builtin(#[from] BuiltinError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

impl From<ExecErrorKind> for ExecError {
    fn from(kind: ExecErrorKind) -> Self {
        ExecError { kind, span: None }
    }
}

impl From<BuiltinError> for ExecError {
    fn from(e: BuiltinError) -> Self {
        ExecErrorKind::Builtin(e).into()
    }
}

impl From<DistError> for ExecError {
    fn from(e: DistError) -> Self {
        ExecErrorKind::Dist(e).into()
    }
}

fn type_error(expected: &'static str, got: &Value) -> ExecError {
    ExecErrorKind::Type {
        expected,
        got: got.type_name(),
    }
    .into()
}

/// Runs `program` once.
///
/// `db` is the previous trace whose values may be reused; `forced` pins the
/// value at one address (the proposal). Observing a value outside the
/// support yields a trace with log-likelihood negative infinity.
pub fn execute<R: Rng + ?Sized>(
    program: &Program,
    db: Option<&Trace>,
    forced: Option<(&Address, Value)>,
    rng: &mut R,
) -> Result<Trace, ExecError> {
    let mut engine = Engine {
        program,
        globals: program.globals().to_vec(),
        db,
        forced,
        rng,
        choices: Vec::new(),
        image: Vec::new(),
        output: Vec::new(),
        log_prior: 0.0,
        log_likelihood: 0.0,
        memo: BTreeMap::new(),
        stack: Vec::new(),
        instances: 0,
        path: Arc::from(Vec::new()),
        occurrences: BTreeMap::new(),
        gp_obs: Vec::new(),
    };
    for top in &program.forms {
        engine.run_form(&top.form).map_err(|mut e| {
            e.span.get_or_insert(top.span);
            e
        })?;
    }
    engine.score_processes()?;
    Ok(Trace {
        choices: engine.choices,
        image: engine.image,
        output: engine.output,
        log_prior: engine.log_prior,
        log_likelihood: engine.log_likelihood,
        index: OnceCell::new(),
    })
}

/// Memo table key: argument values under [`Value::total_cmp`].
struct MemoKey(Vec<Value>);

impl PartialEq for MemoKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MemoKey {}

impl PartialOrd for MemoKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MemoKey {
    fn cmp(&self, other: &Self) -> Ordering {
        Value::total_cmp_slices(&self.0, &other.0)
    }
}

struct GpObservations {
    process: Arc<GaussianProcess>,
    site: SiteId,
    points: Vec<(f64, f64)>,
}

struct Engine<'a, R: ?Sized> {
    program: &'a Program,
    globals: Vec<Option<Value>>,
    db: Option<&'a Trace>,
    forced: Option<(&'a Address, Value)>,
    rng: &'a mut R,
    choices: Vec<ChoiceRecord>,
    image: Vec<ObservationRecord>,
    output: Vec<Value>,
    log_prior: f64,
    log_likelihood: f64,
    memo: BTreeMap<u32, BTreeMap<MemoKey, Value>>,
    stack: Vec<Value>,
    instances: u32,
    path: Arc<[Frame]>,
    occurrences: BTreeMap<(SiteId, Arc<[Frame]>), u32>,
    gp_obs: Vec<GpObservations>,
}

impl<R: Rng + ?Sized> Engine<'_, R> {
    fn run_form(&mut self, form: &Form) -> Result<(), ExecError> {
        let top = Env::empty();
        match form {
            Form::Assume { name, expr } => {
                let v = self.eval(expr, &top)?;
                self.globals[name.0 as usize] = Some(v);
            }
            Form::Predict(e) => {
                let v = self.eval(e, &top)?;
                self.output.push(v);
            }
            Form::Observe(e) | Form::Plain(e) => {
                self.eval(e, &top)?;
            }
        }
        Ok(())
    }

    fn eval(&mut self, expr: &Expr, env: &Env) -> Result<Value, ExecError> {
        match expr {
            Expr::Literal(d) | Expr::Quote(d) => Ok(Value::from_datum(d)),
            Expr::Symbol(s) => env
                .lookup(*s)
                .or_else(|| self.globals.get(s.0 as usize).and_then(Option::as_ref))
                .cloned()
                .ok_or_else(|| ExecErrorKind::Unbound(self.program.symbol_name(*s).into()).into()),
            Expr::Lambda(l) => Ok(Value::Closure(Arc::new(Closure {
                lambda: l.clone(),
                env: env.clone(),
            }))),
            Expr::If(c, t, e) => {
                if self.eval(c, env)?.is_truthy() {
                    self.eval(t, env)
                } else if let Some(e) = e {
                    self.eval(e, env)
                } else {
                    Ok(Value::nil())
                }
            }
            Expr::Apply(head, args) => {
                let f = self.eval(head, env)?;
                if let Value::Builtin(b) = f {
                    if !b.is_higher_order() {
                        return self.apply_first_order(b, args, env);
                    }
                }
                let args = args
                    .iter()
                    .map(|a| self.eval(a, env))
                    .collect::<Result<Vec<_>, _>>()?;
                self.apply(&f, args)
            }
            Expr::Mem { id, func } => {
                let func = self.eval(func, env)?;
                let instance = self.next_instance();
                Ok(Value::Memo(Arc::new(Memo { id: *id, instance, func })))
            }
            Expr::Sample { site, dist } => self.sample(*site, dist, env).map_err(|e| self.at_site(e, *site)),
            Expr::Observe { site, dist, value } => self
                .observe(*site, dist, value, env)
                .map_err(|e| self.at_site(e, *site)),
        }
    }

    /// Evaluates arguments onto the shared stack and applies `b` in place.
    fn apply_first_order(&mut self, b: Builtin, args: &[Expr], env: &Env) -> Result<Value, ExecError> {
        let base = self.stack.len();
        for a in args {
            match self.eval(a, env) {
                Ok(v) => self.stack.push(v),
                Err(e) => {
                    self.stack.truncate(base);
                    return Err(e);
                }
            }
        }
        let result = b.apply(&self.stack[base..]);
        self.stack.truncate(base);
        Ok(result?)
    }

    fn at_site(&self, mut e: ExecError, site: SiteId) -> ExecError {
        if e.span.is_none() {
            e.span = self.program.site_span(site);
        }
        e
    }

    fn next_instance(&mut self) -> u32 {
        self.instances += 1;
        self.instances
    }

    fn next_address(&mut self, site: SiteId) -> Address {
        let counter = self.occurrences.entry((site, self.path.clone())).or_insert(0);
        let occurrence = *counter;
        *counter += 1;
        Address {
            site,
            path: self.path.clone(),
            occurrence,
        }
    }

    fn sample(&mut self, site: SiteId, dist: &Expr, env: &Env) -> Result<Value, ExecError> {
        let d = match self.eval(dist, env)? {
            Value::Dist(d) => d,
            other => return Err(type_error("a distribution", &other)),
        };
        let address = self.next_address(site);
        let forced = match &self.forced {
            Some((a, v)) if **a == address => Some(v.clone()),
            _ => None,
        };
        let (value, log_prob, provenance) = if let Some(v) = forced {
            let lp = d.log_density(&v)?;
            (v, lp, Provenance::ResampledProposal)
        } else {
            let hint = self.choices.len();
            match self.db.and_then(|t| t.get_near(&address, hint)) {
                Some(old) if old.dist.family() == d.family() && d.in_support(&old.value) => {
                    if *old.dist == *d {
                        (old.value.clone(), old.log_prob, Provenance::Reused)
                    } else {
                        (old.value.clone(), d.log_density(&old.value)?, Provenance::Rescored)
                    }
                }
                _ => {
                    let v = d.sample(self.rng);
                    let lp = d.log_density(&v)?;
                    (v, lp, Provenance::Fresh)
                }
            }
        };
        self.log_prior += log_prob;
        self.choices.push(ChoiceRecord {
            address,
            dist: d,
            value: value.clone(),
            log_prob,
            provenance,
        });
        Ok(value)
    }

    fn observe(&mut self, site: SiteId, dist: &Expr, value: &Expr, env: &Env) -> Result<Value, ExecError> {
        let d = self.eval(dist, env)?;
        let v = self.eval(value, env)?;
        match d {
            Value::Dist(d) => {
                let log_prob = d.log_density(&v)?;
                self.log_likelihood += log_prob;
                self.image.push(ObservationRecord {
                    site,
                    dist: d,
                    value: v.clone(),
                    log_prob,
                });
            }
            Value::Gp(process) => {
                let point = match v.as_list() {
                    Some([Value::Num(x), Value::Num(y)]) => (*x, *y),
                    _ => return Err(type_error("an (x y) pair of numbers", &v)),
                };
                match self.gp_obs.iter_mut().find(|g| Arc::ptr_eq(&g.process, &process)) {
                    Some(g) => g.points.push(point),
                    None => self.gp_obs.push(GpObservations {
                        process,
                        site,
                        points: alloc::vec![point],
                    }),
                }
            }
            other => return Err(type_error("a distribution or gaussian process", &other)),
        }
        Ok(v)
    }

    /// Scores each Gaussian process's accumulated points jointly.
    fn score_processes(&mut self) -> Result<(), ExecError> {
        let groups = core::mem::take(&mut self.gp_obs);
        for g in groups {
            let span = self.program.site_span(g.site);
            let with_span = |mut e: ExecError| {
                e.span.get_or_insert(span.unwrap_or_default());
                e
            };
            let n = g.points.len();
            let mut mean = Vec::with_capacity(n);
            for &(x, _) in &g.points {
                let m = self.apply(&g.process.mean, alloc::vec![Value::Num(x)]).map_err(with_span)?;
                mean.push(m.as_num().ok_or_else(|| with_span(type_error("a number", &m)))?);
            }
            let mut cov = alloc::vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let xi = Value::Num(g.points[i].0);
                    let xj = Value::Num(g.points[j].0);
                    let k = self.apply(&g.process.kernel, alloc::vec![xi, xj]).map_err(with_span)?;
                    let k = k.as_num().ok_or_else(|| with_span(type_error("a number", &k)))?;
                    cov[i * n + j] = k;
                    cov[j * n + i] = k;
                }
            }
            let ys: Vec<f64> = g.points.iter().map(|p| p.1).collect();
            let log_prob = mvn_log_density(&mean, &cov, &ys).map_err(|e| with_span(e.into()))?;
            let dist = Distribution::mvn(mean, cov).map_err(|e| with_span(e.into()))?;
            self.log_likelihood += log_prob;
            self.image.push(ObservationRecord {
                site: g.site,
                dist: Arc::new(dist),
                value: Value::list(ys.into_iter().map(Value::Num).collect()),
                log_prob,
            });
        }
        Ok(())
    }

    fn apply(&mut self, f: &Value, args: Vec<Value>) -> Result<Value, ExecError> {
        match f {
            Value::Closure(c) => {
                let params = &c.lambda.params;
                if params.len() != args.len() {
                    return Err(ExecErrorKind::Arity {
                        expected: params.len(),
                        got: args.len(),
                    }
                    .into());
                }
                let env = c.env.extend(c.lambda.clone(), args);
                let mut result = Value::nil();
                for e in &c.lambda.body {
                    result = self.eval(e, &env)?;
                }
                Ok(result)
            }
            Value::Builtin(b) if b.is_higher_order() => self.apply_higher_order(*b, args),
            Value::Builtin(b) => Ok(b.apply(&args)?),
            Value::Memo(m) => {
                let key = MemoKey(args);
                if let Some(v) = self.memo.get(&m.instance).and_then(|t| t.get(&key)) {
                    return Ok(v.clone());
                }
                let mut printed = String::new();
                for (i, a) in key.0.iter().enumerate() {
                    if i > 0 {
                        printed.push(' ');
                    }
                    printed.push_str(&a.key());
                }
                let frame = Frame {
                    mem: m.id,
                    key: Arc::from(printed.as_str()),
                };
                let saved = core::mem::replace(&mut self.path, Arc::from(alloc::vec![frame]));
                let result = self.apply(&m.func, key.0.clone());
                self.path = saved;
                let v = result?;
                self.memo.entry(m.instance).or_default().insert(key, v.clone());
                Ok(v)
            }
            other => Err(ExecErrorKind::NotCallable(other.type_name()).into()),
        }
    }

    fn apply_higher_order(&mut self, b: Builtin, args: Vec<Value>) -> Result<Value, ExecError> {
        let name = b.name();
        let arity = |expected: &'static str| -> ExecError {
            BuiltinError::Arity {
                name,
                expected,
                got: args.len(),
            }
            .into()
        };
        let list = |v: &Value| -> Result<Arc<[Value]>, ExecError> {
            match v {
                Value::List(items) => Ok(items.clone()),
                other => Err(type_error("a list", other)),
            }
        };
        match b {
            Builtin::Filter => {
                if args.len() != 2 {
                    return Err(arity("2"));
                }
                let mut kept = Vec::new();
                for item in list(&args[1])?.iter() {
                    if self.apply(&args[0], alloc::vec![item.clone()])?.is_truthy() {
                        kept.push(item.clone());
                    }
                }
                Ok(Value::list(kept))
            }
            Builtin::Map => {
                if args.len() != 2 {
                    return Err(arity("2"));
                }
                let mut out = Vec::new();
                for item in list(&args[1])?.iter() {
                    out.push(self.apply(&args[0], alloc::vec![item.clone()])?);
                }
                Ok(Value::list(out))
            }
            Builtin::Reduce => {
                let (f, mut acc, items, skip) = match args.len() {
                    3 => (&args[0], args[1].clone(), list(&args[2])?, 0),
                    2 => {
                        let items = list(&args[1])?;
                        let Some(first) = items.first().cloned() else {
                            return Err(BuiltinError::Domain {
                                name,
                                reason: "empty list without an initial value",
                            }
                            .into());
                        };
                        (&args[0], first, items, 1)
                    }
                    _ => return Err(arity("2 or 3")),
                };
                for item in items.iter().skip(skip) {
                    acc = self.apply(f, alloc::vec![acc, item.clone()])?;
                }
                Ok(acc)
            }
            Builtin::Repeatedly => {
                if args.len() != 2 {
                    return Err(arity("2"));
                }
                let n = args[0].as_num().ok_or_else(|| type_error("a count", &args[0]))?;
                let n = if n > 0.0 { n as usize } else { 0 };
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(self.apply(&args[1], Vec::new())?);
                }
                Ok(Value::list(out))
            }
            Builtin::Gp => {
                if args.len() != 2 {
                    return Err(arity("2"));
                }
                let mut it = args.into_iter();
                let mean = it.next().expect("arity checked");
                let kernel = it.next().expect("arity checked");
                let instance = self.next_instance();
                Ok(Value::Gp(Arc::new(GaussianProcess { instance, mean, kernel })))
            }
            _ => Ok(b.apply(&args)?),
        }
    }
}

/// Evaluates an expression-only program and returns its outputs; used for
/// checking deterministic helpers such as kernels.
pub fn evaluate_outputs<R: Rng + ?Sized>(program: &Program, rng: &mut R) -> Result<Vec<Value>, ExecError> {
    Ok(execute(program, None, None, rng)?.output)
}

impl Trace {
    /// Re-sums the prior and likelihood from the records.
    pub fn recomputed_log_joint(&self) -> Result<f64, DistError> {
        let mut total = 0.0;
        for c in &self.choices {
            total += c.dist.log_density(&c.value)?;
        }
        for o in &self.image {
            total += match &*o.dist {
                Distribution::Mvn { mean, cov } => {
                    let ys: Vec<f64> = o.value.as_list().unwrap_or(&[]).iter().filter_map(Value::as_num).collect();
                    mvn_log_density(mean, cov, &ys)?
                }
                d => d.log_density(&o.value)?,
            };
        }
        Ok(total)
    }
}
