//! Runtime values of the probabilistic language.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::dist::Distribution;
use crate::syntax::{Datum, Lambda, MemId, Sym};

/// A value produced by evaluating an expression.
///
/// Values are cheap to clone; compound values share their storage.
#[derive(Clone, Debug)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(Arc<str>),
    Sym(Arc<str>),
    /// Proper list; the empty list doubles as nil.
    List(Arc<[Value]>),
    Closure(Arc<Closure>),
    Builtin(crate::builtins::Builtin),
    Memo(Arc<Memo>),
    Dist(Arc<Distribution>),
    Gp(Arc<GaussianProcess>),
}

/// A lambda together with its captured lexical frame.
#[derive(Debug)]
pub struct Closure {
    pub lambda: Arc<Lambda>,
    pub env: Env,
}

/// A memoized procedure. The cache itself lives in the executing engine so
/// that it is cleared between runs.
#[derive(Debug)]
pub struct Memo {
    pub id: MemId,
    pub instance: u32,
    pub func: Value,
}

/// A Gaussian process prior given by a mean and a covariance procedure.
#[derive(Debug)]
pub struct GaussianProcess {
    pub instance: u32,
    pub mean: Value,
    pub kernel: Value,
}

/// Immutable linked lexical frames.
#[derive(Clone, Debug, Default)]
pub struct Env(Option<Arc<Frame>>);

#[derive(Debug)]
pub struct Frame {
    params: Arc<Lambda>,
    values: Vec<Value>,
    parent: Env,
}

impl Env {
    pub fn empty() -> Self {
        Env(None)
    }

    /// A child frame binding `lambda`'s parameters to `values`, in order.
    pub fn extend(&self, lambda: Arc<Lambda>, values: Vec<Value>) -> Self {
        debug_assert_eq!(lambda.params.len(), values.len());
        Env(Some(Arc::new(Frame {
            params: lambda,
            values,
            parent: self.clone(),
        })))
    }

    pub fn lookup(&self, sym: Sym) -> Option<&Value> {
        let mut cur = self.0.as_deref();
        while let Some(frame) = cur {
            if let Some(i) = frame.params.params.iter().rposition(|s| *s == sym) {
                return Some(&frame.values[i]);
            }
            cur = frame.parent.0.as_deref();
        }
        None
    }
}

impl Value {
    pub fn nil() -> Value {
        Value::List(Arc::from(Vec::new()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::from(items))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(items) => Some(items),
            _ => None,
        }
    }

    /// Scheme truthiness: only `false` is false.
    pub fn is_truthy(&self) -> bool {
        !matches!(self, Value::Bool(false))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::Sym(_) => "symbol",
            Value::List(_) => "list",
            Value::Closure(_) => "procedure",
            Value::Builtin(_) => "builtin",
            Value::Memo(_) => "memoized procedure",
            Value::Dist(_) => "distribution",
            Value::Gp(_) => "gaussian process",
        }
    }

    /// Converts a quoted datum into a runtime value.
    pub fn from_datum(datum: &Datum) -> Value {
        match datum {
            Datum::Num(x) => Value::Num(*x),
            Datum::Bool(b) => Value::Bool(*b),
            Datum::Str(s) => Value::Str(Arc::from(s.as_str())),
            Datum::Sym(s) => Value::Sym(Arc::from(s.as_str())),
            Datum::List(items) => Value::list(items.iter().map(Value::from_datum).collect()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Num(_) => 0,
            Value::Bool(_) => 1,
            Value::Str(_) => 2,
            Value::Sym(_) => 3,
            Value::List(_) => 4,
            Value::Closure(_) => 5,
            Value::Builtin(_) => 6,
            Value::Memo(_) => 7,
            Value::Dist(_) => 8,
            Value::Gp(_) => 9,
        }
    }

    /// A total order: numbers by `f64::total_cmp`, compound data
    /// lexicographically, procedures by identity and distributions by
    /// printed form.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) | (Value::Sym(a), Value::Sym(b)) => a.cmp(b),
            (Value::List(a), Value::List(b)) => Value::total_cmp_slices(a, b),
            (Value::Closure(a), Value::Closure(b)) => Arc::as_ptr(a).cmp(&Arc::as_ptr(b)),
            (Value::Builtin(a), Value::Builtin(b)) => a.name().cmp(b.name()),
            (Value::Memo(a), Value::Memo(b)) => Arc::as_ptr(a).cmp(&Arc::as_ptr(b)),
            (Value::Gp(a), Value::Gp(b)) => Arc::as_ptr(a).cmp(&Arc::as_ptr(b)),
            (Value::Dist(a), Value::Dist(b)) => alloc::format!("{a}").cmp(&alloc::format!("{b}")),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn total_cmp_slices(a: &[Value], b: &[Value]) -> Ordering {
        for (x, y) in a.iter().zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        a.len().cmp(&b.len())
    }

    /// Printed form, used in memoized addresses.
    pub fn key(&self) -> String {
        alloc::format!("{self}")
    }
}

/// Structural equality. Numbers compare with IEEE equality; procedures and
/// processes compare by identity.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Sym(a), Value::Sym(b)) => a == b,
            (Value::List(a), Value::List(b)) => a == b,
            (Value::Closure(a), Value::Closure(b)) => Arc::ptr_eq(a, b),
            (Value::Builtin(a), Value::Builtin(b)) => a == b,
            (Value::Memo(a), Value::Memo(b)) => Arc::ptr_eq(a, b),
            (Value::Dist(a), Value::Dist(b)) => a == b,
            (Value::Gp(a), Value::Gp(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Bool(true) => f.write_str("true"),
            Value::Bool(false) => f.write_str("false"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Sym(s) => f.write_str(s),
            Value::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
            Value::Closure(_) => f.write_str("#<procedure>"),
            Value::Builtin(b) => write!(f, "#<builtin {}>", b.name()),
            Value::Memo(m) => write!(f, "#<mem {}>", m.id.0),
            Value::Dist(d) => write!(f, "{d}"),
            Value::Gp(_) => f.write_str("#<gp>"),
        }
    }
}
