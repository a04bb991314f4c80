//! Primitive procedures of the initial environment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dist::{DistError, Distribution};
use crate::math;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuiltinError {
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("`{name}` expects {expected}, got {got}")]
    Type {
        name: &'static str,
        expected: &'static str,
        got: &'static str,
    },
    #[error("`{name}`: {reason}")]
    Domain { name: &'static str, reason: &'static str },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("`{0}` needs the evaluator and cannot be applied directly")]
    HigherOrder(&'static str),
}

macro_rules! builtins {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// A primitive procedure.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
        pub enum Builtin { $($variant),* }

        impl Builtin {
            pub const ALL: &'static [Builtin] = &[$(Builtin::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Builtin::$variant => $name),* }
            }
        }
    };
}

builtins! {
    Add => "+", Sub => "-", Mul => "*", Div => "/",
    NumEq => "=", Lt => "<", Le => "<=", Gt => ">", Ge => ">=",
    Exp => "exp", Log => "log", Sqrt => "sqrt", Pow => "pow", Abs => "abs",
    Not => "not", And => "and", Or => "or",
    List => "list", Cons => "cons", First => "first", Rest => "rest",
    Last => "last", ButLast => "butlast", Nth => "nth", Count => "count",
    Dot => "dot", Range => "range",
    Filter => "filter", Reduce => "reduce", Repeatedly => "repeatedly", Map => "map",
    Normal => "normal", Gamma => "gamma", Discrete => "discrete", Flip => "flip",
    Mvn => "mvn", Gp => "GP",
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.iter().copied().find(|b| b.name() == name)
    }

    pub fn value(self) -> Value {
        Value::Builtin(self)
    }

    /// Builtins that call back into procedures or allocate engine state.
    pub fn is_higher_order(self) -> bool {
        matches!(
            self,
            Builtin::Filter | Builtin::Reduce | Builtin::Repeatedly | Builtin::Map | Builtin::Gp
        )
    }

    /// Applies a first-order builtin.
    pub fn apply(self, args: &[Value]) -> Result<Value, BuiltinError> {
        let name = self.name();
        let num = |v: &Value| {
            v.as_num().ok_or(BuiltinError::Type {
                name,
                expected: "a number",
                got: v.type_name(),
            })
        };
        let list = |v: &Value| -> Result<Vec<Value>, BuiltinError> {
            v.as_list().map(<[Value]>::to_vec).ok_or(BuiltinError::Type {
                name,
                expected: "a list",
                got: v.type_name(),
            })
        };
        let nonempty = |v: &Value| -> Result<Vec<Value>, BuiltinError> {
            let items = list(v)?;
            if items.is_empty() {
                return Err(BuiltinError::Domain {
                    name,
                    reason: "empty list",
                });
            }
            Ok(items)
        };
        let exactly = |n: usize, expected: &'static str| {
            if args.len() == n {
                Ok(())
            } else {
                Err(BuiltinError::Arity {
                    name,
                    expected,
                    got: args.len(),
                })
            }
        };
        let at_least_one = || {
            if args.is_empty() {
                Err(BuiltinError::Arity {
                    name,
                    expected: "at least 1",
                    got: 0,
                })
            } else {
                Ok(())
            }
        };

        Ok(match self {
            Builtin::Add => Value::Num(args.iter().map(num).sum::<Result<f64, _>>()?),
            Builtin::Mul => Value::Num(args.iter().map(num).product::<Result<f64, _>>()?),
            Builtin::Sub => {
                at_least_one()?;
                let first = num(&args[0])?;
                if args.len() == 1 {
                    Value::Num(-first)
                } else {
                    let mut acc = first;
                    for a in &args[1..] {
                        acc -= num(a)?;
                    }
                    Value::Num(acc)
                }
            }
            Builtin::Div => {
                at_least_one()?;
                let first = num(&args[0])?;
                if args.len() == 1 {
                    Value::Num(1.0 / first)
                } else {
                    let mut acc = first;
                    for a in &args[1..] {
                        acc /= num(a)?;
                    }
                    Value::Num(acc)
                }
            }
            Builtin::NumEq => {
                at_least_one()?;
                Value::Bool(args.windows(2).all(|w| w[0] == w[1]))
            }
            Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => {
                at_least_one()?;
                let xs = args.iter().map(num).collect::<Result<Vec<_>, _>>()?;
                Value::Bool(xs.windows(2).all(|w| match self {
                    Builtin::Lt => w[0] < w[1],
                    Builtin::Le => w[0] <= w[1],
                    Builtin::Gt => w[0] > w[1],
                    _ => w[0] >= w[1],
                }))
            }
            Builtin::Exp => {
                exactly(1, "1")?;
                Value::Num(math::exp(num(&args[0])?))
            }
            Builtin::Log => {
                exactly(1, "1")?;
                Value::Num(math::ln(num(&args[0])?))
            }
            Builtin::Sqrt => {
                exactly(1, "1")?;
                Value::Num(math::sqrt(num(&args[0])?))
            }
            Builtin::Abs => {
                exactly(1, "1")?;
                Value::Num(math::abs(num(&args[0])?))
            }
            Builtin::Pow => {
                exactly(2, "2")?;
                Value::Num(math::pow(num(&args[0])?, num(&args[1])?))
            }
            Builtin::Not => {
                exactly(1, "1")?;
                Value::Bool(!args[0].is_truthy())
            }
            Builtin::And => Value::Bool(args.iter().all(Value::is_truthy)),
            Builtin::Or => Value::Bool(args.iter().any(Value::is_truthy)),
            Builtin::List => Value::list(args.to_vec()),
            Builtin::Cons => {
                exactly(2, "2")?;
                let mut items = Vec::with_capacity(1 + args[1].as_list().map_or(0, <[Value]>::len));
                items.push(args[0].clone());
                items.extend(list(&args[1])?);
                Value::list(items)
            }
            Builtin::First => {
                exactly(1, "1")?;
                nonempty(&args[0])?.swap_remove(0)
            }
            Builtin::Rest => {
                exactly(1, "1")?;
                let items = list(&args[0])?;
                Value::list(items.into_iter().skip(1).collect())
            }
            Builtin::Last => {
                exactly(1, "1")?;
                nonempty(&args[0])?.pop().expect("nonempty")
            }
            Builtin::ButLast => {
                exactly(1, "1")?;
                let mut items = list(&args[0])?;
                items.pop();
                Value::list(items)
            }
            Builtin::Nth => {
                exactly(2, "2")?;
                let items = list(&args[0])?;
                let i = num(&args[1])?;
                if i < 0.0 || math::floor(i) != i || i >= items.len() as f64 {
                    return Err(BuiltinError::Domain {
                        name,
                        reason: "index out of range",
                    });
                }
                items[i as usize].clone()
            }
            Builtin::Count => {
                exactly(1, "1")?;
                Value::Num(list(&args[0])?.len() as f64)
            }
            Builtin::Dot => {
                exactly(2, "2")?;
                let a = list(&args[0])?;
                let b = list(&args[1])?;
                if a.len() != b.len() {
                    return Err(BuiltinError::Domain {
                        name,
                        reason: "vectors differ in length",
                    });
                }
                let mut s = 0.0;
                for (x, y) in a.iter().zip(&b) {
                    s += num(x)? * num(y)?;
                }
                Value::Num(s)
            }
            Builtin::Range => {
                exactly(1, "1")?;
                let n = num(&args[0])?;
                Value::list((0..n.max(0.0) as usize).map(|i| Value::Num(i as f64)).collect())
            }
            Builtin::Normal => {
                exactly(2, "2")?;
                Distribution::normal(num(&args[0])?, num(&args[1])?)?.into_value()
            }
            Builtin::Gamma => {
                exactly(2, "2")?;
                Distribution::gamma(num(&args[0])?, num(&args[1])?)?.into_value()
            }
            Builtin::Discrete => {
                exactly(1, "1")?;
                let ws = list(&args[0])?.iter().map(num).collect::<Result<Vec<_>, _>>()?;
                Distribution::discrete(ws)?.into_value()
            }
            Builtin::Flip => {
                exactly(1, "1")?;
                Distribution::flip(num(&args[0])?)?.into_value()
            }
            Builtin::Mvn => {
                exactly(2, "2")?;
                let mean = list(&args[0])?.iter().map(num).collect::<Result<Vec<_>, _>>()?;
                let mut cov = Vec::new();
                for row in list(&args[1])? {
                    for x in list(&row)? {
                        cov.push(num(&x)?);
                    }
                }
                Distribution::mvn(mean, cov)?.into_value()
            }
            Builtin::Filter | Builtin::Reduce | Builtin::Repeatedly | Builtin::Map | Builtin::Gp => {
                return Err(BuiltinError::HigherOrder(name))
            }
        })
    }
}

/// The initial binding environment.
#[derive(Clone, Debug)]
pub struct Environment {
    bindings: BTreeMap<String, Value>,
}

impl Environment {
    pub fn lookup(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}

/// Arithmetic, list operations, comparison and distribution constructors.
/// `mem`, `lambda`, `if`, `cond`, `let` and `sample` are special forms.
pub fn builtin_environment() -> Environment {
    Environment {
        bindings: Builtin::ALL
            .iter()
            .map(|b| (String::from(b.name()), b.value()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn nums(xs: &[f64]) -> Value {
        Value::list(xs.iter().map(|x| Value::Num(*x)).collect())
    }

    fn call(name: &str, args: &[Value]) -> Result<Value, BuiltinError> {
        let env = builtin_environment();
        match env.lookup(name) {
            Some(Value::Builtin(b)) => b.apply(args),
            other => panic!("{name} bound to {other:?}"),
        }
    }

    #[test]
    fn environment_contents() {
        let env = builtin_environment();
        assert!(matches!(env.lookup("+"), Some(Value::Builtin(Builtin::Add))));
        for name in ["dot", "butlast", "filter", "reduce", "repeatedly", "count", "GP", "discrete"] {
            assert!(env.lookup(name).is_some(), "{name}");
        }
    }

    #[test]
    fn list_operations() {
        assert_eq!(call("dot", &[nums(&[1.0, 2.0]), nums(&[3.0, 4.0])]).unwrap(), Value::Num(11.0));
        assert_eq!(call("butlast", &[nums(&[1.0, 2.0, 3.0])]).unwrap(), nums(&[1.0, 2.0]));
        assert_eq!(call("last", &[nums(&[1.0, 2.0, 3.0])]).unwrap(), Value::Num(3.0));
        assert_eq!(call("cons", &[Value::Num(1.0), nums(&[2.0])]).unwrap(), nums(&[1.0, 2.0]));
        assert_eq!(call("count", &[nums(&[4.0, 5.0])]).unwrap(), Value::Num(2.0));
        assert_eq!(call("rest", &[nums(&[])]).unwrap(), nums(&[]));
        assert!(matches!(call("first", &[nums(&[])]), Err(BuiltinError::Domain { .. })));
        assert!(matches!(call("dot", &[nums(&[1.0]), nums(&[1.0, 2.0])]), Err(BuiltinError::Domain { .. })));
    }

    #[test]
    fn arithmetic_and_comparison() {
        assert_eq!(call("+", &[]).unwrap(), Value::Num(0.0));
        assert_eq!(call("-", &[Value::Num(3.0)]).unwrap(), Value::Num(-3.0));
        assert_eq!(call("-", &[Value::Num(3.0), Value::Num(1.0), Value::Num(1.0)]).unwrap(), Value::Num(1.0));
        assert_eq!(call("/", &[Value::Num(1.0), Value::Num(4.0)]).unwrap(), Value::Num(0.25));
        assert_eq!(call("<=", &[Value::Num(0.0), Value::Num(0.0)]).unwrap(), Value::Bool(true));
        assert_eq!(call("=", &[nums(&[1.0, 2.0]), nums(&[1.0, 2.0])]).unwrap(), Value::Bool(true));
        assert_eq!(call("=", &[nums(&[1.0, 2.0]), nums(&[1.0, 3.0])]).unwrap(), Value::Bool(false));
        assert_eq!(call("or", &[Value::Bool(false), Value::Bool(true)]).unwrap(), Value::Bool(true));
        assert_eq!(call("not", &[Value::Num(0.0)]).unwrap(), Value::Bool(false));
        assert!(matches!(call("+", &[Value::Bool(true)]), Err(BuiltinError::Type { .. })));
        assert!(matches!(call("exp", &[]), Err(BuiltinError::Arity { .. })));
    }

    #[test]
    fn distribution_constructors() {
        let d = call("discrete", &[nums(&[0.2, 0.2, 0.6])]).unwrap();
        assert!(matches!(d, Value::Dist(_)));
        assert!(matches!(call("normal", &[Value::Num(0.0), Value::Num(-1.0)]), Err(BuiltinError::Dist(_))));
        let m = call("mvn", &[nums(&[0.0, 0.0]), Value::list(vec![nums(&[1.0, 0.0]), nums(&[0.0, 1.0])])]).unwrap();
        assert!(matches!(m, Value::Dist(_)));
        assert!(matches!(call("filter", &[]), Err(BuiltinError::HigherOrder("filter"))));
    }
}
