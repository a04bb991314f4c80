//! Reader and AST for the bracketed Scheme-like modelling language.
//!
//! Top-level directives use square brackets (`[assume v e]`, `[observe d e]`,
//! `[predict e]`); everything else is an ordinary parenthesized expression.
//! Every `sample` and `observe` occurrence receives a [`SiteId`] in
//! depth-first source order, and every `mem` occurrence a [`MemId`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use thiserror::Error;

use crate::builtins::Builtin;
use crate::value::Value;

/// Lexical identifier of a `sample` or `observe` occurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

/// Lexical identifier of a `mem` occurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemId(pub u32);

/// Interned symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym(pub u32);

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{span}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected closing `{0}`")]
    UnexpectedClose(char),
    #[error("`{open}` closed by `{close}`")]
    Mismatched { open: char, close: char },
    #[error("unclosed `{0}`")]
    Unclosed(char),
    #[error("unterminated string")]
    UnterminatedString,
    #[error("quote not followed by a datum")]
    DanglingQuote,
    #[error("`{form}` expects {expected}")]
    Arity { form: String, expected: &'static str },
    #[error("unknown bracketed form `{0}`")]
    UnknownBracketForm(String),
    #[error("`{0}` is only allowed at top level")]
    NotTopLevel(String),
    #[error("`{0}` is already assumed")]
    Reassumed(String),
    #[error("malformed `{form}`: {reason}")]
    Malformed { form: String, reason: &'static str },
}

/// Literal data, as written under a quote.
#[derive(Clone, Debug, PartialEq)]
pub enum Datum {
    Num(f64),
    Bool(bool),
    Str(String),
    Sym(String),
    List(Vec<Datum>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lambda {
    pub params: Vec<Sym>,
    pub body: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Self-evaluating number, boolean or string.
    Literal(Datum),
    Symbol(Sym),
    Quote(Datum),
    Apply(Box<Expr>, Vec<Expr>),
    Lambda(Arc<Lambda>),
    If(Box<Expr>, Box<Expr>, Option<Box<Expr>>),
    Sample { site: SiteId, dist: Box<Expr> },
    Observe { site: SiteId, dist: Box<Expr>, value: Box<Expr> },
    Mem { id: MemId, func: Box<Expr> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Literal,
    Symbol,
    Apply,
    Lambda,
    If,
    Quote,
    Sample,
    Observe,
    Mem,
}

impl Expr {
    pub fn kind(&self) -> ExprKind {
        match self {
            Expr::Literal(_) => ExprKind::Literal,
            Expr::Symbol(_) => ExprKind::Symbol,
            Expr::Quote(_) => ExprKind::Quote,
            Expr::Apply(..) => ExprKind::Apply,
            Expr::Lambda(_) => ExprKind::Lambda,
            Expr::If(..) => ExprKind::If,
            Expr::Sample { .. } => ExprKind::Sample,
            Expr::Observe { .. } => ExprKind::Observe,
            Expr::Mem { .. } => ExprKind::Mem,
        }
    }

    /// Visits this expression and all sub-expressions in pre-order.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Literal(_) | Expr::Symbol(_) | Expr::Quote(_) => {}
            Expr::Apply(head, args) => {
                head.walk(visit);
                args.iter().for_each(|a| a.walk(visit));
            }
            Expr::Lambda(l) => l.body.iter().for_each(|e| e.walk(visit)),
            Expr::If(c, t, e) => {
                c.walk(visit);
                t.walk(visit);
                if let Some(e) = e {
                    e.walk(visit);
                }
            }
            Expr::Sample { dist, .. } => dist.walk(visit),
            Expr::Observe { dist, value, .. } => {
                dist.walk(visit);
                value.walk(visit);
            }
            Expr::Mem { func, .. } => func.walk(visit),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Form {
    Assume { name: Sym, expr: Expr },
    /// Holds an [`Expr::Observe`].
    Observe(Expr),
    Predict(Expr),
    Plain(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopForm {
    pub form: Form,
    pub span: Span,
}

/// A parsed program. Immutable once built and shareable across threads.
#[derive(Clone, Debug)]
pub struct Program {
    pub forms: Vec<TopForm>,
    symbols: Vec<String>,
    sym_index: BTreeMap<String, Sym>,
    sites: Vec<Span>,
    mem_count: u32,
    globals: Vec<Option<Value>>,
}

impl Program {
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site_span(&self, site: SiteId) -> Option<Span> {
        self.sites.get(site.0 as usize).copied()
    }

    pub fn mem_count(&self) -> u32 {
        self.mem_count
    }

    pub fn symbol_name(&self, sym: Sym) -> &str {
        &self.symbols[sym.0 as usize]
    }

    pub fn symbol(&self, name: &str) -> Option<Sym> {
        self.sym_index.get(name).copied()
    }

    /// Initial global bindings: builtins plus external data.
    pub(crate) fn globals(&self) -> &[Option<Value>] {
        &self.globals
    }

    /// Binds an external datum (e.g. a data set) as a global that top-level
    /// `assume` forms may shadow, like a builtin.
    pub fn bind_external(&mut self, name: &str, datum: &Datum) {
        let sym = intern(&mut self.symbols, &mut self.sym_index, name);
        if self.globals.len() < self.symbols.len() {
            self.globals.resize(self.symbols.len(), None);
        }
        self.globals[sym.0 as usize] = Some(Value::from_datum(datum));
    }

    /// Renders the program back to source text.
    pub fn print(&self) -> String {
        let mut out = String::new();
        for top in &self.forms {
            match &top.form {
                Form::Assume { name, expr } => {
                    out.push_str("[assume ");
                    out.push_str(self.symbol_name(*name));
                    out.push(' ');
                    self.print_expr(expr, &mut out);
                    out.push(']');
                }
                Form::Observe(e) | Form::Plain(e) => self.print_expr(e, &mut out),
                Form::Predict(e) => {
                    out.push_str("[predict ");
                    self.print_expr(e, &mut out);
                    out.push(']');
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn print_expr(&self, expr: &Expr, out: &mut String) {
        match expr {
            Expr::Literal(d) => print_datum(d, out),
            Expr::Symbol(s) => out.push_str(self.symbol_name(*s)),
            Expr::Quote(d) => {
                out.push('\'');
                print_datum(d, out);
            }
            Expr::Apply(head, args) => {
                out.push('(');
                self.print_expr(head, out);
                for a in args {
                    out.push(' ');
                    self.print_expr(a, out);
                }
                out.push(')');
            }
            Expr::Lambda(l) => {
                out.push_str("(lambda (");
                for (i, p) in l.params.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    out.push_str(self.symbol_name(*p));
                }
                out.push(')');
                for e in &l.body {
                    out.push(' ');
                    self.print_expr(e, out);
                }
                out.push(')');
            }
            Expr::If(c, t, e) => {
                out.push_str("(if ");
                self.print_expr(c, out);
                out.push(' ');
                self.print_expr(t, out);
                if let Some(e) = e {
                    out.push(' ');
                    self.print_expr(e, out);
                }
                out.push(')');
            }
            Expr::Sample { dist, .. } => {
                out.push_str("(sample ");
                self.print_expr(dist, out);
                out.push(')');
            }
            Expr::Observe { dist, value, .. } => {
                out.push_str("[observe ");
                self.print_expr(dist, out);
                out.push(' ');
                self.print_expr(value, out);
                out.push(']');
            }
            Expr::Mem { func, .. } => {
                out.push_str("(mem ");
                self.print_expr(func, out);
                out.push(')');
            }
        }
    }
}

fn print_datum(d: &Datum, out: &mut String) {
    match d {
        Datum::Num(x) => {
            let _ = write!(out, "{x}");
        }
        Datum::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Datum::Str(s) => {
            let _ = write!(out, "{s:?}");
        }
        Datum::Sym(s) => out.push_str(s),
        Datum::List(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                print_datum(item, out);
            }
            out.push(')');
        }
    }
}

fn intern(symbols: &mut Vec<String>, index: &mut BTreeMap<String, Sym>, name: &str) -> Sym {
    if let Some(s) = index.get(name) {
        return *s;
    }
    let s = Sym(symbols.len() as u32);
    symbols.push(name.to_string());
    index.insert(name.to_string(), s);
    s
}

// ---------------------------------------------------------------------------
// Reader

#[derive(Debug, Clone)]
enum Node {
    Atom(String, Span),
    Str(String, Span),
    List {
        square: bool,
        items: Vec<Node>,
        span: Span,
    },
    Quoted(Box<Node>, Span),
}

impl Node {
    fn span(&self) -> Span {
        match self {
            Node::Atom(_, s) | Node::Str(_, s) | Node::Quoted(_, s) => *s,
            Node::List { span, .. } => *span,
        }
    }
}

struct Reader<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Span {
        Span {
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || c == ',' {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_all(&mut self) -> Result<Vec<Node>, ParseError> {
        let mut nodes = Vec::new();
        loop {
            self.skip_trivia();
            match self.chars.peek() {
                None => return Ok(nodes),
                Some(&c @ (')' | ']')) => {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnexpectedClose(c),
                        span: self.pos(),
                    })
                }
                Some(_) => nodes.push(self.read_node()?),
            }
        }
    }

    fn read_node(&mut self) -> Result<Node, ParseError> {
        self.skip_trivia();
        let start = self.pos();
        match self.chars.peek().copied() {
            None => Err(ParseError {
                kind: ParseErrorKind::DanglingQuote,
                span: start,
            }),
            Some(open @ ('(' | '[')) => {
                self.bump();
                let close = if open == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek().copied() {
                        None => {
                            return Err(ParseError {
                                kind: ParseErrorKind::Unclosed(open),
                                span: start,
                            })
                        }
                        Some(c @ (')' | ']')) => {
                            if c != close {
                                return Err(ParseError {
                                    kind: ParseErrorKind::Mismatched { open, close: c },
                                    span: self.pos(),
                                });
                            }
                            self.bump();
                            return Ok(Node::List {
                                square: open == '[',
                                items,
                                span: start,
                            });
                        }
                        Some(_) => items.push(self.read_node()?),
                    }
                }
            }
            Some(c @ (')' | ']')) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedClose(c),
                span: start,
            }),
            Some('\'') => {
                self.bump();
                self.skip_trivia();
                match self.chars.peek() {
                    None | Some(')') | Some(']') => Err(ParseError {
                        kind: ParseErrorKind::DanglingQuote,
                        span: start,
                    }),
                    Some(_) => Ok(Node::Quoted(Box::new(self.read_node()?), start)),
                }
            }
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => {
                            return Err(ParseError {
                                kind: ParseErrorKind::UnterminatedString,
                                span: start,
                            })
                        }
                        Some('"') => return Ok(Node::Str(s, start)),
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c) => s.push(c),
                            None => {
                                return Err(ParseError {
                                    kind: ParseErrorKind::UnterminatedString,
                                    span: start,
                                })
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '\'' | '"' | ';' | ',') {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Node::Atom(s, start))
            }
        }
    }
}

/// Parses a numeric literal: decimal floats (`.9`, `2.`, `-1e3`) and
/// ratios (`1/3`).
fn parse_number(tok: &str) -> Option<f64> {
    let body = tok.strip_prefix(['-', '+']).unwrap_or(tok);
    let first = body.chars().next()?;
    if !(first.is_ascii_digit() || (first == '.' && body.len() > 1)) {
        return None;
    }
    if let Some((num, den)) = tok.split_once('/') {
        let n: f64 = num.parse().ok()?;
        let d: f64 = den.parse().ok()?;
        return Some(n / d);
    }
    tok.parse().ok()
}

// ---------------------------------------------------------------------------
// Lowering

struct Lowerer {
    symbols: Vec<String>,
    sym_index: BTreeMap<String, Sym>,
    sites: Vec<Span>,
    mem_count: u32,
}

fn arity(form: &str, expected: &'static str, span: Span) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Arity {
            form: form.to_string(),
            expected,
        },
        span,
    }
}

fn malformed(form: &str, reason: &'static str, span: Span) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Malformed {
            form: form.to_string(),
            reason,
        },
        span,
    }
}

impl Lowerer {
    fn sym(&mut self, name: &str) -> Sym {
        intern(&mut self.symbols, &mut self.sym_index, name)
    }

    fn new_site(&mut self, span: Span) -> SiteId {
        let id = SiteId(self.sites.len() as u32);
        self.sites.push(span);
        id
    }

    fn datum(&self, node: &Node) -> Datum {
        match node {
            Node::Atom(a, _) => atom_datum(a),
            Node::Str(s, _) => Datum::Str(s.clone()),
            Node::List { items, .. } => Datum::List(items.iter().map(|n| self.datum(n)).collect()),
            Node::Quoted(inner, _) => Datum::List(alloc::vec![Datum::Sym("quote".into()), self.datum(inner)]),
        }
    }

    fn top(&mut self, node: &Node, assumed: &mut Vec<Sym>) -> Result<TopForm, ParseError> {
        let span = node.span();
        let form = match node {
            Node::List {
                square: true,
                items,
                span,
            } => {
                let head = match items.first() {
                    Some(Node::Atom(h, _)) => h.as_str(),
                    _ => return Err(malformed("[...]", "expected a directive name", *span)),
                };
                match head {
                    "assume" => {
                        if items.len() != 3 {
                            return Err(arity("assume", "a symbol and an expression", *span));
                        }
                        let name = match &items[1] {
                            Node::Atom(a, _) if parse_number(a).is_none() => self.sym(a),
                            other => return Err(malformed("assume", "binding target must be a symbol", other.span())),
                        };
                        if assumed.contains(&name) {
                            return Err(ParseError {
                                kind: ParseErrorKind::Reassumed(self.symbols[name.0 as usize].clone()),
                                span: *span,
                            });
                        }
                        assumed.push(name);
                        Form::Assume {
                            name,
                            expr: self.expr(&items[2])?,
                        }
                    }
                    "predict" => {
                        if items.len() != 2 {
                            return Err(arity("predict", "one expression", *span));
                        }
                        Form::Predict(self.expr(&items[1])?)
                    }
                    "observe" => Form::Observe(self.expr(node)?),
                    other => {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownBracketForm(other.to_string()),
                            span: *span,
                        })
                    }
                }
            }
            _ => Form::Plain(self.expr(node)?),
        };
        Ok(TopForm { form, span })
    }

    fn expr(&mut self, node: &Node) -> Result<Expr, ParseError> {
        match node {
            Node::Atom(a, _) => Ok(match atom_datum(a) {
                Datum::Sym(s) => Expr::Symbol(self.sym(&s)),
                d => Expr::Literal(d),
            }),
            Node::Str(s, _) => Ok(Expr::Literal(Datum::Str(s.clone()))),
            Node::Quoted(inner, _) => Ok(Expr::Quote(self.datum(inner))),
            Node::List {
                square: true,
                items,
                span,
            } => match items.first() {
                Some(Node::Atom(h, _)) if h == "observe" => {
                    if items.len() != 3 {
                        return Err(arity("observe", "a distribution and a value", *span));
                    }
                    let site = self.new_site(*span);
                    let dist = Box::new(self.expr(&items[1])?);
                    let value = Box::new(self.expr(&items[2])?);
                    Ok(Expr::Observe { site, dist, value })
                }
                Some(Node::Atom(h, _)) if h == "assume" || h == "predict" => Err(ParseError {
                    kind: ParseErrorKind::NotTopLevel(h.clone()),
                    span: *span,
                }),
                Some(Node::Atom(h, _)) => Err(ParseError {
                    kind: ParseErrorKind::UnknownBracketForm(h.clone()),
                    span: *span,
                }),
                _ => Err(malformed("[...]", "expected a directive name", *span)),
            },
            Node::List {
                square: false,
                items,
                span,
            } => {
                let Some(head) = items.first() else {
                    return Ok(Expr::Quote(Datum::List(Vec::new())));
                };
                let args = &items[1..];
                if let Node::Atom(h, _) = head {
                    match h.as_str() {
                        "quote" => {
                            if args.len() != 1 {
                                return Err(arity("quote", "one datum", *span));
                            }
                            return Ok(Expr::Quote(self.datum(&args[0])));
                        }
                        "lambda" | "fn" => {
                            if args.len() < 2 {
                                return Err(arity(h, "a parameter list and a body", *span));
                            }
                            let params = self.params(&args[0], h)?;
                            let body = args[1..].iter().map(|n| self.expr(n)).collect::<Result<_, _>>()?;
                            return Ok(Expr::Lambda(Arc::new(Lambda { params, body })));
                        }
                        "if" => {
                            if args.len() != 2 && args.len() != 3 {
                                return Err(arity("if", "a test, a consequent and an optional alternative", *span));
                            }
                            let c = Box::new(self.expr(&args[0])?);
                            let t = Box::new(self.expr(&args[1])?);
                            let e = match args.get(2) {
                                Some(n) => Some(Box::new(self.expr(n)?)),
                                None => None,
                            };
                            return Ok(Expr::If(c, t, e));
                        }
                        "cond" => return self.cond(args, *span),
                        "let" => return self.let_form(args, *span),
                        "sample" => {
                            if args.len() != 1 {
                                return Err(arity("sample", "one distribution", *span));
                            }
                            let site = self.new_site(*span);
                            return Ok(Expr::Sample {
                                site,
                                dist: Box::new(self.expr(&args[0])?),
                            });
                        }
                        "mem" => {
                            if args.len() != 1 {
                                return Err(arity("mem", "one procedure", *span));
                            }
                            let id = MemId(self.mem_count);
                            self.mem_count += 1;
                            return Ok(Expr::Mem {
                                id,
                                func: Box::new(self.expr(&args[0])?),
                            });
                        }
                        _ => {}
                    }
                }
                let head = Box::new(self.expr(head)?);
                let args = args.iter().map(|n| self.expr(n)).collect::<Result<_, _>>()?;
                Ok(Expr::Apply(head, args))
            }
        }
    }

    fn params(&mut self, node: &Node, form: &str) -> Result<Vec<Sym>, ParseError> {
        match node {
            Node::List { square: false, items, .. } => items
                .iter()
                .map(|p| match p {
                    Node::Atom(a, _) if parse_number(a).is_none() => Ok(self.sym(a)),
                    other => Err(malformed(form, "parameters must be symbols", other.span())),
                })
                .collect(),
            other => Err(malformed(form, "expected a parameter list", other.span())),
        }
    }

    /// `(cond (t1 e1) (t2 e2) (else e3))` becomes nested `if`s.
    fn cond(&mut self, clauses: &[Node], span: Span) -> Result<Expr, ParseError> {
        let Some((first, rest)) = clauses.split_first() else {
            return Err(arity("cond", "at least one clause", span));
        };
        let Node::List { square: false, items, span: cspan } = first else {
            return Err(malformed("cond", "clause must be a list", first.span()));
        };
        if items.len() != 2 {
            return Err(arity("cond clause", "a test and one expression", *cspan));
        }
        if matches!(&items[0], Node::Atom(a, _) if a == "else") {
            return self.expr(&items[1]);
        }
        let test = Box::new(self.expr(&items[0])?);
        let then = Box::new(self.expr(&items[1])?);
        let alt = if rest.is_empty() {
            None
        } else {
            Some(Box::new(self.cond(rest, span)?))
        };
        Ok(Expr::If(test, then, alt))
    }

    /// `(let ((v e) ...) body...)` becomes `((lambda (v ...) body...) e ...)`.
    /// Sites are numbered in the order of the desugared form, so printing and
    /// re-reading reproduces the same ids.
    fn let_form(&mut self, args: &[Node], span: Span) -> Result<Expr, ParseError> {
        if args.len() < 2 {
            return Err(arity("let", "a binding list and a body", span));
        }
        let Node::List { square: false, items: bindings, .. } = &args[0] else {
            return Err(malformed("let", "expected a binding list", args[0].span()));
        };
        let mut params = Vec::new();
        let mut inits = Vec::new();
        for b in bindings {
            match b {
                Node::List { square: false, items, .. } if items.len() == 2 => match &items[0] {
                    Node::Atom(a, _) if parse_number(a).is_none() => {
                        params.push(self.sym(a));
                        inits.push(&items[1]);
                    }
                    other => return Err(malformed("let", "binding name must be a symbol", other.span())),
                },
                other => return Err(malformed("let", "binding must be (name expr)", other.span())),
            }
        }
        let body = args[1..].iter().map(|n| self.expr(n)).collect::<Result<_, _>>()?;
        let inits = inits.into_iter().map(|n| self.expr(n)).collect::<Result<_, _>>()?;
        Ok(Expr::Apply(Box::new(Expr::Lambda(Arc::new(Lambda { params, body }))), inits))
    }
}

fn atom_datum(a: &str) -> Datum {
    if let Some(x) = parse_number(a) {
        return Datum::Num(x);
    }
    match a {
        "true" | "#t" => Datum::Bool(true),
        "false" | "#f" => Datum::Bool(false),
        _ => Datum::Sym(a.to_string()),
    }
}

/// Parses program text.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let nodes = Reader::new(text).read_all()?;
    let mut lowerer = Lowerer {
        symbols: Vec::new(),
        sym_index: BTreeMap::new(),
        sites: Vec::new(),
        mem_count: 0,
    };
    let mut assumed = Vec::new();
    let forms = nodes
        .iter()
        .map(|n| lowerer.top(n, &mut assumed))
        .collect::<Result<Vec<_>, _>>()?;
    let Lowerer {
        symbols,
        sym_index,
        sites,
        mem_count,
    } = lowerer;
    let mut globals = alloc::vec![None; symbols.len()];
    for (name, sym) in &sym_index {
        if let Some(b) = Builtin::from_name(name) {
            globals[sym.0 as usize] = Some(b.value());
        }
    }
    Ok(Program {
        forms,
        symbols,
        sym_index,
        sites,
        mem_count,
        globals,
    })
}
