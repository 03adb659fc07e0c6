//! A small evaluator for the Python subset, used to check that
//! transforms keep behavior on pure, loop-bounded functions.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::ast::{BinOp, BoolOp, CmpOp, CodeTree, Expr, Param, Stmt, UnaryOp};

/// Runtime failure, named after the Python exception it stands for.
pub type Outcome<T> = std::result::Result<T, String>;

#[derive(Debug, Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Rc<RefCell<Vec<Value>>>),
    Tuple(Rc<Vec<Value>>),
    Func(Rc<Function>),
    Builtin(&'static str),
    Method(Box<Value>, String),
}

#[derive(Debug)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

impl Value {
    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Rc::new(items))
    }

    fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Func(_) | Value::Builtin(_) | Value::Method(..) => "function",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.borrow().is_empty(),
            Value::Tuple(t) => !t.is_empty(),
            _ => true,
        }
    }

    /// Python-style representation, used to compare results.
    pub fn repr(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => {
                if f.is_finite() && f.fract() == 0.0 && f.abs() < 1e16 {
                    format!("{f:.1}")
                } else {
                    format!("{f}")
                }
            }
            Value::Str(s) => format!("{s:?}"),
            Value::List(l) => format!("[{}]", l.borrow().iter().map(Value::repr).collect::<Vec<_>>().join(", ")),
            Value::Tuple(t) if t.len() == 1 => format!("({},)", t[0].repr()),
            Value::Tuple(t) => format!("({})", t.iter().map(Value::repr).collect::<Vec<_>>().join(", ")),
            Value::Func(f) => format!("<function {}>", f.name),
            Value::Builtin(n) => format!("<built-in {n}>"),
            Value::Method(_, n) => format!("<method {n}>"),
        }
    }

    fn as_num(&self) -> Option<Num> {
        match self {
            Value::Bool(b) => Some(Num::I(*b as i64)),
            Value::Int(i) => Some(Num::I(*i)),
            Value::Float(f) => Some(Num::F(*f)),
            _ => None,
        }
    }

    fn items(&self) -> Outcome<Vec<Value>> {
        match self {
            Value::List(l) => Ok(l.borrow().clone()),
            Value::Tuple(t) => Ok(t.as_ref().clone()),
            Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
            other => Err(format!("TypeError: '{}' object is not iterable", other.type_name())),
        }
    }
}

#[derive(Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn f(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn py_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q))
        }
        (Value::Tuple(x), Value::Tuple(y)) => x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q)),
        (Value::Func(x), Value::Func(y)) => Rc::ptr_eq(x, y),
        _ => match (a.as_num(), b.as_num()) {
            (Some(Num::I(x)), Some(Num::I(y))) => x == y,
            (Some(x), Some(y)) => x.f() == y.f(),
            _ => false,
        },
    }
}

fn py_lt(a: &Value, b: &Value) -> Outcome<bool> {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Ok(x < y),
        (Value::List(_), Value::List(_)) | (Value::Tuple(_), Value::Tuple(_)) => {
            let (x, y) = (a.items()?, b.items()?);
            for (p, q) in x.iter().zip(y.iter()) {
                if !py_eq(p, q) {
                    return py_lt(p, q);
                }
            }
            Ok(x.len() < y.len())
        }
        _ => match (a.as_num(), b.as_num()) {
            (Some(Num::I(x)), Some(Num::I(y))) => Ok(x < y),
            (Some(x), Some(y)) => Ok(x.f() < y.f()),
            _ => Err(format!(
                "TypeError: '<' not supported between '{}' and '{}'",
                a.type_name(),
                b.type_name()
            )),
        },
    }
}

fn overflow() -> String {
    "OverflowError: integer exceeds 64 bits".into()
}

fn arith(op: BinOp, a: &Value, b: &Value) -> Outcome<Value> {
    let type_err = || {
        Err(format!(
            "TypeError: unsupported operand types for {}: '{}' and '{}'",
            op.symbol(),
            a.type_name(),
            b.type_name()
        ))
    };
    match (op, a, b) {
        (BinOp::Add, Value::Str(x), Value::Str(y)) => return Ok(Value::Str(format!("{x}{y}"))),
        (BinOp::Add, Value::List(_), Value::List(_)) | (BinOp::Add, Value::Tuple(_), Value::Tuple(_)) => {
            let mut items = a.items()?;
            items.extend(b.items()?);
            return Ok(if matches!(a, Value::List(_)) { Value::list(items) } else { Value::tuple(items) });
        }
        (BinOp::Mul, Value::Str(_) | Value::List(_) | Value::Tuple(_), Value::Int(_) | Value::Bool(_)) => {
            return repeat(a, b);
        }
        (BinOp::Mul, Value::Int(_) | Value::Bool(_), Value::Str(_) | Value::List(_) | Value::Tuple(_)) => {
            return repeat(b, a);
        }
        _ => {}
    }
    let (Some(x), Some(y)) = (a.as_num(), b.as_num()) else {
        return type_err();
    };
    let zero_div = || Err("ZeroDivisionError: division by zero".to_string());
    Ok(match (x, y) {
        (Num::I(x), Num::I(y)) => match op {
            BinOp::Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
            BinOp::Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
            BinOp::Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
            BinOp::Div => {
                if y == 0 {
                    return zero_div();
                }
                Value::Float(x as f64 / y as f64)
            }
            BinOp::FloorDiv | BinOp::Mod => {
                if y == 0 {
                    return zero_div();
                }
                let q = x.checked_div(y).ok_or_else(overflow)?;
                let r = x - q * y;
                let (q, r) = if r != 0 && ((r < 0) != (y < 0)) { (q - 1, r + y) } else { (q, r) };
                Value::Int(if op == BinOp::FloorDiv { q } else { r })
            }
            BinOp::Pow => {
                if y < 0 {
                    if x == 0 {
                        return zero_div();
                    }
                    Value::Float((x as f64).powf(y as f64))
                } else {
                    let e = u32::try_from(y).map_err(|_| overflow())?;
                    Value::Int(x.checked_pow(e).ok_or_else(overflow)?)
                }
            }
        },
        (x, y) => {
            let (x, y) = (x.f(), y.f());
            match op {
                BinOp::Add => Value::Float(x + y),
                BinOp::Sub => Value::Float(x - y),
                BinOp::Mul => Value::Float(x * y),
                BinOp::Div => {
                    if y == 0.0 {
                        return zero_div();
                    }
                    Value::Float(x / y)
                }
                BinOp::FloorDiv => {
                    if y == 0.0 {
                        return zero_div();
                    }
                    Value::Float((x / y).floor())
                }
                BinOp::Mod => {
                    if y == 0.0 {
                        return zero_div();
                    }
                    let r = x % y;
                    Value::Float(if r != 0.0 && ((r < 0.0) != (y < 0.0)) { r + y } else { r })
                }
                BinOp::Pow => Value::Float(x.powf(y)),
            }
        }
    })
}

fn repeat(seq: &Value, times: &Value) -> Outcome<Value> {
    let n = match times.as_num() {
        Some(Num::I(n)) => n.max(0) as usize,
        _ => return Err("TypeError: can't multiply sequence by non-int".into()),
    };
    if n.saturating_mul(seq.items()?.len()) > 1_000_000 {
        return Err("MemoryError: sequence too large".into());
    }
    let repeated = || -> Outcome<Vec<Value>> {
        let items = seq.items()?;
        Ok((0..n).flat_map(|_| items.iter().cloned()).collect())
    };
    Ok(match seq {
        Value::Str(s) => Value::Str(s.repeat(n)),
        Value::List(_) => Value::list(repeated()?),
        _ => Value::tuple(repeated()?),
    })
}

fn normalize_index(i: &Value, len: usize) -> Outcome<usize> {
    let i = match i {
        Value::Int(i) => *i,
        Value::Bool(b) => *b as i64,
        other => return Err(format!("TypeError: indices must be integers, not {}", other.type_name())),
    };
    let j = if i < 0 { i + len as i64 } else { i };
    if j < 0 || j >= len as i64 {
        return Err("IndexError: index out of range".into());
    }
    Ok(j as usize)
}

fn slice_indices(len: usize, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> Outcome<Vec<usize>> {
    let step = step.unwrap_or(1);
    if step == 0 {
        return Err("ValueError: slice step cannot be zero".into());
    }
    let len = len as i64;
    let clamp = |v: i64, lo_b: i64, hi_b: i64| {
        let v = if v < 0 { v + len } else { v };
        v.clamp(lo_b, hi_b)
    };
    let mut out = Vec::new();
    if step > 0 {
        let (a, b) = (lo.map_or(0, |v| clamp(v, 0, len)), hi.map_or(len, |v| clamp(v, 0, len)));
        let mut i = a;
        while i < b {
            out.push(i as usize);
            i += step;
        }
    } else {
        let a = lo.map_or(len - 1, |v| clamp(v, -1, len - 1));
        let b = hi.map_or(-1, |v| clamp(v, -1, len - 1));
        let mut i = a;
        while i > b {
            out.push(i as usize);
            i += step;
        }
    }
    Ok(out)
}

fn decode_string(lit: &str) -> Outcome<String> {
    let mut out = String::new();
    // adjacent literals were joined with single spaces by the parser
    let mut rest = lit.trim();
    while !rest.is_empty() {
        let prefix_len = rest.find(['"', '\'']).ok_or("SyntaxError: bad string literal")?;
        let prefix = rest[..prefix_len].to_ascii_lowercase();
        if prefix.contains('f') || prefix.contains('b') {
            return Err("NotImplementedError: f-strings and bytes are not supported".into());
        }
        let raw = prefix.contains('r');
        let body = &rest[prefix_len..];
        let q = &body[..1];
        let quote = if body.starts_with(&q.repeat(3)) { q.repeat(3) } else { q.to_string() };
        let inner_start = prefix_len + quote.len();
        let mut end = None;
        let bytes = rest.as_bytes();
        let mut i = inner_start;
        while i < rest.len() {
            if bytes[i] == b'\\' {
                i += 2;
                continue;
            }
            if rest[i..].starts_with(&quote) {
                end = Some(i);
                break;
            }
            i += 1;
        }
        let end = end.ok_or("SyntaxError: unterminated string")?;
        let inner = &rest[inner_start..end];
        if raw {
            out.push_str(inner);
        } else {
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                if c != '\\' {
                    out.push(c);
                    continue;
                }
                match chars.next() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('0') => out.push('\0'),
                    Some('\n') => {}
                    Some(c @ ('\\' | '\'' | '"')) => out.push(c),
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => out.push('\\'),
                }
            }
        }
        rest = rest[end + quote.len()..].trim_start();
    }
    Ok(out)
}

fn parse_number(s: &str) -> Outcome<Value> {
    let clean = s.replace('_', "");
    let lower = clean.to_ascii_lowercase();
    let int = if let Some(h) = lower.strip_prefix("0x") {
        i64::from_str_radix(h, 16).ok()
    } else if let Some(o) = lower.strip_prefix("0o") {
        i64::from_str_radix(o, 8).ok()
    } else if let Some(b) = lower.strip_prefix("0b") {
        i64::from_str_radix(b, 2).ok()
    } else {
        lower.parse().ok()
    };
    if let Some(i) = int {
        return Ok(Value::Int(i));
    }
    lower
        .parse::<f64>()
        .map(Value::Float)
        .map_err(|_| format!("NotImplementedError: numeric literal {s}"))
}

enum Flow {
    Normal,
    Return(Value),
    Break,
    Continue,
}

const MAX_DEPTH: usize = 64;

/// Evaluator state: module globals plus a step budget.
pub struct Interpreter {
    globals: HashMap<String, Value>,
    fuel: u64,
    depth: usize,
}

type Scope = Option<HashMap<String, Value>>;

impl Interpreter {
    pub fn new(fuel: u64) -> Self {
        Interpreter {
            globals: HashMap::new(),
            fuel,
            depth: 0,
        }
    }

    pub fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    /// Executes the module body, binding its top-level names.
    pub fn exec_module(&mut self, tree: &CodeTree) -> Outcome<()> {
        let mut scope: Scope = None;
        match self.exec_block(&tree.body, &mut scope)? {
            Flow::Normal => Ok(()),
            Flow::Return(_) => Err("SyntaxError: 'return' outside function".into()),
            _ => Err("SyntaxError: loop control outside loop".into()),
        }
    }

    pub fn call_global(&mut self, name: &str, args: Vec<Value>) -> Outcome<Value> {
        let f = self
            .globals
            .get(name)
            .cloned()
            .ok_or_else(|| format!("NameError: name '{name}' is not defined"))?;
        self.call(&f, args)
    }

    fn tick(&mut self) -> Outcome<()> {
        if self.fuel == 0 {
            return Err("Timeout: step budget exhausted".into());
        }
        self.fuel -= 1;
        Ok(())
    }

    fn lookup(&self, name: &str, scope: &Scope) -> Outcome<Value> {
        if let Some(v) = scope.as_ref().and_then(|s| s.get(name)) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        const BUILTINS: &[&str] = &[
            "len", "range", "abs", "min", "max", "int", "float", "str", "bool", "sum", "list", "sorted", "print",
            "tuple", "reversed", "enumerate", "zip", "round",
        ];
        BUILTINS
            .iter()
            .find(|b| **b == name)
            .map(|b| Value::Builtin(b))
            .ok_or_else(|| format!("NameError: name '{name}' is not defined"))
    }

    fn bind(&mut self, name: &str, v: Value, scope: &mut Scope) {
        match scope {
            Some(s) => {
                s.insert(name.to_string(), v);
            }
            None => {
                self.globals.insert(name.to_string(), v);
            }
        }
    }

    fn assign(&mut self, target: &Expr, v: Value, scope: &mut Scope) -> Outcome<()> {
        match target {
            Expr::Name(n) => {
                self.bind(n, v, scope);
                Ok(())
            }
            Expr::Tuple(ts) | Expr::List(ts) => {
                let items = v.items()?;
                if items.len() != ts.len() {
                    return Err("ValueError: wrong number of values to unpack".into());
                }
                for (t, item) in ts.iter().zip(items) {
                    self.assign(t, item, scope)?;
                }
                Ok(())
            }
            Expr::Index(base, idx) => {
                let b = self.eval(base, scope)?;
                let i = self.eval(idx, scope)?;
                match b {
                    Value::List(l) => {
                        let len = l.borrow().len();
                        let j = normalize_index(&i, len)?;
                        l.borrow_mut()[j] = v;
                        Ok(())
                    }
                    other => Err(format!("TypeError: '{}' does not support item assignment", other.type_name())),
                }
            }
            _ => Err("NotImplementedError: assignment target".into()),
        }
    }

    fn exec_block(&mut self, block: &[Stmt], scope: &mut Scope) -> Outcome<Flow> {
        for s in block {
            match self.exec(s, scope)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, s: &Stmt, scope: &mut Scope) -> Outcome<Flow> {
        self.tick()?;
        match s {
            Stmt::Def { name, params, body } => {
                let f = Value::Func(Rc::new(Function {
                    name: name.clone(),
                    params: params.clone(),
                    body: body.clone(),
                }));
                self.bind(name, f, scope);
            }
            Stmt::Assign { target, value } => {
                let v = self.eval(value, scope)?;
                self.assign(target, v, scope)?;
            }
            Stmt::AugAssign { target, op, value } => {
                let cur = self.eval(target, scope)?;
                let rhs = self.eval(value, scope)?;
                let v = match (&cur, op) {
                    // lists extend in place
                    (Value::List(l), BinOp::Add) => {
                        let extra = rhs.items()?;
                        l.borrow_mut().extend(extra);
                        cur.clone()
                    }
                    _ => arith(*op, &cur, &rhs)?,
                };
                self.assign(target, v, scope)?;
            }
            Stmt::For { target, iter, body } => {
                let items = self.eval(iter, scope)?.items()?;
                for item in items {
                    self.tick()?;
                    self.assign(target, item, scope)?;
                    match self.exec_block(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
            }
            Stmt::While { cond, body } => {
                while self.eval(cond, scope)?.truthy() {
                    self.tick()?;
                    match self.exec_block(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
            }
            Stmt::If { cond, body, orelse } => {
                let branch = if self.eval(cond, scope)?.truthy() { body } else { orelse };
                return self.exec_block(branch, scope);
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, scope)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            Stmt::Expr(e) => {
                self.eval(e, scope)?;
            }
            Stmt::Import(_) => return Err("NotImplementedError: imports".into()),
            Stmt::Pass => {}
            Stmt::Break => return Ok(Flow::Break),
            Stmt::Continue => return Ok(Flow::Continue),
        }
        Ok(Flow::Normal)
    }

    fn eval(&mut self, e: &Expr, scope: &mut Scope) -> Outcome<Value> {
        Ok(match e {
            Expr::Name(n) => self.lookup(n, scope)?,
            Expr::Num(s) => parse_number(s)?,
            Expr::Str(s) => Value::Str(decode_string(s)?),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::None => Value::None,
            Expr::List(xs) => Value::list(self.eval_all(xs, scope)?),
            Expr::Tuple(xs) => Value::tuple(self.eval_all(xs, scope)?),
            Expr::Dict(_) => return Err("NotImplementedError: dict".into()),
            Expr::Unary(op, x) => {
                let v = self.eval(x, scope)?;
                match op {
                    UnaryOp::Not => Value::Bool(!v.truthy()),
                    UnaryOp::Pos => match v.as_num() {
                        Some(Num::I(i)) => Value::Int(i),
                        Some(Num::F(f)) => Value::Float(f),
                        None => return Err(format!("TypeError: bad operand for unary +: '{}'", v.type_name())),
                    },
                    UnaryOp::Neg => match v.as_num() {
                        Some(Num::I(i)) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                        Some(Num::F(f)) => Value::Float(-f),
                        None => return Err(format!("TypeError: bad operand for unary -: '{}'", v.type_name())),
                    },
                }
            }
            Expr::Binary(l, op, r) => {
                let a = self.eval(l, scope)?;
                let b = self.eval(r, scope)?;
                arith(*op, &a, &b)?
            }
            Expr::Compare(l, op, r) => {
                let a = self.eval(l, scope)?;
                let b = self.eval(r, scope)?;
                Value::Bool(match op {
                    CmpOp::Eq => py_eq(&a, &b),
                    CmpOp::NotEq => !py_eq(&a, &b),
                    CmpOp::Lt => py_lt(&a, &b)?,
                    CmpOp::Gt => py_lt(&b, &a)?,
                    CmpOp::LtE => py_lt(&a, &b)? || py_eq(&a, &b),
                    CmpOp::GtE => py_lt(&b, &a)? || py_eq(&a, &b),
                    CmpOp::In | CmpOp::NotIn => {
                        let found = match (&a, &b) {
                            (Value::Str(x), Value::Str(y)) => y.contains(x.as_str()),
                            _ => b.items()?.iter().any(|v| py_eq(v, &a)),
                        };
                        found == (*op == CmpOp::In)
                    }
                    CmpOp::Is | CmpOp::IsNot => {
                        let same = match (&a, &b) {
                            (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
                            (Value::None, Value::None) => true,
                            (Value::Bool(x), Value::Bool(y)) => x == y,
                            _ => false,
                        };
                        same == (*op == CmpOp::Is)
                    }
                })
            }
            Expr::Logic(l, op, r) => {
                let a = self.eval(l, scope)?;
                match (op, a.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => a,
                    _ => self.eval(r, scope)?,
                }
            }
            Expr::Call(callee, args) => {
                if args.iter().any(|a| a.name.is_some()) {
                    return Err("NotImplementedError: keyword arguments".into());
                }
                let f = match callee.as_ref() {
                    Expr::Attr(base, name) => Value::Method(Box::new(self.eval(base, scope)?), name.clone()),
                    other => self.eval(other, scope)?,
                };
                let vals = args
                    .iter()
                    .map(|a| self.eval(&a.value, scope))
                    .collect::<Outcome<Vec<_>>>()?;
                self.call(&f, vals)?
            }
            Expr::Attr(..) => return Err("NotImplementedError: attribute access".into()),
            Expr::Index(base, idx) => {
                let b = self.eval(base, scope)?;
                if let Expr::Slice(lo, hi, step) = idx.as_ref() {
                    let mut bound = |x: &Option<Box<Expr>>| -> Outcome<Option<i64>> {
                        match x {
                            None => Ok(None),
                            Some(e) => match self.eval(e, scope)? {
                                Value::Int(i) => Ok(Some(i)),
                                Value::None => Ok(None),
                                _ => Err("TypeError: slice indices must be integers".into()),
                            },
                        }
                    };
                    let (lo, hi, step) = (bound(lo)?, bound(hi)?, bound(step)?);
                    let items = b.items()?;
                    let picked: Vec<Value> = slice_indices(items.len(), lo, hi, step)?
                        .into_iter()
                        .map(|i| items[i].clone())
                        .collect();
                    return Ok(match b {
                        Value::Str(_) => Value::Str(picked.iter().map(|v| match v {
                            Value::Str(s) => s.as_str(),
                            _ => "",
                        }).collect()),
                        Value::List(_) => Value::list(picked),
                        _ => Value::tuple(picked),
                    });
                }
                let i = self.eval(idx, scope)?;
                match &b {
                    Value::Str(_) | Value::List(_) | Value::Tuple(_) => {
                        let items = b.items()?;
                        items[normalize_index(&i, items.len())?].clone()
                    }
                    other => return Err(format!("TypeError: '{}' object is not subscriptable", other.type_name())),
                }
            }
            Expr::Slice(..) => return Err("SyntaxError: slice outside subscript".into()),
        })
    }

    fn eval_all(&mut self, xs: &[Expr], scope: &mut Scope) -> Outcome<Vec<Value>> {
        xs.iter().map(|x| self.eval(x, scope)).collect()
    }

    pub fn call(&mut self, f: &Value, args: Vec<Value>) -> Outcome<Value> {
        match f {
            Value::Func(func) => {
                if self.depth >= MAX_DEPTH {
                    return Err("RecursionError: maximum depth exceeded".into());
                }
                let mut locals = HashMap::new();
                if args.len() > func.params.len() {
                    return Err(format!("TypeError: {}() takes {} arguments", func.name, func.params.len()));
                }
                let mut args = args.into_iter();
                for p in &func.params {
                    let v = match (args.next(), &p.default) {
                        (Some(v), _) => v,
                        (None, Some(d)) => {
                            let mut global_scope: Scope = None;
                            self.eval(d, &mut global_scope)?
                        }
                        (None, None) => return Err(format!("TypeError: missing argument '{}'", p.name)),
                    };
                    locals.insert(p.name.clone(), v);
                }
                let mut scope: Scope = Some(locals);
                self.depth += 1;
                let flow = self.exec_block(&func.body, &mut scope);
                self.depth -= 1;
                match flow? {
                    Flow::Return(v) => Ok(v),
                    Flow::Normal => Ok(Value::None),
                    _ => Err("SyntaxError: loop control outside loop".into()),
                }
            }
            Value::Builtin(name) => builtin(name, args),
            Value::Method(recv, name) => method(recv, name, args),
            other => Err(format!("TypeError: '{}' object is not callable", other.type_name())),
        }
    }
}

fn num_arg(v: &Value) -> Outcome<Num> {
    v.as_num()
        .ok_or_else(|| format!("TypeError: expected a number, got '{}'", v.type_name()))
}

fn builtin(name: &str, args: Vec<Value>) -> Outcome<Value> {
    let one = |args: &[Value]| -> Outcome<Value> {
        match args {
            [v] => Ok(v.clone()),
            _ => Err(format!("TypeError: {name}() takes exactly one argument")),
        }
    };
    Ok(match name {
        "len" => Value::Int(match one(&args)? {
            Value::Str(s) => s.chars().count() as i64,
            other => other.items()?.len() as i64,
        }),
        "range" => {
            let ints = args
                .iter()
                .map(|a| match a {
                    Value::Int(i) => Ok(*i),
                    Value::Bool(b) => Ok(*b as i64),
                    other => Err(format!("TypeError: '{}' object cannot be interpreted as an integer", other.type_name())),
                })
                .collect::<Outcome<Vec<i64>>>()?;
            let (start, stop, step) = match ints.as_slice() {
                [stop] => (0, *stop, 1),
                [a, b] => (*a, *b, 1),
                [a, b, c] => (*a, *b, *c),
                _ => return Err("TypeError: range expects 1 to 3 arguments".into()),
            };
            if step == 0 {
                return Err("ValueError: range() arg 3 must not be zero".into());
            }
            let count = if step > 0 { (stop - start + step - 1) / step } else { (start - stop - step - 1) / -step };
            if count > 1_000_000 {
                return Err("MemoryError: range too large".into());
            }
            Value::list((0..count.max(0)).map(|k| Value::Int(start + k * step)).collect())
        }
        "abs" => match num_arg(&one(&args)?)? {
            Num::I(i) => Value::Int(i.checked_abs().ok_or_else(overflow)?),
            Num::F(f) => Value::Float(f.abs()),
        },
        "min" | "max" => {
            let items = if args.len() == 1 { args[0].items()? } else { args };
            let mut it = items.into_iter();
            let mut best = it.next().ok_or_else(|| format!("ValueError: {name}() arg is an empty sequence"))?;
            for v in it {
                let better = if name == "min" { py_lt(&v, &best)? } else { py_lt(&best, &v)? };
                if better {
                    best = v;
                }
            }
            best
        }
        "int" => match one(&args)? {
            Value::Str(s) => Value::Int(s.trim().parse().map_err(|_| "ValueError: invalid literal for int()".to_string())?),
            v => match num_arg(&v)? {
                Num::I(i) => Value::Int(i),
                Num::F(f) if f.is_finite() => Value::Int(f.trunc() as i64),
                Num::F(_) => return Err(overflow()),
            },
        },
        "float" => match one(&args)? {
            Value::Str(s) => Value::Float(s.trim().parse().map_err(|_| "ValueError: could not convert string to float".to_string())?),
            v => Value::Float(num_arg(&v)?.f()),
        },
        "str" => match one(&args)? {
            Value::Str(s) => Value::Str(s),
            v => Value::Str(v.repr()),
        },
        "bool" => Value::Bool(one(&args)?.truthy()),
        "sum" => {
            let mut acc = Value::Int(0);
            for v in one(&args)?.items()? {
                acc = arith(BinOp::Add, &acc, &v)?;
            }
            acc
        }
        "list" => Value::list(one(&args)?.items()?),
        "tuple" => Value::tuple(one(&args)?.items()?),
        "reversed" => {
            let mut items = one(&args)?.items()?;
            items.reverse();
            Value::list(items)
        }
        "sorted" => {
            let mut items = one(&args)?.items()?;
            let mut err = None;
            items.sort_by(|a, b| match (py_lt(a, b), py_lt(b, a)) {
                (Ok(true), _) => std::cmp::Ordering::Less,
                (_, Ok(true)) => std::cmp::Ordering::Greater,
                (Err(e), _) | (_, Err(e)) => {
                    err = Some(e);
                    std::cmp::Ordering::Equal
                }
                _ => std::cmp::Ordering::Equal,
            });
            if let Some(e) = err {
                return Err(e);
            }
            Value::list(items)
        }
        "enumerate" => Value::list(
            one(&args)?
                .items()?
                .into_iter()
                .enumerate()
                .map(|(i, v)| Value::tuple(vec![Value::Int(i as i64), v]))
                .collect(),
        ),
        "zip" => {
            let cols = args.iter().map(Value::items).collect::<Outcome<Vec<_>>>()?;
            let n = cols.iter().map(Vec::len).min().unwrap_or(0);
            Value::list((0..n).map(|i| Value::tuple(cols.iter().map(|c| c[i].clone()).collect())).collect())
        }
        "round" => match num_arg(&one(&args)?)? {
            Num::I(i) => Value::Int(i),
            Num::F(f) => {
                // banker's rounding, as Python does
                let r = f.round();
                let r = if (f - f.trunc()).abs() == 0.5 && r % 2.0 != 0.0 { r - f.signum() } else { r };
                Value::Int(r as i64)
            }
        },
        "print" => Value::None,
        other => return Err(format!("NameError: name '{other}' is not defined")),
    })
}

fn method(recv: &Value, name: &str, args: Vec<Value>) -> Outcome<Value> {
    let bad = || Err(format!("AttributeError: '{}' object has no attribute '{name}'", recv.type_name()));
    match recv {
        Value::List(l) => match (name, args.as_slice()) {
            ("append", [v]) => {
                l.borrow_mut().push(v.clone());
                Ok(Value::None)
            }
            ("pop", []) => l.borrow_mut().pop().ok_or_else(|| "IndexError: pop from empty list".into()),
            ("pop", [i]) => {
                let len = l.borrow().len();
                let j = normalize_index(i, len)?;
                Ok(l.borrow_mut().remove(j))
            }
            ("insert", [i, v]) => {
                let len = l.borrow().len() as i64;
                let i = match i {
                    Value::Int(i) => *i,
                    _ => return Err("TypeError: list indices must be integers".into()),
                };
                let j = if i < 0 { (i + len).max(0) } else { i.min(len) };
                l.borrow_mut().insert(j as usize, v.clone());
                Ok(Value::None)
            }
            ("reverse", []) => {
                l.borrow_mut().reverse();
                Ok(Value::None)
            }
            _ => bad(),
        },
        Value::Str(s) => match (name, args.as_slice()) {
            ("upper", []) => Ok(Value::Str(s.to_uppercase())),
            ("lower", []) => Ok(Value::Str(s.to_lowercase())),
            ("strip", []) => Ok(Value::Str(s.trim().to_string())),
            ("split", []) => Ok(Value::list(s.split_whitespace().map(|w| Value::Str(w.into())).collect())),
            ("split", [Value::Str(sep)]) if !sep.is_empty() => {
                Ok(Value::list(s.split(sep.as_str()).map(|w| Value::Str(w.into())).collect()))
            }
            ("startswith", [Value::Str(p)]) => Ok(Value::Bool(s.starts_with(p.as_str()))),
            ("endswith", [Value::Str(p)]) => Ok(Value::Bool(s.ends_with(p.as_str()))),
            ("replace", [Value::Str(a), Value::Str(b)]) => Ok(Value::Str(s.replace(a.as_str(), b))),
            ("join", [items]) => {
                let parts = items
                    .items()?
                    .into_iter()
                    .map(|v| match v {
                        Value::Str(x) => Ok(x),
                        other => Err(format!("TypeError: expected str, found {}", other.type_name())),
                    })
                    .collect::<Outcome<Vec<_>>>()?;
                Ok(Value::Str(parts.join(s)))
            }
            _ => bad(),
        },
        _ => bad(),
    }
}

/// Runs the module, then calls `name` with `args`; returns the result's
/// representation or the error kind.
pub fn run_function(tree: &CodeTree, name: &str, args: &[Value], fuel: u64) -> Outcome<String> {
    let mut it = Interpreter::new(fuel);
    it.exec_module(tree)?;
    it.call_global(name, args.to_vec()).map(|v| v.repr())
}
