//! Syntax tree for the supported Python subset, with a parser and a
//! precedence-aware printer.

use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::FloorDiv | BinOp::Mod => 7,
            BinOp::Pow => 9,
        }
    }

    fn from_aug(op: &str) -> Option<BinOp> {
        Some(match op {
            "+=" => BinOp::Add,
            "-=" => BinOp::Sub,
            "*=" => BinOp::Mul,
            "/=" => BinOp::Div,
            "//=" => BinOp::FloorDiv,
            "%=" => BinOp::Mod,
            "**=" => BinOp::Pow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    In,
    NotIn,
    Is,
    IsNot,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
        }
    }

    /// The operator that gives the same result with operands exchanged.
    pub fn flipped(self) -> Option<CmpOp> {
        Some(match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::NotEq => CmpOp::NotEq,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::LtE => CmpOp::GtE,
            CmpOp::GtE => CmpOp::LtE,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Pos,
    Not,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Name(String),
    /// Numeric literal kept as written.
    Num(String),
    /// String literal kept as written, quotes included.
    Str(String),
    Bool(bool),
    None,
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Unary(UnaryOp, Box<Expr>),
    Binary(Box<Expr>, BinOp, Box<Expr>),
    Compare(Box<Expr>, CmpOp, Box<Expr>),
    Logic(Box<Expr>, BoolOp, Box<Expr>),
    Call(Box<Expr>, Vec<Arg>),
    Attr(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Slice(Option<Box<Expr>>, Option<Box<Expr>>, Option<Box<Expr>>),
}

impl Expr {
    pub fn name(s: &str) -> Expr {
        Expr::Name(s.to_string())
    }

    pub fn int(v: i64) -> Expr {
        Expr::Num(v.to_string())
    }

    pub fn binary(l: Expr, op: BinOp, r: Expr) -> Expr {
        Expr::Binary(Box::new(l), op, Box::new(r))
    }

    pub fn compare(l: Expr, op: CmpOp, r: Expr) -> Expr {
        Expr::Compare(Box::new(l), op, Box::new(r))
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Tuple(_) => 0,
            Expr::Logic(_, BoolOp::Or, _) => 1,
            Expr::Logic(_, BoolOp::And, _) => 2,
            Expr::Unary(UnaryOp::Not, _) => 3,
            Expr::Compare(..) => 4,
            Expr::Binary(_, op, _) => op.prec(),
            Expr::Unary(..) => 8,
            Expr::Call(..) | Expr::Attr(..) | Expr::Index(..) => 10,
            _ => 11,
        }
    }

    /// Visits this expression and every sub-expression, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        self.for_each_child(&mut |c| c.walk(f));
    }

    pub fn for_each_child<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        match self {
            Expr::Name(_) | Expr::Num(_) | Expr::Str(_) | Expr::Bool(_) | Expr::None => {}
            Expr::List(xs) | Expr::Tuple(xs) => xs.iter().for_each(f),
            Expr::Dict(kv) => kv.iter().for_each(|(k, v)| {
                f(k);
                f(v)
            }),
            Expr::Unary(_, e) | Expr::Attr(e, _) => f(e),
            Expr::Binary(l, _, r) | Expr::Compare(l, _, r) | Expr::Logic(l, _, r) | Expr::Index(l, r) => {
                f(l);
                f(r)
            }
            Expr::Call(callee, args) => {
                f(callee);
                args.iter().for_each(|a| f(&a.value));
            }
            Expr::Slice(a, b, c) => [a, b, c].into_iter().flatten().for_each(|e| f(e)),
        }
    }

    pub fn for_each_child_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        match self {
            Expr::Name(_) | Expr::Num(_) | Expr::Str(_) | Expr::Bool(_) | Expr::None => {}
            Expr::List(xs) | Expr::Tuple(xs) => xs.iter_mut().for_each(f),
            Expr::Dict(kv) => kv.iter_mut().for_each(|(k, v)| {
                f(k);
                f(v)
            }),
            Expr::Unary(_, e) | Expr::Attr(e, _) => f(e),
            Expr::Binary(l, _, r) | Expr::Compare(l, _, r) | Expr::Logic(l, _, r) | Expr::Index(l, r) => {
                f(l);
                f(r)
            }
            Expr::Call(callee, args) => {
                f(callee);
                args.iter_mut().for_each(|a| f(&mut a.value));
            }
            Expr::Slice(a, b, c) => [a, b, c].into_iter().flatten().for_each(|e| f(e)),
        }
    }

    pub fn contains_call(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Call(..)));
        found
    }

    pub fn mentions(&self, name: &str) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Name(n) if n == name));
        found
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Def {
        name: String,
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
    Assign {
        target: Expr,
        value: Expr,
    },
    AugAssign {
        target: Expr,
        op: BinOp,
        value: Expr,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Expr(Expr),
    /// `import ...` or `from ... import ...`, normalized.
    Import(String),
    Pass,
    Break,
    Continue,
}

impl Stmt {
    /// Visits nested statement blocks (not the statement itself).
    pub fn blocks(&self) -> Vec<&Vec<Stmt>> {
        match self {
            Stmt::Def { body, .. } | Stmt::For { body, .. } | Stmt::While { body, .. } => vec![body],
            Stmt::If { body, orelse, .. } => vec![body, orelse],
            _ => vec![],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match self {
            Stmt::Def { body, .. } | Stmt::For { body, .. } | Stmt::While { body, .. } => vec![body],
            Stmt::If { body, orelse, .. } => vec![body, orelse],
            _ => vec![],
        }
    }

    /// Expressions held directly by this statement.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Def { params, .. } => params.iter().filter_map(|p| p.default.as_ref()).collect(),
            Stmt::Assign { target, value } | Stmt::AugAssign { target, value, .. } => vec![target, value],
            Stmt::For { target, iter, .. } => vec![target, iter],
            Stmt::While { cond, .. } | Stmt::If { cond, .. } => vec![cond],
            Stmt::Return(Some(e)) | Stmt::Expr(e) => vec![e],
            _ => vec![],
        }
    }

    pub fn exprs_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Stmt::Def { params, .. } => params.iter_mut().filter_map(|p| p.default.as_mut()).collect(),
            Stmt::Assign { target, value } | Stmt::AugAssign { target, value, .. } => vec![target, value],
            Stmt::For { target, iter, .. } => vec![target, iter],
            Stmt::While { cond, .. } | Stmt::If { cond, .. } => vec![cond],
            Stmt::Return(Some(e)) | Stmt::Expr(e) => vec![e],
            _ => vec![],
        }
    }

    /// Visits this statement and all nested statements, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for block in self.blocks() {
            for s in block {
                s.walk(f);
            }
        }
    }

    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        self.walk(&mut |s| {
            for e in s.exprs() {
                e.walk(f);
            }
        });
    }
}

/// A parsed module.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTree {
    pub body: Vec<Stmt>,
}

impl CodeTree {
    pub fn parse(src: &str) -> Result<CodeTree> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0 };
        let mut body = Vec::new();
        while !p.at(&Tok::Eof) {
            if p.eat(&Tok::Newline) {
                continue;
            }
            body.extend(p.statement()?);
        }
        if body.is_empty() {
            return Err(p.err("empty program"));
        }
        Ok(CodeTree { body })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        render_block(&self.body, 0, &mut out);
        out
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        for s in &self.body {
            s.walk(f);
        }
    }

    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for s in &self.body {
            s.walk_exprs(f);
        }
    }

    /// Every block in the tree, module body first, pre-order.
    pub fn for_each_block_mut(&mut self, f: &mut dyn FnMut(&mut Vec<Stmt>)) {
        fn go(block: &mut Vec<Stmt>, f: &mut dyn FnMut(&mut Vec<Stmt>)) {
            f(block);
            for s in block.iter_mut() {
                for b in s.blocks_mut() {
                    go(b, f);
                }
            }
        }
        go(&mut self.body, f);
    }

    pub fn for_each_expr_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        fn go_expr(e: &mut Expr, f: &mut dyn FnMut(&mut Expr)) {
            f(e);
            e.for_each_child_mut(&mut |c| go_expr(c, f));
        }
        self.for_each_block_mut(&mut |block| {
            for s in block.iter_mut() {
                for e in s.exprs_mut() {
                    go_expr(e, f);
                }
            }
        });
    }

    /// All identifiers appearing anywhere, including attribute and
    /// keyword names.
    pub fn identifiers(&self) -> std::collections::BTreeSet<String> {
        let mut ids = std::collections::BTreeSet::new();
        self.walk(&mut |s| {
            if let Stmt::Def { name, params, .. } = s {
                ids.insert(name.clone());
                ids.extend(params.iter().map(|p| p.name.clone()));
            }
            if let Stmt::Import(text) = s {
                ids.extend(text.split(|c: char| !(c.is_alphanumeric() || c == '_')).map(str::to_string));
            }
        });
        self.walk_exprs(&mut |e| match e {
            Expr::Name(n) | Expr::Attr(_, n) => {
                ids.insert(n.clone());
            }
            Expr::Call(_, args) => ids.extend(args.iter().filter_map(|a| a.name.clone())),
            _ => {}
        });
        ids
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.toks[self.pos].line,
            message: message.into(),
        }
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}', found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.bump();
                Ok(n)
            }
            other => Err(self.err(format!("expected identifier, found {other:?}"))),
        }
    }

    fn end_of_simple(&mut self) -> Result<()> {
        if self.eat(&Tok::Newline) || self.at(&Tok::Eof) || self.at(&Tok::Dedent) {
            Ok(())
        } else {
            Err(self.err(format!("expected end of statement, found {:?}", self.peek())))
        }
    }

    fn statement(&mut self) -> Result<Vec<Stmt>> {
        if let Tok::Name(kw) = self.peek().clone() {
            match kw.as_str() {
                "def" => return self.def().map(|s| vec![s]),
                "if" => {
                    self.bump();
                    return self.if_rest().map(|s| vec![s]);
                }
                "while" => {
                    self.bump();
                    let cond = self.expr()?;
                    let body = self.block()?;
                    return Ok(vec![Stmt::While { cond, body }]);
                }
                "for" => {
                    self.bump();
                    let target = self.target_list()?;
                    if !self.eat_kw("in") {
                        return Err(self.err("expected 'in'"));
                    }
                    let iter = self.expr_list()?;
                    let body = self.block()?;
                    return Ok(vec![Stmt::For { target, iter, body }]);
                }
                "class" | "try" | "with" | "async" | "lambda" | "global" | "nonlocal" | "del" | "yield"
                | "raise" | "assert" | "elif" | "else" | "except" | "finally" => {
                    return Err(self.err(format!("unsupported construct '{kw}'")));
                }
                _ => {}
            }
        }
        if self.at_op("@") {
            return Err(self.err("decorators are not supported"));
        }
        let mut out = vec![self.simple()?];
        while self.eat_op(";") {
            if self.at(&Tok::Newline) || self.at(&Tok::Eof) {
                break;
            }
            out.push(self.simple()?);
        }
        self.end_of_simple()?;
        Ok(out)
    }

    fn simple(&mut self) -> Result<Stmt> {
        if self.eat_kw("pass") {
            return Ok(Stmt::Pass);
        }
        if self.eat_kw("break") {
            return Ok(Stmt::Break);
        }
        if self.eat_kw("continue") {
            return Ok(Stmt::Continue);
        }
        if self.eat_kw("return") {
            if self.at(&Tok::Newline) || self.at(&Tok::Eof) || self.at_op(";") || self.at(&Tok::Dedent) {
                return Ok(Stmt::Return(None));
            }
            return Ok(Stmt::Return(Some(self.expr_list()?)));
        }
        if self.at_kw("import") || self.at_kw("from") {
            return self.import();
        }
        let first = self.expr_list()?;
        if self.eat_op("=") {
            check_target(&first).map_err(|m| self.err(m))?;
            let value = self.expr_list()?;
            if self.at_op("=") {
                return Err(self.err("chained assignment is not supported"));
            }
            return Ok(Stmt::Assign { target: first, value });
        }
        if let Tok::Op(op) = self.peek().clone() {
            if let Some(bop) = BinOp::from_aug(op) {
                self.bump();
                if !matches!(first, Expr::Name(_) | Expr::Attr(..) | Expr::Index(..)) {
                    return Err(self.err("invalid augmented assignment target"));
                }
                let value = self.expr_list()?;
                return Ok(Stmt::AugAssign {
                    target: first,
                    op: bop,
                    value,
                });
            }
        }
        Ok(Stmt::Expr(first))
    }

    fn import(&mut self) -> Result<Stmt> {
        let mut parts: Vec<String> = Vec::new();
        while !(self.at(&Tok::Newline) || self.at(&Tok::Eof) || self.at_op(";")) {
            match self.bump() {
                Tok::Name(n) => parts.push(n),
                Tok::Op(op @ ("." | "," | "*" | "(" | ")")) => parts.push(op.to_string()),
                other => return Err(self.err(format!("unexpected {other:?} in import"))),
            }
        }
        let mut text = String::new();
        for (i, part) in parts.iter().enumerate() {
            let prev = if i == 0 { None } else { Some(parts[i - 1].as_str()) };
            let glue = match (prev, part.as_str()) {
                (None, _) | (_, ",") | (_, ")") | (Some("("), _) => false,
                (Some(p), ".") => is_keyword(p) || p == ",",
                (Some("."), n) => is_keyword(n),
                _ => true,
            };
            if glue {
                text.push(' ');
            }
            text.push_str(part);
        }
        Ok(Stmt::Import(text))
    }

    fn def(&mut self) -> Result<Stmt> {
        self.bump();
        let name = self.ident()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        while !self.at_op(")") {
            let pname = self.ident()?;
            let default = if self.eat_op("=") { Some(self.expr()?) } else { None };
            params.push(Param { name: pname, default });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.expr()?;
        }
        let body = self.block()?;
        Ok(Stmt::Def { name, params, body })
    }

    fn if_rest(&mut self) -> Result<Stmt> {
        let cond = self.expr()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("elif") {
            vec![self.if_rest()?]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, body, orelse })
    }

    fn block(&mut self) -> Result<Vec<Stmt>> {
        self.expect_op(":")?;
        if !self.eat(&Tok::Newline) {
            let mut out = vec![self.simple()?];
            while self.eat_op(";") {
                if self.at(&Tok::Newline) {
                    break;
                }
                out.push(self.simple()?);
            }
            self.end_of_simple()?;
            return Ok(out);
        }
        if !self.eat(&Tok::Indent) {
            return Err(self.err("expected an indented block"));
        }
        let mut body = Vec::new();
        while !self.eat(&Tok::Dedent) {
            if self.at(&Tok::Eof) {
                break;
            }
            body.extend(self.statement()?);
        }
        Ok(body)
    }

    fn target_list(&mut self) -> Result<Expr> {
        let first = self.postfix()?;
        if !self.at_op(",") {
            check_target(&first).map_err(|m| self.err(m))?;
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") {
                break;
            }
            items.push(self.postfix()?);
        }
        let t = Expr::Tuple(items);
        check_target(&t).map_err(|m| self.err(m))?;
        Ok(t)
    }

    /// Comma-separated expressions; more than one forms a bare tuple.
    fn expr_list(&mut self) -> Result<Expr> {
        let first = self.expr()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at(&Tok::Newline) || self.at_op("=") || self.at_op(")") || self.at(&Tok::Eof) || self.at_op(":") {
                break;
            }
            items.push(self.expr()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn expr(&mut self) -> Result<Expr> {
        if self.at_kw("lambda") || self.at_kw("yield") || self.at_kw("await") {
            return Err(self.err("unsupported expression"));
        }
        let e = self.or_expr()?;
        if self.at_kw("if") {
            return Err(self.err("conditional expressions are not supported"));
        }
        Ok(e)
    }

    fn or_expr(&mut self) -> Result<Expr> {
        let mut l = self.and_expr()?;
        while self.eat_kw("or") {
            let r = self.and_expr()?;
            l = Expr::Logic(Box::new(l), BoolOp::Or, Box::new(r));
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut l = self.not_expr()?;
        while self.eat_kw("and") {
            let r = self.not_expr()?;
            l = Expr::Logic(Box::new(l), BoolOp::And, Box::new(r));
        }
        Ok(l)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::NotEq,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::LtE,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::GtE,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                self.bump();
                CmpOp::NotIn
            }
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                    self.bump();
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            }
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr> {
        let l = self.arith()?;
        let Some(op) = self.cmp_op() else {
            return Ok(l);
        };
        let r = self.arith()?;
        if self.cmp_op().is_some() {
            return Err(self.err("chained comparisons are not supported"));
        }
        Ok(Expr::compare(l, op, r))
    }

    fn arith(&mut self) -> Result<Expr> {
        let mut l = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(l);
            };
            l = Expr::binary(l, op, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("//") {
                BinOp::FloorDiv
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Mod
            } else {
                return Ok(l);
            };
            l = Expr::binary(l, op, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op("-") {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_op("+") {
            return Ok(Expr::Unary(UnaryOp::Pos, Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            return Ok(Expr::binary(base, BinOp::Pow, self.unary()?));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let mut args = Vec::new();
                while !self.at_op(")") {
                    if self.at_op("*") || self.at_op("**") {
                        return Err(self.err("star arguments are not supported"));
                    }
                    let name = match (self.peek().clone(), self.peek_at(1)) {
                        (Tok::Name(n), Tok::Op("=")) if !is_keyword(&n) => {
                            self.bump();
                            self.bump();
                            Some(n)
                        }
                        _ => None,
                    };
                    let value = self.expr()?;
                    if self.at_kw("for") {
                        return Err(self.err("comprehensions are not supported"));
                    }
                    args.push(Arg { name, value });
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(")")?;
                e = Expr::Call(Box::new(e), args);
            } else if self.eat_op(".") {
                let attr = match self.bump() {
                    Tok::Name(n) => n,
                    other => return Err(self.err(format!("expected attribute name, found {other:?}"))),
                };
                e = Expr::Attr(Box::new(e), attr);
            } else if self.eat_op("[") {
                let idx = self.subscript()?;
                self.expect_op("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn subscript(&mut self) -> Result<Expr> {
        let opt = |p: &mut Parser| -> Result<Option<Box<Expr>>> {
            if p.at_op(":") || p.at_op("]") {
                Ok(None)
            } else {
                Ok(Some(Box::new(p.expr()?)))
            }
        };
        let lo = opt(self)?;
        if !self.eat_op(":") {
            return lo.map(|b| *b).ok_or_else(|| self.err("empty subscript"));
        }
        let hi = opt(self)?;
        let step = if self.eat_op(":") { opt(self)? } else { None };
        Ok(Expr::Slice(lo, hi, step))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Tok::Name(n) => match n.as_str() {
                "True" => Ok(Expr::Bool(true)),
                "False" => Ok(Expr::Bool(false)),
                "None" => Ok(Expr::None),
                _ if is_keyword(&n) => Err(self.err(format!("unexpected keyword '{n}'"))),
                _ => Ok(Expr::Name(n)),
            },
            Tok::Number(s) => Ok(Expr::Num(s)),
            Tok::Str(s) => {
                let mut lit = s;
                // adjacent literals concatenate
                while let Tok::Str(next) = self.peek().clone() {
                    self.bump();
                    lit.push(' ');
                    lit.push_str(&next);
                }
                Ok(Expr::Str(lit))
            }
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Ok(Expr::Tuple(Vec::new()));
                }
                let first = self.expr()?;
                if self.at_kw("for") {
                    return Err(self.err("generator expressions are not supported"));
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op(")") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op(")")?;
                Ok(Expr::Tuple(items))
            }
            Tok::Op("[") => {
                let mut items = Vec::new();
                while !self.at_op("]") {
                    items.push(self.expr()?);
                    if self.at_kw("for") {
                        return Err(self.err("comprehensions are not supported"));
                    }
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("]")?;
                Ok(Expr::List(items))
            }
            Tok::Op("{") => {
                let mut items = Vec::new();
                while !self.at_op("}") {
                    let k = self.expr()?;
                    if !self.eat_op(":") {
                        return Err(self.err("set literals are not supported"));
                    }
                    let v = self.expr()?;
                    if self.at_kw("for") {
                        return Err(self.err("comprehensions are not supported"));
                    }
                    items.push((k, v));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("}")?;
                Ok(Expr::Dict(items))
            }
            other => {
                // step back so the error points at the offending token
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("unexpected token {other:?}")))
            }
        }
    }
}

fn check_target(e: &Expr) -> std::result::Result<(), String> {
    match e {
        Expr::Name(_) | Expr::Attr(..) | Expr::Index(..) => Ok(()),
        Expr::Tuple(xs) | Expr::List(xs) if !xs.is_empty() => xs.iter().try_for_each(check_target),
        _ => Err("invalid assignment target".into()),
    }
}

const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else", "except",
    "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass",
    "raise", "return", "try", "while", "with", "yield", "True", "False", "None",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

const INDENT: &str = "    ";

fn render_block(block: &[Stmt], depth: usize, out: &mut String) {
    for s in block {
        render_stmt(s, depth, out);
    }
}

fn render_body(body: &[Stmt], depth: usize, out: &mut String) {
    if body.is_empty() {
        out.push_str(&INDENT.repeat(depth));
        out.push_str("pass\n");
    } else {
        render_block(body, depth, out);
    }
}

fn render_stmt(s: &Stmt, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    match s {
        Stmt::Def { name, params, body } => {
            let ps: Vec<String> = params
                .iter()
                .map(|p| match &p.default {
                    Some(d) => format!("{}={}", p.name, expr_str(d)),
                    None => p.name.clone(),
                })
                .collect();
            out.push_str(&format!("def {name}({}):\n", ps.join(", ")));
            render_body(body, depth + 1, out);
        }
        Stmt::Assign { target, value } => {
            out.push_str(&format!("{} = {}\n", top_str(target), top_str(value)));
        }
        Stmt::AugAssign { target, op, value } => {
            out.push_str(&format!("{} {}= {}\n", expr_str(target), op.symbol(), top_str(value)));
        }
        Stmt::For { target, iter, body } => {
            out.push_str(&format!("for {} in {}:\n", top_str(target), top_str(iter)));
            render_body(body, depth + 1, out);
        }
        Stmt::While { cond, body } => {
            out.push_str(&format!("while {}:\n", expr_str(cond)));
            render_body(body, depth + 1, out);
        }
        Stmt::If { cond, body, orelse } => {
            out.push_str(&format!("if {}:\n", expr_str(cond)));
            render_body(body, depth + 1, out);
            let mut rest = orelse;
            loop {
                match rest.as_slice() {
                    [] => break,
                    [Stmt::If { cond, body, orelse }] => {
                        out.push_str(&format!("{pad}elif {}:\n", expr_str(cond)));
                        render_body(body, depth + 1, out);
                        rest = orelse;
                    }
                    other => {
                        out.push_str(&format!("{pad}else:\n"));
                        render_body(other, depth + 1, out);
                        break;
                    }
                }
            }
        }
        Stmt::Return(None) => out.push_str("return\n"),
        Stmt::Return(Some(e)) => out.push_str(&format!("return {}\n", top_str(e))),
        Stmt::Expr(e) => out.push_str(&format!("{}\n", top_str(e))),
        Stmt::Import(text) => out.push_str(&format!("{text}\n")),
        Stmt::Pass => out.push_str("pass\n"),
        Stmt::Break => out.push_str("break\n"),
        Stmt::Continue => out.push_str("continue\n"),
    }
}

/// Statement-level rendering where a tuple needs no parentheses.
fn top_str(e: &Expr) -> String {
    match e {
        Expr::Tuple(xs) if !xs.is_empty() => {
            let parts: Vec<String> = xs.iter().map(expr_str).collect();
            if xs.len() == 1 {
                format!("{},", parts[0])
            } else {
                parts.join(", ")
            }
        }
        _ => expr_str(e),
    }
}

fn wrap(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", expr_str(e))
    } else {
        expr_str(e)
    }
}

pub fn expr_str(e: &Expr) -> String {
    match e {
        Expr::Name(n) => n.clone(),
        Expr::Num(s) | Expr::Str(s) => s.clone(),
        Expr::Bool(true) => "True".into(),
        Expr::Bool(false) => "False".into(),
        Expr::None => "None".into(),
        Expr::List(xs) => format!("[{}]", xs.iter().map(expr_str).collect::<Vec<_>>().join(", ")),
        Expr::Tuple(xs) => match xs.len() {
            1 => format!("({},)", expr_str(&xs[0])),
            _ => format!("({})", xs.iter().map(expr_str).collect::<Vec<_>>().join(", ")),
        },
        Expr::Dict(kv) => format!(
            "{{{}}}",
            kv.iter()
                .map(|(k, v)| format!("{}: {}", expr_str(k), expr_str(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Expr::Unary(UnaryOp::Not, x) => format!("not {}", wrap(x, x.prec() < 3)),
        Expr::Unary(op, x) => {
            let sym = if *op == UnaryOp::Neg { "-" } else { "+" };
            let inner = wrap(x, x.prec() < 8);
            format!("{sym}{inner}")
        }
        Expr::Binary(l, BinOp::Pow, r) => {
            format!("{} ** {}", wrap(l, l.prec() <= 9), wrap(r, r.prec() < 8))
        }
        Expr::Binary(l, op, r) => {
            let p = op.prec();
            format!("{} {} {}", wrap(l, l.prec() < p), op.symbol(), wrap(r, r.prec() <= p))
        }
        Expr::Compare(l, op, r) => {
            format!("{} {} {}", wrap(l, l.prec() <= 4), op.symbol(), wrap(r, r.prec() <= 4))
        }
        Expr::Logic(l, op, r) => {
            let (p, sym) = match op {
                BoolOp::Or => (1, "or"),
                BoolOp::And => (2, "and"),
            };
            format!("{} {sym} {}", wrap(l, l.prec() < p), wrap(r, r.prec() <= p))
        }
        Expr::Call(f, args) => {
            let parts: Vec<String> = args
                .iter()
                .map(|a| match &a.name {
                    Some(n) => format!("{n}={}", expr_str(&a.value)),
                    None => expr_str(&a.value),
                })
                .collect();
            format!("{}({})", wrap(f, f.prec() < 10), parts.join(", "))
        }
        Expr::Attr(x, name) => {
            let base = match x.as_ref() {
                Expr::Num(_) => format!("({})", expr_str(x)),
                _ => wrap(x, x.prec() < 10),
            };
            format!("{base}.{name}")
        }
        Expr::Index(x, i) => format!("{}[{}]", wrap(x, x.prec() < 10), top_str(i)),
        Expr::Slice(a, b, c) => {
            let part = |p: &Option<Box<Expr>>| p.as_ref().map(|e| expr_str(e)).unwrap_or_default();
            match c {
                Some(_) => format!("{}:{}:{}", part(a), part(b), part(c)),
                None => format!("{}:{}", part(a), part(b)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(src: &str) -> String {
        CodeTree::parse(src).unwrap().render()
    }

    #[test]
    fn renders_canonical_form() {
        let src = "def f(a,b = 2):\n  x=a+b*2\n  if x>3: return x\n  elif x == 1:\n    pass\n  else:\n    x -= 1\n  return x\n";
        assert_eq!(
            roundtrip(src),
            "def f(a, b=2):\n    x = a + b * 2\n    if x > 3:\n        return x\n    elif x == 1:\n        pass\n    else:\n        x -= 1\n    return x\n"
        );
    }

    #[test]
    fn parentheses_follow_precedence() {
        assert_eq!(roundtrip("y = (a + b) * c\n"), "y = (a + b) * c\n");
        assert_eq!(roundtrip("y = a - (b - c)\n"), "y = a - (b - c)\n");
        assert_eq!(roundtrip("y = (a - b) - c\n"), "y = a - b - c\n");
        assert_eq!(roundtrip("y = not (a and b)\n"), "y = not (a and b)\n");
        assert_eq!(roundtrip("y = (-2) ** 2\n"), "y = (-2) ** 2\n");
        assert_eq!(roundtrip("y = -2 ** 2\n"), "y = -2 ** 2\n");
        assert_eq!(roundtrip("y = 2 ** -1\n"), "y = 2 ** -1\n");
        assert_eq!(roundtrip("y = (a < b) == c\n"), "y = (a < b) == c\n");
        assert_eq!(roundtrip("y = (a + b).real\n"), "y = (a + b).real\n");
    }

    #[test]
    fn tuples_slices_and_calls() {
        assert_eq!(
            roundtrip("a, b = b, a\nreturn x[1:], s[::-1], f(k=1)\n"),
            "a, b = b, a\nreturn x[1:], s[::-1], f(k=1)\n"
        );
        assert_eq!(roundtrip("t = (1,)\n"), "t = 1,\n");
        assert_eq!(roundtrip("for i, x in enumerate(xs):\n  pass\n"), "for i, x in enumerate(xs):\n    pass\n");
    }

    #[test]
    fn imports_normalize() {
        assert_eq!(roundtrip("from os.path import join,exists\nimport re\n"), "from os.path import join, exists\nimport re\n");
    }

    #[test]
    fn rejects_unsupported_constructs() {
        for src in ["class A:\n  pass\n", "x = [i for i in y]\n", "x = a if b else c\n", "a < b < c\n", "def f(:\n"] {
            assert!(matches!(CodeTree::parse(src), Err(Error::Syntax { .. })), "{src}");
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let Err(Error::Syntax { line, .. }) = CodeTree::parse("x = 1\ny = (\n") else {
            panic!("expected a syntax error");
        };
        assert!(line >= 2);
    }
}
