//! Semantics-preserving code transforms over [`CodeTree`].

use std::collections::BTreeSet;

use rand::Rng as _;
use rand::RngCore;

use super::ast::{is_keyword, BinOp, CodeTree, Expr, Stmt, UnaryOp};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NatGenTransform {
    LoopTransform,
    DeadCodeInject,
    OperandSwap,
    BlockSwap,
    VariableRename,
}

impl NatGenTransform {
    pub const ALL: [NatGenTransform; 5] = [
        NatGenTransform::LoopTransform,
        NatGenTransform::DeadCodeInject,
        NatGenTransform::OperandSwap,
        NatGenTransform::BlockSwap,
        NatGenTransform::VariableRename,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            NatGenTransform::LoopTransform => "loop",
            NatGenTransform::DeadCodeInject => "dead-code",
            NatGenTransform::OperandSwap => "operand-swap",
            NatGenTransform::BlockSwap => "block-swap",
            NatGenTransform::VariableRename => "rename",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.slug() == s)
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|t| *t == self).unwrap() as u64
    }
}

/// Blocks in pre-order, matching [`CodeTree::for_each_block_mut`].
fn blocks(tree: &CodeTree) -> Vec<&Vec<Stmt>> {
    fn go<'a>(block: &'a Vec<Stmt>, out: &mut Vec<&'a Vec<Stmt>>) {
        out.push(block);
        for s in block {
            for b in s.blocks() {
                go(b, out);
            }
        }
    }
    let mut out = Vec::new();
    go(&tree.body, &mut out);
    out
}

fn with_block_mut(tree: &mut CodeTree, target: usize, f: impl FnOnce(&mut Vec<Stmt>)) {
    let mut idx = 0;
    let mut f = Some(f);
    tree.for_each_block_mut(&mut |block| {
        if idx == target {
            if let Some(f) = f.take() {
                f(block);
            }
        }
        idx += 1;
    });
}

fn count_name(stmts: &[Stmt], name: &str) -> usize {
    let mut n = 0;
    for s in stmts {
        s.walk(&mut |st| {
            if let Stmt::Def { name: fname, params, .. } = st {
                n += (fname == name) as usize + params.iter().filter(|p| p.name == name).count();
            }
        });
        s.walk_exprs(&mut |e| n += matches!(e, Expr::Name(x) if x == name) as usize);
    }
    n
}

/// Names written by a statement list: assignment and loop targets, plus
/// receivers of method calls and subscript stores.
fn written_names(stmts: &[Stmt]) -> BTreeSet<String> {
    fn target_names(e: &Expr, out: &mut BTreeSet<String>) {
        match e {
            Expr::Name(n) => {
                out.insert(n.clone());
            }
            Expr::Tuple(xs) | Expr::List(xs) => xs.iter().for_each(|x| target_names(x, out)),
            Expr::Attr(base, _) | Expr::Index(base, _) => target_names(base, out),
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    for s in stmts {
        s.walk(&mut |st| match st {
            Stmt::Assign { target, .. } | Stmt::AugAssign { target, .. } | Stmt::For { target, .. } => {
                target_names(target, &mut out)
            }
            Stmt::Def { name, .. } => {
                out.insert(name.clone());
            }
            _ => {}
        });
        s.walk_exprs(&mut |e| {
            if let Expr::Call(callee, _) = e {
                if let Expr::Attr(base, _) = callee.as_ref() {
                    target_names(base, &mut out);
                }
            }
        });
    }
    out
}

/// Bounds that evaluate the same on every iteration given that none of
/// their names is written in the loop body.
fn stable_bound(e: &Expr) -> bool {
    match e {
        Expr::Name(_) | Expr::Num(_) => true,
        Expr::Unary(UnaryOp::Neg | UnaryOp::Pos, x) => stable_bound(x),
        Expr::Binary(l, op, r) => *op != BinOp::Div && stable_bound(l) && stable_bound(r),
        Expr::Call(f, args) => {
            matches!(f.as_ref(), Expr::Name(n) if n == "len")
                && args.len() == 1
                && args[0].name.is_none()
                && matches!(args[0].value, Expr::Name(_))
        }
        _ => false,
    }
}

fn int_literal(e: &Expr) -> Option<i64> {
    match e {
        Expr::Num(s) => s.replace('_', "").parse().ok(),
        Expr::Unary(UnaryOp::Neg, x) => int_literal(x).map(|v| -v),
        _ => None,
    }
}

struct RangeLoop {
    var: String,
    start: Expr,
    stop: Expr,
    step: i64,
}

fn range_loop(tree: &CodeTree, s: &Stmt) -> Option<RangeLoop> {
    let Stmt::For { target: Expr::Name(var), iter, body } = s else {
        return None;
    };
    let Expr::Call(callee, args) = iter else {
        return None;
    };
    if !matches!(callee.as_ref(), Expr::Name(n) if n == "range") || args.iter().any(|a| a.name.is_some()) {
        return None;
    }
    let (start, stop, step) = match args.as_slice() {
        [stop] => (Expr::int(0), stop.value.clone(), 1),
        [start, stop] => (start.value.clone(), stop.value.clone(), 1),
        [start, stop, step] => (start.value.clone(), stop.value.clone(), int_literal(&step.value)?),
        _ => return None,
    };
    if step == 0 || !stable_bound(&start) || !stable_bound(&stop) {
        return None;
    }
    let mut body_ok = true;
    for st in body {
        st.walk(&mut |x| body_ok &= !matches!(x, Stmt::Continue | Stmt::Def { .. }));
    }
    let written = written_names(body);
    let mut bound_names = BTreeSet::new();
    for b in [&start, &stop] {
        b.walk(&mut |e| {
            if let Expr::Name(n) = e {
                bound_names.insert(n.clone());
            }
        });
    }
    bound_names.remove("len");
    if !body_ok || written.contains(var) || bound_names.contains(var) || bound_names.iter().any(|n| written.contains(n)) {
        return None;
    }
    // the counter must not be observable after the loop
    let inside = count_name(std::slice::from_ref(s), var);
    if count_name(&tree.body, var) != inside {
        return None;
    }
    Some(RangeLoop {
        var: var.clone(),
        start,
        stop,
        step,
    })
}

fn loop_sites(tree: &CodeTree) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (b, block) in blocks(tree).into_iter().enumerate() {
        for (i, s) in block.iter().enumerate() {
            if range_loop(tree, s).is_some() {
                out.push((b, i));
            }
        }
    }
    out
}

fn apply_loop(tree: &mut CodeTree, (b, i): (usize, usize)) {
    let rl = range_loop(tree, blocks(tree)[b].get(i).expect("site exists")).expect("site is eligible");
    with_block_mut(tree, b, |block| {
        let Stmt::For { body, .. } = block.remove(i) else {
            unreachable!("loop site holds a for statement")
        };
        let counter = Expr::Name(rl.var.clone());
        let (cmp, inc_op, inc) = if rl.step > 0 {
            (super::CmpOp::Lt, BinOp::Add, rl.step)
        } else {
            (super::CmpOp::Gt, BinOp::Sub, -rl.step)
        };
        let mut body = body;
        body.push(Stmt::AugAssign {
            target: counter.clone(),
            op: inc_op,
            value: Expr::int(inc),
        });
        block.insert(
            i,
            Stmt::While {
                cond: Expr::compare(counter.clone(), cmp, rl.stop),
                body,
            },
        );
        block.insert(
            i,
            Stmt::Assign {
                target: counter,
                value: rl.start,
            },
        );
    });
}

fn dead_code_sites(tree: &CodeTree) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (b, block) in blocks(tree).into_iter().enumerate() {
        if block.is_empty() {
            continue;
        }
        for i in 0..=block.len() {
            out.push((b, i));
        }
    }
    out
}

fn apply_dead_code(tree: &mut CodeTree, (b, i): (usize, usize), rng: &mut rng::Rng) {
    // copy a simple statement from the same block so the guarded body
    // binds no name the scope does not already bind
    let candidates: Vec<Stmt> = blocks(tree)[b]
        .iter()
        .filter(|s| matches!(s, Stmt::Assign { .. } | Stmt::AugAssign { .. } | Stmt::Expr(_) | Stmt::Return(_)))
        .cloned()
        .collect();
    let dead = if candidates.is_empty() {
        Stmt::Pass
    } else {
        candidates[rng.gen_range(0..candidates.len())].clone()
    };
    with_block_mut(tree, b, |block| {
        block.insert(
            i,
            Stmt::If {
                cond: Expr::Bool(false),
                body: vec![dead],
                orelse: Vec::new(),
            },
        )
    });
}

fn is_numeric_literal(e: &Expr) -> bool {
    match e {
        Expr::Num(_) => true,
        Expr::Unary(UnaryOp::Neg | UnaryOp::Pos, x) => is_numeric_literal(x),
        _ => false,
    }
}

fn swappable(e: &Expr) -> bool {
    match e {
        Expr::Binary(l, BinOp::Add | BinOp::Mul, r) => {
            (is_numeric_literal(l) || is_numeric_literal(r))
                && !matches!(l.as_ref(), Expr::Str(_))
                && !matches!(r.as_ref(), Expr::Str(_))
                && !(l.contains_call() && r.contains_call())
        }
        Expr::Compare(l, op, r) => op.flipped().is_some() && !(l.contains_call() && r.contains_call()),
        _ => false,
    }
}

fn operand_sites(tree: &CodeTree) -> usize {
    let mut n = 0;
    tree.walk_exprs(&mut |e| n += swappable(e) as usize);
    n
}

fn apply_operand_swap(tree: &mut CodeTree, k: usize) {
    let mut seen = 0;
    let mut done = false;
    tree.for_each_expr_mut(&mut |e| {
        if done || !swappable(e) {
            return;
        }
        if seen == k {
            match e {
                Expr::Binary(l, _, r) => std::mem::swap(l, r),
                Expr::Compare(l, op, r) => {
                    std::mem::swap(l, r);
                    *op = op.flipped().expect("swappable comparison");
                }
                _ => unreachable!(),
            }
            done = true;
        }
        seen += 1;
    });
}

fn block_swap_sites(tree: &CodeTree) -> usize {
    let mut n = 0;
    tree.walk(&mut |s| n += matches!(s, Stmt::If { orelse, .. } if !orelse.is_empty()) as usize);
    n
}

fn apply_block_swap(tree: &mut CodeTree, k: usize) {
    let mut seen = 0;
    let mut done = false;
    tree.for_each_block_mut(&mut |block| {
        for s in block.iter_mut() {
            if done {
                return;
            }
            if let Stmt::If { cond, body, orelse } = s {
                if orelse.is_empty() {
                    continue;
                }
                if seen == k {
                    let c = std::mem::replace(cond, Expr::None);
                    *cond = Expr::Unary(UnaryOp::Not, Box::new(c));
                    std::mem::swap(body, orelse);
                    done = true;
                    return;
                }
                seen += 1;
            }
        }
    });
}

/// Local variables eligible for renaming, in sorted order.
pub fn local_variables(tree: &CodeTree) -> Vec<String> {
    fn target_names(e: &Expr, out: &mut BTreeSet<String>) {
        match e {
            Expr::Name(n) => {
                out.insert(n.clone());
            }
            Expr::Tuple(xs) | Expr::List(xs) => xs.iter().for_each(|x| target_names(x, out)),
            _ => {}
        }
    }
    let mut cands = BTreeSet::new();
    let mut excluded = BTreeSet::new();
    tree.walk(&mut |s| match s {
        Stmt::Def { name, params, .. } => {
            excluded.insert(name.clone());
            cands.extend(params.iter().map(|p| p.name.clone()));
        }
        Stmt::Assign { target, .. } | Stmt::AugAssign { target, .. } | Stmt::For { target, .. } => {
            target_names(target, &mut cands)
        }
        Stmt::Import(text) => excluded.extend(text.split(|c: char| !(c.is_alphanumeric() || c == '_')).map(str::to_string)),
        _ => {}
    });
    tree.walk_exprs(&mut |e| {
        if let Expr::Call(_, args) = e {
            excluded.extend(args.iter().filter_map(|a| a.name.clone()));
        }
    });
    cands.difference(&excluded).cloned().collect()
}

fn fresh_name(tree: &CodeTree) -> String {
    let ids = tree.identifiers();
    (0..).map(|k| format!("v{k}")).find(|n| !ids.contains(n)).expect("unbounded")
}

/// Renames every occurrence of the variable `from` to `to`.
pub fn rename_variable(tree: &CodeTree, from: &str, to: &str) -> Result<CodeTree> {
    let valid_ident = !to.is_empty()
        && !to.starts_with(|c: char| c.is_ascii_digit())
        && to.chars().all(|c| c.is_alphanumeric() || c == '_');
    if !valid_ident || is_keyword(to) {
        return Err(Error::validation(format!("'{to}' is not a usable identifier")));
    }
    if from != to && tree.identifiers().contains(to) {
        return Err(Error::validation(format!("'{to}' already occurs in the code")));
    }
    let mut out = tree.clone();
    out.for_each_block_mut(&mut |block| {
        for s in block.iter_mut() {
            if let Stmt::Def { params, .. } = s {
                for p in params.iter_mut().filter(|p| p.name == from) {
                    p.name = to.to_string();
                }
            }
        }
    });
    out.for_each_expr_mut(&mut |e| {
        if let Expr::Name(n) = e {
            if n == from {
                *n = to.to_string();
            }
        }
    });
    Ok(out)
}

/// Number of places `transform` could be applied.
pub fn site_count(tree: &CodeTree, transform: NatGenTransform) -> usize {
    match transform {
        NatGenTransform::LoopTransform => loop_sites(tree).len(),
        NatGenTransform::DeadCodeInject => dead_code_sites(tree).len(),
        NatGenTransform::OperandSwap => operand_sites(tree),
        NatGenTransform::BlockSwap => block_swap_sites(tree),
        NatGenTransform::VariableRename => local_variables(tree).len(),
    }
}

/// Applies `transform` at one uniformly chosen site.
pub fn natgen_rewrite(tree: &CodeTree, transform: NatGenTransform, seed: u64) -> Result<String> {
    let n = site_count(tree, transform);
    if n == 0 {
        return Err(Error::Inapplicable(format!("no site for {}", transform.slug())));
    }
    let mut rng = rng::derive_str(seed, "natgen", &[transform.index()]);
    let k = rng.gen_range(0..n);
    let mut out = tree.clone();
    match transform {
        NatGenTransform::LoopTransform => apply_loop(&mut out, loop_sites(tree)[k]),
        NatGenTransform::DeadCodeInject => apply_dead_code(&mut out, dead_code_sites(tree)[k], &mut rng),
        NatGenTransform::OperandSwap => apply_operand_swap(&mut out, k),
        NatGenTransform::BlockSwap => apply_block_swap(&mut out, k),
        NatGenTransform::VariableRename => {
            let from = &local_variables(tree)[k];
            out = rename_variable(tree, from, &fresh_name(tree))?;
        }
    }
    Ok(out.render())
}

const MAX_ATTEMPTS: u64 = 24;
/// Attempts at the requested transform before other applicable
/// transforms are tried as well.
const OWN_ATTEMPTS: u64 = 8;

/// Up to `n_per_transform` distinct variants for each transform. An
/// inapplicable or exhausted transform is replaced by a uniformly chosen
/// applicable one.
pub fn natgen_augment(code: &str, n_per_transform: usize, seed: u64) -> Result<Vec<String>> {
    let tree = CodeTree::parse(code)?;
    let original = tree.render();
    let applicable: Vec<NatGenTransform> = NatGenTransform::ALL
        .into_iter()
        .filter(|t| site_count(&tree, *t) > 0)
        .collect();
    let mut out: Vec<String> = Vec::new();
    if applicable.is_empty() {
        return Ok(out);
    }
    for t in NatGenTransform::ALL {
        for k in 0..n_per_transform {
            for attempt in 0..MAX_ATTEMPTS {
                let mut r = rng::derive_str(seed, "natgen-augment", &[t.index(), k as u64, attempt]);
                let chosen = if applicable.contains(&t) && attempt < OWN_ATTEMPTS {
                    t
                } else {
                    applicable[r.gen_range(0..applicable.len())]
                };
                let variant = natgen_rewrite(&tree, chosen, r.next_u64())?;
                if variant != original && !out.contains(&variant) {
                    out.push(variant);
                    break;
                }
            }
        }
    }
    Ok(out)
}
