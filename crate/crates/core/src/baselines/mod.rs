//! Baseline augmenters: word-level query edits and semantics-preserving
//! code transforms over a Python subset.

mod ast;
pub mod interp;
mod lexer;
mod natgen;
mod qra;

pub use ast::{expr_str, Arg, BinOp, BoolOp, CmpOp, CodeTree, Expr, Param, Stmt, UnaryOp};
pub use lexer::{tokenize, Tok, Token};
pub use natgen::{local_variables, natgen_augment, natgen_rewrite, rename_variable, site_count, NatGenTransform};
pub use qra::{qra_augment, qra_rewrite, QraTransform, WordSeq};
