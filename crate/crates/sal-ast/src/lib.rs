//! Front end for the Streaming Analytics Language (SAL).
//!
//! A SAL source file has four sections that must appear in order: preamble
//! constants, connection statements, partition statements (`PARTITION` and
//! `HASH`) and pipeline statements. [`parse_source`] turns text into a
//! [`SalProgram`]; [`validate`] resolves every reference against a tuple
//! schema and produces the [`TypedProgram`] consumed by the dataflow compiler.

pub mod ast;
pub mod diag;
pub mod lexer;
pub mod parser;
mod printer;
pub mod schema;
pub mod typed;
pub mod validate;

pub use ast::{
    BinaryOp, Connection, Constant, Expr, HashSpec, OperatorArg, OperatorCall, Partition,
    PipelineStatement, SalProgram, Span, StatementKind,
};
pub use diag::{Diagnostic, SalError, Severity};
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{parse, parse_source};
pub use schema::{FieldType, TupleSchema};
pub use typed::{
    CollapseResidual, ExprType, FeatureId, FeatureInfo, OpKind, Operator, StreamId, StreamInfo,
    TypedExpr, TypedProgram, TypedStatement,
};
pub use validate::{validate, DEFAULT_WINDOW_SIZE};

/// Separator placed between key-field values when a composite key string is
/// built. Never appears in netflow field values.
pub const KEY_SEPARATOR: char = '\u{1f}';

/// Parse and validate in one step.
pub fn check(source: &str, schema: &TupleSchema) -> Result<TypedProgram, SalError> {
    let program = parse_source(source)?;
    validate(&program, schema)
}
