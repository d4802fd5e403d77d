//! Canonical source form. Re-parsing the output yields an equal AST.

use std::fmt::{self, Display, Formatter, Write};

use crate::ast::*;

impl Display for SalProgram {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for c in &self.preamble {
            writeln!(f, "{} = {};", c.name, c.value)?;
        }
        for c in &self.connections {
            write!(f, "{} = {}(", c.name, c.source_kind)?;
            write_string(f, &c.host)?;
            writeln!(f, ", {});", c.port)?;
        }
        for p in &self.partitions {
            writeln!(f, "PARTITION {} BY {};", p.stream, p.keys.join(", "))?;
        }
        for h in &self.hashes {
            writeln!(f, "HASH {} WITH {};", h.field, h.function)?;
        }
        for s in &self.pipeline {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

impl Display for PipelineStatement {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{} = ", self.target)?;
        match &self.kind {
            StatementKind::StreamBy { source, keys } => {
                write!(f, "STREAM {source} BY {}", keys.join(", "))?
            }
            StatementKind::Generate { source, op } => write!(f, "FOREACH {source} GENERATE {op}")?,
            StatementKind::Filter { source, predicate } => {
                write!(f, "FILTER {source} BY {predicate}")?
            }
            StatementKind::Transform { source, outputs } => {
                write!(f, "FOREACH {source} TRANSFORM ")?;
                for (i, (expr, label)) in outputs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{expr} : {label}")?;
                }
            }
            StatementKind::Collapse {
                source,
                keep,
                features,
            } => {
                write!(f, "COLLAPSE {source} BY {}", keep.join(", "))?;
                if !features.is_empty() {
                    write!(f, " FOR {}", features.join(", "))?;
                }
            }
        }
        f.write_char(';')
    }
}

impl Display for OperatorCall {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match arg {
                OperatorArg::Ident(s) => f.write_str(s)?,
                OperatorArg::Int(v) => write!(f, "{v}")?,
            }
        }
        f.write_char(')')
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn write_string(f: &mut Formatter<'_>, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

/// `min_prec` is the weakest operator that may appear unparenthesized here.
fn write_expr(f: &mut Formatter<'_>, expr: &Expr, min_prec: u8) -> fmt::Result {
    match expr {
        Expr::Int(v) => write!(f, "{v}"),
        // `{:?}` always keeps a `.` or exponent, so the literal stays a float.
        Expr::Float(v) => write!(f, "{v:?}"),
        Expr::Str(s) => write_string(f, s),
        Expr::Ident(name) => f.write_str(name),
        Expr::Method {
            target,
            method,
            index,
        } => write!(f, "{target}.{method}({index})"),
        Expr::Neg(inner) => {
            f.write_char('-')?;
            write_expr(f, inner, 4)
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                f.write_char('(')?;
            }
            write_expr(f, lhs, prec)?;
            write!(f, " {} ", op.symbol())?;
            // left-associative: an equal-precedence right operand needs parens
            write_expr(f, rhs, prec + 1)?;
            if paren {
                f.write_char(')')?;
            }
            Ok(())
        }
    }
}
