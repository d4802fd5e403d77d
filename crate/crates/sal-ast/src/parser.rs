//! Recursive-descent parser.
//!
//! Grammar (keywords case-insensitive, `;` terminates every statement; the
//! terminator may be left off when the next statement starts on a new line):
//!
//! ```text
//! program     := constant* connection* (partition | hash)* pipeline*
//! constant    := IDENT '=' INT
//! connection  := IDENT '=' IDENT '(' STRING ',' INT ')'
//! partition   := PARTITION IDENT BY IDENT (',' IDENT)*
//! hash        := HASH IDENT WITH IDENT
//! pipeline    := IDENT '=' ( STREAM IDENT BY idents
//!                          | FOREACH IDENT GENERATE IDENT '(' args ')'
//!                          | FOREACH IDENT TRANSFORM expr ':' IDENT (',' expr ':' IDENT)*
//!                          | FILTER IDENT BY expr
//!                          | COLLAPSE IDENT BY idents (FOR idents)? )
//! expr        := sum (cmp sum)*
//! sum         := product (('+' | '-') product)*
//! product     := unary (('*' | '/') unary)*
//! unary       := '-' unary | primary
//! primary     := INT | FLOAT | STRING | IDENT ('.' IDENT '(' INT ')')? | '(' expr ')'
//! ```

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::{Diagnostic, SalError};
use crate::lexer::{tokenize, Keyword, Token, TokenKind};

/// Tokenize and parse in one step.
pub fn parse_source(source: &str) -> Result<SalProgram, SalError> {
    parse(&tokenize(source)?)
}

/// Build a [`SalProgram`] from tokens, then check statement order, name
/// uniqueness and define-before-use of stream names.
pub fn parse(tokens: &[Token]) -> Result<SalProgram, SalError> {
    let mut parser = Parser { tokens, pos: 0 };
    let program = parser.program()?;
    check_structure(&program)?;
    Ok(program)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Preamble,
    Connection,
    Partition,
    Pipeline,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Preamble => "preamble",
            Phase::Connection => "connection",
            Phase::Partition => "partition",
            Phase::Pipeline => "pipeline",
        }
    }
}

enum Parsed {
    Constant(Constant),
    Connection(Connection),
    Partition(Partition),
    Hash(HashSpec),
    Pipeline(PipelineStatement),
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

type PResult<T> = Result<T, SalError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn here(&self) -> Span {
        match self.tokens.get(self.pos).or_else(|| self.tokens.last()) {
            Some(t) if self.pos < self.tokens.len() => Span {
                line: t.line,
                col: t.col,
            },
            Some(t) => Span {
                line: t.line,
                col: t.col + 1,
            },
            None => Span { line: 1, col: 1 },
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let span = self.here();
        Err(SalError::Syntax(vec![Diagnostic::error(
            span.line, span.col, message,
        )]))
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        match self.peek() {
            Some(found) => self.error(format!("expected {what}, found {found}")),
            None => self.error(format!("expected {what}, found end of input")),
        }
    }

    fn bump(&mut self) -> Option<&'t TokenKind> {
        let tok = self.tokens.get(self.pos).map(|t| &t.kind);
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            self.expected(&kind.to_string())
        }
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn expect_keyword(&mut self, kw: Keyword) -> PResult<()> {
        self.expect(TokenKind::Keyword(kw))
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => self.expected("identifier"),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.peek() {
            Some(TokenKind::Int(v)) => {
                self.pos += 1;
                Ok(*v)
            }
            _ => self.expected("integer"),
        }
    }

    fn ident_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.ident()?];
        while self.eat(&TokenKind::Comma) {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn program(&mut self) -> PResult<SalProgram> {
        let mut program = SalProgram::default();
        let mut phase = Phase::Preamble;
        while self.peek().is_some() {
            let span = self.here();
            let (stmt_phase, stmt) = self.statement()?;
            if stmt_phase < phase {
                return Err(SalError::Syntax(vec![Diagnostic::error(
                    span.line,
                    span.col,
                    format!(
                        "{} statement after {} statements; sections must appear as preamble, connection, partition, pipeline",
                        stmt_phase.name(),
                        phase.name()
                    ),
                )]));
            }
            phase = stmt_phase;
            self.terminator()?;
            match stmt {
                Parsed::Constant(c) => program.preamble.push(c),
                Parsed::Connection(c) => program.connections.push(c),
                Parsed::Partition(p) => program.partitions.push(p),
                Parsed::Hash(h) => program.hashes.push(h),
                Parsed::Pipeline(p) => program.pipeline.push(p),
            }
        }
        Ok(program)
    }

    fn terminator(&mut self) -> PResult<()> {
        if self.eat(&TokenKind::Semi) {
            return Ok(());
        }
        let prev_line = self.tokens[self.pos - 1].line;
        match self.tokens.get(self.pos) {
            None => Ok(()),
            Some(t) if t.line > prev_line => Ok(()),
            Some(_) => self.expected("`;`"),
        }
    }

    fn statement(&mut self) -> PResult<(Phase, Parsed)> {
        let span = self.here();
        if self.eat_keyword(Keyword::Partition) {
            let stream = self.ident()?;
            self.expect_keyword(Keyword::By)?;
            let keys = self.ident_list()?;
            return Ok((
                Phase::Partition,
                Parsed::Partition(Partition { stream, keys, span }),
            ));
        }
        if self.eat_keyword(Keyword::Hash) {
            let field = self.ident()?;
            self.expect_keyword(Keyword::With)?;
            let function = self.ident()?;
            return Ok((
                Phase::Partition,
                Parsed::Hash(HashSpec {
                    field,
                    function,
                    span,
                }),
            ));
        }

        let name = self.ident()?;
        self.expect(TokenKind::Eq)?;
        match self.peek() {
            Some(TokenKind::Int(v)) => {
                let value = *v;
                self.pos += 1;
                Ok((
                    Phase::Preamble,
                    Parsed::Constant(Constant { name, value, span }),
                ))
            }
            Some(TokenKind::Ident(_)) => {
                let source_kind = self.ident()?;
                self.expect(TokenKind::LParen)?;
                let host = match self.bump() {
                    Some(TokenKind::Str(s)) => s.clone(),
                    _ => {
                        self.pos -= 1;
                        return self.expected("host string");
                    }
                };
                self.expect(TokenKind::Comma)?;
                let port = self.int()?;
                self.expect(TokenKind::RParen)?;
                Ok((
                    Phase::Connection,
                    Parsed::Connection(Connection {
                        name,
                        source_kind,
                        host,
                        port,
                        span,
                    }),
                ))
            }
            Some(TokenKind::Keyword(_)) => {
                let kind = self.pipeline_body()?;
                Ok((
                    Phase::Pipeline,
                    Parsed::Pipeline(PipelineStatement {
                        target: name,
                        kind,
                        span,
                    }),
                ))
            }
            _ => self.expected("integer constant, connection or pipeline statement"),
        }
    }

    fn pipeline_body(&mut self) -> PResult<StatementKind> {
        if self.eat_keyword(Keyword::Stream) {
            let source = self.ident()?;
            self.expect_keyword(Keyword::By)?;
            let keys = self.ident_list()?;
            return Ok(StatementKind::StreamBy { source, keys });
        }
        if self.eat_keyword(Keyword::Foreach) {
            let source = self.ident()?;
            if self.eat_keyword(Keyword::Generate) {
                let name = self.ident()?;
                self.expect(TokenKind::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&TokenKind::RParen) {
                    loop {
                        let arg = match self.peek() {
                            Some(TokenKind::Ident(s)) => OperatorArg::Ident(s.clone()),
                            Some(TokenKind::Int(v)) => OperatorArg::Int(*v),
                            _ => return self.expected("operator argument"),
                        };
                        self.pos += 1;
                        args.push(arg);
                        if self.eat(&TokenKind::RParen) {
                            break;
                        }
                        self.expect(TokenKind::Comma)?;
                    }
                }
                return Ok(StatementKind::Generate {
                    source,
                    op: OperatorCall { name, args },
                });
            }
            if self.eat_keyword(Keyword::Transform) {
                let mut outputs = Vec::new();
                loop {
                    let expr = self.expr()?;
                    self.expect(TokenKind::Colon)?;
                    let label = self.ident()?;
                    outputs.push((expr, label));
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                return Ok(StatementKind::Transform { source, outputs });
            }
            return self.expected("`GENERATE` or `TRANSFORM`");
        }
        if self.eat_keyword(Keyword::Filter) {
            let source = self.ident()?;
            self.expect_keyword(Keyword::By)?;
            let predicate = self.expr()?;
            return Ok(StatementKind::Filter { source, predicate });
        }
        if self.eat_keyword(Keyword::Collapse) {
            let source = self.ident()?;
            self.expect_keyword(Keyword::By)?;
            let keep = self.ident_list()?;
            let features = if self.eat_keyword(Keyword::For) {
                self.ident_list()?
            } else {
                Vec::new()
            };
            return Ok(StatementKind::Collapse {
                source,
                keep,
                features,
            });
        }
        self.expected("`STREAM`, `FOREACH`, `FILTER` or `COLLAPSE`")
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.sum()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Lt) => BinaryOp::Lt,
                Some(TokenKind::Le) => BinaryOp::Le,
                Some(TokenKind::Gt) => BinaryOp::Gt,
                Some(TokenKind::Ge) => BinaryOp::Ge,
                Some(TokenKind::EqEq) => BinaryOp::Eq,
                Some(TokenKind::NotEq) => BinaryOp::Ne,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.sum()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn sum(&mut self) -> PResult<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => BinaryOp::Add,
                Some(TokenKind::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(TokenKind::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(*v))
            }
            Some(TokenKind::Float(v)) => {
                self.pos += 1;
                Ok(Expr::Float(*v))
            }
            Some(TokenKind::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Str(s.clone()))
            }
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&TokenKind::Dot)
                    && matches!(self.peek_at(1), Some(TokenKind::Ident(_)))
                {
                    self.pos += 1;
                    let method = self.ident()?;
                    self.expect(TokenKind::LParen)?;
                    let index = self.int()?;
                    self.expect(TokenKind::RParen)?;
                    return Ok(Expr::Method {
                        target: name.clone(),
                        method,
                        index,
                    });
                }
                Ok(Expr::Ident(name.clone()))
            }
            Some(TokenKind::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            _ => self.expected("expression"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum NameKind {
    Constant,
    Stream,
    Feature,
}

fn define<'a>(
    names: &mut HashMap<&'a str, NameKind>,
    name: &'a str,
    kind: NameKind,
    span: Span,
    diags: &mut Vec<Diagnostic>,
) {
    if names.insert(name, kind).is_some() {
        diags.push(Diagnostic::error(
            span.line,
            span.col,
            format!("`{name}` is defined more than once"),
        ));
    }
}

fn check_structure(program: &SalProgram) -> Result<(), SalError> {
    let mut names: HashMap<&str, NameKind> = HashMap::new();
    let mut diags = Vec::new();
    for c in &program.preamble {
        define(&mut names, &c.name, NameKind::Constant, c.span, &mut diags);
    }
    for c in &program.connections {
        define(&mut names, &c.name, NameKind::Stream, c.span, &mut diags);
    }
    for p in &program.partitions {
        if !program.connections.iter().any(|c| c.name == p.stream) {
            diags.push(Diagnostic::error(
                p.span.line,
                p.span.col,
                format!(
                    "PARTITION names `{}`, which is not a connection stream",
                    p.stream
                ),
            ));
        }
    }
    if program.connections.is_empty() {
        if let Some(first) = program.pipeline.first() {
            diags.push(Diagnostic::error(
                first.span.line,
                first.span.col,
                "pipeline statement before any connection statement",
            ));
        }
    }
    for stmt in &program.pipeline {
        let source = stmt.source();
        let span = stmt.span;
        match names.get(source) {
            None => diags.push(Diagnostic::error(
                span.line,
                span.col,
                format!("in `{}`: stream `{source}` is not defined", stmt.target),
            )),
            Some(NameKind::Feature) => diags.push(Diagnostic::error(
                span.line,
                span.col,
                format!(
                    "in `{}`: `{source}` is a feature, not a stream",
                    stmt.target
                ),
            )),
            Some(NameKind::Constant) => diags.push(Diagnostic::error(
                span.line,
                span.col,
                format!(
                    "in `{}`: `{source}` is a constant, not a stream",
                    stmt.target
                ),
            )),
            Some(NameKind::Stream) => {}
        }
        let kind = if stmt.defines_stream() {
            NameKind::Stream
        } else {
            NameKind::Feature
        };
        define(&mut names, &stmt.target, kind, span, &mut diags);
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(SalError::Semantic(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC_PROGRAM: &str = r#"//Preamble Statements
WindowSize = 1000;

// Connection Statements
Netflows = VastStream("localhost", 9999);

// Partition Statements
PARTITION Netflows By SourceIp, DestIp;
HASH SourceIp WITH IpHashFunction;
HASH DestIp WITH IpHashFunction;

// Pipeline Statements
VertsByDest = STREAM Netflows BY DestIp;
Feature1 = FOREACH VertsByDest GENERATE ave(SrcTotalBytes);
Filtered = FILTER VertsByDest BY Feature1 > 1000
"#;

    #[test]
    fn basic_program_shape() {
        let p = parse_source(BASIC_PROGRAM).unwrap();
        assert_eq!(p.preamble.len(), 1);
        assert_eq!(p.constant("WindowSize"), Some(1000));
        assert_eq!(p.connections.len(), 1);
        assert_eq!(p.connections[0].source_kind, "VastStream");
        assert_eq!(p.connections[0].host, "localhost");
        assert_eq!(p.connections[0].port, 9999);
        assert_eq!(p.partitions.len(), 1);
        assert_eq!(p.partitions[0].keys, vec!["SourceIp", "DestIp"]);
        assert_eq!(p.hashes.len(), 2);
        assert_eq!(p.pipeline.len(), 3);
        assert_eq!(
            p.pipeline[2].kind,
            StatementKind::Filter {
                source: "VertsByDest".into(),
                predicate: Expr::binary(
                    BinaryOp::Gt,
                    Expr::Ident("Feature1".into()),
                    Expr::Int(1000)
                ),
            }
        );
    }

    #[test]
    fn undefined_source_stream() {
        let err = parse_source("X = FOREACH Y GENERATE ave(SrcTotalBytes);").unwrap_err();
        assert!(err.is_semantic());
        assert!(err
            .diagnostics()
            .iter()
            .any(|d| d.message.contains("`Y` is not defined")));
    }

    #[test]
    fn section_order_enforced() {
        let src = "N = V(\"h\", 1);\nW = 10;";
        let err = parse_source(src).unwrap_err();
        assert!(matches!(err, SalError::Syntax(_)));
        assert_eq!(err.diagnostics()[0].line, 2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let src = "N = V(\"h\", 1);\nA = STREAM N BY x;\nA = STREAM N BY y;";
        let err = parse_source(src).unwrap_err();
        assert!(err.diagnostics()[0].message.contains("more than once"));
    }

    #[test]
    fn feature_is_not_a_stream() {
        let src = "N = V(\"h\", 1);\nA = STREAM N BY x;\nF = FOREACH A GENERATE ave(y);\nB = STREAM F BY x;";
        let err = parse_source(src).unwrap_err();
        assert!(err.diagnostics()[0].message.contains("is a feature"));
    }

    #[test]
    fn missing_semicolon_on_same_line_is_an_error() {
        let src = "W = 1 X = 2;";
        let err = parse_source(src).unwrap_err();
        assert!(err.diagnostics()[0].message.contains("expected `;`"));
    }

    #[test]
    fn expected_token_diagnostics() {
        let err = parse_source("A = STREAM N x;").unwrap_err();
        assert_eq!(
            err.diagnostics()[0].message,
            "expected `BY`, found identifier `x`"
        );
        let err = parse_source("A = FILTER N BY ;").unwrap_err();
        assert!(err.diagnostics()[0]
            .message
            .starts_with("expected expression"));
    }

    #[test]
    fn precedence_and_associativity() {
        let src = "N = V(\"h\", 1);\nA = FILTER N BY 1 - 2 - 3 * 4 > -x;";
        let p = parse_source(src).unwrap();
        let StatementKind::Filter { predicate, .. } = &p.pipeline[0].kind else {
            panic!()
        };
        let expected = Expr::binary(
            BinaryOp::Gt,
            Expr::binary(
                BinaryOp::Sub,
                Expr::binary(BinaryOp::Sub, Expr::Int(1), Expr::Int(2)),
                Expr::binary(BinaryOp::Mul, Expr::Int(3), Expr::Int(4)),
            ),
            Expr::Neg(Box::new(Expr::Ident("x".into()))),
        );
        assert_eq!(predicate, &expected);
    }

    #[test]
    fn transform_and_collapse() {
        let src = r#"N = V("h", 1);
S = STREAM N BY DestIp, SourceIp;
T = FOREACH S TRANSFORM
      (TimeSeconds - TimeSeconds.prev(1)) : TimeDiff, SrcTotalBytes * 2 : Twice
D = COLLAPSE T BY DestIp FOR a,
                             b;
"#;
        let p = parse_source(src).unwrap();
        let StatementKind::Transform { outputs, .. } = &p.pipeline[1].kind else {
            panic!()
        };
        assert_eq!(outputs.len(), 2);
        assert_eq!(outputs[0].1, "TimeDiff");
        assert_eq!(
            outputs[0].0,
            Expr::binary(
                BinaryOp::Sub,
                Expr::Ident("TimeSeconds".into()),
                Expr::Method {
                    target: "TimeSeconds".into(),
                    method: "prev".into(),
                    index: 1
                }
            )
        );
        assert_eq!(
            p.pipeline[2].kind,
            StatementKind::Collapse {
                source: "T".into(),
                keep: vec!["DestIp".into()],
                features: vec!["a".into(), "b".into()],
            }
        );
    }
}
