//! Untyped syntax tree produced by the parser.

/// Source position of a statement or constant.
///
/// Spans are ignored by structural equality so that a pretty-printed program
/// re-parses to an AST equal to the original.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SalProgram {
    pub preamble: Vec<Constant>,
    pub connections: Vec<Connection>,
    pub partitions: Vec<Partition>,
    pub hashes: Vec<HashSpec>,
    pub pipeline: Vec<PipelineStatement>,
}

impl SalProgram {
    pub fn constant(&self, name: &str) -> Option<i64> {
        self.preamble
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.value)
    }
}

/// `Name = 1000;`
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub name: String,
    pub value: i64,
    pub span: Span,
}

/// `Netflows = VastStream("localhost", 9999);`
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub name: String,
    pub source_kind: String,
    pub host: String,
    pub port: i64,
    pub span: Span,
}

/// `PARTITION Netflows BY SourceIp, DestIp;`
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub stream: String,
    pub keys: Vec<String>,
    pub span: Span,
}

/// `HASH SourceIp WITH IpHashFunction;`
#[derive(Debug, Clone, PartialEq)]
pub struct HashSpec {
    pub field: String,
    pub function: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStatement {
    pub target: String,
    pub kind: StatementKind,
    pub span: Span,
}

impl PipelineStatement {
    pub fn source(&self) -> &str {
        match &self.kind {
            StatementKind::StreamBy { source, .. }
            | StatementKind::Generate { source, .. }
            | StatementKind::Filter { source, .. }
            | StatementKind::Transform { source, .. }
            | StatementKind::Collapse { source, .. } => source,
        }
    }

    /// Whether the target names a stream (as opposed to a feature).
    pub fn defines_stream(&self) -> bool {
        !matches!(self.kind, StatementKind::Generate { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementKind {
    /// `T = STREAM S BY k1, k2;`
    StreamBy { source: String, keys: Vec<String> },
    /// `F = FOREACH S GENERATE op(args);`
    Generate { source: String, op: OperatorCall },
    /// `T = FILTER S BY expr;`
    Filter { source: String, predicate: Expr },
    /// `T = FOREACH S TRANSFORM expr : Label, ...;`
    Transform {
        source: String,
        outputs: Vec<(Expr, String)>,
    },
    /// `T = COLLAPSE S BY k1 FOR f1, f2;`
    Collapse {
        source: String,
        keep: Vec<String>,
        features: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCall {
    pub name: String,
    pub args: Vec<OperatorArg>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorArg {
    Ident(String),
    Int(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge
            | BinaryOp::Eq
            | BinaryOp::Ne => 1,
            BinaryOp::Add | BinaryOp::Sub => 2,
            BinaryOp::Mul | BinaryOp::Div => 3,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Str(String),
    /// A tuple field or a feature name; resolved during validation.
    Ident(String),
    /// `name.method(index)`, e.g. `top2.value(0)` or `TimeSeconds.prev(1)`.
    Method {
        target: String,
        method: String,
        index: i64,
    },
    Neg(Box<Expr>),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }
}
