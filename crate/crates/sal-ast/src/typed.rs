//! Resolved program: every name bound to a stream, column or feature index.

use std::collections::HashMap;

use crate::ast::{BinaryOp, SalProgram};
use crate::diag::Diagnostic;
use crate::schema::{Column, FieldType};

pub type StreamId = usize;
pub type FeatureId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Ave,
    Sum,
    Var,
    TopK,
    Median,
    CountDistinct,
}

impl OpKind {
    pub fn lookup(name: &str) -> Option<OpKind> {
        Some(match name {
            "ave" => OpKind::Ave,
            "sum" => OpKind::Sum,
            "var" => OpKind::Var,
            "topk" => OpKind::TopK,
            "median" => OpKind::Median,
            "countdistinct" => OpKind::CountDistinct,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Ave => "ave",
            OpKind::Sum => "sum",
            OpKind::Var => "var",
            OpKind::TopK => "topk",
            OpKind::Median => "median",
            OpKind::CountDistinct => "countdistinct",
        }
    }

    /// Operators whose input must be numeric.
    pub fn needs_numeric(self) -> bool {
        matches!(
            self,
            OpKind::Ave | OpKind::Sum | OpKind::Var | OpKind::Median
        )
    }
}

/// A resolved operator with its effective window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operator {
    pub kind: OpKind,
    /// Sliding-window length in items.
    pub window: u64,
    /// Basic-window length in items (block-expiry sketches).
    pub basic_window: u64,
    /// Entries reported by `topk`; zero for other operators.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamInfo {
    pub name: String,
    /// Pipeline statement defining the stream; `None` for connection streams.
    pub statement: Option<usize>,
    pub columns: Vec<Column>,
    /// Key fields in declaration order; empty for unkeyed streams.
    pub keys: Vec<String>,
    /// Column indices of `keys`.
    pub key_columns: Vec<usize>,
    /// Partition field whose hash decides which node and worker holds the
    /// per-key state of this stream.
    pub owner: Option<String>,
    /// Partition field owning the state that decides whether a tuple is a
    /// member of this stream (filters on features, transforms, collapses).
    pub gated_by: Option<String>,
    pub collapsed: bool,
}

impl StreamInfo {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureInfo {
    pub name: String,
    pub statement: usize,
    pub source: StreamId,
    pub op: Operator,
    /// Key fields of the stream the feature is generated on.
    pub keys: Vec<String>,
    pub owner: Option<String>,
    /// Generated over a collapsed stream (computed from a map feature).
    pub collapsed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Num,
    Bool,
    Str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypedExpr {
    Num(f64),
    Str(String),
    Column {
        index: usize,
        ty: FieldType,
    },
    /// Value of a numeric column `back` items earlier for the same key.
    Prev {
        column: usize,
        back: usize,
    },
    /// Scalar feature read at the key formed from `key_columns`.
    Feature {
        id: FeatureId,
        key_columns: Vec<usize>,
    },
    /// `value(index)` of a topk feature.
    TopKValue {
        id: FeatureId,
        index: usize,
        key_columns: Vec<usize>,
    },
    Neg(Box<TypedExpr>),
    Binary {
        op: BinaryOp,
        lhs: Box<TypedExpr>,
        rhs: Box<TypedExpr>,
        ty: ExprType,
    },
}

impl TypedExpr {
    pub fn ty(&self) -> ExprType {
        match self {
            TypedExpr::Str(_) => ExprType::Str,
            TypedExpr::Column { ty, .. } if !ty.is_numeric() => ExprType::Str,
            TypedExpr::Binary { ty, .. } => *ty,
            _ => ExprType::Num,
        }
    }

    /// Visit every node, parents first.
    pub fn walk(&self, f: &mut impl FnMut(&TypedExpr)) {
        f(self);
        match self {
            TypedExpr::Neg(inner) => inner.walk(f),
            TypedExpr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            _ => {}
        }
    }

    pub fn reads_features(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, TypedExpr::Feature { .. } | TypedExpr::TopKValue { .. }) {
                found = true;
            }
        });
        found
    }

    /// Largest `prev` distance used, 0 if none.
    pub fn max_prev(&self) -> usize {
        let mut max = 0;
        self.walk(&mut |e| {
            if let TypedExpr::Prev { back, .. } = e {
                max = max.max(*back);
            }
        });
        max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CollapseResidual {
    /// `FOR f1, f2`: the live values of these features form r(t).
    Features(Vec<FeatureId>),
    /// No `FOR` clause: the non-key numeric columns of the source form r(t).
    Columns(Vec<usize>),
}

impl CollapseResidual {
    pub fn len(&self) -> usize {
        match self {
            CollapseResidual::Features(v) => v.len(),
            CollapseResidual::Columns(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypedStatement {
    StreamBy {
        target: StreamId,
        source: StreamId,
        key_columns: Vec<usize>,
    },
    Generate {
        feature: FeatureId,
        source: StreamId,
        op: Operator,
        /// Column of the source stream fed to the operator.
        arg: usize,
    },
    Filter {
        target: StreamId,
        source: StreamId,
        predicate: TypedExpr,
    },
    Transform {
        target: StreamId,
        source: StreamId,
        outputs: Vec<TypedExpr>,
        /// Source columns that need a history, with the depth required.
        history: Vec<(usize, usize)>,
    },
    Collapse {
        target: StreamId,
        source: StreamId,
        /// Source columns forming k+ (kept keys).
        keep: Vec<usize>,
        /// Source columns forming k- (dropped keys).
        drop: Vec<usize>,
        residual: CollapseResidual,
        /// Column names of r(t), in order.
        residual_names: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedProgram {
    pub program: SalProgram,
    /// The connection stream tuples are fed into.
    pub root: StreamId,
    pub streams: Vec<StreamInfo>,
    pub features: Vec<FeatureInfo>,
    /// One entry per pipeline statement, in program order.
    pub statements: Vec<TypedStatement>,
    /// Partition key fields of the root stream and their hash function names.
    pub partition: Vec<(String, String)>,
    pub window_size: u64,
    pub warnings: Vec<Diagnostic>,
    /// False when some state is read by statements owned by a different
    /// partition field, so sharded execution may differ from a sequential run.
    pub distribution_safe: bool,
    pub(crate) stream_index: HashMap<String, StreamId>,
    pub(crate) feature_index: HashMap<String, FeatureId>,
}

impl TypedProgram {
    pub fn stream(&self, name: &str) -> Option<&StreamInfo> {
        self.stream_index.get(name).map(|&i| &self.streams[i])
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureInfo> {
        self.feature_index.get(name).map(|&i| &self.features[i])
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}
