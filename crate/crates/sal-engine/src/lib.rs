//! Executes validated SAL programs.
//!
//! [`compile`] turns a [`sal_ast::TypedProgram`] into a [`DataflowGraph`]
//! with one node per pipeline statement. An [`Engine`] owns the graph's
//! runtime state: per-key sketches and history buffers of every keyed
//! stream, and the shared [`FeatureMap`] that features are written to.
//! Tuples are processed one at a time in statement order; each tuple yields
//! one output row of feature cells.

mod engine;
mod error;
mod eval;
mod feature_map;
mod graph;
mod output;
mod tuple;

pub use engine::{
    collapse_update, collapsed_statistic, Cell, Engine, EngineConfig, EngineMetrics, Placement,
    Shard, Trace,
};
pub use error::{EvalError, TupleError};
pub use eval::{build_key, evaluate_expression, key_of, Scalar};
pub use feature_map::{Feature, FeatureMap, MapFeature, DEFAULT_MAP_CAPACITY};
pub use graph::{
    compile, DataflowGraph, FeatureColumn, GraphNode, NodeKind, SketchKind, SketchSpec,
    StreamLayout,
};
pub use output::{csv_header, format_row, Mode};
pub use tuple::{parse_labeled_row, parse_row, Label, NetflowTuple, Row, Value, LABEL_COLUMN};
