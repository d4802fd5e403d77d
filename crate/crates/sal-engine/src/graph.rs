//! Operator graph compiled from a validated program.

use std::fmt;

use sal_ast::{
    CollapseResidual, Diagnostic, FeatureId, OpKind, Operator, StreamId, TypedExpr, TypedProgram,
    TypedStatement,
};

/// Estimator kept per key of a keyed stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SketchKind {
    /// Shared by `sum`, `ave` and `var` over the same column and window.
    SumVar {
        window: u64,
    },
    TopK {
        window: u64,
        basic: u64,
        k: usize,
    },
    Median {
        window: u64,
        basic: u64,
    },
    Distinct {
        window: u64,
        basic: u64,
    },
}

impl SketchKind {
    fn of(op: &Operator) -> SketchKind {
        match op.kind {
            OpKind::Ave | OpKind::Sum | OpKind::Var => SketchKind::SumVar { window: op.window },
            OpKind::TopK => SketchKind::TopK {
                window: op.window,
                basic: op.basic_window,
                k: op.k,
            },
            OpKind::Median => SketchKind::Median {
                window: op.window,
                basic: op.basic_window,
            },
            OpKind::CountDistinct => SketchKind::Distinct {
                window: op.window,
                basic: op.basic_window,
            },
        }
    }
}

/// One estimator in a stream's per-key state: its kind and input column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub arg: usize,
}

/// Per-key state layout of one keyed stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamLayout {
    pub sketches: Vec<SketchSpec>,
    /// (column, depth) of every history buffer.
    pub histories: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// `STREAM BY`: re-keys the source stream.
    KeyedDemux {
        target: StreamId,
        source: StreamId,
        key_columns: Vec<usize>,
    },
    /// `FOREACH GENERATE` over a keyed stream.
    FeatureGen {
        feature: FeatureId,
        source: StreamId,
        op: Operator,
        arg: usize,
        /// Index into the source stream's sketches.
        sketch: usize,
        /// Whether this node feeds the sketch (the first user does).
        feeds: bool,
    },
    FilterNode {
        target: StreamId,
        source: StreamId,
        predicate: TypedExpr,
    },
    TransformNode {
        target: StreamId,
        source: StreamId,
        outputs: Vec<TypedExpr>,
        /// First history buffer of this node in the source layout.
        history_base: usize,
        /// Source column of each buffer, with its depth.
        history: Vec<(usize, usize)>,
    },
    /// `COLLAPSE BY`: maintains the map feature of the target stream.
    Project {
        target: StreamId,
        source: StreamId,
        keep: Vec<usize>,
        drop: Vec<usize>,
        residual: CollapseResidual,
        /// Feature-map slot holding the map feature.
        map_slot: usize,
    },
    /// `FOREACH GENERATE` over a collapsed stream: a statistic over the
    /// current map values.
    CollapsedConsumer {
        feature: FeatureId,
        source: StreamId,
        op: Operator,
        /// Column of the collapsed stream.
        arg: usize,
        map_slot: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub statement: usize,
    pub name: String,
    pub kind: NodeKind,
    /// Root column whose value decides which shard runs this node;
    /// `None` for stateless nodes, which every shard runs.
    pub owner: Option<usize>,
}

impl GraphNode {
    pub fn label(&self) -> &'static str {
        match self.kind {
            NodeKind::KeyedDemux { .. } => "KeyedDemux",
            NodeKind::FeatureGen { .. } => "FeatureGen",
            NodeKind::FilterNode { .. } => "FilterNode",
            NodeKind::TransformNode { .. } => "TransformNode",
            NodeKind::Project { .. } => "Project",
            NodeKind::CollapsedConsumer { .. } => "CollapsedConsumer",
        }
    }
}

/// Where a feature's row cell comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    /// Root columns forming the feature's key; `None` if some key field
    /// is not a root column (the cell is then always empty).
    pub key_columns: Option<Vec<usize>>,
    pub owner: Option<usize>,
}

/// Compiled program: nodes in statement order plus state layouts.
#[derive(Debug, Clone)]
pub struct DataflowGraph {
    pub program: TypedProgram,
    pub nodes: Vec<GraphNode>,
    /// Per-key state layout of each stream, indexed by stream id.
    pub layouts: Vec<StreamLayout>,
    pub feature_columns: Vec<FeatureColumn>,
    /// Feature-map slot names: features first, then collapsed streams.
    pub slot_names: Vec<String>,
    pub warnings: Vec<Diagnostic>,
}

/// Build the operator graph: one node per pipeline statement.
pub fn compile(program: TypedProgram) -> DataflowGraph {
    let root = &program.streams[program.root];
    let root_col = |name: &str| root.column_index(name);
    let owner_of = |s: StreamId| program.streams[s].owner.as_deref().and_then(root_col);

    let mut layouts = vec![StreamLayout::default(); program.streams.len()];
    let mut slot_names: Vec<String> = program.features.iter().map(|f| f.name.clone()).collect();
    let mut nodes = Vec::with_capacity(program.statements.len());

    for (i, stmt) in program.statements.iter().enumerate() {
        let name = program.program.pipeline[i].target.clone();
        let (kind, owner) = match stmt {
            TypedStatement::StreamBy {
                target,
                source,
                key_columns,
            } => (
                NodeKind::KeyedDemux {
                    target: *target,
                    source: *source,
                    key_columns: key_columns.clone(),
                },
                None,
            ),
            TypedStatement::Generate {
                feature,
                source,
                op,
                arg,
            } if program.streams[*source].collapsed => {
                let map_slot = collapse_slot(&program, &slot_names, *source);
                (
                    NodeKind::CollapsedConsumer {
                        feature: *feature,
                        source: *source,
                        op: *op,
                        arg: *arg,
                        map_slot,
                    },
                    owner_of(*source),
                )
            }
            TypedStatement::Generate {
                feature,
                source,
                op,
                arg,
            } => {
                let spec = SketchSpec {
                    kind: SketchKind::of(op),
                    arg: *arg,
                };
                let layout = &mut layouts[*source];
                let (sketch, feeds) = match layout.sketches.iter().position(|s| *s == spec) {
                    Some(p) => (p, false),
                    None => {
                        layout.sketches.push(spec);
                        (layout.sketches.len() - 1, true)
                    }
                };
                (
                    NodeKind::FeatureGen {
                        feature: *feature,
                        source: *source,
                        op: *op,
                        arg: *arg,
                        sketch,
                        feeds,
                    },
                    owner_of(*source),
                )
            }
            TypedStatement::Filter {
                target,
                source,
                predicate,
            } => {
                let owner = if predicate.reads_features() {
                    program.streams[*target]
                        .gated_by
                        .as_deref()
                        .and_then(root_col)
                } else {
                    None
                };
                (
                    NodeKind::FilterNode {
                        target: *target,
                        source: *source,
                        predicate: predicate.clone(),
                    },
                    owner,
                )
            }
            TypedStatement::Transform {
                target,
                source,
                outputs,
                history,
            } => {
                let layout = &mut layouts[*source];
                let history_base = layout.histories.len();
                layout.histories.extend(history.iter().copied());
                (
                    NodeKind::TransformNode {
                        target: *target,
                        source: *source,
                        outputs: outputs.clone(),
                        history_base,
                        history: history.clone(),
                    },
                    owner_of(*source),
                )
            }
            TypedStatement::Collapse {
                target,
                source,
                keep,
                drop,
                residual,
                ..
            } => {
                slot_names.push(program.streams[*target].name.clone());
                (
                    NodeKind::Project {
                        target: *target,
                        source: *source,
                        keep: keep.clone(),
                        drop: drop.clone(),
                        residual: residual.clone(),
                        map_slot: slot_names.len() - 1,
                    },
                    owner_of(*target),
                )
            }
        };
        nodes.push(GraphNode {
            statement: i,
            name,
            kind,
            owner,
        });
    }

    let feature_columns = program
        .features
        .iter()
        .map(|f| FeatureColumn {
            name: f.name.clone(),
            key_columns: f.keys.iter().map(|k| root_col(k)).collect(),
            owner: f.owner.as_deref().and_then(root_col),
        })
        .collect();

    let mut warnings = program.warnings.clone();
    if nodes.is_empty() {
        warnings.push(Diagnostic::warning(
            1,
            1,
            "program has no pipeline statements; nothing will be computed",
        ));
    }

    DataflowGraph {
        program,
        nodes,
        layouts,
        feature_columns,
        slot_names,
        warnings,
    }
}

fn collapse_slot(program: &TypedProgram, slot_names: &[String], stream: StreamId) -> usize {
    let name = &program.streams[stream].name;
    slot_names
        .iter()
        .rposition(|n| n == name)
        .expect("collapse precedes its consumers")
}

impl DataflowGraph {
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.feature_columns.iter().map(|c| c.name.as_str())
    }

    pub fn count(&self, label: &str) -> usize {
        self.nodes.iter().filter(|n| n.label() == label).count()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl fmt::Display for DataflowGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let streams = &self.program.streams;
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            match &node.kind {
                NodeKind::KeyedDemux { target, .. } => {
                    write!(f, "KeyedDemux({})", streams[*target].keys.join(", "))?
                }
                NodeKind::FeatureGen {
                    feature,
                    source,
                    op,
                    arg,
                    ..
                }
                | NodeKind::CollapsedConsumer {
                    feature,
                    source,
                    op,
                    arg,
                    ..
                } => write!(
                    f,
                    "{}({} {}, name {})",
                    node.label(),
                    op.kind.name(),
                    streams[*source].columns[*arg].name,
                    self.program.features[*feature].name
                )?,
                NodeKind::FilterNode { target, .. }
                | NodeKind::TransformNode { target, .. }
                | NodeKind::Project { target, .. } => {
                    write!(f, "{}({})", node.label(), streams[*target].name)?
                }
            }
        }
        Ok(())
    }
}
