//! Semantic validation: name resolution, key-set propagation, operator
//! signatures and expression typing.

use std::collections::{HashMap, HashSet};

use crate::ast::*;
use crate::diag::{Diagnostic, SalError};
use crate::schema::{Column, FieldType, TupleSchema};
use crate::typed::*;

/// Window length used when the preamble does not bind `WindowSize`.
pub const DEFAULT_WINDOW_SIZE: u64 = 1000;

/// Connection kinds with a compiled-in tuple schema.
pub const SOURCE_KINDS: [&str; 1] = ["VastStream"];

/// Hash function names accepted by `HASH ... WITH`.
pub const HASH_FUNCTIONS: [&str; 2] = ["IpHashFunction", "StringHashFunction"];

const UNSUPPORTED_OPERATORS: [&str; 3] = ["max", "min", "autocorrelation"];

/// Resolve `program` against the tuple schema of its connection streams.
pub fn validate(program: &SalProgram, schema: &TupleSchema) -> Result<TypedProgram, SalError> {
    let mut v = Validator {
        program,
        schema,
        errors: Vec::new(),
        warnings: Vec::new(),
        streams: Vec::new(),
        stream_index: HashMap::new(),
        stream_root: Vec::new(),
        features: Vec::new(),
        feature_index: HashMap::new(),
        partitions: HashMap::new(),
        window_size: DEFAULT_WINDOW_SIZE,
        distribution_safe: true,
    };
    v.header();
    let mut statements = Vec::with_capacity(program.pipeline.len());
    for (i, stmt) in program.pipeline.iter().enumerate() {
        match v.statement(i, stmt) {
            Ok(s) => statements.push(s),
            Err(d) => {
                v.errors.push(d);
                // keep later statements resolvable with a placeholder
                v.placeholder(i, stmt);
            }
        }
    }
    if !v.errors.is_empty() {
        return Err(SalError::Semantic(v.errors));
    }
    if program.pipeline.is_empty() {
        v.warnings.push(Diagnostic::warning(
            1,
            1,
            "program has no pipeline statements",
        ));
    }
    let root = v.stream_index[&program.connections[0].name];
    let partition = v.partitions.remove(&root).unwrap_or_default();
    Ok(TypedProgram {
        program: program.clone(),
        root,
        streams: v.streams,
        features: v.features,
        statements,
        partition,
        window_size: v.window_size,
        warnings: v.warnings,
        distribution_safe: v.distribution_safe,
        stream_index: v.stream_index,
        feature_index: v.feature_index,
    })
}

struct Validator<'a> {
    program: &'a SalProgram,
    schema: &'a TupleSchema,
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
    streams: Vec<StreamInfo>,
    stream_index: HashMap<String, StreamId>,
    /// Connection stream each stream descends from.
    stream_root: Vec<StreamId>,
    features: Vec<FeatureInfo>,
    feature_index: HashMap<String, FeatureId>,
    /// Partition fields and hash functions per connection stream.
    partitions: HashMap<StreamId, Vec<(String, String)>>,
    window_size: u64,
    distribution_safe: bool,
}

/// Where an expression appears; decides whether `prev` is legal.
#[derive(Clone, Copy, PartialEq, Eq)]
enum ExprContext {
    Filter,
    Transform,
}

fn err_at(span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(span.line, span.col, msg)
}

impl<'a> Validator<'a> {
    fn header(&mut self) {
        let p = self.program;
        if let Some(c) = p.preamble.iter().find(|c| c.name == "WindowSize") {
            if c.value < 1 {
                self.errors
                    .push(err_at(c.span, "WindowSize must be a positive integer"));
            } else {
                self.window_size = c.value as u64;
            }
        }
        for c in &p.connections {
            if !SOURCE_KINDS.contains(&c.source_kind.as_str()) {
                self.errors.push(err_at(
                    c.span,
                    format!(
                        "unknown connection kind `{}` (known: {})",
                        c.source_kind,
                        SOURCE_KINDS.join(", ")
                    ),
                ));
            }
            if !(0..=65535).contains(&c.port) {
                self.errors
                    .push(err_at(c.span, format!("port {} out of range", c.port)));
            }
            let id = self.streams.len();
            self.streams.push(StreamInfo {
                name: c.name.clone(),
                statement: None,
                columns: self.schema.columns.clone(),
                keys: Vec::new(),
                key_columns: Vec::new(),
                owner: None,
                gated_by: None,
                collapsed: false,
            });
            self.stream_index.insert(c.name.clone(), id);
            self.stream_root.push(id);
        }
        if p.connections.is_empty() {
            self.errors.push(Diagnostic::error(
                1,
                1,
                "program has no connection statement",
            ));
        }
        if p.connections.len() > 1 {
            self.warnings.push(Diagnostic::warning(
                p.connections[1].span.line,
                p.connections[1].span.col,
                format!(
                    "only the first connection (`{}`) receives input tuples",
                    p.connections[0].name
                ),
            ));
        }

        for part in &p.partitions {
            let Some(&sid) = self.stream_index.get(part.stream.as_str()) else {
                continue; // reported by the parser
            };
            if self.partitions.contains_key(&sid) {
                self.errors.push(err_at(
                    part.span,
                    format!("stream `{}` is partitioned more than once", part.stream),
                ));
                continue;
            }
            let mut fields = Vec::new();
            for key in &part.keys {
                if self.schema.get(key).is_none() {
                    self.errors.push(err_at(
                        part.span,
                        format!("PARTITION key `{key}` is not a field of `{}`", part.stream),
                    ));
                } else if fields.iter().any(|(f, _)| f == key) {
                    self.errors.push(err_at(
                        part.span,
                        format!("PARTITION key `{key}` listed twice"),
                    ));
                } else {
                    fields.push((key.clone(), HASH_FUNCTIONS[0].to_string()));
                }
            }
            self.partitions.insert(sid, fields);
        }

        let mut hashed = HashSet::new();
        for h in &p.hashes {
            if !HASH_FUNCTIONS.contains(&h.function.as_str()) {
                self.errors.push(err_at(
                    h.span,
                    format!(
                        "unknown hash function `{}` (known: {})",
                        h.function,
                        HASH_FUNCTIONS.join(", ")
                    ),
                ));
                continue;
            }
            if !hashed.insert(h.field.as_str()) {
                self.errors.push(err_at(
                    h.span,
                    format!("HASH for `{}` given more than once", h.field),
                ));
                continue;
            }
            let mut found = false;
            for fields in self.partitions.values_mut() {
                for (f, func) in fields.iter_mut() {
                    if *f == h.field {
                        *func = h.function.clone();
                        found = true;
                    }
                }
            }
            if !found {
                self.errors.push(err_at(
                    h.span,
                    format!("HASH names `{}`, which is not a PARTITION key", h.field),
                ));
            }
        }
    }

    fn add_stream(&mut self, info: StreamInfo, root: StreamId) -> StreamId {
        let id = self.streams.len();
        self.stream_index.insert(info.name.clone(), id);
        self.streams.push(info);
        self.stream_root.push(root);
        id
    }

    /// Register an unkeyed, unusable stand-in for a statement that failed so
    /// that later statements report their own problems rather than cascades.
    fn placeholder(&mut self, index: usize, stmt: &PipelineStatement) {
        if stmt.defines_stream() {
            if !self.stream_index.contains_key(&stmt.target) {
                let root = self
                    .stream_index
                    .get(stmt.source())
                    .map(|&s| self.stream_root[s])
                    .unwrap_or(0);
                self.add_stream(
                    StreamInfo {
                        name: stmt.target.clone(),
                        statement: Some(index),
                        columns: Vec::new(),
                        keys: Vec::new(),
                        key_columns: Vec::new(),
                        owner: None,
                        gated_by: None,
                        collapsed: false,
                    },
                    root,
                );
            }
        } else if !self.feature_index.contains_key(&stmt.target) {
            let id = self.features.len();
            self.features.push(FeatureInfo {
                name: stmt.target.clone(),
                statement: index,
                source: 0,
                op: Operator {
                    kind: OpKind::Ave,
                    window: self.window_size,
                    basic_window: 1,
                    k: 0,
                },
                keys: Vec::new(),
                owner: None,
                collapsed: false,
            });
            self.feature_index.insert(stmt.target.clone(), id);
        }
    }

    fn source(&self, stmt: &PipelineStatement) -> Result<StreamId, Diagnostic> {
        self.stream_index
            .get(stmt.source())
            .copied()
            .ok_or_else(|| {
                err_at(
                    stmt.span,
                    format!(
                        "in `{}`: stream `{}` is not defined",
                        stmt.target,
                        stmt.source()
                    ),
                )
            })
    }

    fn not_collapsed(&self, stmt: &PipelineStatement, sid: StreamId) -> Result<(), Diagnostic> {
        if self.streams[sid].collapsed {
            return Err(err_at(
                stmt.span,
                format!(
                    "in `{}`: collapsed stream `{}` only supports FOREACH ... GENERATE",
                    stmt.target, self.streams[sid].name
                ),
            ));
        }
        Ok(())
    }

    fn require_keyed(&self, stmt: &PipelineStatement, sid: StreamId) -> Result<(), Diagnostic> {
        if self.streams[sid].keys.is_empty() {
            return Err(err_at(
                stmt.span,
                format!(
                    "in `{}`: stream `{}` has no keys; use STREAM ... BY first",
                    stmt.target, self.streams[sid].name
                ),
            ));
        }
        Ok(())
    }

    fn warn_cross_owner(&mut self, stmt: &PipelineStatement, state_owner: &str, owner: &str) {
        self.distribution_safe = false;
        self.warnings.push(Diagnostic::warning(
            stmt.span.line,
            stmt.span.col,
            format!(
                "`{}` is keyed by `{owner}` but depends on state keyed by `{state_owner}`; \
                 partitioned and parallel runs may differ from a single-worker run",
                stmt.target
            ),
        ));
    }

    fn statement(
        &mut self,
        index: usize,
        stmt: &PipelineStatement,
    ) -> Result<TypedStatement, Diagnostic> {
        let source = self.source(stmt)?;
        let root = self.stream_root[source];
        let span = stmt.span;
        let target = &stmt.target;
        match &stmt.kind {
            StatementKind::StreamBy { keys, .. } => {
                self.not_collapsed(stmt, source)?;
                let part = self.partitions.get(&root).cloned().unwrap_or_default();
                let src = &self.streams[source];
                let mut key_columns = Vec::new();
                for (i, key) in keys.iter().enumerate() {
                    if !part.iter().any(|(f, _)| f == key) {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: BY field `{key}` is not a PARTITION key of `{}`",
                                self.streams[root].name
                            ),
                        ));
                    }
                    if keys[..i].contains(key) {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: BY field `{key}` listed twice"),
                        ));
                    }
                    let col = src.column_index(key).ok_or_else(|| {
                        err_at(
                            span,
                            format!("in `{target}`: stream `{}` has no field `{key}`", src.name),
                        )
                    })?;
                    key_columns.push(col);
                }
                let owner = match &src.owner {
                    Some(o) if keys.contains(o) => o.clone(),
                    _ => keys[0].clone(),
                };
                let gated_by = src.gated_by.clone();
                let columns = src.columns.clone();
                if let Some(g) = &gated_by {
                    if *g != owner {
                        let g = g.clone();
                        self.warn_cross_owner(stmt, &g, &owner);
                    }
                }
                let id = self.add_stream(
                    StreamInfo {
                        name: target.clone(),
                        statement: Some(index),
                        columns,
                        keys: keys.clone(),
                        key_columns: key_columns.clone(),
                        owner: Some(owner),
                        gated_by,
                        collapsed: false,
                    },
                    root,
                );
                Ok(TypedStatement::StreamBy {
                    target: id,
                    source,
                    key_columns,
                })
            }

            StatementKind::Generate { op, .. } => {
                self.require_keyed(stmt, source)?;
                let (operator, arg) = self.operator(stmt, source, op)?;
                let src = &self.streams[source];
                let owner = src.owner.clone();
                if let (Some(g), Some(o)) = (&src.gated_by, &owner) {
                    if g != o {
                        let (g, o) = (g.clone(), o.clone());
                        self.warn_cross_owner(stmt, &g, &o);
                    }
                }
                let src = &self.streams[source];
                let id = self.features.len();
                self.features.push(FeatureInfo {
                    name: target.clone(),
                    statement: index,
                    source,
                    op: operator,
                    keys: src.keys.clone(),
                    owner,
                    collapsed: src.collapsed,
                });
                self.feature_index.insert(target.clone(), id);
                Ok(TypedStatement::Generate {
                    feature: id,
                    source,
                    op: operator,
                    arg,
                })
            }

            StatementKind::Filter { predicate, .. } => {
                self.not_collapsed(stmt, source)?;
                let typed = self.expr(stmt, source, predicate, ExprContext::Filter)?;
                if typed.ty() != ExprType::Bool {
                    return Err(err_at(
                        span,
                        format!("in `{target}`: FILTER condition must be a comparison"),
                    ));
                }
                let src = self.streams[source].clone();
                let gated_by = if typed.reads_features() {
                    src.owner.clone()
                } else {
                    src.gated_by.clone()
                };
                self.check_feature_owners(stmt, &typed, src.owner.as_deref());
                let id = self.add_stream(
                    StreamInfo {
                        name: target.clone(),
                        statement: Some(index),
                        gated_by,
                        ..src
                    },
                    root,
                );
                Ok(TypedStatement::Filter {
                    target: id,
                    source,
                    predicate: typed,
                })
            }

            StatementKind::Transform { outputs, .. } => {
                self.not_collapsed(stmt, source)?;
                self.require_keyed(stmt, source)?;
                let src = self.streams[source].clone();
                let mut typed_outputs = Vec::new();
                let mut history: Vec<(usize, usize)> = Vec::new();
                let mut columns: Vec<Column> = src
                    .key_columns
                    .iter()
                    .map(|&c| src.columns[c].clone())
                    .collect();
                for (expr, label) in outputs {
                    let typed = self.expr(stmt, source, expr, ExprContext::Transform)?;
                    if typed.ty() != ExprType::Num {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: TRANSFORM output `{label}` must be numeric"),
                        ));
                    }
                    if columns.iter().any(|c| c.name == *label) {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: output label `{label}` is already a field"),
                        ));
                    }
                    typed.walk(&mut |e| {
                        if let TypedExpr::Prev { column, back } = e {
                            match history.iter_mut().find(|(c, _)| c == column) {
                                Some(entry) => entry.1 = entry.1.max(*back),
                                None => history.push((*column, *back)),
                            }
                        }
                    });
                    self.check_feature_owners(stmt, &typed, src.owner.as_deref());
                    columns.push(Column {
                        name: label.clone(),
                        ty: FieldType::Float,
                    });
                    typed_outputs.push(typed);
                }
                let key_count = src.keys.len();
                let id = self.add_stream(
                    StreamInfo {
                        name: target.clone(),
                        statement: Some(index),
                        columns,
                        keys: src.keys.clone(),
                        key_columns: (0..key_count).collect(),
                        owner: src.owner.clone(),
                        gated_by: src.owner.clone(),
                        collapsed: false,
                    },
                    root,
                );
                Ok(TypedStatement::Transform {
                    target: id,
                    source,
                    outputs: typed_outputs,
                    history,
                })
            }

            StatementKind::Collapse { keep, features, .. } => {
                self.not_collapsed(stmt, source)?;
                self.require_keyed(stmt, source)?;
                let src = self.streams[source].clone();
                let mut keep_cols = Vec::new();
                for (i, key) in keep.iter().enumerate() {
                    if !src.keys.contains(key) {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: cannot keep `{key}`; key set of `{}` is {{{}}}",
                                src.name,
                                src.keys.join(", ")
                            ),
                        ));
                    }
                    if keep[..i].contains(key) {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: key `{key}` listed twice"),
                        ));
                    }
                    keep_cols.push(src.column_index(key).expect("key column exists"));
                }
                let drop_cols: Vec<usize> = src
                    .keys
                    .iter()
                    .filter(|k| !keep.contains(k))
                    .map(|k| src.column_index(k).expect("key column exists"))
                    .collect();

                let mut residual_names = Vec::new();
                let residual = if features.is_empty() {
                    let cols: Vec<usize> = (0..src.columns.len())
                        .filter(|c| !src.key_columns.contains(c) && src.columns[*c].ty.is_numeric())
                        .collect();
                    if cols.is_empty() {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: `{}` has no numeric non-key fields to collapse",
                                src.name
                            ),
                        ));
                    }
                    residual_names.extend(cols.iter().map(|&c| src.columns[c].name.clone()));
                    CollapseResidual::Columns(cols)
                } else {
                    let mut ids = Vec::new();
                    for name in features {
                        let id = self.lookup_feature(stmt, name).ok_or_else(|| {
                            err_at(span, format!("in `{target}`: unknown feature `{name}`"))
                        })?;
                        let f = &self.features[id];
                        if !same_keys(&f.keys, &src.keys) {
                            return Err(err_at(
                                span,
                                format!(
                                    "in `{target}`: feature `{}` is keyed by {{{}}}, not {{{}}}",
                                    f.name,
                                    f.keys.join(", "),
                                    src.keys.join(", ")
                                ),
                            ));
                        }
                        if f.op.kind == OpKind::TopK {
                            return Err(err_at(
                                span,
                                format!(
                                    "in `{target}`: topk feature `{}` cannot be collapsed",
                                    f.name
                                ),
                            ));
                        }
                        let fname = f.name.clone();
                        if f.owner != src.owner {
                            if let (Some(g), Some(o)) = (f.owner.clone(), src.owner.clone()) {
                                self.warn_cross_owner(stmt, &g, &o);
                            }
                        }
                        residual_names.push(fname);
                        ids.push(id);
                    }
                    CollapseResidual::Features(ids)
                };

                let src_owner = src.owner.clone().expect("keyed stream has an owner");
                let owner = if keep.contains(&src_owner) {
                    src_owner.clone()
                } else {
                    keep[0].clone()
                };
                if owner != src_owner {
                    self.warn_cross_owner(stmt, &src_owner, &owner);
                }
                let mut columns: Vec<Column> =
                    keep_cols.iter().map(|&c| src.columns[c].clone()).collect();
                columns.extend(residual_names.iter().map(|n| Column {
                    name: n.clone(),
                    ty: FieldType::Float,
                }));
                let id = self.add_stream(
                    StreamInfo {
                        name: target.clone(),
                        statement: Some(index),
                        columns,
                        keys: keep.clone(),
                        key_columns: (0..keep.len()).collect(),
                        owner: Some(owner.clone()),
                        gated_by: Some(owner),
                        collapsed: true,
                    },
                    root,
                );
                Ok(TypedStatement::Collapse {
                    target: id,
                    source,
                    keep: keep_cols,
                    drop: drop_cols,
                    residual,
                    residual_names,
                })
            }
        }
    }

    fn check_feature_owners(
        &mut self,
        stmt: &PipelineStatement,
        expr: &TypedExpr,
        owner: Option<&str>,
    ) {
        let mut owners = Vec::new();
        expr.walk(&mut |e| {
            if let TypedExpr::Feature { id, .. } | TypedExpr::TopKValue { id, .. } = e {
                owners.push(self.features[*id].owner.clone());
            }
        });
        for fo in owners {
            if let (Some(fo), Some(o)) = (fo, owner) {
                if fo != o {
                    self.warn_cross_owner(stmt, &fo, o);
                }
            }
        }
    }

    fn operator(
        &self,
        stmt: &PipelineStatement,
        source: StreamId,
        call: &OperatorCall,
    ) -> Result<(Operator, usize), Diagnostic> {
        let span = stmt.span;
        let target = &stmt.target;
        let Some(kind) = OpKind::lookup(&call.name) else {
            let msg = if UNSUPPORTED_OPERATORS.contains(&call.name.as_str()) {
                format!(
                    "in `{target}`: unsupported operator `{}`: it has no polylogarithmic-space sliding-window algorithm",
                    call.name
                )
            } else {
                format!(
                    "in `{target}`: unknown operator `{}` (expected ave, sum, var, topk, median or countdistinct)",
                    call.name
                )
            };
            return Err(err_at(span, msg));
        };
        let arity = if kind == OpKind::TopK { 4 } else { 1 };
        if call.args.len() != arity {
            let shape = if kind == OpKind::TopK {
                "topk(field, N, b, k)".to_string()
            } else {
                format!("{}(field)", kind.name())
            };
            return Err(err_at(
                span,
                format!(
                    "in `{target}`: `{}` takes {arity} argument(s) as {shape}, got {}",
                    kind.name(),
                    call.args.len()
                ),
            ));
        }
        let OperatorArg::Ident(field) = &call.args[0] else {
            return Err(err_at(
                span,
                format!(
                    "in `{target}`: first argument of `{}` must be a field",
                    kind.name()
                ),
            ));
        };
        let src = &self.streams[source];
        let arg = src.column_index(field).ok_or_else(|| {
            err_at(
                span,
                format!(
                    "in `{target}`: stream `{}` has no field `{field}`",
                    src.name
                ),
            )
        })?;
        if src.collapsed && arg < src.keys.len() {
            return Err(err_at(
                span,
                format!(
                    "in `{target}`: `{field}` is a key of collapsed stream `{}`; expected one of its collapsed values",
                    src.name
                ),
            ));
        }
        if kind.needs_numeric() && !src.columns[arg].ty.is_numeric() {
            return Err(err_at(
                span,
                format!(
                    "in `{target}`: `{}` needs a numeric field, `{field}` is a string",
                    kind.name()
                ),
            ));
        }
        let mut op = Operator {
            kind,
            window: self.window_size,
            basic_window: (self.window_size / 10).max(1),
            k: 0,
        };
        if kind == OpKind::TopK {
            let mut ints = [0i64; 3];
            for (slot, arg) in ints.iter_mut().zip(&call.args[1..]) {
                match arg {
                    OperatorArg::Int(v) => *slot = *v,
                    OperatorArg::Ident(name) => match self.program.constant(name) {
                        Some(v) => *slot = v,
                        None => return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: topk argument `{name}` is not an integer constant"
                            ),
                        )),
                    },
                }
            }
            let [n, b, k] = ints;
            if n < 1 || b < 1 || b > n || k < 1 {
                return Err(err_at(
                    span,
                    format!("in `{target}`: topk needs N >= 1, 1 <= b <= N and k >= 1 (got N={n}, b={b}, k={k})"),
                ));
            }
            op.window = n as u64;
            op.basic_window = b as u64;
            op.k = k as usize;
        }
        Ok((op, arg))
    }

    /// Exact name first; otherwise a unique case-insensitive match, with a
    /// warning.
    fn lookup_feature(&mut self, stmt: &PipelineStatement, name: &str) -> Option<FeatureId> {
        if let Some(&id) = self.feature_index.get(name) {
            return Some(id);
        }
        let mut matches = self
            .features
            .iter()
            .filter(|f| f.name.eq_ignore_ascii_case(name));
        let first = matches.next()?;
        if matches.next().is_some() {
            return None;
        }
        let id = self.feature_index[&first.name];
        let warning = Diagnostic::warning(
            stmt.span.line,
            stmt.span.col,
            format!(
                "in `{}`: `{name}` resolved to feature `{}` ignoring case",
                stmt.target, first.name
            ),
        );
        if !self.warnings.contains(&warning) {
            self.warnings.push(warning);
        }
        Some(id)
    }

    fn feature_key_columns(
        &self,
        stmt: &PipelineStatement,
        source: StreamId,
        id: FeatureId,
    ) -> Result<Vec<usize>, Diagnostic> {
        let f = &self.features[id];
        let src = &self.streams[source];
        if !same_keys(&f.keys, &src.keys) {
            return Err(err_at(
                stmt.span,
                format!(
                    "in `{}`: feature `{}` is keyed by {{{}}} but `{}` is keyed by {{{}}}",
                    stmt.target,
                    f.name,
                    f.keys.join(", "),
                    src.name,
                    src.keys.join(", ")
                ),
            ));
        }
        Ok(f.keys
            .iter()
            .map(|k| src.column_index(k).expect("key column exists"))
            .collect())
    }

    fn expr(
        &mut self,
        stmt: &PipelineStatement,
        source: StreamId,
        expr: &Expr,
        ctx: ExprContext,
    ) -> Result<TypedExpr, Diagnostic> {
        let span = stmt.span;
        let target = &stmt.target;
        Ok(match expr {
            Expr::Int(v) => TypedExpr::Num(*v as f64),
            Expr::Float(v) => TypedExpr::Num(*v),
            Expr::Str(s) => TypedExpr::Str(s.clone()),
            Expr::Ident(name) => {
                if let Some(&id) = self.feature_index.get(name.as_str()) {
                    self.scalar_feature(stmt, source, id)?
                } else if let Some(col) = self.streams[source].column_index(name) {
                    TypedExpr::Column {
                        index: col,
                        ty: self.streams[source].columns[col].ty,
                    }
                } else if let Some(id) = self.lookup_feature(stmt, name) {
                    self.scalar_feature(stmt, source, id)?
                } else {
                    return Err(err_at(
                        span,
                        format!(
                            "in `{target}`: `{name}` is neither a field of `{}` nor a feature defined above",
                            self.streams[source].name
                        ),
                    ));
                }
            }
            Expr::Method {
                target: name,
                method,
                index,
            } => match method.as_str() {
                "value" => {
                    let id = self.lookup_feature(stmt, name).ok_or_else(|| {
                        err_at(span, format!("in `{target}`: unknown feature `{name}`"))
                    })?;
                    let f = &self.features[id];
                    if f.op.kind != OpKind::TopK {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: value(i) applies only to topk features; `{}` is {}",
                                f.name,
                                f.op.kind.name()
                            ),
                        ));
                    }
                    if *index < 0 || *index as usize >= f.op.k {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: value({index}) out of range for `{}` with k = {}",
                                f.name, f.op.k
                            ),
                        ));
                    }
                    let key_columns = self.feature_key_columns(stmt, source, id)?;
                    TypedExpr::TopKValue {
                        id,
                        index: *index as usize,
                        key_columns,
                    }
                }
                "prev" => {
                    if ctx != ExprContext::Transform {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: prev(i) is only allowed inside TRANSFORM"),
                        ));
                    }
                    if *index < 1 {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: prev({index}) needs i >= 1"),
                        ));
                    }
                    let src = &self.streams[source];
                    let col = src.column_index(name).ok_or_else(|| {
                        err_at(
                            span,
                            format!("in `{target}`: stream `{}` has no field `{name}`", src.name),
                        )
                    })?;
                    if !src.columns[col].ty.is_numeric() {
                        return Err(err_at(
                            span,
                            format!("in `{target}`: prev(i) needs a numeric field, `{name}` is a string"),
                        ));
                    }
                    TypedExpr::Prev {
                        column: col,
                        back: *index as usize,
                    }
                }
                other => {
                    return Err(err_at(
                        span,
                        format!("in `{target}`: unknown method `{other}` (expected value or prev)"),
                    ))
                }
            },
            Expr::Neg(inner) => {
                let inner = self.expr(stmt, source, inner, ctx)?;
                if inner.ty() != ExprType::Num {
                    return Err(err_at(
                        span,
                        format!("in `{target}`: unary `-` needs a numeric operand"),
                    ));
                }
                TypedExpr::Neg(Box::new(inner))
            }
            Expr::Binary { op, lhs, rhs } => {
                let lhs = self.expr(stmt, source, lhs, ctx)?;
                let rhs = self.expr(stmt, source, rhs, ctx)?;
                let (lt, rt) = (lhs.ty(), rhs.ty());
                let ty = match op {
                    BinaryOp::Eq | BinaryOp::Ne if lt == rt && lt != ExprType::Bool => {
                        ExprType::Bool
                    }
                    _ if op.is_comparison() && lt == ExprType::Num && rt == ExprType::Num => {
                        ExprType::Bool
                    }
                    _ if !op.is_comparison() && lt == ExprType::Num && rt == ExprType::Num => {
                        ExprType::Num
                    }
                    _ => {
                        return Err(err_at(
                            span,
                            format!(
                                "in `{target}`: operator `{}` cannot combine {} and {}",
                                op.symbol(),
                                type_name(lt),
                                type_name(rt)
                            ),
                        ))
                    }
                };
                TypedExpr::Binary {
                    op: *op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                    ty,
                }
            }
        })
    }

    fn scalar_feature(
        &self,
        stmt: &PipelineStatement,
        source: StreamId,
        id: FeatureId,
    ) -> Result<TypedExpr, Diagnostic> {
        let f = &self.features[id];
        if f.op.kind == OpKind::TopK {
            return Err(err_at(
                stmt.span,
                format!(
                    "in `{}`: topk feature `{}` must be read through value(i)",
                    stmt.target, f.name
                ),
            ));
        }
        let key_columns = self.feature_key_columns(stmt, source, id)?;
        Ok(TypedExpr::Feature { id, key_columns })
    }
}

fn type_name(t: ExprType) -> &'static str {
    match t {
        ExprType::Num => "a number",
        ExprType::Bool => "a condition",
        ExprType::Str => "a string",
    }
}

fn same_keys(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|k| b.contains(k))
}
