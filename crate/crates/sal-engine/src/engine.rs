//! Tuple-at-a-time execution of a compiled graph.

use std::hash::{BuildHasher, BuildHasherDefault};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use rustc_hash::{FxHashMap, FxHasher};
use sal_ast::{CollapseResidual, OpKind, Operator, StreamId};
use sal_sketch::{
    fmix64, fnv1a, BasicWindowTopK, DistinctSketch, PrevBuffer, QuantileSketch, SumVarSketch,
    DEFAULT_EPSILON, DEFAULT_PRECISION,
};

use crate::error::EvalError;
use crate::eval::{build_key, evaluate_expression, key_of, Scalar};
use crate::feature_map::{Feature, FeatureMap, MapFeature, DEFAULT_MAP_CAPACITY};
use crate::graph::{DataflowGraph, NodeKind, SketchKind, SketchSpec, StreamLayout};
use crate::tuple::{Row, Value};

const STRIPES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Error parameter of sum/ave/var and median sketches; 0 keeps exact
    /// state.
    pub epsilon: f64,
    /// HyperLogLog precision for countdistinct.
    pub precision: u8,
    pub hll_seed: u64,
    /// Entry bound of each COLLAPSE map.
    pub map_capacity: usize,
    /// Worker threads used by [`Engine::feed_batch`].
    pub workers: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            precision: DEFAULT_PRECISION,
            hll_seed: 0,
            map_capacity: DEFAULT_MAP_CAPACITY,
            workers: 1,
        }
    }
}

/// Decides which partition-key values this engine instance owns when it is
/// one of several nodes.
pub trait Placement: Send + Sync {
    fn owns(&self, field: &str, value: &str) -> bool;
}

/// One feature cell of an output row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    /// Computed by another shard.
    NotOwned,
    /// Not ready for this tuple's key.
    Empty,
    Value(f64),
}

impl Cell {
    /// Combine partial cells of the same feature from two shards.
    pub fn merge(self, other: Cell) -> Cell {
        match self {
            Cell::NotOwned => other,
            _ => self,
        }
    }
}

/// Counters, summed over all shards of this engine.
#[derive(Debug, Default)]
struct Counters {
    tuples: AtomicU64,
    filtered: AtomicU64,
    not_ready: AtomicU64,
    arithmetic: AtomicU64,
    transform_pending: AtomicU64,
    collapse_pending: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineMetrics {
    pub tuples: u64,
    /// Tuples whose filter predicate was false.
    pub filtered: u64,
    /// Tuples dropped at a filter or transform reading a not-ready feature.
    pub not_ready: u64,
    /// Tuples dropped on division by zero or a non-finite result.
    pub arithmetic: u64,
    /// Transform inputs whose history was not yet deep enough.
    pub transform_pending: u64,
    /// Collapse inputs whose residual features were not ready.
    pub collapse_pending: u64,
}

impl EngineMetrics {
    /// All tuples removed from some stream for a reason other than a
    /// false predicate.
    pub fn drops(&self) -> u64 {
        self.not_ready + self.arithmetic
    }
}

#[derive(Debug, Clone)]
enum Sketch {
    SumVar(SumVarSketch),
    TopK(Box<BasicWindowTopK>),
    Median(Box<QuantileSketch>),
    Distinct(Box<DistinctSketch>),
}

impl Sketch {
    fn new(spec: &SketchSpec, config: &EngineConfig) -> Sketch {
        let quantile_eps = if config.epsilon > 0.0 {
            config.epsilon
        } else {
            f64::MIN_POSITIVE
        };
        match spec.kind {
            SketchKind::SumVar { window } => {
                Sketch::SumVar(SumVarSketch::new(config.epsilon, window))
            }
            SketchKind::TopK { window, basic, k } => {
                Sketch::TopK(Box::new(BasicWindowTopK::new(window, basic, k)))
            }
            SketchKind::Median { window, basic } => {
                Sketch::Median(Box::new(QuantileSketch::new(window, basic, quantile_eps)))
            }
            SketchKind::Distinct { window, basic } => Sketch::Distinct(Box::new(
                DistinctSketch::with_seed(window, basic, config.precision, config.hll_seed),
            )),
        }
    }

    fn insert(&mut self, v: &Value, text: &mut String) {
        match self {
            Sketch::SumVar(s) => s.insert(v.as_f64().expect("numeric operand")),
            Sketch::Median(s) => s.insert(v.as_f64().expect("numeric operand")),
            Sketch::TopK(s) => {
                text.clear();
                v.write_to(text);
                s.insert(text);
            }
            Sketch::Distinct(s) => {
                text.clear();
                v.write_to(text);
                s.insert(text.as_bytes());
            }
        }
    }

    fn feature(&self, kind: OpKind) -> Option<Feature> {
        match (self, kind) {
            (Sketch::SumVar(s), OpKind::Ave) => s.mean().map(Feature::Scalar),
            (Sketch::SumVar(s), OpKind::Sum) => s.sum().map(Feature::Scalar),
            (Sketch::SumVar(s), OpKind::Var) => s.variance().map(Feature::Scalar),
            (Sketch::TopK(s), OpKind::TopK) => s.top().map(Feature::TopK),
            (Sketch::Median(s), OpKind::Median) => s.median().map(Feature::Scalar),
            (Sketch::Distinct(s), OpKind::CountDistinct) => s.estimate().map(Feature::Scalar),
            _ => unreachable!("sketch kind matches operator"),
        }
    }
}

#[derive(Debug)]
struct KeyState {
    sketches: Vec<Sketch>,
    histories: Vec<PrevBuffer>,
}

impl KeyState {
    fn new(layout: &StreamLayout, config: &EngineConfig) -> Self {
        Self {
            sketches: layout
                .sketches
                .iter()
                .map(|s| Sketch::new(s, config))
                .collect(),
            histories: layout
                .histories
                .iter()
                .map(|&(_, depth)| PrevBuffer::new(depth))
                .collect(),
        }
    }
}

/// Per-key state of one keyed stream, behind key-striped locks.
type Stripe = Mutex<FxHashMap<Box<str>, KeyState>>;

#[derive(Debug)]
struct StreamTable {
    stripes: Box<[Stripe]>,
}

impl StreamTable {
    fn new() -> Self {
        Self {
            stripes: (0..STRIPES).map(|_| Mutex::default()).collect(),
        }
    }

    fn with<R>(
        &self,
        key: &str,
        layout: &StreamLayout,
        config: &EngineConfig,
        f: impl FnOnce(&mut KeyState) -> R,
    ) -> R {
        let h = BuildHasherDefault::<FxHasher>::default().hash_one(key);
        let mut stripe = self.stripes[(h >> 32) as usize % STRIPES].lock();
        if let Some(state) = stripe.get_mut(key) {
            return f(state);
        }
        let state = stripe
            .entry(key.into())
            .or_insert_with(|| KeyState::new(layout, config));
        f(state)
    }

    fn keys(&self) -> usize {
        self.stripes.iter().map(|s| s.lock().len()).sum()
    }
}

/// The slice of key space one call processes.
#[derive(Clone, Copy)]
pub struct Shard<'a> {
    placement: Option<&'a dyn Placement>,
    worker: usize,
    workers: usize,
}

impl<'a> Shard<'a> {
    /// Everything: a single worker on a single node.
    pub const ALL: Shard<'static> = Shard {
        placement: None,
        worker: 0,
        workers: 1,
    };

    pub fn new(placement: Option<&'a dyn Placement>, worker: usize, workers: usize) -> Self {
        assert!(worker < workers);
        Self {
            placement,
            worker,
            workers,
        }
    }

    /// Whether stateless bookkeeping (tuple counts) happens here.
    fn primary(&self) -> bool {
        self.worker == 0
    }

    fn owns(&self, field: &str, value: &Value) -> bool {
        if self.placement.is_none() && self.workers == 1 {
            return true;
        }
        let owned;
        let text = match value {
            Value::Str(s) => s.as_str(),
            other => {
                owned = other.to_string();
                owned.as_str()
            }
        };
        if let Some(p) = self.placement {
            if !p.owns(field, text) {
                return false;
            }
        }
        self.workers == 1
            || (fmix64(fnv1a(text.as_bytes())) % self.workers as u64) as usize == self.worker
    }
}

/// Row slot of a stream while one tuple is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Absent,
    Root,
    Derived(usize),
}

/// What happened to one tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Whether the tuple (or a tuple derived from it) reached each stream.
    pub present: Vec<bool>,
    /// Tuples emitted by TRANSFORM and COLLAPSE, by target stream.
    pub derived: Vec<(StreamId, Row)>,
}

/// A compiled graph plus all of its runtime state.
pub struct Engine {
    graph: Arc<DataflowGraph>,
    config: EngineConfig,
    features: FeatureMap,
    tables: Vec<Option<StreamTable>>,
    root_names: Vec<String>,
    placement: Option<Arc<dyn Placement>>,
    counters: Counters,
}

impl Engine {
    /// A program that is not distribution safe always runs on one worker.
    pub fn new(graph: Arc<DataflowGraph>, mut config: EngineConfig) -> Self {
        assert!(config.workers >= 1, "at least one worker");
        if !graph.program.distribution_safe {
            config.workers = 1;
        }
        let tables = graph
            .layouts
            .iter()
            .map(|l| (!l.sketches.is_empty() || !l.histories.is_empty()).then(StreamTable::new))
            .collect();
        let root = &graph.program.streams[graph.program.root];
        let root_names = root.columns.iter().map(|c| c.name.clone()).collect();
        Self {
            features: FeatureMap::new(graph.slot_names.clone()),
            graph,
            config,
            tables,
            root_names,
            placement: None,
            counters: Counters::default(),
        }
    }

    /// Restrict the engine to the keys `placement` assigns to it.
    pub fn with_placement(mut self, placement: Arc<dyn Placement>) -> Self {
        self.placement = Some(placement);
        self
    }

    pub fn graph(&self) -> &DataflowGraph {
        &self.graph
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    /// Distinct keys holding sketch or history state, over all streams.
    pub fn state_keys(&self) -> usize {
        self.tables.iter().flatten().map(StreamTable::keys).sum()
    }

    pub fn metrics(&self) -> EngineMetrics {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        EngineMetrics {
            tuples: get(&c.tuples),
            filtered: get(&c.filtered),
            not_ready: get(&c.not_ready),
            arithmetic: get(&c.arithmetic),
            transform_pending: get(&c.transform_pending),
            collapse_pending: get(&c.collapse_pending),
        }
    }

    fn shard(&self, worker: usize, workers: usize) -> Shard<'_> {
        Shard::new(self.placement.as_deref(), worker, workers)
    }

    /// Process one tuple on every key this engine owns.
    pub fn process_tuple(&self, row: &Row) -> Trace {
        self.process_shard(row, &self.shard(0, 1))
    }

    /// Process one tuple, running stateful nodes only for keys `shard`
    /// owns. Nodes run in statement order.
    pub fn process_shard(&self, root: &Row, shard: &Shard<'_>) -> Trace {
        let g = &*self.graph;
        let streams = &g.program.streams;
        let mut slots = vec![Slot::Absent; streams.len()];
        let mut keys: Vec<String> = vec![String::new(); streams.len()];
        let mut rows: Vec<Row> = Vec::new();
        let mut derived = Vec::new();
        let mut text = String::new();
        slots[g.program.root] = Slot::Root;
        if shard.primary() {
            bump(&self.counters.tuples);
        }

        for node in &g.nodes {
            let owned = match node.owner {
                None => true,
                Some(c) => shard.owns(&self.root_names[c], &root[c]),
            };
            match &node.kind {
                NodeKind::KeyedDemux {
                    target,
                    source,
                    key_columns,
                } => {
                    if slots[*source] == Slot::Absent {
                        continue;
                    }
                    slots[*target] = slots[*source];
                    let row = row_of(root, &rows, slots[*source]);
                    let mut k = std::mem::take(&mut keys[*target]);
                    build_key(row, key_columns, &mut k);
                    keys[*target] = k;
                }
                NodeKind::FeatureGen {
                    feature,
                    source,
                    op,
                    arg,
                    sketch,
                    feeds,
                } => {
                    if !owned || slots[*source] == Slot::Absent {
                        continue;
                    }
                    let row = row_of(root, &rows, slots[*source]);
                    let table = self.tables[*source].as_ref().expect("stream has state");
                    let value =
                        table.with(&keys[*source], &g.layouts[*source], &self.config, |st| {
                            let s = &mut st.sketches[*sketch];
                            if *feeds {
                                s.insert(&row[*arg], &mut text);
                            }
                            s.feature(op.kind)
                        });
                    if let Some(f) = value {
                        self.features
                            .update_insert_slot(&keys[*source], *feature, f);
                    }
                }
                NodeKind::FilterNode {
                    target,
                    source,
                    predicate,
                } => {
                    if !owned || slots[*source] == Slot::Absent {
                        continue;
                    }
                    let row = row_of(root, &rows, slots[*source]);
                    let count = node.owner.is_some() || shard.primary();
                    match evaluate_expression(predicate, row, &self.features, &no_history) {
                        Ok(Scalar::Bool(true)) => {
                            slots[*target] = slots[*source];
                            keys[*target] = keys[*source].clone();
                        }
                        Ok(_) => {
                            if count {
                                bump(&self.counters.filtered);
                            }
                        }
                        Err(e) => {
                            if count {
                                self.count_error(e);
                            }
                        }
                    }
                }
                NodeKind::TransformNode {
                    target,
                    source,
                    outputs,
                    history_base,
                    history,
                } => {
                    if !owned || slots[*source] == Slot::Absent {
                        continue;
                    }
                    let row = row_of(root, &rows, slots[*source]);
                    let src = &streams[*source];
                    let run = |buffers: &mut [PrevBuffer]| {
                        for (buf, &(col, _)) in buffers.iter_mut().zip(history) {
                            buf.push(row[col].as_f64().expect("numeric history column"));
                        }
                        let buffers = &*buffers;
                        let prev = |col: usize, back: usize| {
                            history
                                .iter()
                                .position(|&(c, _)| c == col)
                                .and_then(|i| buffers[i].prev(back))
                        };
                        let mut out: Row =
                            src.key_columns.iter().map(|&c| row[c].clone()).collect();
                        for e in outputs {
                            out.push(
                                evaluate_expression(e, row, &self.features, &prev)?.to_value(),
                            );
                        }
                        Ok::<Row, EvalError>(out)
                    };
                    let result = match &self.tables[*source] {
                        Some(table) if !history.is_empty() => {
                            table.with(&keys[*source], &g.layouts[*source], &self.config, |st| {
                                run(&mut st.histories[*history_base..*history_base + history.len()])
                            })
                        }
                        _ => run(&mut []),
                    };
                    match result {
                        Ok(out) => {
                            derived.push((*target, out.clone()));
                            rows.push(out);
                            slots[*target] = Slot::Derived(rows.len() - 1);
                            keys[*target] = keys[*source].clone();
                        }
                        Err(EvalError::NotReady) => bump(&self.counters.transform_pending),
                        Err(e) => self.count_error(e),
                    }
                }
                NodeKind::Project {
                    target,
                    source,
                    keep,
                    drop,
                    residual,
                    map_slot,
                } => {
                    if !owned || slots[*source] == Slot::Absent {
                        continue;
                    }
                    let row = row_of(root, &rows, slots[*source]);
                    let r: Option<Vec<f64>> = match residual {
                        CollapseResidual::Features(ids) => ids
                            .iter()
                            .map(|&id| self.features.scalar(&keys[*source], id))
                            .collect(),
                        CollapseResidual::Columns(cols) => {
                            cols.iter().map(|&c| row[c].as_f64()).collect()
                        }
                    };
                    let Some(r) = r else {
                        bump(&self.counters.collapse_pending);
                        continue;
                    };
                    let l = key_of(row, keep);
                    let k_minus = key_of(row, drop);
                    collapse_update(
                        &self.features,
                        &l,
                        *map_slot,
                        &k_minus,
                        r.clone(),
                        self.config.map_capacity,
                    );
                    let mut out: Row = keep.iter().map(|&c| row[c].clone()).collect();
                    out.extend(r.into_iter().map(Value::Float));
                    derived.push((*target, out.clone()));
                    rows.push(out);
                    slots[*target] = Slot::Derived(rows.len() - 1);
                    keys[*target] = l;
                }
                NodeKind::CollapsedConsumer {
                    feature,
                    source,
                    op,
                    arg,
                    map_slot,
                } => {
                    if !owned || slots[*source] == Slot::Absent {
                        continue;
                    }
                    let row = row_of(root, &rows, slots[*source]);
                    let keep_len = streams[*source].keys.len();
                    let value = self.features.read(&keys[*source], *map_slot, |f| match f {
                        Some(Feature::Map(m)) => collapsed_statistic(m, op, *arg, keep_len, row),
                        _ => None,
                    });
                    if let Some(f) = value {
                        self.features
                            .update_insert_slot(&keys[*source], *feature, f);
                    }
                }
            }
        }
        Trace {
            present: slots.iter().map(|s| *s != Slot::Absent).collect(),
            derived,
        }
    }

    fn count_error(&self, e: EvalError) {
        match e {
            EvalError::NotReady => bump(&self.counters.not_ready),
            _ => bump(&self.counters.arithmetic),
        }
    }

    /// Feature cells of `row` at this moment: one per feature, in feature
    /// order.
    pub fn emit_feature_row(&self, row: &Row) -> Vec<Cell> {
        self.emit_shard(row, &self.shard(0, 1))
    }

    pub fn emit_shard(&self, row: &Row, shard: &Shard<'_>) -> Vec<Cell> {
        let mut key = String::new();
        self.graph
            .feature_columns
            .iter()
            .enumerate()
            .map(|(slot, col)| {
                let Some(cols) = &col.key_columns else {
                    return Cell::Empty;
                };
                let owned = match col.owner {
                    Some(c) => shard.owns(&self.root_names[c], &row[c]),
                    None => shard.primary(),
                };
                if !owned {
                    return Cell::NotOwned;
                }
                build_key(row, cols, &mut key);
                self.features
                    .read(&key, slot, |f| f.and_then(Feature::cell))
                    .map_or(Cell::Empty, Cell::Value)
            })
            .collect()
    }

    /// Process a batch in input order and return one row of cells per
    /// tuple. With several workers, each worker walks the whole batch but
    /// runs stateful nodes only for the keys it owns, so per-key order
    /// and results match a single-threaded run.
    pub fn feed_batch(&self, rows: &[Row]) -> Vec<Vec<Cell>> {
        self.run_batch(rows, true)
    }

    /// [`Engine::feed_batch`] without building output rows.
    pub fn ingest_batch(&self, rows: &[Row]) {
        self.run_batch(rows, false);
    }

    fn run_batch(&self, rows: &[Row], emit: bool) -> Vec<Vec<Cell>> {
        let workers = self.config.workers;
        let walk = |shard: &Shard<'_>| -> Vec<Vec<Cell>> {
            let mut out = Vec::with_capacity(if emit { rows.len() } else { 0 });
            for r in rows {
                self.process_shard(r, shard);
                if emit {
                    out.push(self.emit_shard(r, shard));
                }
            }
            out
        };
        if workers == 1 {
            return walk(&self.shard(0, 1));
        }
        let partials: Vec<Vec<Vec<Cell>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let walk = &walk;
                    s.spawn(move || walk(&self.shard(w, workers)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let mut it = partials.into_iter();
        let mut merged = it.next().expect("at least one worker");
        for part in it {
            for (row, other) in merged.iter_mut().zip(part) {
                for (c, o) in row.iter_mut().zip(other) {
                    *c = c.merge(o);
                }
            }
        }
        merged
    }

    /// Feature-map dump: one JSON object per (feature, key), sorted.
    pub fn dump_lines(&self) -> Vec<String> {
        self.features.dump_lines()
    }
}

fn row_of<'r>(root: &'r Row, rows: &'r [Row], slot: Slot) -> &'r Row {
    match slot {
        Slot::Root => root,
        Slot::Derived(i) => &rows[i],
        Slot::Absent => unreachable!("absent stream has no row"),
    }
}

fn no_history(_: usize, _: usize) -> Option<f64> {
    None
}

fn bump(a: &AtomicU64) {
    a.fetch_add(1, Ordering::Relaxed);
}

/// Record `r` as the latest residual of `k_minus` in the map feature of
/// `l`, creating the map on first use.
pub fn collapse_update(
    features: &FeatureMap,
    l: &str,
    map_slot: usize,
    k_minus: &str,
    r: Vec<f64>,
    capacity: usize,
) {
    features.modify(l, map_slot, |cell| {
        if !matches!(cell, Some(Feature::Map(_))) {
            *cell = Some(Feature::Map(Box::new(MapFeature::new(capacity))));
        }
        if let Some(Feature::Map(m)) = cell {
            m.update(k_minus, r);
        }
    });
}

/// Statistic `op` over column `arg` of a collapsed stream, computed from
/// every entry of `map`. Key columns (`arg < keep_len`) take the value
/// of the current row. `None` for an empty map.
pub fn collapsed_statistic(
    map: &MapFeature,
    op: &Operator,
    arg: usize,
    keep_len: usize,
    row: &Row,
) -> Option<Feature> {
    if map.is_empty() {
        return None;
    }
    let n = map.len() as f64;
    let values: Vec<Value> = if arg < keep_len {
        vec![row[arg].clone(); map.len()]
    } else {
        map.column(arg - keep_len).map(Value::Float).collect()
    };
    let nums = || values.iter().map(|v| v.as_f64().expect("numeric column"));
    Some(match op.kind {
        OpKind::Sum => Feature::Scalar(nums().sum()),
        OpKind::Ave => Feature::Scalar(nums().sum::<f64>() / n),
        OpKind::Var => {
            let mean = nums().sum::<f64>() / n;
            Feature::Scalar(nums().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
        }
        OpKind::Median => {
            let mut v: Vec<f64> = nums().collect();
            v.sort_by(f64::total_cmp);
            Feature::Scalar(v[(v.len() - 1) / 2])
        }
        OpKind::CountDistinct => {
            let mut v: Vec<String> = values.iter().map(Value::to_string).collect();
            v.sort();
            v.dedup();
            Feature::Scalar(v.len() as f64)
        }
        OpKind::TopK => {
            let mut counts: FxHashMap<String, u64> = FxHashMap::default();
            for v in &values {
                *counts.entry(v.to_string()).or_default() += 1;
            }
            let mut items: Vec<(String, u64)> = counts.into_iter().collect();
            items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            items.truncate(op.k);
            Feature::TopK(items.into_iter().map(|(i, c)| (i, c as f64 / n)).collect())
        }
    })
}
