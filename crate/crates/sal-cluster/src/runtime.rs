//! Running a compiled program on several logical nodes.
//!
//! Every node has an ingest router, a worker that feeds its own engine in
//! batches, and (over TCP) one reader per peer connection. Routers send
//! each tuple to the nodes owning its partition key values; a tuple kept
//! locally skips serialization. With a single ingest source the partial
//! feature rows of all nodes are merged back into input order.

use std::collections::VecDeque;
use std::io::BufWriter;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sal_ast::TupleSchema;
use sal_engine::{
    parse_labeled_row, Cell, DataflowGraph, Engine, EngineConfig, EngineMetrics, FeatureMap, Label,
    NetflowTuple, Row,
};

use crate::cpu::thread_cpu_seconds;
use crate::error::ClusterError;
use crate::plan::{NodePlacement, NodeSet, PartitionPlan};
use crate::topology::NodeTopology;
use crate::transport::{accept_n, connect_with_retry, pump, Inbound, Outbox, RetryPolicy};

type Channel<T> = (Sender<T>, Receiver<T>);

pub const DEFAULT_BATCH_SIZE: usize = 1000;
pub const DEFAULT_QUEUE_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Transport {
    InProcess,
    /// Framed TCP between all nodes of the topology, hosted in this process.
    Tcp(NodeTopology),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub nodes: usize,
    /// Tuples a node collects before feeding its engine.
    pub batch_size: usize,
    /// Bound of each node's inbound queue.
    pub queue_capacity: usize,
    /// Probability that a tuple pushed to a peer is lost.
    pub drop_rate: f64,
    pub seed: u64,
    pub engine: EngineConfig,
    pub transport: Transport,
    pub retry: RetryPolicy,
}

impl ClusterConfig {
    pub fn in_process(nodes: usize) -> Self {
        Self {
            nodes,
            batch_size: DEFAULT_BATCH_SIZE,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            drop_rate: 0.0,
            seed: 0,
            engine: EngineConfig::default(),
            transport: Transport::InProcess,
            retry: RetryPolicy::default(),
        }
    }

    pub fn tcp(topology: NodeTopology) -> Self {
        Self {
            transport: Transport::Tcp(topology.clone()),
            ..Self::in_process(topology.nodes())
        }
    }
}

/// One input tuple: its parsed row and the line pushed to peers.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingest {
    pub row: Row,
    pub line: String,
    pub label: Option<Label>,
}

impl Ingest {
    pub fn from_tuple(t: &NetflowTuple) -> Self {
        Self {
            row: t.to_row(),
            line: t.to_csv_line(t.label.is_some()),
            label: t.label,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeReport {
    pub node: usize,
    /// Tuples read by this node's ingest.
    pub ingested: u64,
    /// Ingested tuples missing a partition key.
    pub rejected: u64,
    /// Sum of route sizes over the ingested tuples.
    pub routed: u64,
    /// Pushes lost to the drop-rate knob.
    pub dropped: u64,
    /// Tuples this node's engine processed.
    pub received: u64,
    /// CPU time of all of this node's threads.
    pub cpu_seconds: f64,
    pub engine: EngineMetrics,
}

pub struct ClusterRun {
    pub nodes: Vec<NodeReport>,
    pub engines: Vec<Engine>,
    pub wall_seconds: f64,
}

impl ClusterRun {
    pub fn received(&self) -> u64 {
        self.nodes.iter().map(|n| n.received).sum()
    }

    pub fn ingested(&self) -> u64 {
        self.nodes.iter().map(|n| n.ingested).sum()
    }

    pub fn routed(&self) -> u64 {
        self.nodes.iter().map(|n| n.routed).sum()
    }

    pub fn rejected(&self) -> u64 {
        self.nodes.iter().map(|n| n.rejected).sum()
    }

    pub fn dropped(&self) -> u64 {
        self.nodes.iter().map(|n| n.dropped).sum()
    }

    /// Largest per-node CPU time.
    pub fn makespan(&self) -> f64 {
        self.nodes.iter().map(|n| n.cpu_seconds).fold(0.0, f64::max)
    }

    /// Engine counters summed over nodes.
    pub fn engine_metrics(&self) -> EngineMetrics {
        let mut m = EngineMetrics::default();
        for n in &self.nodes {
            let e = &n.engine;
            m.tuples += e.tuples;
            m.filtered += e.filtered;
            m.not_ready += e.not_ready;
            m.arithmetic += e.arithmetic;
            m.transform_pending += e.transform_pending;
            m.collapse_pending += e.collapse_pending;
        }
        m
    }

    /// Union of all nodes' feature maps and the number of (key, feature)
    /// pairs present on more than one node.
    pub fn merged_feature_map(&self) -> (FeatureMap, usize) {
        let map = FeatureMap::new(self.engines[0].graph().slot_names.clone());
        let conflicts = self
            .engines
            .iter()
            .map(|e| map.absorb(e.feature_map()))
            .sum();
        (map, conflicts)
    }

    pub fn merged_dump(&self) -> Vec<String> {
        if self.engines.len() == 1 {
            return self.engines[0].dump_lines();
        }
        self.merged_feature_map().0.dump_lines()
    }
}

/// Receives each tuple of a single-source run, in input order, with its
/// merged feature cells.
pub type Sink<'a> = &'a mut dyn FnMut(&Ingest, &[Cell]) -> std::io::Result<()>;

pub struct Cluster {
    graph: Arc<DataflowGraph>,
    plan: PartitionPlan,
    schema: TupleSchema,
    config: ClusterConfig,
}

#[derive(Default)]
struct RouterReport {
    ingested: u64,
    rejected: u64,
    routed: u64,
    dropped: u64,
    cpu: f64,
}

struct WorkerReport {
    received: u64,
    cpu: f64,
}

impl Cluster {
    pub fn new(graph: Arc<DataflowGraph>, config: ClusterConfig) -> Result<Self, ClusterError> {
        if config.nodes == 0 {
            return Err(ClusterError::Config("at least one node is required".into()));
        }
        if config.batch_size == 0 || config.queue_capacity == 0 {
            return Err(ClusterError::Config(
                "batch size and queue capacity must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.drop_rate) {
            return Err(ClusterError::Config(format!(
                "drop rate {} is not in [0, 1]",
                config.drop_rate
            )));
        }
        if let Transport::Tcp(t) = &config.transport {
            if t.nodes() != config.nodes {
                return Err(ClusterError::Config(format!(
                    "topology lists {} nodes but {} were requested",
                    t.nodes(),
                    config.nodes
                )));
            }
        }
        if config.nodes > 1 && !graph.program.distribution_safe {
            return Err(ClusterError::NotDistributable(config.nodes));
        }
        let plan = PartitionPlan::from_program(&graph.program)?;
        let schema = TupleSchema {
            columns: graph.program.streams[graph.program.root].columns.clone(),
        };
        Ok(Self {
            graph,
            plan,
            schema,
            config,
        })
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    /// Run with node 0 as the only ingest source.
    pub fn run_single<I>(
        &self,
        source: I,
        sink: Option<Sink<'_>>,
    ) -> Result<ClusterRun, ClusterError>
    where
        I: IntoIterator<Item = Ingest>,
        I::IntoIter: Send,
    {
        let mut sources: Vec<Option<I::IntoIter>> = (0..self.config.nodes).map(|_| None).collect();
        sources[0] = Some(source.into_iter());
        self.run(sources, sink)
    }

    /// Run with one optional ingest source per node. A sink needs exactly
    /// one source.
    pub fn run<I>(
        &self,
        sources: Vec<Option<I>>,
        mut sink: Option<Sink<'_>>,
    ) -> Result<ClusterRun, ClusterError>
    where
        I: Iterator<Item = Ingest> + Send,
    {
        let n = self.config.nodes;
        if sources.len() != n {
            return Err(ClusterError::Config(format!(
                "{} sources for {n} nodes",
                sources.len()
            )));
        }
        if sink.is_some() && sources.iter().filter(|s| s.is_some()).count() != 1 {
            return Err(ClusterError::Config(
                "merged output needs exactly one ingest source".into(),
            ));
        }
        let start = Instant::now();
        let engines: Vec<Engine> = (0..n)
            .map(|j| {
                let e = Engine::new(self.graph.clone(), self.config.engine.clone());
                if n == 1 {
                    e
                } else {
                    e.with_placement(Arc::new(NodePlacement {
                        plan: self.plan.clone(),
                        node: j,
                        nodes: n,
                    }))
                }
            })
            .collect();
        let listeners = match &self.config.transport {
            Transport::InProcess => Vec::new(),
            Transport::Tcp(t) if n > 1 => (0..n)
                .map(|j| {
                    let addr = t.pull_address(j);
                    TcpListener::bind(&addr).map_err(|e| {
                        ClusterError::Topology(format!("cannot listen on {addr}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            Transport::Tcp(_) => Vec::new(),
        };

        let abort = AtomicBool::new(false);
        let inboxes: Vec<Channel<Inbound>> = (0..n)
            .map(|_| bounded(self.config.queue_capacity))
            .collect();
        let merging = sink.is_some();
        let outputs: Vec<Channel<Vec<Vec<Cell>>>> = (0..n).map(|_| unbounded()).collect();
        let (meta_tx, meta_rx) = unbounded::<(Ingest, NodeSet)>();
        let features = self.graph.feature_columns.len();

        let result = std::thread::scope(|s| {
            let abort = &abort;
            let mut readers = Vec::new();
            for (j, listener) in listeners.into_iter().enumerate() {
                let inbox = inboxes[j].0.clone();
                readers.push(s.spawn(move || -> Result<f64, ClusterError> {
                    let streams =
                        accept_n(&listener, n - 1, abort).map_err(|e| ClusterError::Transport {
                            peer: format!("listener of node {j}"),
                            source: e.into(),
                        })?;
                    let handles: Vec<_> = streams
                        .into_iter()
                        .map(|st| {
                            let inbox = inbox.clone();
                            s.spawn(move || {
                                pump(st, &inbox);
                                thread_cpu_seconds()
                            })
                        })
                        .collect();
                    Ok(handles.into_iter().map(|h| h.join().unwrap_or(0.0)).sum())
                }));
            }

            let mut routers = Vec::new();
            for (j, source) in sources.into_iter().enumerate() {
                let local = inboxes[j].0.clone();
                let peers: Vec<Option<Sender<Inbound>>> = (0..n)
                    .map(|k| {
                        (k != j && matches!(self.config.transport, Transport::InProcess))
                            .then(|| inboxes[k].0.clone())
                    })
                    .collect();
                let meta = (merging && source.is_some()).then(|| meta_tx.clone());
                routers
                    .push(s.spawn(move || self.route_loop(j, source, local, peers, meta, abort)));
            }
            drop(meta_tx);

            let mut workers = Vec::new();
            for (j, engine) in engines.iter().enumerate() {
                let inbox = inboxes[j].1.clone();
                let out = merging.then(|| outputs[j].0.clone());
                workers.push(s.spawn(move || self.work(j, engine, inbox, out, abort)));
            }
            drop(inboxes);
            let out_rx: Vec<Receiver<Vec<Vec<Cell>>>> =
                outputs.into_iter().map(|(_, rx)| rx).collect();

            let mut merge_result = Ok(());
            if let Some(sink) = sink.as_mut() {
                merge_result = merge(meta_rx, &out_rx, features, sink);
                if merge_result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
            } else {
                drop(meta_rx);
            }
            drop(out_rx);

            let router_results: Vec<_> = routers
                .into_iter()
                .map(|h| h.join().expect("router panicked"))
                .collect();
            let worker_results: Vec<_> = workers
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect();
            let reader_results: Vec<_> = readers
                .into_iter()
                .map(|h| h.join().expect("reader panicked"))
                .collect();
            (router_results, worker_results, reader_results, merge_result)
        });

        let (routers, workers, readers, merged) = result;
        let mut first_error = None;
        let mut nodes = Vec::with_capacity(n);
        for j in 0..n {
            let mut report = NodeReport {
                node: j,
                engine: engines[j].metrics(),
                ..NodeReport::default()
            };
            if let Ok(r) = &routers[j] {
                report.ingested = r.ingested;
                report.rejected = r.rejected;
                report.routed = r.routed;
                report.dropped = r.dropped;
                report.cpu_seconds += r.cpu;
            }
            if let Ok(w) = &workers[j] {
                report.received = w.received;
                report.cpu_seconds += w.cpu;
            }
            if let Some(Ok(cpu)) = readers.get(j) {
                report.cpu_seconds += cpu;
            }
            nodes.push(report);
        }
        for r in routers.into_iter().filter_map(Result::err) {
            first_error.get_or_insert(r);
        }
        for r in readers.into_iter().filter_map(Result::err) {
            first_error.get_or_insert(r);
        }
        for r in workers.into_iter().filter_map(Result::err) {
            first_error.get_or_insert(r);
        }
        if let Err(e) = merged {
            first_error.get_or_insert(e);
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        Ok(ClusterRun {
            nodes,
            engines,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn connect_peers(
        &self,
        node: usize,
        queues: Vec<Option<Sender<Inbound>>>,
    ) -> (Vec<Option<Outbox>>, Option<ClusterError>) {
        let mut out: Vec<Option<Outbox>> = Vec::with_capacity(queues.len());
        let mut error = None;
        for (k, q) in queues.into_iter().enumerate() {
            let ob = match (&self.config.transport, q) {
                (_, Some(tx)) => Some(Outbox::Queue(tx)),
                (Transport::Tcp(t), None) if k != node && error.is_none() => {
                    let peer = t.pull_address(k);
                    match connect_with_retry(&peer, &self.config.retry) {
                        Ok(stream) => {
                            let _ = stream.set_nodelay(true);
                            Some(Outbox::Tcp {
                                peer,
                                writer: BufWriter::with_capacity(1 << 16, stream),
                            })
                        }
                        Err(e) => {
                            error = Some(e);
                            None
                        }
                    }
                }
                _ => None,
            };
            out.push(ob);
        }
        (out, error)
    }

    fn route_loop<I: Iterator<Item = Ingest>>(
        &self,
        node: usize,
        source: Option<I>,
        local: Sender<Inbound>,
        queues: Vec<Option<Sender<Inbound>>>,
        meta: Option<Sender<(Ingest, NodeSet)>>,
        abort: &AtomicBool,
    ) -> Result<RouterReport, ClusterError> {
        let n = self.config.nodes;
        let (mut peers, mut error) = self.connect_peers(node, queues);
        let mut report = RouterReport::default();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        if let (Some(source), None) = (source, &error) {
            for item in source {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                report.ingested += 1;
                let mut set = match self.plan.route(&item.row, n) {
                    Ok(s) => s,
                    Err(_) => {
                        report.rejected += 1;
                        continue;
                    }
                };
                report.routed += set.len() as u64;
                let targets: Vec<usize> = set.iter().collect();
                for k in targets {
                    if k == node {
                        let _ = local.send(Inbound::Row(item.row.clone()));
                        continue;
                    }
                    if self.config.drop_rate > 0.0 && rng.gen::<f64>() < self.config.drop_rate {
                        report.dropped += 1;
                        set.remove(k);
                        continue;
                    }
                    let ob = peers[k].as_mut().expect("peer outbox");
                    if let Err(e) = ob.push(&item.line) {
                        error = Some(e);
                        break;
                    }
                }
                if error.is_some() {
                    break;
                }
                if let Some(m) = &meta {
                    let _ = m.send((item, set));
                }
            }
        }
        if error.is_some() {
            abort.store(true, Ordering::Relaxed);
        }
        for ob in peers.iter_mut().flatten() {
            if let Err(e) = ob.terminate() {
                error.get_or_insert(e);
            }
        }
        let _ = local.send(Inbound::Terminate);
        report.cpu = thread_cpu_seconds();
        match error {
            Some(e) => {
                abort.store(true, Ordering::Relaxed);
                Err(e)
            }
            None => Ok(report),
        }
    }

    fn work(
        &self,
        node: usize,
        engine: &Engine,
        inbox: Receiver<Inbound>,
        out: Option<Sender<Vec<Vec<Cell>>>>,
        abort: &AtomicBool,
    ) -> Result<WorkerReport, ClusterError> {
        let n = self.config.nodes;
        let mut batch: Vec<Row> = Vec::with_capacity(self.config.batch_size);
        let mut terminated = 0;
        let mut received = 0u64;
        let mut error: Option<ClusterError> = None;
        let flush = |batch: &mut Vec<Row>| {
            if batch.is_empty() {
                return;
            }
            match &out {
                Some(tx) => {
                    let _ = tx.send(engine.feed_batch(batch));
                }
                None => engine.ingest_batch(batch),
            }
            batch.clear();
        };
        while terminated < n {
            let msg = match inbox.recv_timeout(Duration::from_millis(50)) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    continue;
                }
                Err(RecvTimeoutError::Disconnected) => break,
            };
            let row = match msg {
                Inbound::Row(r) => r,
                Inbound::Line(line) => match parse_labeled_row(&line, &self.schema) {
                    Ok((r, _)) => r,
                    Err(e) => {
                        error.get_or_insert(ClusterError::Malformed {
                            node,
                            detail: e.to_string(),
                        });
                        abort.store(true, Ordering::Relaxed);
                        break;
                    }
                },
                Inbound::Terminate => {
                    terminated += 1;
                    continue;
                }
                Inbound::Broken(e) => {
                    terminated += 1;
                    error.get_or_insert(e);
                    abort.store(true, Ordering::Relaxed);
                    continue;
                }
            };
            received += 1;
            batch.push(row);
            if batch.len() >= self.config.batch_size {
                flush(&mut batch);
            }
        }
        if error.is_none() {
            flush(&mut batch);
        }
        let cpu = thread_cpu_seconds();
        match error {
            Some(e) => Err(e),
            None => Ok(WorkerReport { received, cpu }),
        }
    }
}

/// Rebuild input order: tuple `i` was delivered to the nodes in its set,
/// and each node's outputs arrive in the order it received tuples.
fn merge(
    meta: Receiver<(Ingest, NodeSet)>,
    outputs: &[Receiver<Vec<Vec<Cell>>>],
    features: usize,
    sink: &mut Sink<'_>,
) -> Result<(), ClusterError> {
    let mut pending: Vec<VecDeque<Vec<Cell>>> = vec![VecDeque::new(); outputs.len()];
    let mut cells = vec![Cell::NotOwned; features];
    for (item, set) in meta {
        cells.iter_mut().for_each(|c| *c = Cell::NotOwned);
        for j in set.iter() {
            while pending[j].is_empty() {
                let batch = outputs[j].recv().map_err(|_| ClusterError::NodeFailed(j))?;
                pending[j].extend(batch);
            }
            let part = pending[j].pop_front().expect("non-empty");
            for (c, p) in cells.iter_mut().zip(part) {
                *c = c.merge(p);
            }
        }
        sink(&item, &cells).map_err(ClusterError::Sink)?;
    }
    Ok(())
}
