//! Weak-scaling benchmark on synthetic streams.
//!
//! Every node ingests its own share of tuples. The time of a run is the
//! largest per-node CPU time, which is what a node-per-core deployment
//! would wait for; it does not depend on how many cores the host has.

use std::sync::Arc;

use anyhow::{bail, Result};
use sal_ast::{check, TupleSchema};
use sal_cluster::{Cluster, ClusterConfig, Ingest};
use sal_engine::{compile, DataflowGraph, EngineConfig};
use serde_json::{json, Value as Json};

use crate::pipeline::{gen_pipeline, DEFAULT_FIELDS, DEFAULT_GROUPINGS};
use crate::synth::{Generator, KeyDist, SynthConfig};

pub const DEFAULT_TUPLES_PER_NODE: u64 = 1_000_000;
pub const DEFAULT_WINDOW: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub nodes: Vec<usize>,
    pub keys: Vec<KeyDist>,
    pub tuples_per_node: u64,
    pub seed: u64,
    pub batch_size: usize,
    pub workers: usize,
    pub epsilon: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nodes: vec![1, 2, 4, 8],
            keys: vec![KeyDist::Uniform, KeyDist::PowerLaw],
            tuples_per_node: DEFAULT_TUPLES_PER_NODE,
            seed: 0,
            batch_size: sal_cluster::DEFAULT_BATCH_SIZE,
            workers: 1,
            epsilon: EngineConfig::default().epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub keys: KeyDist,
    pub nodes: usize,
    /// Tuples ingested over all nodes.
    pub tuples: u64,
    /// Largest per-node CPU time, seconds.
    pub seconds: f64,
    pub wall_seconds: f64,
    /// `tuples / seconds`.
    pub throughput: f64,
    /// `T1 / Tn` against the one-node run of the same key distribution.
    pub efficiency: Option<f64>,
    /// Tuples each node's engine processed.
    pub per_node: Vec<u64>,
}

impl BenchReport {
    /// Most loaded node over least loaded node.
    pub fn load_ratio(&self) -> f64 {
        let max = self.per_node.iter().copied().max().unwrap_or(0) as f64;
        let min = self.per_node.iter().copied().min().unwrap_or(0) as f64;
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn to_json(&self) -> Json {
        let ratio = self.load_ratio();
        json!({
            "event": "bench",
            "keys": self.keys.name(),
            "nodes": self.nodes,
            "tuples": self.tuples,
            "seconds": self.seconds,
            "wall_seconds": self.wall_seconds,
            "throughput": self.throughput,
            "efficiency": self.efficiency,
            "per_node": self.per_node,
            "load_ratio": if ratio.is_finite() { json!(ratio) } else { Json::Null },
        })
    }

    /// Read back a line written by [`BenchReport::to_json`].
    pub fn from_json(v: &Json) -> Option<Self> {
        Some(Self {
            keys: v["keys"].as_str()?.parse().ok()?,
            nodes: v["nodes"].as_u64()? as usize,
            tuples: v["tuples"].as_u64()?,
            seconds: v["seconds"].as_f64()?,
            wall_seconds: v["wall_seconds"].as_f64()?,
            throughput: v["throughput"].as_f64()?,
            efficiency: v["efficiency"].as_f64(),
            per_node: v["per_node"]
                .as_array()?
                .iter()
                .map(|x| x.as_u64())
                .collect::<Option<_>>()?,
        })
    }
}

/// The 28-feature ave/var pipeline.
pub fn default_graph() -> Arc<DataflowGraph> {
    let src =
        gen_pipeline(&DEFAULT_FIELDS, &DEFAULT_GROUPINGS, DEFAULT_WINDOW).expect("valid defaults");
    let program = check(&src, &TupleSchema::netflow()).expect("generated pipeline checks");
    Arc::new(compile(program))
}

/// Node `j`'s share of a weak-scaling run.
pub fn node_stream(
    keys: KeyDist,
    seed: u64,
    node: usize,
    tuples: u64,
) -> impl Iterator<Item = Ingest> + Send {
    let cfg = SynthConfig::new(
        keys,
        seed ^ (node as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D),
    );
    Generator::new(cfg)
        .take(tuples as usize)
        .map(|t| Ingest::from_tuple(&t))
}

/// One run of `nodes` nodes, each ingesting `cfg.tuples_per_node` tuples.
pub fn bench_one(
    graph: &Arc<DataflowGraph>,
    cfg: &BenchConfig,
    keys: KeyDist,
    nodes: usize,
) -> Result<BenchReport> {
    let cc = ClusterConfig {
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        engine: EngineConfig {
            epsilon: cfg.epsilon,
            hll_seed: cfg.seed,
            workers: cfg.workers,
            ..EngineConfig::default()
        },
        ..ClusterConfig::in_process(nodes)
    };
    let cluster = Cluster::new(graph.clone(), cc)?;
    let sources = (0..nodes)
        .map(|j| Some(node_stream(keys, cfg.seed, j, cfg.tuples_per_node)))
        .collect();
    let run = cluster.run(sources, None)?;
    let seconds = run.makespan();
    let tuples = run.ingested();
    Ok(BenchReport {
        keys,
        nodes,
        tuples,
        seconds,
        wall_seconds: run.wall_seconds,
        throughput: if seconds > 0.0 {
            tuples as f64 / seconds
        } else {
            0.0
        },
        efficiency: None,
        per_node: run.nodes.iter().map(|n| n.received).collect(),
    })
}

/// Set `efficiency` of every report from the one-node time of the same
/// key distribution, taken from `reports` or else from `baseline`.
pub fn fill_efficiency(reports: &mut [BenchReport], baseline: &[BenchReport]) {
    let t1 = |keys: KeyDist, reports: &[BenchReport]| {
        reports
            .iter()
            .find(|r| r.keys == keys && r.nodes == 1)
            .map(|r| r.seconds)
    };
    let own: Vec<Option<f64>> = reports.iter().map(|r| t1(r.keys, reports)).collect();
    for (r, own) in reports.iter_mut().zip(own) {
        if let Some(t1) = own.or_else(|| t1(r.keys, baseline)) {
            if r.seconds > 0.0 {
                r.efficiency = Some(t1 / r.seconds);
            }
        }
    }
}

/// Run every (keys, nodes) pair, calling `each` as reports complete.
pub fn bench(
    graph: &Arc<DataflowGraph>,
    cfg: &BenchConfig,
    baseline: &[BenchReport],
    mut each: impl FnMut(&BenchReport),
) -> Result<Vec<BenchReport>> {
    if cfg.nodes.is_empty() || cfg.keys.is_empty() {
        bail!("nothing to run: no node counts or key distributions");
    }
    let mut reports = Vec::new();
    for &keys in &cfg.keys {
        let mut nodes = cfg.nodes.clone();
        nodes.sort_unstable();
        nodes.dedup();
        for n in nodes {
            let mut r = bench_one(graph, cfg, keys, n)?;
            let mut done = reports.clone();
            done.push(r.clone());
            fill_efficiency(&mut done, baseline);
            r.efficiency = done.last().and_then(|d| d.efficiency);
            each(&r);
            reports.push(r);
        }
    }
    Ok(reports)
}
