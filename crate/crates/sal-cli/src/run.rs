//! The `run` command: program + tuples -> feature CSV and metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sal_cluster::{Cluster, ClusterConfig, ClusterRun, Ingest, NodeTopology, Sink};
use sal_engine::{compile, csv_header, format_row, Cell, EngineConfig, Mode};
use serde_json::{json, Value as Json};

use crate::check::load_program;
use crate::input::{InputSource, TupleReader};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub program: PathBuf,
    pub input: InputSource,
    pub mode: Mode,
    pub nodes: usize,
    /// TCP between the nodes listed here; in-process queues otherwise.
    pub topology: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub batch_size: usize,
    pub metrics: Option<PathBuf>,
    /// Engine worker threads per node.
    pub workers: usize,
    pub epsilon: f64,
    pub drop_rate: f64,
    /// Where to write the merged feature-map dump.
    pub dump: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        program: impl Into<PathBuf>,
        input: InputSource,
        output: impl Into<PathBuf>,
    ) -> Self {
        Self {
            program: program.into(),
            input,
            mode: Mode::FeaturesOnly,
            nodes: 1,
            topology: None,
            output: output.into(),
            seed: 0,
            batch_size: sal_cluster::DEFAULT_BATCH_SIZE,
            metrics: None,
            workers: 1,
            epsilon: sal_engine::EngineConfig::default().epsilon,
            drop_rate: 0.0,
            dump: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Valid tuples read.
    pub tuples: u64,
    pub malformed: u64,
    /// Tuples missing a partition key.
    pub rejected: u64,
    /// Tuples removed inside the pipeline (not-ready or arithmetic).
    pub drops: u64,
    pub filtered: u64,
    /// Pushes lost to the drop-rate knob.
    pub transport_drops: u64,
    pub rows: u64,
    pub wall_seconds: f64,
    pub throughput: f64,
    pub per_node: Vec<(u64, f64)>,
}

impl RunSummary {
    pub fn to_json(&self) -> Json {
        json!({
            "event": "run",
            "tuples": self.tuples,
            "malformed": self.malformed,
            "rejected": self.rejected,
            "drops": self.drops,
            "filtered": self.filtered,
            "transport_drops": self.transport_drops,
            "rows": self.rows,
            "wall_seconds": self.wall_seconds,
            "throughput": self.throughput,
            "nodes": self.per_node.len(),
            "per_node": self.per_node.iter().enumerate().map(|(j, (received, cpu))| json!({
                "node": j,
                "received": received,
                "cpu_seconds": cpu,
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn cluster_config(cfg: &RunConfig) -> Result<ClusterConfig> {
    let mut cc = match &cfg.topology {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read topology {}", path.display()))?;
            let topo = NodeTopology::parse(&text)?;
            if cfg.nodes != 1 && cfg.nodes != topo.nodes() {
                bail!(
                    "--nodes {} disagrees with the {} nodes of {}",
                    cfg.nodes,
                    topo.nodes(),
                    path.display()
                );
            }
            ClusterConfig::tcp(topo)
        }
        None => ClusterConfig::in_process(cfg.nodes),
    };
    cc.batch_size = cfg.batch_size;
    cc.seed = cfg.seed;
    cc.drop_rate = cfg.drop_rate;
    cc.engine = EngineConfig {
        epsilon: cfg.epsilon,
        hll_seed: cfg.seed,
        workers: cfg.workers,
        ..EngineConfig::default()
    };
    Ok(cc)
}

fn write_lines(path: &PathBuf, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let program = load_program(&cfg.program)?;
    let known = program.warnings.len();
    let graph = Arc::new(compile(program));
    for w in &graph.warnings[known..] {
        eprintln!("{}:{w}", cfg.program.display());
    }
    let cluster = Cluster::new(graph.clone(), cluster_config(cfg)?)?;

    let reader = TupleReader::new(cfg.input.open()?)?;
    if cfg.mode == Mode::Train && !reader.labeled() && !reader.is_empty() {
        bail!("train mode needs labeled input (a trailing `Label` column)");
    }
    let stats = reader.stats();

    let file = File::create(&cfg.output)
        .with_context(|| format!("cannot create {}", cfg.output.display()))?;
    let mut out = BufWriter::with_capacity(1 << 16, file);
    writeln!(out, "{}", csv_header(&graph, cfg.mode))?;
    let mut rows = 0u64;
    let mode = cfg.mode;
    let mut sink = |i: &Ingest, cells: &[Cell]| {
        rows += 1;
        let line = format_row(&i.row, cells, i.label, mode);
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")
    };
    let result: ClusterRun = cluster.run_single(reader, Some(&mut sink as Sink<'_>))?;
    out.flush()?;
    drop(out);
    stats.check()?;

    let wall = start.elapsed().as_secs_f64();
    let engine = result.engine_metrics();
    let summary = RunSummary {
        tuples: result.ingested(),
        malformed: stats.malformed(),
        rejected: result.rejected(),
        drops: engine.drops(),
        filtered: engine.filtered,
        transport_drops: result.dropped(),
        rows,
        wall_seconds: wall,
        throughput: if wall > 0.0 {
            result.ingested() as f64 / wall
        } else {
            0.0
        },
        per_node: result
            .nodes
            .iter()
            .map(|n| (n.received, n.cpu_seconds))
            .collect(),
    };
    if let Some(path) = &cfg.metrics {
        write_lines(path, [summary.to_json().to_string()])?;
    }
    if let Some(path) = &cfg.dump {
        let (map, conflicts) = result.merged_feature_map();
        if conflicts > 0 {
            eprintln!("warning: {conflicts} feature entries were computed on more than one node");
        }
        write_lines(path, map.dump_lines())?;
    }
    Ok(summary)
}
