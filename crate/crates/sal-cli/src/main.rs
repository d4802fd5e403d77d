use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sal_cli::bench::{self, BenchConfig, BenchReport};
use sal_cli::check::check_file;
use sal_cli::input::{InputSource, TupleReader};
use sal_cli::pipeline::{gen_pipeline, DEFAULT_FIELDS, DEFAULT_GROUPINGS};
use sal_cli::run::{run, RunConfig};
use sal_cli::synth::{Generator, KeyDist, SynthConfig};
use sal_cli::{effective_seed, split};
use sal_engine::{Mode, NetflowTuple};

#[derive(Parser)]
#[command(
    name = "sal",
    version,
    about = "Streaming Analytics Language toolchain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program. Exit 0 ok, 1 syntax, 2 semantic, 3 I/O.
    Check { program: PathBuf },
    /// Run a program over a CSV file or socket and write feature rows.
    Run {
        /// CSV path, `-` for stdin, or tcp://host:port for framed tuples.
        #[arg(short, long)]
        input: InputSource,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Accept one connection and run a program over the framed tuples it sends.
    Serve {
        /// Address to listen on.
        #[arg(long, default_value = "127.0.0.1:9999")]
        listen: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print the ave/var feature pipeline for the given fields and groupings.
    GenPipeline {
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = DEFAULT_FIELDS.map(String::from))]
        fields: Vec<String>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = DEFAULT_GROUPINGS.map(String::from))]
        groupings: Vec<String>,
        #[arg(long, default_value_t = bench::DEFAULT_WINDOW)]
        window: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split a labeled CSV in time so both parts hold as many malicious tuples.
    Split {
        input: PathBuf,
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
    },
    /// Weak-scaling benchmark on synthetic streams.
    Bench {
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
        nodes: Vec<usize>,
        /// Key distributions: uniform, power-law.
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values = ["uniform", "power-law"])]
        keys: Vec<KeyDist>,
        #[arg(long, default_value_t = bench::DEFAULT_TUPLES_PER_NODE)]
        tuples_per_node: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = sal_cluster::DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Earlier bench output supplying one-node times.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write one JSON line per run here as well as to stdout.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Write a synthetic netflow CSV.
    Synth {
        #[arg(long, default_value_t = 100_000)]
        tuples: u64,
        #[arg(long, default_value = "power-law")]
        keys: KeyDist,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of flows from malicious hosts; adds a Label column.
        #[arg(long)]
        malicious_fraction: Option<f64>,
        /// Payload size multiplier for malicious flows.
        #[arg(long, default_value_t = 1.0)]
        payload_scale: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    #[arg(short, long)]
    program: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// train, test or features-only.
    #[arg(long, default_value = "features-only")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    /// `nodeId host basePort` lines; nodes then talk over TCP.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = sal_cluster::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// JSON-lines metrics file; metrics go to stdout otherwise.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Probability of losing a tuple pushed between nodes.
    #[arg(long, default_value_t = 0.0)]
    drop_rate: f64,
    /// Write the merged feature-map dump (JSON lines) here.
    #[arg(long)]
    dump: Option<PathBuf>,
}

impl RunOpts {
    fn config(self, input: InputSource) -> Result<RunConfig> {
        Ok(RunConfig {
            program: self.program,
            input,
            mode: self.mode,
            nodes: self.nodes,
            topology: self.topology,
            output: self.output,
            seed: effective_seed(self.seed)?,
            batch_size: self.batch_size,
            metrics: self.metrics,
            workers: self.workers,
            epsilon: self.epsilon,
            drop_rate: self.drop_rate,
            dump: self.dump,
        })
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Check { .. } => unreachable!("handled in main"),
        Command::Run { input, opts } => {
            let cfg = opts.config(input)?;
            let summary = run(&cfg)?;
            if cfg.metrics.is_none() {
                println!("{}", summary.to_json());
            }
        }
        Command::Serve { listen, opts } => {
            let cfg = opts.config(InputSource::Listen(listen))?;
            let summary = run(&cfg)?;
            if cfg.metrics.is_none() {
                println!("{}", summary.to_json());
            }
        }
        Command::GenPipeline {
            fields,
            groupings,
            window,
            output: path,
        } => {
            let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
            let groupings: Vec<&str> = groupings.iter().map(String::as_str).collect();
            let src = gen_pipeline(&fields, &groupings, window)?;
            let mut w = output(&path)?;
            w.write_all(src.as_bytes())?;
            w.flush()?;
        }
        Command::Split {
            input,
            first,
            second,
        } => {
            let mut reader = TupleReader::new(InputSource::Csv(input.clone()).open()?)?;
            if !reader.labeled() {
                anyhow::bail!("{} has no Label column", input.display());
            }
            let stats = reader.stats();
            let mut tuples = Vec::new();
            while let Some((t, _)) = reader.next_tuple() {
                tuples.push(t);
            }
            stats.check()?;
            let s = split::split(&mut tuples)?;
            for (path, range) in [(&first, s.p1.clone()), (&second, s.p2.clone())] {
                let mut w = output(&Some(path.clone()))?;
                writeln!(w, "{}", NetflowTuple::header(true))?;
                for t in &tuples[range] {
                    writeln!(w, "{}", t.to_csv_line(true))?;
                }
                w.flush()?;
            }
            let mut report = s.to_json();
            report["malformed"] = stats.malformed().into();
            println!("{report}");
        }
        Command::Bench {
            nodes,
            keys,
            tuples_per_node,
            seed,
            batch_size,
            workers,
            epsilon,
            baseline,
            metrics,
        } => {
            let cfg = BenchConfig {
                nodes,
                keys,
                tuples_per_node,
                seed: effective_seed(seed)?,
                batch_size,
                workers,
                epsilon,
            };
            let baseline = match baseline {
                Some(p) => read_reports(&p)?,
                None => Vec::new(),
            };
            let mut sink = match &metrics {
                Some(_) => Some(output(&metrics)?),
                None => None,
            };
            let graph = bench::default_graph();
            let mut failed = None;
            bench::bench(&graph, &cfg, &baseline, |r| {
                let line = r.to_json().to_string();
                println!("{line}");
                if let Some(w) = sink.as_mut() {
                    if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                        failed.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = failed {
                return Err(e).context("writing metrics");
            }
        }
        Command::Synth {
            tuples,
            keys,
            seed,
            malicious_fraction,
            payload_scale,
            output: path,
        } => {
            let labeled = malicious_fraction.is_some();
            let cfg = SynthConfig {
                malicious_fraction: malicious_fraction.unwrap_or(0.0),
                malicious_payload_scale: payload_scale,
                labeled,
                ..SynthConfig::new(keys, effective_seed(seed)?)
            };
            if !(0.0..=1.0).contains(&cfg.malicious_fraction) {
                anyhow::bail!("malicious fraction must be in [0, 1]");
            }
            let mut w = output(&path)?;
            writeln!(w, "{}", NetflowTuple::header(labeled))?;
            for t in Generator::new(cfg).take(tuples as usize) {
                writeln!(w, "{}", t.to_csv_line(labeled))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn read_reports(path: &PathBuf) -> Result<Vec<BenchReport>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .with_context(|| format!("bad JSON in {}", path.display()))?;
        if let Some(r) = BenchReport::from_json(&v) {
            out.push(r);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Check { program } = &cli.command {
        let outcome = check_file(program);
        eprint!("{}", outcome.diagnostics);
        if let Some(p) = &outcome.program {
            println!(
                "{}: ok ({} statements, {} features)",
                program.display(),
                p.statements.len(),
                p.features.len()
            );
        }
        return ExitCode::from(outcome.code as u8);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
