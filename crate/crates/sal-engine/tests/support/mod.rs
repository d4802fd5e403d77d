//! Brute-force reference implementations shared by the engine tests and
//! the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sal_ast::{check, TupleSchema};
use sal_engine::{compile, Cell, Engine, EngineConfig, Feature, NetflowTuple};

pub const FIELDS: [&str; 7] = [
    "SrcTotalBytes",
    "DestTotalBytes",
    "DurationSeconds",
    "SrcPayloadBytes",
    "DestPayloadBytes",
    "SrcPacketCount",
    "DestPacketCount",
];

pub fn header(window: u64) -> String {
    format!(
        "WindowSize = {window};\nNetflows = VastStream(\"localhost\", 9999);\nPARTITION Netflows By SourceIp, DestIp;\nHASH SourceIp WITH IpHashFunction;\nHASH DestIp WITH IpHashFunction;\n"
    )
}

fn rng(seed: u64, stream: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Random flows over `dests` destination and `sources` source hosts.
/// Durations are multiples of 1/4 so window sums stay exact.
pub fn random_flows(r: &mut ChaCha8Rng, len: usize, dests: u32, sources: u32) -> Vec<NetflowTuple> {
    let mut t = 1_365_582_000.0;
    (0..len)
        .map(|_| {
            t += r.gen_range(0..8) as f64 * 0.5;
            NetflowTuple {
                time_seconds: t,
                parse_date: "2013-04-10 08:00:00".into(),
                ip_layer_protocol: if r.gen_bool(0.8) { "TCP" } else { "UDP" }.into(),
                source_ip: format!("172.16.0.{}", r.gen_range(1..=sources)),
                dest_ip: format!("10.0.0.{}", r.gen_range(1..=dests)),
                source_port: r.gen_range(1024..65536),
                dest_port: [22, 53, 80, 443][r.gen_range(0..4)],
                duration_seconds: r.gen_range(0..400) as f64 * 0.25,
                src_payload_bytes: r.gen_range(0..50_000),
                dest_payload_bytes: r.gen_range(0..100_000),
                src_total_bytes: r.gen_range(40..60_000),
                dest_total_bytes: r.gen_range(40..100_000),
                src_packet_count: r.gen_range(1..200),
                dest_packet_count: r.gen_range(1..300),
                label: None,
            }
        })
        .collect()
}

fn field(t: &NetflowTuple, name: &str) -> f64 {
    match name {
        "SrcTotalBytes" => t.src_total_bytes as f64,
        "DestTotalBytes" => t.dest_total_bytes as f64,
        "DurationSeconds" => t.duration_seconds,
        "SrcPayloadBytes" => t.src_payload_bytes as f64,
        "DestPayloadBytes" => t.dest_payload_bytes as f64,
        "SrcPacketCount" => t.src_packet_count as f64,
        "DestPacketCount" => t.dest_packet_count as f64,
        other => panic!("unknown field {other}"),
    }
}

/// Sliding window of the last `n` values with running sums, computed the
/// textbook way.
struct NaiveWindow {
    n: usize,
    values: VecDeque<f64>,
    sum: f64,
    sum_sq: f64,
}

impl NaiveWindow {
    fn new(n: usize) -> Self {
        Self {
            n,
            values: VecDeque::new(),
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.values.push_back(x);
        self.sum += x;
        self.sum_sq += x * x;
        if self.values.len() > self.n {
            let old = self.values.pop_front().unwrap();
            self.sum -= old;
            self.sum_sq -= old * old;
        }
    }

    fn mean(&self) -> f64 {
        self.sum / self.values.len() as f64
    }

    fn var(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.sum / n;
        (self.sum_sq / n - mean * mean).max(0.0)
    }
}

/// Per-key ave/var over both groupings in exact mode, compared cell by
/// cell with a naive per-key reimplementation. Returns the number of
/// cells compared.
pub fn naive_equivalence(streams: usize, len: usize, seed: u64) -> Result<u64, String> {
    let mut compared = 0;
    for s in 0..streams {
        let mut r = rng(seed, s);
        let window = if r.gen_bool(0.5) {
            len as u64
        } else {
            r.gen_range(20..len as u64)
        };
        let mut src = header(window);
        let mut names = Vec::new();
        for g in ["DestIp", "SourceIp"] {
            src.push_str(&format!("By{g} = STREAM Netflows BY {g};\n"));
            for f in FIELDS {
                for op in ["ave", "var"] {
                    let name = format!("{op}{f}By{g}");
                    src.push_str(&format!("{name} = FOREACH By{g} GENERATE {op}({f});\n"));
                    names.push((g, f, op));
                }
            }
        }
        let program = check(&src, &TupleSchema::netflow()).map_err(|e| e.to_string())?;
        let engine = Engine::new(
            Arc::new(compile(program)),
            EngineConfig {
                epsilon: 0.0,
                ..EngineConfig::default()
            },
        );
        let flows = random_flows(&mut r, len, 40, 60);
        let mut naive: HashMap<(&str, String, &str), NaiveWindow> = HashMap::new();
        for (i, t) in flows.iter().enumerate() {
            let row = t.to_row();
            engine.process_tuple(&row);
            let cells = engine.emit_feature_row(&row);
            for g in ["DestIp", "SourceIp"] {
                let key = if g == "DestIp" {
                    &t.dest_ip
                } else {
                    &t.source_ip
                };
                for f in FIELDS {
                    naive
                        .entry((g, key.clone(), f))
                        .or_insert_with(|| NaiveWindow::new(window as usize))
                        .push(field(t, f));
                }
            }
            for (cell, (g, f, op)) in cells.iter().zip(&names) {
                let key = if *g == "DestIp" {
                    &t.dest_ip
                } else {
                    &t.source_ip
                };
                let w = &naive[&(*g, key.clone(), *f)];
                let want = if *op == "ave" { w.mean() } else { w.var() };
                if *cell != Cell::Value(want) {
                    return Err(format!(
                        "stream {s} tuple {i}: {op}({f}) by {g} = {cell:?}, naive {want} (window {window})"
                    ));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}

const COLLAPSE_PROGRAM: &str = "DestSrc = STREAM Netflows BY DestIp, SourceIp;
PairBytes = FOREACH DestSrc GENERATE ave(SrcTotalBytes);
PairPackets = FOREACH DestSrc GENERATE sum(SrcPacketCount);
DestOnly = COLLAPSE DestSrc BY DestIp FOR PairBytes, PairPackets;
AveBytes = FOREACH DestOnly GENERATE ave(PairBytes);
VarBytes = FOREACH DestOnly GENERATE var(PairBytes);
MedPackets = FOREACH DestOnly GENERATE median(PairPackets);
SumPackets = FOREACH DestOnly GENERATE sum(PairPackets);
DistinctPackets = FOREACH DestOnly GENERATE countdistinct(PairPackets);
SrcOnly = COLLAPSE DestSrc BY SourceIp;
AveDuration = FOREACH SrcOnly GENERATE ave(DurationSeconds);
VarDestPort = FOREACH SrcOnly GENERATE var(DestPort);
";

/// Residual columns of `SrcOnly`: the non-key numeric netflow columns.
fn residual_columns(t: &NetflowTuple) -> Vec<f64> {
    vec![
        t.time_seconds,
        t.source_port as f64,
        t.dest_port as f64,
        t.duration_seconds,
        t.src_payload_bytes as f64,
        t.dest_payload_bytes as f64,
        t.src_total_bytes as f64,
        t.dest_total_bytes as f64,
        t.src_packet_count as f64,
        t.dest_packet_count as f64,
    ]
}

/// The set semantics of COLLAPSE: for each kept key l, M_l maps every
/// dropped-key value seen with l to the most recent residual tuple.
#[derive(Default)]
struct CollapseOracle {
    maps: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl CollapseOracle {
    fn update(&mut self, l: &str, k_minus: &str, r: Vec<f64>) -> &BTreeMap<String, Vec<f64>> {
        let m = self.maps.entry(l.to_string()).or_default();
        m.insert(k_minus.to_string(), r);
        m
    }
}

fn column(m: &BTreeMap<String, Vec<f64>>, j: usize) -> Vec<f64> {
    m.values().map(|r| r[j]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn lower_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[(s.len() - 1) / 2]
}

fn distinct(v: &[f64]) -> f64 {
    let mut s: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
    s.sort();
    s.dedup();
    s.len() as f64
}

/// Engine map features and collapsed statistics against the set
/// semantics on random keyed streams, exactly. Returns checks made.
pub fn collapse_equivalence(streams: usize, seed: u64) -> Result<u64, String> {
    let mut checks = 0;
    for s in 0..streams {
        let mut r = rng(seed, s);
        let len = r.gen_range(100..3000);
        let src = format!("{}{COLLAPSE_PROGRAM}", header(100_000));
        let program = check(&src, &TupleSchema::netflow()).map_err(|e| e.to_string())?;
        let engine = Engine::new(
            Arc::new(compile(program)),
            EngineConfig {
                epsilon: 0.0,
                ..EngineConfig::default()
            },
        );
        let fm = engine.feature_map();
        let (dests, sources) = (r.gen_range(1..10), r.gen_range(1..40));
        let flows = random_flows(&mut r, len, dests, sources);
        let mut pair: HashMap<(String, String), (f64, f64, f64)> = HashMap::new();
        let mut by_dest = CollapseOracle::default();
        let mut by_src = CollapseOracle::default();
        for (i, t) in flows.iter().enumerate() {
            engine.process_tuple(&t.to_row());
            let p = pair
                .entry((t.dest_ip.clone(), t.source_ip.clone()))
                .or_insert((0.0, 0.0, 0.0));
            p.0 += t.src_total_bytes as f64;
            p.1 += 1.0;
            p.2 += t.src_packet_count as f64;
            let r_dest = vec![p.0 / p.1, p.2];

            let m = by_dest.update(&t.dest_ip, &t.source_ip, r_dest);
            let fail = |what: &str, got: Option<Feature>, want: String| {
                format!(
                    "stream {s} tuple {i} key {}: {what} = {got:?}, oracle {want}",
                    t.dest_ip
                )
            };
            match fm.get(&t.dest_ip, "DestOnly") {
                Some(Feature::Map(got)) => {
                    let got: BTreeMap<String, Vec<f64>> = got
                        .iter()
                        .map(|(k, v)| (k.to_string(), v.to_vec()))
                        .collect();
                    if &got != m {
                        return Err(format!(
                            "stream {s} tuple {i}: M_l differs for {}",
                            t.dest_ip
                        ));
                    }
                }
                other => return Err(fail("DestOnly", other, format!("{m:?}"))),
            }
            let bytes = column(m, 0);
            let packets = column(m, 1);
            for (name, want) in [
                ("AveBytes", mean(&bytes)),
                ("VarBytes", var(&bytes)),
                ("MedPackets", lower_median(&packets)),
                ("SumPackets", packets.iter().sum()),
                ("DistinctPackets", distinct(&packets)),
            ] {
                let got = fm.get(&t.dest_ip, name);
                if got != Some(Feature::Scalar(want)) {
                    return Err(fail(name, got, want.to_string()));
                }
                checks += 1;
            }

            let m = by_src.update(&t.source_ip, &t.dest_ip, residual_columns(t));
            match fm.get(&t.source_ip, "SrcOnly") {
                Some(Feature::Map(got)) if got.len() == m.len() => {}
                other => return Err(format!("stream {s} tuple {i}: SrcOnly {other:?}")),
            }
            for (name, want) in [
                ("AveDuration", mean(&column(m, 3))),
                ("VarDestPort", var(&column(m, 2))),
            ] {
                let got = fm.get(&t.source_ip, name);
                if got != Some(Feature::Scalar(want)) {
                    return Err(format!(
                        "stream {s} tuple {i} key {}: {name} = {got:?}, oracle {want}",
                        t.source_ip
                    ));
                }
                checks += 1;
            }
        }
    }
    Ok(checks)
}
