//! Synthetic netflow streams for benchmarks and tests.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Zipf};
use sal_engine::{Label, NetflowTuple};

pub const POWER_LAW_IPS: u64 = 10_000;
pub const UNIFORM_IPS: u64 = 10_000;
pub const ZIPF_EXPONENT: f64 = 1.2;

/// How addresses are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyDist {
    /// Zipf over a fixed pool of addresses: a few hosts carry most flows.
    PowerLaw,
    /// Uniform over a larger pool.
    Uniform,
}

impl KeyDist {
    pub fn name(self) -> &'static str {
        match self {
            KeyDist::PowerLaw => "power-law",
            KeyDist::Uniform => "uniform",
        }
    }
}

impl FromStr for KeyDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power-law" => Ok(KeyDist::PowerLaw),
            "uniform" => Ok(KeyDist::Uniform),
            other => Err(format!(
                "unknown key distribution `{other}` (power-law or uniform)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub keys: KeyDist,
    /// Address pool size; 0 picks the default for `keys`.
    pub ips: u64,
    pub seed: u64,
    pub start_time: f64,
    /// Share of flows sent by malicious hosts, which are labeled.
    pub malicious_fraction: f64,
    /// Multiplier on the payload sizes of malicious flows.
    pub malicious_payload_scale: f64,
    pub labeled: bool,
}

impl SynthConfig {
    pub fn new(keys: KeyDist, seed: u64) -> Self {
        Self {
            keys,
            ips: 0,
            seed,
            start_time: 1_313_000_000.0,
            malicious_fraction: 0.0,
            malicious_payload_scale: 1.0,
            labeled: false,
        }
    }
}

/// Endless stream of valid netflow tuples.
pub struct Generator {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    zipf: Option<Zipf<f64>>,
    ips: u64,
    gap: Exp<f64>,
    bytes: LogNormal<f64>,
    duration: LogNormal<f64>,
    time: f64,
}

const HEADER_BYTES: i64 = 40;

fn address(i: u64) -> String {
    let i = i as u32;
    format!("10.{}.{}.{}", (i >> 16) & 0xff, (i >> 8) & 0xff, i & 0xff)
}

fn malicious_address(i: u64) -> String {
    format!("172.31.{}.{}", (i >> 8) & 0xff, i & 0xff)
}

impl Generator {
    pub fn new(cfg: SynthConfig) -> Self {
        let ips = match (cfg.ips, cfg.keys) {
            (0, KeyDist::PowerLaw) => POWER_LAW_IPS,
            (0, KeyDist::Uniform) => UNIFORM_IPS,
            (n, _) => n,
        };
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            zipf: (cfg.keys == KeyDist::PowerLaw)
                .then(|| Zipf::new(ips, ZIPF_EXPONENT).expect("valid zipf")),
            ips,
            gap: Exp::new(200.0).expect("valid rate"),
            bytes: LogNormal::new(6.5, 1.4).expect("valid log-normal"),
            duration: LogNormal::new(-1.0, 1.8).expect("valid log-normal"),
            time: cfg.start_time,
            cfg,
        }
    }

    fn host(&mut self) -> u64 {
        match &self.zipf {
            Some(z) => z.sample(&mut self.rng) as u64 - 1,
            None => self.rng.gen_range(0..self.ips),
        }
    }

    fn side(&mut self, scale: f64) -> (i64, i64, i64) {
        let payload = (self.bytes.sample(&mut self.rng) * scale).min(1e9) as i64;
        let packets = 1 + payload / 1400 + self.rng.gen_range(0..3);
        (payload, payload + packets * HEADER_BYTES, packets)
    }
}

impl Iterator for Generator {
    type Item = NetflowTuple;

    fn next(&mut self) -> Option<NetflowTuple> {
        self.time += self.gap.sample(&mut self.rng);
        let time = (self.time * 1e6).round() / 1e6;
        let malicious =
            self.cfg.malicious_fraction > 0.0 && self.rng.gen_bool(self.cfg.malicious_fraction);
        let source_ip = if malicious {
            malicious_address(self.rng.gen_range(0..64))
        } else {
            address(self.host())
        };
        let dest_ip = address(self.host());
        let scale = if malicious {
            self.cfg.malicious_payload_scale
        } else {
            1.0
        };
        let (src_payload, src_total, src_packets) = self.side(scale);
        let (dest_payload, dest_total, dest_packets) = self.side(1.0);
        let secs = time as i64;
        let tcp = self.rng.gen_bool(0.85);
        Some(NetflowTuple {
            time_seconds: time,
            parse_date: format!(
                "2011-08-10 {:02}:{:02}:{:02}",
                (secs / 3600) % 24,
                (secs / 60) % 60,
                secs % 60
            ),
            ip_layer_protocol: if tcp { "TCP" } else { "UDP" }.to_string(),
            source_ip,
            dest_ip,
            source_port: self.rng.gen_range(1024..65536),
            dest_port: [80, 443, 53, 22, 25, 8080][self.rng.gen_range(0..6)],
            duration_seconds: (self.duration.sample(&mut self.rng) * 1e3).round() / 1e3,
            src_payload_bytes: src_payload,
            dest_payload_bytes: dest_payload,
            src_total_bytes: src_total,
            dest_total_bytes: dest_total,
            src_packet_count: src_packets,
            dest_packet_count: dest_packets,
            label: self.cfg.labeled.then_some(if malicious {
                Label::Malicious
            } else {
                Label::Benign
            }),
        })
    }
}
