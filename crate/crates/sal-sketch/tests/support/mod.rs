//! Brute-force sliding-window oracles and the randomized comparison suites
//! run against every sketch.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Zipf};
use sal_sketch::*;

/// Result of one randomized suite.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub streams: usize,
    pub checks: u64,
    pub failures: u64,
    /// Largest observed error, in the unit the suite's bound is stated in.
    pub worst: f64,
    pub first_failure: Option<String>,
    pub passed: bool,
}

impl Outcome {
    fn new(name: &'static str, streams: usize) -> Self {
        Self {
            name,
            streams,
            checks: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
            passed: false,
        }
    }

    fn check(&mut self, ok: bool, err: f64, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if err.is_finite() && err > self.worst {
            self.worst = err;
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    fn finish_all(mut self) -> Self {
        self.passed = self.failures == 0;
        self
    }
}

fn rng(seed: u64, stream: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Stream length in 10..=20_000 and window in 10..=5_000.
fn shape(r: &mut ChaCha8Rng) -> (usize, u64) {
    (r.gen_range(10..=20_000), r.gen_range(10..=5_000))
}

/// Non-negative integer values from one of several shapes.
pub fn numeric_stream(r: &mut ChaCha8Rng, len: usize) -> Vec<u64> {
    match r.gen_range(0..6) {
        0 => {
            let hi = r.gen_range(1..100_000);
            (0..len).map(|_| r.gen_range(0..=hi)).collect()
        }
        1 => {
            let ln = LogNormal::new(r.gen_range(3.0..9.0), r.gen_range(0.2..2.0)).unwrap();
            (0..len)
                .map(|_| {
                    let v: f64 = ln.sample(r);
                    v.round() as u64
                })
                .collect()
        }
        2 => {
            let z = Zipf::new(10_000, 1.2).unwrap();
            (0..len).map(|_| z.sample(r) as u64).collect()
        }
        3 => {
            // level shifts
            let mut level = r.gen_range(10.0..10_000.0f64);
            (0..len)
                .map(|_| {
                    if r.gen_bool(0.001) {
                        level = r.gen_range(10.0..10_000.0);
                    }
                    let noise = Normal::new(0.0, level * 0.2).unwrap().sample(r);
                    (level + noise).max(0.0).round() as u64
                })
                .collect()
        }
        4 => {
            // slow ramp with noise
            let slope = r.gen_range(0.01..2.0);
            (0..len)
                .map(|i| (i as f64 * slope + r.gen_range(0.0..50.0)).round() as u64)
                .collect()
        }
        _ => {
            // bimodal small/large flows
            (0..len)
                .map(|_| {
                    if r.gen_bool(0.1) {
                        r.gen_range(50_000..60_000)
                    } else {
                        r.gen_range(40..80)
                    }
                })
                .collect()
        }
    }
}

/// Exact windowed Σx and Σx² over integers.
struct Moments {
    window: usize,
    items: VecDeque<u64>,
    sum: i128,
    sum_sq: i128,
}

impl Moments {
    fn new(window: u64) -> Self {
        Self {
            window: window as usize,
            items: VecDeque::new(),
            sum: 0,
            sum_sq: 0,
        }
    }

    fn push(&mut self, x: u64) {
        self.items.push_back(x);
        self.sum += x as i128;
        self.sum_sq += (x as i128) * (x as i128);
        if self.items.len() > self.window {
            let old = self.items.pop_front().unwrap() as i128;
            self.sum -= old;
            self.sum_sq -= old * old;
        }
    }

    fn n(&self) -> i128 {
        self.items.len() as i128
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.n() as f64
    }

    fn variance(&self) -> f64 {
        let n = self.n();
        (n * self.sum_sq - self.sum * self.sum) as f64 / (n * n) as f64
    }
}

fn rel(est: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if est.abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (est - truth).abs() / truth.abs()
    }
}

const EPS_CHOICES: [f64; 3] = [0.01, 0.02, 0.05];

/// Exponential-histogram count of ones: relative error ≤ ε on every prefix.
pub fn exp_histogram_count(streams: usize, seed: u64) -> Outcome {
    let mut out = Outcome::new("exp-histogram count", streams);
    for s in 0..streams {
        let mut r = rng(seed, s);
        let (len, window) = shape(&mut r);
        let eps = EPS_CHOICES[r.gen_range(0..3)];
        let density = r.gen_range(0.01..1.0);
        let mut h = ExpHistogram::new(eps, window);
        let mut bits = VecDeque::new();
        let mut ones = 0u64;
        for i in 0..len {
            let bit = r.gen_bool(density) as u64;
            h.insert(bit);
            bits.push_back(bit);
            ones += bit;
            if bits.len() > window as usize {
                ones -= bits.pop_front().unwrap();
            }
            let err = rel(h.estimate(), ones as f64);
            out.check(err <= eps, err / eps, || {
                format!(
                    "stream {s} step {i}: est {} true {ones} eps {eps}",
                    h.estimate()
                )
            });
        }
        if let Err(e) = h.check_invariants() {
            out.check(false, f64::NAN, || format!("stream {s}: {e}"));
        }
    }
    out.finish_all()
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Sum,
    Mean,
    Variance,
}

/// SumVarSketch sum/mean/variance: relative error ≤ 5ε on every prefix.
pub fn sum_var(which: Moment, streams: usize, seed: u64) -> Outcome {
    let name = match which {
        Moment::Sum => "sum",
        Moment::Mean => "ave",
        Moment::Variance => "var",
    };
    let mut out = Outcome::new(name, streams);
    for s in 0..streams {
        let mut r = rng(seed, s);
        let (len, window) = shape(&mut r);
        let eps = EPS_CHOICES[r.gen_range(0..3)];
        let values = numeric_stream(&mut r, len);
        let mut sk = SumVarSketch::new(eps, window);
        let mut m = Moments::new(window);
        for (i, &x) in values.iter().enumerate() {
            sk.insert(x as f64);
            m.push(x);
            let (est, truth) = match which {
                Moment::Sum => (sk.sum().unwrap(), m.sum as f64),
                Moment::Mean => (sk.mean().unwrap(), m.mean()),
                Moment::Variance => (sk.variance().unwrap(), m.variance()),
            };
            let err = rel(est, truth);
            out.check(err <= 5.0 * eps, err / eps, || {
                format!("stream {s} step {i}: est {est} true {truth} eps {eps} window {window}")
            });
        }
        if let Err(e) = sk.check_invariants() {
            out.check(false, f64::NAN, || format!("stream {s}: {e}"));
        }
    }
    out.finish_all()
}

fn checkpoints(len: usize, count: usize) -> HashSet<usize> {
    let mut set: HashSet<usize> = (1..=count)
        .map(|c| (c * len / count).saturating_sub(1))
        .collect();
    set.insert(0);
    set
}

/// Median rank error ≤ εN + b against the last N items.
pub fn median(streams: usize, seed: u64) -> Outcome {
    let mut out = Outcome::new("median", streams);
    for s in 0..streams {
        let mut r = rng(seed, s);
        let (len, window) = shape(&mut r);
        let eps = EPS_CHOICES[r.gen_range(0..3)];
        let basic = (window / 10).max(1);
        let values = numeric_stream(&mut r, len);
        let mut q = QuantileSketch::new(window, basic, eps);
        let check_at = checkpoints(len, 50);
        for (i, &x) in values.iter().enumerate() {
            q.insert(x as f64);
            if !check_at.contains(&i) {
                continue;
            }
            let lo = (i + 1).saturating_sub(window as usize);
            let win = &values[lo..=i];
            let v = q.median().unwrap();
            let below = win.iter().filter(|&&w| (w as f64) < v).count() as f64;
            let at_or_below = win.iter().filter(|&&w| (w as f64) <= v).count() as f64;
            let target = (win.len() as f64 - 1.0) / 2.0;
            // distance from the target rank to the ranks v occupies
            let err = if target < below {
                below - target
            } else if target > at_or_below - 1.0 {
                target - (at_or_below - 1.0)
            } else {
                0.0
            };
            let tol = eps * window as f64 + basic as f64;
            out.check(err <= tol, err / tol, || {
                format!("stream {s} step {i}: median {v} rank error {err} > {tol}")
            });
        }
    }
    out.finish_all()
}

/// Top-k frequency error ≤ b/N + 0.01 on Zipf(1.2) streams.
pub fn topk(streams: usize, seed: u64) -> Outcome {
    let mut out = Outcome::new("topk", streams);
    let zipf = Zipf::new(1000, 1.2).unwrap();
    for s in 0..streams {
        let mut r = rng(seed, s);
        let (len, window) = shape(&mut r);
        let basic = r.gen_range(1..=window.div_ceil(5));
        let k = r.gen_range(1..=5);
        let items: Vec<String> = (0..len)
            .map(|_| (zipf.sample(&mut r) as u64).to_string())
            .collect();
        let mut t = BasicWindowTopK::new(window, basic, k);
        let check_at = checkpoints(len, 50);
        let tol = basic as f64 / window as f64 + 0.01;
        for (i, item) in items.iter().enumerate() {
            t.insert(item);
            if !check_at.contains(&i) {
                continue;
            }
            let lo = (i + 1).saturating_sub(window as usize);
            let win = &items[lo..=i];
            let mut counts: HashMap<&str, u64> = HashMap::new();
            for w in win {
                *counts.entry(w).or_default() += 1;
            }
            let n = win.len() as f64;
            let mut freqs: Vec<f64> = counts.values().map(|&c| c as f64 / n).collect();
            freqs.sort_by(|a, b| b.total_cmp(a));
            let top = t.top().unwrap();
            let mut err: f64 = 0.0;
            for (rank, (item, f)) in top.iter().enumerate() {
                let truth_rank = freqs.get(rank).copied().unwrap_or(0.0);
                let truth_item = counts.get(item.as_str()).map_or(0.0, |&c| c as f64 / n);
                err = err.max((f - truth_rank).abs()).max((f - truth_item).abs());
            }
            if top.len() < k.min(freqs.len()) {
                err = f64::INFINITY;
            }
            out.check(err <= tol, err / tol, || {
                format!("stream {s} step {i}: topk error {err} > {tol}")
            });
        }
    }
    out.finish_all()
}

/// Distinct count within 5% of the exact count over the covered suffix in
/// at least 95% of trials, precision 14.
pub fn countdistinct(streams: usize, seed: u64) -> Outcome {
    let mut out = Outcome::new("countdistinct", streams);
    let mut good = 0usize;
    for s in 0..streams {
        let mut r = rng(seed, s);
        let (len, window) = shape(&mut r);
        let basic = (window / 10).max(1);
        let universe = r.gen_range(1..=50_000u64);
        let values: Vec<u64> = (0..len).map(|_| r.gen_range(0..universe)).collect();
        let mut d = DistinctSketch::with_seed(window, basic, 14, seed);
        for v in &values {
            d.insert(v.to_string().as_bytes());
        }
        let covered = d.covered() as usize;
        let exact = values[len - covered..].iter().collect::<HashSet<_>>().len() as f64;
        let est = d.estimate().unwrap();
        let err = rel(est, exact);
        out.checks += 1;
        if err <= 0.05 {
            good += 1;
        } else if out.first_failure.is_none() {
            out.first_failure = Some(format!("stream {s}: est {est} exact {exact}"));
        }
        out.worst = out.worst.max(err);
    }
    out.failures = (streams - good) as u64;
    out.passed = good as f64 >= 0.95 * streams as f64;
    out
}

/// All six operator suites plus the exponential-histogram count suite.
pub fn all(streams: usize, seed: u64) -> Vec<Outcome> {
    vec![
        exp_histogram_count(streams, seed),
        sum_var(Moment::Sum, streams, seed),
        sum_var(Moment::Mean, streams, seed),
        sum_var(Moment::Variance, streams, seed),
        topk(streams, seed),
        median(streams, seed),
        countdistinct(streams, seed),
    ]
}
