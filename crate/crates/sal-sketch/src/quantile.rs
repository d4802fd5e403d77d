use std::collections::VecDeque;

use crate::ring_len;

/// Sorted (value, weight) points summarising one closed basic window.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    items: u64,
    points: Vec<(f64, u64)>,
}

impl Block {
    /// Sort `values` and keep at most `max_points` representatives: each
    /// chunk of consecutive ranks is replaced by its middle element weighted
    /// by the chunk size, so every rank moves by at most half a chunk.
    fn compress(mut values: Vec<f64>, max_points: usize) -> Block {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let items = n as u64;
        if n <= max_points {
            return Block {
                items,
                points: values.into_iter().map(|v| (v, 1)).collect(),
            };
        }
        let mut points = Vec::with_capacity(max_points);
        for c in 0..max_points {
            let lo = c * n / max_points;
            let hi = (c + 1) * n / max_points;
            points.push((values[(lo + hi - 1) / 2], (hi - lo) as u64));
        }
        Block { items, points }
    }
}

/// Sliding-window median from per-basic-window summaries.
///
/// The filling basic window keeps raw values. A closed basic window is
/// compressed to about `1/eps` weighted points, so each block contributes
/// rank error at most `eps · basic`. `⌈window/basic⌉` closed blocks are
/// kept; a query covers at least `window` items on a long stream and has
/// rank error at most `eps` times the covered count.
#[derive(Debug, Clone)]
pub struct QuantileSketch {
    window: u64,
    basic: u64,
    eps: f64,
    max_points: usize,
    closed: VecDeque<Block>,
    /// Points of all closed blocks merged in value order.
    merged: Vec<(f64, u64)>,
    active: Vec<f64>,
    covered: u64,
}

impl QuantileSketch {
    pub fn new(window: u64, basic: u64, eps: f64) -> Self {
        assert!(window >= 1 && basic >= 1 && basic <= window);
        assert!(eps > 0.0 && eps < 1.0, "eps must be in (0, 1)");
        Self {
            window,
            basic,
            eps,
            max_points: (1.0 / eps).ceil() as usize,
            closed: VecDeque::new(),
            merged: Vec::new(),
            active: Vec::new(),
            covered: 0,
        }
    }

    pub fn insert(&mut self, x: f64) {
        let pos = self.active.partition_point(|&v| v.total_cmp(&x).is_le());
        self.active.insert(pos, x);
        self.covered += 1;
        if self.active.len() as u64 == self.basic {
            let full = std::mem::take(&mut self.active);
            self.closed
                .push_back(Block::compress(full, self.max_points));
            if self.closed.len() > ring_len(self.window, self.basic) {
                let old = self.closed.pop_front().expect("ring is non-empty");
                self.covered -= old.items;
            }
            self.merged = self
                .closed
                .iter()
                .flat_map(|b| b.points.iter().copied())
                .collect();
            self.merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }

    pub fn covered(&self) -> u64 {
        self.covered
    }

    /// Value at weighted rank `rank` (0-based) of the covered items.
    fn at_rank(&self, rank: u64) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut seen = 0u64;
        loop {
            let take_merged = match (self.merged.get(i), self.active.get(j)) {
                (Some(m), Some(&a)) => m.0.total_cmp(&a).is_le(),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => unreachable!("rank beyond covered items"),
            };
            let (value, weight) = if take_merged {
                i += 1;
                self.merged[i - 1]
            } else {
                j += 1;
                (self.active[j - 1], 1)
            };
            seen += weight;
            if seen > rank {
                return value;
            }
        }
    }

    /// Lower median: the item at rank `(n - 1) / 2`.
    pub fn median(&self) -> Option<f64> {
        self.quantile(0.5)
    }

    /// Item at rank `⌊q (n - 1)⌋`, for `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.covered == 0 {
            return None;
        }
        let rank = if q == 0.5 {
            (self.covered - 1) / 2
        } else {
            (q.clamp(0.0, 1.0) * (self.covered - 1) as f64).floor() as u64
        };
        Some(self.at_rank(rank))
    }

    pub fn stored_points(&self) -> usize {
        self.merged.len() + self.active.len()
    }

    pub fn closed_windows(&self) -> usize {
        self.closed.len()
    }

    pub fn dump(&self) -> String {
        serde_json::json!({
            "type": "QuantileSketch",
            "window": self.window,
            "basic": self.basic,
            "eps": self.eps,
            "closed": self.closed.len(),
            "covered": self.covered,
            "points": self.stored_points(),
            "median": self.median(),
        })
        .to_string()
    }
}
