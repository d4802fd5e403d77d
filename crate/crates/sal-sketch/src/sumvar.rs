use std::collections::VecDeque;

/// Bucket of consecutive arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    count: u64,
    sum: f64,
    sum_sq: f64,
    sum_abs: f64,
    /// Arrival index of the newest item.
    last: u64,
}

impl Bucket {
    fn merge(older: &Bucket, newer: &Bucket) -> Bucket {
        Bucket {
            count: older.count + newer.count,
            sum: older.sum + newer.sum,
            sum_sq: older.sum_sq + newer.sum_sq,
            sum_abs: older.sum_abs + newer.sum_abs,
            last: newer.last,
        }
    }

    /// Squared deviation of the bucket's items around their own mean.
    fn spread(&self) -> f64 {
        (self.sum_sq - self.sum * self.sum / self.count as f64).max(0.0)
    }
}

const MIN_COMPACT: usize = 32;

/// Sliding-window sum, mean and variance over real values.
///
/// A weighted exponential histogram: buckets of consecutive arrivals carry
/// count, sum, sum of squares and sum of magnitudes. Because buckets cover
/// consecutive arrivals the window count is exact; only the share of the
/// oldest, straddling bucket is estimated, in proportion to its count.
/// Compaction merges a bucket into its older neighbour while the merged
/// magnitude stays within `eps` of the magnitude of everything newer, and
/// appending it to everything newer raises that suffix's squared deviation
/// by at most a factor `1 + eps`. `eps = 0` disables
/// compaction and gives exact results.
#[derive(Debug, Clone)]
pub struct SumVarSketch {
    eps: f64,
    window: u64,
    buckets: VecDeque<Bucket>,
    now: u64,
    total: Bucket,
    compact_at: usize,
}

impl SumVarSketch {
    pub fn new(eps: f64, window: u64) -> Self {
        assert!((0.0..1.0).contains(&eps), "eps must be in [0, 1)");
        assert!(window > 0, "window must be positive");
        Self {
            eps,
            window,
            buckets: VecDeque::new(),
            now: 0,
            total: Bucket {
                count: 0,
                sum: 0.0,
                sum_sq: 0.0,
                sum_abs: 0.0,
                last: 0,
            },
            compact_at: MIN_COMPACT,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn insert(&mut self, x: f64) {
        self.now += 1;
        let b = Bucket {
            count: 1,
            sum: x,
            sum_sq: x * x,
            sum_abs: x.abs(),
            last: self.now,
        };
        self.total.count += 1;
        self.total.sum += x;
        self.total.sum_sq += x * x;
        self.total.sum_abs += x.abs();
        self.buckets.push_back(b);
        self.expire();
        if self.eps > 0.0 && self.buckets.len() >= self.compact_at {
            self.compact();
            self.compact_at = (self.buckets.len() * 3 / 2).max(MIN_COMPACT);
        }
    }

    fn expire(&mut self) {
        let Some(horizon) = self.now.checked_sub(self.window) else {
            return;
        };
        while let Some(b) = self.buckets.front() {
            if b.last > horizon {
                break;
            }
            self.total.count -= b.count;
            self.total.sum -= b.sum;
            self.total.sum_sq -= b.sum_sq;
            self.total.sum_abs -= b.sum_abs;
            self.buckets.pop_front();
        }
        if self.buckets.is_empty() {
            self.total.count = 0;
            self.total.sum = 0.0;
            self.total.sum_sq = 0.0;
            self.total.sum_abs = 0.0;
        }
    }

    fn compact(&mut self) {
        let mut out: Vec<Bucket> = Vec::with_capacity(self.buckets.len());
        let mut iter = self.buckets.iter().rev();
        let mut current = *iter.next().expect("compaction on empty sketch");
        let mut suffix: Option<Bucket> = None;
        for older in iter {
            let merged = Bucket::merge(older, &current);
            let ok = match &suffix {
                None => false,
                Some(sfx) => {
                    merged.sum_abs <= self.eps * sfx.sum_abs
                        && Bucket::merge(&merged, sfx).spread() - sfx.spread()
                            <= self.eps * sfx.spread()
                }
            };
            if ok {
                current = merged;
            } else {
                suffix = Some(match &suffix {
                    None => current,
                    Some(sfx) => Bucket::merge(&current, sfx),
                });
                out.push(current);
                current = *older;
            }
        }
        out.push(current);
        out.reverse();
        self.buckets = out.into();
        // re-derive totals to shed accumulated rounding
        let mut t = self.total;
        t.count = 0;
        t.sum = 0.0;
        t.sum_sq = 0.0;
        t.sum_abs = 0.0;
        for b in &self.buckets {
            t.count += b.count;
            t.sum += b.sum;
            t.sum_sq += b.sum_sq;
            t.sum_abs += b.sum_abs;
        }
        self.total = t;
    }

    /// Items in the window: exactly `min(arrivals, window)`.
    pub fn count(&self) -> u64 {
        self.now.min(self.window)
    }

    /// Items of the oldest bucket lying outside the window.
    fn outside(&self) -> Option<(f64, &Bucket)> {
        let horizon = self.now.checked_sub(self.window)?;
        let oldest = self.buckets.front()?;
        let first = oldest.last + 1 - oldest.count;
        if first > horizon {
            return None;
        }
        let out = horizon + 1 - first;
        Some((out as f64, oldest))
    }

    /// Estimated (sum, sum of squares) over the window.
    fn moments(&self) -> Option<(f64, f64)> {
        if self.buckets.is_empty() {
            return None;
        }
        let (mut s, mut q) = (self.total.sum, self.total.sum_sq);
        if let Some((out, b)) = self.outside() {
            s -= b.sum / b.count as f64 * out;
            q -= b.sum_sq / b.count as f64 * out;
        }
        Some((s, q))
    }

    pub fn sum(&self) -> Option<f64> {
        self.moments().map(|(s, _)| s)
    }

    pub fn mean(&self) -> Option<f64> {
        let (s, _) = self.moments()?;
        Some(s / self.count() as f64)
    }

    /// Population variance of the window, clamped at zero.
    pub fn variance(&self) -> Option<f64> {
        let (s, q) = self.moments()?;
        let n = self.count() as f64;
        let mean = s / n;
        Some((q / n - mean * mean).max(0.0))
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Buckets never straddle more than the window plus one bucket, counts
    /// and totals agree, and arrivals are contiguous.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut expected_first = None;
        let mut count = 0;
        for b in &self.buckets {
            if b.count == 0 {
                return Err("empty bucket".into());
            }
            let first = b.last + 1 - b.count;
            if let Some(f) = expected_first {
                if first != f {
                    return Err(format!("gap before arrival {first}"));
                }
            }
            expected_first = Some(b.last + 1);
            count += b.count;
        }
        if count != self.total.count {
            return Err(format!("count {} != bucket sum {count}", self.total.count));
        }
        if let Some(b) = self.buckets.front() {
            if b.last + self.window <= self.now {
                return Err("expired bucket retained".into());
            }
        }
        if self.buckets.back().is_some_and(|b| b.last != self.now) {
            return Err("newest bucket is stale".into());
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        let buckets: Vec<serde_json::Value> = self
            .buckets
            .iter()
            .map(|b| serde_json::json!([b.count, b.sum, b.sum_sq, b.last]))
            .collect();
        serde_json::json!({
            "type": "SumVarSketch",
            "eps": self.eps,
            "window": self.window,
            "arrivals": self.now,
            "buckets": buckets,
        })
        .to_string()
    }
}
