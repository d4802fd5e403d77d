use std::collections::VecDeque;

/// Exponential histogram over the last `window` arrivals (Datar et al.).
///
/// Each arrival carries a non-negative integer weight; the histogram
/// estimates the total weight of the window with relative error at most
/// `eps`. Buckets hold power-of-two weights. `levels[j]` holds the arrival
/// index of the newest unit in every bucket of size `2^j`, oldest first.
#[derive(Debug, Clone)]
pub struct ExpHistogram {
    eps: f64,
    window: u64,
    /// Buckets allowed per size before the two oldest merge, minus one.
    per_level: usize,
    levels: Vec<VecDeque<u64>>,
    now: u64,
    total: u64,
}

impl ExpHistogram {
    pub fn new(eps: f64, window: u64) -> Self {
        assert!(eps > 0.0 && eps < 1.0, "eps must be in (0, 1)");
        assert!(window > 0, "window must be positive");
        Self {
            eps,
            window,
            per_level: (1.0 / (2.0 * eps)).ceil() as usize,
            levels: Vec::new(),
            now: 0,
            total: 0,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Arrivals seen so far.
    pub fn arrivals(&self) -> u64 {
        self.now
    }

    /// Advance by one arrival of weight `value` (0 for a non-event). A
    /// weight `v` is recorded as `v` units sharing one arrival index.
    pub fn insert(&mut self, value: u64) {
        self.now += 1;
        self.expire();
        for _ in 0..value {
            self.add_unit();
        }
        debug_assert!(self.levels.iter().all(|l| l.len() <= self.per_level + 1));
    }

    fn add_unit(&mut self) {
        if self.levels.is_empty() {
            self.levels.push(VecDeque::new());
        }
        self.levels[0].push_back(self.now);
        self.total += 1;
        let mut j = 0;
        while self.levels[j].len() > self.per_level + 1 {
            self.levels[j].pop_front();
            let newer = self.levels[j].pop_front().expect("two buckets to merge");
            if j + 1 == self.levels.len() {
                self.levels.push(VecDeque::new());
            }
            self.levels[j + 1].push_back(newer);
            j += 1;
        }
    }

    fn expire(&mut self) {
        let Some(horizon) = self.now.checked_sub(self.window) else {
            return;
        };
        while let Some(top) = self.levels.last_mut() {
            match top.front() {
                Some(&ts) if ts <= horizon => {
                    top.pop_front();
                    self.total -= 1 << (self.levels.len() - 1);
                }
                Some(_) => break,
                None => {
                    self.levels.pop();
                }
            }
        }
    }

    fn last_size(&self) -> u64 {
        match self.levels.len() {
            0 => 0,
            n => 1 << (n - 1),
        }
    }

    /// Upper bound on the window weight: the sum of all live buckets.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Estimated total weight of the last `window` arrivals. The oldest
    /// bucket has at least one unit inside the window, so the true value lies
    /// in `[total - last + 1, total]`; the midpoint is returned.
    pub fn estimate(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.total as f64 - (self.last_size() - 1) as f64 / 2.0
    }

    pub fn bucket_count(&self) -> usize {
        self.levels.iter().map(VecDeque::len).sum()
    }

    /// Check the structural bounds: at most `⌈1/(2ε)⌉ + 1` buckets per size,
    /// at least `⌈1/(2ε)⌉` for every size below the largest, timestamps
    /// non-increasing from newest to oldest and inside the window.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut sum = 0u64;
        let mut newest_of_larger = u64::MAX;
        for (j, level) in self.levels.iter().enumerate() {
            if level.len() > self.per_level + 1 {
                return Err(format!("size {}: {} buckets", 1u64 << j, level.len()));
            }
            if j + 1 < self.levels.len() && level.len() < self.per_level {
                return Err(format!(
                    "size {}: only {} buckets below the largest size",
                    1u64 << j,
                    level.len()
                ));
            }
            if level.iter().zip(level.iter().skip(1)).any(|(a, b)| a > b) {
                return Err(format!("size {}: timestamps out of order", 1u64 << j));
            }
            if j > 0 {
                if let Some(&newest) = level.back() {
                    if newest > newest_of_larger {
                        return Err("bucket sizes not monotone".into());
                    }
                }
            }
            if let Some(&oldest) = level.front() {
                newest_of_larger = oldest;
            }
            sum += (level.len() as u64) << j;
        }
        if let Some(&oldest) = self.levels.last().and_then(VecDeque::front) {
            if oldest + self.window <= self.now {
                return Err("expired bucket retained".into());
            }
        }
        if self.levels.last().is_some_and(VecDeque::is_empty) {
            return Err("empty top level".into());
        }
        if sum != self.total {
            return Err(format!("total {} != bucket sum {sum}", self.total));
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        let buckets: Vec<[u64; 2]> = self
            .levels
            .iter()
            .enumerate()
            .rev()
            .flat_map(|(j, l)| l.iter().map(move |&ts| [1u64 << j, ts]))
            .collect();
        serde_json::json!({
            "type": "ExpHistogram",
            "eps": self.eps,
            "window": self.window,
            "arrivals": self.now,
            "total": self.total,
            "buckets": buckets,
        })
        .to_string()
    }
}
