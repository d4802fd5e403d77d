use std::collections::{HashMap, VecDeque};

use crate::ring_len;

/// Frequent items over a sliding window of basic windows.
///
/// Counts are exact within each basic window of `basic` items. The window
/// keeps `⌈window/basic⌉` closed basic windows plus the one filling up, so a
/// query covers at least `window` items once the stream is long enough, and
/// less than one extra basic window beyond the closed ones. Frequencies are
/// fractions of the items currently covered.
#[derive(Debug, Clone)]
pub struct BasicWindowTopK {
    window: u64,
    basic: u64,
    k: usize,
    closed: VecDeque<(u64, HashMap<String, u64>)>,
    active: HashMap<String, u64>,
    active_len: u64,
    /// Per-item counts summed over `closed` and `active`.
    totals: HashMap<String, u64>,
    covered: u64,
}

impl BasicWindowTopK {
    pub fn new(window: u64, basic: u64, k: usize) -> Self {
        assert!(window >= 1 && basic >= 1 && basic <= window && k >= 1);
        Self {
            window,
            basic,
            k,
            closed: VecDeque::new(),
            active: HashMap::new(),
            active_len: 0,
            totals: HashMap::new(),
            covered: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, item: &str) {
        bump(&mut self.active, item);
        bump(&mut self.totals, item);
        self.active_len += 1;
        self.covered += 1;
        if self.active_len == self.basic {
            let full = std::mem::take(&mut self.active);
            self.closed.push_back((self.active_len, full));
            self.active_len = 0;
            if self.closed.len() > ring_len(self.window, self.basic) {
                let (len, old) = self.closed.pop_front().expect("ring is non-empty");
                self.covered -= len;
                for (item, c) in old {
                    let t = self.totals.get_mut(&item).expect("item counted");
                    *t -= c;
                    if *t == 0 {
                        self.totals.remove(&item);
                    }
                }
            }
        }
        debug_assert!(self.closed.len() <= ring_len(self.window, self.basic));
    }

    /// Items currently covered by the ring.
    pub fn covered(&self) -> u64 {
        self.covered
    }

    /// Up to `k` (item, fraction) pairs, most frequent first; ties by item.
    pub fn top(&self) -> Option<Vec<(String, f64)>> {
        if self.covered == 0 {
            return None;
        }
        let mut best: Vec<(&String, u64)> = Vec::with_capacity(self.k + 1);
        for (item, &c) in &self.totals {
            let pos = best
                .iter()
                .position(|&(i, bc)| c > bc || (c == bc && item < i))
                .unwrap_or(best.len());
            if pos < self.k {
                best.insert(pos, (item, c));
                best.truncate(self.k);
            }
        }
        let n = self.covered as f64;
        Some(
            best.into_iter()
                .map(|(i, c)| (i.clone(), c as f64 / n))
                .collect(),
        )
    }

    /// Frequency of the `i`-th most frequent item; 0 when fewer than `i + 1`
    /// distinct items are covered.
    pub fn value(&self, i: usize) -> Option<f64> {
        let top = self.top()?;
        Some(top.get(i).map_or(0.0, |(_, f)| *f))
    }

    pub fn closed_windows(&self) -> usize {
        self.closed.len()
    }

    pub fn dump(&self) -> String {
        let top: Vec<serde_json::Value> = self
            .top()
            .unwrap_or_default()
            .into_iter()
            .map(|(i, f)| serde_json::json!([i, f]))
            .collect();
        serde_json::json!({
            "type": "BasicWindowTopK",
            "window": self.window,
            "basic": self.basic,
            "k": self.k,
            "closed": self.closed.len(),
            "covered": self.covered,
            "top": top,
        })
        .to_string()
    }
}

fn bump(map: &mut HashMap<String, u64>, item: &str) {
    match map.get_mut(item) {
        Some(c) => *c += 1,
        None => {
            map.insert(item.to_string(), 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ninety_ten() {
        let mut t = BasicWindowTopK::new(10, 5, 2);
        for _ in 0..9 {
            t.insert("80");
        }
        t.insert("443");
        let top = t.top().unwrap();
        assert_eq!(top[0].0, "80");
        assert!((top[0].1 - 0.9).abs() < 1e-12);
        assert_eq!(top[1].0, "443");
        assert!((top[1].1 - 0.1).abs() < 1e-12);
        assert!(t.value(0).unwrap() + t.value(1).unwrap() > 0.9);
    }

    #[test]
    fn single_and_missing() {
        let mut t = BasicWindowTopK::new(100, 10, 2);
        assert_eq!(t.top(), None);
        t.insert("53");
        assert_eq!(t.top().unwrap(), vec![("53".to_string(), 1.0)]);
        assert_eq!(t.value(1), Some(0.0));
    }

    #[test]
    fn ties_break_by_item() {
        let mut t = BasicWindowTopK::new(100, 10, 2);
        for s in ["b", "a", "c", "c"] {
            t.insert(s);
        }
        let items: Vec<_> = t.top().unwrap().into_iter().map(|(i, _)| i).collect();
        assert_eq!(items, vec!["c", "a"]);
    }

    #[test]
    fn old_basic_windows_expire() {
        let mut t = BasicWindowTopK::new(4, 2, 1);
        for _ in 0..6 {
            t.insert("x");
        }
        for _ in 0..6 {
            t.insert("y");
        }
        assert_eq!(t.closed_windows(), 2);
        assert_eq!(t.covered(), 4);
        assert_eq!(t.top().unwrap(), vec![("y".to_string(), 1.0)]);
        t.insert("x");
        assert_eq!(t.covered(), 5);
        assert!((t.value(0).unwrap() - 0.8).abs() < 1e-12);
    }
}
