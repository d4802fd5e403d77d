use std::collections::VecDeque;

use crate::hash::{fmix64, fnv1a};
use crate::ring_len;

/// HyperLogLog registers, sparse while few are set.
///
/// Sparse entries pack `index << 8 | rank` and stay sorted by index.
#[derive(Debug, Clone)]
pub enum Registers {
    Sparse { p: u8, entries: Vec<u32> },
    Dense { p: u8, regs: Vec<u8> },
}

impl PartialEq for Registers {
    fn eq(&self, other: &Self) -> bool {
        self.precision() == other.precision() && self.to_dense() == other.to_dense()
    }
}

impl Registers {
    pub fn new(p: u8) -> Self {
        assert!((4..=18).contains(&p), "precision must be in 4..=18");
        Registers::Sparse {
            p,
            entries: Vec::new(),
        }
    }

    pub fn precision(&self) -> u8 {
        match self {
            Registers::Sparse { p, .. } | Registers::Dense { p, .. } => *p,
        }
    }

    pub fn len(&self) -> usize {
        1 << self.precision()
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Registers::Sparse { entries, .. } => entries.is_empty(),
            Registers::Dense { regs, .. } => regs.iter().all(|&r| r == 0),
        }
    }

    /// Register index and rank of a 64-bit hash.
    pub fn slot(p: u8, hash: u64) -> (usize, u8) {
        let idx = (hash >> (64 - p)) as usize;
        let rest = hash << p;
        let rank = (rest.leading_zeros() as u8).min(64 - p) + 1;
        (idx, rank)
    }

    pub fn get(&self, idx: usize) -> u8 {
        match self {
            Registers::Sparse { entries, .. } => {
                match entries.binary_search_by_key(&(idx as u32), |e| e >> 8) {
                    Ok(pos) => (entries[pos] & 0xff) as u8,
                    Err(_) => 0,
                }
            }
            Registers::Dense { regs, .. } => regs[idx],
        }
    }

    /// Raise register `idx` to `rank`; returns the previous value if it rose.
    pub fn raise(&mut self, idx: usize, rank: u8) -> Option<u8> {
        let raised = match self {
            Registers::Sparse { entries, .. } => {
                match entries.binary_search_by_key(&(idx as u32), |e| e >> 8) {
                    Ok(pos) => {
                        let old = (entries[pos] & 0xff) as u8;
                        if rank <= old {
                            return None;
                        }
                        entries[pos] = (idx as u32) << 8 | rank as u32;
                        Some(old)
                    }
                    Err(pos) => {
                        entries.insert(pos, (idx as u32) << 8 | rank as u32);
                        Some(0)
                    }
                }
            }
            Registers::Dense { regs, .. } => {
                let old = regs[idx];
                if rank <= old {
                    return None;
                }
                regs[idx] = rank;
                Some(old)
            }
        };
        if let Registers::Sparse { p, entries } = self {
            // four bytes per sparse entry against one per dense register
            if entries.len() * 4 > 1 << *p {
                *self = Registers::Dense {
                    p: *p,
                    regs: self.to_dense(),
                };
            }
        }
        raised
    }

    pub fn to_dense(&self) -> Vec<u8> {
        match self {
            Registers::Sparse { p, entries } => {
                let mut regs = vec![0u8; 1 << *p];
                for e in entries {
                    regs[(e >> 8) as usize] = (e & 0xff) as u8;
                }
                regs
            }
            Registers::Dense { regs, .. } => regs.clone(),
        }
    }

    /// Set (index, rank) pairs, in index order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, u8)> + '_> {
        match self {
            Registers::Sparse { entries, .. } => Box::new(
                entries
                    .iter()
                    .map(|e| ((e >> 8) as usize, (e & 0xff) as u8)),
            ),
            Registers::Dense { regs, .. } => Box::new(
                regs.iter()
                    .enumerate()
                    .filter(|(_, &r)| r > 0)
                    .map(|(i, &r)| (i, r)),
            ),
        }
    }

    /// Register-wise maximum.
    pub fn merge(&mut self, other: &Registers) {
        assert_eq!(self.precision(), other.precision(), "precision mismatch");
        for (i, r) in other.iter() {
            self.raise(i, r);
        }
    }

    /// Harmonic sum `Σ 2^-r` over all registers and the number of zeros.
    fn harmonic(&self) -> (f64, usize) {
        let mut z = 0.0;
        let mut set = 0;
        for (_, r) in self.iter() {
            z += pow2_neg(r);
            set += 1;
        }
        let zeros = self.len() - set;
        (z + zeros as f64, zeros)
    }

    pub fn estimate(&self) -> f64 {
        let (z, zeros) = self.harmonic();
        estimate_from(self.precision(), z, zeros)
    }
}

fn pow2_neg(r: u8) -> f64 {
    f64::from_bits((1023 - r as u64) << 52)
}

fn alpha(m: f64) -> f64 {
    match m as u64 {
        16 => 0.673,
        32 => 0.697,
        64 => 0.709,
        _ => 0.7213 / (1.0 + 1.079 / m),
    }
}

fn estimate_from(p: u8, z: f64, zeros: usize) -> f64 {
    let m = (1u64 << p) as f64;
    let raw = alpha(m) * m * m / z;
    if raw <= 2.5 * m && zeros > 0 {
        m * (m / zeros as f64).ln()
    } else {
        raw
    }
}

/// Distinct count over a sliding window of basic windows.
///
/// One register set per basic window of `basic` items; `⌈window/basic⌉`
/// closed sets plus the filling one are kept, so the estimate covers at
/// least `window` items on a long stream. The union of all sets and
/// its harmonic sum are maintained incrementally, making queries O(1).
#[derive(Debug, Clone)]
pub struct DistinctSketch {
    window: u64,
    basic: u64,
    p: u8,
    seed: u64,
    closed: VecDeque<(u64, Registers)>,
    active: Registers,
    active_len: u64,
    union: Registers,
    z: f64,
    zeros: usize,
    covered: u64,
}

impl DistinctSketch {
    pub fn new(window: u64, basic: u64, p: u8) -> Self {
        Self::with_seed(window, basic, p, 0)
    }

    pub fn with_seed(window: u64, basic: u64, p: u8, seed: u64) -> Self {
        assert!(window >= 1 && basic >= 1 && basic <= window);
        let m = 1usize << p;
        Self {
            window,
            basic,
            p,
            seed,
            closed: VecDeque::new(),
            active: Registers::new(p),
            active_len: 0,
            union: Registers::new(p),
            z: m as f64,
            zeros: m,
            covered: 0,
        }
    }

    pub fn hash(&self, item: &[u8]) -> u64 {
        fmix64(fnv1a(item) ^ self.seed)
    }

    pub fn insert(&mut self, item: &[u8]) {
        self.insert_hash(self.hash(item));
    }

    pub fn insert_hash(&mut self, hash: u64) {
        let (idx, rank) = Registers::slot(self.p, hash);
        self.active.raise(idx, rank);
        if let Some(old) = self.union.raise(idx, rank) {
            self.z += pow2_neg(rank) - pow2_neg(old);
            if old == 0 {
                self.zeros -= 1;
            }
        }
        self.active_len += 1;
        self.covered += 1;
        if self.active_len == self.basic {
            let full = std::mem::replace(&mut self.active, Registers::new(self.p));
            self.closed.push_back((self.active_len, full));
            self.active_len = 0;
            if self.closed.len() > ring_len(self.window, self.basic) {
                let (len, _) = self.closed.pop_front().expect("ring is non-empty");
                self.covered -= len;
                self.rebuild_union();
            }
        }
    }

    fn rebuild_union(&mut self) {
        let mut union = Registers::new(self.p);
        for (_, regs) in &self.closed {
            union.merge(regs);
        }
        union.merge(&self.active);
        let (z, zeros) = union.harmonic();
        self.union = union;
        self.z = z;
        self.zeros = zeros;
    }

    /// Items currently covered by the ring.
    pub fn covered(&self) -> u64 {
        self.covered
    }

    pub fn estimate(&self) -> Option<f64> {
        if self.covered == 0 {
            return None;
        }
        Some(estimate_from(self.p, self.z, self.zeros))
    }

    pub fn union(&self) -> &Registers {
        &self.union
    }

    pub fn closed_windows(&self) -> usize {
        self.closed.len()
    }

    pub fn dump(&self) -> String {
        serde_json::json!({
            "type": "DistinctSketch",
            "window": self.window,
            "basic": self.basic,
            "p": self.p,
            "closed": self.closed.len(),
            "covered": self.covered,
            "set_registers": self.union.len() - self.zeros,
            "estimate": self.estimate(),
        })
        .to_string()
    }
}
