//! The shared feature store and the per-key maps built by COLLAPSE.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasher, BuildHasherDefault};

use parking_lot::RwLock;
use rustc_hash::{FxHashMap, FxHasher};
use serde_json::{json, Value as Json};

/// Default bound on the entries of one [`MapFeature`].
pub const DEFAULT_MAP_CAPACITY: usize = 10_000;

const STRIPES: usize = 64;

/// Current value of one feature for one key.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    Scalar(f64),
    /// (item, fraction of the window), most frequent first.
    TopK(Vec<(String, f64)>),
    Map(Box<MapFeature>),
}

impl Feature {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Feature::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric cell written to feature rows: the scalar itself, or the
    /// fraction of the most frequent item for top-k lists.
    pub fn cell(&self) -> Option<f64> {
        match self {
            Feature::Scalar(v) => Some(*v),
            Feature::TopK(items) => Some(items.first().map_or(0.0, |(_, f)| *f)),
            Feature::Map(_) => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Feature::Scalar(v) => json!(v),
            Feature::TopK(items) => json!(items),
            Feature::Map(m) => m.to_json(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MapEntry {
    values: Vec<f64>,
    stamp: u64,
}

/// Map from a dropped-key value to the most recent residual values seen
/// with it, bounded by least-recently-updated eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFeature {
    capacity: usize,
    entries: BTreeMap<String, MapEntry>,
    by_age: BTreeMap<u64, String>,
    clock: u64,
    evicted: u64,
}

impl MapFeature {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            capacity,
            entries: BTreeMap::new(),
            by_age: BTreeMap::new(),
            clock: 0,
            evicted: 0,
        }
    }

    /// Store `values` as the latest residual for `key`.
    pub fn update(&mut self, key: &str, values: Vec<f64>) {
        self.clock += 1;
        let stamp = self.clock;
        match self.entries.get_mut(key) {
            Some(e) => {
                self.by_age.remove(&e.stamp);
                e.values = values;
                e.stamp = stamp;
            }
            None => {
                if self.entries.len() == self.capacity {
                    let (_, oldest) = self.by_age.pop_first().expect("full map has entries");
                    self.entries.remove(&oldest);
                    self.evicted += 1;
                }
                self.entries
                    .insert(key.to_string(), MapEntry { values, stamp });
            }
        }
        self.by_age.insert(stamp, key.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(|e| e.values.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries
            .iter()
            .map(|(k, e)| (k.as_str(), e.values.as_slice()))
    }

    /// Residual column `j` of every entry, in key order.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().map(move |e| e.values[j])
    }

    pub fn to_json(&self) -> Json {
        let m: serde_json::Map<String, Json> = self
            .entries
            .iter()
            .map(|(k, e)| (k.clone(), json!(e.values)))
            .collect();
        Json::Object(m)
    }
}

type Slots = Vec<Option<Feature>>;
type Stripe = RwLock<FxHashMap<Box<str>, Slots>>;

/// Concurrent map from (key, feature name) to the feature's current value.
///
/// Names are fixed at construction and addressed by slot index. Every key
/// lives in one of a fixed set of lock stripes chosen by its hash, so
/// updates to keys in different stripes never contend.
#[derive(Debug)]
pub struct FeatureMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
    stripes: Box<[Stripe]>,
}

impl FeatureMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self {
            names,
            index,
            stripes: (0..STRIPES).map(|_| RwLock::default()).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn stripe(&self, key: &str) -> &Stripe {
        let h = BuildHasherDefault::<FxHasher>::default().hash_one(key);
        &self.stripes[(h >> 32) as usize % STRIPES]
    }

    /// Make `f` the value of `name` for `key`. Returns false for an unknown
    /// feature name.
    pub fn update_insert(&self, key: &str, name: &str, f: Feature) -> bool {
        match self.slot(name) {
            Some(slot) => {
                self.update_insert_slot(key, slot, f);
                true
            }
            None => false,
        }
    }

    pub fn update_insert_slot(&self, key: &str, slot: usize, f: Feature) {
        self.modify(key, slot, |cell| *cell = Some(f));
    }

    /// Run `f` on the slot under the stripe's write lock.
    pub fn modify<R>(
        &self,
        key: &str,
        slot: usize,
        f: impl FnOnce(&mut Option<Feature>) -> R,
    ) -> R {
        let mut stripe = self.stripe(key).write();
        if let Some(slots) = stripe.get_mut(key) {
            return f(&mut slots[slot]);
        }
        let mut slots: Slots = vec![None; self.names.len()];
        let r = f(&mut slots[slot]);
        stripe.insert(key.into(), slots);
        r
    }

    /// Run `f` on the slot under the stripe's read lock.
    pub fn read<R>(&self, key: &str, slot: usize, f: impl FnOnce(Option<&Feature>) -> R) -> R {
        let stripe = self.stripe(key).read();
        f(stripe.get(key).and_then(|s| s[slot].as_ref()))
    }

    pub fn get(&self, key: &str, name: &str) -> Option<Feature> {
        let slot = self.slot(name)?;
        self.read(key, slot, |f| f.cloned())
    }

    pub fn scalar(&self, key: &str, slot: usize) -> Option<f64> {
        self.read(key, slot, |f| f.and_then(Feature::as_scalar))
    }

    /// Number of (key, feature) pairs holding a value.
    pub fn len(&self) -> usize {
        self.stripes
            .iter()
            .map(|s| {
                s.read()
                    .values()
                    .map(|slots| slots.iter().filter(|x| x.is_some()).count())
                    .sum::<usize>()
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every (feature name, key, value), sorted by feature name then key.
    pub fn entries(&self) -> Vec<(String, String, Feature)> {
        let mut out = Vec::new();
        for stripe in self.stripes.iter() {
            for (key, slots) in stripe.read().iter() {
                for (slot, f) in slots.iter().enumerate() {
                    if let Some(f) = f {
                        out.push((self.names[slot].clone(), key.to_string(), f.clone()));
                    }
                }
            }
        }
        out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        out
    }

    /// One JSON object per entry, sorted by feature name then key.
    pub fn dump_lines(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .map(|(feature, key, f)| {
                json!({"feature": feature, "key": key, "value": f.to_json()}).to_string()
            })
            .collect()
    }

    /// Copy every entry of `other` into this map (names must match).
    /// Returns the number of pairs set in both maps with different values;
    /// `other` wins those.
    pub fn absorb(&self, other: &FeatureMap) -> usize {
        assert_eq!(
            self.names, other.names,
            "feature maps of different programs"
        );
        let mut conflicts = 0;
        for stripe in other.stripes.iter() {
            for (key, slots) in stripe.read().iter() {
                for (slot, f) in slots.iter().enumerate() {
                    if let Some(f) = f {
                        self.modify(key, slot, |cell| {
                            if cell.as_ref().is_some_and(|c| c != f) {
                                conflicts += 1;
                            }
                            *cell = Some(f.clone());
                        });
                    }
                }
            }
        }
        conflicts
    }
}
