//! Partition hash functions.

use sal_sketch::{fmix64, fnv1a};

/// FNV-1a (64-bit) over the raw bytes of `value`, xor-folded so the low
/// bits used by `hash mod N` depend on every input byte.
pub fn ip_hash(value: &str) -> u64 {
    let h = fnv1a(value.as_bytes());
    h ^ (h >> 32)
}

/// FNV-1a followed by a 64-bit finalizer, for keys whose low bits vary
/// little.
pub fn string_hash(value: &str) -> u64 {
    fmix64(fnv1a(value.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashFunction {
    Ip,
    String,
}

impl HashFunction {
    /// Look up a function by the name used in `HASH ... WITH`.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "IpHashFunction" => Some(HashFunction::Ip),
            "StringHashFunction" => Some(HashFunction::String),
            _ => None,
        }
    }

    pub fn hash(self, value: &str) -> u64 {
        match self {
            HashFunction::Ip => ip_hash(value),
            HashFunction::String => string_hash(value),
        }
    }
}
