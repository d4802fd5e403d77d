//! Routing tuples to nodes by their partition keys.

use std::fmt;

use sal_ast::TypedProgram;
use sal_engine::{Placement, Row, Value};

use crate::error::ClusterError;
use crate::hash::HashFunction;

/// A partition key: field name, its column in the root stream and hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionKey {
    pub field: String,
    pub column: usize,
    pub hash: HashFunction,
}

/// The key-to-node routing derived from `PARTITION` and `HASH`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub keys: Vec<PartitionKey>,
}

/// Why a tuple could not be routed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteError {
    /// The tuple has no value (or an empty one) for a partition field.
    MissingKey(String),
}

impl fmt::Display for RouteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteError::MissingKey(k) => write!(f, "tuple has no value for partition key `{k}`"),
        }
    }
}

/// A deduplicated, sorted set of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn insert(&mut self, node: usize) {
        if let Err(i) = self.0.binary_search(&node) {
            self.0.insert(i, node);
        }
    }

    pub fn remove(&mut self, node: usize) {
        if let Ok(i) = self.0.binary_search(&node) {
            self.0.remove(i);
        }
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = NodeSet::default();
        for n in iter {
            s.insert(n);
        }
        s
    }
}

fn text(v: &Value) -> std::borrow::Cow<'_, str> {
    match v {
        Value::Str(s) => s.as_str().into(),
        other => other.to_string().into(),
    }
}

impl PartitionPlan {
    /// The plan of a validated program's connection stream.
    pub fn from_program(program: &TypedProgram) -> Result<Self, ClusterError> {
        let root = &program.streams[program.root];
        let keys = program
            .partition
            .iter()
            .map(|(field, function)| {
                let column = root
                    .columns
                    .iter()
                    .position(|c| &c.name == field)
                    .ok_or_else(|| ClusterError::Plan(format!("no column `{field}`")))?;
                let hash = HashFunction::from_name(function).ok_or_else(|| {
                    ClusterError::Plan(format!("unknown hash function `{function}`"))
                })?;
                Ok(PartitionKey {
                    field: field.clone(),
                    column,
                    hash,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { keys })
    }

    /// Node owning `value` of `field` among `nodes`, if `field` is a key.
    pub fn node_of(&self, field: &str, value: &str, nodes: usize) -> Option<usize> {
        self.keys
            .iter()
            .find(|k| k.field == field)
            .map(|k| (k.hash.hash(value) % nodes as u64) as usize)
    }

    /// One target per partition key, deduplicated. With no partition keys
    /// everything goes to node 0.
    pub fn route(&self, row: &Row, nodes: usize) -> Result<NodeSet, RouteError> {
        let mut set = NodeSet::default();
        if nodes == 1 || self.keys.is_empty() {
            set.insert(0);
            return Ok(set);
        }
        for k in &self.keys {
            let value = match row.get(k.column) {
                Some(v) => text(v),
                None => return Err(RouteError::MissingKey(k.field.clone())),
            };
            if value.is_empty() {
                return Err(RouteError::MissingKey(k.field.clone()));
            }
            set.insert((k.hash.hash(&value) % nodes as u64) as usize);
        }
        Ok(set)
    }
}

/// The engine-side view of a plan: node `node` of `nodes` owns the key
/// values that hash to it.
#[derive(Debug, Clone)]
pub struct NodePlacement {
    pub plan: PartitionPlan,
    pub node: usize,
    pub nodes: usize,
}

impl Placement for NodePlacement {
    fn owns(&self, field: &str, value: &str) -> bool {
        match self.plan.node_of(field, value, self.nodes) {
            Some(n) => n == self.node,
            None => self.node == 0,
        }
    }
}
