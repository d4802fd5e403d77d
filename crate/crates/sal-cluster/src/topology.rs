//! Cluster membership read from a text file of `nodeId host basePort`
//! lines. Node `j` pulls on `basePort + j`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::ClusterError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerAddress {
    pub host: String,
    pub base_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTopology {
    /// Indexed by node id.
    pub peers: Vec<PeerAddress>,
    pub this_node: usize,
}

impl NodeTopology {
    /// `nodes` nodes on one host sharing a base port.
    pub fn local(nodes: usize, host: &str, base_port: u16) -> Self {
        Self {
            peers: (0..nodes)
                .map(|_| PeerAddress {
                    host: host.to_string(),
                    base_port,
                })
                .collect(),
            this_node: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ClusterError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |what: &str| ClusterError::Topology(format!("line {}: {what}: `{line}`", i + 1));
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [id, host, port] = parts[..] else {
                return Err(bad("expected `nodeId host basePort`"));
            };
            let id: usize = id.parse().map_err(|_| bad("bad node id"))?;
            let base_port: u16 = port.parse().map_err(|_| bad("bad port"))?;
            entries.push((
                id,
                PeerAddress {
                    host: host.to_string(),
                    base_port,
                },
            ));
        }
        if entries.is_empty() {
            return Err(ClusterError::Topology("no nodes listed".into()));
        }
        entries.sort_by_key(|(id, _)| *id);
        for (want, (id, _)) in entries.iter().enumerate() {
            if *id != want {
                return Err(ClusterError::Topology(format!(
                    "node ids must be 0..{} without gaps or repeats; found {id} at position {want}",
                    entries.len()
                )));
            }
        }
        let topo = Self {
            peers: entries.into_iter().map(|(_, p)| p).collect(),
            this_node: 0,
        };
        let ports = topo.peers.len();
        if topo
            .peers
            .iter()
            .enumerate()
            .any(|(j, p)| p.base_port as usize + j > u16::MAX as usize)
        {
            return Err(ClusterError::Topology(format!(
                "pull ports of {ports} nodes overflow"
            )));
        }
        let mut seen = HashSet::new();
        for j in 0..topo.nodes() {
            if !seen.insert(topo.pull_address(j)) {
                return Err(ClusterError::Topology(format!(
                    "node {j} pulls on {}, which another node also uses",
                    topo.pull_address(j)
                )));
            }
        }
        Ok(topo)
    }

    pub fn with_node(mut self, node: usize) -> Result<Self, ClusterError> {
        if node >= self.nodes() {
            return Err(ClusterError::Topology(format!(
                "node {node} is not in a topology of {} nodes",
                self.nodes()
            )));
        }
        self.this_node = node;
        Ok(self)
    }

    pub fn nodes(&self) -> usize {
        self.peers.len()
    }

    /// Where node `j` listens for pushes.
    pub fn pull_address(&self, j: usize) -> String {
        let p = &self.peers[j];
        format!("{}:{}", p.host, p.base_port as usize + j)
    }
}

impl FromStr for NodeTopology {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for NodeTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, p) in self.peers.iter().enumerate() {
            writeln!(f, "{j} {} {}", p.host, p.base_port)?;
        }
        Ok(())
    }
}
