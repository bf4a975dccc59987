use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClusterId, NodeId};
use crate::metrics::WeightBreakdown;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub head: NodeId,
    #[serde(default)]
    pub proxy_head: Option<NodeId>,
    /// Includes the head.
    pub members: BTreeSet<NodeId>,
    #[serde(default)]
    pub gateways: BTreeSet<NodeId>,
    #[serde(default)]
    pub weights: BTreeMap<NodeId, WeightBreakdown>,
    #[serde(default)]
    pub prefix: Option<Ipv6Addr>,
    /// Node that seeded the cluster at formation.
    pub seed: NodeId,
    /// Heads that have resigned during the current rotation cycle.
    #[serde(default)]
    pub rotation_served: BTreeSet<NodeId>,
    /// Set once a blocked rotation has been reported for the current head.
    #[serde(default)]
    pub rotation_blocked: bool,
    /// Set once a missing proxy candidate has been reported for the current head.
    #[serde(default)]
    pub proxy_unavailable: bool,
}

impl Cluster {
    /// A cluster whose head provisionally is its seed.
    pub fn new(id: ClusterId, seed: NodeId, members: impl IntoIterator<Item = NodeId>) -> Self {
        let mut members: BTreeSet<NodeId> = members.into_iter().collect();
        members.insert(seed);
        Self {
            id,
            head: seed,
            proxy_head: None,
            members,
            gateways: BTreeSet::new(),
            weights: BTreeMap::new(),
            prefix: None,
            seed,
            rotation_served: BTreeSet::new(),
            rotation_blocked: false,
            proxy_unavailable: false,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    pub fn head_weight(&self) -> Option<f64> {
        self.weights.get(&self.head).map(|w| w.total)
    }

    /// Drops a member and every reference to it.
    pub(crate) fn remove_member(&mut self, id: NodeId) {
        self.members.remove(&id);
        self.gateways.remove(&id);
        self.weights.remove(&id);
        self.rotation_served.remove(&id);
        if self.proxy_head == Some(id) {
            self.proxy_head = None;
        }
    }

    /// Resets per-head bookkeeping after the head changes.
    pub(crate) fn set_head(&mut self, head: NodeId) {
        if self.proxy_head == Some(head) {
            self.proxy_head = None;
        }
        self.head = head;
        self.rotation_blocked = false;
        self.proxy_unavailable = false;
    }
}

/// Clusters plus the set of nodes that belong to none of them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Cluster>,
    pub non_clustered: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionViolation {
    #[error("node {0} appears in more than one place")]
    Duplicate(NodeId),
    #[error("node {0} is missing from the partition")]
    Missing(NodeId),
    #[error("node {0} is not part of the network")]
    Unknown(NodeId),
    #[error("cluster {0} has no members")]
    EmptyCluster(ClusterId),
    #[error("cluster {0}: head {1} is not a member")]
    HeadNotMember(ClusterId, NodeId),
    #[error("cluster {0}: proxy head {1} is not a member")]
    ProxyNotMember(ClusterId, NodeId),
    #[error("cluster {0}: gateway {1} is not a member")]
    GatewayNotMember(ClusterId, NodeId),
    #[error("cluster {0}: member {1} has no weight")]
    MissingWeight(ClusterId, NodeId),
    #[error("cluster id {0} used twice")]
    DuplicateClusterId(ClusterId),
}

impl Partition {
    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn cluster_mut(&mut self, id: ClusterId) -> Option<&mut Cluster> {
        self.clusters.iter_mut().find(|c| c.id == id)
    }

    /// Cluster currently containing `node`.
    pub fn cluster_of(&self, node: NodeId) -> Option<ClusterId> {
        self.clusters.iter().find(|c| c.contains(node)).map(|c| c.id)
    }

    pub fn heads(&self) -> Vec<NodeId> {
        self.clusters.iter().map(|c| c.head).collect()
    }

    pub fn clustered_count(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    /// Next unused cluster id.
    pub fn next_cluster_id(&self) -> ClusterId {
        ClusterId(self.clusters.iter().map(|c| c.id.0).max().unwrap_or(0) + 1)
    }

    /// Checks disjointness, totality against `all_nodes`, and the per-cluster
    /// structural invariants (head, proxy and gateways are members; every
    /// member carries a weight).
    pub fn validate<'a>(&self, all_nodes: impl IntoIterator<Item = &'a NodeId>) -> Result<(), PartitionViolation> {
        let universe: BTreeSet<NodeId> = all_nodes.into_iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for cluster in &self.clusters {
            if !ids.insert(cluster.id) {
                return Err(PartitionViolation::DuplicateClusterId(cluster.id));
            }
            if cluster.is_empty() {
                return Err(PartitionViolation::EmptyCluster(cluster.id));
            }
            if !cluster.contains(cluster.head) {
                return Err(PartitionViolation::HeadNotMember(cluster.id, cluster.head));
            }
            if let Some(p) = cluster.proxy_head {
                if !cluster.contains(p) {
                    return Err(PartitionViolation::ProxyNotMember(cluster.id, p));
                }
            }
            if let Some(g) = cluster.gateways.iter().find(|g| !cluster.contains(**g)) {
                return Err(PartitionViolation::GatewayNotMember(cluster.id, *g));
            }
            for m in &cluster.members {
                if !cluster.weights.contains_key(m) {
                    return Err(PartitionViolation::MissingWeight(cluster.id, *m));
                }
                if !seen.insert(*m) {
                    return Err(PartitionViolation::Duplicate(*m));
                }
            }
        }
        for n in &self.non_clustered {
            if !seen.insert(*n) {
                return Err(PartitionViolation::Duplicate(*n));
            }
        }
        if let Some(extra) = seen.difference(&universe).next() {
            return Err(PartitionViolation::Unknown(*extra));
        }
        if let Some(missing) = universe.difference(&seen).next() {
            return Err(PartitionViolation::Missing(*missing));
        }
        Ok(())
    }
}
