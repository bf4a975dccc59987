//! Domain types shared by every stage of the pipeline.
//!
//! The [`Scenario`] is the immutable input; a [`Network`] is the evolving
//! state (node positions, energies and roles plus the current [`Partition`]).

mod partition;
mod scenario;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use partition::{Cluster, Partition, PartitionViolation};
pub use scenario::{
    generate_nodes, load_scenario, random_waypoint, Algorithm, Movement, NodeSpec, Scenario, ScenarioError,
    WaypointParams, WeightFactors,
};

/// Simulation time step.
pub type Tick = u64;

/// Identifier of a node, unique within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a cluster. Formation numbers clusters from 1 in creation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// True when the point lies in the closed rectangle `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.is_finite() && (0.0..=width).contains(&self.x) && (0.0..=height).contains(&self.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ordinary,
    ClusterHead,
    ProxyHead,
    Gateway,
    Unclustered,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Ordinary => "ordinary",
            Role::ClusterHead => "cluster_head",
            Role::ProxyHead => "proxy_head",
            Role::Gateway => "gateway",
            Role::Unclustered => "unclustered",
        };
        f.write_str(s)
    }
}

/// A simulated node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    /// Position at the previous tick; equals `pos` at tick 0.
    pub prev_pos: Point,
    pub energy: f64,
    pub role: Role,
    /// Tick at which the node last became cluster head.
    pub head_since: Option<Tick>,
    /// Tick of the most recent movement, if the node ever moved.
    pub last_moved: Option<Tick>,
}

impl Node {
    pub fn new(id: NodeId, pos: Point, energy: f64) -> Self {
        Self {
            id,
            pos,
            prev_pos: pos,
            energy,
            role: Role::Unclustered,
            head_since: None,
            last_moved: None,
        }
    }

    pub fn has_moved(&self) -> bool {
        self.last_moved.is_some()
    }
}

/// Evolving network state: every node plus the current partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: BTreeMap<NodeId, Node>,
    pub partition: Partition,
}

impl Network {
    /// Builds the initial, unclustered network described by a scenario.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let nodes = scenario
            .nodes
            .iter()
            .map(|spec| (spec.id, Node::new(spec.id, spec.position(), spec.energy)))
            .collect();
        Self {
            nodes,
            partition: Partition::default(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn positions(&self) -> BTreeMap<NodeId, Point> {
        self.nodes.iter().map(|(id, n)| (*id, n.pos)).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.nodes.values().map(|n| n.energy).sum()
    }

    /// Installs a partition and marks every head's tenure as starting at `tick`.
    pub fn install(&mut self, partition: Partition, tick: Tick) {
        for cluster in &partition.clusters {
            if let Some(head) = self.nodes.get_mut(&cluster.head) {
                head.head_since = Some(tick);
            }
        }
        self.partition = partition;
        self.sync_roles();
    }

    /// Derives every node's role from the partition.
    ///
    /// Precedence: head, proxy head, gateway, ordinary member. Nodes outside
    /// every cluster are `Unclustered`.
    pub fn sync_roles(&mut self) {
        for node in self.nodes.values_mut() {
            node.role = Role::Unclustered;
        }
        for cluster in &self.partition.clusters {
            for id in &cluster.members {
                let Some(node) = self.nodes.get_mut(id) else {
                    continue;
                };
                if *id != cluster.head {
                    node.head_since = None;
                }
                node.role = if *id == cluster.head {
                    Role::ClusterHead
                } else if cluster.proxy_head == Some(*id) {
                    Role::ProxyHead
                } else if cluster.gateways.contains(id) {
                    Role::Gateway
                } else {
                    Role::Ordinary
                };
            }
        }
        for id in &self.partition.non_clustered {
            if let Some(node) = self.nodes.get_mut(id) {
                node.head_since = None;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Formation,
    ReElection,
    ReAffiliation,
    ProxyAppointed,
    Rotation,
    GatewayElected,
    AddressAssigned,
    AddressReleased,
    ClusterDissolved,
    NodeMoved,
}

/// One line of a simulation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub tick: Tick,
    pub kind: EventKind,
    pub subject: NodeId,
    pub cluster: Option<ClusterId>,
    pub detail: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_node_starts_where_it_was() {
        let n = Node::new(NodeId(3), Point::new(1.0, 2.0), 10.0);
        assert_eq!(n.pos, n.prev_pos);
        assert!(!n.has_moved());
        assert_eq!(n.role, Role::Unclustered);
    }

    #[test]
    fn point_bounds_are_closed() {
        assert!(Point::new(0.0, 0.0).within(40.0, 80.0));
        assert!(Point::new(40.0, 80.0).within(40.0, 80.0));
        assert!(!Point::new(40.1, 0.0).within(40.0, 80.0));
        assert!(!Point::new(f64::NAN, 0.0).within(40.0, 80.0));
    }

    #[test]
    fn roles_follow_partition() {
        let mut nodes = BTreeMap::new();
        for i in 0..4 {
            let id = NodeId(i);
            nodes.insert(id, Node::new(id, Point::new(i as f64, 0.0), 1.0));
        }
        let mut cluster = Cluster::new(ClusterId(1), NodeId(0), [0, 1, 2].map(NodeId));
        cluster.head = NodeId(1);
        cluster.gateways.insert(NodeId(2));
        let partition = Partition {
            clusters: vec![cluster],
            non_clustered: [NodeId(3)].into(),
        };
        let mut net = Network {
            nodes,
            partition: Partition::default(),
        };
        net.install(partition, 0);
        assert_eq!(net.nodes[&NodeId(0)].role, Role::Ordinary);
        assert_eq!(net.nodes[&NodeId(1)].role, Role::ClusterHead);
        assert_eq!(net.nodes[&NodeId(1)].head_since, Some(0));
        assert_eq!(net.nodes[&NodeId(2)].role, Role::Gateway);
        assert_eq!(net.nodes[&NodeId(3)].role, Role::Unclustered);
    }
}
