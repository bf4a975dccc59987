//! Cluster formation and head election.
//!
//! Formation is greedy and single-hop: nodes are visited in ascending id
//! order, every node not yet assigned seeds a cluster and absorbs each still
//! unassigned node strictly within range of the seed. A seed that absorbs
//! nobody is left non-clustered. Each cluster then elects the member of
//! minimum weight as head, breaking ties by the lower id.
//!
//! W-PAC and WCA run this same pipeline and differ only in the metric.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::metrics::{
    weight_with, EuclideanDist, ManhattanDist, Metric, MetricsError, PlanarDistance, WeightBreakdown,
};
use crate::model::{
    Algorithm, Cluster, ClusterId, Network, Node, NodeId, Partition, Role, Scenario, Tick, WeightFactors,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("cluster {0} has no members")]
    EmptyCluster(ClusterId),
    #[error("cluster {0}: member {1} has no computed weight")]
    MissingWeight(ClusterId, NodeId),
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Parameters of weight computation and range tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterContext {
    pub tx_range: f64,
    pub factors: WeightFactors,
    pub metric: Metric,
    pub initial_energy: f64,
}

impl ClusterContext {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self::for_algorithm(scenario, scenario.algorithm)
    }

    pub fn for_algorithm(scenario: &Scenario, algorithm: Algorithm) -> Self {
        Self {
            tx_range: scenario.tx_range,
            factors: scenario.factors,
            metric: algorithm.metric(),
            initial_energy: scenario.initial_energy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FormationResult {
    pub partition: Partition,
    pub per_node_weights: BTreeMap<NodeId, WeightBreakdown>,
    /// Wall-clock time of formation plus election.
    pub elapsed: Duration,
}

/// Forms clusters over the scenario's initial layout.
pub fn form_clusters(scenario: &Scenario, algorithm: Algorithm) -> Result<FormationResult, ClusterError> {
    let network = Network::from_scenario(scenario);
    form_partition(&network.nodes, &ClusterContext::for_algorithm(scenario, algorithm))
}

/// Forms clusters over an arbitrary node set.
pub fn form_partition(nodes: &BTreeMap<NodeId, Node>, ctx: &ClusterContext) -> Result<FormationResult, ClusterError> {
    let list: Vec<Node> = nodes.values().copied().collect();
    let start = Instant::now();
    let partition = match ctx.metric {
        Metric::Manhattan => form_with::<ManhattanDist>(&list, ctx)?,
        Metric::Euclidean => form_with::<EuclideanDist>(&list, ctx)?,
    };
    let elapsed = start.elapsed();
    let per_node_weights = partition
        .clusters
        .iter()
        .flat_map(|c| c.weights.iter().map(|(id, w)| (*id, *w)))
        .collect();
    Ok(FormationResult {
        partition,
        per_node_weights,
        elapsed,
    })
}

fn form_with<D: PlanarDistance>(list: &[Node], ctx: &ClusterContext) -> Result<Partition, ClusterError> {
    let mut assigned = vec![false; list.len()];
    let mut partition = Partition::default();
    let mut members: Vec<Node> = Vec::new();
    for i in 0..list.len() {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let seed = list[i];
        members.clear();
        members.push(seed);
        // every index below i is already assigned
        for j in i + 1..list.len() {
            if !assigned[j] && D::dist(seed.pos, list[j].pos) < ctx.tx_range {
                assigned[j] = true;
                members.push(list[j]);
            }
        }
        if members.len() < 2 {
            partition.non_clustered.insert(seed.id);
            continue;
        }
        let mut weights = BTreeMap::new();
        for m in &members {
            let w = weight_with::<D>(m, &members, &ctx.factors, ctx.tx_range, ctx.initial_energy)?;
            weights.insert(m.id, w);
        }
        let id = ClusterId(partition.clusters.len() as u32 + 1);
        let mut cluster = Cluster::new(id, seed.id, members.iter().map(|m| m.id));
        cluster.head = select_head(&weights).expect("cluster has at least two members");
        cluster.weights = weights;
        partition.clusters.push(cluster);
    }
    Ok(partition)
}

/// Minimum total weight, lowest id on ties.
pub fn select_head(weights: &BTreeMap<NodeId, WeightBreakdown>) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    for (id, w) in weights {
        match best {
            Some((_, t)) if w.total >= t => {}
            _ => best = Some((*id, w.total)),
        }
    }
    best.map(|(id, _)| id)
}

/// Member ids ordered by ascending weight, ties by id.
pub fn ascending_weight_order(weights: &BTreeMap<NodeId, WeightBreakdown>) -> Vec<NodeId> {
    let mut order: Vec<(NodeId, f64)> = weights.iter().map(|(id, w)| (*id, w.total)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(id, _)| id).collect()
}

/// Fresh weights for every member from current positions and energies.
pub fn recompute_weights(
    cluster: &Cluster,
    nodes: &BTreeMap<NodeId, Node>,
    ctx: &ClusterContext,
) -> Result<BTreeMap<NodeId, WeightBreakdown>, ClusterError> {
    let members = cluster
        .members
        .iter()
        .map(|id| nodes.get(id).copied().ok_or(ClusterError::UnknownNode(*id)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut weights = BTreeMap::new();
    for m in &members {
        let w = match ctx.metric {
            Metric::Manhattan => {
                weight_with::<ManhattanDist>(m, &members, &ctx.factors, ctx.tx_range, ctx.initial_energy)
            }
            Metric::Euclidean => {
                weight_with::<EuclideanDist>(m, &members, &ctx.factors, ctx.tx_range, ctx.initial_energy)
            }
        }?;
        weights.insert(m.id, w);
    }
    Ok(weights)
}

/// Elects the minimum-weight member as head using the cluster's stored weights.
///
/// A head change resets the new head's tenure to `tick` and updates roles.
pub fn elect_head(
    cluster: &mut Cluster,
    nodes: &mut BTreeMap<NodeId, Node>,
    tick: Tick,
) -> Result<NodeId, ClusterError> {
    if cluster.is_empty() {
        return Err(ClusterError::EmptyCluster(cluster.id));
    }
    if let Some(m) = cluster.members.iter().find(|m| !cluster.weights.contains_key(m)) {
        return Err(ClusterError::MissingWeight(cluster.id, *m));
    }
    let member_weights: BTreeMap<NodeId, WeightBreakdown> = cluster
        .weights
        .iter()
        .filter(|(id, _)| cluster.members.contains(id))
        .map(|(id, w)| (*id, *w))
        .collect();
    let head = select_head(&member_weights).expect("non-empty cluster");
    let previous = cluster.head;
    let fresh = nodes.get(&head).is_some_and(|n| n.head_since.is_none());
    if head != previous || fresh {
        cluster.set_head(head);
        if let Some(old) = nodes.get_mut(&previous) {
            if previous != head && cluster.members.contains(&previous) {
                old.role = Role::Ordinary;
                old.head_since = None;
            }
        }
        let node = nodes.get_mut(&head).ok_or(ClusterError::UnknownNode(head))?;
        node.role = Role::ClusterHead;
        node.head_since = Some(tick);
    }
    Ok(head)
}
