//! Local cluster maintenance.
//!
//! Four procedures keep clusters alive without re-clustering the network:
//! mobility handling, load distribution through proxy heads, head rotation
//! and gateway election. Each touches only the clusters it names in its
//! events. The engine applies them once per tick in this order:
//!
//! 1. [`handle_mobility`]
//! 2. [`distribute_load`]
//! 3. [`rotate_heads`]
//! 4. [`elect_gateways`]

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::{ascending_weight_order, recompute_weights, select_head, ClusterContext, ClusterError};
use crate::metrics::{mobility_measure, Metric, WeightBreakdown};
use crate::model::{ClusterId, EventKind, EventRecord, Network, NodeId, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaintenanceKind {
    /// A head moved; its old cluster re-elected among the remaining members.
    HeadMoved,
    /// A moving node was light enough to trigger re-election where it landed.
    LocalReElection,
    /// A moving node re-affiliated with another cluster.
    NodeMoved,
    /// A moving node left its cluster and reached no head.
    Orphaned,
    /// A cluster lost its last member.
    ClusterDissolved,
    ProxyAppointed,
    /// Head below threshold but no other member can stand in.
    ProxyUnavailable,
    HeadRotated,
    /// Rotation due but no member is eligible to succeed.
    RotationBlocked,
    GatewayChange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceEvent {
    pub tick: Tick,
    pub kind: MaintenanceKind,
    pub subject: NodeId,
    pub clusters: Vec<ClusterId>,
    pub old_head: Option<NodeId>,
    pub new_head: Option<NodeId>,
    pub detail: String,
}

impl MaintenanceEvent {
    fn new(tick: Tick, kind: MaintenanceKind, subject: NodeId, clusters: Vec<ClusterId>) -> Self {
        Self {
            tick,
            kind,
            subject,
            clusters,
            old_head: None,
            new_head: None,
            detail: String::new(),
        }
    }

    fn heads(mut self, old: NodeId, new: NodeId) -> Self {
        self.old_head = Some(old);
        self.new_head = Some(new);
        self
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Trace form of the event.
    pub fn to_record(&self, seq: u64) -> EventRecord {
        use MaintenanceKind::*;
        let kind = match self.kind {
            HeadMoved | LocalReElection => EventKind::ReElection,
            NodeMoved | Orphaned => EventKind::ReAffiliation,
            ClusterDissolved => EventKind::ClusterDissolved,
            ProxyAppointed | ProxyUnavailable => EventKind::ProxyAppointed,
            HeadRotated | RotationBlocked => EventKind::Rotation,
            GatewayChange => EventKind::GatewayElected,
        };
        let cluster = match self.kind {
            NodeMoved => self.clusters.last().copied(),
            Orphaned => None,
            _ => self.clusters.first().copied(),
        };
        let mut detail = match (self.old_head, self.new_head) {
            (Some(o), Some(n)) => format!("old_head={o} new_head={n}"),
            _ => String::new(),
        };
        if !self.detail.is_empty() {
            if !detail.is_empty() {
                detail.push(' ');
            }
            detail.push_str(&self.detail);
        }
        EventRecord {
            seq,
            tick: self.tick,
            kind,
            subject: match self.kind {
                HeadMoved | LocalReElection | HeadRotated => self.new_head.unwrap_or(self.subject),
                _ => self.subject,
            },
            cluster,
            detail,
        }
    }
}

fn min_weight_among(weights: &BTreeMap<NodeId, WeightBreakdown>, keep: impl Fn(NodeId) -> bool) -> Option<NodeId> {
    let subset: BTreeMap<NodeId, WeightBreakdown> = weights
        .iter()
        .filter(|(id, _)| keep(**id))
        .map(|(id, w)| (*id, *w))
        .collect();
    select_head(&subset)
}

fn index_of(net: &Network, id: ClusterId) -> usize {
    net.partition
        .clusters
        .iter()
        .position(|c| c.id == id)
        .expect("cluster id taken from the partition")
}

/// Makes `head` the head of cluster `idx`, starting its tenure at `tick`.
fn install_head(net: &mut Network, idx: usize, head: NodeId, tick: Tick) {
    let cluster = &mut net.partition.clusters[idx];
    let old = cluster.head;
    cluster.set_head(head);
    if let Some(n) = net.nodes.get_mut(&old) {
        n.head_since = None;
    }
    if let Some(n) = net.nodes.get_mut(&head) {
        n.head_since = Some(tick);
    }
}

/// Re-elects cluster `idx` if `mover` weighs no more than the current head.
fn reelect_if_lighter(net: &mut Network, idx: usize, mover: NodeId, tick: Tick, events: &mut Vec<MaintenanceEvent>) {
    let cluster = &net.partition.clusters[idx];
    let (Some(mover_w), Some(head_w)) = (cluster.weights.get(&mover), cluster.head_weight()) else {
        return;
    };
    if mover_w.total > head_w {
        return;
    }
    let old = cluster.head;
    let new = select_head(&cluster.weights).expect("non-empty cluster");
    if new != old {
        let id = cluster.id;
        install_head(net, idx, new, tick);
        events.push(
            MaintenanceEvent::new(tick, MaintenanceKind::LocalReElection, mover, vec![id])
                .heads(old, new)
                .detail(format!("trigger={mover}")),
        );
    }
}

/// Joins `id` to the nearest cluster whose head is in range, or leaves it
/// non-clustered. `from` is the cluster it just left, if any.
fn affiliate(
    net: &mut Network,
    id: NodeId,
    from: Option<ClusterId>,
    ctx: &ClusterContext,
    tick: Tick,
    events: &mut Vec<MaintenanceEvent>,
) -> Result<(), ClusterError> {
    let pos = net.nodes[&id].pos;
    let target = net
        .partition
        .clusters
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let d = ctx.metric.distance(pos, net.nodes[&c.head].pos);
            (d < ctx.tx_range).then_some((d, c.id, i))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    match target {
        Some((_, cid, idx)) => {
            net.partition.non_clustered.remove(&id);
            net.partition.clusters[idx].members.insert(id);
            let weights = recompute_weights(&net.partition.clusters[idx], &net.nodes, ctx)?;
            net.partition.clusters[idx].weights = weights;
            let mut clusters: Vec<ClusterId> = from.into_iter().collect();
            clusters.push(cid);
            events.push(
                MaintenanceEvent::new(tick, MaintenanceKind::NodeMoved, id, clusters).detail(match from {
                    Some(f) => format!("from={f} to={cid}"),
                    None => format!("from=none to={cid}"),
                }),
            );
            reelect_if_lighter(net, idx, id, tick, events);
        }
        None => {
            let newly = net.partition.non_clustered.insert(id);
            if let (true, Some(f)) = (newly, from) {
                events.push(
                    MaintenanceEvent::new(tick, MaintenanceKind::Orphaned, id, vec![f])
                        .detail(format!("from={f} to=none")),
                );
            }
        }
    }
    Ok(())
}

/// Repairs clusters after the nodes in `moved` changed position.
///
/// Moved ordinary nodes that still hear their head stay; otherwise they join
/// the nearest head in range. A moved head triggers re-election among the
/// members it left behind and then joins the nearest head in range as an
/// ordinary node. Wherever a mover lands, it triggers re-election there when
/// its weight does not exceed the head's.
pub fn handle_mobility(
    net: &mut Network,
    moved: &BTreeSet<NodeId>,
    ctx: &ClusterContext,
    tick: Tick,
) -> Result<Vec<MaintenanceEvent>, ClusterError> {
    let mut events = Vec::new();
    for &id in moved {
        let node = *net.nodes.get(&id).ok_or(ClusterError::UnknownNode(id))?;
        if mobility_measure(&node) == 0.0 {
            continue;
        }
        let Some(cid) = net.partition.cluster_of(id) else {
            affiliate(net, id, None, ctx, tick, &mut events)?;
            continue;
        };
        let idx = index_of(net, cid);
        let head = net.partition.clusters[idx].head;

        if head == id {
            net.partition.clusters[idx].remove_member(id);
            if let Some(n) = net.nodes.get_mut(&id) {
                n.head_since = None;
            }
            if net.partition.clusters[idx].is_empty() {
                net.partition.clusters.remove(idx);
                events.push(MaintenanceEvent::new(
                    tick,
                    MaintenanceKind::ClusterDissolved,
                    id,
                    vec![cid],
                ));
                affiliate(net, id, Some(cid), ctx, tick, &mut events)?;
                continue;
            }
            let weights = recompute_weights(&net.partition.clusters[idx], &net.nodes, ctx)?;
            let new = select_head(&weights).expect("non-empty cluster");
            net.partition.clusters[idx].weights = weights;
            install_head(net, idx, new, tick);
            let at = events.len();
            events.push(
                MaintenanceEvent::new(tick, MaintenanceKind::HeadMoved, id, vec![cid])
                    .heads(id, new)
                    .detail(format!("mover={id}")),
            );
            affiliate(net, id, Some(cid), ctx, tick, &mut events)?;
            // rejoining its own cluster reshapes every weight there
            if net.partition.cluster_of(id) == Some(cid) {
                let cluster = &net.partition.clusters[idx];
                let best = select_head(&cluster.weights).expect("non-empty cluster");
                if best != cluster.head {
                    install_head(net, idx, best, tick);
                    events[at].new_head = Some(best);
                }
            }
            continue;
        }

        let head_pos = net.nodes[&head].pos;
        if ctx.metric.in_range(node.pos, head_pos, ctx.tx_range) {
            let weights = recompute_weights(&net.partition.clusters[idx], &net.nodes, ctx)?;
            net.partition.clusters[idx].weights = weights;
            reelect_if_lighter(net, idx, id, tick, &mut events);
        } else {
            net.partition.clusters[idx].remove_member(id);
            let weights = recompute_weights(&net.partition.clusters[idx], &net.nodes, ctx)?;
            net.partition.clusters[idx].weights = weights;
            affiliate(net, id, Some(cid), ctx, tick, &mut events)?;
        }
    }
    net.sync_roles();
    Ok(events)
}

/// Appoints a proxy head for every cluster whose head runs below `threshold`.
///
/// The proxy is the lightest non-head member by stored weight. The head
/// keeps its title; the proxy takes over its energy drain.
pub fn distribute_load(net: &mut Network, threshold: f64, tick: Tick) -> Vec<MaintenanceEvent> {
    let mut events = Vec::new();
    for cluster in &mut net.partition.clusters {
        let head = cluster.head;
        let below = net.nodes.get(&head).is_some_and(|n| n.energy < threshold);
        if !below || cluster.proxy_head.is_some() {
            continue;
        }
        match min_weight_among(&cluster.weights, |id| id != head) {
            Some(proxy) => {
                cluster.proxy_head = Some(proxy);
                events.push(
                    MaintenanceEvent::new(tick, MaintenanceKind::ProxyAppointed, proxy, vec![cluster.id])
                        .detail(format!("head={head}")),
                );
            }
            None if !cluster.proxy_unavailable => {
                cluster.proxy_unavailable = true;
                events.push(
                    MaintenanceEvent::new(tick, MaintenanceKind::ProxyUnavailable, head, vec![cluster.id])
                        .detail("no other member"),
                );
            }
            None => {}
        }
    }
    net.sync_roles();
    events
}

/// Rotates the head of every cluster whose head is below `threshold` and has
/// served longer than `period` ticks.
///
/// The successor is the proxy head when it is eligible, otherwise the first
/// member in ascending stored-weight order. Members that have ever moved are
/// not eligible, nor are heads that already resigned during the current cycle.
/// Once every eligible member has served, a new cycle begins.
pub fn rotate_heads(net: &mut Network, tick: Tick, threshold: f64, period: Tick) -> Vec<MaintenanceEvent> {
    let mut events = Vec::new();
    for idx in 0..net.partition.clusters.len() {
        let cluster = &net.partition.clusters[idx];
        let head = cluster.head;
        let Some(hn) = net.nodes.get(&head) else {
            continue;
        };
        let tenure = tick.saturating_sub(hn.head_since.unwrap_or(tick));
        if !(hn.energy < threshold && tenure > period) {
            continue;
        }

        let nodes = &net.nodes;
        let pick = |served: &BTreeSet<NodeId>| {
            let eligible =
                |id: NodeId| id != head && !served.contains(&id) && nodes.get(&id).is_some_and(|n| !n.has_moved());
            cluster.proxy_head.filter(|p| eligible(*p)).or_else(|| {
                ascending_weight_order(&cluster.weights)
                    .into_iter()
                    .find(|id| eligible(*id))
            })
        };
        let mut successor = pick(&cluster.rotation_served);
        let mut new_cycle = false;
        if successor.is_none() && !cluster.rotation_served.is_empty() {
            successor = pick(&BTreeSet::new());
            new_cycle = successor.is_some();
        }
        let cid = cluster.id;

        let cluster = &mut net.partition.clusters[idx];
        match successor {
            Some(next) => {
                if new_cycle {
                    cluster.rotation_served.clear();
                }
                cluster.rotation_served.insert(head);
                cluster.proxy_head = None;
                install_head(net, idx, next, tick);
                events.push(
                    MaintenanceEvent::new(tick, MaintenanceKind::HeadRotated, head, vec![cid])
                        .heads(head, next)
                        .detail(format!("tenure={tenure}")),
                );
            }
            None if !cluster.rotation_blocked => {
                cluster.rotation_blocked = true;
                events.push(
                    MaintenanceEvent::new(tick, MaintenanceKind::RotationBlocked, head, vec![cid])
                        .detail("no eligible successor"),
                );
            }
            None => {}
        }
    }
    net.sync_roles();
    events
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GatewayKind {
    Command(ClusterId),
    Distributed,
}

/// Recomputes every cluster's gateway set.
///
/// For each pair of clusters, the lowest-id non-head member of either one
/// lying within range of both heads is their common gateway. A cluster that
/// has a pair without a common gateway, or that ends up with no gateway at
/// all, also gets a distributed gateway: its member farthest from the head
/// (lowest id on ties). A lone head is its own gateway.
pub fn elect_gateways(net: &mut Network, tr: f64, metric: Metric, tick: Tick) -> Vec<MaintenanceEvent> {
    let clusters = &net.partition.clusters;
    let k = clusters.len();
    let head_pos: Vec<_> = clusters.iter().map(|c| net.nodes[&c.head].pos).collect();
    let mut chosen: Vec<BTreeMap<NodeId, GatewayKind>> = vec![BTreeMap::new(); k];
    let mut needs_distributed = vec![false; k];

    for a in 0..k {
        for b in a + 1..k {
            let heads = [clusters[a].head, clusters[b].head];
            let common = [(a, b), (b, a)]
                .into_iter()
                .flat_map(|(own, other)| clusters[own].members.iter().map(move |m| (*m, own, other)))
                .filter(|(m, _, _)| !heads.contains(m))
                .filter(|(m, _, _)| {
                    let p = net.nodes[m].pos;
                    metric.in_range(p, head_pos[a], tr) && metric.in_range(p, head_pos[b], tr)
                })
                .min_by_key(|(m, _, _)| *m);
            match common {
                Some((m, own, other)) => {
                    chosen[own].insert(m, GatewayKind::Command(clusters[other].id));
                }
                None => {
                    needs_distributed[a] = true;
                    needs_distributed[b] = true;
                }
            }
        }
    }

    for (i, c) in clusters.iter().enumerate() {
        if !(needs_distributed[i] || chosen[i].is_empty()) {
            continue;
        }
        let far = c
            .members
            .iter()
            .filter(|m| **m != c.head)
            .map(|m| (*m, metric.distance(net.nodes[m].pos, head_pos[i])))
            .fold(None::<(NodeId, f64)>, |best, (m, d)| match best {
                Some((_, bd)) if d <= bd => best,
                _ => Some((m, d)),
            })
            .map(|(m, _)| m)
            .unwrap_or(c.head);
        chosen[i].entry(far).or_insert(GatewayKind::Distributed);
    }

    let mut events = Vec::new();
    for (cluster, gws) in net.partition.clusters.iter_mut().zip(chosen) {
        let set: BTreeSet<NodeId> = gws.keys().copied().collect();
        if set == cluster.gateways {
            continue;
        }
        cluster.gateways = set;
        let detail = gws
            .iter()
            .map(|(m, kind)| match kind {
                GatewayKind::Command(other) => format!("{m}:command({other})"),
                GatewayKind::Distributed if *m == cluster.head => format!("{m}:head"),
                GatewayKind::Distributed => format!("{m}:distributed"),
            })
            .collect::<Vec<_>>()
            .join(",");
        let subject = *gws.keys().next().expect("every cluster receives a gateway");
        events.push(
            MaintenanceEvent::new(tick, MaintenanceKind::GatewayChange, subject, vec![cluster.id])
                .detail(format!("gateways=[{detail}]")),
        );
    }
    net.sync_roles();
    events
}
