//! Discrete-time simulation.
//!
//! Tick 0 forms clusters, elects gateways and assigns addresses. Every later
//! tick applies that tick's movements, runs the maintenance procedures in
//! order, reconciles addresses and finally drains energy by role.

pub mod bench;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::addressing::{cluster_prefix, reconcile, AddressAssignment, AddressError};
use crate::clustering::{form_partition, ClusterContext, ClusterError};
use crate::maintenance::{distribute_load, elect_gateways, handle_mobility, rotate_heads, MaintenanceEvent};
use crate::metrics::Metric;
use crate::model::{ClusterId, EventKind, EventRecord, Movement, Network, NodeId, Role, Scenario, ScenarioError, Tick};
use crate::validation::{db_index_with, ValidationConfig, ValidationError, ValidationReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Address(#[from] AddressError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Config(String),
}

/// Energy spent per tick by role.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyModel {
    pub drain_head: f64,
    pub drain_proxy: f64,
    pub drain_member: f64,
}

impl EnergyModel {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            drain_head: s.drain_head,
            drain_proxy: s.drain_proxy,
            drain_member: s.drain_member,
        }
    }
}

/// Drains one tick of energy from every node and returns the total spent.
///
/// A head relieved by a proxy drains like an ordinary member. Energy never
/// goes below zero.
pub fn drain_energy(net: &mut Network, model: &EnergyModel) -> f64 {
    let relieved: BTreeSet<NodeId> = net
        .partition
        .clusters
        .iter()
        .filter(|c| c.proxy_head.is_some())
        .map(|c| c.head)
        .collect();
    let mut spent = 0.0;
    for node in net.nodes.values_mut() {
        let rate = match node.role {
            Role::ClusterHead if relieved.contains(&node.id) => model.drain_member,
            Role::ClusterHead => model.drain_head,
            Role::ProxyHead => model.drain_proxy,
            _ => model.drain_member,
        };
        let before = node.energy;
        node.energy = (node.energy - rate).max(0.0);
        spent += before - node.energy;
    }
    spent
}

/// Applies one tick of movements and returns the nodes whose position changed.
///
/// Every node's previous position is first set to its current one, so
/// mobility always measures a single tick of displacement.
pub fn apply_movements(net: &mut Network, movements: &[Movement], tick: Tick) -> BTreeSet<NodeId> {
    for node in net.nodes.values_mut() {
        node.prev_pos = node.pos;
    }
    let mut moved = BTreeSet::new();
    for m in movements {
        if let Some(node) = net.nodes.get_mut(&m.node) {
            let target = m.target();
            if target != node.pos {
                node.pos = target;
                node.last_moved = Some(tick);
                moved.insert(m.node);
            }
        }
    }
    moved
}

/// Per-tick summary of the partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub tick: Tick,
    pub clusters: usize,
    pub heads: Vec<NodeId>,
    pub non_clustered: usize,
    pub total_energy: f64,
    /// Present on ticks where the index was computed and defined.
    pub db_index: Option<f64>,
    /// The index was requested on this tick but fewer than two clusters existed.
    pub db_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FinalReport {
    Computed(ValidationReport),
    NotApplicable { clusters: usize },
}

/// Everything a run produces.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationTrace {
    pub scenario_digest: String,
    pub events: Vec<EventRecord>,
    #[serde(skip)]
    pub maintenance: Vec<MaintenanceEvent>,
    pub snapshots: BTreeMap<Tick, PartitionSummary>,
    pub final_report: FinalReport,
    #[serde(skip)]
    pub final_network: Network,
}

impl SimulationTrace {
    /// One JSON event per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EngineError> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// `tick,clusters,heads,non_clustered,total_energy,db_index`; heads are
    /// `;`-separated, db_index is empty when not computed and `undefined`
    /// when fewer than two clusters existed.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "clusters", "heads", "non_clustered", "total_energy", "db_index"])?;
        for s in self.snapshots.values() {
            let heads = s.heads.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(";");
            let db = match (s.db_index, s.db_undefined) {
                (Some(v), _) => v.to_string(),
                (None, true) => "undefined".to_string(),
                (None, false) => String::new(),
            };
            w.write_record([
                s.tick.to_string(),
                s.clusters.to_string(),
                heads,
                s.non_clustered.to_string(),
                s.total_energy.to_string(),
                db,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

pub struct Simulation {
    scenario: Scenario,
    ctx: ClusterContext,
    energy: EnergyModel,
    schedule: BTreeMap<Tick, Vec<Movement>>,
    validate_at: BTreeSet<Tick>,
    network: Network,
    leases: BTreeMap<NodeId, AddressAssignment>,
    events: Vec<EventRecord>,
    maintenance: Vec<MaintenanceEvent>,
    snapshots: BTreeMap<Tick, PartitionSummary>,
    tick: Tick,
}

impl Simulation {
    /// Validates the scenario and performs tick 0.
    pub fn new(scenario: Scenario) -> Result<Self, EngineError> {
        scenario.validate()?;
        let ctx = ClusterContext::from_scenario(&scenario);
        let mut network = Network::from_scenario(&scenario);
        let formed = form_partition(&network.nodes, &ctx)?;
        network.install(formed.partition, 0);

        let mut sim = Self {
            energy: EnergyModel::from_scenario(&scenario),
            schedule: scenario.movement_schedule(),
            validate_at: scenario.validate_at.iter().copied().collect(),
            ctx,
            scenario,
            network,
            leases: BTreeMap::new(),
            events: Vec::new(),
            maintenance: Vec::new(),
            snapshots: BTreeMap::new(),
            tick: 0,
        };
        for c in sim.network.partition.clusters.clone() {
            let members = c.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";");
            sim.push(
                EventKind::Formation,
                c.head,
                Some(c.id),
                format!("seed={} members={members}", c.seed),
            );
        }
        let gateways = elect_gateways(&mut sim.network, sim.ctx.tx_range, sim.ctx.metric, 0);
        sim.record_maintenance(gateways);
        sim.sync_addresses()?;
        sim.snapshot()?;
        Ok(sim)
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn leases(&self) -> &BTreeMap<NodeId, AddressAssignment> {
        &self.leases
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.scenario.ticks
    }

    fn push(&mut self, kind: EventKind, subject: NodeId, cluster: Option<ClusterId>, detail: String) {
        self.events.push(EventRecord {
            seq: self.events.len() as u64,
            tick: self.tick,
            kind,
            subject,
            cluster,
            detail,
        });
    }

    fn record_maintenance(&mut self, batch: Vec<MaintenanceEvent>) {
        for e in batch {
            let rec = e.to_record(self.events.len() as u64);
            self.events.push(rec);
            self.maintenance.push(e);
        }
    }

    fn sync_addresses(&mut self) -> Result<(), EngineError> {
        for c in &mut self.network.partition.clusters {
            c.prefix = Some(cluster_prefix(c.id)?);
        }
        let delta = reconcile(&mut self.leases, &self.network.partition, self.tick)?;
        for a in delta.released {
            self.push(
                EventKind::AddressReleased,
                a.node,
                Some(a.cluster),
                a.address.to_string(),
            );
        }
        for a in delta.assigned {
            self.push(
                EventKind::AddressAssigned,
                a.node,
                Some(a.cluster),
                a.address.to_string(),
            );
        }
        Ok(())
    }

    fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            metric: Metric::Manhattan,
            center: self.scenario.db_center,
        }
    }

    fn snapshot(&mut self) -> Result<(), EngineError> {
        let p = &self.network.partition;
        let wanted = self.validate_at.contains(&self.tick) || self.tick == self.scenario.ticks;
        let (db_index, db_undefined) = if wanted {
            match db_index_with(p, &self.network.positions(), self.validation_config()) {
                Ok(r) => (Some(r.db_index), false),
                Err(ValidationError::TooFewClusters(_)) => (None, true),
                Err(e) => return Err(e.into()),
            }
        } else {
            (None, false)
        };
        let summary = PartitionSummary {
            tick: self.tick,
            clusters: p.clusters.len(),
            heads: p.heads(),
            non_clustered: p.non_clustered.len(),
            total_energy: self.network.total_energy(),
            db_index,
            db_undefined,
        };
        self.snapshots.insert(self.tick, summary);
        Ok(())
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.tick += 1;
        let tick = self.tick;
        let movements = self.schedule.get(&tick).cloned().unwrap_or_default();
        let moved = apply_movements(&mut self.network, &movements, tick);
        for id in &moved {
            let n = self.network.nodes[id];
            let cluster = self.network.partition.cluster_of(*id);
            self.push(
                EventKind::NodeMoved,
                *id,
                cluster,
                format!("from={} to={}", n.prev_pos, n.pos),
            );
        }

        let s = &self.scenario;
        let (threshold, period) = (s.energy_threshold, s.rotation_period);
        let batch = handle_mobility(&mut self.network, &moved, &self.ctx, tick)?;
        self.record_maintenance(batch);
        let batch = distribute_load(&mut self.network, threshold, tick);
        self.record_maintenance(batch);
        let batch = rotate_heads(&mut self.network, tick, threshold, period);
        self.record_maintenance(batch);
        let batch = elect_gateways(&mut self.network, self.ctx.tx_range, self.ctx.metric, tick);
        self.record_maintenance(batch);
        self.network.sync_roles();
        self.sync_addresses()?;

        drain_energy(&mut self.network, &self.energy);
        self.snapshot()
    }

    /// Runs the remaining ticks and returns the trace.
    pub fn finish(mut self) -> Result<SimulationTrace, EngineError> {
        while !self.is_finished() {
            self.step()?;
        }
        let final_report = match db_index_with(
            &self.network.partition,
            &self.network.positions(),
            self.validation_config(),
        ) {
            Ok(r) => FinalReport::Computed(r),
            Err(ValidationError::TooFewClusters(k)) => FinalReport::NotApplicable { clusters: k },
            Err(e) => return Err(e.into()),
        };
        Ok(SimulationTrace {
            scenario_digest: self.scenario.digest(),
            events: self.events,
            maintenance: self.maintenance,
            snapshots: self.snapshots,
            final_report,
            final_network: self.network,
        })
    }
}

/// Runs a scenario from tick 0 to its last tick.
pub fn run(scenario: &Scenario) -> Result<SimulationTrace, EngineError> {
    Simulation::new(scenario.clone())?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeSpec, Partition, Point};

    fn line(xs: &[f64], energy: f64) -> Scenario {
        Scenario {
            nodes: xs
                .iter()
                .enumerate()
                .map(|(i, x)| NodeSpec {
                    id: NodeId(i as u32),
                    x: *x,
                    y: 40.0,
                    energy,
                })
                .collect(),
            ticks: 10,
            ..Scenario::default()
        }
    }

    #[test]
    fn tick_zero_forms_and_addresses() {
        let sim = Simulation::new(line(&[10.0, 13.0, 17.0], 1000.0)).unwrap();
        let kinds: Vec<EventKind> = sim.events().iter().map(|e| e.kind).collect();
        assert_eq!(kinds[0], EventKind::Formation);
        assert_eq!(kinds.iter().filter(|k| **k == EventKind::AddressAssigned).count(), 3);
        assert!(sim.events().iter().all(|e| e.tick == 0));
        assert!(sim.network().partition.clusters[0].prefix.is_some());
        assert_eq!(sim.leases().len(), 3);
    }

    #[test]
    fn movement_sets_previous_position() {
        let mut net = Network::from_scenario(&line(&[10.0, 13.0], 1000.0));
        let m = Movement {
            tick: 1,
            node: NodeId(1),
            x: 14.0,
            y: 40.0,
        };
        let moved = apply_movements(&mut net, &[m], 1);
        assert_eq!(moved, [NodeId(1)].into());
        assert_eq!(net.nodes[&NodeId(1)].prev_pos, Point::new(13.0, 40.0));
        assert_eq!(net.nodes[&NodeId(1)].last_moved, Some(1));
        let moved = apply_movements(&mut net, &[], 2);
        assert!(moved.is_empty());
        assert_eq!(net.nodes[&NodeId(1)].prev_pos, Point::new(14.0, 40.0));
        let stay = Movement { x: 14.0, ..m };
        assert!(apply_movements(&mut net, &[stay], 3).is_empty());
    }

    #[test]
    fn drain_by_role_floors_at_zero() {
        let mut s = line(&[10.0, 13.0, 17.0], 1.0);
        s.drain_head = 2.0;
        s.drain_proxy = 1.5;
        s.drain_member = 0.25;
        let model = EnergyModel::from_scenario(&s);
        let mut sim = Simulation::new(s).unwrap();
        let net = &mut sim.network;
        let head = net.partition.clusters[0].head;
        let spent = drain_energy(net, &model);
        assert_eq!(net.nodes[&head].energy, 0.0);
        assert!((spent - (1.0 + 0.25 + 0.25)).abs() < 1e-12);

        let mut s = line(&[10.0, 13.0, 17.0], 10.0);
        s.drain_proxy = 1.5;
        let mut net = Simulation::new(s).unwrap().network;
        let head = net.partition.clusters[0].head;
        let proxy = *net.partition.clusters[0].members.iter().find(|m| **m != head).unwrap();
        net.partition.clusters[0].proxy_head = Some(proxy);
        net.sync_roles();
        drain_energy(&mut net, &model);
        assert_eq!(net.nodes[&head].energy, 9.75);
        assert_eq!(net.nodes[&proxy].energy, 8.5);
    }

    #[test]
    fn energy_never_increases() {
        let trace = run(&line(&[10.0, 13.0, 17.0, 39.0], 600.0)).unwrap();
        let totals: Vec<f64> = trace.snapshots.values().map(|s| s.total_energy).collect();
        assert!(totals.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.final_network.nodes.values().all(|n| n.energy >= 0.0));
    }

    #[test]
    fn single_cluster_has_no_index() {
        let trace = run(&line(&[10.0, 13.0, 17.0], 1000.0)).unwrap();
        assert_eq!(trace.final_report, FinalReport::NotApplicable { clusters: 1 });
        assert!(trace.snapshots[&10].db_undefined);
        let mut buf = Vec::new();
        trace.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().ends_with(",undefined"));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn jsonl_has_one_event_per_line() {
        let trace = run(&line(&[10.0, 13.0, 17.0], 1000.0)).unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), trace.events.len());
        let first: EventRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.seq, 0);
    }

    #[test]
    fn empty_network_runs() {
        let s = Scenario {
            ticks: 3,
            ..Scenario::default()
        };
        let trace = run(&s).unwrap();
        assert!(trace.events.is_empty());
        assert_eq!(trace.final_network.partition, Partition::default());
    }
    #[test]
    fn static_network_is_quiet_after_formation() {
        let mut s = line(&[10.0, 13.0, 17.0, 30.0, 39.0], 1000.0);
        s.energy_threshold = 0.0;
        s.ticks = 50;
        let trace = run(&s).unwrap();
        assert!(trace.events.iter().all(|e| e.tick == 0));
        assert!(!trace.events.is_empty());
    }

    #[test]
    fn energy_is_conserved_tick_by_tick() {
        let mut s = line(&[10.0, 13.0, 17.0, 22.0, 27.0], 505.0);
        s.rotation_period = 3;
        s.drain_proxy = 1.0;
        s.ticks = 60;
        let model = EnergyModel::from_scenario(&s);
        let mut sim = Simulation::new(s).unwrap();
        while !sim.is_finished() {
            let before: BTreeMap<NodeId, f64> = sim.network.nodes.iter().map(|(id, n)| (*id, n.energy)).collect();
            sim.step().unwrap();
            // maintenance leaves energy alone and drain leaves roles alone
            let mut expected = 0.0;
            for (id, n) in &sim.network.nodes {
                let relieved = sim
                    .network
                    .partition
                    .clusters
                    .iter()
                    .any(|c| c.head == *id && c.proxy_head.is_some());
                let rate = match n.role {
                    Role::ClusterHead if relieved => model.drain_member,
                    Role::ClusterHead => model.drain_head,
                    Role::ProxyHead => model.drain_proxy,
                    _ => model.drain_member,
                };
                let e = (before[id] - rate).max(0.0);
                assert_eq!(n.energy, e, "node {id}");
                expected += e;
            }
            assert!((sim.network.total_energy() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn head_and_member_drift_apart_by_rate_difference() {
        let mut s = line(&[10.0, 13.0], 1000.0);
        s.energy_threshold = 0.0;
        s.ticks = 100;
        let trace = run(&s).unwrap();
        let head = trace.final_network.partition.clusters[0].head;
        let other = NodeId(1 - head.0);
        let n = &trace.final_network.nodes;
        let gap = n[&other].energy - n[&head].energy;
        assert!((gap - 100.0 * (s.drain_head - s.drain_member)).abs() < 1e-9);
    }

    #[test]
    fn drain_arithmetic() {
        let mut s = line(&[10.0, 39.0], 10.0);
        s.drain_member = 3.0;
        s.drain_head = 3.0;
        let model = EnergyModel::from_scenario(&s);
        let mut net = Network::from_scenario(&s);
        assert!((drain_energy(&mut net, &model) - 6.0).abs() < 1e-12);
        assert_eq!(net.nodes[&NodeId(0)].energy, 7.0);
        net.nodes.get_mut(&NodeId(0)).unwrap().energy = 1.0;
        drain_energy(&mut net, &model);
        assert_eq!(net.nodes[&NodeId(0)].energy, 0.0);
    }

    #[test]
    fn events_name_known_ids_in_order() {
        let mut s = Scenario {
            node_count: Some(40),
            ticks: 80,
            energy_threshold: 990.0,
            rotation_period: 5,
            ..Scenario::default()
        }
        .with_seed(3);
        let starts: Vec<_> = s.nodes.iter().map(|n| (n.id, n.position())).collect();
        let params = crate::model::WaypointParams {
            speed: (0.5, 3.0),
            pause: 3,
            report_every: 2,
        };
        s.movements = crate::model::random_waypoint(&starts, (s.area_width, s.area_height), s.ticks, params, 3);
        let trace = run(&s).unwrap();
        let ids: BTreeSet<NodeId> = s.nodes.iter().map(|n| n.id).collect();
        let formed = trace.events_of(EventKind::Formation).count() as u32;
        for (i, e) in trace.events.iter().enumerate() {
            assert_eq!(e.seq, i as u64);
            assert!(ids.contains(&e.subject), "{e:?}");
            assert!(e.cluster.is_none_or(|c| c.0 >= 1 && c.0 <= formed), "{e:?}");
        }
        assert!(trace.events.windows(2).all(|w| w[0].tick <= w[1].tick));
        assert!(trace.events_of(EventKind::ReAffiliation).count() > 0);
    }
}
