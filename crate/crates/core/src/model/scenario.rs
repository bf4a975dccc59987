//! Scenario files.
//!
//! Scenarios are TOML documents. Every scalar is optional and falls back to
//! the defaults listed on [`Scenario::default`]; nodes are either listed
//! explicitly (`[[nodes]]`) or generated from `node_count` and `seed`.
//!
//! ```toml
//! algorithm = "wpac"
//! tx_range = 20.0
//! node_count = 25
//! seed = 42
//!
//! [factors]
//! q1 = 0.7
//! q2 = 0.2
//! q3 = 0.05
//! q4 = 0.05
//!
//! [[movements]]
//! tick = 10
//! node = 6
//! x = 38.0
//! y = 34.0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{NodeId, Point, Tick};
use crate::metrics::Metric;
use crate::validation::Center;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("movement references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Formation algorithm. The two differ only in the distance metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Weighted partitioning around cluster head, Manhattan distance.
    #[default]
    Wpac,
    /// Weighted clustering algorithm baseline, Euclidean distance.
    Wca,
}

impl Algorithm {
    pub fn metric(self) -> Metric {
        match self {
            Algorithm::Wpac => Metric::Manhattan,
            Algorithm::Wca => Metric::Euclidean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Wpac => "wpac",
            Algorithm::Wca => "wca",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wpac" | "w-pac" => Ok(Algorithm::Wpac),
            "wca" => Ok(Algorithm::Wca),
            other => Err(format!("unknown algorithm `{other}` (expected wpac or wca)")),
        }
    }
}

/// Coefficients of the node weight: degree, mobility, distance sum, energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFactors {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl Default for WeightFactors {
    fn default() -> Self {
        Self {
            q1: 0.7,
            q2: 0.2,
            q3: 0.05,
            q4: 0.05,
        }
    }
}

impl WeightFactors {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn as_array(&self) -> [f64; 4] {
        [self.q1, self.q2, self.q3, self.q4]
    }

    /// Every factor multiplied by `c`; the result is generally not normalized.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            q1: self.q1 * c,
            q2: self.q2 * c,
            q3: self.q3 * c,
            q4: self.q4 * c,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.as_array().iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(invalid("factors", "each factor must lie in [0, 1]"));
        }
        let sum: f64 = self.as_array().iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(invalid("factors", format!("factors sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub energy: f64,
}

impl NodeSpec {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// A scheduled relocation of one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Movement {
    pub tick: Tick,
    pub node: NodeId,
    pub x: f64,
    pub y: f64,
}

impl Movement {
    pub fn target(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// A validated simulation scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub algorithm: Algorithm,
    pub area_width: f64,
    pub area_height: f64,
    pub tx_range: f64,
    pub factors: WeightFactors,
    pub energy_threshold: f64,
    /// Minimum head tenure, in ticks, before rotation may occur.
    pub rotation_period: Tick,
    pub initial_energy: f64,
    pub drain_head: f64,
    pub drain_proxy: f64,
    pub drain_member: f64,
    pub ticks: Tick,
    pub seed: u64,
    /// When set, `nodes` was generated from `seed` and is regenerated on reseed.
    pub node_count: Option<usize>,
    pub nodes: Vec<NodeSpec>,
    pub movements: Vec<Movement>,
    /// Extra ticks at which the validity index is computed; the final tick always is.
    pub validate_at: Vec<Tick>,
    pub db_center: Center,
}

impl Default for Scenario {
    /// 40 x 80 m area, 20 m range, factors (0.7, 0.2, 0.05, 0.05), energy
    /// threshold 500 out of 1000 initial units, 500 ticks.
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Wpac,
            area_width: 40.0,
            area_height: 80.0,
            tx_range: 20.0,
            factors: WeightFactors::default(),
            energy_threshold: 500.0,
            rotation_period: 100,
            initial_energy: 1000.0,
            drain_head: 2.0,
            drain_proxy: 2.0,
            drain_member: 0.5,
            ticks: 500,
            seed: 0,
            node_count: None,
            nodes: Vec::new(),
            movements: Vec::new(),
            validate_at: Vec::new(),
            db_center: Center::Head,
        }
    }
}

/// On-disk form. Field names here are the published schema.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area_height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tx_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_period: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drain_head: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drain_proxy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drain_member: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ticks: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    validate_at: Vec<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    db_center: Option<Center>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factors: Option<WeightFactors>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<NodeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    movements: Vec<Movement>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
}

/// Parses and validates a TOML scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(source)?;
    Scenario::from_doc(doc)
}

/// `count` nodes with ids `0..count`, uniform over `[0, width] x [0, height]`.
pub fn generate_nodes(count: usize, area: (f64, f64), seed: u64) -> Vec<(NodeId, Point)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = area;
    (0..count)
        .map(|i| {
            let x = rng.random_range(0.0..=width);
            let y = rng.random_range(0.0..=height);
            (NodeId(i as u32), Point::new(x, y))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointParams {
    /// Speed range in meters per tick.
    pub speed: (f64, f64),
    /// Ticks spent at each waypoint.
    pub pause: Tick,
    /// Positions are emitted every `report_every` ticks.
    pub report_every: Tick,
}

impl Default for WaypointParams {
    fn default() -> Self {
        Self {
            speed: (0.05, 0.2),
            pause: 50,
            report_every: 10,
        }
    }
}

/// Seeded random-waypoint mobility, sampled into scheduled movements.
pub fn random_waypoint(
    starts: &[(NodeId, Point)],
    area: (f64, f64),
    ticks: Tick,
    params: WaypointParams,
    seed: u64,
) -> Vec<Movement> {
    struct Walker {
        id: NodeId,
        pos: Point,
        reported: Point,
        target: Point,
        speed: f64,
        pause_left: Tick,
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = area;
    let (lo, hi) = params.speed;
    let pick = |rng: &mut ChaCha8Rng| {
        let target = Point::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height));
        let speed = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        (target, speed)
    };
    let mut walkers: Vec<Walker> = starts
        .iter()
        .map(|(id, p)| {
            let (target, speed) = pick(&mut rng);
            Walker {
                id: *id,
                pos: *p,
                reported: *p,
                target,
                speed,
                pause_left: 0,
            }
        })
        .collect();

    let every = params.report_every.max(1);
    let mut out = Vec::new();
    for t in 1..=ticks {
        for w in &mut walkers {
            if w.pause_left > 0 {
                w.pause_left -= 1;
            } else {
                let dx = w.target.x - w.pos.x;
                let dy = w.target.y - w.pos.y;
                let remaining = (dx * dx + dy * dy).sqrt();
                if remaining <= w.speed {
                    w.pos = w.target;
                    w.pause_left = params.pause;
                    let (target, speed) = pick(&mut rng);
                    w.target = target;
                    w.speed = speed;
                } else {
                    let f = w.speed / remaining;
                    w.pos = Point::new(w.pos.x + dx * f, w.pos.y + dy * f);
                }
            }
            if t % every == 0 && w.pos != w.reported {
                w.reported = w.pos;
                out.push(Movement {
                    tick: t,
                    node: w.id,
                    x: w.pos.x,
                    y: w.pos.y,
                });
            }
        }
    }
    out
}

impl Scenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_scenario(&text)
    }

    fn from_doc(doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        let d = Scenario::default();
        let mut s = Scenario {
            algorithm: doc.algorithm.unwrap_or(d.algorithm),
            area_width: doc.area_width.unwrap_or(d.area_width),
            area_height: doc.area_height.unwrap_or(d.area_height),
            tx_range: doc.tx_range.unwrap_or(d.tx_range),
            factors: doc.factors.unwrap_or(d.factors),
            energy_threshold: doc.energy_threshold.unwrap_or(d.energy_threshold),
            rotation_period: doc.rotation_period.unwrap_or(d.rotation_period),
            initial_energy: doc.initial_energy.unwrap_or(d.initial_energy),
            drain_head: doc.drain_head.unwrap_or(d.drain_head),
            drain_proxy: doc.drain_proxy.or(doc.drain_head).unwrap_or(d.drain_proxy),
            drain_member: doc.drain_member.unwrap_or(d.drain_member),
            ticks: doc.ticks.unwrap_or(d.ticks),
            seed: doc.seed.unwrap_or(d.seed),
            node_count: doc.node_count,
            nodes: Vec::new(),
            movements: doc.movements,
            validate_at: doc.validate_at,
            db_center: doc.db_center.unwrap_or(d.db_center),
        };
        if doc.node_count.is_some() && !doc.nodes.is_empty() {
            return Err(invalid("node_count", "cannot be combined with explicit [[nodes]]"));
        }
        if s.node_count.is_some() {
            s.regenerate_nodes();
        } else {
            let initial = s.initial_energy;
            s.nodes = doc
                .nodes
                .into_iter()
                .map(|n| NodeSpec {
                    id: n.id,
                    x: n.x,
                    y: n.y,
                    energy: n.energy.unwrap_or(initial),
                })
                .collect();
        }
        s.validate()?;
        Ok(s)
    }

    fn regenerate_nodes(&mut self) {
        if let Some(count) = self.node_count {
            self.nodes = generate_nodes(count, (self.area_width, self.area_height), self.seed)
                .into_iter()
                .map(|(id, p)| NodeSpec {
                    id,
                    x: p.x,
                    y: p.y,
                    energy: self.initial_energy,
                })
                .collect();
        }
    }

    /// Same scenario under a different seed; generated layouts are redrawn.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.regenerate_nodes();
        self
    }

    pub fn metric(&self) -> Metric {
        self.algorithm.metric()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite positive number, got {v}")))
            }
        };
        let non_negative = |field: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite non-negative number, got {v}")))
            }
        };
        positive("area_width", self.area_width)?;
        positive("area_height", self.area_height)?;
        positive("tx_range", self.tx_range)?;
        non_negative("energy_threshold", self.energy_threshold)?;
        non_negative("initial_energy", self.initial_energy)?;
        non_negative("drain_head", self.drain_head)?;
        non_negative("drain_proxy", self.drain_proxy)?;
        non_negative("drain_member", self.drain_member)?;
        if self.drain_head < self.drain_member {
            return Err(invalid("drain_head", "must be at least drain_member"));
        }
        self.factors.validate()?;

        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(ScenarioError::DuplicateNode(n.id));
            }
            if !n.position().within(self.area_width, self.area_height) {
                return Err(invalid("nodes", format!("node {} lies outside the area", n.id)));
            }
            if !n.energy.is_finite() || n.energy < 0.0 || n.energy > self.initial_energy {
                return Err(invalid(
                    "nodes",
                    format!("node {} energy {} not in [0, initial_energy]", n.id, n.energy),
                ));
            }
        }
        let mut slots = BTreeSet::new();
        for m in &self.movements {
            if !ids.contains(&m.node) {
                return Err(ScenarioError::UnknownNode(m.node));
            }
            if m.tick == 0 {
                return Err(invalid("movements", "tick 0 is reserved for formation"));
            }
            if !m.target().within(self.area_width, self.area_height) {
                return Err(invalid(
                    "movements",
                    format!("node {} at tick {} moves outside the area", m.node, m.tick),
                ));
            }
            if !slots.insert((m.tick, m.node)) {
                return Err(invalid(
                    "movements",
                    format!("node {} moves twice at tick {}", m.node, m.tick),
                ));
            }
        }
        Ok(())
    }

    /// Movements grouped by tick, in file order within a tick.
    pub fn movement_schedule(&self) -> BTreeMap<Tick, Vec<Movement>> {
        let mut schedule: BTreeMap<Tick, Vec<Movement>> = BTreeMap::new();
        for m in &self.movements {
            schedule.entry(m.tick).or_default().push(*m);
        }
        schedule
    }

    fn to_doc(&self) -> ScenarioDoc {
        let generated = self.node_count.is_some();
        ScenarioDoc {
            algorithm: Some(self.algorithm),
            area_width: Some(self.area_width),
            area_height: Some(self.area_height),
            tx_range: Some(self.tx_range),
            energy_threshold: Some(self.energy_threshold),
            rotation_period: Some(self.rotation_period),
            initial_energy: Some(self.initial_energy),
            drain_head: Some(self.drain_head),
            drain_proxy: Some(self.drain_proxy),
            drain_member: Some(self.drain_member),
            ticks: Some(self.ticks),
            seed: Some(self.seed),
            node_count: self.node_count,
            validate_at: self.validate_at.clone(),
            db_center: Some(self.db_center),
            factors: Some(self.factors),
            nodes: if generated {
                Vec::new()
            } else {
                self.nodes
                    .iter()
                    .map(|n| NodeDoc {
                        id: n.id,
                        x: n.x,
                        y: n.y,
                        energy: Some(n.energy),
                    })
                    .collect()
            },
            movements: self.movements.clone(),
        }
    }

    /// Canonical TOML rendering; parses back to an equal scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_doc()).expect("scenario document is always representable")
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_list_only_takes_defaults() {
        let s = load_scenario(
            r#"
            [[nodes]]
            id = 0
            x = 1.0
            y = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(s.tx_range, 20.0);
        assert_eq!(
            s.factors,
            WeightFactors {
                q1: 0.7,
                q2: 0.2,
                q3: 0.05,
                q4: 0.05
            }
        );
        assert_eq!(s.energy_threshold, 500.0);
        assert_eq!((s.area_width, s.area_height), (40.0, 80.0));
        assert_eq!(s.nodes[0].energy, 1000.0);
        assert_eq!(s.algorithm, Algorithm::Wpac);
    }

    #[test]
    fn empty_document_is_valid() {
        let s = load_scenario("").unwrap();
        assert!(s.nodes.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = load_scenario(
            r#"
            [[nodes]]
            id = 3
            x = 1.0
            y = 1.0
            [[nodes]]
            id = 3
            x = 2.0
            y = 2.0
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::DuplicateNode(NodeId(3))), "{err}");
    }

    #[test]
    fn parse_errors_name_the_field() {
        let err = load_scenario("tx_range = \"far\"").unwrap_err();
        assert!(err.to_string().contains("tx_range"), "{err}");
        let err = load_scenario("tx_rnage = 3.0").unwrap_err();
        assert!(err.to_string().contains("tx_rnage"), "{err}");
        let err = load_scenario("tx_range = 0.0").unwrap_err();
        assert!(err.to_string().contains("tx_range"), "{err}");
    }

    #[test]
    fn factors_must_sum_to_one() {
        let err = load_scenario("[factors]\nq1 = 0.5\nq2 = 0.2\nq3 = 0.05\nq4 = 0.05").unwrap_err();
        assert!(err.to_string().contains("factors"), "{err}");
    }

    #[test]
    fn movements_are_checked() {
        let base = "[[nodes]]\nid = 1\nx = 1.0\ny = 1.0\n";
        let outside = format!("{base}[[movements]]\ntick = 1\nnode = 1\nx = 41.0\ny = 0.0\n");
        assert!(load_scenario(&outside).is_err());
        let unknown = format!("{base}[[movements]]\ntick = 1\nnode = 9\nx = 1.0\ny = 0.0\n");
        assert!(matches!(
            load_scenario(&unknown),
            Err(ScenarioError::UnknownNode(NodeId(9)))
        ));
        let at_zero = format!("{base}[[movements]]\ntick = 0\nnode = 1\nx = 1.0\ny = 0.0\n");
        assert!(load_scenario(&at_zero).is_err());
    }

    #[test]
    fn energy_above_initial_is_rejected() {
        let err = load_scenario("[[nodes]]\nid = 1\nx = 1.0\ny = 1.0\nenergy = 1500.0\n").unwrap_err();
        assert!(err.to_string().contains("energy"), "{err}");
    }

    #[test]
    fn generated_nodes_are_deterministic_and_bounded() {
        assert!(generate_nodes(0, (40.0, 80.0), 1).is_empty());
        let a = generate_nodes(25, (40.0, 80.0), 42);
        let b = generate_nodes(25, (40.0, 80.0), 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        assert!(a.iter().all(|(_, p)| p.within(40.0, 80.0)));
        assert_eq!(
            a.iter().map(|(id, _)| id.0).collect::<Vec<_>>(),
            (0..25).collect::<Vec<_>>()
        );
        assert_ne!(a, generate_nodes(25, (40.0, 80.0), 43));
    }

    #[test]
    fn node_count_generates_and_reseeds() {
        let s = load_scenario("node_count = 10\nseed = 5").unwrap();
        assert_eq!(s.nodes.len(), 10);
        let t = s.clone().with_seed(6);
        assert_ne!(s.nodes, t.nodes);
        assert_eq!(t, s.clone().with_seed(6));
        assert!(load_scenario("node_count = 1\n[[nodes]]\nid = 0\nx = 0.0\ny = 0.0").is_err());
    }

    #[test]
    fn waypoints_stay_inside_the_area() {
        let starts = generate_nodes(8, (40.0, 80.0), 1);
        let moves = random_waypoint(&starts, (40.0, 80.0), 300, WaypointParams::default(), 9);
        assert!(!moves.is_empty());
        assert!(moves.iter().all(|m| m.target().within(40.0, 80.0) && m.tick >= 1));
        assert_eq!(
            moves,
            random_waypoint(&starts, (40.0, 80.0), 300, WaypointParams::default(), 9)
        );
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut s = load_scenario("node_count = 4\nseed = 3").unwrap();
        assert_eq!(load_scenario(&s.to_toml()).unwrap(), s);
        s.node_count = None;
        s.movements.push(Movement {
            tick: 2,
            node: NodeId(1),
            x: 3.5,
            y: 7.25,
        });
        s.validate_at = vec![1, 2];
        assert_eq!(load_scenario(&s.to_toml()).unwrap(), s);
        assert_eq!(s.digest(), load_scenario(&s.to_toml()).unwrap().digest());
    }
}
