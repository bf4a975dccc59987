//! Distances, node degree, mobility and the composite node weight
//!
//! `W = q1 * degree + q2 * mobility + q3 * distance_sum + q4 * energy_term`
//!
//! Components enter raw, without normalization, so the factors carry the
//! scaling between counts, meters and energy units. The energy component is
//! the energy a node has *consumed* (`initial - remaining`): heads are the
//! minimum-weight nodes, and a head should be a node with plenty of energy
//! left.
//!
//! All range tests are strict: `j` is a neighbor of `i` iff `dist(i, j) < tr`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Node, NodeId, Point, WeightFactors};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("node {0} is not in the node set")]
    UnknownNode(NodeId),
    #[error("node {node} has energy {energy} above the initial {initial}")]
    EnergyAboveInitial { node: NodeId, energy: f64, initial: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Manhattan,
    Euclidean,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: Point, b: Point) -> f64 {
        match self {
            Metric::Manhattan => manhattan_distance(a, b),
            Metric::Euclidean => euclidean_distance(a, b),
        }
    }

    #[inline]
    pub fn in_range(self, a: Point, b: Point, tr: f64) -> bool {
        self.distance(a, b) < tr
    }
}

/// Monomorphized distance used by the hot formation loops.
pub(crate) trait PlanarDistance {
    fn dist(a: Point, b: Point) -> f64;
}

pub(crate) struct ManhattanDist;
pub(crate) struct EuclideanDist;

impl PlanarDistance for ManhattanDist {
    #[inline(always)]
    fn dist(a: Point, b: Point) -> f64 {
        manhattan_distance(a, b)
    }
}

impl PlanarDistance for EuclideanDist {
    #[inline(always)]
    fn dist(a: Point, b: Point) -> f64 {
        euclidean_distance(a, b)
    }
}

#[inline]
pub fn manhattan_distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

#[inline]
pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

fn find(n: NodeId, nodes: &[Node]) -> Result<&Node, MetricsError> {
    nodes.iter().find(|m| m.id == n).ok_or(MetricsError::UnknownNode(n))
}

/// Number of other nodes strictly within `tr` of node `n`.
pub fn node_degree(n: NodeId, nodes: &[Node], tr: f64, metric: Metric) -> Result<usize, MetricsError> {
    let me = find(n, nodes)?;
    Ok(nodes
        .iter()
        .filter(|o| o.id != n && metric.in_range(me.pos, o.pos, tr))
        .count())
}

/// Distance between the current and previous position; zero iff the node did
/// not move during the last tick.
pub fn mobility_measure(n: &Node) -> f64 {
    manhattan_distance(n.pos, n.prev_pos)
}

/// Sum of distances from `n` to every other member strictly within `tr`.
pub fn distance_sum(n: NodeId, members: &[Node], tr: f64, metric: Metric) -> Result<f64, MetricsError> {
    let me = find(n, members)?;
    Ok(members
        .iter()
        .filter(|o| o.id != n)
        .map(|o| metric.distance(me.pos, o.pos))
        .filter(|d| *d < tr)
        .sum())
}

/// Energy already consumed by the node.
pub fn energy_term(n: &Node, initial_energy: f64) -> Result<f64, MetricsError> {
    if n.energy > initial_energy {
        return Err(MetricsError::EnergyAboveInitial {
            node: n.id,
            energy: n.energy,
            initial: initial_energy,
        });
    }
    Ok(initial_energy - n.energy)
}

/// Components and total of a node's weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightBreakdown {
    pub degree: usize,
    pub mobility: f64,
    pub distance_sum: f64,
    pub energy_term: f64,
    pub total: f64,
}

impl WeightBreakdown {
    pub fn compose(factors: &WeightFactors, degree: usize, mobility: f64, distance_sum: f64, energy_term: f64) -> Self {
        let total =
            factors.q1 * degree as f64 + factors.q2 * mobility + factors.q3 * distance_sum + factors.q4 * energy_term;
        Self {
            degree,
            mobility,
            distance_sum,
            energy_term,
            total,
        }
    }
}

/// Weight of `n` evaluated against the member set of its candidate cluster.
///
/// Degree and distance sum only count members, mobility uses `metric`.
pub fn node_weight(
    n: &Node,
    members: &[Node],
    factors: &WeightFactors,
    tr: f64,
    metric: Metric,
    initial_energy: f64,
) -> Result<WeightBreakdown, MetricsError> {
    if !members.iter().any(|m| m.id == n.id) {
        return Err(MetricsError::UnknownNode(n.id));
    }
    match metric {
        Metric::Manhattan => weight_with::<ManhattanDist>(n, members, factors, tr, initial_energy),
        Metric::Euclidean => weight_with::<EuclideanDist>(n, members, factors, tr, initial_energy),
    }
}

/// Single pass over the members computing degree and distance sum together.
#[inline]
pub(crate) fn weight_with<D: PlanarDistance>(
    n: &Node,
    members: &[Node],
    factors: &WeightFactors,
    tr: f64,
    initial_energy: f64,
) -> Result<WeightBreakdown, MetricsError> {
    let mut degree = 0usize;
    let mut sum = 0.0;
    for o in members {
        if o.id == n.id {
            continue;
        }
        let d = D::dist(n.pos, o.pos);
        if d < tr {
            degree += 1;
            sum += d;
        }
    }
    let mobility = D::dist(n.pos, n.prev_pos);
    let energy = energy_term(n, initial_energy)?;
    Ok(WeightBreakdown::compose(factors, degree, mobility, sum, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn node(id: u32, x: f64, y: f64) -> Node {
        Node::new(NodeId(id), Point::new(x, y), 1000.0)
    }

    const FACTORS: WeightFactors = WeightFactors {
        q1: 0.7,
        q2: 0.2,
        q3: 0.05,
        q4: 0.05,
    };

    #[test]
    fn distances_on_known_points() {
        let a = Point::new(28.0, 14.0);
        let b = Point::new(38.0, 34.0);
        assert_eq!(manhattan_distance(a, b), 30.0);
        assert_eq!(manhattan_distance(a, a), 0.0);
        assert_eq!(manhattan_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 7.0);
        assert_eq!(euclidean_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_distance(b, b), 0.0);
    }

    #[test]
    fn degree_uses_strict_range() {
        let nodes = [node(0, 0.0, 5.0), node(1, 10.0, 5.0), node(2, 20.0, 5.0)];
        assert_eq!(node_degree(NodeId(1), &nodes, 20.0, Metric::Manhattan), Ok(2));
        assert_eq!(node_degree(NodeId(0), &nodes, 20.0, Metric::Manhattan), Ok(1));
        assert_eq!(node_degree(NodeId(2), &nodes, 20.0, Metric::Manhattan), Ok(1));
        assert_eq!(node_degree(NodeId(0), &nodes[..1], 20.0, Metric::Manhattan), Ok(0));
        assert_eq!(node_degree(NodeId(0), &nodes, 5.0, Metric::Euclidean), Ok(0));
        assert_eq!(
            node_degree(NodeId(7), &nodes, 20.0, Metric::Manhattan),
            Err(MetricsError::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn mobility_is_manhattan_displacement() {
        let mut n = node(6, 38.0, 34.0);
        assert_eq!(mobility_measure(&n), 0.0);
        n.prev_pos = Point::new(28.0, 14.0);
        assert_eq!(mobility_measure(&n), 30.0);
        n.prev_pos = Point::new(37.0, 34.0);
        assert_eq!(mobility_measure(&n), 1.0);
    }

    #[test]
    fn distance_sum_small_cases() {
        let members = [node(0, 0.0, 0.0), node(1, 1.0, 0.0), node(2, 2.0, 0.0)];
        assert_eq!(distance_sum(NodeId(0), &members, 20.0, Metric::Manhattan), Ok(3.0));
        assert_eq!(distance_sum(NodeId(0), &members[..1], 20.0, Metric::Manhattan), Ok(0.0));
        // out-of-range members do not contribute
        assert_eq!(distance_sum(NodeId(0), &members, 2.0, Metric::Manhattan), Ok(1.0));
    }

    #[test]
    fn energy_term_is_consumption() {
        let mut n = node(0, 0.0, 0.0);
        assert_eq!(energy_term(&n, 1000.0), Ok(0.0));
        n.energy = 600.0;
        assert_eq!(energy_term(&n, 1000.0), Ok(400.0));
        n.energy = 0.0;
        assert_eq!(energy_term(&n, 1000.0), Ok(1000.0));
        n.energy = 1000.5;
        assert!(matches!(
            energy_term(&n, 1000.0),
            Err(MetricsError::EnergyAboveInitial { .. })
        ));
    }

    #[test]
    fn isolated_fresh_node_weighs_nothing() {
        let n = node(0, 5.0, 5.0);
        let w = node_weight(&n, &[n], &FACTORS, 20.0, Metric::Manhattan, 1000.0).unwrap();
        assert_eq!(w.total, 0.0);
    }

    #[test]
    fn weight_composition_by_hand() {
        let w = WeightBreakdown::compose(&FACTORS, 2, 0.0, 30.0, 100.0);
        assert!((w.total - 7.9).abs() < 1e-12, "{}", w.total);
    }

    #[test]
    fn weight_over_members() {
        // member 0 at origin with neighbors at Manhattan 10 and 20 (the latter out of range)
        let mut n = node(0, 0.0, 0.0);
        n.energy = 900.0;
        n.prev_pos = Point::new(0.0, 3.0);
        let members = [n, node(1, 4.0, 6.0), node(2, 10.0, 10.0)];
        let w = node_weight(&n, &members, &FACTORS, 20.0, Metric::Manhattan, 1000.0).unwrap();
        assert_eq!(w.degree, 1);
        assert_eq!(w.distance_sum, 10.0);
        assert_eq!(w.mobility, 3.0);
        assert_eq!(w.energy_term, 100.0);
        assert!((w.total - (0.7 + 0.6 + 0.5 + 5.0)).abs() < 1e-12);
        assert!(node_weight(&node(9, 0.0, 0.0), &members, &FACTORS, 20.0, Metric::Manhattan, 1000.0).is_err());
    }

    fn point() -> impl Strategy<Value = Point> {
        (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric_and_ordered(a in point(), b in point()) {
            let m = manhattan_distance(a, b);
            let e = euclidean_distance(a, b);
            prop_assert_eq!(m, manhattan_distance(b, a));
            prop_assert_eq!(e, euclidean_distance(b, a));
            prop_assert!(e >= 0.0 && m >= 0.0);
            prop_assert!(e <= m + 1e-9);
            prop_assert!(m <= std::f64::consts::SQRT_2 * e + 1e-9);
        }

        #[test]
        fn weight_is_monotone_in_components(
            deg in 0usize..50, mob in 0.0..100.0f64, ds in 0.0..500.0f64, en in 0.0..1000.0f64,
            bump in 0.0..10.0f64,
        ) {
            let base = WeightBreakdown::compose(&FACTORS, deg, mob, ds, en).total;
            prop_assert!(WeightBreakdown::compose(&FACTORS, deg + 1, mob, ds, en).total >= base);
            prop_assert!(WeightBreakdown::compose(&FACTORS, deg, mob + bump, ds, en).total >= base);
            prop_assert!(WeightBreakdown::compose(&FACTORS, deg, mob, ds + bump, en).total >= base);
            prop_assert!(WeightBreakdown::compose(&FACTORS, deg, mob, ds, en + bump).total >= base);
        }
    }
}
