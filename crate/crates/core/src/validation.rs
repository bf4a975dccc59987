//! Davies-Bouldin validity index over a partition.
//!
//! For clusters `i` and `j` with scatter `S` (mean member distance to the
//! cluster center) and separation `M` (distance between centers):
//!
//! ```text
//! R_ij = (S_i + S_j) / M_ij
//! DB   = (1/K) * sum_i max_{j != i} R_ij
//! ```
//!
//! By default the center is the cluster head and the metric is Manhattan.
//! A value below 0.5 classifies the partition as compact.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::metrics::Metric;
use crate::model::{Cluster, ClusterId, NodeId, Partition, Point};

pub const COMPACT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("validity index undefined for {0} cluster(s); at least 2 are required")]
    TooFewClusters(usize),
    #[error("no position for node {0}")]
    UnknownNode(NodeId),
    #[error("cluster {0} has no members")]
    EmptyCluster(ClusterId),
}

/// Which point stands for a cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    #[default]
    Head,
    Centroid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidationConfig {
    pub metric: Metric,
    pub center: Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compactness {
    Compact,
    LessCompact,
}

impl std::fmt::Display for Compactness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Compactness::Compact => "Compact",
            Compactness::LessCompact => "LessCompact",
        })
    }
}

pub fn classify(db: f64) -> Compactness {
    if db < COMPACT_THRESHOLD {
        Compactness::Compact
    } else {
        Compactness::LessCompact
    }
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairTerm {
    pub a: ClusterId,
    pub b: ClusterId,
    pub scatter_a: f64,
    pub scatter_b: f64,
    pub separation: f64,
    /// `+inf` when the two centers coincide.
    #[serde(serialize_with = "finite_or_inf")]
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scatter: BTreeMap<ClusterId, f64>,
    pub pairs: Vec<PairTerm>,
    #[serde(serialize_with = "finite_or_inf")]
    pub db_index: f64,
    pub classification: Compactness,
    /// Some pair of centers coincided.
    pub degenerate: bool,
}

impl ValidationReport {
    fn pair(&self, a: ClusterId, b: ClusterId) -> Option<&PairTerm> {
        self.pairs.iter().find(|p| (p.a, p.b) == (a, b) || (p.a, p.b) == (b, a))
    }

    pub fn separation(&self, a: ClusterId, b: ClusterId) -> Option<f64> {
        self.pair(a, b).map(|p| p.separation)
    }

    pub fn ratio(&self, a: ClusterId, b: ClusterId) -> Option<f64> {
        self.pair(a, b).map(|p| p.ratio)
    }

    /// One row per cluster pair: `pair,s_i,s_j,m_ij,r_ij`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair", "s_i", "s_j", "m_ij", "r_ij"])?;
        for p in &self.pairs {
            w.write_record([
                format!("{}-{}", p.a, p.b),
                p.scatter_a.to_string(),
                p.scatter_b.to_string(),
                p.separation.to_string(),
                p.ratio.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn position(positions: &BTreeMap<NodeId, Point>, id: NodeId) -> Result<Point, ValidationError> {
    positions.get(&id).copied().ok_or(ValidationError::UnknownNode(id))
}

fn center_of(cluster: &Cluster, positions: &BTreeMap<NodeId, Point>, center: Center) -> Result<Point, ValidationError> {
    if cluster.is_empty() {
        return Err(ValidationError::EmptyCluster(cluster.id));
    }
    match center {
        Center::Head => position(positions, cluster.head),
        Center::Centroid => {
            let (mut sx, mut sy) = (0.0, 0.0);
            for m in &cluster.members {
                let p = position(positions, *m)?;
                sx += p.x;
                sy += p.y;
            }
            let n = cluster.len() as f64;
            Ok(Point::new(sx / n, sy / n))
        }
    }
}

/// Mean member distance to the cluster center under `cfg`.
pub fn scatter_with(
    cluster: &Cluster,
    positions: &BTreeMap<NodeId, Point>,
    cfg: ValidationConfig,
) -> Result<f64, ValidationError> {
    let c = center_of(cluster, positions, cfg.center)?;
    let mut total = 0.0;
    for m in &cluster.members {
        total += cfg.metric.distance(position(positions, *m)?, c);
    }
    Ok(total / cluster.len() as f64)
}

/// Mean Manhattan distance from the members to the head.
pub fn cluster_scatter(cluster: &Cluster, positions: &BTreeMap<NodeId, Point>) -> Result<f64, ValidationError> {
    scatter_with(cluster, positions, ValidationConfig::default())
}

/// Manhattan distance between the two heads.
pub fn cluster_separation(
    ci: &Cluster,
    cj: &Cluster,
    positions: &BTreeMap<NodeId, Point>,
) -> Result<f64, ValidationError> {
    separation_with(ci, cj, positions, ValidationConfig::default())
}

pub fn separation_with(
    ci: &Cluster,
    cj: &Cluster,
    positions: &BTreeMap<NodeId, Point>,
    cfg: ValidationConfig,
) -> Result<f64, ValidationError> {
    let a = center_of(ci, positions, cfg.center)?;
    let b = center_of(cj, positions, cfg.center)?;
    Ok(cfg.metric.distance(a, b))
}

pub fn db_index(
    partition: &Partition,
    positions: &BTreeMap<NodeId, Point>,
) -> Result<ValidationReport, ValidationError> {
    db_index_with(partition, positions, ValidationConfig::default())
}

/// Full report; non-clustered nodes do not take part.
pub fn db_index_with(
    partition: &Partition,
    positions: &BTreeMap<NodeId, Point>,
    cfg: ValidationConfig,
) -> Result<ValidationReport, ValidationError> {
    let clusters = &partition.clusters;
    let k = clusters.len();
    if k < 2 {
        return Err(ValidationError::TooFewClusters(k));
    }
    let scatter: Vec<f64> = clusters
        .iter()
        .map(|c| scatter_with(c, positions, cfg))
        .collect::<Result<_, _>>()?;

    let mut worst = vec![0.0f64; k];
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut degenerate = false;
    for i in 0..k {
        for j in i + 1..k {
            let sep = separation_with(&clusters[i], &clusters[j], positions, cfg)?;
            let ratio = if sep > 0.0 {
                (scatter[i] + scatter[j]) / sep
            } else {
                degenerate = true;
                f64::INFINITY
            };
            worst[i] = worst[i].max(ratio);
            worst[j] = worst[j].max(ratio);
            pairs.push(PairTerm {
                a: clusters[i].id,
                b: clusters[j].id,
                scatter_a: scatter[i],
                scatter_b: scatter[j],
                separation: sep,
                ratio,
            });
        }
    }
    let db = worst.iter().sum::<f64>() / k as f64;
    let classification = if degenerate {
        Compactness::LessCompact
    } else {
        classify(db)
    };
    Ok(ValidationReport {
        scatter: clusters.iter().map(|c| c.id).zip(scatter).collect(),
        pairs,
        db_index: db,
        classification,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(id: u32, head: u32, members: &[u32]) -> Cluster {
        let mut c = Cluster::new(ClusterId(id), NodeId(head), members.iter().map(|m| NodeId(*m)));
        c.head = NodeId(head);
        c
    }

    fn positions(pts: &[(u32, f64, f64)]) -> BTreeMap<NodeId, Point> {
        pts.iter().map(|(id, x, y)| (NodeId(*id), Point::new(*x, *y))).collect()
    }

    #[test]
    fn scatter_by_hand() {
        let pos = positions(&[(0, 0.0, 0.0), (1, 2.0, 0.0), (2, 0.0, 4.0)]);
        assert_eq!(cluster_scatter(&cluster(1, 0, &[0, 1, 2]), &pos), Ok(2.0));
        assert_eq!(cluster_scatter(&cluster(1, 0, &[0]), &pos), Ok(0.0));
        let centroid = ValidationConfig {
            center: Center::Centroid,
            ..Default::default()
        };
        // centroid (2/3, 4/3)
        let s = scatter_with(&cluster(1, 0, &[0, 1, 2]), &pos, centroid).unwrap();
        assert!((s - (2.0 + (4.0 / 3.0 + 4.0 / 3.0) + (2.0 / 3.0 + 8.0 / 3.0)) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn separation_by_hand() {
        let pos = positions(&[(0, 28.0, 14.0), (1, 60.0, 50.0)]);
        let a = cluster(1, 0, &[0]);
        let b = cluster(2, 1, &[1]);
        assert_eq!(cluster_separation(&a, &b, &pos), Ok(68.0));
        assert_eq!(cluster_separation(&b, &a, &pos), Ok(68.0));
    }

    #[test]
    fn far_singletons_score_zero() {
        let pos = positions(&[(0, 0.0, 0.0), (1, 30.0, 70.0)]);
        let p = Partition {
            clusters: vec![cluster(1, 0, &[0]), cluster(2, 1, &[1])],
            non_clustered: Default::default(),
        };
        let r = db_index(&p, &pos).unwrap();
        assert_eq!(r.db_index, 0.0);
        assert_eq!(r.classification, Compactness::Compact);
    }

    #[test]
    fn two_clusters_by_hand() {
        // scatter 5 each: members at Manhattan 10 from the head, head contributes 0
        let pos = positions(&[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 40.0, 0.0), (3, 40.0, 10.0)]);
        let p = Partition {
            clusters: vec![cluster(1, 0, &[0, 1]), cluster(2, 2, &[2, 3])],
            non_clustered: Default::default(),
        };
        let r = db_index(&p, &pos).unwrap();
        assert_eq!(r.scatter[&ClusterId(1)], 5.0);
        assert_eq!(r.separation(ClusterId(2), ClusterId(1)), Some(40.0));
        assert_eq!(r.ratio(ClusterId(1), ClusterId(2)), Some(0.25));
        assert_eq!(r.db_index, 0.25);
        assert_eq!(r.classification, Compactness::Compact);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "pair,s_i,s_j,m_ij,r_ij\n1-2,5,5,40,0.25\n"
        );
    }

    #[test]
    fn coincident_heads_are_flagged() {
        let pos = positions(&[(0, 5.0, 5.0), (1, 6.0, 5.0), (2, 5.0, 5.0)]);
        let p = Partition {
            clusters: vec![cluster(1, 0, &[0, 1]), cluster(2, 2, &[2])],
            non_clustered: Default::default(),
        };
        let r = db_index(&p, &pos).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ratio(ClusterId(1), ClusterId(2)), Some(f64::INFINITY));
        assert_eq!(r.classification, Compactness::LessCompact);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"ratio\":\"inf\""), "{json}");
    }

    #[test]
    fn fewer_than_two_clusters_is_undefined() {
        let pos = positions(&[(0, 0.0, 0.0)]);
        let p = Partition {
            clusters: vec![cluster(1, 0, &[0])],
            non_clustered: Default::default(),
        };
        assert_eq!(db_index(&p, &pos), Err(ValidationError::TooFewClusters(1)));
        assert_eq!(
            db_index(&Partition::default(), &pos),
            Err(ValidationError::TooFewClusters(0))
        );
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(classify(0.5), Compactness::LessCompact);
        assert_eq!(classify(0.4999), Compactness::Compact);
        assert_eq!(classify(0.52), Compactness::LessCompact);
        assert_eq!(classify(0.429), Compactness::Compact);
    }
}
