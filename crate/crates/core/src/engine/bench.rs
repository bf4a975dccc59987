//! Formation-time comparison between W-PAC and WCA on identical layouts.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::clustering::{form_partition, ClusterContext};
use crate::model::{generate_nodes, Algorithm, Node, NodeId, Scenario};

pub const BENCH_HEADER: [&str; 6] = ["nodes", "algorithm", "samples", "median_ns", "mean_ns", "layout_digest"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub nodes: usize,
    pub algorithm: Algorithm,
    pub samples: usize,
    pub median_ns: u128,
    pub mean_ns: f64,
    /// Hash of every layout timed for this node count.
    pub layout_digest: String,
}

fn median(sorted: &[u128]) -> u128 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2
    }
}

fn layout(base: &Scenario, count: usize, seed: u64, hasher: &mut Sha256) -> BTreeMap<NodeId, Node> {
    generate_nodes(count, (base.area_width, base.area_height), seed)
        .into_iter()
        .map(|(id, p)| {
            hasher.update(id.0.to_le_bytes());
            hasher.update(p.x.to_bits().to_le_bytes());
            hasher.update(p.y.to_bits().to_le_bytes());
            (id, Node::new(id, p, base.initial_energy))
        })
        .collect()
}

/// Times formation for every `(count, seed)` layout `reps` times per
/// algorithm. Both algorithms see the same layouts; the order in which they
/// run alternates between repetitions and each layout gets one untimed
/// warm-up per algorithm.
pub fn benchmark_formation(
    base: &Scenario,
    counts: &[usize],
    seeds: &[u64],
    reps: usize,
) -> Result<Vec<TimingRow>, EngineError> {
    if reps == 0 {
        return Err(EngineError::Config("reps must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(EngineError::Config("at least one seed is required".into()));
    }
    let wpac = ClusterContext::for_algorithm(base, Algorithm::Wpac);
    let wca = ClusterContext::for_algorithm(base, Algorithm::Wca);
    let mut rows = Vec::new();
    for &count in counts {
        let mut hasher = Sha256::new();
        let mut samples: [Vec<u128>; 2] = [Vec::new(), Vec::new()];
        for &seed in seeds {
            let nodes = layout(base, count, seed, &mut hasher);
            form_partition(&nodes, &wpac)?;
            form_partition(&nodes, &wca)?;
            for r in 0..reps {
                let order: [usize; 2] = if r % 2 == 0 { [0, 1] } else { [1, 0] };
                for which in order {
                    let ctx = if which == 0 { &wpac } else { &wca };
                    let t: Duration = form_partition(&nodes, ctx)?.elapsed;
                    samples[which].push(t.as_nanos());
                }
            }
        }
        let digest = hex::encode(hasher.finalize());
        for (which, algorithm) in [(0, Algorithm::Wpac), (1, Algorithm::Wca)] {
            let s = &mut samples[which];
            s.sort_unstable();
            let mean = s.iter().map(|v| *v as f64).sum::<f64>() / s.len() as f64;
            rows.push(TimingRow {
                nodes: count,
                algorithm,
                samples: s.len(),
                median_ns: median(s),
                mean_ns: mean,
                layout_digest: digest.clone(),
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[TimingRow], out: W) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record([
            r.nodes.to_string(),
            r.algorithm.name().to_string(),
            r.samples.to_string(),
            r.median_ns.to_string(),
            format!("{:.1}", r.mean_ns),
            r.layout_digest.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
