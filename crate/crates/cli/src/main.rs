//! `wpac`: form, simulate and validate weighted clusters from the command line.
//!
//! Exit status: 0 success, 2 bad input or missing file, 3 output I/O failure,
//! 4 validity index undefined (fewer than two clusters).

mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wpac_core::engine::bench::{benchmark_formation, write_bench_csv};
use wpac_core::engine::{run, EngineError, FinalReport};
use wpac_core::validation::{db_index_with, ValidationConfig};
use wpac_core::{
    assign_addresses, form_clusters, generate_nodes, random_waypoint, AddressAssignment, Algorithm, NodeId, NodeSpec,
    Partition, Point, Scenario, ScenarioError, ValidationError, WaypointParams,
};

use output::{atomic_write, Failure};

#[derive(Parser)]
#[command(
    name = "wpac",
    version,
    about = "Weighted cluster formation and maintenance simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Form clusters over a scenario's initial layout.
    Form(FormArgs),
    /// Run a scenario tick by tick and write its trace.
    Simulate(SimArgs),
    /// Compute the validity index of a partition.
    Validate(ValidateArgs),
    /// Compare formation time of both algorithms on shared layouts.
    Bench(BenchArgs),
    /// Write a random scenario file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Wpac,
    Wca,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Wpac => Algorithm::Wpac,
            AlgoArg::Wca => Algorithm::Wca,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "WPAC_OUT_DIR", default_value = "wpac-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's algorithm.
    #[arg(long, value_enum)]
    algorithm: Option<AlgoArg>,
    /// Overrides the scenario seed; generated layouts are redrawn.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Failure> {
        let mut s = Scenario::from_path(&self.scenario).map_err(scenario_failure)?;
        if let Some(seed) = self.seed {
            s = s.with_seed(seed);
        }
        if let Some(a) = self.algorithm {
            s.algorithm = a.into();
        }
        Ok(s)
    }
}

#[derive(Args)]
struct FormArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Overrides the number of ticks.
    #[arg(long)]
    ticks: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// `partition.json` written by `form`.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Form the scenario first, then validate.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    algorithm: Option<AlgoArg>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "25,50,500")]
    counts: Vec<usize>,
    /// Number of layouts per count; layout `i` uses seed `i`.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Timed repetitions per layout and algorithm.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Area and factors come from this scenario when given.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 25)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    ticks: u64,
    /// Add random-waypoint movements.
    #[arg(long)]
    mobility: bool,
    #[arg(long, value_enum, default_value = "wpac")]
    algorithm: AlgoArg,
    #[command(flatten)]
    common: Common,
}

fn scenario_failure(e: ScenarioError) -> Failure {
    Failure::Input(e.to_string())
}

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::Io(e) => Failure::Io(e.to_string()),
        EngineError::Csv(e) => Failure::Io(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn render(buf: impl FnOnce(&mut Vec<u8>) -> Result<(), EngineError>) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    buf(&mut out).map_err(engine_failure)?;
    Ok(out)
}

fn join(ids: &mut dyn Iterator<Item = &NodeId>) -> String {
    ids.map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Per cluster: a header line, then one line per member in address order.
fn partition_text(p: &Partition, addresses: &BTreeMap<NodeId, AddressAssignment>) -> String {
    let mut s = String::new();
    for c in &p.clusters {
        s.push_str(&format!(
            "cluster {} head {} members {} gateways {}\n",
            c.id,
            c.head,
            join(&mut c.members.iter()),
            join(&mut c.gateways.iter())
        ));
        let order = std::iter::once(c.head).chain(c.members.iter().copied().filter(|m| *m != c.head));
        for m in order {
            let w = c.weights.get(&m).map(|w| w.total).unwrap_or(f64::NAN);
            let a = addresses.get(&m).map(|a| a.address.to_string()).unwrap_or_default();
            s.push_str(&format!("  node {m} weight {w} address {a}\n"));
        }
    }
    s.push_str(&format!("non_clustered {}\n", join(&mut p.non_clustered.iter())));
    s
}

fn partition_csv(
    p: &Partition,
    positions: &BTreeMap<NodeId, Point>,
    addresses: &BTreeMap<NodeId, AddressAssignment>,
) -> String {
    let mut s = String::from("node,cluster,is_head,is_gateway,x,y,weight,address\n");
    for (id, pos) in positions {
        let address = addresses.get(id).map(|a| a.address.to_string()).unwrap_or_default();
        let row = match p.cluster_of(*id).and_then(|c| p.cluster(c)) {
            Some(c) => format!(
                "{id},{},{},{},{},{},{},{address}\n",
                c.id,
                c.head == *id,
                c.gateways.contains(id),
                pos.x,
                pos.y,
                c.weights.get(id).map(|w| w.total.to_string()).unwrap_or_default()
            ),
            None => format!("{id},,false,false,{},{},,\n", pos.x, pos.y),
        };
        s.push_str(&row);
    }
    s
}

fn cmd_form(a: FormArgs) -> Result<(), Failure> {
    let s = a.scenario.load()?;
    let r = form_clusters(&s, s.algorithm).map_err(|e| Failure::Input(e.to_string()))?;
    let mut p = r.partition;
    let mut net = wpac_core::Network::from_scenario(&s);
    net.install(p.clone(), 0);
    wpac_core::maintenance::elect_gateways(&mut net, s.tx_range, s.metric(), 0);
    p = net.partition.clone();
    let positions = net.positions();
    let addresses: BTreeMap<NodeId, AddressAssignment> = assign_addresses(&p, 0)
        .map_err(|e| Failure::Input(e.to_string()))?
        .into_iter()
        .map(|a| (a.node, a))
        .collect();

    let (name, body) = match a.format {
        Format::Text => ("partition.txt", partition_text(&p, &addresses)),
        Format::Csv => ("partition.csv", partition_csv(&p, &positions, &addresses)),
    };
    let doc = json!({
        "algorithm": s.algorithm.name(),
        "tx_range": s.tx_range,
        "positions": positions.iter().map(|(id, p)| json!({"id": id, "x": p.x, "y": p.y})).collect::<Vec<_>>(),
        "partition": p,
        "addresses": addresses.values().collect::<Vec<_>>(),
    });
    let json = serde_json::to_vec_pretty(&doc).map_err(|e| Failure::Io(e.to_string()))?;
    atomic_write(&a.common.out.join(name), body.as_bytes())?;
    atomic_write(&a.common.out.join("partition.json"), &json)?;
    print!("{body}");
    Ok(())
}

fn cmd_simulate(a: SimArgs) -> Result<(), Failure> {
    let mut s = a.scenario.load()?;
    if let Some(t) = a.ticks {
        s.ticks = t;
    }
    let trace = run(&s).map_err(engine_failure)?;
    let out = &a.common.out;
    atomic_write(&out.join("trace.jsonl"), &render(|b| trace.write_jsonl(b))?)?;
    atomic_write(&out.join("ticks.csv"), &render(|b| trace.write_summary_csv(b))?)?;
    let report = json!({
        "scenario_digest": trace.scenario_digest,
        "ticks": s.ticks,
        "events": trace.events.len(),
        "final": trace.final_report,
    });
    let report = serde_json::to_vec_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
    atomic_write(&out.join("report.json"), &report)?;
    let last = trace.snapshots.values().last().expect("tick 0 is always recorded");
    println!(
        "{} ticks, {} events, {} clusters, {} non-clustered",
        s.ticks,
        trace.events.len(),
        last.clusters,
        last.non_clustered
    );
    match &trace.final_report {
        FinalReport::Computed(r) => println!("db_index {} ({})", r.db_index, r.classification),
        FinalReport::NotApplicable { clusters } => println!("db_index undefined ({clusters} cluster(s))"),
    }
    Ok(())
}

fn read_partition(path: &Path) -> Result<(Partition, BTreeMap<NodeId, Point>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let partition: Partition = serde_json::from_value(doc["partition"].clone())
        .map_err(|e| Failure::Input(format!("{}: partition: {e}", path.display())))?;
    let mut positions = BTreeMap::new();
    for p in doc["positions"]
        .as_array()
        .ok_or_else(|| Failure::Input("positions: expected an array".into()))?
    {
        let (Some(id), Some(x), Some(y)) = (p["id"].as_u64(), p["x"].as_f64(), p["y"].as_f64()) else {
            return Err(Failure::Input(format!("positions: malformed entry {p}")));
        };
        let id = u32::try_from(id).map_err(|_| Failure::Input(format!("positions: id {id} out of range")))?;
        positions.insert(NodeId(id), Point::new(x, y));
    }
    partition
        .validate(positions.keys())
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok((partition, positions))
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let (partition, positions, center) = match (&a.source.partition, &a.source.scenario) {
        (Some(p), _) => {
            let (partition, positions) = read_partition(p)?;
            (partition, positions, Default::default())
        }
        (None, Some(path)) => {
            let s = ScenarioArgs {
                scenario: path.clone(),
                algorithm: a.algorithm,
                seed: None,
            }
            .load()?;
            let r = form_clusters(&s, s.algorithm).map_err(|e| Failure::Input(e.to_string()))?;
            (
                r.partition,
                wpac_core::Network::from_scenario(&s).positions(),
                s.db_center,
            )
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    let cfg = ValidationConfig {
        center,
        ..Default::default()
    };
    let report = match db_index_with(&partition, &positions, cfg) {
        Ok(r) => r,
        Err(ValidationError::TooFewClusters(k)) => {
            return Err(Failure::Undefined(format!(
                "validity index undefined: {k} cluster(s), at least 2 required"
            )))
        }
        Err(e) => return Err(Failure::Input(e.to_string())),
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| Failure::Io(e.to_string()))?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
    atomic_write(&a.common.out.join("validation.csv"), &csv)?;
    atomic_write(&a.common.out.join("validation.json"), &json)?;
    match a.format {
        Format::Csv => print!("{}", String::from_utf8_lossy(&csv)),
        Format::Text => {
            for p in &report.pairs {
                println!(
                    "{}-{}: S={} S={} M={} R={}",
                    p.a, p.b, p.scatter_a, p.scatter_b, p.separation, p.ratio
                );
            }
            println!("db_index {} ({})", report.db_index, report.classification);
        }
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let base = match &a.scenario {
        Some(p) => Scenario::from_path(p).map_err(scenario_failure)?,
        None => Scenario::default(),
    };
    if a.counts.is_empty() || a.seeds == 0 {
        return Err(Failure::Input("need at least one count and one seed".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let rows = benchmark_formation(&base, &a.counts, &seeds, a.reps).map_err(engine_failure)?;
    let csv = render(|b| write_bench_csv(&rows, b))?;
    atomic_write(&a.common.out.join("bench.csv"), &csv)?;
    for pair in rows.chunks(2) {
        println!(
            "N={:<5} wpac median {:>10} ns  wca median {:>10} ns  ({} runs each)",
            pair[0].nodes, pair[0].median_ns, pair[1].median_ns, pair[0].samples
        );
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let mut s = Scenario {
        algorithm: a.algorithm.into(),
        ticks: a.ticks,
        seed: a.seed,
        ..Scenario::default()
    };
    let layout = generate_nodes(a.nodes, (s.area_width, s.area_height), a.seed);
    s.nodes = layout
        .iter()
        .map(|(id, p)| NodeSpec {
            id: *id,
            x: p.x,
            y: p.y,
            energy: s.initial_energy,
        })
        .collect();
    if a.mobility {
        s.movements = random_waypoint(
            &layout,
            (s.area_width, s.area_height),
            s.ticks,
            WaypointParams::default(),
            a.seed,
        );
    }
    s.validate().map_err(scenario_failure)?;
    let path = a.common.out.join("scenario.toml");
    atomic_write(&path, s.to_toml().as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Form(a) => cmd_form(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("wpac: {f}");
            ExitCode::from(f.code())
        }
    }
}
