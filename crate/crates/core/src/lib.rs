//! Weighted cluster formation, maintenance and validation for mobile ad hoc
//! networks.
//!
//! The weight of a node combines its in-cluster degree, its mobility, the sum
//! of distances to its neighbors and the energy it has consumed; the lightest
//! node of a cluster becomes its head. Distances are Manhattan for W-PAC and
//! Euclidean for the WCA baseline.
//!
//! ```
//! use wpac_core::{form_clusters, Algorithm, Scenario};
//!
//! let scenario = Scenario {
//!     node_count: Some(30),
//!     ..Scenario::default()
//! }
//! .with_seed(7);
//! let result = form_clusters(&scenario, Algorithm::Wpac).unwrap();
//! assert!(!result.partition.clusters.is_empty() || !result.partition.non_clustered.is_empty());
//! ```

pub mod addressing;
pub mod clustering;
pub mod engine;
pub mod maintenance;
pub mod metrics;
pub mod model;
pub mod validation;

pub use addressing::{assign_addresses, AddressAssignment, AddressError};
pub use clustering::{form_clusters, form_partition, ClusterContext, ClusterError, FormationResult};
pub use engine::{run, EngineError, Simulation, SimulationTrace};
pub use maintenance::{MaintenanceEvent, MaintenanceKind};
pub use metrics::{node_weight, Metric, MetricsError, WeightBreakdown};
pub use model::*;
pub use validation::{db_index, Center, Compactness, ValidationError, ValidationReport};
