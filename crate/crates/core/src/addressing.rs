//! Stateless IPv6 assignment, with each cluster head acting as the address
//! authority for its cluster.
//!
//! Cluster `k` owns the unique-local prefix `fd00:0:0:k::/64`; node `n`
//! receives interface identifier `n + 1` inside it (so the all-zeros
//! subnet-router anycast identifier is never handed out). Non-clustered nodes
//! get no address. Leases, DUIDs and message exchange are not modeled.

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterId, NodeId, Partition, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("cluster id {0} does not fit the 16-bit subnet field")]
    SubnetCapacity(ClusterId),
}

const ULA_HIGH: u128 = 0xfd00_u128 << 112;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressAssignment {
    pub node: NodeId,
    pub cluster: ClusterId,
    pub address: Ipv6Addr,
    pub prefix: Ipv6Addr,
    pub assigned_at: Tick,
}

/// The `/64` prefix owned by a cluster.
pub fn cluster_prefix(cluster: ClusterId) -> Result<Ipv6Addr, AddressError> {
    if cluster.0 > u16::MAX as u32 {
        return Err(AddressError::SubnetCapacity(cluster));
    }
    Ok(Ipv6Addr::from(ULA_HIGH | (u128::from(cluster.0) << 64)))
}

pub fn node_address(cluster: ClusterId, node: NodeId) -> Result<Ipv6Addr, AddressError> {
    let prefix = u128::from(cluster_prefix(cluster)?);
    Ok(Ipv6Addr::from(prefix | (u128::from(node.0) + 1)))
}

/// Upper 64 bits of an address.
pub fn prefix_of(address: Ipv6Addr) -> Ipv6Addr {
    Ipv6Addr::from(u128::from(address) & !(u128::from(u64::MAX)))
}

/// Addresses for every clustered node, in assignment order: per cluster the
/// head first, then the remaining members by ascending id.
pub fn assign_addresses(partition: &Partition, tick: Tick) -> Result<Vec<AddressAssignment>, AddressError> {
    let mut out = Vec::with_capacity(partition.clustered_count());
    for cluster in &partition.clusters {
        let prefix = cluster_prefix(cluster.id)?;
        let order = std::iter::once(cluster.head).chain(cluster.members.iter().copied().filter(|m| *m != cluster.head));
        for node in order {
            out.push(AddressAssignment {
                node,
                cluster: cluster.id,
                address: node_address(cluster.id, node)?,
                prefix,
                assigned_at: tick,
            });
        }
    }
    Ok(out)
}

/// Outcome of re-running assignment over a changed partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AddressDelta {
    pub assigned: Vec<AddressAssignment>,
    pub released: Vec<AddressAssignment>,
}

/// Re-assigns addresses, keeping existing leases whose address is unchanged.
pub fn reconcile(
    current: &mut BTreeMap<NodeId, AddressAssignment>,
    partition: &Partition,
    tick: Tick,
) -> Result<AddressDelta, AddressError> {
    let fresh = assign_addresses(partition, tick)?;
    let mut delta = AddressDelta::default();
    let mut next = BTreeMap::new();
    for a in fresh {
        match current.get(&a.node) {
            Some(old) if old.address == a.address => {
                next.insert(a.node, *old);
            }
            Some(old) => {
                delta.released.push(*old);
                delta.assigned.push(a);
                next.insert(a.node, a);
            }
            None => {
                delta.assigned.push(a);
                next.insert(a.node, a);
            }
        }
    }
    for (id, old) in current.iter() {
        if !next.contains_key(id) {
            delta.released.push(*old);
        }
    }
    *current = next;
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cluster;
    use std::collections::BTreeSet;

    #[test]
    fn scheme_arithmetic() {
        let a = node_address(ClusterId(1), NodeId(6)).unwrap();
        assert_eq!(a.to_string(), "fd00:0:0:1::7");
        assert_eq!(cluster_prefix(ClusterId(1)).unwrap().to_string(), "fd00:0:0:1::");
        assert_eq!(prefix_of(a), cluster_prefix(ClusterId(1)).unwrap());
        assert_eq!(
            node_address(ClusterId(0xffff), NodeId(0)).unwrap().to_string(),
            "fd00:0:0:ffff::1"
        );
        assert_eq!(
            cluster_prefix(ClusterId(0x1_0000)),
            Err(AddressError::SubnetCapacity(ClusterId(0x1_0000)))
        );
    }

    #[test]
    fn empty_partition_gets_nothing() {
        assert!(assign_addresses(&Partition::default(), 0).unwrap().is_empty());
    }

    fn two_clusters() -> Partition {
        let mut a = Cluster::new(ClusterId(1), NodeId(0), [0, 3, 6].map(NodeId));
        a.head = NodeId(6);
        let b = Cluster::new(ClusterId(2), NodeId(1), [1, 2].map(NodeId));
        Partition {
            clusters: vec![a, b],
            non_clustered: [NodeId(9)].into(),
        }
    }

    #[test]
    fn head_first_then_members() {
        let got = assign_addresses(&two_clusters(), 0).unwrap();
        let order: Vec<u32> = got.iter().map(|a| a.node.0).collect();
        assert_eq!(order, vec![6, 0, 3, 1, 2]);
        let unique: BTreeSet<_> = got.iter().map(|a| a.address).collect();
        assert_eq!(unique.len(), got.len());
        assert!(got.iter().all(|a| prefix_of(a.address) == a.prefix));
        assert!(!got.iter().any(|a| a.node == NodeId(9)));
    }

    #[test]
    fn reaffiliation_releases_old_address() {
        let mut p = two_clusters();
        let mut leases = BTreeMap::new();
        let first = reconcile(&mut leases, &p, 0).unwrap();
        assert_eq!(first.assigned.len(), 5);
        assert!(reconcile(&mut leases, &p, 1).unwrap() == AddressDelta::default());

        p.clusters[0].members.remove(&NodeId(3));
        p.clusters[1].members.insert(NodeId(3));
        p.clusters[1].members.remove(&NodeId(2));
        p.non_clustered.insert(NodeId(2));
        let delta = reconcile(&mut leases, &p, 5).unwrap();
        assert_eq!(delta.assigned.len(), 1);
        assert_eq!(delta.assigned[0].address.to_string(), "fd00:0:0:2::4");
        assert_eq!(delta.assigned[0].assigned_at, 5);
        let released: Vec<u32> = delta.released.iter().map(|a| a.node.0).collect();
        assert_eq!(released, vec![3, 2]);
        assert_eq!(leases[&NodeId(0)].assigned_at, 0);
        assert!(!leases.contains_key(&NodeId(2)));
    }
}
