//! Range-limited neighbor graph and minimum-hop path finding.
//!
//! Route choice depends only on registered coordinates, the range and
//! participation flags. Nodes have no way to advertise a route of their own.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::ledger::Address;
use crate::registry::NodeRecord;

/// Default communication range in metres.
pub const DEFAULT_RANGE_M: f64 = 100.0;

/// Symmetric adjacency; each neighbor list is in ascending address order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RouteTable {
    adjacency: BTreeMap<Address, Vec<Address>>,
}

impl RouteTable {
    pub fn neighbors(&self, address: &Address) -> Option<&[Address]> {
        self.adjacency.get(address).map(Vec::as_slice)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.adjacency.contains_key(address)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Address> {
        self.adjacency.keys()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Each undirected edge once, smaller address first.
    pub fn edges(&self) -> Vec<(Address, Address)> {
        self.adjacency
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (*a, *b)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Route {
    pub hops: Vec<Address>,
}

impl Route {
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    pub fn source(&self) -> Address {
        self.hops[0]
    }

    pub fn destination(&self) -> Address {
        *self.hops.last().expect("route is never empty")
    }

    /// Positions strictly between source and destination.
    pub fn intermediaries(&self) -> &[Address] {
        if self.hops.len() < 2 {
            &[]
        } else {
            &self.hops[1..self.hops.len() - 1]
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("No route found")]
    NoRoute,
    #[error("source and destination are the same node")]
    SameEndpoints,
    #[error("{0} is not in the route table")]
    NotInTable(Address),
}

/// Builds the neighbor graph over participating, non-faulty records.
pub fn update_graph<'a>(records: impl IntoIterator<Item = &'a NodeRecord>, range_m: f64) -> RouteTable {
    let points: Vec<(Address, Vec3)> = records
        .into_iter()
        .filter(|r| r.participating && !r.faulty)
        .map(|r| (r.address, r.position))
        .collect();
    neighbor_graph(&points, range_m)
}

/// Edge iff Euclidean distance is at most `range_m` (boundary inclusive).
pub fn neighbor_graph(points: &[(Address, Vec3)], range_m: f64) -> RouteTable {
    let mut adjacency: BTreeMap<Address, Vec<Address>> =
        points.iter().map(|(a, _)| (*a, Vec::new())).collect();
    for (i, (a, pa)) in points.iter().enumerate() {
        for (b, pb) in &points[i + 1..] {
            if a != b && pa.distance(*pb) <= range_m {
                adjacency.get_mut(a).expect("inserted above").push(*b);
                adjacency.get_mut(b).expect("inserted above").push(*a);
            }
        }
    }
    for neighbors in adjacency.values_mut() {
        neighbors.sort();
        neighbors.dedup();
    }
    RouteTable { adjacency }
}

/// Breadth-first search; neighbors are explored in ascending address order,
/// so among equal-length routes the result is deterministic.
pub fn path_find(table: &RouteTable, source: Address, dest: Address) -> Result<Route, RoutingError> {
    if source == dest {
        return Err(RoutingError::SameEndpoints);
    }
    for endpoint in [source, dest] {
        if !table.contains(&endpoint) {
            return Err(RoutingError::NotInTable(endpoint));
        }
    }
    let mut parent: BTreeMap<Address, Address> = BTreeMap::new();
    let mut queue = VecDeque::from([source]);
    parent.insert(source, source);
    while let Some(current) = queue.pop_front() {
        if current == dest {
            let mut hops = vec![dest];
            let mut cursor = dest;
            while cursor != source {
                cursor = parent[&cursor];
                hops.push(cursor);
            }
            hops.reverse();
            return Ok(Route { hops });
        }
        for next in table.neighbors(&current).unwrap_or_default() {
            if !parent.contains_key(next) {
                parent.insert(*next, current);
                queue.push_back(*next);
            }
        }
    }
    Err(RoutingError::NoRoute)
}
