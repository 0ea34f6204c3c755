//! Hierarchical network topology: user devices at level 0, one or more edge
//! levels above them, a cloud at the top. Links connect adjacent levels;
//! same-level links are allowed only toward peer nodes. Routing is strictly
//! hierarchical (up to the lowest common ancestor, then down), which makes
//! every path unique.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::SimTime;

/// Opaque node identifier, unique within one topology.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(u32);

impl NodeId {
    pub const fn new(v: u32) -> Self {
        NodeId(v)
    }

    pub const fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NodeKind {
    UserDevice,
    /// Edge node that only relays traffic between its children and parent.
    TrafficRoutingEdge,
    /// Edge node with general compute added, able to serve requests.
    CapabilityAddedEdge,
    /// Same-level node a serving edge can spill work onto.
    PeerNode,
    CloudServer,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::UserDevice => "user-device",
            NodeKind::TrafficRoutingEdge => "traffic-routing",
            NodeKind::CapabilityAddedEdge => "capability-added",
            NodeKind::PeerNode => "peer",
            NodeKind::CloudServer => "cloud",
        }
    }
}

/// Concurrent service slots at a node.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Capacity {
    Bounded(u32),
    Unbounded,
}

/// Link throughput; `Unbounded` means latency-only links.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Bandwidth {
    BytesPerSec(u64),
    Unbounded,
}

impl Bandwidth {
    /// Serialization delay for `bytes`, rounded up to whole microseconds.
    pub fn transmission_delay(self, bytes: u64) -> SimTime {
        match self {
            Bandwidth::Unbounded => SimTime::ZERO,
            Bandwidth::BytesPerSec(bps) => {
                let us = ((bytes as u128) * 1_000_000).div_ceil(bps as u128);
                SimTime::from_micros(us as u64)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub level: u32,
    /// Time one request occupies a service slot. Zero for pure routers.
    pub service_time: SimTime,
    pub capacity: Capacity,
    /// Waiting-line bound; `None` is unbounded.
    pub max_queue: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub one_way_latency: SimTime,
    pub bandwidth: Bandwidth,
}

pub type Path = Vec<Link>;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("duplicate node id or name: {0}")]
    DuplicateId(String),
    #[error("link {src}->{dst} violates level adjacency")]
    LevelViolation { src: NodeId, dst: NodeId },
    #[error("node {node} has no path to a cloud server")]
    MissingPath { node: NodeId },
    #[error("node {node} has more than one upstream link")]
    AmbiguousParent { node: NodeId },
    #[error("link {src}->{dst} has no reverse direction")]
    MissingReverseLink { src: NodeId, dst: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("no route between {src} and {dst}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("path breaks at hop {index}: {src}->{dst} does not continue the chain")]
    DiscontiguousPath {
        index: usize,
        src: NodeId,
        dst: NodeId,
    },
}

/// Validated network. Construction via [`Topology::build`] runs the full
/// validator, so holding a `Topology` means the invariants held at build
/// time.
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<(NodeId, NodeId), Link>,
    /// Upward neighbor for every non-cloud node; peers point at the edge
    /// they are attached to.
    parent: BTreeMap<NodeId, NodeId>,
    device_assignment: BTreeMap<NodeId, NodeId>,
    levels: u32,
}

impl Topology {
    pub fn build(
        nodes: Vec<Node>,
        links: Vec<Link>,
        device_assignment: BTreeMap<NodeId, NodeId>,
    ) -> Result<Self, TopologyError> {
        let mut node_map = BTreeMap::new();
        let mut names = BTreeSet::new();
        let mut levels = 0;
        for node in nodes {
            if !names.insert(node.name.clone()) {
                return Err(TopologyError::DuplicateId(node.name));
            }
            levels = levels.max(node.level + 1);
            if node_map.insert(node.id, node.clone()).is_some() {
                return Err(TopologyError::DuplicateId(node.id.to_string()));
            }
        }

        let mut link_map = BTreeMap::new();
        for link in links {
            if link.src == link.dst {
                return Err(TopologyError::LevelViolation {
                    src: link.src,
                    dst: link.dst,
                });
            }
            if link_map
                .insert((link.src, link.dst), link.clone())
                .is_some()
            {
                return Err(TopologyError::DuplicateId(format!(
                    "link {}->{}",
                    link.src, link.dst
                )));
            }
        }

        // Check level adjacency before deriving parents so a link skipping
        // a level reports as such rather than as a missing path.
        for link in link_map.values() {
            let src = node_map
                .get(&link.src)
                .ok_or_else(|| TopologyError::UnknownNode(link.src.to_string()))?;
            let dst = node_map
                .get(&link.dst)
                .ok_or_else(|| TopologyError::UnknownNode(link.dst.to_string()))?;
            let diff = src.level.abs_diff(dst.level);
            let same_level_peer =
                diff == 0 && (src.kind == NodeKind::PeerNode || dst.kind == NodeKind::PeerNode);
            if diff > 1 || (diff == 0 && !same_level_peer) {
                return Err(TopologyError::LevelViolation {
                    src: link.src,
                    dst: link.dst,
                });
            }
        }

        let mut parent = BTreeMap::new();
        for node in node_map.values() {
            if node.kind == NodeKind::CloudServer {
                continue;
            }
            let mut ups = Vec::new();
            for (src, dst) in link_map.keys() {
                if *src != node.id {
                    continue;
                }
                let other = node_map
                    .get(dst)
                    .ok_or_else(|| TopologyError::UnknownNode(dst.to_string()))?;
                let upward = other.level == node.level + 1;
                let peer_attach = node.kind == NodeKind::PeerNode
                    && other.level == node.level
                    && other.kind != NodeKind::PeerNode;
                if upward || peer_attach {
                    ups.push(*dst);
                }
            }
            match ups.as_slice() {
                [] => return Err(TopologyError::MissingPath { node: node.id }),
                [up] => {
                    parent.insert(node.id, *up);
                }
                _ => return Err(TopologyError::AmbiguousParent { node: node.id }),
            }
        }

        let topo = Topology {
            nodes: node_map,
            links: link_map,
            parent,
            device_assignment,
            levels,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Re-checks every structural invariant. Cheap enough to run after any
    /// test-side mutation.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for link in self.links.values() {
            let src = self
                .nodes
                .get(&link.src)
                .ok_or_else(|| TopologyError::UnknownNode(link.src.to_string()))?;
            let dst = self
                .nodes
                .get(&link.dst)
                .ok_or_else(|| TopologyError::UnknownNode(link.dst.to_string()))?;
            let diff = src.level.abs_diff(dst.level);
            let same_level_peer =
                diff == 0 && (src.kind == NodeKind::PeerNode || dst.kind == NodeKind::PeerNode);
            if diff > 1 || (diff == 0 && !same_level_peer) {
                return Err(TopologyError::LevelViolation {
                    src: link.src,
                    dst: link.dst,
                });
            }
            if !self.links.contains_key(&(link.dst, link.src)) {
                return Err(TopologyError::MissingReverseLink {
                    src: link.src,
                    dst: link.dst,
                });
            }
        }

        for node in self.nodes.values() {
            match node.kind {
                NodeKind::UserDevice => {
                    if node.level != 0 {
                        return Err(TopologyError::LevelViolation {
                            src: node.id,
                            dst: node.id,
                        });
                    }
                    let assigned = self
                        .device_assignment
                        .get(&node.id)
                        .ok_or(TopologyError::MissingPath { node: node.id })?;
                    if self.parent.get(&node.id) != Some(assigned) {
                        return Err(TopologyError::MissingPath { node: node.id });
                    }
                }
                NodeKind::CloudServer if node.level + 1 != self.levels => {
                    return Err(TopologyError::LevelViolation {
                        src: node.id,
                        dst: node.id,
                    });
                }
                _ => {}
            }
            if node.kind != NodeKind::CloudServer {
                // Chain must terminate at a cloud within `levels` hops.
                self.cloud_for(node.id)?;
            }
            if let Some(up) = self.parent.get(&node.id) {
                if !self.links.contains_key(&(node.id, *up)) {
                    return Err(TopologyError::MissingPath { node: node.id });
                }
            }
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.nodes
            .get(&id)
            .ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link(&self, src: NodeId, dst: NodeId) -> Result<&Link, TopologyError> {
        self.links
            .get(&(src, dst))
            .ok_or(TopologyError::Unreachable { src, dst })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn name_of(&self, id: NodeId) -> String {
        self.nodes
            .get(&id)
            .map(|n| n.name.clone())
            .unwrap_or_else(|| id.to_string())
    }

    pub fn device_assignment(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.device_assignment
    }

    pub fn assigned_edge(&self, device: NodeId) -> Result<NodeId, TopologyError> {
        self.device_assignment
            .get(&device)
            .copied()
            .ok_or(TopologyError::MissingPath { node: device })
    }

    /// Chain of upward neighbors starting at `id`, ending at the root.
    fn chain(&self, id: NodeId) -> Vec<NodeId> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(up) = self.parent.get(&cur) {
            chain.push(*up);
            cur = *up;
            if chain.len() > self.nodes.len() {
                break; // cycle; validate() reports it elsewhere
            }
        }
        chain
    }

    /// Cloud server reachable from `id` by following upward links.
    pub fn cloud_for(&self, id: NodeId) -> Result<NodeId, TopologyError> {
        let chain = self.chain(id);
        let root = *chain.last().expect("chain contains the start node");
        match self.nodes.get(&root) {
            Some(n) if n.kind == NodeKind::CloudServer => Ok(root),
            _ => Err(TopologyError::MissingPath { node: id }),
        }
    }

    /// Unique hierarchical route from `src` to `dst`: climb to the lowest
    /// common ancestor, then descend. Empty path iff `src == dst`.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Result<Path, TopologyError> {
        self.node(src)?;
        self.node(dst)?;
        if src == dst {
            return Ok(Vec::new());
        }
        let up = self.chain(src);
        let down = self.chain(dst);
        let down_pos: BTreeMap<NodeId, usize> =
            down.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut meet = None;
        for (i, n) in up.iter().enumerate() {
            if let Some(j) = down_pos.get(n) {
                meet = Some((i, *j));
                break;
            }
        }
        let (i, j) = meet.ok_or(TopologyError::Unreachable { src, dst })?;
        let mut path = Vec::with_capacity(i + j);
        for k in 0..i {
            path.push(self.link(up[k], up[k + 1])?.clone());
        }
        for k in (0..j).rev() {
            path.push(self.link(down[k + 1], down[k])?.clone());
        }
        Ok(path)
    }

    /// First link on the route from `from` to `dest`.
    pub fn next_hop(&self, from: NodeId, dest: NodeId) -> Result<Link, TopologyError> {
        let path = self.route(from, dest)?;
        path.into_iter().next().ok_or(TopologyError::Unreachable {
            src: from,
            dst: dest,
        })
    }

    /// Serving edges: distinct assignment targets, ascending id order.
    pub fn serving_edges(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.device_assignment.values().copied().collect();
        set.into_iter().collect()
    }

    /// Peer nodes attached to `edge`, ascending id order.
    pub fn peers_of(&self, edge: NodeId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::PeerNode && self.parent.get(&n.id) == Some(&edge))
            .map(|n| n.id)
            .collect()
    }

    /// Whether a link crosses between the top edge level and the cloud.
    pub fn is_edge_cloud_link(&self, src: NodeId, dst: NodeId) -> bool {
        let kind = |id: NodeId| self.nodes.get(&id).map(|n| n.kind);
        kind(src) == Some(NodeKind::CloudServer) || kind(dst) == Some(NodeKind::CloudServer)
    }

    /// Exact latency of a contiguous path: integer sum of link latencies.
    pub fn path_latency(path: &[Link]) -> Result<SimTime, TopologyError> {
        let mut total = SimTime::ZERO;
        for (i, link) in path.iter().enumerate() {
            if i > 0 && path[i - 1].dst != link.src {
                return Err(TopologyError::DiscontiguousPath {
                    index: i,
                    src: link.src,
                    dst: link.dst,
                });
            }
            total += link.one_way_latency;
        }
        Ok(total)
    }

    #[cfg(test)]
    pub(crate) fn remove_link_for_test(&mut self, src: NodeId, dst: NodeId) {
        self.links.remove(&(src, dst));
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::engine::SimRng;

    fn node(id: u32, name: &str, kind: NodeKind, level: u32) -> Node {
        Node {
            id: NodeId::new(id),
            name: name.to_string(),
            kind,
            level,
            service_time: SimTime::from_millis(10),
            capacity: Capacity::Unbounded,
            max_queue: None,
        }
    }

    fn sym_link(a: u32, b: u32, latency_us: u64) -> Vec<Link> {
        vec![
            Link {
                src: NodeId::new(a),
                dst: NodeId::new(b),
                one_way_latency: SimTime::from_micros(latency_us),
                bandwidth: Bandwidth::Unbounded,
            },
            Link {
                src: NodeId::new(b),
                dst: NodeId::new(a),
                one_way_latency: SimTime::from_micros(latency_us),
                bandwidth: Bandwidth::Unbounded,
            },
        ]
    }

    /// device(2) -> edge(1) -> cloud(0)
    pub(crate) fn chain_topology() -> Topology {
        let nodes = vec![
            node(0, "cloud", NodeKind::CloudServer, 2),
            node(1, "edge0", NodeKind::CapabilityAddedEdge, 1),
            node(2, "device0", NodeKind::UserDevice, 0),
        ];
        let mut links = sym_link(2, 1, 3_000);
        links.extend(sym_link(1, 0, 12_000));
        let mut assign = BTreeMap::new();
        assign.insert(NodeId::new(2), NodeId::new(1));
        Topology::build(nodes, links, assign).unwrap()
    }

    /// `devices` user devices round-robined over `edges` level-1 edges.
    pub(crate) fn star_topology(devices: u32, edges: u32) -> Topology {
        let mut nodes = vec![node(0, "cloud", NodeKind::CloudServer, 2)];
        let mut links = Vec::new();
        let mut assign = BTreeMap::new();
        for e in 0..edges {
            nodes.push(node(
                1 + e,
                &format!("edge{e}"),
                NodeKind::CapabilityAddedEdge,
                1,
            ));
            links.extend(sym_link(1 + e, 0, 12_000));
        }
        for d in 0..devices {
            let id = 1 + edges + d;
            let edge = 1 + (d % edges);
            nodes.push(node(id, &format!("device{d}"), NodeKind::UserDevice, 0));
            links.extend(sym_link(id, edge, 3_000));
            assign.insert(NodeId::new(id), NodeId::new(edge));
        }
        Topology::build(nodes, links, assign).unwrap()
    }

    /// Shortest-path oracle over the raw link set, ignoring hierarchy.
    fn bfs_route(topo: &Topology, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        use std::collections::VecDeque;
        let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([src]);
        let mut seen = BTreeSet::from([src]);
        while let Some(cur) = queue.pop_front() {
            if cur == dst {
                let mut path = vec![dst];
                let mut at = dst;
                while at != src {
                    at = prev[&at];
                    path.push(at);
                }
                path.reverse();
                return Some(path);
            }
            for link in topo.links() {
                if link.src == cur && seen.insert(link.dst) {
                    prev.insert(link.dst, cur);
                    queue.push_back(link.dst);
                }
            }
        }
        None
    }

    #[test]
    fn builds_minimal_chain() {
        let topo = chain_topology();
        assert_eq!(topo.levels(), 3);
        assert_eq!(topo.device_assignment().len(), 1);
    }

    #[test]
    fn ten_devices_two_edges_assigns_five_each() {
        let topo = star_topology(10, 2);
        assert_eq!(topo.device_assignment().len(), 10);
        let to_first = topo
            .device_assignment()
            .values()
            .filter(|e| **e == NodeId::new(1))
            .count();
        assert_eq!(to_first, 5);
    }

    #[test]
    fn device_without_edge_is_missing_path() {
        let nodes = vec![
            node(0, "cloud", NodeKind::CloudServer, 2),
            node(1, "device0", NodeKind::UserDevice, 0),
        ];
        let err = Topology::build(nodes, Vec::new(), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TopologyError::MissingPath { .. }));
    }

    #[test]
    fn duplicate_name_is_rejected() {
        let nodes = vec![
            node(0, "cloud", NodeKind::CloudServer, 1),
            node(1, "cloud", NodeKind::CapabilityAddedEdge, 0),
        ];
        let err = Topology::build(nodes, Vec::new(), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TopologyError::DuplicateId(_)));
    }

    #[test]
    fn level_skipping_link_is_rejected() {
        let nodes = vec![
            node(0, "cloud", NodeKind::CloudServer, 3),
            node(1, "mid", NodeKind::CapabilityAddedEdge, 2),
            node(2, "edge0", NodeKind::CapabilityAddedEdge, 1),
            node(3, "device0", NodeKind::UserDevice, 0),
        ];
        let mut links = sym_link(3, 2, 1_000);
        links.extend(sym_link(2, 0, 1_000)); // skips level 2
        links.extend(sym_link(1, 0, 1_000));
        let mut assign = BTreeMap::new();
        assign.insert(NodeId::new(3), NodeId::new(2));
        let err = Topology::build(nodes, links, assign).unwrap_err();
        assert!(matches!(err, TopologyError::LevelViolation { .. }));
    }

    #[test]
    fn route_identity_is_empty() {
        let topo = chain_topology();
        assert!(topo
            .route(NodeId::new(2), NodeId::new(2))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn route_device_to_cloud_has_two_links() {
        let topo = chain_topology();
        let path = topo.route(NodeId::new(2), NodeId::new(0)).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path[0].src, NodeId::new(2));
        assert_eq!(path[1].dst, NodeId::new(0));
    }

    #[test]
    fn route_matches_bfs_oracle_on_random_stars() {
        for seed in 0..50u64 {
            let mut rng = SimRng::derive(seed, 0x70);
            let devices = rng.range_u64(1, 8) as u32;
            let edges = rng.range_u64(1, 3) as u32;
            let topo = star_topology(devices, edges);
            let ids: Vec<NodeId> = topo.nodes().map(|n| n.id).collect();
            for _ in 0..10 {
                let a = ids[rng.range_u64(0, ids.len() as u64 - 1) as usize];
                let b = ids[rng.range_u64(0, ids.len() as u64 - 1) as usize];
                let route = topo.route(a, b).unwrap();
                let oracle = bfs_route(&topo, a, b).expect("connected");
                let via: Vec<NodeId> = std::iter::once(a)
                    .chain(route.iter().map(|l| l.dst))
                    .collect();
                assert_eq!(via, oracle, "seed {seed} route {a}->{b}");
            }
        }
    }

    #[test]
    fn route_reversal_symmetry() {
        let topo = star_topology(6, 2);
        let ids: Vec<NodeId> = topo.nodes().map(|n| n.id).collect();
        for &a in &ids {
            for &b in &ids {
                let forward = topo.route(a, b).unwrap();
                let backward = topo.route(b, a).unwrap();
                let flipped: Vec<(NodeId, NodeId)> =
                    backward.iter().rev().map(|l| (l.dst, l.src)).collect();
                let fwd: Vec<(NodeId, NodeId)> = forward.iter().map(|l| (l.src, l.dst)).collect();
                assert_eq!(fwd, flipped);
            }
        }
    }

    #[test]
    fn path_latency_sums_exactly() {
        let topo = chain_topology();
        let empty = topo.route(NodeId::new(2), NodeId::new(2)).unwrap();
        assert_eq!(Topology::path_latency(&empty).unwrap(), SimTime::ZERO);

        let one = topo.route(NodeId::new(2), NodeId::new(1)).unwrap();
        assert_eq!(
            Topology::path_latency(&one).unwrap(),
            SimTime::from_micros(3_000)
        );

        let two = topo.route(NodeId::new(2), NodeId::new(0)).unwrap();
        assert_eq!(
            Topology::path_latency(&two).unwrap(),
            SimTime::from_micros(15_000)
        );
    }

    #[test]
    fn discontiguous_path_is_rejected() {
        let topo = star_topology(4, 2);
        let a = topo.link(NodeId::new(3), NodeId::new(1)).unwrap().clone();
        let b = topo.link(NodeId::new(2), NodeId::new(0)).unwrap().clone();
        let err = Topology::path_latency(&[a, b]).unwrap_err();
        assert!(matches!(err, TopologyError::DiscontiguousPath { .. }));
    }

    #[test]
    fn random_valid_configs_validate_and_mutations_fail() {
        for seed in 0..100u64 {
            let mut rng = SimRng::derive(seed, 0x71);
            let devices = rng.range_u64(1, 10) as u32;
            let edges = rng.range_u64(1, 4) as u32;
            let topo = star_topology(devices, edges);
            topo.validate().expect("fresh topology validates");

            // Removing any single link must break validation.
            let links: Vec<(NodeId, NodeId)> = topo.links().map(|l| (l.src, l.dst)).collect();
            let pick = links[rng.range_u64(0, links.len() as u64 - 1) as usize];
            let mut broken = topo.clone();
            broken.remove_link_for_test(pick.0, pick.1);
            assert!(broken.validate().is_err(), "seed {seed} removed {pick:?}");
        }
    }

    #[test]
    fn transmission_delay_rounds_up() {
        let bw = Bandwidth::BytesPerSec(1_000_000);
        assert_eq!(bw.transmission_delay(1), SimTime::from_micros(1));
        assert_eq!(bw.transmission_delay(1_000_000), SimTime::from_secs(1));
        assert_eq!(
            Bandwidth::Unbounded.transmission_delay(1 << 40),
            SimTime::ZERO
        );
    }
}
