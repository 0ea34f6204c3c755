//! Scenario files: a small TOML grammar describing workload, message sizes,
//! execution model, and topology. Only `seed` is required; every other
//! field falls back to a calibrated desk-scale default (one capability
//! edge, one cloud, ten players at 5 Hz for 300 s).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::engine::SimTime;
use crate::metrics::Window;
use crate::placement::{ExecutionModel, PlacementRule, RulePredicate, SharePolicy};
use crate::protocol::MessageSizes;
use crate::topology::{Bandwidth, Capacity, Link, Node, NodeId, NodeKind, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

/// Fully resolved and validated scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub horizon: SimTime,
    pub warmup: SimTime,
    pub workload: WorkloadSpec,
    pub sizes: MessageSizes,
    pub sync_interval: SimTime,
    pub execution: ExecutionModel,
    pub topology: TopologySpec,
    pub user_counts: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct WorkloadSpec {
    /// Player count for a single run; sweeps use `user_counts` instead.
    pub players: u32,
    pub update_rate_hz: f64,
    pub arrival: ArrivalKind,
    /// Share of requests forced to the cloud even under an offload model.
    pub cloud_request_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalKind {
    Deterministic,
    Poisson,
}

#[derive(Clone, Debug)]
pub struct TopologySpec {
    pub edge_levels: u32,
    pub edges: Vec<EdgeSpec>,
    pub peers: Vec<PeerSpec>,
    pub cloud: CloudSpec,
    pub devices: DeviceSpec,
}

#[derive(Clone, Debug)]
pub struct EdgeSpec {
    pub name: String,
    pub level: u32,
    /// Name of the upstream node: another edge or the cloud.
    pub parent: String,
    pub kind: NodeKind,
    pub uplink_latency: SimTime,
    pub downlink_latency: SimTime,
    pub bandwidth: Bandwidth,
    pub service_time: SimTime,
    pub capacity: Capacity,
    pub max_queue: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct PeerSpec {
    pub name: String,
    /// Name of the edge this peer hangs off.
    pub attach: String,
    pub link_latency: SimTime,
    pub service_time: SimTime,
    pub capacity: Capacity,
    /// Relative share of dispatched work under capacity-weighted policies.
    pub weight: u64,
    pub max_queue: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct CloudSpec {
    pub name: String,
    pub service_time: SimTime,
    pub capacity: Capacity,
}

#[derive(Clone, Debug)]
pub struct DeviceSpec {
    pub uplink_latency: SimTime,
    pub downlink_latency: SimTime,
    pub bandwidth: Bandwidth,
}

const DEFAULT_HORIZON_S: i64 = 300;
const DEFAULT_PLAYERS: i64 = 10;
const DEFAULT_RATE_HZ: f64 = 5.0;
const DEFAULT_SYNC_INTERVAL_MS: i64 = 1_000;
const DEFAULT_USER_COUNTS: &[u32] = &[1, 5, 10, 25, 50, 100];
const DEFAULT_EDGE_UPLINK_US: i64 = 12_000;
const DEFAULT_EDGE_SERVICE_US: i64 = 26_000;
const DEFAULT_EDGE_CAPACITY: u32 = 16;
const DEFAULT_PEER_LINK_US: i64 = 1_000;
const DEFAULT_CLOUD_SERVICE_US: i64 = 10_000;
const DEFAULT_DEVICE_LINK_US: i64 = 3_000;
const DEFAULT_FILTER_RATIO: f64 = 0.9;
const DEFAULT_BATCH_WINDOW_MS: i64 = 1_000;

/// Read and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawScenario = toml::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fallback_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    resolve(raw, &fallback_name)
}

impl ScenarioConfig {
    /// The calibrated default scenario, as if loaded from a file containing
    /// only a seed.
    pub fn calibrated(seed: u64) -> Self {
        let raw = RawScenario {
            seed,
            name: None,
            horizon_s: None,
            warmup_s: None,
            workload: None,
            messages: None,
            sync: None,
            execution: None,
            topology: None,
            sweep: None,
        };
        resolve(raw, "calibrated").expect("calibrated defaults are valid")
    }

    /// Measurement window `[warmup, horizon)`.
    pub fn window(&self) -> Window {
        Window {
            start: self.warmup,
            end: self.horizon,
        }
    }

    /// Dispatch weight of the peer with this node name, when one exists.
    pub fn peer_weight(&self, name: &str) -> Option<u64> {
        self.topology
            .peers
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.weight)
    }

    /// Materialize the topology for a given number of user devices.
    ///
    /// Node ids are stable against the device count: cloud is 0, edges take
    /// 1..=E in file order, peers follow, and devices fill the tail. That
    /// keeps link identities comparable across the entries of a sweep.
    pub fn build_topology(&self, users: u32) -> Result<Topology, ScenarioError> {
        let topo = &self.topology;
        let cloud_level = topo.edge_levels + 1;
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        let mut assign = std::collections::BTreeMap::new();

        let cloud_id = NodeId::new(0);
        nodes.push(Node {
            id: cloud_id,
            name: topo.cloud.name.clone(),
            kind: NodeKind::CloudServer,
            level: cloud_level,
            service_time: topo.cloud.service_time,
            capacity: topo.cloud.capacity,
            max_queue: None,
        });

        let mut id_of = std::collections::BTreeMap::new();
        id_of.insert(topo.cloud.name.clone(), cloud_id);
        for (i, edge) in topo.edges.iter().enumerate() {
            let id = NodeId::new(1 + i as u32);
            if id_of.insert(edge.name.clone(), id).is_some() {
                return Err(ScenarioError::Validation(format!(
                    "duplicate node name {:?}",
                    edge.name
                )));
            }
            nodes.push(Node {
                id,
                name: edge.name.clone(),
                kind: edge.kind,
                level: edge.level,
                service_time: edge.service_time,
                capacity: edge.capacity,
                max_queue: edge.max_queue,
            });
        }
        for (i, peer) in topo.peers.iter().enumerate() {
            let id = NodeId::new(1 + topo.edges.len() as u32 + i as u32);
            if id_of.insert(peer.name.clone(), id).is_some() {
                return Err(ScenarioError::Validation(format!(
                    "duplicate node name {:?}",
                    peer.name
                )));
            }
        }

        for edge in &topo.edges {
            let src = id_of[&edge.name];
            let dst = *id_of.get(&edge.parent).ok_or_else(|| {
                ScenarioError::Validation(format!(
                    "edge {:?} names unknown parent {:?}",
                    edge.name, edge.parent
                ))
            })?;
            links.push(Link {
                src,
                dst,
                one_way_latency: edge.uplink_latency,
                bandwidth: edge.bandwidth,
            });
            links.push(Link {
                src: dst,
                dst: src,
                one_way_latency: edge.downlink_latency,
                bandwidth: edge.bandwidth,
            });
        }

        for peer in &topo.peers {
            let id = id_of[&peer.name];
            let attach_edge = topo
                .edges
                .iter()
                .find(|e| e.name == peer.attach)
                .ok_or_else(|| {
                    ScenarioError::Validation(format!(
                        "peer {:?} attaches to unknown edge {:?}",
                        peer.name, peer.attach
                    ))
                })?;
            let attach = id_of[&peer.attach];
            nodes.push(Node {
                id,
                name: peer.name.clone(),
                kind: NodeKind::PeerNode,
                level: attach_edge.level,
                service_time: peer.service_time,
                capacity: peer.capacity,
                max_queue: peer.max_queue,
            });
            for (src, dst) in [(id, attach), (attach, id)] {
                links.push(Link {
                    src,
                    dst,
                    one_way_latency: peer.link_latency,
                    bandwidth: Bandwidth::Unbounded,
                });
            }
        }

        let serving: Vec<NodeId> = topo
            .edges
            .iter()
            .filter(|e| e.level == 1)
            .map(|e| id_of[&e.name])
            .collect();
        if serving.is_empty() {
            return Err(ScenarioError::Validation(
                "topology needs at least one level-1 edge to serve devices".to_string(),
            ));
        }
        let device_base = 1 + topo.edges.len() as u32 + topo.peers.len() as u32;
        for d in 0..users {
            let id = NodeId::new(device_base + d);
            let edge = serving[d as usize % serving.len()];
            nodes.push(Node {
                id,
                name: format!("device{d}"),
                kind: NodeKind::UserDevice,
                level: 0,
                service_time: SimTime::ZERO,
                capacity: Capacity::Unbounded,
                max_queue: None,
            });
            links.push(Link {
                src: id,
                dst: edge,
                one_way_latency: topo.devices.uplink_latency,
                bandwidth: topo.devices.bandwidth,
            });
            links.push(Link {
                src: edge,
                dst: id,
                one_way_latency: topo.devices.downlink_latency,
                bandwidth: topo.devices.bandwidth,
            });
            assign.insert(id, edge);
        }

        Topology::build(nodes, links, assign).map_err(|e| ScenarioError::Validation(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Raw TOML shapes. Sizes and times deserialize as i64 so a negative value
// becomes a validation error rather than a cryptic parse failure.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    name: Option<String>,
    horizon_s: Option<i64>,
    warmup_s: Option<i64>,
    workload: Option<RawWorkload>,
    messages: Option<RawMessages>,
    sync: Option<RawSync>,
    execution: Option<RawExecution>,
    topology: Option<RawTopology>,
    sweep: Option<RawSweep>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    players: Option<i64>,
    update_rate_hz: Option<f64>,
    arrival: Option<String>,
    cloud_request_fraction: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMessages {
    request_bytes: Option<i64>,
    response_bytes: Option<i64>,
    header_bytes: Option<i64>,
    per_entry_bytes: Option<i64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSync {
    interval_ms: Option<i64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExecution {
    model: Option<String>,
    filter_ratio: Option<f64>,
    batch_window_ms: Option<i64>,
    policy: Option<String>,
    rules: Option<Vec<RawRule>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    payload_above: Option<i64>,
    device_kind: Option<String>,
    always: Option<bool>,
    model: String,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    edge_levels: Option<i64>,
    edges: Option<Vec<RawEdge>>,
    peers: Option<Vec<RawPeer>>,
    cloud: Option<RawCloud>,
    devices: Option<RawDevices>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    name: String,
    level: Option<i64>,
    parent: Option<String>,
    kind: Option<String>,
    uplink_latency_us: Option<i64>,
    downlink_latency_us: Option<i64>,
    bandwidth_bytes_per_s: Option<i64>,
    service_time_us: Option<i64>,
    capacity: Option<RawCapacity>,
    max_queue: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeer {
    name: String,
    attach: String,
    link_latency_us: Option<i64>,
    service_time_us: Option<i64>,
    capacity: Option<RawCapacity>,
    weight: Option<i64>,
    max_queue: Option<i64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCloud {
    name: Option<String>,
    service_time_us: Option<i64>,
    capacity: Option<RawCapacity>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevices {
    link_latency_us: Option<i64>,
    downlink_latency_us: Option<i64>,
    bandwidth_bytes_per_s: Option<i64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    user_counts: Option<Vec<i64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCapacity {
    Count(i64),
    Keyword(String),
}

fn time_us(field: &str, us: i64) -> Result<SimTime, ScenarioError> {
    if us < 0 {
        return Err(ScenarioError::Validation(format!(
            "{field} must not be negative, got {us}"
        )));
    }
    Ok(SimTime::from_micros(us as u64))
}

fn positive(field: &str, v: i64) -> Result<u64, ScenarioError> {
    if v < 1 {
        return Err(ScenarioError::Validation(format!(
            "{field} must be at least 1, got {v}"
        )));
    }
    Ok(v as u64)
}

fn byte_count(field: &str, v: i64) -> Result<u64, ScenarioError> {
    if v < 0 {
        return Err(ScenarioError::Validation(format!(
            "{field} must not be negative, got {v}"
        )));
    }
    Ok(v as u64)
}

fn capacity(
    field: &str,
    raw: Option<RawCapacity>,
    default: Capacity,
) -> Result<Capacity, ScenarioError> {
    match raw {
        None => Ok(default),
        Some(RawCapacity::Count(n)) => Ok(Capacity::Bounded(positive(field, n)? as u32)),
        Some(RawCapacity::Keyword(k)) if k == "unbounded" => Ok(Capacity::Unbounded),
        Some(RawCapacity::Keyword(k)) => Err(ScenarioError::Validation(format!(
            "{field} must be a positive count or \"unbounded\", got {k:?}"
        ))),
    }
}

fn bandwidth(field: &str, raw: Option<i64>) -> Result<Bandwidth, ScenarioError> {
    match raw {
        None => Ok(Bandwidth::Unbounded),
        Some(v) => Ok(Bandwidth::BytesPerSec(positive(field, v)?)),
    }
}

fn edge_kind(field: &str, raw: Option<&str>) -> Result<NodeKind, ScenarioError> {
    match raw.unwrap_or("capability-added") {
        "traffic-routing" => Ok(NodeKind::TrafficRoutingEdge),
        "capability-added" => Ok(NodeKind::CapabilityAddedEdge),
        other => Err(ScenarioError::Validation(format!(
            "{field} must be \"traffic-routing\" or \"capability-added\", got {other:?}"
        ))),
    }
}

fn node_kind(field: &str, raw: &str) -> Result<NodeKind, ScenarioError> {
    match raw {
        "user-device" => Ok(NodeKind::UserDevice),
        "traffic-routing" => Ok(NodeKind::TrafficRoutingEdge),
        "capability-added" => Ok(NodeKind::CapabilityAddedEdge),
        "peer" => Ok(NodeKind::PeerNode),
        "cloud" => Ok(NodeKind::CloudServer),
        other => Err(ScenarioError::Validation(format!(
            "{field}: unknown node kind {other:?}"
        ))),
    }
}

fn simple_model(name: &str, policy: Option<&str>) -> Result<ExecutionModel, ScenarioError> {
    match name {
        "cloud-only" => Ok(ExecutionModel::CloudOnly),
        "offload-device-to-edge" => Ok(ExecutionModel::OffloadDeviceToEdge),
        "offload-cloud-to-edge" => Ok(ExecutionModel::OffloadCloudToEdge),
        "share" => {
            let policy = match policy.unwrap_or("round-robin") {
                "round-robin" => SharePolicy::RoundRobin,
                "capacity-weighted" => SharePolicy::CapacityWeighted,
                other => {
                    return Err(ScenarioError::Validation(format!(
                    "share policy must be \"round-robin\" or \"capacity-weighted\", got {other:?}"
                )))
                }
            };
            Ok(ExecutionModel::Share { policy })
        }
        other => Err(ScenarioError::Validation(format!(
            "unknown execution model {other:?}"
        ))),
    }
}

fn resolve_execution(raw: RawExecution) -> Result<ExecutionModel, ScenarioError> {
    let name = raw.model.as_deref().unwrap_or("offload-cloud-to-edge");
    let model = match name {
        "aggregate" => ExecutionModel::Aggregate {
            filter_ratio: raw.filter_ratio.unwrap_or(DEFAULT_FILTER_RATIO),
            batch_window: time_us(
                "execution.batch_window_ms",
                raw.batch_window_ms
                    .unwrap_or(DEFAULT_BATCH_WINDOW_MS)
                    .saturating_mul(1_000),
            )?,
        },
        "hybrid" => {
            let raw_rules = raw.rules.unwrap_or_default();
            let mut rules = Vec::new();
            for (i, rule) in raw_rules.into_iter().enumerate() {
                let field = format!("execution.rules[{i}]");
                let mut predicates = Vec::new();
                if let Some(bytes) = rule.payload_above {
                    predicates.push(RulePredicate::PayloadAbove(byte_count(&field, bytes)?));
                }
                if let Some(kind) = &rule.device_kind {
                    predicates.push(RulePredicate::DeviceKind(node_kind(&field, kind)?));
                }
                if let Some(always) = rule.always {
                    if !always {
                        return Err(ScenarioError::Validation(format!(
                            "{field}: `always` can only be true"
                        )));
                    }
                    predicates.push(RulePredicate::Always);
                }
                if predicates.len() != 1 {
                    return Err(ScenarioError::Validation(format!(
                        "{field}: set exactly one of payload_above, device_kind, always"
                    )));
                }
                if matches!(rule.model.as_str(), "aggregate" | "hybrid") {
                    return Err(ScenarioError::Validation(format!(
                        "{field}: rule model {:?} is not allowed inside hybrid rules",
                        rule.model
                    )));
                }
                rules.push(PlacementRule {
                    predicate: predicates.pop().expect("checked length"),
                    model: simple_model(&rule.model, raw.policy.as_deref())?,
                });
            }
            ExecutionModel::Hybrid { rules }
        }
        simple => simple_model(simple, raw.policy.as_deref())?,
    };
    model
        .validate()
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
    Ok(model)
}

fn default_edges(cloud_name: &str) -> Vec<RawEdge> {
    vec![RawEdge {
        name: "edge0".to_string(),
        level: None,
        parent: Some(cloud_name.to_string()),
        kind: None,
        uplink_latency_us: None,
        downlink_latency_us: None,
        bandwidth_bytes_per_s: None,
        service_time_us: None,
        capacity: None,
        max_queue: None,
    }]
}

fn resolve(raw: RawScenario, fallback_name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let name = raw.name.unwrap_or_else(|| fallback_name.to_string());
    let horizon = time_us(
        "horizon_s",
        raw.horizon_s
            .unwrap_or(DEFAULT_HORIZON_S)
            .saturating_mul(1_000_000),
    )?;
    let warmup = time_us(
        "warmup_s",
        raw.warmup_s.unwrap_or(0).saturating_mul(1_000_000),
    )?;
    if warmup >= horizon {
        return Err(ScenarioError::Validation(format!(
            "warmup ({warmup}) must end before the horizon ({horizon})"
        )));
    }

    let rw = raw.workload.unwrap_or_default();
    let players = positive("workload.players", rw.players.unwrap_or(DEFAULT_PLAYERS))? as u32;
    let update_rate_hz = rw.update_rate_hz.unwrap_or(DEFAULT_RATE_HZ);
    if !update_rate_hz.is_finite() || update_rate_hz <= 0.0 {
        return Err(ScenarioError::Validation(format!(
            "workload.update_rate_hz must be positive, got {update_rate_hz}"
        )));
    }
    let arrival = match rw.arrival.as_deref().unwrap_or("deterministic") {
        "deterministic" => ArrivalKind::Deterministic,
        "poisson" => ArrivalKind::Poisson,
        other => {
            return Err(ScenarioError::Validation(format!(
                "workload.arrival must be \"deterministic\" or \"poisson\", got {other:?}"
            )))
        }
    };
    let cloud_request_fraction = rw.cloud_request_fraction.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&cloud_request_fraction) {
        return Err(ScenarioError::Validation(format!(
            "workload.cloud_request_fraction must be in [0, 1], got {cloud_request_fraction}"
        )));
    }

    let rm = raw.messages.unwrap_or_default();
    let defaults = MessageSizes::default();
    let sizes = MessageSizes {
        request_bytes: rm
            .request_bytes
            .map(|v| byte_count("messages.request_bytes", v))
            .transpose()?
            .unwrap_or(defaults.request_bytes),
        response_bytes: rm
            .response_bytes
            .map(|v| byte_count("messages.response_bytes", v))
            .transpose()?
            .unwrap_or(defaults.response_bytes),
        header_bytes: rm
            .header_bytes
            .map(|v| byte_count("messages.header_bytes", v))
            .transpose()?
            .unwrap_or(defaults.header_bytes),
        per_entry_bytes: rm
            .per_entry_bytes
            .map(|v| byte_count("messages.per_entry_bytes", v))
            .transpose()?
            .unwrap_or(defaults.per_entry_bytes),
    };

    let sync_interval = time_us(
        "sync.interval_ms",
        positive(
            "sync.interval_ms",
            raw.sync
                .unwrap_or_default()
                .interval_ms
                .unwrap_or(DEFAULT_SYNC_INTERVAL_MS),
        )? as i64
            * 1_000,
    )?;

    let execution = resolve_execution(raw.execution.unwrap_or_default())?;

    let rt = raw.topology.unwrap_or_default();
    let cloud_raw = rt.cloud.unwrap_or_default();
    let cloud = CloudSpec {
        name: cloud_raw.name.unwrap_or_else(|| "cloud".to_string()),
        service_time: time_us(
            "topology.cloud.service_time_us",
            cloud_raw
                .service_time_us
                .unwrap_or(DEFAULT_CLOUD_SERVICE_US),
        )?,
        capacity: capacity(
            "topology.cloud.capacity",
            cloud_raw.capacity,
            Capacity::Unbounded,
        )?,
    };

    let raw_edges = rt.edges.unwrap_or_else(|| default_edges(&cloud.name));
    let mut edges = Vec::new();
    for re in raw_edges {
        let field = format!("topology.edges.{}", re.name);
        let uplink = time_us(
            &field,
            re.uplink_latency_us.unwrap_or(DEFAULT_EDGE_UPLINK_US),
        )?;
        let downlink = match re.downlink_latency_us {
            Some(v) => time_us(&field, v)?,
            None => uplink,
        };
        edges.push(EdgeSpec {
            level: re
                .level
                .map(|v| positive(&field, v))
                .transpose()?
                .unwrap_or(1) as u32,
            parent: re.parent.unwrap_or_else(|| cloud.name.clone()),
            kind: edge_kind(&field, re.kind.as_deref())?,
            uplink_latency: uplink,
            downlink_latency: downlink,
            bandwidth: bandwidth(&field, re.bandwidth_bytes_per_s)?,
            service_time: time_us(
                &field,
                re.service_time_us.unwrap_or(DEFAULT_EDGE_SERVICE_US),
            )?,
            capacity: capacity(
                &field,
                re.capacity,
                Capacity::Bounded(DEFAULT_EDGE_CAPACITY),
            )?,
            max_queue: re
                .max_queue
                .map(|v| byte_count(&field, v).map(|n| n as u32))
                .transpose()?,
            name: re.name,
        });
    }

    let mut peers = Vec::new();
    for rp in rt.peers.unwrap_or_default() {
        let field = format!("topology.peers.{}", rp.name);
        peers.push(PeerSpec {
            attach: rp.attach,
            link_latency: time_us(&field, rp.link_latency_us.unwrap_or(DEFAULT_PEER_LINK_US))?,
            service_time: time_us(
                &field,
                rp.service_time_us.unwrap_or(DEFAULT_EDGE_SERVICE_US),
            )?,
            capacity: capacity(
                &field,
                rp.capacity,
                Capacity::Bounded(DEFAULT_EDGE_CAPACITY),
            )?,
            weight: positive(&field, rp.weight.unwrap_or(1))?,
            max_queue: rp
                .max_queue
                .map(|v| byte_count(&field, v).map(|n| n as u32))
                .transpose()?,
            name: rp.name,
        });
    }

    let edge_levels = match rt.edge_levels {
        Some(v) => positive("topology.edge_levels", v)? as u32,
        None => edges.iter().map(|e| e.level).max().unwrap_or(1),
    };

    let rd = rt.devices.unwrap_or_default();
    let device_uplink = time_us(
        "topology.devices.link_latency_us",
        rd.link_latency_us.unwrap_or(DEFAULT_DEVICE_LINK_US),
    )?;
    let devices = DeviceSpec {
        uplink_latency: device_uplink,
        downlink_latency: match rd.downlink_latency_us {
            Some(v) => time_us("topology.devices.downlink_latency_us", v)?,
            None => device_uplink,
        },
        bandwidth: bandwidth(
            "topology.devices.bandwidth_bytes_per_s",
            rd.bandwidth_bytes_per_s,
        )?,
    };

    let user_counts = match raw.sweep.unwrap_or_default().user_counts {
        None => DEFAULT_USER_COUNTS.to_vec(),
        Some(counts) => {
            if counts.is_empty() {
                return Err(ScenarioError::Validation(
                    "sweep.user_counts must not be empty".to_string(),
                ));
            }
            counts
                .into_iter()
                .map(|v| positive("sweep.user_counts", v).map(|n| n as u32))
                .collect::<Result<Vec<_>, _>>()?
        }
    };

    let config = ScenarioConfig {
        name,
        seed: raw.seed,
        horizon,
        warmup,
        workload: WorkloadSpec {
            players,
            update_rate_hz,
            arrival,
            cloud_request_fraction,
        },
        sizes,
        sync_interval,
        execution,
        topology: TopologySpec {
            edge_levels,
            edges,
            peers,
            cloud,
            devices,
        },
        user_counts,
    };
    // Shake out structural problems (bad parents, level gaps) right away
    // with the smallest build rather than at run time.
    config.build_topology(1)?;
    Ok(config)
}
