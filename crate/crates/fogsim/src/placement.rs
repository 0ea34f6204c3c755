//! Where work runs and how contended nodes serve it. An execution model
//! maps each request to a serving node; aggregation compacts sensor batches;
//! sharing splits load across peer nodes; `NodeQueue` models a node with a
//! fixed number of service slots and an optional bounded waiting line.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::SimTime;
use crate::protocol::GpsUpdate;
use crate::topology::{Capacity, NodeId, NodeKind, Topology, TopologyError};

/// Strategy deciding which node serves a request.
#[derive(Clone, Debug, PartialEq)]
pub enum ExecutionModel {
    /// Every request travels to the chain root.
    CloudOnly,
    /// Work that originated on devices runs on the assigned edge.
    OffloadDeviceToEdge,
    /// Work that would run in the cloud runs on the assigned edge instead;
    /// edges sync state upstream periodically.
    OffloadCloudToEdge,
    /// Edges buffer readings and push one filtered batch per window.
    Aggregate {
        filter_ratio: f64,
        batch_window: SimTime,
    },
    /// The assigned edge spreads requests across its peer nodes.
    Share { policy: SharePolicy },
    /// First matching rule wins; the rule list must end in a catch-all.
    Hybrid { rules: Vec<PlacementRule> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SharePolicy {
    RoundRobin,
    CapacityWeighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementRule {
    pub predicate: RulePredicate,
    pub model: ExecutionModel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RulePredicate {
    /// Matches requests whose payload exceeds the threshold in bytes.
    PayloadAbove(u64),
    /// Matches requests issued by a device of this kind.
    DeviceKind(NodeKind),
    Always,
}

impl RulePredicate {
    fn matches(&self, update: &GpsUpdate, device: NodeId, topology: &Topology) -> bool {
        match self {
            RulePredicate::PayloadAbove(threshold) => update.request_bytes > *threshold,
            RulePredicate::DeviceKind(kind) => {
                topology.node(device).ok().map(|n| n.kind) == Some(*kind)
            }
            RulePredicate::Always => true,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("filter ratio {0} is outside [0, 1]")]
    InvalidFilterRatio(f64),
    #[error("aggregate batch window must be positive")]
    InvalidBatchWindow,
    #[error("hybrid model has no rules")]
    EmptyRules,
    #[error("hybrid rule list does not end in a catch-all rule")]
    MissingCatchAll,
    #[error("no rule matched the request")]
    NoMatchingRule,
    #[error("cannot aggregate an empty batch")]
    EmptyBatch,
    #[error("share requires at least one peer")]
    NoPeers,
    #[error("capacity-weighted share requires a positive total weight")]
    InvalidWeights,
    #[error("queue full: {waiting} waiting, limit {max_queue}")]
    QueueOverflow { waiting: u32, max_queue: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl ExecutionModel {
    /// Short stable name used in reports and traces.
    pub fn label(&self) -> &'static str {
        match self {
            ExecutionModel::CloudOnly => "cloud-only",
            ExecutionModel::OffloadDeviceToEdge => "offload-device-to-edge",
            ExecutionModel::OffloadCloudToEdge => "offload-cloud-to-edge",
            ExecutionModel::Aggregate { .. } => "aggregate",
            ExecutionModel::Share { .. } => "share",
            ExecutionModel::Hybrid { .. } => "hybrid",
        }
    }

    /// Whether edges under this model keep local views that must sync
    /// upstream. Aggregation pushes batches instead of view deltas.
    pub fn uses_sync(&self) -> bool {
        match self {
            ExecutionModel::CloudOnly | ExecutionModel::Aggregate { .. } => false,
            ExecutionModel::OffloadDeviceToEdge
            | ExecutionModel::OffloadCloudToEdge
            | ExecutionModel::Share { .. } => true,
            ExecutionModel::Hybrid { rules } => rules.iter().any(|r| r.model.uses_sync()),
        }
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        match self {
            ExecutionModel::Aggregate {
                filter_ratio,
                batch_window,
            } => {
                if !(0.0..=1.0).contains(filter_ratio) {
                    return Err(PlacementError::InvalidFilterRatio(*filter_ratio));
                }
                if *batch_window == SimTime::ZERO {
                    return Err(PlacementError::InvalidBatchWindow);
                }
                Ok(())
            }
            ExecutionModel::Hybrid { rules } => {
                if rules.is_empty() {
                    return Err(PlacementError::EmptyRules);
                }
                if rules.last().map(|r| &r.predicate) != Some(&RulePredicate::Always) {
                    return Err(PlacementError::MissingCatchAll);
                }
                for rule in rules {
                    rule.model.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Resolve hybrid rules down to the leaf model governing this request.
/// Non-hybrid models resolve to themselves.
pub fn effective_model<'a>(
    model: &'a ExecutionModel,
    update: &GpsUpdate,
    device: NodeId,
    topology: &Topology,
) -> Result<&'a ExecutionModel, PlacementError> {
    match model {
        ExecutionModel::Hybrid { rules } => {
            for rule in rules {
                if rule.predicate.matches(update, device, topology) {
                    return effective_model(&rule.model, update, device, topology);
                }
            }
            Err(PlacementError::NoMatchingRule)
        }
        leaf => Ok(leaf),
    }
}

/// Node that serves `update` issued by `device` under `model`.
pub fn place_request(
    model: &ExecutionModel,
    update: &GpsUpdate,
    device: NodeId,
    topology: &Topology,
) -> Result<NodeId, PlacementError> {
    match effective_model(model, update, device, topology)? {
        ExecutionModel::CloudOnly => Ok(topology.cloud_for(device)?),
        _ => Ok(topology.assigned_edge(device)?),
    }
}

/// One buffered sensor value awaiting aggregation.
#[derive(Clone, Copy, Debug)]
pub struct SensorReading {
    pub device: NodeId,
    pub payload_bytes: u64,
}

/// Result of compacting a batch of readings into one upstream message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AggregatedMessage {
    pub readings: u64,
    pub wire_bytes: u64,
}

/// Compact `readings` into one message: a fixed header plus the unfiltered
/// share of the total payload, rounded up.
pub fn aggregate_batch(
    readings: &[SensorReading],
    filter_ratio: f64,
    header_bytes: u64,
) -> Result<AggregatedMessage, PlacementError> {
    if readings.is_empty() {
        return Err(PlacementError::EmptyBatch);
    }
    if !(0.0..=1.0).contains(&filter_ratio) {
        return Err(PlacementError::InvalidFilterRatio(filter_ratio));
    }
    let payload: u64 = readings.iter().map(|r| r.payload_bytes).sum();
    // Snap to a 1e-9 grid before the ceiling: products that are exact in
    // decimal (e.g. 100 * 0.7) otherwise pick up binary noise and round up
    // one byte too far.
    let raw = payload as f64 * (1.0 - filter_ratio);
    let kept = ((raw * 1e9).round() / 1e9).ceil() as u64;
    Ok(AggregatedMessage {
        readings: readings.len() as u64,
        wire_bytes: header_bytes + kept,
    })
}

/// Per-peer task counts for a block of `tasks` identical jobs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareAssignment {
    policy: SharePolicy,
    counts: Vec<u64>,
}

impl ShareAssignment {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Peer serving task `index` (0-based). Round-robin interleaves;
    /// capacity-weighted hands out contiguous blocks.
    pub fn peer_of(&self, index: u64) -> usize {
        match self.policy {
            SharePolicy::RoundRobin => (index as usize) % self.counts.len(),
            SharePolicy::CapacityWeighted => {
                let mut remaining = index;
                for (peer, &count) in self.counts.iter().enumerate() {
                    if remaining < count {
                        return peer;
                    }
                    remaining -= count;
                }
                self.counts.len() - 1
            }
        }
    }
}

/// Split `tasks` across peers with the given weights. Round-robin ignores
/// the weight values; capacity-weighted apportions by largest remainder,
/// breaking remainder ties toward the earlier peer.
pub fn share_assign(
    tasks: u64,
    weights: &[u64],
    policy: SharePolicy,
) -> Result<ShareAssignment, PlacementError> {
    if weights.is_empty() {
        return Err(PlacementError::NoPeers);
    }
    let n = weights.len() as u64;
    let counts = match policy {
        SharePolicy::RoundRobin => (0..n)
            .map(|i| tasks / n + u64::from(i < tasks % n))
            .collect(),
        SharePolicy::CapacityWeighted => {
            let total: u64 = weights.iter().sum();
            if total == 0 {
                return Err(PlacementError::InvalidWeights);
            }
            let mut counts: Vec<u64> = weights.iter().map(|w| tasks * w / total).collect();
            let assigned: u64 = counts.iter().sum();
            // Remainders as integers: tasks*w mod total. Ties go to the
            // earlier peer, so sort by (remainder desc, index asc).
            let mut order: Vec<usize> = (0..weights.len()).collect();
            order.sort_by_key(|&i| (std::cmp::Reverse(tasks * weights[i] % total), i));
            for &i in order.iter().take((tasks - assigned) as usize) {
                counts[i] += 1;
            }
            counts
        }
    };
    Ok(ShareAssignment { policy, counts })
}

/// Smooth weighted rotation for online dispatch: each pick advances every
/// peer by its weight, serves the largest accumulator, then docks it by the
/// total. Spreads picks evenly instead of bursting per peer.
#[derive(Clone, Debug)]
pub struct WeightedRotation {
    weights: Vec<u64>,
    current: Vec<i64>,
    total: i64,
}

impl WeightedRotation {
    pub fn new(weights: Vec<u64>) -> Result<Self, PlacementError> {
        if weights.is_empty() {
            return Err(PlacementError::NoPeers);
        }
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(PlacementError::InvalidWeights);
        }
        Ok(WeightedRotation {
            current: vec![0; weights.len()],
            total: total as i64,
            weights,
        })
    }

    pub fn next_peer(&mut self) -> usize {
        for (cur, w) in self.current.iter_mut().zip(&self.weights) {
            *cur += *w as i64;
        }
        let mut best = 0;
        for i in 1..self.current.len() {
            if self.current[i] > self.current[best] {
                best = i;
            }
        }
        self.current[best] -= self.total;
        best
    }
}

/// Service slots of one node. Bounded capacity means that many jobs can be
/// in service at once; others wait FIFO, bounded by `max_queue` when set.
#[derive(Clone, Debug)]
pub struct NodeQueue {
    /// Completion time of the job occupying each slot; empty when unbounded.
    slots: Vec<SimTime>,
    max_queue: Option<u32>,
    /// Start times of accepted jobs that were still waiting when accepted.
    pending_starts: VecDeque<SimTime>,
}

impl NodeQueue {
    pub fn new(capacity: Capacity, max_queue: Option<u32>) -> Self {
        let slots = match capacity {
            Capacity::Bounded(c) => vec![SimTime::ZERO; c.max(1) as usize],
            Capacity::Unbounded => Vec::new(),
        };
        NodeQueue {
            slots,
            max_queue,
            pending_starts: VecDeque::new(),
        }
    }

    /// Admit a job arriving at `arrival` needing `service` time; returns its
    /// start and completion times. Arrivals must be fed in time order.
    pub fn queue_and_serve(
        &mut self,
        arrival: SimTime,
        service: SimTime,
    ) -> Result<(SimTime, SimTime), PlacementError> {
        if self.slots.is_empty() {
            return Ok((arrival, arrival + service));
        }
        let mut slot = 0;
        for i in 1..self.slots.len() {
            if self.slots[i] < self.slots[slot] {
                slot = i;
            }
        }
        let start = self.slots[slot].max(arrival);
        if start > arrival {
            // Jobs whose start time has passed are in service, not waiting.
            while self.pending_starts.front().is_some_and(|s| *s <= arrival) {
                self.pending_starts.pop_front();
            }
            if let Some(max_queue) = self.max_queue {
                let waiting = self.pending_starts.len() as u32;
                if waiting >= max_queue {
                    return Err(PlacementError::QueueOverflow { waiting, max_queue });
                }
            }
            self.pending_starts.push_back(start);
        }
        let completion = start + service;
        self.slots[slot] = completion;
        Ok((start, completion))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimRng;
    use crate::protocol::PlayerId;
    use crate::protocol::Position;
    use crate::topology::tests::{chain_topology, star_topology};

    fn update_of(bytes: u64) -> GpsUpdate {
        GpsUpdate {
            player: PlayerId::new(0),
            position: Position {
                lat_udeg: 0,
                lon_udeg: 0,
            },
            issued_at: SimTime::ZERO,
            request_bytes: bytes,
            response_bytes: 512,
        }
    }

    fn reading(bytes: u64) -> SensorReading {
        SensorReading {
            device: NodeId::new(99),
            payload_bytes: bytes,
        }
    }

    #[test]
    fn cloud_only_places_at_chain_root() {
        let topo = chain_topology();
        let node = place_request(
            &ExecutionModel::CloudOnly,
            &update_of(256),
            NodeId::new(2),
            &topo,
        )
        .unwrap();
        assert_eq!(node, NodeId::new(0));
    }

    #[test]
    fn offload_places_at_assigned_edge() {
        let topo = chain_topology();
        for model in [
            ExecutionModel::OffloadDeviceToEdge,
            ExecutionModel::OffloadCloudToEdge,
            ExecutionModel::Share {
                policy: SharePolicy::RoundRobin,
            },
        ] {
            let node = place_request(&model, &update_of(256), NodeId::new(2), &topo).unwrap();
            assert_eq!(node, NodeId::new(1));
        }
    }

    #[test]
    fn hybrid_routes_large_payloads_to_cloud() {
        let topo = chain_topology();
        let model = ExecutionModel::Hybrid {
            rules: vec![
                PlacementRule {
                    predicate: RulePredicate::PayloadAbove(2_000),
                    model: ExecutionModel::CloudOnly,
                },
                PlacementRule {
                    predicate: RulePredicate::Always,
                    model: ExecutionModel::OffloadCloudToEdge,
                },
            ],
        };
        model.validate().unwrap();
        let big = place_request(&model, &update_of(2_048), NodeId::new(2), &topo).unwrap();
        let small = place_request(&model, &update_of(256), NodeId::new(2), &topo).unwrap();
        assert_eq!(big, NodeId::new(0));
        assert_eq!(small, NodeId::new(1));
    }

    #[test]
    fn hybrid_device_kind_rule_matches() {
        let topo = chain_topology();
        let model = ExecutionModel::Hybrid {
            rules: vec![
                PlacementRule {
                    predicate: RulePredicate::DeviceKind(NodeKind::UserDevice),
                    model: ExecutionModel::OffloadCloudToEdge,
                },
                PlacementRule {
                    predicate: RulePredicate::Always,
                    model: ExecutionModel::CloudOnly,
                },
            ],
        };
        let node = place_request(&model, &update_of(256), NodeId::new(2), &topo).unwrap();
        assert_eq!(node, NodeId::new(1));
    }

    #[test]
    fn hybrid_without_catch_all_fails_validation() {
        let model = ExecutionModel::Hybrid {
            rules: vec![PlacementRule {
                predicate: RulePredicate::PayloadAbove(100),
                model: ExecutionModel::CloudOnly,
            }],
        };
        assert!(matches!(
            model.validate(),
            Err(PlacementError::MissingCatchAll)
        ));
        let empty = ExecutionModel::Hybrid { rules: Vec::new() };
        assert!(matches!(empty.validate(), Err(PlacementError::EmptyRules)));
    }

    #[test]
    fn aggregate_validation_bounds_the_ratio() {
        let bad = ExecutionModel::Aggregate {
            filter_ratio: 1.5,
            batch_window: SimTime::from_secs(1),
        };
        assert!(matches!(
            bad.validate(),
            Err(PlacementError::InvalidFilterRatio(_))
        ));
        let zero_window = ExecutionModel::Aggregate {
            filter_ratio: 0.5,
            batch_window: SimTime::ZERO,
        };
        assert!(matches!(
            zero_window.validate(),
            Err(PlacementError::InvalidBatchWindow)
        ));
    }

    #[test]
    fn aggregate_batch_frozen_sizes() {
        // 1000 payload bytes, header 32.
        let readings: Vec<SensorReading> = (0..10).map(|_| reading(100)).collect();
        let keep_all = aggregate_batch(&readings, 0.0, 32).unwrap();
        assert_eq!(
            keep_all,
            AggregatedMessage {
                readings: 10,
                wire_bytes: 1_032
            }
        );
        let drop_all = aggregate_batch(&readings, 1.0, 32).unwrap();
        assert_eq!(
            drop_all,
            AggregatedMessage {
                readings: 10,
                wire_bytes: 32
            }
        );
        // 2000 payload bytes at ratio 0.5 keeps exactly half.
        let halved = aggregate_batch(&[reading(1_500), reading(500)], 0.5, 32).unwrap();
        assert_eq!(halved.wire_bytes, 1_032);
        // Fractional keep rounds up: 1001 * 0.5 = 500.5 -> 501.
        let rounded = aggregate_batch(&[reading(1_001)], 0.5, 32).unwrap();
        assert_eq!(rounded.wire_bytes, 32 + 501);
    }

    #[test]
    fn aggregate_batch_rejects_empty_input() {
        assert!(matches!(
            aggregate_batch(&[], 0.5, 32),
            Err(PlacementError::EmptyBatch)
        ));
    }

    #[test]
    fn aggregate_rounding_matches_integer_oracle() {
        // Ratios with two decimals permit an exact integer-arithmetic check:
        // kept = ceil(payload * (100 - k) / 100).
        let mut rng = SimRng::derive(11, 0);
        for _ in 0..500 {
            let payload = rng.range_u64(1, 100_000);
            let k = rng.range_u64(0, 100);
            let expected = (payload * (100 - k)).div_ceil(100);
            let got = aggregate_batch(&[reading(payload)], k as f64 / 100.0, 0).unwrap();
            assert_eq!(got.wire_bytes, expected, "payload {payload} ratio {k}%");
        }
    }

    #[test]
    fn round_robin_counts_frozen() {
        let six = share_assign(6, &[1, 1, 1], SharePolicy::RoundRobin).unwrap();
        assert_eq!(six.counts(), &[2, 2, 2]);
        let seven = share_assign(7, &[1, 1, 1], SharePolicy::RoundRobin).unwrap();
        assert_eq!(seven.counts(), &[3, 2, 2]);
    }

    #[test]
    fn capacity_weighted_counts_frozen() {
        let split = share_assign(10, &[4, 1], SharePolicy::CapacityWeighted).unwrap();
        assert_eq!(split.counts(), &[8, 2]);
        // Remainder tie (1 extra, equal remainders) goes to the earlier peer.
        let tied = share_assign(3, &[1, 1], SharePolicy::CapacityWeighted).unwrap();
        assert_eq!(tied.counts(), &[2, 1]);
    }

    #[test]
    fn share_rejects_empty_or_zero_weights() {
        assert!(matches!(
            share_assign(5, &[], SharePolicy::RoundRobin),
            Err(PlacementError::NoPeers)
        ));
        assert!(matches!(
            share_assign(5, &[0, 0], SharePolicy::CapacityWeighted),
            Err(PlacementError::InvalidWeights)
        ));
    }

    #[test]
    fn round_robin_imbalance_is_at_most_one() {
        let mut rng = SimRng::derive(12, 0);
        for _ in 0..200 {
            let peers = rng.range_u64(1, 9) as usize;
            let tasks = rng.range_u64(0, 1_000);
            let assignment = share_assign(tasks, &vec![1; peers], SharePolicy::RoundRobin).unwrap();
            let max = *assignment.counts().iter().max().unwrap();
            let min = *assignment.counts().iter().min().unwrap();
            assert!(max - min <= 1);
            assert_eq!(assignment.counts().iter().sum::<u64>(), tasks);
        }
    }

    #[test]
    fn capacity_weighted_satisfies_the_quota_rule() {
        // Largest remainder: every count is the exact share floored or
        // ceiled, and the total is conserved.
        let mut rng = SimRng::derive(13, 0);
        for _ in 0..200 {
            let peers = rng.range_u64(1, 6) as usize;
            let weights: Vec<u64> = (0..peers).map(|_| rng.range_u64(1, 20)).collect();
            let tasks = rng.range_u64(0, 500);
            let total: u64 = weights.iter().sum();
            let assignment = share_assign(tasks, &weights, SharePolicy::CapacityWeighted).unwrap();
            assert_eq!(assignment.counts().iter().sum::<u64>(), tasks);
            for (count, w) in assignment.counts().iter().zip(&weights) {
                let floor = tasks * w / total;
                let ceil = (tasks * w).div_ceil(total);
                assert!(*count >= floor && *count <= ceil, "quota violated");
            }
        }
    }

    #[test]
    fn peer_of_maps_every_task_consistently() {
        for policy in [SharePolicy::RoundRobin, SharePolicy::CapacityWeighted] {
            let assignment = share_assign(11, &[3, 1, 2], policy).unwrap();
            let mut tally = vec![0u64; 3];
            for task in 0..11 {
                tally[assignment.peer_of(task)] += 1;
            }
            assert_eq!(tally, assignment.counts());
        }
    }

    #[test]
    fn weighted_rotation_frozen_sequence() {
        let mut rotation = WeightedRotation::new(vec![5, 1, 1]).unwrap();
        let picks: Vec<usize> = (0..7).map(|_| rotation.next_peer()).collect();
        assert_eq!(picks, vec![0, 0, 1, 0, 2, 0, 0]);
    }

    #[test]
    fn weighted_rotation_conserves_weight_share() {
        let mut rng = SimRng::derive(14, 0);
        for _ in 0..50 {
            let peers = rng.range_u64(1, 5) as usize;
            let weights: Vec<u64> = (0..peers).map(|_| rng.range_u64(1, 8)).collect();
            let total: u64 = weights.iter().sum();
            let rounds = rng.range_u64(1, 4);
            let mut rotation = WeightedRotation::new(weights.clone()).unwrap();
            let mut tally = vec![0u64; peers];
            for _ in 0..total * rounds {
                tally[rotation.next_peer()] += 1;
            }
            let expected: Vec<u64> = weights.iter().map(|w| w * rounds).collect();
            assert_eq!(tally, expected);
        }
    }

    #[test]
    fn single_server_serves_back_to_back_arrivals_in_order() {
        let mut queue = NodeQueue::new(Capacity::Bounded(1), None);
        let service = SimTime::from_millis(10);
        let (s1, c1) = queue.queue_and_serve(SimTime::ZERO, service).unwrap();
        let (s2, c2) = queue.queue_and_serve(SimTime::ZERO, service).unwrap();
        assert_eq!((s1, c1), (SimTime::ZERO, SimTime::from_millis(10)));
        assert_eq!(
            (s2, c2),
            (SimTime::from_millis(10), SimTime::from_millis(20))
        );
    }

    #[test]
    fn unbounded_capacity_never_waits() {
        let mut queue = NodeQueue::new(Capacity::Unbounded, Some(0));
        for i in 0..20u64 {
            let arrival = SimTime::from_micros(i);
            let (start, completion) = queue
                .queue_and_serve(arrival, SimTime::from_millis(5))
                .unwrap();
            assert_eq!(start, arrival);
            assert_eq!(completion, arrival + SimTime::from_millis(5));
        }
    }

    #[test]
    fn bounded_queue_rejects_when_full() {
        // One server, one waiting slot: third simultaneous arrival drops.
        let mut queue = NodeQueue::new(Capacity::Bounded(1), Some(1));
        let service = SimTime::from_millis(10);
        queue.queue_and_serve(SimTime::ZERO, service).unwrap();
        queue.queue_and_serve(SimTime::ZERO, service).unwrap();
        let err = queue.queue_and_serve(SimTime::ZERO, service).unwrap_err();
        assert!(matches!(
            err,
            PlacementError::QueueOverflow {
                waiting: 1,
                max_queue: 1
            }
        ));
        // Once the first job finishes the line has drained enough to admit.
        queue
            .queue_and_serve(SimTime::from_millis(10), service)
            .unwrap();
    }

    #[test]
    fn completions_match_the_recurrence_oracle() {
        // FIFO with c equal servers and fixed service time s obeys
        // completion_i = max(arrival_i, completion_{i-c}) + s.
        let mut rng = SimRng::derive(15, 0);
        for _ in 0..300 {
            let servers = rng.range_u64(1, 4) as usize;
            let service = SimTime::from_micros(rng.range_u64(1, 20_000));
            let n = rng.range_u64(1, 11) as usize;
            let mut arrivals: Vec<SimTime> = (0..n)
                .map(|_| SimTime::from_micros(rng.range_u64(0, 50_000)))
                .collect();
            arrivals.sort();

            let mut queue = NodeQueue::new(Capacity::Bounded(servers as u32), None);
            let mut completions = Vec::new();
            for &arrival in &arrivals {
                let (_, completion) = queue.queue_and_serve(arrival, service).unwrap();
                completions.push(completion);
            }
            for i in 0..n {
                let prior = if i >= servers {
                    completions[i - servers]
                } else {
                    SimTime::ZERO
                };
                assert_eq!(completions[i], arrivals[i].max(prior) + service);
            }
        }
    }

    #[test]
    fn share_placement_uses_the_edge_even_with_peers() {
        let topo = star_topology(4, 2);
        let model = ExecutionModel::Share {
            policy: SharePolicy::CapacityWeighted,
        };
        let device = topo
            .nodes()
            .find(|n| n.kind == NodeKind::UserDevice)
            .map(|n| n.id)
            .unwrap();
        let node = place_request(&model, &update_of(256), device, &topo).unwrap();
        assert_eq!(node, topo.assigned_edge(device).unwrap());
    }
}
