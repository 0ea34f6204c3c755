//! Location-update protocol state. Each serving edge keeps a local view of
//! the players assigned to it; the cloud keeps a global view of everyone.
//! Edges push periodic sync deltas upstream: one compacted entry per player
//! touched since the previous push. The cloud merges deltas monotonically,
//! so reordered or duplicated deltas can never roll state backwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::engine::{SimRng, SimTime};
use crate::topology::NodeId;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PlayerId(u32);

impl PlayerId {
    pub const fn new(v: u32) -> Self {
        PlayerId(v)
    }

    pub const fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RequestId(u64);

impl RequestId {
    pub const fn new(v: u64) -> Self {
        RequestId(v)
    }

    pub const fn value(self) -> u64 {
        self.0
    }
}

/// Coordinates in integer microdegrees.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Position {
    pub lat_udeg: i64,
    pub lon_udeg: i64,
}

#[derive(Clone, Debug)]
pub struct GpsUpdate {
    pub player: PlayerId,
    pub position: Position,
    pub issued_at: SimTime,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

/// Wire sizes used for every byte count in the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MessageSizes {
    pub request_bytes: u64,
    pub response_bytes: u64,
    /// Fixed cost of a sync delta or aggregated batch.
    pub header_bytes: u64,
    /// Incremental cost per sync entry.
    pub per_entry_bytes: u64,
}

impl Default for MessageSizes {
    fn default() -> Self {
        MessageSizes {
            request_bytes: 256,
            response_bytes: 512,
            header_bytes: 32,
            per_entry_bytes: 64,
        }
    }
}

/// How request issue times are spaced for one player.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArrivalProcess {
    /// Fixed interval `round(1e6 / rate)` microseconds starting at `phase`.
    Deterministic { phase: SimTime },
    /// Exponential inter-arrival times at the given rate, starting at `phase`.
    Poisson { phase: SimTime },
}

const WALK_STEP_UDEG: i64 = 2_000;

/// Update times for one player over `[0, horizon)`, positions following a
/// seeded random walk. Rates are per second.
pub fn generate_updates(
    player: PlayerId,
    process: ArrivalProcess,
    rate_hz: f64,
    horizon: SimTime,
    sizes: &MessageSizes,
    rng: &mut SimRng,
) -> Vec<GpsUpdate> {
    if rate_hz <= 0.0 {
        return Vec::new();
    }
    let mut times = Vec::new();
    match process {
        ArrivalProcess::Deterministic { phase } => {
            let interval = ((1e6 / rate_hz).round() as u64).max(1);
            let mut t = phase.as_micros();
            while t < horizon.as_micros() {
                times.push(t);
                t += interval;
            }
        }
        ArrivalProcess::Poisson { phase } => {
            let mut t = phase.as_micros();
            loop {
                let u = rng.f64();
                let dt_us = (-(1.0 - u).ln() / rate_hz * 1e6).round() as u64;
                t += dt_us.max(1);
                if t >= horizon.as_micros() {
                    break;
                }
                times.push(t);
            }
        }
    }

    let mut position = Position {
        lat_udeg: player.value() as i64 * 1_000,
        lon_udeg: -(player.value() as i64) * 1_000,
    };
    times
        .into_iter()
        .map(|t| {
            position.lat_udeg += rng.range_i64(-WALK_STEP_UDEG, WALK_STEP_UDEG);
            position.lon_udeg += rng.range_i64(-WALK_STEP_UDEG, WALK_STEP_UDEG);
            GpsUpdate {
                player,
                position,
                issued_at: SimTime::from_micros(t),
                request_bytes: sizes.request_bytes,
                response_bytes: sizes.response_bytes,
            }
        })
        .collect()
}

/// Acknowledgement produced by serving an update.
#[derive(Clone, Copy, Debug)]
pub struct Response {
    pub player: PlayerId,
    pub response_bytes: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ViewEntry {
    pub position: Position,
    /// Serving time of the newest update folded into this entry.
    pub last_update: SimTime,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("player {player} is not assigned to edge {edge}")]
    ForeignPlayer { player: PlayerId, edge: NodeId },
    #[error("stale delta from edge {edge}: built at {built_at}, already synced up to {last_sync}")]
    StaleDelta {
        edge: NodeId,
        built_at: SimTime,
        last_sync: SimTime,
    },
}

/// Edge-resident state for the players assigned to that edge.
#[derive(Clone, Debug)]
pub struct LocalView {
    edge: NodeId,
    assigned: BTreeSet<PlayerId>,
    entries: BTreeMap<PlayerId, ViewEntry>,
    dirty: BTreeSet<PlayerId>,
}

impl LocalView {
    pub fn new(edge: NodeId, assigned: BTreeSet<PlayerId>) -> Self {
        LocalView {
            edge,
            assigned,
            entries: BTreeMap::new(),
            dirty: BTreeSet::new(),
        }
    }

    pub fn edge(&self) -> NodeId {
        self.edge
    }

    pub fn entries(&self) -> &BTreeMap<PlayerId, ViewEntry> {
        &self.entries
    }

    pub fn dirty(&self) -> &BTreeSet<PlayerId> {
        &self.dirty
    }

    /// Fold one served update into the view and mark the player dirty.
    pub fn handle_update(
        &mut self,
        update: &GpsUpdate,
        served_at: SimTime,
    ) -> Result<Response, ProtocolError> {
        if !self.assigned.contains(&update.player) {
            return Err(ProtocolError::ForeignPlayer {
                player: update.player,
                edge: self.edge,
            });
        }
        self.entries.insert(
            update.player,
            ViewEntry {
                position: update.position,
                last_update: served_at,
            },
        );
        self.dirty.insert(update.player);
        Ok(Response {
            player: update.player,
            response_bytes: update.response_bytes,
        })
    }

    /// Snapshot the dirty set into a delta and clear it. The delta carries
    /// exactly one entry per touched player, holding the latest value only.
    pub fn build_sync_delta(&mut self, built_at: SimTime, sizes: &MessageSizes) -> SyncDelta {
        let entries: Vec<SyncEntry> = self
            .dirty
            .iter()
            .map(|p| {
                let e = &self.entries[p];
                SyncEntry {
                    player: *p,
                    position: e.position,
                    last_update: e.last_update,
                }
            })
            .collect();
        self.dirty.clear();
        let wire_bytes = sizes.header_bytes + sizes.per_entry_bytes * entries.len() as u64;
        SyncDelta {
            edge: self.edge,
            built_at,
            entries,
            wire_bytes,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SyncEntry {
    pub player: PlayerId,
    pub position: Position,
    pub last_update: SimTime,
}

/// One compacted edge-to-cloud state push.
#[derive(Clone, Debug)]
pub struct SyncDelta {
    pub edge: NodeId,
    pub built_at: SimTime,
    /// Sorted by player id; one entry per dirty player.
    pub entries: Vec<SyncEntry>,
    pub wire_bytes: u64,
}

/// Cloud-resident state covering every player.
#[derive(Clone, Debug, Default)]
pub struct GlobalView {
    entries: BTreeMap<PlayerId, ViewEntry>,
    last_sync: BTreeMap<NodeId, SimTime>,
}

impl GlobalView {
    pub fn new() -> Self {
        GlobalView::default()
    }

    pub fn entries(&self) -> &BTreeMap<PlayerId, ViewEntry> {
        &self.entries
    }

    pub fn last_sync(&self) -> &BTreeMap<NodeId, SimTime> {
        &self.last_sync
    }

    /// Serve an update directly at the cloud; overwrites unconditionally
    /// because serving order on one node is already time order.
    pub fn handle_update(&mut self, update: &GpsUpdate, served_at: SimTime) -> Response {
        self.entries.insert(
            update.player,
            ViewEntry {
                position: update.position,
                last_update: served_at,
            },
        );
        Response {
            player: update.player,
            response_bytes: update.response_bytes,
        }
    }

    /// Merge a delta. Entries overwrite only strictly newer state, so a
    /// delta applied twice or raced against a direct write is harmless.
    /// Deltas older than one already applied from the same edge are
    /// rejected as stale.
    pub fn apply_sync_delta(
        &mut self,
        delta: &SyncDelta,
        applied_at: SimTime,
    ) -> Result<(), ProtocolError> {
        debug_assert!(applied_at >= delta.built_at);
        if let Some(&prev) = self.last_sync.get(&delta.edge) {
            if delta.built_at < prev {
                return Err(ProtocolError::StaleDelta {
                    edge: delta.edge,
                    built_at: delta.built_at,
                    last_sync: prev,
                });
            }
        }
        for entry in &delta.entries {
            let newer = self
                .entries
                .get(&entry.player)
                .is_none_or(|e| entry.last_update > e.last_update);
            if newer {
                self.entries.insert(
                    entry.player,
                    ViewEntry {
                        position: entry.position,
                        last_update: entry.last_update,
                    },
                );
            }
        }
        self.last_sync.insert(delta.edge, delta.built_at);
        Ok(())
    }

    /// Debug dump: `player,lat,lon,as_of_us`, sorted by player.
    pub fn write_state_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "player,lat,lon,as_of_us")?;
        for (player, entry) in &self.entries {
            writeln!(
                w,
                "{},{},{},{}",
                player.value(),
                entry.position.lat_udeg,
                entry.position.lon_udeg,
                entry.last_update.as_micros()
            )?;
        }
        Ok(())
    }
}

/// Routed envelope. `bytes` is the wire size charged to every link the
/// message crosses.
#[derive(Clone, Debug)]
pub struct Message {
    pub origin: NodeId,
    pub dest: NodeId,
    pub bytes: u64,
    pub payload: MessagePayload,
}

#[derive(Clone, Debug)]
pub enum MessagePayload {
    Request(RequestEnvelope),
    Response {
        request: RequestId,
        player: PlayerId,
        issued_at: SimTime,
    },
    SyncPush(SyncDelta),
    AggregatePush {
        edge: NodeId,
        readings: u64,
    },
}

/// A request in flight: everything the serving node needs to respond.
#[derive(Clone, Debug)]
pub struct RequestEnvelope {
    pub request: RequestId,
    pub player: PlayerId,
    pub device: NodeId,
    pub update: GpsUpdate,
}
