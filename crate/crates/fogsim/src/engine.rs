//! Discrete-event core: simulated clock, event queue, seeded randomness.
//!
//! Events are processed in `(time, seq)` order where `seq` is a global
//! insertion counter, so same-time events resolve FIFO and every run with
//! the same seed produces the same trace. Time is integer microseconds;
//! there is no floating point anywhere on the clock path.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::protocol::{GpsUpdate, Message, PlayerId, RequestEnvelope, RequestId};
use crate::topology::NodeId;

/// Simulated time in microseconds since scenario start.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Seeded generator. ChaCha12 keyed from a 64-bit seed, with independent
/// substreams derived via splitmix64 so arrival, position and routing draws
/// never interleave. Identical seeds give identical draw sequences.
#[derive(Clone, Debug)]
pub struct SimRng {
    seed: u64,
    rng: ChaCha12Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Independent substream `stream` of the generator seeded with `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        SimRng::new(splitmix64(seed ^ splitmix64(stream)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn f64(&mut self) -> f64 {
        // 53 random mantissa bits, the usual open-interval construction.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `[lo, hi]`. Small ranges only; modulo bias is
    /// negligible against 2^64 for every use in this crate.
    pub fn range_i64(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.rng.next_u64() % span) as i64
    }

    pub fn range_u64(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.rng.next_u64() % (hi - lo + 1)
    }
}

/// What happened at an instant. Payloads carry everything a handler needs,
/// so the trace alone is enough to replay view state in tests.
#[derive(Clone, Debug)]
pub enum EventKind {
    RequestIssue {
        request: RequestId,
        player: PlayerId,
        device: NodeId,
        update: GpsUpdate,
    },
    MessageArrival {
        /// Hop origin, i.e. the node that forwarded or sent the message.
        from: NodeId,
        /// Hop destination where this delivery runs.
        node: NodeId,
        message: Message,
    },
    ServiceComplete {
        node: NodeId,
        job: RequestEnvelope,
    },
    SyncTimer {
        edge: NodeId,
    },
    MeasurementEnd,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::RequestIssue { .. } => "request_issue",
            EventKind::MessageArrival { .. } => "message_arrival",
            EventKind::ServiceComplete { .. } => "service_complete",
            EventKind::SyncTimer { .. } => "sync_timer",
            EventKind::MeasurementEnd => "measurement_end",
        }
    }

    pub fn node(&self) -> Option<NodeId> {
        match self {
            EventKind::RequestIssue { device, .. } => Some(*device),
            EventKind::MessageArrival { node, .. } => Some(*node),
            EventKind::ServiceComplete { node, .. } => Some(*node),
            EventKind::SyncTimer { edge } => Some(*edge),
            EventKind::MeasurementEnd => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

pub type EventTrace = Vec<Event>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot schedule at {scheduled} before current clock {now}")]
    TimeTravel { scheduled: SimTime, now: SimTime },
    #[error("event handler failed at {at}: {reason}")]
    HandlerFault {
        at: SimTime,
        reason: String,
        /// Events fully processed before the fault.
        partial: EventTrace,
    },
}

/// Error surfaced by an [`EventHandler`]; aborts the run.
#[derive(Debug)]
pub struct HandlerFault(pub String);

impl fmt::Display for HandlerFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<E: std::error::Error> From<E> for HandlerFault {
    fn from(e: E) -> Self {
        HandlerFault(e.to_string())
    }
}

pub trait EventHandler {
    fn handle_event(&mut self, engine: &mut Engine, event: &Event) -> Result<(), HandlerFault>;
}

#[derive(Clone, Debug)]
struct Queued {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Event queue plus clock. One engine per simulated run.
pub struct Engine {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    trace: EventTrace,
    record_trace: bool,
    rng: SimRng,
}

impl Engine {
    pub fn new(seed: u64) -> Self {
        Engine {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: Vec::new(),
            record_trace: true,
            rng: SimRng::derive(seed, 0x0e16),
        }
    }

    /// Trace recording is on by default; large sweeps turn it off to keep
    /// memory flat. `run_until` then returns an empty trace.
    pub fn record_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Queue `kind` to run at `time`. `time` may equal the current clock;
    /// scheduling into the past is refused.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<(), EngineError> {
        if time < self.clock {
            return Err(EngineError::TimeTravel {
                scheduled: time,
                now: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { time, seq, kind }));
        Ok(())
    }

    /// Process every queued event with `time <= t_end` in `(time, seq)`
    /// order, then advance the clock to `t_end` and return the trace of this
    /// run. A handler error aborts mid-run: the clock stays at the faulting
    /// event and the error carries the partial trace.
    pub fn run_until<H: EventHandler>(
        &mut self,
        t_end: SimTime,
        handler: &mut H,
    ) -> Result<EventTrace, EngineError> {
        if t_end < self.clock {
            return Err(EngineError::TimeTravel {
                scheduled: t_end,
                now: self.clock,
            });
        }
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.time > t_end {
                break;
            }
            let Reverse(q) = self.queue.pop().expect("peeked entry exists");
            self.clock = q.time;
            let event = Event {
                time: q.time,
                seq: q.seq,
                kind: q.kind,
            };
            if let Err(fault) = handler.handle_event(self, &event) {
                return Err(EngineError::HandlerFault {
                    at: event.time,
                    reason: fault.0,
                    partial: std::mem::take(&mut self.trace),
                });
            }
            if self.record_trace {
                self.trace.push(event);
            }
        }
        self.clock = t_end;
        Ok(std::mem::take(&mut self.trace))
    }
}

/// Write a trace as CSV: `time_us,seq,kind,node,detail`.
pub fn write_trace_csv<W: Write, F: Fn(NodeId) -> String>(
    trace: &[Event],
    name_of: F,
    w: &mut W,
) -> io::Result<()> {
    writeln!(w, "time_us,seq,kind,node,detail")?;
    for ev in trace {
        let node = ev.kind.node().map(&name_of).unwrap_or_default();
        let detail = event_detail(&ev.kind, &name_of);
        writeln!(
            w,
            "{},{},{},{},{}",
            ev.time.as_micros(),
            ev.seq,
            ev.kind.label(),
            node,
            detail
        )?;
    }
    Ok(())
}

fn event_detail<F: Fn(NodeId) -> String>(kind: &EventKind, name_of: &F) -> String {
    use crate::protocol::MessagePayload;
    match kind {
        EventKind::RequestIssue {
            request, player, ..
        } => format!("req={} player={}", request.value(), player.value()),
        EventKind::MessageArrival { from, message, .. } => {
            let what = match &message.payload {
                MessagePayload::Request(env) => {
                    format!(
                        "request req={} player={}",
                        env.request.value(),
                        env.player.value()
                    )
                }
                MessagePayload::Response { request, .. } => {
                    format!("response req={}", request.value())
                }
                MessagePayload::SyncPush(delta) => format!(
                    "sync built={} entries={}",
                    delta.built_at.as_micros(),
                    delta.entries.len()
                ),
                MessagePayload::AggregatePush { readings, .. } => {
                    format!("aggregate readings={readings}")
                }
            };
            format!("from={} {} bytes={}", name_of(*from), what, message.bytes)
        }
        EventKind::ServiceComplete { job, .. } => {
            format!("req={} player={}", job.request.value(), job.player.value())
        }
        EventKind::SyncTimer { .. } => String::new(),
        EventKind::MeasurementEnd => String::new(),
    }
}
