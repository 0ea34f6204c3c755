//! Measurement bookkeeping for one run and the math comparing two runs.
//! Responses are keyed by request id to catch double counting; traffic is
//! accumulated per registered link so unknown endpoints fail loudly.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::engine::SimTime;
use crate::protocol::RequestId;
use crate::topology::{NodeId, Topology};

/// Half-open measurement window `[start, end)` applied to issue times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: SimTime,
    pub end: SimTime,
}

impl Window {
    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("request {0:?} was already recorded")]
    DuplicateRequestId(RequestId),
    #[error("no responses fall inside the measurement window")]
    EmptyWindow,
    #[error("traffic on unregistered link {src} -> {dst}")]
    UnknownLink { src: NodeId, dst: NodeId },
    #[error("reports cover different scenarios (user count or window differ)")]
    MismatchedScenarios,
    #[error("comparison baseline is zero")]
    ZeroDenominator,
}

#[derive(Clone, Debug)]
struct ResponseRecord {
    issued_at: SimTime,
    completed_at: SimTime,
}

#[derive(Clone, Debug)]
struct RegisteredLink {
    src_name: String,
    dst_name: String,
    /// True when either endpoint is a cloud server; these links carry the
    /// upstream traffic the offload models try to reduce.
    edge_cloud: bool,
}

/// Accumulates one run's measurements.
#[derive(Clone, Debug)]
pub struct MetricsStore {
    scenario: String,
    user_count: u32,
    window: Window,
    records: Vec<ResponseRecord>,
    seen: BTreeSet<RequestId>,
    dropped: Vec<SimTime>,
    stale_deltas: u64,
    links: BTreeMap<(NodeId, NodeId), RegisteredLink>,
    traffic: BTreeMap<(NodeId, NodeId), u64>,
}

impl MetricsStore {
    /// Registers every link of `topology`; traffic on anything else errors.
    pub fn new(scenario: &str, user_count: u32, window: Window, topology: &Topology) -> Self {
        let links = topology
            .links()
            .map(|l| {
                let key = (l.src, l.dst);
                let registered = RegisteredLink {
                    src_name: topology.name_of(l.src),
                    dst_name: topology.name_of(l.dst),
                    edge_cloud: topology.is_edge_cloud_link(l.src, l.dst),
                };
                (key, registered)
            })
            .collect();
        MetricsStore {
            scenario: scenario.to_string(),
            user_count,
            window,
            records: Vec::new(),
            seen: BTreeSet::new(),
            dropped: Vec::new(),
            stale_deltas: 0,
            links,
            traffic: BTreeMap::new(),
        }
    }

    pub fn record_response(
        &mut self,
        request: RequestId,
        issued_at: SimTime,
        completed_at: SimTime,
    ) -> Result<(), MetricsError> {
        debug_assert!(completed_at >= issued_at);
        if !self.seen.insert(request) {
            return Err(MetricsError::DuplicateRequestId(request));
        }
        self.records.push(ResponseRecord {
            issued_at,
            completed_at,
        });
        Ok(())
    }

    pub fn record_drop(
        &mut self,
        request: RequestId,
        issued_at: SimTime,
    ) -> Result<(), MetricsError> {
        if !self.seen.insert(request) {
            return Err(MetricsError::DuplicateRequestId(request));
        }
        self.dropped.push(issued_at);
        Ok(())
    }

    pub fn record_stale_delta(&mut self) {
        self.stale_deltas += 1;
    }

    pub fn add_traffic(
        &mut self,
        src: NodeId,
        dst: NodeId,
        bytes: u64,
    ) -> Result<(), MetricsError> {
        if !self.links.contains_key(&(src, dst)) {
            return Err(MetricsError::UnknownLink { src, dst });
        }
        *self.traffic.entry((src, dst)).or_insert(0) += bytes;
        Ok(())
    }

    /// Mean response time over in-window responses, rounded half up.
    pub fn mean_response_time(&self) -> Result<SimTime, MetricsError> {
        let mut sum: u128 = 0;
        let mut n: u128 = 0;
        for r in &self.records {
            if self.window.contains(r.issued_at) {
                sum += (r.completed_at - r.issued_at).as_micros() as u128;
                n += 1;
            }
        }
        if n == 0 {
            return Err(MetricsError::EmptyWindow);
        }
        Ok(SimTime::from_micros(((sum + n / 2) / n) as u64))
    }

    pub fn report(&self) -> MetricsReport {
        let mean_response_us = self.mean_response_time().ok().map(|t| t.as_micros());
        let response_count = self
            .records
            .iter()
            .filter(|r| self.window.contains(r.issued_at))
            .count() as u64;
        let dropped_count = self
            .dropped
            .iter()
            .filter(|t| self.window.contains(**t))
            .count() as u64;
        let links = self
            .links
            .iter()
            .map(|((src, dst), reg)| LinkTrafficRow {
                src: *src,
                dst: *dst,
                src_name: reg.src_name.clone(),
                dst_name: reg.dst_name.clone(),
                bytes: self.traffic.get(&(*src, *dst)).copied().unwrap_or(0),
                edge_cloud: reg.edge_cloud,
            })
            .collect();
        MetricsReport {
            scenario: self.scenario.clone(),
            user_count: self.user_count,
            window: self.window,
            mean_response_us,
            response_count,
            dropped_count,
            stale_delta_count: self.stale_deltas,
            links,
        }
    }
}

/// Bytes carried by one link over the run, both endpoints named.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkTrafficRow {
    pub src: NodeId,
    pub dst: NodeId,
    pub src_name: String,
    pub dst_name: String,
    pub bytes: u64,
    pub edge_cloud: bool,
}

/// Immutable summary of one run.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub scenario: String,
    pub user_count: u32,
    pub window: Window,
    /// None when no response was issued inside the window.
    pub mean_response_us: Option<u64>,
    pub response_count: u64,
    pub dropped_count: u64,
    pub stale_delta_count: u64,
    /// Every registered link, in (src, dst) order, zero-traffic included.
    pub links: Vec<LinkTrafficRow>,
}

impl MetricsReport {
    /// Total bytes crossing edge-cloud links in either direction.
    pub fn edge_cloud_bytes(&self) -> u64 {
        self.links
            .iter()
            .filter(|l| l.edge_cloud)
            .map(|l| l.bytes)
            .sum()
    }

    /// One summary row, then one row per link. Link rows leave the response
    /// columns empty; the summary row leaves the link columns empty.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        self.write_csv_rows(w)
    }

    pub const CSV_HEADER: &'static str =
        "scenario,users,mean_response_us,responses,dropped,link_src,link_dst,bytes";

    /// The rows of `write_csv` without the header, so several runs can
    /// stack in one file.
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mean = self
            .mean_response_us
            .map(|m| m.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},,,",
            self.scenario, self.user_count, mean, self.response_count, self.dropped_count
        )?;
        for link in &self.links {
            writeln!(
                w,
                "{},{},,,,{},{},{}",
                self.scenario, self.user_count, link.src_name, link.dst_name, link.bytes
            )?;
        }
        Ok(())
    }
}

/// Baseline-versus-candidate comparison of two runs of the same scenario.
#[derive(Clone, Copy, Debug)]
pub struct ComparisonReport {
    pub user_count: u32,
    pub baseline_mean_us: u64,
    pub candidate_mean_us: u64,
    /// Positive when the candidate responds faster than the baseline.
    pub rt_improvement_pct: f64,
    pub baseline_edge_cloud_bytes: u64,
    pub candidate_edge_cloud_bytes: u64,
    /// Positive when the candidate moves fewer bytes over edge-cloud links.
    pub traffic_reduction_pct: f64,
}

/// Compare a candidate run against a baseline run of the same scenario
/// shape (same user count, same window).
pub fn compare(
    baseline: &MetricsReport,
    candidate: &MetricsReport,
) -> Result<ComparisonReport, MetricsError> {
    if baseline.user_count != candidate.user_count || baseline.window != candidate.window {
        return Err(MetricsError::MismatchedScenarios);
    }
    let baseline_mean = baseline.mean_response_us.ok_or(MetricsError::EmptyWindow)?;
    let candidate_mean = candidate
        .mean_response_us
        .ok_or(MetricsError::EmptyWindow)?;
    if baseline_mean == 0 {
        return Err(MetricsError::ZeroDenominator);
    }
    let rt_improvement_pct =
        100.0 * (baseline_mean as f64 - candidate_mean as f64) / baseline_mean as f64;

    let baseline_bytes = baseline.edge_cloud_bytes();
    let candidate_bytes = candidate.edge_cloud_bytes();
    if baseline_bytes == 0 {
        return Err(MetricsError::ZeroDenominator);
    }
    let traffic_reduction_pct =
        100.0 * (baseline_bytes as f64 - candidate_bytes as f64) / baseline_bytes as f64;

    Ok(ComparisonReport {
        user_count: baseline.user_count,
        baseline_mean_us: baseline_mean,
        candidate_mean_us: candidate_mean,
        rt_improvement_pct,
        baseline_edge_cloud_bytes: baseline_bytes,
        candidate_edge_cloud_bytes: candidate_bytes,
        traffic_reduction_pct,
    })
}
