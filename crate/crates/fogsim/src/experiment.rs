//! Paired experiments: every user count runs twice from the same seed --
//! once forced to the cloud as a baseline, once under the scenario's
//! configured model -- and the two runs are compared. Entries run in
//! parallel; outputs are deterministic regardless of thread scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::write_trace_csv;
use crate::metrics::{compare, ComparisonReport, MetricsReport};
use crate::placement::ExecutionModel;
use crate::scenario::ScenarioConfig;
use crate::sim::{run_scenario, RunOutput, SimError};
use crate::topology::NodeId;

/// Both runs for one user count, with the comparison between them.
pub struct ExperimentEntry {
    pub users: u32,
    pub baseline: RunOutput,
    pub candidate: RunOutput,
    pub comparison: ComparisonReport,
}

pub struct ExperimentResult {
    pub scenario_name: String,
    pub model_label: String,
    pub entries: Vec<ExperimentEntry>,
}

/// Run the sweep. Each entry is an independent pair of runs, so entries
/// execute in parallel; result order follows `user_counts`.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    user_counts: &[u32],
    record_trace: bool,
) -> Result<ExperimentResult, SimError> {
    let entries = user_counts
        .par_iter()
        .map(|&users| {
            let baseline = run_scenario(
                cfg,
                users,
                &ExecutionModel::CloudOnly,
                "cloud-only",
                record_trace,
            )?;
            let candidate = run_scenario(
                cfg,
                users,
                &cfg.execution,
                cfg.execution.label(),
                record_trace,
            )?;
            let comparison = compare(&baseline.report, &candidate.report)?;
            Ok(ExperimentEntry {
                users,
                baseline,
                candidate,
                comparison,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(ExperimentResult {
        scenario_name: cfg.name.clone(),
        model_label: cfg.execution.label().to_string(),
        entries,
    })
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("experiment produced no entries to report")]
    EmptyResult,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), ReportError> {
    fs::write(path, body).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Node names recoverable from a report: every node appears as a link
/// endpoint because validated topologies leave nothing unconnected.
fn node_names(report: &MetricsReport) -> BTreeMap<NodeId, String> {
    let mut names = BTreeMap::new();
    for link in &report.links {
        names
            .entry(link.src)
            .or_insert_with(|| link.src_name.clone());
        names
            .entry(link.dst)
            .or_insert_with(|| link.dst_name.clone());
    }
    names
}

/// Write `summary.csv`, one `links_<users>.csv` per entry, and (when traces
/// were recorded) `trace_<users>_cloud.csv` / `trace_<users>_fog.csv`.
/// Returns the written paths, sorted.
pub fn write_reports(
    result: &ExperimentResult,
    out_dir: &Path,
    include_traces: bool,
) -> Result<Vec<PathBuf>, ReportError> {
    if result.entries.is_empty() {
        return Err(ReportError::EmptyResult);
    }
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let mut summary = Vec::new();
    writeln!(
        summary,
        "users,cloud_mean_response_us,fog_mean_response_us,rt_improvement_pct,\
         cloud_edge_cloud_bytes,fog_edge_cloud_bytes,traffic_reduction_pct"
    )
    .expect("vec write");
    for entry in &result.entries {
        let c = &entry.comparison;
        writeln!(
            summary,
            "{},{},{},{:.4},{},{},{:.4}",
            entry.users,
            c.baseline_mean_us,
            c.candidate_mean_us,
            c.rt_improvement_pct,
            c.baseline_edge_cloud_bytes,
            c.candidate_edge_cloud_bytes,
            c.traffic_reduction_pct
        )
        .expect("vec write");
    }
    let summary_path = out_dir.join("summary.csv");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    for entry in &result.entries {
        let mut links = Vec::new();
        writeln!(links, "{}", MetricsReport::CSV_HEADER).expect("vec write");
        entry
            .baseline
            .report
            .write_csv_rows(&mut links)
            .expect("vec write");
        entry
            .candidate
            .report
            .write_csv_rows(&mut links)
            .expect("vec write");
        let links_path = out_dir.join(format!("links_{}.csv", entry.users));
        write_file(&links_path, &links)?;
        written.push(links_path);

        if include_traces {
            let names = node_names(&entry.candidate.report);
            for (run, tag) in [(&entry.baseline, "cloud"), (&entry.candidate, "fog")] {
                let name_of =
                    |id: NodeId| names.get(&id).cloned().unwrap_or_else(|| id.to_string());
                let mut body = Vec::new();
                write_trace_csv(&run.trace, name_of, &mut body).expect("vec write");
                let path = out_dir.join(format!("trace_{}_{}.csv", entry.users, tag));
                write_file(&path, &body)?;
                written.push(path);
            }
        }
    }
    written.sort();
    Ok(written)
}
