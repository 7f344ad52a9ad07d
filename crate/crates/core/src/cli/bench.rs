//! Merge-time profiling across schedulers and loads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::config::RunManifest;
use super::CliError;
use crate::baseline::StatelessMerger;
use crate::engine::{run_frame, MergeEngine, SchedulerKind};
use crate::frame::FRAME_DURATION_US;
use crate::hypervisor::{init_sla_table, Hypervisor};
use crate::metrics::{TimingStats, DEFAULT_WARMUP_CALLS};
use crate::trafficgen::Generator;

pub const BENCH_FILE: &str = "bench.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchEntry {
    pub scheduler: SchedulerKind,
    pub load_fraction: f64,
    /// `None` when every call fell inside the warm-up.
    pub stats: Option<TimingStats>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub entries: Vec<BenchEntry>,
    /// Jobs that could not be timed, with the reason.
    pub skipped: Vec<String>,
}

/// Share of the frame duration a merge of `mean_us` takes.
pub fn frame_fraction(mean_us: f64) -> f64 {
    mean_us / FRAME_DURATION_US
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

pub fn time_ratio(heuristic_us: f64, stateless_us: f64) -> f64 {
    heuristic_us / stateless_us
}

/// Times every heuristic and stateless job of the manifest one after the
/// other, pooling post-warm-up samples per (scheduler, load).
pub fn run_bench(manifest: &RunManifest) -> BenchReport {
    let mut pooled: BTreeMap<(SchedulerKind, u64), Vec<Duration>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for job in &manifest.jobs {
        let s = &job.scenario;
        let key = (job.scheduler, s.load_fraction.to_bits());
        let samples = match job.scheduler {
            SchedulerKind::Exact => {
                skipped.push(format!(
                    "exact scheduler at load {} share {} not timed",
                    s.load_fraction, s.sla_share
                ));
                continue;
            }
            SchedulerKind::Heuristic => Generator::new(s.clone()).and_then(|g| {
                let flows: Vec<_> = g.flows().iter().map(|f| (f.flow_id, f.sla)).collect();
                let mut hv = Hypervisor::with_table(s.frame, init_sla_table(&flows)?);
                time_frames(&mut hv, &g)
            }),
            SchedulerKind::Stateless => Generator::new(s.clone())
                .and_then(|g| time_frames(&mut StatelessMerger::new(s.frame), &g)),
        };
        match samples {
            Ok(samples) => pooled.entry(key).or_default().extend(samples),
            Err(e) => skipped.push(format!(
                "{} at load {} share {}: {e}",
                job.scheduler, s.load_fraction, s.sla_share
            )),
        }
    }
    BenchReport {
        entries: pooled
            .into_iter()
            .map(|((scheduler, load), samples)| BenchEntry {
                scheduler,
                load_fraction: f64::from_bits(load),
                stats: TimingStats::from_samples(&samples),
            })
            .collect(),
        skipped,
    }
}

fn time_frames<E: MergeEngine>(
    engine: &mut E,
    generator: &Generator,
) -> crate::Result<Vec<Duration>> {
    let mut samples = Vec::new();
    for (i, frame) in generator.run().enumerate() {
        let (_, report) = run_frame(engine, &frame?.vbmaps)?;
        if i >= DEFAULT_WARMUP_CALLS {
            samples.push(report.merge_wall_time);
        }
    }
    Ok(samples)
}

#[derive(Serialize)]
struct BenchRow {
    scheduler: SchedulerKind,
    load_fraction: f64,
    samples: usize,
    mean_us: String,
    p50_us: String,
    p99_us: String,
    cv: String,
    frame_fraction: String,
    ratio_to_stateless: Option<String>,
}

impl BenchReport {
    fn mean_of(&self, scheduler: SchedulerKind, load: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.scheduler == scheduler && e.load_fraction == load)
            .and_then(|e| e.stats.as_ref())
            .map(|s| s.mean_us)
    }

    fn ratio(&self, entry: &BenchEntry, mean_us: f64) -> Option<f64> {
        (entry.scheduler != SchedulerKind::Stateless)
            .then(|| self.mean_of(SchedulerKind::Stateless, entry.load_fraction))
            .flatten()
            .map(|s| time_ratio(mean_us, s))
    }
}

/// Writes `bench.csv` into `out_dir` and returns a human-readable summary.
/// Entries without samples are left out.
pub fn emit_bench(report: &BenchReport, out_dir: &Path) -> Result<(PathBuf, String), CliError> {
    let path = out_dir.join(BENCH_FILE);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut summary = String::new();
    for entry in &report.entries {
        let Some(stats) = &entry.stats else { continue };
        let fraction = frame_fraction(stats.mean_us);
        let ratio = report.ratio(entry, stats.mean_us);
        w.serialize(BenchRow {
            scheduler: entry.scheduler,
            load_fraction: entry.load_fraction,
            samples: stats.samples,
            mean_us: format!("{:.3}", stats.mean_us),
            p50_us: format!("{:.3}", stats.p50_us),
            p99_us: format!("{:.3}", stats.p99_us),
            cv: format!("{:.3}", stats.cv),
            frame_fraction: format!("{fraction:.5}"),
            ratio_to_stateless: ratio.map(|r| format!("{r:.3}")),
        })
        .map_err(|e| CliError::Output {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
        let _ = write!(
            summary,
            "{:<9} load {:.1}: mean {:.2} µs ({} of frame duration), p50 {:.2} µs, p99 {:.2} µs, cv {:.2}",
            entry.scheduler.as_str(),
            entry.load_fraction,
            stats.mean_us,
            format_percent(fraction),
            stats.p50_us,
            stats.p99_us,
            stats.cv
        );
        if let Some(r) = ratio {
            let _ = write!(summary, "; {r:.2}x stateless");
        }
        summary.push('\n');
    }
    for note in &report.skipped {
        let _ = writeln!(summary, "skipped: {note}");
    }
    let bytes = w.into_inner().map_err(|e| CliError::Output {
        path: path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::create_dir_all(out_dir)
        .and_then(|_| fs::write(&path, bytes))
        .map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
    Ok((path, summary))
}
