//! Sweep execution and the canonical CSV output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExactSampling, Job, RunManifest};
use super::{svg, CliError};
use crate::baseline::StatelessMerger;
use crate::engine::{run_frame, MergeEngine, SchedulerKind};
use crate::frame::SlaType;
use crate::hypervisor::{init_sla_table, Hypervisor};
use crate::metrics::{accumulate, FrameReport, SweepResult, DEFAULT_WARMUP_CALLS};
use crate::oracle::ExactEngine;
use crate::trafficgen::Generator;

/// Column order of `results.csv`. Changing it breaks consumers.
pub const CSV_COLUMNS: [&str; 10] = [
    "scheduler",
    "load_fraction",
    "sla_share",
    "burst_class",
    "sla_type",
    "compliance",
    "flow_frames",
    "mean_merge_us",
    "p99_merge_us",
    "seed",
];

pub const CSV_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Frames an exact job actually solved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sampling {
    pub frames: Vec<u64>,
    pub of: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobOutcome {
    pub job: Job,
    pub result: Result<SweepResult, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    pub unproven_frames: usize,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub outcomes: Vec<JobOutcome>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub svg_paths: Vec<PathBuf>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    /// 0 when every job succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures() > 0)
    }
}

/// `k` distinct frame indices out of `0..frames`, sorted; all of them when `k >= frames`.
pub fn sample_frames(frames: u64, k: usize, seed: u64) -> Vec<u64> {
    if k as u64 >= frames {
        return (0..frames).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<u64> = rand::seq::index::sample(&mut rng, frames as usize, k)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    picked.sort_unstable();
    picked
}

fn run_frames<E: MergeEngine>(
    engine: &mut E,
    generator: &Generator,
    frames: impl IntoIterator<Item = u64>,
) -> crate::Result<Vec<FrameReport>> {
    let mut reports = Vec::new();
    for i in frames {
        let frame = generator.frame(i)?;
        let (_, report) = run_frame(engine, &frame.vbmaps)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Runs one job to completion. Errors are captured in the outcome.
pub fn run_job(job: &Job, exact: &ExactSampling) -> JobOutcome {
    let mut sampling = None;
    let mut unproven_frames = 0;
    let result = (|| {
        let scenario = &job.scenario;
        let generator = Generator::new(scenario.clone())?;
        let cfg = scenario.frame;
        let reports = match job.scheduler {
            SchedulerKind::Heuristic => {
                let flows: Vec<_> = generator
                    .flows()
                    .iter()
                    .map(|f| (f.flow_id, f.sla))
                    .collect();
                let mut hv = Hypervisor::with_table(cfg, init_sla_table(&flows)?);
                run_frames(&mut hv, &generator, 0..scenario.frames)?
            }
            SchedulerKind::Stateless => run_frames(
                &mut StatelessMerger::new(cfg),
                &generator,
                0..scenario.frames,
            )?,
            SchedulerKind::Exact => {
                let frames = sample_frames(scenario.frames, exact.sample_frames, scenario.seed);
                if (frames.len() as u64) < scenario.frames {
                    sampling = Some(Sampling {
                        frames: frames.clone(),
                        of: scenario.frames,
                    });
                }
                let mut engine = ExactEngine::new(cfg, exact.limits);
                let reports = run_frames(&mut engine, &generator, frames)?;
                unproven_frames = engine.unproven_frames();
                reports
            }
        };
        accumulate(
            &reports,
            scenario,
            job.scheduler.as_str(),
            DEFAULT_WARMUP_CALLS,
        )
    })()
    .map_err(|e| e.to_string());
    JobOutcome {
        job: job.clone(),
        result,
        sampling,
        unproven_frames,
    }
}

/// Runs all jobs, in parallel up to the manifest's degree, keeping job order.
pub fn execute(manifest: &RunManifest) -> Vec<JobOutcome> {
    let run = || {
        manifest
            .jobs
            .par_iter()
            .map(|job| run_job(job, &manifest.exact))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => manifest
            .jobs
            .iter()
            .map(|job| run_job(job, &manifest.exact))
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    scheduler: &'a str,
    load_fraction: f64,
    sla_share: f64,
    burst_class: &'a str,
    sla_type: &'a str,
    compliance: Option<String>,
    flow_frames: u64,
    mean_merge_us: Option<String>,
    p99_merge_us: Option<String>,
    seed: u64,
}

/// Writes one row per successful (job, SLA type). Failed jobs only appear in the summary.
pub fn write_csv<W: Write>(
    out: W,
    outcomes: &[JobOutcome],
    timing: bool,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for outcome in outcomes {
        let Ok(result) = &outcome.result else {
            continue;
        };
        let s = &result.scenario;
        let timing = result.timing.as_ref().filter(|_| timing);
        for sla in [SlaType::Type1, SlaType::Type2] {
            let tally = result.tally(sla).copied().unwrap_or_default();
            w.serialize(CsvRow {
                scheduler: &result.scheduler,
                load_fraction: s.load_fraction,
                sla_share: s.sla_share,
                burst_class: s.burst_class.as_str(),
                sla_type: sla.as_str(),
                compliance: tally.compliance().map(|c| format!("{c:.6}")),
                flow_frames: tally.flow_frames,
                mean_merge_us: timing.map(|t| format!("{:.3}", t.mean_us)),
                p99_merge_us: timing.map(|t| format!("{:.3}", t.p99_us)),
                seed: s.seed,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    jobs: usize,
    failed: usize,
    parallelism: usize,
    exact_sample_frames: usize,
    outcomes: Vec<SummaryEntry<'a>>,
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    scheduler: SchedulerKind,
    load_fraction: f64,
    sla_share: f64,
    burst_class: &'a str,
    seed: u64,
    frames: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled_frames: Option<&'a [u64]>,
    unproven_frames: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the manifest and writes `results.csv`, `run_summary.json` and one
/// chart per (load, scheduler) into the output directory.
pub fn run_sweep(manifest: &RunManifest) -> Result<SweepReport, CliError> {
    let out = &manifest.out_dir;
    fs::create_dir_all(out).map_err(|source| CliError::Output {
        path: out.clone(),
        source,
    })?;
    let outcomes = execute(manifest);

    let csv_path = out.join(CSV_FILE);
    let mut csv_bytes = Vec::new();
    write_csv(&mut csv_bytes, &outcomes, manifest.timing).map_err(|e| CliError::Output {
        path: csv_path.clone(),
        source: std::io::Error::other(e),
    })?;
    write_file(&csv_path, &csv_bytes)?;

    let summary = Summary {
        jobs: outcomes.len(),
        failed: outcomes.iter().filter(|o| o.result.is_err()).count(),
        parallelism: manifest.parallelism,
        exact_sample_frames: manifest.exact.sample_frames,
        outcomes: outcomes
            .iter()
            .map(|o| SummaryEntry {
                scheduler: o.job.scheduler,
                load_fraction: o.job.scenario.load_fraction,
                sla_share: o.job.scenario.sla_share,
                burst_class: o.job.scenario.burst_class.as_str(),
                seed: o.job.scenario.seed,
                frames: o.job.scenario.frames,
                error: o.result.as_ref().err().map(String::as_str),
                sampled_frames: o.sampling.as_ref().map(|s| s.frames.as_slice()),
                unproven_frames: o.unproven_frames,
            })
            .collect(),
    };
    let summary_path = out.join(SUMMARY_FILE);
    let json = serde_json::to_vec_pretty(&summary).expect("summary is plain data");
    write_file(&summary_path, &json)?;

    let mut svg_paths = Vec::new();
    for chart in svg::charts(&outcomes) {
        let path = out.join(chart.file_name());
        write_file(&path, chart.render().as_bytes())?;
        svg_paths.push(path);
    }

    Ok(SweepReport {
        outcomes,
        csv_path,
        summary_path,
        svg_paths,
    })
}
