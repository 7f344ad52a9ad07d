//! Breach accounting, compliance aggregation and merge-time profiling.
//!
//! Compliance is counted per flow-frame: one flow observed in one frame. A
//! flow-frame is compliant when the flow's delayed fraction in that frame
//! stays within its allowance.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{FlowId, Grant, PhysicalBMap, SlaClass, SlaType, VnoId};
use crate::trafficgen::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowFrameStats {
    pub flow_id: FlowId,
    pub vno_id: VnoId,
    pub sla: SlaType,
    pub total: u32,
    pub delayed: u32,
    pub flow_breach: bool,
}

/// Per-flow totals of one frame, ordered by flow id.
pub fn frame_flow_stats(grants: &[Grant]) -> Vec<FlowFrameStats> {
    let mut by_flow: BTreeMap<FlowId, (FlowFrameStats, SlaClass)> = BTreeMap::new();
    for g in grants {
        let (entry, _) = by_flow.entry(g.flow_id).or_insert((
            FlowFrameStats {
                flow_id: g.flow_id,
                vno_id: g.vno_id,
                sla: g.sla.kind,
                total: 0,
                delayed: 0,
                flow_breach: false,
            },
            g.sla,
        ));
        entry.total += 1;
        if g.delayed {
            entry.delayed += 1;
        }
    }
    by_flow
        .into_values()
        .map(|(mut s, sla)| {
            s.flow_breach = sla.is_flow_breach(s.delayed, s.total);
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame_index: u64,
    pub flows: Vec<FlowFrameStats>,
    pub scheduled_words: u64,
    pub dropped_count: usize,
    pub merge_wall_time: Duration,
}

impl FrameReport {
    pub fn new(bmap: &PhysicalBMap, flows: Vec<FlowFrameStats>, merge_wall_time: Duration) -> Self {
        Self {
            frame_index: bmap.frame_index,
            flows,
            scheduled_words: bmap.scheduled_words(),
            dropped_count: bmap.dropped().count(),
            merge_wall_time,
        }
    }

    pub fn flow_breaches(&self) -> usize {
        self.flows.iter().filter(|f| f.flow_breach).count()
    }
}

/// Callbacks around the timed region of [`time_merge_with_hooks`].
pub trait TimingHooks {
    fn on_start(&mut self) {}
    fn on_stop(&mut self, _elapsed: Duration) {}
}

impl TimingHooks for () {}

/// Runs `f` under a monotonic clock. The returned duration is never zero.
pub fn time_merge<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    time_merge_with_hooks(f, &mut ())
}

pub fn time_merge_with_hooks<R, H: TimingHooks + ?Sized>(
    f: impl FnOnce() -> R,
    hooks: &mut H,
) -> (R, Duration) {
    hooks.on_start();
    let t0 = Instant::now();
    let out = f();
    let elapsed = t0.elapsed().max(Duration::from_nanos(1));
    hooks.on_stop(elapsed);
    (out, elapsed)
}

/// Collects merge durations, discarding the first `warmup` calls.
#[derive(Debug, Clone)]
pub struct MergeTimer {
    warmup: usize,
    seen: usize,
    samples: Vec<Duration>,
}

pub const DEFAULT_WARMUP_CALLS: usize = 100;

impl Default for MergeTimer {
    fn default() -> Self {
        Self::new(DEFAULT_WARMUP_CALLS)
    }
}

impl MergeTimer {
    pub fn new(warmup: usize) -> Self {
        Self {
            warmup,
            seen: 0,
            samples: Vec::new(),
        }
    }

    pub fn record(&mut self, d: Duration) {
        self.seen += 1;
        if self.seen > self.warmup {
            self.samples.push(d);
        }
    }

    pub fn samples(&self) -> &[Duration] {
        &self.samples
    }

    pub fn stats(&self) -> Option<TimingStats> {
        TimingStats::from_samples(&self.samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub samples: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    /// Coefficient of variation (std dev / mean).
    pub cv: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let n = us.len() as f64;
        let mean = us.iter().sum::<f64>() / n;
        let var = us.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            samples: us.len(),
            mean_us: mean,
            p50_us: percentile(&us, 0.50),
            p99_us: percentile(&us, 0.99),
            cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
        })
    }
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Flow-frame tally of one SLA type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComplianceTally {
    pub flow_frames: u64,
    pub breached: u64,
}

impl ComplianceTally {
    pub fn add(&mut self, breached: bool) {
        self.flow_frames += 1;
        if breached {
            self.breached += 1;
        }
    }

    /// Share of flow-frames without a flow-level breach; `None` when the type never appeared.
    pub fn compliance(&self) -> Option<f64> {
        (self.flow_frames > 0).then(|| 1.0 - self.breached as f64 / self.flow_frames as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub scenario: ScenarioConfig,
    pub scheduler: String,
    pub type1: ComplianceTally,
    pub type2: ComplianceTally,
    pub frames: usize,
    pub timing: Option<TimingStats>,
}

impl SweepResult {
    pub fn tally(&self, sla: SlaType) -> Option<&ComplianceTally> {
        match sla {
            SlaType::Type1 => Some(&self.type1),
            SlaType::Type2 => Some(&self.type2),
            SlaType::BestEffort => None,
        }
    }

    pub fn compliance(&self, sla: SlaType) -> Option<f64> {
        self.tally(sla).and_then(ComplianceTally::compliance)
    }

    /// True when neither SLA type had a single breached flow-frame.
    pub fn fully_compliant(&self) -> bool {
        self.type1.breached == 0 && self.type2.breached == 0
    }
}

/// Aggregates one (scenario, scheduler) run. Timing drops the first `warmup` reports.
pub fn accumulate<'a, I>(
    reports: I,
    scenario: &ScenarioConfig,
    scheduler: &str,
    warmup: usize,
) -> Result<SweepResult>
where
    I: IntoIterator<Item = &'a FrameReport>,
{
    let mut type1 = ComplianceTally::default();
    let mut type2 = ComplianceTally::default();
    let mut timer = MergeTimer::new(warmup);
    let mut frames = 0;
    for report in reports {
        frames += 1;
        timer.record(report.merge_wall_time);
        for f in &report.flows {
            match f.sla {
                SlaType::Type1 => type1.add(f.flow_breach),
                SlaType::Type2 => type2.add(f.flow_breach),
                SlaType::BestEffort => {}
            }
        }
    }
    if frames == 0 {
        return Err(Error::EmptyRun);
    }
    Ok(SweepResult {
        scenario: scenario.clone(),
        scheduler: scheduler.to_string(),
        type1,
        type2,
        frames,
        timing: timer.stats(),
    })
}

/// Recounts compliance straight from physical maps, re-deriving every
/// packet-level breach from grant positions instead of the stored flags.
pub fn compliance_from_bmaps<'a, I>(bmaps: I) -> (ComplianceTally, ComplianceTally)
where
    I: IntoIterator<Item = &'a PhysicalBMap>,
{
    let mut type1 = ComplianceTally::default();
    let mut type2 = ComplianceTally::default();
    for bmap in bmaps {
        let mut per_flow: BTreeMap<FlowId, (u32, u32, SlaClass)> = BTreeMap::new();
        for g in &bmap.grants {
            let late = match g.start {
                None => true,
                Some(s) => g
                    .sla
                    .latency_target_words
                    .is_some_and(|t| s.saturating_sub(g.origin_requested_start) > t),
            };
            let e = per_flow.entry(g.flow_id).or_insert((0, 0, g.sla));
            e.0 += 1;
            e.1 += u32::from(late);
        }
        for (total, late, sla) in per_flow.into_values() {
            let breached = f64::from(late) / f64::from(total) > sla.allowed_noncompliance;
            match sla.kind {
                SlaType::Type1 => type1.add(breached),
                SlaType::Type2 => type2.add(breached),
                SlaType::BestEffort => {}
            }
        }
    }
    (type1, type2)
}
