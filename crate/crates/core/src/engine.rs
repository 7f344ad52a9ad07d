//! Common driver for the merging engines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameConfig, PhysicalBMap, VirtualBMap};
use crate::metrics::{self, FlowFrameStats, FrameReport, TimingHooks};

/// Something that turns a frame's virtual maps into one physical map.
///
/// `merge` is the hot path and the only part that gets timed; `commit`
/// does the per-frame bookkeeping afterwards.
pub trait MergeEngine {
    fn name(&self) -> &'static str;

    fn frame_config(&self) -> &FrameConfig;

    fn merge(&mut self, vbmaps: &[VirtualBMap]) -> Result<PhysicalBMap>;

    fn commit(&mut self, bmap: &PhysicalBMap) -> Vec<FlowFrameStats> {
        metrics::frame_flow_stats(&bmap.grants)
    }
}

/// Merges one frame and builds its report, timing only the merge.
pub fn run_frame<E: MergeEngine + ?Sized>(
    engine: &mut E,
    vbmaps: &[VirtualBMap],
) -> Result<(PhysicalBMap, FrameReport)> {
    run_frame_with_hooks(engine, vbmaps, &mut ())
}

/// [`run_frame`] with callbacks around the timed region.
pub fn run_frame_with_hooks<E: MergeEngine + ?Sized, H: TimingHooks + ?Sized>(
    engine: &mut E,
    vbmaps: &[VirtualBMap],
    hooks: &mut H,
) -> Result<(PhysicalBMap, FrameReport)> {
    let (bmap, elapsed) = metrics::time_merge_with_hooks(|| engine.merge(vbmaps), hooks);
    let bmap = bmap?;
    let flows = engine.commit(&bmap);
    let report = FrameReport::new(&bmap, flows, elapsed);
    Ok((bmap, report))
}

/// Frame index shared by all maps, or 0 when there are none.
pub fn common_frame_index(vbmaps: &[VirtualBMap]) -> Result<u64> {
    let Some(first) = vbmaps.first() else {
        return Ok(0);
    };
    for vb in &vbmaps[1..] {
        if vb.frame_index != first.frame_index {
            return Err(Error::MixedFrames {
                first: first.frame_index,
                other: vb.frame_index,
            });
        }
    }
    Ok(first.frame_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Heuristic,
    Stateless,
    Exact,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [
        SchedulerKind::Heuristic,
        SchedulerKind::Stateless,
        SchedulerKind::Exact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Heuristic => "heuristic",
            SchedulerKind::Stateless => "stateless",
            SchedulerKind::Exact => "exact",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown scheduler `{s}` (expected heuristic, stateless or exact)")
            })
    }
}
