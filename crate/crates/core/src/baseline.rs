//! Stateless strict-priority merging: type-1 before type-2 before best effort,
//! no memory of earlier frames.

use crate::engine::{self, MergeEngine};
use crate::error::Result;
use crate::frame::{
    compute_maxtime, AllocationRequest, FrameConfig, Grant, PhysicalBMap, SlaType, VirtualBMap,
};
use crate::metrics::FrameReport;
use crate::placement::Occupancy;

fn class_rank(kind: SlaType) -> u8 {
    match kind {
        SlaType::Type1 => 0,
        SlaType::Type2 => 1,
        SlaType::BestEffort => 2,
    }
}

pub fn schedule_frame_stateless(vbmaps: &[VirtualBMap], cfg: &FrameConfig) -> Result<PhysicalBMap> {
    let frame_index = engine::common_frame_index(vbmaps)?;
    let mut allocs: Vec<(&AllocationRequest, u32)> = Vec::new();
    for a in vbmaps.iter().flat_map(|vb| vb.allocations.iter()) {
        allocs.push((a, compute_maxtime(a, cfg)?));
    }
    allocs.sort_unstable_by_key(|(a, _)| {
        (
            class_rank(a.sla.kind),
            a.requested_start,
            a.flow_id,
            a.vno_id,
        )
    });

    let mut occupancy = Occupancy::with_capacity(cfg, allocs.len());
    let grants = allocs
        .into_iter()
        .map(
            |(a, maxtime)| match occupancy.try_place(a.requested_start, maxtime, a.size_words) {
                Some(start) => Grant::scheduled(a, start),
                None => Grant::dropped(a),
            },
        )
        .collect();
    Ok(PhysicalBMap::from_grants(frame_index, grants))
}

pub fn merge_frame_stateless(
    vbmaps: &[VirtualBMap],
    cfg: &FrameConfig,
) -> Result<(PhysicalBMap, FrameReport)> {
    engine::run_frame(&mut StatelessMerger::new(*cfg), vbmaps)
}

#[derive(Debug, Clone)]
pub struct StatelessMerger {
    cfg: FrameConfig,
}

impl StatelessMerger {
    pub fn new(cfg: FrameConfig) -> Self {
        Self { cfg }
    }
}

impl MergeEngine for StatelessMerger {
    fn name(&self) -> &'static str {
        "stateless"
    }

    fn frame_config(&self) -> &FrameConfig {
        &self.cfg
    }

    fn merge(&mut self, vbmaps: &[VirtualBMap]) -> Result<PhysicalBMap> {
        schedule_frame_stateless(vbmaps, &self.cfg)
    }
}
