//! Stateful SLA-aware merging engine.
//!
//! Each frame the hypervisor
//!
//! 1. computes every request's maxtime (latest start within its latency target),
//! 2. places all requests that collide with nobody exactly where their VNO asked,
//! 3. places the colliding ones earliest-fit in priority order: breach headroom,
//!    then maxtime, then size (best effort always last), dropping what no longer
//!    fits before its maxtime,
//! 4. folds the frame's per-flow delay counts into the flow-breach table, which
//!    drives the priorities of the next frame.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{self, MergeEngine};
use crate::error::{Error, Result};
use crate::frame::{
    compute_maxtime, AllocationRequest, FlowId, FrameConfig, Grant, PhysicalBMap, SlaClass,
    VirtualBMap,
};
use crate::metrics::{self, FlowFrameStats, FrameReport};
use crate::placement::Occupancy;

/// History of one flow across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBreachRecord {
    pub flow_id: FlowId,
    pub sla: SlaClass,
    pub cum_total: u64,
    pub cum_delayed: u64,
    /// Frames in which the flow's delayed fraction went above its allowance.
    pub flow_breach_frames: u64,
}

impl FlowBreachRecord {
    pub fn new(flow_id: FlowId, sla: SlaClass) -> Self {
        Self {
            flow_id,
            sla,
            cum_total: 0,
            cum_delayed: 0,
            flow_breach_frames: 0,
        }
    }

    pub fn observed_rate(&self) -> f64 {
        if self.cum_total == 0 {
            0.0
        } else {
            self.cum_delayed as f64 / self.cum_total as f64
        }
    }

    /// Allowed minus observed non-compliance; negative once the flow is over budget.
    pub fn headroom(&self) -> f64 {
        self.sla.allowed_noncompliance - self.observed_rate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowBreachTable {
    pub records: BTreeMap<FlowId, FlowBreachRecord>,
}

impl FlowBreachTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, flow_id: FlowId) -> Option<&FlowBreachRecord> {
        self.records.get(&flow_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Headroom of `flow_id`; a flow without history has its full allowance.
    pub fn headroom(&self, flow_id: FlowId, sla: &SlaClass) -> f64 {
        self.records
            .get(&flow_id)
            .map_or(sla.allowed_noncompliance, FlowBreachRecord::headroom)
    }
}

pub fn init_sla_table(flows: &[(FlowId, SlaClass)]) -> Result<FlowBreachTable> {
    let mut table = FlowBreachTable::new();
    for &(flow_id, sla) in flows {
        if table
            .records
            .insert(flow_id, FlowBreachRecord::new(flow_id, sla))
            .is_some()
        {
            return Err(Error::DuplicateFlow(flow_id));
        }
    }
    Ok(table)
}

/// Sort key for colliding requests. Smaller sorts first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityKey {
    pub headroom: f64,
    pub maxtime: u32,
    pub size_words: u32,
    pub flow_id: FlowId,
    /// Separates several bursts of one flow that tie on everything else.
    pub requested_start: u32,
}

impl Eq for PriorityKey {}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.headroom
            .total_cmp(&other.headroom)
            .then(self.maxtime.cmp(&other.maxtime))
            .then(self.size_words.cmp(&other.size_words))
            .then(self.flow_id.cmp(&other.flow_id))
            .then(self.requested_start.cmp(&other.requested_start))
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn priority_key(
    alloc: &AllocationRequest,
    table: &FlowBreachTable,
    cfg: &FrameConfig,
) -> Result<PriorityKey> {
    Ok(PriorityKey {
        headroom: table.headroom(alloc.flow_id, &alloc.sla),
        maxtime: compute_maxtime(alloc, cfg)?,
        size_words: alloc.size_words,
        flow_id: alloc.flow_id,
        requested_start: alloc.requested_start,
    })
}

/// A request waiting for collision resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingAllocation {
    pub request: AllocationRequest,
    pub key: PriorityKey,
}

impl PendingAllocation {
    /// Packed form of `(is_best_effort, key)` with the same ordering.
    fn sort_key(&self) -> (u128, u64, u64) {
        // f64::total_cmp order as an unsigned integer
        let bits = self.key.headroom.to_bits() as i64;
        let headroom = ((bits ^ (((bits >> 63) as u64) >> 1) as i64) as u64) ^ (1 << 63);
        let best_effort = u128::from(!self.request.sla.kind.is_sla());
        (
            best_effort << 64 | u128::from(headroom),
            u64::from(self.key.maxtime) << 32 | u64::from(self.key.size_words),
            u64::from(self.key.flow_id.0) << 32 | u64::from(self.key.requested_start),
        )
    }
}

/// Places `pending` earliest-fit in priority order around what is already in
/// `occupancy`. Requests without room before their maxtime are dropped.
/// Best-effort requests always come after every SLA request.
pub fn resolve_collisions(
    occupancy: &mut Occupancy,
    pending: &[PendingAllocation],
    grants: &mut Vec<Grant>,
) {
    let mut order: Vec<_> = pending.iter().map(|p| (p.sort_key(), p)).collect();
    order.sort_unstable_by_key(|&(key, _)| key);
    for (_, p) in order {
        let req = &p.request;
        match occupancy.try_place(req.requested_start, p.key.maxtime, req.size_words) {
            Some(start) => grants.push(Grant::scheduled(req, start)),
            None => grants.push(Grant::dropped(req)),
        }
    }
}

/// Marks requests whose slot (plus guard) intersects another request's slot.
fn collisions(allocs: &[&AllocationRequest], guard: u32) -> Vec<bool> {
    let mut order: Vec<usize> = (0..allocs.len()).collect();
    order.sort_unstable_by_key(|&i| allocs[i].requested_start);
    let mut colliding = vec![false; allocs.len()];
    let mut reach: Option<usize> = None;
    for &i in &order {
        let a = allocs[i];
        if let Some(r) = reach {
            if allocs[r].requested_end() + guard > a.requested_start {
                colliding[i] = true;
                colliding[r] = true;
            }
            if allocs[r].requested_end() >= a.requested_end() {
                continue;
            }
        }
        reach = Some(i);
    }
    colliding
}

/// Builds the physical map for one frame given the current breach table.
pub fn schedule_frame(
    vbmaps: &[VirtualBMap],
    table: &FlowBreachTable,
    cfg: &FrameConfig,
) -> Result<PhysicalBMap> {
    let frame_index = engine::common_frame_index(vbmaps)?;
    let allocs: Vec<&AllocationRequest> =
        vbmaps.iter().flat_map(|vb| vb.allocations.iter()).collect();
    let colliding = collisions(&allocs, cfg.guard_words);

    let mut occupancy = Occupancy::with_capacity(cfg, allocs.len());
    let mut grants = Vec::with_capacity(allocs.len());
    let mut pending = Vec::new();
    for (alloc, collides) in allocs.iter().zip(colliding) {
        let key = priority_key(alloc, table, cfg)?;
        if !collides && alloc.requested_start <= key.maxtime {
            occupancy.insert(alloc.requested_start, alloc.size_words);
            grants.push(Grant::scheduled(alloc, alloc.requested_start));
        } else {
            pending.push(PendingAllocation {
                request: **alloc,
                key,
            });
        }
    }
    resolve_collisions(&mut occupancy, &pending, &mut grants);
    Ok(PhysicalBMap::from_grants(frame_index, grants))
}

/// Folds one frame's grants into the table and returns the frame's per-flow counts.
pub fn update_flow_table(table: &mut FlowBreachTable, grants: &[Grant]) -> Vec<FlowFrameStats> {
    let stats = metrics::frame_flow_stats(grants);
    for s in &stats {
        let record = table.records.entry(s.flow_id).or_insert_with(|| {
            let sla = grants
                .iter()
                .find(|g| g.flow_id == s.flow_id)
                .map(|g| g.sla);
            FlowBreachRecord::new(s.flow_id, sla.expect("stats come from these grants"))
        });
        record.cum_total += u64::from(s.total);
        record.cum_delayed += u64::from(s.delayed);
        if s.flow_breach {
            record.flow_breach_frames += 1;
        }
    }
    stats
}

/// Pure form of one hypervisor step: returns the map, the updated table and the report.
pub fn merge_frame(
    vbmaps: &[VirtualBMap],
    table: &FlowBreachTable,
    cfg: &FrameConfig,
) -> Result<(PhysicalBMap, FlowBreachTable, FrameReport)> {
    let mut hv = Hypervisor::with_table(*cfg, table.clone());
    let (bmap, report) = engine::run_frame(&mut hv, vbmaps)?;
    Ok((bmap, hv.table, report))
}

/// The stateful merging engine; owns its flow-breach table.
#[derive(Debug, Clone)]
pub struct Hypervisor {
    cfg: FrameConfig,
    table: FlowBreachTable,
}

impl Hypervisor {
    pub fn new(cfg: FrameConfig) -> Self {
        Self::with_table(cfg, FlowBreachTable::new())
    }

    pub fn with_table(cfg: FrameConfig, table: FlowBreachTable) -> Self {
        Self { cfg, table }
    }

    pub fn table(&self) -> &FlowBreachTable {
        &self.table
    }

    pub fn into_table(self) -> FlowBreachTable {
        self.table
    }

    pub fn merge_frame(&mut self, vbmaps: &[VirtualBMap]) -> Result<(PhysicalBMap, FrameReport)> {
        engine::run_frame(self, vbmaps)
    }
}

impl MergeEngine for Hypervisor {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn frame_config(&self) -> &FrameConfig {
        &self.cfg
    }

    fn merge(&mut self, vbmaps: &[VirtualBMap]) -> Result<PhysicalBMap> {
        schedule_frame(vbmaps, &self.table, &self.cfg)
    }

    fn commit(&mut self, bmap: &PhysicalBMap) -> Vec<FlowFrameStats> {
        update_flow_table(&mut self.table, &bmap.grants)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{validate_physical_bmap, VnoId};

    fn cfg() -> FrameConfig {
        FrameConfig::default()
    }

    fn req(vno: u32, flow: u32, start: u32, size: u32, sla: SlaClass) -> AllocationRequest {
        AllocationRequest {
            vno_id: VnoId(vno),
            flow_id: FlowId(flow),
            requested_start: start,
            size_words: size,
            sla,
        }
    }

    fn vbmap(vno: u32, allocs: Vec<AllocationRequest>) -> VirtualBMap {
        VirtualBMap {
            vno_id: VnoId(vno),
            frame_index: 0,
            allocations: allocs,
        }
    }

    fn start_of(bmap: &PhysicalBMap, flow: u32) -> Option<u32> {
        bmap.grants
            .iter()
            .find(|g| g.flow_id == FlowId(flow))
            .and_then(|g| g.start)
    }

    #[test]
    fn no_vbmaps_gives_empty_map() {
        let table = FlowBreachTable::new();
        let (bmap, new_table, report) = merge_frame(&[], &table, &cfg()).unwrap();
        assert!(bmap.grants.is_empty());
        assert_eq!(new_table, table);
        assert!(report.flows.is_empty());
    }

    #[test]
    fn collision_free_vbmap_is_passed_through() {
        let c = cfg();
        let t1 = SlaClass::type1(&c);
        let allocs = vec![req(0, 1, 0, 325, t1), req(0, 2, 1_000, 1_175, t1)];
        let (bmap, _, report) =
            merge_frame(&[vbmap(0, allocs.clone())], &FlowBreachTable::new(), &c).unwrap();
        for (g, a) in bmap.grants.iter().zip(&allocs) {
            assert_eq!(g.start, Some(a.requested_start));
            assert!(!g.delayed);
        }
        assert!(report.flows.iter().all(|f| f.delayed == 0));
    }

    #[test]
    fn fresh_type1_beats_fresh_type2() {
        let c = cfg();
        let a = req(0, 1, 0, 325, SlaClass::type1(&c));
        let b = req(1, 2, 0, 325, SlaClass::type2(&c));
        let (bmap, _, _) = merge_frame(
            &[vbmap(0, vec![a]), vbmap(1, vec![b])],
            &FlowBreachTable::new(),
            &c,
        )
        .unwrap();
        assert_eq!(start_of(&bmap, 1), Some(0));
        assert_eq!(start_of(&bmap, 2), Some(356));
        assert!(bmap.grants.iter().all(|g| !g.delayed));
    }

    #[test]
    fn same_class_ties_broken_by_flow_id() {
        let c = cfg();
        let t1 = SlaClass::type1(&c);
        let vbs = vec![
            vbmap(2, vec![req(2, 30, 0, 325, t1)]),
            vbmap(0, vec![req(0, 10, 0, 325, t1)]),
            vbmap(1, vec![req(1, 20, 0, 325, t1)]),
        ];
        let (bmap, _, _) = merge_frame(&vbs, &FlowBreachTable::new(), &c).unwrap();
        assert_eq!(start_of(&bmap, 10), Some(0));
        assert_eq!(start_of(&bmap, 20), Some(356));
        assert_eq!(start_of(&bmap, 30), Some(712));
    }

    #[test]
    fn request_without_room_before_maxtime_is_dropped() {
        let c = FrameConfig {
            capacity_words: 1_000,
            guard_words: 10,
        };
        let t1 = SlaClass::type1(&c); // target 100 words
                                      // vno 0 fills [0, 900); vno 1 wants [50, 150) with maxtime 150.
        let wall = req(0, 1, 0, 900, SlaClass::type1(&c));
        let late = req(1, 2, 50, 100, t1);
        let mut table = init_sla_table(&[(FlowId(1), t1), (FlowId(2), t1)]).unwrap();
        // make flow 1 the most urgent so it keeps its slot
        table.records.get_mut(&FlowId(1)).unwrap().cum_total = 10;
        table.records.get_mut(&FlowId(1)).unwrap().cum_delayed = 5;
        let (bmap, _, report) =
            merge_frame(&[vbmap(0, vec![wall]), vbmap(1, vec![late])], &table, &c).unwrap();
        assert_eq!(start_of(&bmap, 1), Some(0));
        let dropped: Vec<_> = bmap.dropped().collect();
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].flow_id, FlowId(2));
        assert!(dropped[0].delayed);
        assert_eq!(report.dropped_count, 1);
    }

    #[test]
    fn best_effort_goes_after_sla_whatever_its_key() {
        let c = cfg();
        let be = req(0, 1, 0, 100, SlaClass::best_effort());
        let t2 = req(1, 2, 0, 100, SlaClass::type2(&c));
        let mut table = FlowBreachTable::new();
        // best effort with hugely negative headroom still yields
        table.records.insert(
            FlowId(1),
            FlowBreachRecord {
                flow_id: FlowId(1),
                sla: SlaClass {
                    allowed_noncompliance: 0.0,
                    ..SlaClass::best_effort()
                },
                cum_total: 10,
                cum_delayed: 10,
                flow_breach_frames: 0,
            },
        );
        let (bmap, _, _) =
            merge_frame(&[vbmap(0, vec![be]), vbmap(1, vec![t2])], &table, &c).unwrap();
        assert_eq!(start_of(&bmap, 2), Some(0));
        assert_eq!(start_of(&bmap, 1), Some(131));
    }

    #[test]
    fn mixed_frames_are_rejected() {
        let mut late = vbmap(1, vec![]);
        late.frame_index = 7;
        let err = merge_frame(&[vbmap(0, vec![]), late], &FlowBreachTable::new(), &cfg());
        assert_eq!(err.unwrap_err(), Error::MixedFrames { first: 0, other: 7 });
    }

    #[test]
    fn priority_key_examples() {
        let c = cfg();
        let t1 = SlaClass::type1(&c);
        let t2 = SlaClass::type2(&c);
        let fresh = FlowBreachTable::new();
        let a = req(0, 1, 0, 325, t1);
        let b = req(1, 2, 0, 325, t2);
        assert!(priority_key(&a, &fresh, &c).unwrap() < priority_key(&b, &fresh, &c).unwrap());

        let mut table = init_sla_table(&[(FlowId(2), t2)]).unwrap();
        let rec = table.records.get_mut(&FlowId(2)).unwrap();
        rec.cum_total = 100;
        rec.cum_delayed = 9;
        let kb = priority_key(&b, &table, &c).unwrap();
        assert!((kb.headroom - 0.01).abs() < 1e-12);
        assert!(kb < priority_key(&a, &table, &c).unwrap());

        let x = req(0, 5, 0, 325, t1);
        let y = req(1, 6, 0, 325, t1);
        assert!(priority_key(&x, &fresh, &c).unwrap() < priority_key(&y, &fresh, &c).unwrap());
    }

    #[test]
    fn init_table_examples() {
        let c = cfg();
        assert!(init_sla_table(&[]).unwrap().is_empty());
        let t = init_sla_table(&[(FlowId(1), SlaClass::type1(&c))]).unwrap();
        assert_eq!(t.get(FlowId(1)).unwrap().headroom(), 0.05);
        let t = init_sla_table(&[(FlowId(1), SlaClass::best_effort())]).unwrap();
        assert_eq!(t.get(FlowId(1)).unwrap().headroom(), 1.0);
        let dup = init_sla_table(&[
            (FlowId(1), SlaClass::type1(&c)),
            (FlowId(1), SlaClass::type2(&c)),
        ]);
        assert_eq!(dup.unwrap_err(), Error::DuplicateFlow(FlowId(1)));
    }

    fn grants_for(flow: u32, sla: SlaClass, total: u32, delayed: u32) -> Vec<Grant> {
        (0..total)
            .map(|i| {
                let r = req(0, flow, i * 1_000, 100, sla);
                if i < delayed {
                    Grant::dropped(&r)
                } else {
                    Grant::scheduled(&r, r.requested_start)
                }
            })
            .collect()
    }

    #[test]
    fn update_flow_table_examples() {
        let c = cfg();
        let mut table = FlowBreachTable::new();
        let stats = update_flow_table(&mut table, &grants_for(1, SlaClass::type1(&c), 10, 1));
        assert!(stats[0].flow_breach);
        assert_eq!(table.get(FlowId(1)).unwrap().flow_breach_frames, 1);

        let stats = update_flow_table(&mut table, &grants_for(2, SlaClass::type1(&c), 10, 0));
        assert!(!stats[0].flow_breach);
        assert_eq!(table.get(FlowId(2)).unwrap().headroom(), 0.05);

        let stats = update_flow_table(&mut table, &grants_for(3, SlaClass::type2(&c), 20, 1));
        assert!(!stats[0].flow_breach);
        let rec = table.get(FlowId(3)).unwrap();
        assert_eq!((rec.cum_total, rec.cum_delayed), (20, 1));
        assert!((rec.headroom() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn headroom_accumulates_across_frames() {
        let c = cfg();
        let t2 = SlaClass::type2(&c);
        let mut table = FlowBreachTable::new();
        update_flow_table(&mut table, &grants_for(1, t2, 10, 2));
        update_flow_table(&mut table, &grants_for(1, t2, 10, 0));
        let rec = table.get(FlowId(1)).unwrap();
        assert_eq!(rec.flow_breach_frames, 1);
        assert!((rec.observed_rate() - 0.1).abs() < 1e-12);
        assert!(rec.headroom().abs() < 1e-12);
    }

    #[test]
    fn stateful_priority_flips_after_breaches() {
        // Same contention twice: type2 loses the first frame, then wins.
        let c = FrameConfig {
            capacity_words: 1_000,
            guard_words: 0,
        };
        let t1 = SlaClass::type1(&c);
        let t2 = SlaClass::type2(&c);
        let frame = |i: u64| {
            vec![
                VirtualBMap {
                    vno_id: VnoId(0),
                    frame_index: i,
                    allocations: vec![req(0, 1, 600, 400, t1)],
                },
                VirtualBMap {
                    vno_id: VnoId(1),
                    frame_index: i,
                    allocations: vec![req(1, 2, 600, 400, t2)],
                },
            ]
        };
        let mut hv = Hypervisor::new(c);
        let (b0, _) = hv.merge_frame(&frame(0)).unwrap();
        assert_eq!(start_of(&b0, 1), Some(600));
        assert_eq!(start_of(&b0, 2), None);
        let (b1, _) = hv.merge_frame(&frame(1)).unwrap();
        assert_eq!(start_of(&b1, 2), Some(600));
        assert_eq!(start_of(&b1, 1), None);
        assert!(validate_physical_bmap(&b1, &c).is_empty());
    }

    #[test]
    fn collision_detection_respects_guard() {
        let c = cfg();
        let be = SlaClass::best_effort();
        let a = req(0, 1, 0, 100, be);
        let b = req(1, 2, 131, 100, be);
        let d = req(2, 3, 260, 100, be);
        let marks = collisions(&[&a, &b, &d], c.guard_words);
        assert_eq!(marks, vec![false, true, true]);
    }
}
