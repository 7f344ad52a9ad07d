//! Random instance builders shared by the integration tests.

#![allow(dead_code)]

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vdba::frame::{compute_maxtime, validate_physical_bmap};
use vdba::oracle::{candidate_starts, solve_exact, ExactInstance, ExactLimits};
use vdba::{
    AllocationRequest, FlowId, FrameConfig, PhysicalBMap, SlaClass, SlaType, VirtualBMap, VnoId,
};

pub const CLASSES: [SlaType; 4] = [
    SlaType::Type1,
    SlaType::Type2,
    SlaType::BestEffort,
    SlaType::BestEffort,
];

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub cfg: FrameConfig,
    pub vnos: u32,
    pub flows_per_vno: u32,
    pub allocations: usize,
    pub min_size: u32,
    pub max_size: u32,
    /// Class of flow `g` is `classes[g % len]`.
    pub classes: &'static [SlaType],
}

impl Shape {
    pub fn small(allocations: usize) -> Self {
        Shape {
            cfg: FrameConfig::with_capacity(4_000),
            vnos: 3,
            flows_per_vno: 2,
            allocations,
            min_size: 100,
            max_size: 900,
            classes: &CLASSES,
        }
    }
}

pub fn flow_class(flow: u32, classes: &[SlaType]) -> SlaType {
    classes[flow as usize % classes.len()]
}

/// Virtual maps with up to `shape.allocations` requests, each VNO's own
/// requests guard-separated. Requests that find no room are skipped.
pub fn random_vbmaps(rng: &mut impl Rng, shape: &Shape, frame_index: u64) -> Vec<VirtualBMap> {
    let cfg = &shape.cfg;
    let mut maps: Vec<VirtualBMap> = (0..shape.vnos)
        .map(|v| VirtualBMap::new(VnoId(v), frame_index))
        .collect();
    for _ in 0..shape.allocations {
        let v = rng.random_range(0..shape.vnos);
        let flow = v * shape.flows_per_vno + rng.random_range(0..shape.flows_per_vno);
        let size = rng.random_range(shape.min_size..=shape.max_size.min(cfg.capacity_words));
        let map = &mut maps[v as usize];
        for _ in 0..16 {
            let start = rng.random_range(0..=cfg.capacity_words - size);
            let clear = map.allocations.iter().all(|a| {
                a.requested_end() + cfg.guard_words <= start
                    || start + size + cfg.guard_words <= a.requested_start
            });
            if clear {
                map.allocations.push(AllocationRequest {
                    vno_id: VnoId(v),
                    flow_id: FlowId(flow),
                    requested_start: start,
                    size_words: size,
                    sla: SlaClass::new(flow_class(flow, shape.classes), cfg),
                });
                break;
            }
        }
    }
    for m in &maps {
        m.validate(cfg).expect("builder keeps maps valid");
    }
    maps.retain(|m| !m.allocations.is_empty());
    maps
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn request_count(vbmaps: &[VirtualBMap]) -> usize {
    vbmaps.iter().map(|v| v.allocations.len()).sum()
}

/// Panics with the violations when `bmap` is not a valid physical map.
pub fn assert_valid(bmap: &PhysicalBMap, cfg: &FrameConfig) {
    let v = validate_physical_bmap(bmap, cfg);
    assert!(v.is_empty(), "invalid physical map: {v:?}\n{bmap:#?}");
}

/// Flow breaches of a physical map, counted from grant positions alone.
pub fn flow_breaches(bmap: &PhysicalBMap) -> u32 {
    let mut per_flow: std::collections::BTreeMap<FlowId, (u32, u32, SlaClass)> = Default::default();
    for g in &bmap.grants {
        let late = match g.start {
            None => g.sla.latency_target_words.is_some(),
            Some(s) => g
                .sla
                .latency_target_words
                .is_some_and(|t| s - g.origin_requested_start > t),
        };
        let e = per_flow.entry(g.flow_id).or_insert((0, 0, g.sla));
        e.0 += 1;
        e.1 += u32::from(late);
    }
    per_flow
        .values()
        .filter(|(total, late, sla)| {
            f64::from(*late) / f64::from(*total) > sla.allowed_noncompliance
        })
        .count() as u32
}

pub fn sla_jobs(maps: &[VirtualBMap]) -> Vec<AllocationRequest> {
    maps.iter()
        .flat_map(|m| m.allocations.iter().copied())
        .filter(|a| a.sla.kind.is_sla())
        .collect()
}

pub fn free(placed: &[Range<u32>], start: u32, size: u32, guard: u32) -> bool {
    placed
        .iter()
        .all(|r| start >= r.end + guard || start + size + guard <= r.start)
}

/// (flow breaches, dropped requests) of one drop pattern.
pub fn score(jobs: &[AllocationRequest], dropped: &[bool]) -> (u32, u32) {
    let mut flows: std::collections::BTreeMap<FlowId, (u32, u32, SlaClass)> = Default::default();
    for (a, &d) in jobs.iter().zip(dropped) {
        let e = flows.entry(a.flow_id).or_insert((0, 0, a.sla));
        e.0 += 1;
        e.1 += u32::from(d);
    }
    let breaches = flows
        .values()
        .filter(|(t, d, sla)| sla.is_flow_breach(*d, *t))
        .count() as u32;
    (breaches, dropped.iter().filter(|&&d| d).count() as u32)
}

/// Tries every order of the kept jobs and every candidate start at each step.
pub fn placeable_with_candidates(
    jobs: &[&AllocationRequest],
    placed: &mut Vec<Range<u32>>,
    cfg: &FrameConfig,
) -> bool {
    if jobs.is_empty() {
        return true;
    }
    for i in 0..jobs.len() {
        let a = jobs[i];
        for s in candidate_starts(a, placed, cfg).unwrap() {
            if s > compute_maxtime(a, cfg).unwrap()
                || !free(placed, s, a.size_words, cfg.guard_words)
            {
                continue;
            }
            let rest: Vec<_> = jobs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, a)| *a)
                .collect();
            placed.push(s..s + a.size_words);
            let ok = placeable_with_candidates(&rest, placed, cfg);
            placed.pop();
            if ok {
                return true;
            }
        }
    }
    false
}

/// Tries every start in every window, jobs in index order.
pub fn placeable_anywhere(
    jobs: &[&AllocationRequest],
    placed: &mut Vec<Range<u32>>,
    cfg: &FrameConfig,
) -> bool {
    let Some((a, rest)) = jobs.split_first() else {
        return true;
    };
    for s in a.requested_start..=compute_maxtime(a, cfg).unwrap() {
        if free(placed, s, a.size_words, cfg.guard_words) {
            placed.push(s..s + a.size_words);
            let ok = placeable_anywhere(rest, placed, cfg);
            placed.pop();
            if ok {
                return true;
            }
        }
    }
    false
}

/// Best (flow breaches, dropped) over all drop patterns with a feasibility test.
pub fn enumerate(
    jobs: &[AllocationRequest],
    cfg: &FrameConfig,
    feasible: fn(&[&AllocationRequest], &mut Vec<Range<u32>>, &FrameConfig) -> bool,
) -> (u32, u32) {
    let n = jobs.len();
    let mut best = (u32::MAX, u32::MAX);
    for mask in 0..1u32 << n {
        let dropped: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let s = score(jobs, &dropped);
        if s >= best {
            continue;
        }
        let kept: Vec<&AllocationRequest> = jobs
            .iter()
            .zip(&dropped)
            .filter(|(_, &d)| !d)
            .map(|(a, _)| a)
            .collect();
        if feasible(&kept, &mut Vec::new(), cfg) {
            best = s;
        }
    }
    best
}

pub fn oracle_score(maps: &[VirtualBMap], cfg: FrameConfig) -> (u32, u32) {
    let inst = ExactInstance::from_vbmaps(maps, cfg, ExactLimits::default()).unwrap();
    let sol = solve_exact(&inst).unwrap();
    assert!(sol.proven_optimal);
    assert_valid(&sol.bmap, &cfg);
    assert_eq!(sol.flow_breaches, flow_breaches(&sol.bmap));
    let sla_drops = sol.bmap.dropped().filter(|g| g.sla.kind.is_sla()).count() as u32;
    (sol.flow_breaches, sla_drops)
}
