//! Exact single-frame minimiser of flow-level SLA breaches.
//!
//! Decision per SLA request: a start in `[requested_start, maxtime]`, or drop.
//! A request breaches at packet level iff it is dropped (scheduled requests
//! never start past their maxtime). A flow breaches iff its dropped fraction
//! goes strictly above its allowance. The objective is, lexicographically,
//! fewest flow breaches, fewest dropped SLA requests, earliest completion of
//! the SLA schedule.
//!
//! Best-effort requests cannot breach, so they never change the objective.
//! They are packed first-fit into the gaps the optimal SLA schedule leaves.
//!
//! The search has two layers:
//!
//! * a subset table giving, for every set of SLA requests, the earliest
//!   completion of a left-justified sequence that meets all their maxtimes
//!   (infinite when the set cannot all be served), and
//! * a branch-and-bound over keep/drop decisions on top of that table, pruned
//!   by the breaches already forced by drops.
//!
//! Feasibility is monotone (a subset of a servable set is servable), so a
//! branch dies as soon as its kept set becomes unservable.

use std::collections::HashMap;
use std::ops::Range;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::{self, MergeEngine};
use crate::error::{Error, Result};
use crate::frame::{
    compute_maxtime, AllocationRequest, FlowId, FrameConfig, Grant, PhysicalBMap, SlaClass,
    VirtualBMap,
};
use crate::metrics;
use crate::placement::Occupancy;

pub const DEFAULT_MAX_ALLOCATIONS: usize = 12;
/// Size bound of the subset table (2^22 entries).
pub const HARD_MAX_ALLOCATIONS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactLimits {
    /// Most SLA requests one instance may carry.
    pub max_allocations: usize,
    pub time_budget: Duration,
}

impl Default for ExactLimits {
    fn default() -> Self {
        Self {
            max_allocations: DEFAULT_MAX_ALLOCATIONS,
            time_budget: Duration::from_secs(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactInstance {
    pub frame_index: u64,
    pub allocations: Vec<AllocationRequest>,
    pub cfg: FrameConfig,
    pub limits: ExactLimits,
}

impl ExactInstance {
    pub fn new(allocations: Vec<AllocationRequest>, cfg: FrameConfig) -> Self {
        Self {
            frame_index: 0,
            allocations,
            cfg,
            limits: ExactLimits::default(),
        }
    }

    pub fn from_vbmaps(
        vbmaps: &[VirtualBMap],
        cfg: FrameConfig,
        limits: ExactLimits,
    ) -> Result<Self> {
        Ok(Self {
            frame_index: engine::common_frame_index(vbmaps)?,
            allocations: vbmaps
                .iter()
                .flat_map(|vb| vb.allocations.iter().copied())
                .collect(),
            cfg,
            limits,
        })
    }

    /// Requests that carry a latency target and hence count against the limit.
    pub fn sla_count(&self) -> usize {
        self.allocations
            .iter()
            .filter(|a| a.sla.latency_target_words.is_some())
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub bmap: PhysicalBMap,
    pub flow_breaches: u32,
    /// Aligned with `ExactInstance::allocations`.
    pub packet_breach_flags: Vec<bool>,
    pub proven_optimal: bool,
}

/// Dominance-reduced start candidates of `alloc` next to `placed` bursts:
/// its requested start plus every end-plus-guard that falls inside its window.
pub fn candidate_starts(
    alloc: &AllocationRequest,
    placed: &[Range<u32>],
    cfg: &FrameConfig,
) -> Result<Vec<u32>> {
    let maxtime = compute_maxtime(alloc, cfg)?;
    let mut out = vec![alloc.requested_start];
    out.extend(
        placed
            .iter()
            .map(|r| r.end + cfg.guard_words)
            .filter(|&s| s > alloc.requested_start && s <= maxtime),
    );
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Job {
    /// Index into the instance's allocations.
    alloc: usize,
    release: u32,
    maxtime: u32,
    size: u32,
    flow: usize,
}

#[derive(Debug, Clone, Copy)]
struct FlowBudget {
    tolerated: u32,
}

const UNSERVABLE: u32 = u32::MAX;

/// Earliest completion of every servable subset, with the last job of one
/// optimal sequence for reconstruction.
struct SubsetTable {
    completion: Vec<u32>,
    last: Vec<u8>,
}

impl SubsetTable {
    fn build(jobs: &[Job], guard: u32, deadline: &Deadline) -> Option<Self> {
        let n = jobs.len();
        let size = 1usize << n;
        let mut completion = vec![UNSERVABLE; size];
        let mut last = vec![0u8; size];
        completion[0] = 0;
        for mask in 1..size {
            if mask & 0xFFF == 1 && deadline.expired() {
                return None;
            }
            let mut best = UNSERVABLE;
            let mut best_job = 0u8;
            let mut rest = mask;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let prev = mask ^ (1 << j);
                let prev_end = completion[prev];
                if prev_end == UNSERVABLE {
                    continue;
                }
                let job = &jobs[j];
                let start = if prev == 0 {
                    job.release
                } else {
                    job.release.max(prev_end + guard)
                };
                if start <= job.maxtime && start + job.size < best {
                    best = start + job.size;
                    best_job = j as u8;
                }
            }
            completion[mask] = best;
            last[mask] = best_job;
        }
        Some(Self { completion, last })
    }

    fn servable(&self, mask: usize) -> bool {
        self.completion[mask] != UNSERVABLE
    }

    /// Start of every job in `mask`, following the recorded optimal sequence.
    fn starts(&self, jobs: &[Job], mut mask: usize, guard: u32) -> Vec<(usize, u32)> {
        let mut order = Vec::new();
        while mask != 0 {
            let j = self.last[mask] as usize;
            order.push(j);
            mask ^= 1 << j;
        }
        order.reverse();
        let mut out = Vec::with_capacity(order.len());
        let mut end: Option<u32> = None;
        for j in order {
            let start = match end {
                None => jobs[j].release,
                Some(e) => jobs[j].release.max(e + guard),
            };
            end = Some(start + jobs[j].size);
            out.push((j, start));
        }
        out
    }
}

struct Deadline {
    at: Instant,
}

impl Deadline {
    fn after(budget: Duration) -> Self {
        Self {
            at: Instant::now() + budget,
        }
    }

    fn expired(&self) -> bool {
        Instant::now() >= self.at
    }
}

/// (flow breaches, dropped SLA requests, completion)
type Objective = (u32, u32, u32);

struct Search<'a> {
    jobs: &'a [Job],
    budgets: &'a [FlowBudget],
    table: &'a SubsetTable,
    deadline: &'a Deadline,
    drops: Vec<u32>,
    forced: Vec<u32>,
    best: Option<(Objective, usize)>,
    nodes: u64,
    timed_out: bool,
}

impl Search<'_> {
    fn run(&mut self, i: usize, keep: usize, breaches: u32, dropped: u32) {
        self.nodes += 1;
        if self.nodes & 0x3FF == 1 && self.deadline.expired() {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        if let Some(((bb, bd, _), _)) = self.best {
            if self.lower_bound(i, keep, breaches, dropped) > (bb, bd) {
                return;
            }
        }
        if i == self.jobs.len() {
            let objective = (breaches, dropped, self.table.completion[keep]);
            if self.best.is_none_or(|(b, _)| objective < b) {
                self.best = Some((objective, keep));
            }
            return;
        }

        let with = keep | (1 << i);
        if self.table.servable(with) {
            self.run(i + 1, with, breaches, dropped);
        }

        let flow = self.jobs[i].flow;
        self.drops[flow] += 1;
        let newly_breached = u32::from(self.drops[flow] == self.budgets[flow].tolerated + 1);
        self.run(i + 1, keep, breaches + newly_breached, dropped + 1);
        self.drops[flow] -= 1;
    }

    /// Adds the drops already forced on undecided jobs that no longer fit next
    /// to the kept set.
    fn lower_bound(&mut self, i: usize, keep: usize, breaches: u32, dropped: u32) -> (u32, u32) {
        self.forced.iter_mut().for_each(|f| *f = 0);
        let mut forced = 0;
        let mut b = breaches;
        for j in i..self.jobs.len() {
            if !self.table.servable(keep | (1 << j)) {
                forced += 1;
                let flow = self.jobs[j].flow;
                self.forced[flow] += 1;
                if self.drops[flow] + self.forced[flow] == self.budgets[flow].tolerated + 1 {
                    b += 1;
                }
            }
        }
        (b, dropped + forced)
    }
}

pub fn solve_exact(inst: &ExactInstance) -> Result<ExactSolution> {
    let cfg = &inst.cfg;
    cfg.validate()?;
    let deadline = Deadline::after(inst.limits.time_budget);

    let mut maxtimes = Vec::with_capacity(inst.allocations.len());
    for a in &inst.allocations {
        maxtimes.push(compute_maxtime(a, cfg)?);
    }

    let limit = inst.limits.max_allocations.min(HARD_MAX_ALLOCATIONS);
    let count = inst.sla_count();
    if count > limit {
        return Err(Error::InstanceTooLarge { count, limit });
    }

    let mut flow_slots: HashMap<FlowId, usize> = HashMap::new();
    let mut flow_classes: Vec<SlaClass> = Vec::new();
    let mut flow_totals: Vec<u32> = Vec::new();
    let mut jobs = Vec::with_capacity(count);
    for (idx, a) in inst.allocations.iter().enumerate() {
        if a.sla.latency_target_words.is_none() {
            continue;
        }
        let flow = *flow_slots.entry(a.flow_id).or_insert_with(|| {
            flow_classes.push(a.sla);
            flow_totals.push(0);
            flow_classes.len() - 1
        });
        flow_totals[flow] += 1;
        jobs.push(Job {
            alloc: idx,
            release: a.requested_start,
            maxtime: maxtimes[idx],
            size: a.size_words,
            flow,
        });
    }
    let budgets: Vec<FlowBudget> = flow_classes
        .iter()
        .zip(&flow_totals)
        .map(|(sla, &total)| FlowBudget {
            tolerated: sla.tolerated_delays(total),
        })
        .collect();

    let mut starts: Vec<Option<u32>> = vec![None; inst.allocations.len()];
    let mut proven_optimal = false;
    let mut occupancy = Occupancy::new(cfg);

    let table = SubsetTable::build(&jobs, cfg.guard_words, &deadline);
    let optimum = table.as_ref().and_then(|table| {
        let mut search = Search {
            jobs: &jobs,
            budgets: &budgets,
            table,
            deadline: &deadline,
            drops: vec![0; budgets.len()],
            forced: vec![0; budgets.len()],
            best: None,
            nodes: 0,
            timed_out: false,
        };
        search.run(0, 0, 0, 0);
        let timed_out = search.timed_out;
        search.best.map(|(_, keep)| (keep, !timed_out))
    });

    match (table, optimum) {
        (Some(table), Some((keep, complete))) => {
            proven_optimal = complete;
            for (j, start) in table.starts(&jobs, keep, cfg.guard_words) {
                let job = &jobs[j];
                occupancy.insert(start, job.size);
                starts[job.alloc] = Some(start);
            }
        }
        _ => {
            // Out of time: earliest-deadline list schedule as incumbent.
            let mut order: Vec<&Job> = jobs.iter().collect();
            order.sort_by_key(|j| (j.maxtime, j.release, j.alloc));
            for job in order {
                starts[job.alloc] = occupancy.try_place(job.release, job.maxtime, job.size);
            }
        }
    }

    let mut best_effort: Vec<usize> = (0..inst.allocations.len())
        .filter(|&i| inst.allocations[i].sla.latency_target_words.is_none())
        .collect();
    best_effort.sort_by_key(|&i| {
        let a = &inst.allocations[i];
        (a.requested_start, a.flow_id, a.vno_id)
    });
    for i in best_effort {
        let a = &inst.allocations[i];
        starts[i] = occupancy.try_place(a.requested_start, maxtimes[i], a.size_words);
    }

    let grants: Vec<Grant> = inst
        .allocations
        .iter()
        .zip(&starts)
        .map(|(a, s)| match s {
            Some(s) => Grant::scheduled(a, *s),
            None => Grant::dropped(a),
        })
        .collect();
    let packet_breach_flags = grants.iter().map(|g| g.delayed).collect();
    let flow_breaches = metrics::frame_flow_stats(&grants)
        .iter()
        .filter(|f| f.flow_breach)
        .count() as u32;

    Ok(ExactSolution {
        bmap: PhysicalBMap::from_grants(inst.frame_index, grants),
        flow_breaches,
        packet_breach_flags,
        proven_optimal,
    })
}

/// Runs the exact search frame by frame; usable wherever a merging engine is.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    cfg: FrameConfig,
    limits: ExactLimits,
    unproven: usize,
}

impl ExactEngine {
    pub fn new(cfg: FrameConfig, limits: ExactLimits) -> Self {
        Self {
            cfg,
            limits,
            unproven: 0,
        }
    }

    /// Frames whose search ran out of time before proving optimality.
    pub fn unproven_frames(&self) -> usize {
        self.unproven
    }
}

impl MergeEngine for ExactEngine {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn frame_config(&self) -> &FrameConfig {
        &self.cfg
    }

    fn merge(&mut self, vbmaps: &[VirtualBMap]) -> Result<PhysicalBMap> {
        let inst = ExactInstance::from_vbmaps(vbmaps, self.cfg, self.limits)?;
        let sol = solve_exact(&inst)?;
        if !sol.proven_optimal {
            self.unproven += 1;
        }
        Ok(sol.bmap)
    }
}
