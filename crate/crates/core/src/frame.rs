//! Frames, SLA classes, allocation requests and bandwidth maps.
//!
//! Time inside a frame is measured in 4-byte words. A frame always lasts
//! 125 µs; the line rate only changes how many words fit into it.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upstream frame period in microseconds.
pub const FRAME_DURATION_US: f64 = 125.0;

/// Payload words per frame at 9.95328 Gb/s.
pub const DEFAULT_CAPACITY_WORDS: u32 = 38_880;

/// Idle time between two upstream bursts.
pub const GUARD_TIME_US: f64 = 0.1;

pub const TYPE1_LATENCY_US: f64 = 12.5;
pub const TYPE1_ALLOWED_NONCOMPLIANCE: f64 = 0.05;
pub const TYPE2_LATENCY_US: f64 = 25.0;
pub const TYPE2_ALLOWED_NONCOMPLIANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VnoId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl fmt::Display for VnoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub capacity_words: u32,
    pub guard_words: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CAPACITY_WORDS)
    }
}

impl FrameConfig {
    /// A 125 µs frame holding `capacity_words` words, with the guard interval
    /// derived from the guard time at that rate.
    pub fn with_capacity(capacity_words: u32) -> Self {
        let mut cfg = Self {
            capacity_words,
            guard_words: 0,
        };
        cfg.guard_words = words_from_time(GUARD_TIME_US, &cfg);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity_words == 0 {
            return Err(Error::InvalidFrame(
                "capacity_words must be positive".into(),
            ));
        }
        if self.guard_words >= self.capacity_words {
            return Err(Error::InvalidFrame(format!(
                "guard_words ({}) must be smaller than capacity_words ({})",
                self.guard_words, self.capacity_words
            )));
        }
        Ok(())
    }

    pub fn frame_duration_us(&self) -> f64 {
        FRAME_DURATION_US
    }

    pub fn word_duration_us(&self) -> f64 {
        FRAME_DURATION_US / f64::from(self.capacity_words)
    }
}

pub fn words_from_time(t_us: f64, cfg: &FrameConfig) -> u32 {
    debug_assert!(t_us >= 0.0, "negative duration {t_us}");
    (t_us.max(0.0) / cfg.word_duration_us()).round() as u32
}

pub fn time_from_words(words: u32, cfg: &FrameConfig) -> f64 {
    f64::from(words) * cfg.word_duration_us()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaType {
    Type1,
    Type2,
    BestEffort,
}

impl SlaType {
    pub const ALL: [SlaType; 3] = [SlaType::Type1, SlaType::Type2, SlaType::BestEffort];

    pub fn is_sla(self) -> bool {
        !matches!(self, SlaType::BestEffort)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SlaType::Type1 => "type1",
            SlaType::Type2 => "type2",
            SlaType::BestEffort => "best_effort",
        }
    }
}

impl fmt::Display for SlaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Packet- and flow-level breach rule of one service class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaClass {
    pub kind: SlaType,
    /// Largest tolerated delay of a burst, in words. `None` for best effort.
    pub latency_target_words: Option<u32>,
    /// 1 − compliance rate.
    pub allowed_noncompliance: f64,
}

impl SlaClass {
    pub fn new(kind: SlaType, cfg: &FrameConfig) -> Self {
        match kind {
            SlaType::Type1 => Self {
                kind,
                latency_target_words: Some(words_from_time(TYPE1_LATENCY_US, cfg)),
                allowed_noncompliance: TYPE1_ALLOWED_NONCOMPLIANCE,
            },
            SlaType::Type2 => Self {
                kind,
                latency_target_words: Some(words_from_time(TYPE2_LATENCY_US, cfg)),
                allowed_noncompliance: TYPE2_ALLOWED_NONCOMPLIANCE,
            },
            SlaType::BestEffort => Self {
                kind,
                latency_target_words: None,
                allowed_noncompliance: 1.0,
            },
        }
    }

    pub fn type1(cfg: &FrameConfig) -> Self {
        Self::new(SlaType::Type1, cfg)
    }

    pub fn type2(cfg: &FrameConfig) -> Self {
        Self::new(SlaType::Type2, cfg)
    }

    pub fn best_effort() -> Self {
        Self::new(SlaType::BestEffort, &FrameConfig::default())
    }

    /// True when a burst started `delay` words late breaks the packet-level target.
    pub fn is_late(&self, delay: u32) -> bool {
        self.latency_target_words
            .is_some_and(|target| delay > target)
    }

    /// Flow-level rule: breached iff the delayed fraction goes strictly above
    /// the allowed non-compliance.
    pub fn is_flow_breach(&self, delayed: u32, total: u32) -> bool {
        total > 0 && f64::from(delayed) / f64::from(total) > self.allowed_noncompliance
    }

    /// Most delayed bursts out of `total` that stay within the allowance.
    pub fn tolerated_delays(&self, total: u32) -> u32 {
        (0..=total)
            .rev()
            .find(|&d| !self.is_flow_breach(d, total))
            .unwrap_or(0)
    }
}

/// One upstream burst proposed by a VNO's scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRequest {
    pub vno_id: VnoId,
    pub flow_id: FlowId,
    pub requested_start: u32,
    pub size_words: u32,
    pub sla: SlaClass,
}

impl AllocationRequest {
    pub fn requested_end(&self) -> u32 {
        self.requested_start + self.size_words
    }

    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        let invalid = |reason: String| Error::InvalidAllocation {
            vno_id: self.vno_id,
            flow_id: self.flow_id,
            reason,
        };
        if self.size_words == 0 {
            return Err(invalid("size_words must be positive".into()));
        }
        if u64::from(self.requested_start) + u64::from(self.size_words)
            > u64::from(cfg.capacity_words)
        {
            return Err(invalid(format!(
                "burst [{}, {}) runs past the {}-word frame",
                self.requested_start,
                u64::from(self.requested_start) + u64::from(self.size_words),
                cfg.capacity_words
            )));
        }
        Ok(())
    }
}

/// Latest start that keeps `alloc` inside its latency target and the frame.
pub fn compute_maxtime(alloc: &AllocationRequest, cfg: &FrameConfig) -> Result<u32> {
    if alloc.size_words > cfg.capacity_words {
        return Err(Error::Unschedulable {
            size_words: alloc.size_words,
            capacity_words: cfg.capacity_words,
        });
    }
    let frame_bound = cfg.capacity_words - alloc.size_words;
    Ok(match alloc.sla.latency_target_words {
        Some(target) => alloc
            .requested_start
            .saturating_add(target)
            .min(frame_bound),
        None => frame_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualBMap {
    pub vno_id: VnoId,
    pub frame_index: u64,
    pub allocations: Vec<AllocationRequest>,
}

impl VirtualBMap {
    pub fn new(vno_id: VnoId, frame_index: u64) -> Self {
        Self {
            vno_id,
            frame_index,
            allocations: Vec::new(),
        }
    }

    /// Checks bounds, ownership and guard-separated non-overlap of the proposal.
    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        for a in &self.allocations {
            a.validate(cfg)?;
            if a.vno_id != self.vno_id {
                return Err(Error::InvalidAllocation {
                    vno_id: a.vno_id,
                    flow_id: a.flow_id,
                    reason: format!("listed in the bandwidth map of vno {}", self.vno_id),
                });
            }
        }
        let mut sorted: Vec<&AllocationRequest> = self.allocations.iter().collect();
        sorted.sort_by_key(|a| a.requested_start);
        for pair in sorted.windows(2) {
            if pair[0].requested_end() + cfg.guard_words > pair[1].requested_start {
                return Err(Error::InvalidAllocation {
                    vno_id: pair[1].vno_id,
                    flow_id: pair[1].flow_id,
                    reason: format!(
                        "starts at {} but the previous burst ends at {} (guard {})",
                        pair[1].requested_start,
                        pair[0].requested_end(),
                        cfg.guard_words
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Outcome of one allocation request in the physical map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grant {
    pub flow_id: FlowId,
    pub vno_id: VnoId,
    /// `None` when the request was dropped for this frame.
    pub start: Option<u32>,
    pub size_words: u32,
    pub origin_requested_start: u32,
    pub sla: SlaClass,
    /// Packet-level breach: started past the latency target, or dropped.
    pub delayed: bool,
}

impl Grant {
    pub fn scheduled(req: &AllocationRequest, start: u32) -> Self {
        Self {
            flow_id: req.flow_id,
            vno_id: req.vno_id,
            start: Some(start),
            size_words: req.size_words,
            origin_requested_start: req.requested_start,
            sla: req.sla,
            delayed: req.sla.is_late(start.saturating_sub(req.requested_start)),
        }
    }

    pub fn dropped(req: &AllocationRequest) -> Self {
        Self {
            flow_id: req.flow_id,
            vno_id: req.vno_id,
            start: None,
            size_words: req.size_words,
            origin_requested_start: req.requested_start,
            sla: req.sla,
            delayed: true,
        }
    }

    pub fn is_dropped(&self) -> bool {
        self.start.is_none()
    }

    pub fn end(&self) -> Option<u32> {
        self.start.map(|s| s + self.size_words)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhysicalBMap {
    pub frame_index: u64,
    /// Scheduled grants sorted by start, followed by dropped ones.
    pub grants: Vec<Grant>,
}

impl PhysicalBMap {
    /// Orders grants as the physical map expects: scheduled by start, then dropped.
    pub fn from_grants(frame_index: u64, mut grants: Vec<Grant>) -> Self {
        grants.sort_by_key(|g| (g.start.is_none(), g.start));
        Self {
            frame_index,
            grants,
        }
    }

    pub fn scheduled(&self) -> impl Iterator<Item = &Grant> {
        self.grants.iter().filter(|g| !g.is_dropped())
    }

    pub fn dropped(&self) -> impl Iterator<Item = &Grant> {
        self.grants.iter().filter(|g| g.is_dropped())
    }

    pub fn scheduled_words(&self) -> u64 {
        self.scheduled().map(|g| u64::from(g.size_words)).sum()
    }
}

/// A broken invariant of a physical bandwidth map. Indices refer to `grants`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Overlap {
        first: usize,
        second: usize,
    },
    GuardSpacing {
        first: usize,
        second: usize,
        gap: u32,
    },
    OutOfBounds {
        index: usize,
    },
    EarlyStart {
        index: usize,
    },
    Duplicate {
        first: usize,
        second: usize,
    },
    Unsorted {
        index: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap { first, second } => {
                write!(f, "grants {first} and {second} overlap")
            }
            Violation::GuardSpacing { first, second, gap } => {
                write!(f, "grants {first} and {second} are only {gap} words apart")
            }
            Violation::OutOfBounds { index } => write!(f, "grant {index} leaves the frame"),
            Violation::EarlyStart { index } => {
                write!(f, "grant {index} starts before its requested start")
            }
            Violation::Duplicate { first, second } => {
                write!(f, "grants {first} and {second} answer the same request")
            }
            Violation::Unsorted { index } => {
                write!(f, "grant {index} is out of start order")
            }
        }
    }
}

/// Lists every broken invariant of `bmap`; an empty list means the map is valid.
pub fn validate_physical_bmap(bmap: &PhysicalBMap, cfg: &FrameConfig) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = HashSet::with_capacity(bmap.grants.len());
    let mut first_by_key = std::collections::HashMap::with_capacity(bmap.grants.len());
    let mut order: Vec<usize> = Vec::with_capacity(bmap.grants.len());
    let mut dropped_seen = false;

    for (i, g) in bmap.grants.iter().enumerate() {
        let key = (g.vno_id, g.flow_id, g.origin_requested_start);
        if !seen.insert(key) {
            violations.push(Violation::Duplicate {
                first: first_by_key[&key],
                second: i,
            });
        } else {
            first_by_key.insert(key, i);
        }
        match g.start {
            None => dropped_seen = true,
            Some(start) => {
                if dropped_seen {
                    violations.push(Violation::Unsorted { index: i });
                }
                if u64::from(start) + u64::from(g.size_words) > u64::from(cfg.capacity_words) {
                    violations.push(Violation::OutOfBounds { index: i });
                }
                if start < g.origin_requested_start {
                    violations.push(Violation::EarlyStart { index: i });
                }
                if let Some(&prev) = order.last() {
                    if bmap.grants[prev].start > g.start {
                        violations.push(Violation::Unsorted { index: i });
                    }
                }
                order.push(i);
            }
        }
    }

    order.sort_by_key(|&i| bmap.grants[i].start);
    // Compare each grant with the furthest-reaching one before it.
    let mut reach: Option<usize> = None;
    for &i in &order {
        let g = &bmap.grants[i];
        let start = u64::from(g.start.unwrap_or(0));
        if let Some(r) = reach {
            let prev_end =
                u64::from(bmap.grants[r].start.unwrap_or(0)) + u64::from(bmap.grants[r].size_words);
            if start < prev_end {
                violations.push(Violation::Overlap {
                    first: r,
                    second: i,
                });
            } else if start < prev_end + u64::from(cfg.guard_words) {
                violations.push(Violation::GuardSpacing {
                    first: r,
                    second: i,
                    gap: (start - prev_end) as u32,
                });
            }
        }
        let end = start + u64::from(g.size_words);
        let keep = reach.is_some_and(|r| {
            u64::from(bmap.grants[r].start.unwrap_or(0)) + u64::from(bmap.grants[r].size_words)
                >= end
        });
        if !keep {
            reach = Some(i);
        }
    }
    violations
}
