//! Seeded synthetic vBMap workloads.
//!
//! Every frame carries `round(load × capacity / burst)` equal-size bursts,
//! dealt round-robin over the VNOs. Each burst draws a rank; the lowest
//! `sla_share` of ranks become SLA bursts (alternating type-1 / type-2 by
//! rank, weighted by `sla_mix`), the rest best effort. Raising the share with
//! the same seed therefore only relabels best-effort bursts, never moves one.
//!
//! Flows are fixed for the whole run. Flow `k` of VNO `v` has global index
//! `v × flows_per_vno + k` and takes its class from the repeating pattern
//! type-1, type-2, best effort, best effort.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{AllocationRequest, FlowId, FrameConfig, SlaClass, SlaType, VirtualBMap, VnoId};
use crate::placement::Occupancy;

const FLOW_PATTERN: [SlaType; 4] = [
    SlaType::Type1,
    SlaType::Type2,
    SlaType::BestEffort,
    SlaType::BestEffort,
];

/// Uniform re-draws before falling back to earliest fit inside the vBMap.
pub const MAX_REDRAWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstClass {
    /// 1.3 KB
    Small,
    /// 4.7 KB
    Medium,
    /// 9.5 KB
    Large,
}

impl BurstClass {
    pub const ALL: [BurstClass; 3] = [BurstClass::Small, BurstClass::Medium, BurstClass::Large];

    pub fn bytes(self) -> u32 {
        match self {
            BurstClass::Small => 1_300,
            BurstClass::Medium => 4_700,
            BurstClass::Large => 9_500,
        }
    }

    pub fn words(self) -> u32 {
        self.bytes() / 4
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BurstClass::Small => "small",
            BurstClass::Medium => "medium",
            BurstClass::Large => "large",
        }
    }
}

impl std::fmt::Display for BurstClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub num_vnos: u32,
    pub load_fraction: f64,
    pub sla_share: f64,
    pub burst_class: BurstClass,
    /// Share of SLA bursts that are type-1.
    pub sla_mix: f64,
    pub flows_per_vno: u32,
    pub frames: u64,
    pub seed: u64,
    pub frame: FrameConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_vnos: 5,
            load_fraction: 0.9,
            sla_share: 0.5,
            burst_class: BurstClass::Small,
            sla_mix: 0.5,
            flows_per_vno: 4,
            frames: 1_000,
            seed: 0,
            frame: FrameConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        self.frame.validate()?;
        if self.num_vnos == 0 {
            return bad("num_vnos must be at least 1".into());
        }
        if self.flows_per_vno == 0 {
            return bad("flows_per_vno must be at least 1".into());
        }
        if !(self.load_fraction > 0.0 && self.load_fraction <= 1.0) {
            return bad(format!(
                "load_fraction {} is outside (0, 1]",
                self.load_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.sla_share) {
            return bad(format!("sla_share {} is outside [0, 1]", self.sla_share));
        }
        if !(0.0..=1.0).contains(&self.sla_mix) {
            return bad(format!("sla_mix {} is outside [0, 1]", self.sla_mix));
        }
        if self.burst_class.words() > self.frame.capacity_words {
            return bad(format!(
                "{} bursts ({} words) exceed the {}-word frame",
                self.burst_class,
                self.burst_class.words(),
                self.frame.capacity_words
            ));
        }
        Ok(())
    }

    pub fn burst_words(&self) -> u32 {
        self.burst_class.words()
    }

    /// Bursts per frame that bring the requested payload closest to the load target.
    pub fn bursts_per_frame(&self) -> usize {
        (self.load_fraction * f64::from(self.frame.capacity_words) / f64::from(self.burst_words()))
            .round() as usize
    }

    pub fn target_words(&self) -> f64 {
        self.load_fraction * f64::from(self.frame.capacity_words)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFrame {
    pub frame_index: u64,
    pub vbmaps: Vec<VirtualBMap>,
    /// Class of every allocation, in vBMap order.
    pub truth: Vec<SlaType>,
}

impl GeneratedFrame {
    pub fn allocations(&self) -> impl Iterator<Item = &AllocationRequest> {
        self.vbmaps.iter().flat_map(|vb| vb.allocations.iter())
    }

    pub fn requested_words(&self) -> u64 {
        self.allocations().map(|a| u64::from(a.size_words)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    pub vno_id: VnoId,
    pub sla: SlaClass,
}

/// Frame generator for one scenario. Frames are independent of each other
/// and of generation order.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: ScenarioConfig,
    flows: Vec<FlowSpec>,
}

/// Seed of an independent stream for `(seed, lane)`.
fn lane_seed(seed: u64, lane: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn frame_rng(seed: u64, lane: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, lane));
    rng.set_stream(frame_index);
    rng
}

impl Generator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let per_vno = cfg.flows_per_vno;
        let flows = (0..cfg.num_vnos)
            .flat_map(|v| (0..per_vno).map(move |k| (v, k)))
            .map(|(v, k)| {
                let g = v * per_vno + k;
                FlowSpec {
                    flow_id: FlowId(g),
                    vno_id: VnoId(v),
                    sla: SlaClass::new(FLOW_PATTERN[g as usize % FLOW_PATTERN.len()], &cfg.frame),
                }
            })
            .collect();
        Ok(Self { cfg, flows })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    fn class_counts(&self, n: usize) -> [usize; 3] {
        let n_sla = (self.cfg.sla_share * n as f64).round() as usize;
        let n1 = (self.cfg.sla_mix * n_sla as f64).round() as usize;
        [n1, n_sla - n1, n - n_sla]
    }

    /// Class of each burst given its rank position among all bursts.
    fn labels(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<SlaType> {
        let ranks: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut by_rank: Vec<usize> = (0..n).collect();
        by_rank.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]));

        let [n1, n2, _] = self.class_counts(n);
        let mut labels = vec![SlaType::BestEffort; n];
        // Interleave the two SLA types over the lowest ranks in proportion.
        let (mut t1, mut t2) = (0usize, 0usize);
        for &burst in by_rank.iter().take(n1 + n2) {
            let take_t1 =
                t2 >= n2 || (t1 < n1 && (t1 as u64 * n2 as u64) <= (t2 as u64 * n1 as u64));
            if take_t1 {
                labels[burst] = SlaType::Type1;
                t1 += 1;
            } else {
                labels[burst] = SlaType::Type2;
                t2 += 1;
            }
        }
        labels
    }

    pub fn frame(&self, frame_index: u64) -> Result<GeneratedFrame> {
        let cfg = &self.cfg;
        let frame = &cfg.frame;
        let size = cfg.burst_words();
        let vnos = cfg.num_vnos as usize;
        let n = cfg.bursts_per_frame();

        let mut label_rng = frame_rng(cfg.seed, 0, frame_index);
        let labels = self.labels(n, &mut label_rng);

        // Deal bursts to VNOs, then to a flow of the right class.
        let mut per_vno: Vec<Vec<(FlowSpec, SlaType)>> = vec![Vec::new(); vnos];
        let mut cursor = vec![[0usize; 3]; vnos];
        let mut global_cursor = [0usize; 3];
        for (i, &label) in labels.iter().enumerate() {
            let class = label as usize;
            let v = i % vnos;
            let local: Vec<&FlowSpec> = self
                .flows
                .iter()
                .filter(|f| f.vno_id.0 as usize == v && f.sla.kind == label)
                .collect();
            let flow = if local.is_empty() {
                let global: Vec<&FlowSpec> =
                    self.flows.iter().filter(|f| f.sla.kind == label).collect();
                if global.is_empty() {
                    return Err(Error::Generation {
                        frame_index,
                        constraint: format!("no {label} flow exists to carry {label} bursts"),
                    });
                }
                let f = *global[global_cursor[class] % global.len()];
                global_cursor[class] += 1;
                f
            } else {
                let f = *local[cursor[v][class] % local.len()];
                cursor[v][class] += 1;
                f
            };
            per_vno[flow.vno_id.0 as usize].push((flow, label));
        }

        let latest = frame.capacity_words - size;
        let mut vbmaps = Vec::with_capacity(vnos);
        let mut truth = Vec::with_capacity(n);
        for (v, bursts) in per_vno.into_iter().enumerate() {
            let k = bursts.len() as u64;
            let needed = k * u64::from(size) + k.saturating_sub(1) * u64::from(frame.guard_words);
            if needed > u64::from(frame.capacity_words) {
                return Err(Error::Generation {
                    frame_index,
                    constraint: format!(
                        "vno {v} needs {k} bursts of {size} words plus {}-word guards ({needed} words) in a {}-word frame",
                        frame.guard_words, frame.capacity_words
                    ),
                });
            }
            let mut rng = frame_rng(cfg.seed, v as u64 + 1, frame_index);
            let mut occupancy = Occupancy::new(frame);
            let mut allocations = Vec::with_capacity(bursts.len());
            for (flow, label) in bursts {
                let mut start = None;
                for _ in 0..MAX_REDRAWS {
                    let s = rng.random_range(0..=latest);
                    if occupancy.is_free(s, size) {
                        start = Some(s);
                        break;
                    }
                }
                let start = start
                    .or_else(|| occupancy.first_fit(0, latest, size))
                    .ok_or_else(|| Error::Generation {
                        frame_index,
                        constraint: format!(
                            "vno {v} has no gap of {size} words left after guard spacing"
                        ),
                    })?;
                occupancy.insert(start, size);
                allocations.push((
                    AllocationRequest {
                        vno_id: VnoId(v as u32),
                        flow_id: flow.flow_id,
                        requested_start: start,
                        size_words: size,
                        sla: flow.sla,
                    },
                    label,
                ));
            }
            allocations.sort_by_key(|(a, _)| a.requested_start);
            truth.extend(allocations.iter().map(|(_, l)| *l));
            vbmaps.push(VirtualBMap {
                vno_id: VnoId(v as u32),
                frame_index,
                allocations: allocations.into_iter().map(|(a, _)| a).collect(),
            });
        }
        Ok(GeneratedFrame {
            frame_index,
            vbmaps,
            truth,
        })
    }

    pub fn run(&self) -> impl Iterator<Item = Result<GeneratedFrame>> + '_ {
        (0..self.cfg.frames).map(move |i| self.frame(i))
    }
}

pub fn generate_frame(cfg: &ScenarioConfig, frame_index: u64) -> Result<GeneratedFrame> {
    Generator::new(cfg.clone())?.frame(frame_index)
}

pub fn generate_run(cfg: &ScenarioConfig) -> Result<Vec<GeneratedFrame>> {
    let generator = Generator::new(cfg.clone())?;
    generator.run().collect()
}
