//! Experiment configuration files.
//!
//! A config is a JSON object; every key is optional and unknown keys are
//! rejected:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "preset": "paper-heuristic",
//!   "schedulers": ["heuristic", "stateless", "exact"],
//!   "frames": 1000,
//!   "scenarios": [{ "load_fraction": 0.5, "burst_class": "medium" }],
//!   "grid": { "load_fractions": [0.2, 0.9], "sla_shares": [0.1, 0.5] },
//!   "out_dir": "results",
//!   "jobs": 4,
//!   "timing": false,
//!   "exact": { "sample_frames": 20, "max_allocations": 12, "time_budget_ms": 2000 }
//! }
//! ```
//!
//! `scenarios` entries take any [`ScenarioConfig`] field; missing fields keep
//! their defaults. Each entry is crossed with every axis present in `grid`.
//! `{"seed": 1}` alone runs one default scenario through the heuristic and
//! the stateless baseline.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::engine::SchedulerKind;
use crate::frame::FrameConfig;
use crate::oracle::{ExactLimits, DEFAULT_MAX_ALLOCATIONS, HARD_MAX_ALLOCATIONS};
use crate::trafficgen::{BurstClass, ScenarioConfig};

pub const PRESETS: [&str; 3] = ["paper-heuristic", "paper-stateless", "paper-exact"];
pub const GRID_LOADS: [f64; 3] = [0.2, 0.5, 0.9];
pub const GRID_SHARES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_SAMPLE_FRAMES: usize = 20;
pub const DEFAULT_OUT_DIR: &str = "vdba-out";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub schedulers: Option<Vec<SchedulerKind>>,
    pub frames: Option<u64>,
    pub scenarios: Option<Vec<ScenarioPatch>>,
    pub grid: Option<Grid>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub timing: Option<bool>,
    pub exact: Option<ExactSettings>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioPatch {
    pub num_vnos: Option<u32>,
    pub load_fraction: Option<f64>,
    pub sla_share: Option<f64>,
    pub burst_class: Option<BurstClass>,
    pub sla_mix: Option<f64>,
    pub flows_per_vno: Option<u32>,
    pub frames: Option<u64>,
    pub seed: Option<u64>,
    pub frame: Option<FrameConfig>,
}

impl ScenarioPatch {
    fn apply(&self, mut base: ScenarioConfig) -> ScenarioConfig {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { base.$field = v; })*
            };
        }
        set!(
            num_vnos,
            load_fraction,
            sla_share,
            burst_class,
            sla_mix,
            flows_per_vno,
            frames,
            seed,
            frame
        );
        base
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub load_fractions: Option<Vec<f64>>,
    pub sla_shares: Option<Vec<f64>>,
    pub burst_classes: Option<Vec<BurstClass>>,
}

impl Grid {
    pub fn standard() -> Self {
        Self {
            load_fractions: Some(GRID_LOADS.to_vec()),
            sla_shares: Some(GRID_SHARES.to_vec()),
            burst_classes: Some(BurstClass::ALL.to_vec()),
        }
    }

    fn expand(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let loads = self
            .load_fractions
            .clone()
            .unwrap_or_else(|| vec![base.load_fraction]);
        let bursts = self
            .burst_classes
            .clone()
            .unwrap_or_else(|| vec![base.burst_class]);
        let shares = self
            .sla_shares
            .clone()
            .unwrap_or_else(|| vec![base.sla_share]);
        let mut out = Vec::with_capacity(loads.len() * bursts.len() * shares.len());
        for &load_fraction in &loads {
            for &burst_class in &bursts {
                for &sla_share in &shares {
                    out.push(ScenarioConfig {
                        load_fraction,
                        burst_class,
                        sla_share,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSettings {
    /// Frames solved per exact job when the run is longer than this.
    pub sample_frames: usize,
    pub max_allocations: usize,
    pub time_budget_ms: u64,
}

impl Default for ExactSettings {
    fn default() -> Self {
        Self {
            sample_frames: DEFAULT_SAMPLE_FRAMES,
            max_allocations: DEFAULT_MAX_ALLOCATIONS,
            time_budget_ms: 2_000,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub preset: Option<String>,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub scenario: ScenarioConfig,
    pub scheduler: SchedulerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactSampling {
    pub sample_frames: usize,
    pub limits: ExactLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub jobs: Vec<Job>,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// Fill the timing columns of the CSV. Off by default so reruns are byte-identical.
    pub timing: bool,
    pub exact: ExactSampling,
}

impl RunManifest {
    pub fn empty(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            jobs: Vec::new(),
            out_dir: out_dir.into(),
            parallelism: 1,
            timing: false,
            exact: ExactSampling {
                sample_frames: DEFAULT_SAMPLE_FRAMES,
                limits: ExactLimits::default(),
            },
        }
    }
}

fn preset_scheduler(name: &str) -> Result<SchedulerKind, CliError> {
    match name {
        "paper-heuristic" => Ok(SchedulerKind::Heuristic),
        "paper-stateless" => Ok(SchedulerKind::Stateless),
        "paper-exact" => Ok(SchedulerKind::Exact),
        other => Err(CliError::UnknownPreset(other.to_string())),
    }
}

/// Reads and expands a config file.
pub fn parse_config(path: &Path) -> Result<RunManifest, CliError> {
    load_manifest(Some(path), &Overrides::default())
}

/// Builds a manifest from an optional file plus command-line overrides.
pub fn load_manifest(path: Option<&Path>, overrides: &Overrides) -> Result<RunManifest, CliError> {
    match path {
        Some(path) => {
            let source = read_source(path)?;
            let file = parse_source(path, &source)?;
            build_manifest(
                file,
                overrides,
                &Source::File {
                    path,
                    text: &source,
                },
            )
        }
        None => build_manifest(ConfigFile::default(), overrides, &Source::CommandLine),
    }
}

fn read_source(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => CliError::NotFound {
            path: path.to_path_buf(),
        },
        _ => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

pub fn parse_source(path: &Path, source: &str) -> Result<ConfigFile, CliError> {
    serde_json::from_str(source).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        let message = strip_position(&e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => CliError::Schema {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
            _ => CliError::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
        }
    })
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

/// Where values came from, for locating range errors.
pub enum Source<'a> {
    File { path: &'a Path, text: &'a str },
    CommandLine,
}

impl Source<'_> {
    fn locate(&self, field: &str, value: f64) -> String {
        match self {
            Source::CommandLine => "command line".to_string(),
            Source::File { path, text } => match find_key_line(text, field, value) {
                Some(line) => format!("{}:{line}", path.display()),
                None => path.display().to_string(),
            },
        }
    }
}

/// 1-based line of the first `"field": value` whose value equals `value`,
/// falling back to the first mention of the key.
fn find_key_line(text: &str, field: &str, value: f64) -> Option<usize> {
    let key = format!("\"{field}\"");
    let mut first = None;
    for (i, line) in text.lines().enumerate() {
        let mut rest = line;
        while let Some(pos) = rest.find(&key) {
            first.get_or_insert(i + 1);
            let after = rest[pos + key.len()..].trim_start();
            if let Some(after) = after.strip_prefix(':') {
                let number: String = after
                    .trim_start()
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
                    .collect();
                if number.parse::<f64>().is_ok_and(|v| v == value) {
                    return Some(i + 1);
                }
            }
            rest = &rest[pos + key.len()..];
        }
    }
    first
}

fn range_error(source: &Source, field: &str, value: f64, constraint: &str) -> CliError {
    CliError::Range {
        location: source.locate(field, value),
        field: field.to_string(),
        value: value.to_string(),
        constraint: constraint.to_string(),
    }
}

fn check_scenario(s: &ScenarioConfig, source: &Source) -> Result<(), CliError> {
    let fail = |field: &str, value: f64, constraint: &str| {
        Err(range_error(source, field, value, constraint))
    };
    if !(s.load_fraction > 0.0 && s.load_fraction <= 1.0) {
        return fail("load_fraction", s.load_fraction, "must lie in (0, 1]");
    }
    if !(0.0..=1.0).contains(&s.sla_share) {
        return fail("sla_share", s.sla_share, "must lie in [0, 1]");
    }
    if !(0.0..=1.0).contains(&s.sla_mix) {
        return fail("sla_mix", s.sla_mix, "must lie in [0, 1]");
    }
    if s.num_vnos == 0 {
        return fail("num_vnos", 0.0, "must be at least 1");
    }
    if s.flows_per_vno == 0 {
        return fail("flows_per_vno", 0.0, "must be at least 1");
    }
    if s.frame.capacity_words == 0 {
        return fail("capacity_words", 0.0, "must be positive");
    }
    if s.frame.guard_words >= s.frame.capacity_words {
        return fail(
            "guard_words",
            f64::from(s.frame.guard_words),
            "must be smaller than capacity_words",
        );
    }
    if s.burst_words() > s.frame.capacity_words {
        return fail(
            "capacity_words",
            f64::from(s.frame.capacity_words),
            &format!(
                "cannot hold one {} burst of {} words",
                s.burst_class,
                s.burst_words()
            ),
        );
    }
    Ok(())
}

pub fn build_manifest(
    file: ConfigFile,
    overrides: &Overrides,
    source: &Source,
) -> Result<RunManifest, CliError> {
    let preset = overrides.preset.clone().or(file.preset.clone());
    let preset_kind = preset.as_deref().map(preset_scheduler).transpose()?;

    let schedulers = file
        .schedulers
        .clone()
        .or_else(|| preset_kind.map(|k| vec![k]))
        .unwrap_or_else(|| vec![SchedulerKind::Heuristic, SchedulerKind::Stateless]);
    let grid = file
        .grid
        .clone()
        .or_else(|| preset_kind.map(|_| Grid::standard()));

    let base = ScenarioConfig {
        seed: file.seed.unwrap_or(0),
        frames: file.frames.unwrap_or(ScenarioConfig::default().frames),
        ..ScenarioConfig::default()
    };
    let patches = file
        .scenarios
        .clone()
        .unwrap_or_else(|| vec![ScenarioPatch::default()]);
    let mut scenarios = Vec::new();
    for patch in &patches {
        let mut scenario = patch.apply(base.clone());
        if let Some(seed) = overrides.seed {
            scenario.seed = seed;
        }
        match &grid {
            Some(grid) => scenarios.extend(grid.expand(&scenario)),
            None => scenarios.push(scenario),
        }
    }
    for s in &scenarios {
        check_scenario(s, source)?;
    }

    let exact = file.exact.clone().unwrap_or_default();
    if exact.sample_frames == 0 {
        return Err(range_error(
            source,
            "sample_frames",
            0.0,
            "must be at least 1",
        ));
    }
    if !(1..=HARD_MAX_ALLOCATIONS).contains(&exact.max_allocations) {
        return Err(range_error(
            source,
            "max_allocations",
            exact.max_allocations as f64,
            &format!("must lie in [1, {HARD_MAX_ALLOCATIONS}]"),
        ));
    }

    let parallelism = match overrides.jobs.or(file.jobs) {
        Some(0) => return Err(range_error(source, "jobs", 0.0, "must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    let jobs = schedulers
        .iter()
        .flat_map(|&scheduler| {
            scenarios.iter().map(move |scenario| Job {
                scenario: scenario.clone(),
                scheduler,
            })
        })
        .collect();

    Ok(RunManifest {
        jobs,
        out_dir: overrides
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        parallelism,
        timing: overrides.timing || file.timing.unwrap_or(false),
        exact: ExactSampling {
            sample_frames: exact.sample_frames,
            limits: ExactLimits {
                max_allocations: exact.max_allocations,
                time_budget: Duration::from_millis(exact.time_budget_ms),
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(text: &str) -> Result<RunManifest, CliError> {
        let path = Path::new("test.json");
        let file = parse_source(path, text)?;
        build_manifest(file, &Overrides::default(), &Source::File { path, text })
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let m = manifest(r#"{"seed": 3}"#).unwrap();
        assert_eq!(m.jobs.len(), 2);
        let expected = ScenarioConfig {
            seed: 3,
            ..ScenarioConfig::default()
        };
        assert_eq!(m.jobs[0].scenario, expected);
        assert_eq!(m.jobs[0].scheduler, SchedulerKind::Heuristic);
        assert_eq!(m.jobs[1].scheduler, SchedulerKind::Stateless);
        assert_eq!(m.exact.sample_frames, 20);
        assert!(!m.timing);
    }

    #[test]
    fn out_of_range_load_names_the_line() {
        let text = "{\n  \"scenarios\": [\n    {\"load_fraction\": 0.5},\n    {\"load_fraction\": 1.5}\n  ]\n}";
        match manifest(text) {
            Err(CliError::Range {
                location, field, ..
            }) => {
                assert_eq!(field, "load_fraction");
                assert_eq!(location, "test.json:4");
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_schema_error() {
        match manifest("{\n  \"sede\": 1\n}") {
            Err(CliError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
        assert!(matches!(
            manifest(r#"{"scenarios": [{"load": 0.5}]}"#),
            Err(CliError::Schema { .. })
        ));
        assert!(matches!(
            manifest(r#"{"seed": "x"}"#),
            Err(CliError::Schema { .. })
        ));
    }

    #[test]
    fn broken_json_is_a_parse_error() {
        match manifest("{\n  \"seed\": 1,\n}") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn presets_expand_to_the_full_grid() {
        for (preset, kind) in PRESETS.iter().zip([
            SchedulerKind::Heuristic,
            SchedulerKind::Stateless,
            SchedulerKind::Exact,
        ]) {
            let m = manifest(&format!(r#"{{"preset": "{preset}"}}"#)).unwrap();
            assert_eq!(m.jobs.len(), 81);
            assert!(m
                .jobs
                .iter()
                .all(|j| j.scheduler == kind && j.scenario.frames == 1_000));
        }
        assert!(matches!(
            manifest(r#"{"preset": "paper-milp"}"#),
            Err(CliError::UnknownPreset(_))
        ));
    }

    #[test]
    fn command_line_wins() {
        let path = Path::new("c.json");
        let text = r#"{"seed": 1, "jobs": 3, "out_dir": "a", "scenarios": [{"seed": 9}]}"#;
        let file = parse_source(path, text).unwrap();
        let overrides = Overrides {
            seed: Some(5),
            out_dir: Some("b".into()),
            jobs: Some(2),
            preset: None,
            timing: true,
        };
        let m = build_manifest(file, &overrides, &Source::File { path, text }).unwrap();
        assert!(m.jobs.iter().all(|j| j.scenario.seed == 5));
        assert_eq!(m.out_dir, PathBuf::from("b"));
        assert_eq!(m.parallelism, 2);
        assert!(m.timing);
    }

    #[test]
    fn grid_crosses_scenarios() {
        let m = manifest(
            r#"{"schedulers": ["exact"], "scenarios": [{"frames": 5}, {"frames": 6}],
                "grid": {"sla_shares": [0.1, 0.2, 0.3]}}"#,
        )
        .unwrap();
        assert_eq!(m.jobs.len(), 6);
        assert_eq!(m.jobs[3].scenario.frames, 6);
        assert_eq!(m.jobs[4].scenario.sla_share, 0.2);
    }

    #[test]
    fn exact_limits_are_checked() {
        assert!(matches!(
            manifest(r#"{"exact": {"max_allocations": 40}}"#),
            Err(CliError::Range { .. })
        ));
        assert!(matches!(
            manifest(r#"{"exact": {"sample_frames": 0}}"#),
            Err(CliError::Range { .. })
        ));
        assert!(matches!(
            manifest(r#"{"jobs": 0}"#),
            Err(CliError::Range { .. })
        ));
    }
}
