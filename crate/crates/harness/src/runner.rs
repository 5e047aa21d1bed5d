use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use noisefield_core::action::{self, ActionConfig, Method};
use noisefield_core::crowd::{self, CrowdConfig, MotionPolicy, Scale};
use noisefield_core::metrics::MetricReport;
use noisefield_core::noise::SeedBundle;
use noisefield_core::spawn::{self, PolicyKind, SpawnConfig};
use noisefield_core::worldgen::{generate_world, GeneratedWorld, WorldTemplate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{flatten, with_overrides, Direction, ExperimentConfig, SweepPoint, VERSION};
use crate::HarnessError;

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub direction: Direction,
    pub method: String,
    pub scale: Scale,
    pub seed: u64,
    pub point: SweepPoint,
    /// Config overrides followed by the sweep point's settings.
    pub overrides: Vec<(String, toml::Value)>,
}

impl RunSpec {
    pub fn new(direction: Direction, method: &str, scale: Scale, seed: u64) -> Self {
        Self { direction, method: method.to_string(), scale, seed, point: SweepPoint::default(), overrides: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.overrides.push((key.to_string(), value.into()));
        self
    }

    /// `<point>/<method>/<scale>/seed_<n>` below the batch root.
    pub fn relative_dir(&self) -> PathBuf {
        let method = Path::new(&self.method).file_stem().map_or(self.method.clone(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(self.point.label()).join(method).join(self.scale.name()).join(format!("seed_{}", self.seed))
    }

    fn split_policy(&self) -> (Vec<(String, toml::Value)>, Vec<(String, toml::Value)>) {
        let (policy, rest): (Vec<_>, Vec<_>) = self.overrides.iter().cloned().partition(|(k, _)| k.starts_with("policy."));
        let policy = policy.into_iter().map(|(k, v)| (k["policy.".len()..].to_string(), v)).collect();
        (policy, rest)
    }
}

/// Deterministic metrics plus the separately kept wall-clock timing.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricReport,
    pub timing: MetricReport,
}

pub fn crowd_config(spec: &RunSpec) -> Result<(CrowdConfig, MotionPolicy), HarnessError> {
    let (policy, rest) = spec.split_policy();
    let cfg = with_overrides(&CrowdConfig::scale(spec.scale), &rest)?;
    let pol = with_overrides(&MotionPolicy::by_name(&spec.method)?, &policy)?;
    Ok((cfg, pol))
}

pub fn action_config(spec: &RunSpec) -> Result<ActionConfig, HarnessError> {
    with_overrides(&ActionConfig::scale(spec.scale), &spec.overrides)
}

pub fn spawn_config(spec: &RunSpec) -> Result<SpawnConfig, HarnessError> {
    with_overrides(&SpawnConfig::scale(spec.scale), &spec.overrides)
}

/// Built-in template by name, or a template file when `method` is a path.
pub fn template(spec: &RunSpec) -> Result<WorldTemplate, HarnessError> {
    let base = if spec.method.ends_with(".toml") {
        WorldTemplate::from_toml(&fs::read_to_string(&spec.method)?)?
    } else {
        WorldTemplate::builtin(&spec.method)?
    };
    let t = with_overrides(&base, &spec.overrides)?;
    t.validate()?;
    Ok(t)
}

pub fn world_metrics(w: &GeneratedWorld) -> MetricReport {
    let mut r = MetricReport::default();
    r.set("histogram_error", Some(w.histogram_error()));
    let margin = w
        .classes
        .iter()
        .filter_map(|c| c.min_spacing.filter(|_| c.radius > 0.0).map(|d| d / c.radius))
        .fold(f64::INFINITY, f64::min);
    r.set("spacing_ratio_min", margin.is_finite().then_some(margin));
    r.set("points", Some(w.points.len() as f64));
    r.set("shortfall", Some(w.classes.iter().map(|c| c.shortfall).sum::<usize>() as f64));
    r.set("mask_violations", Some(w.mask_violations() as f64));
    r.set("quota_exceeded", Some(w.classes.iter().filter(|c| c.placed > c.quota).count() as f64));
    r.set("land_fraction", Some(w.land.iter().filter(|&&l| l).count() as f64 / w.land.len() as f64));
    let fallbacks: usize = w.layers.iter().map(|l| l.fallbacks.len()).sum();
    r.set("quantile_fallbacks", Some(fallbacks as f64));
    r.meta("template", &w.template.name);
    r.meta("grid", w.template.grid);
    r.meta("master_seed", w.seeds.master);
    r
}

/// Runs one cell of the grid, writing its files into `dir` when given.
pub fn execute(spec: &RunSpec, dir: Option<&Path>) -> Result<RunOutput, HarnessError> {
    match spec.direction {
        Direction::Crowd => {
            let (cfg, pol) = crowd_config(spec)?;
            let run = crowd::run_crowd(&cfg, &pol, spec.seed)?;
            let metrics = crowd::summarize(&run, &cfg);
            if let Some(d) = dir {
                run.write_outputs(d, &cfg, &metrics)?;
            }
            Ok(RunOutput { metrics, timing: run.timing_report() })
        }
        Direction::Action => {
            let cfg = action_config(spec)?;
            let run = action::run_action_timing(&cfg, Method::parse(&spec.method)?, spec.seed)?;
            let metrics = action::summarize(&run, &cfg);
            if let Some(d) = dir {
                run.write_outputs(d, &metrics)?;
            }
            Ok(RunOutput { metrics, timing: run.timing_report() })
        }
        Direction::Spawn => {
            let cfg = spawn_config(spec)?;
            let run = spawn::run_spawn(&cfg, PolicyKind::parse(&spec.method)?, spec.seed)?;
            let metrics = spawn::summarize(&run, &cfg);
            if let Some(d) = dir {
                run.write_outputs(d, &metrics)?;
            }
            Ok(RunOutput { metrics, timing: run.timing_report() })
        }
        Direction::Worldgen => {
            let t = template(spec)?;
            let start = Instant::now();
            let w = generate_world(&t, &SeedBundle::new(spec.seed))?;
            let mut timing = MetricReport::default();
            timing.set("generate_ms", Some(start.elapsed().as_secs_f64() * 1e3));
            let mut metrics = world_metrics(&w);
            if let Some(d) = dir {
                w.write_outputs(d)?;
                fs::write(d.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
            }
            metrics.meta("export_sha256", w.export_digest()?);
            Ok(RunOutput { metrics, timing })
        }
    }
}

/// Provenance and outcome of one run, stored as `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config_hash: String,
    pub direction: Direction,
    pub method: String,
    pub scale: Scale,
    pub seed: u64,
    pub point: String,
    pub settings: BTreeMap<String, toml::Value>,
    pub error: Option<String>,
    pub metrics: Option<MetricReport>,
    #[serde(skip)]
    pub timing: Option<MetricReport>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub struct Batch {
    pub root: PathBuf,
    pub config_hash: String,
    pub records: Vec<RunRecord>,
}

impl Batch {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.ok()).count()
    }
}

pub fn specs(cfg: &ExperimentConfig) -> Result<Vec<RunSpec>, HarnessError> {
    let base = flatten(&cfg.overrides);
    let mut out = Vec::new();
    for point in cfg.sweep_points()? {
        for method in cfg.methods() {
            for seed in cfg.seeds_for(&method) {
                let mut overrides = base.clone();
                overrides.extend(point.settings.iter().cloned());
                out.push(RunSpec { direction: cfg.direction, method: method.clone(), scale: cfg.scale, seed, point: point.clone(), overrides });
            }
        }
    }
    Ok(out)
}

fn pool(width: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new().num_threads(width).build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// Runs every `(point, method, seed)` cell, optionally writing each run's
/// files under `root`. A failing run is recorded, not fatal.
pub fn run_specs(specs: &[RunSpec], config_hash: &str, root: Option<&Path>, width: usize) -> Result<Vec<RunRecord>, HarnessError> {
    let one = |spec: &RunSpec| {
        let dir = root.map(|r| r.join(spec.relative_dir()));
        let result = execute(spec, dir.as_deref());
        let (metrics, timing, error) = match result {
            Ok(o) => (Some(o.metrics), Some(o.timing), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        let record = RunRecord {
            version: VERSION.to_string(),
            config_hash: config_hash.to_string(),
            direction: spec.direction,
            method: spec.method.clone(),
            scale: spec.scale,
            seed: spec.seed,
            point: spec.point.label(),
            settings: spec.point.settings.iter().cloned().collect(),
            error,
            metrics,
            timing,
        };
        if let Some(d) = dir {
            fs::create_dir_all(&d)?;
            fs::write(d.join("run.json"), serde_json::to_string_pretty(&record)?)?;
        }
        Ok::<_, HarnessError>(record)
    };
    pool(width)?.install(|| specs.par_iter().map(one).collect())
}

/// Runs the configured batch and writes the config echo, per-run
/// directories and the aggregate tables.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<Batch, HarnessError> {
    let root = cfg.output_root();
    fs::create_dir_all(&root)?;
    let hash = cfg.hash();
    fs::write(root.join("config.toml"), format!("# config_hash = \"{hash}\"\n# {VERSION}\n{}", cfg.to_toml()))?;
    let records = run_specs(&specs(cfg)?, &hash, Some(&root), cfg.parallelism)?;
    crate::aggregate::write_tables(&root, &records)?;
    Ok(Batch { root, config_hash: hash, records })
}

/// SHA-256 of every file under `dir` except `timing.json`, by relative path.
pub fn digest_dir(dir: &Path) -> Result<String, HarnessError> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        if rel.file_name().is_some_and(|n| n == "timing.json") {
            continue;
        }
        h.update(rel.to_string_lossy().as_bytes());
        h.update(fs::read(dir.join(&rel))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("inside root").to_path_buf());
        }
    }
    Ok(())
}
