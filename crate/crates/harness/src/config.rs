use std::fmt;
use std::path::{Path, PathBuf};

use noisefield_core::crowd::Scale;
use noisefield_core::worldgen::WorldTemplate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Environment variable that replaces the output root.
pub const OUTPUT_ENV: &str = "NOISEFIELD_OUT";
pub const DEFAULT_SEED_COUNT: usize = 20;
pub const VERSION: &str = concat!("noisefield ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Crowd,
    Action,
    Spawn,
    Worldgen,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Crowd => "crowd",
            Direction::Action => "action",
            Direction::Spawn => "spawn",
            Direction::Worldgen => "worldgen",
        }
    }

    /// Methods run when the config names none.
    pub fn default_methods(self) -> Vec<String> {
        let names: Vec<&str> = match self {
            Direction::Crowd => noisefield_core::crowd::MotionPolicy::NAMES.to_vec(),
            Direction::Action => noisefield_core::action::Method::ALL.iter().map(|m| m.name()).collect(),
            Direction::Spawn => noisefield_core::spawn::PolicyKind::ALL.iter().map(|k| k.name()).collect(),
            Direction::Worldgen => WorldTemplate::BUILTIN_NAMES.to_vec(),
        };
        names.into_iter().map(String::from).collect()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sweep dimension. All keys move together (zipped); separate axes
/// combine as a Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub keys: Vec<String>,
    /// One row per setting, one entry per key. A bare scalar is accepted for
    /// single-key axes.
    pub values: Vec<toml::Value>,
}

impl SweepAxis {
    pub fn single(key: &str, values: impl IntoIterator<Item = toml::Value>) -> Self {
        Self { keys: vec![key.to_string()], values: values.into_iter().collect() }
    }

    fn rows(&self) -> Result<Vec<Vec<toml::Value>>, HarnessError> {
        self.values
            .iter()
            .map(|v| {
                let row = match v {
                    toml::Value::Array(a) => a.clone(),
                    other => vec![other.clone()],
                };
                if row.len() == self.keys.len() {
                    Ok(row)
                } else {
                    Err(HarnessError::Config(format!("sweep row {v} does not match keys {:?}", self.keys)))
                }
            })
            .collect()
    }
}

/// A coordinate in the sweep grid: the overrides it applies.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub settings: Vec<(String, toml::Value)>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        if self.settings.is_empty() {
            return "default".into();
        }
        let parts: Vec<String> = self
            .settings
            .iter()
            .map(|(k, v)| format!("{}={}", k.rsplit('.').next().unwrap_or(k), v))
            .collect();
        format!("p{:02}_{}", self.index, parts.join("_")).replace(['"', ' ', '/'], "")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub direction: Direction,
    /// Method, policy or template names; empty runs the direction's full list.
    pub methods: Vec<String>,
    pub scale: Scale,
    pub seed_base: u64,
    /// Defaults to 20, or to each template's own seed for worldgen.
    pub seed_count: Option<usize>,
    /// Explicit seed list; replaces `seed_base`/`seed_count` when set.
    pub seeds: Vec<u64>,
    /// Dotted keys into the direction config; `policy.*` keys target the
    /// crowd motion policy parameters.
    pub overrides: toml::Table,
    pub sweep: Vec<SweepAxis>,
    /// Not part of the config hash.
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Not part of the config hash.
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Crowd,
            methods: Vec::new(),
            scale: Scale::Medium,
            seed_base: 0,
            seed_count: None,
            seeds: Vec::new(),
            overrides: toml::Table::new(),
            sweep: Vec::new(),
            output: None,
            parallelism: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn methods(&self) -> Vec<String> {
        if self.methods.is_empty() {
            self.direction.default_methods()
        } else {
            self.methods.clone()
        }
    }

    /// Seeds for one method. Worldgen without explicit seeds uses the
    /// template's showcase seed.
    pub fn seeds_for(&self, method: &str) -> Vec<u64> {
        if !self.seeds.is_empty() {
            return self.seeds.clone();
        }
        if self.direction == Direction::Worldgen && self.seed_count.is_none() {
            if let Ok(t) = WorldTemplate::builtin(method) {
                return vec![t.seed];
            }
        }
        let n = self.seed_count.unwrap_or(DEFAULT_SEED_COUNT) as u64;
        (self.seed_base..self.seed_base + n).collect()
    }

    /// Parses `key=value` with the value read as a TOML literal, falling back
    /// to a bare string.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected key=value, got {assignment:?}")))?;
        let value = parse_literal(raw.trim());
        self.overrides.insert(key.trim().to_string(), value);
        Ok(())
    }

    /// Every sweep coordinate; a single empty point without axes.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>, HarnessError> {
        let mut points = vec![Vec::new()];
        for axis in &self.sweep {
            let rows = axis.rows()?;
            let mut next = Vec::with_capacity(points.len() * rows.len());
            for p in &points {
                for row in &rows {
                    let mut q: Vec<(String, toml::Value)> = p.clone();
                    q.extend(axis.keys.iter().cloned().zip(row.iter().cloned()));
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points.into_iter().enumerate().map(|(index, settings)| SweepPoint { index, settings }).collect())
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = None;
        canon.parallelism = 0;
        let json = serde_json::to_string(&canon).expect("config serialises");
        let d = Sha256::digest(json.as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `--output`, then the environment variable, then `./results`.
    pub fn output_root(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Flattens nested tables into dotted keys.
pub fn flatten(table: &toml::Table) -> Vec<(String, toml::Value)> {
    let mut out = Vec::new();
    fn walk(prefix: &str, t: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(inner) => walk(&key, inner, out),
                other => out.push((key, other.clone())),
            }
        }
    }
    walk("", table, &mut out);
    out
}

/// Writes `value` at a dotted path. The path must already exist, so typos
/// fail loudly instead of being ignored.
pub fn apply_override(target: &mut Value, key: &str, value: &toml::Value) -> Result<(), HarnessError> {
    let mut node = target;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let next = match node {
            Value::Object(map) => map.get_mut(*part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|j| items.get_mut(j)),
            _ => None,
        };
        node = next.ok_or_else(|| HarnessError::Config(format!("unknown key {:?} in {key:?}", parts[..=i].join("."))))?;
    }
    *node = serde_json::to_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(())
}

/// Serialises `base`, applies the overrides and reads it back.
pub fn with_overrides<T>(base: &T, overrides: &[(String, toml::Value)]) -> Result<T, HarnessError>
where
    T: Serialize + serde::de::DeserializeOwned,
{
    if overrides.is_empty() {
        return serde_json::to_value(base)
            .and_then(serde_json::from_value)
            .map_err(|e| HarnessError::Config(e.to_string()));
    }
    let mut v = serde_json::to_value(base).map_err(|e| HarnessError::Config(e.to_string()))?;
    for (k, val) in overrides {
        apply_override(&mut v, k, val)?;
    }
    serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Named sweep presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Heading/speed frequencies and drift of the dual-field crowd policy.
    PerlinScale,
    /// Crowd population size.
    AgentsScale,
    /// Field hyperparameters of the hazard scheduler.
    Hyper,
}

impl Preset {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        let f = |x: f64| toml::Value::Float(x);
        let i = |x: i64| toml::Value::Integer(x);
        match self {
            Preset::PerlinScale => {
                cfg.direction = Direction::Crowd;
                if cfg.methods.is_empty() {
                    cfg.methods = vec!["perlin_dual".into()];
                }
                cfg.sweep = vec![SweepAxis {
                    keys: vec!["policy.heading.frequency".into(), "policy.speed.frequency".into(), "policy.v_drift".into()],
                    values: [(0.006, 0.0065, 0.001), (0.01, 0.011, 0.002), (0.016, 0.017, 0.004)]
                        .into_iter()
                        .map(|(a, b, c)| toml::Value::Array(vec![f(a), f(b), f(c)]))
                        .collect(),
                }];
            }
            Preset::AgentsScale => {
                cfg.direction = Direction::Crowd;
                cfg.sweep = vec![SweepAxis::single("n_agents", [500, 1000, 2000, 4000].map(i))];
            }
            Preset::Hyper => {
                cfg.direction = Direction::Action;
                if cfg.methods.is_empty() {
                    cfg.methods = vec!["perlin".into()];
                }
                cfg.sweep = vec![
                    SweepAxis::single("field.frequency", [0.005, 0.01, 0.02].map(f)),
                    SweepAxis::single("field.octaves", [3, 4, 5].map(i)),
                    SweepAxis::single("field.persistence", [0.45, 0.55].map(f)),
                    SweepAxis::single("field.lacunarity", [1.8, 2.2].map(f)),
                ];
            }
        }
    }
}
