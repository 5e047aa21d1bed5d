use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DangerBand, WorldError};
use crate::noise::NoiseSpec;

/// Octave stacks for every layer. Frequencies are in cycles per
/// parameter-grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerSpecs {
    pub faction: NoiseSpec,
    pub biome: NoiseSpec,
    pub danger: NoiseSpec,
    pub content: NoiseSpec,
    pub feature: NoiseSpec,
    pub height: NoiseSpec,
}

impl Default for LayerSpecs {
    fn default() -> Self {
        Self {
            faction: NoiseSpec::new(0.018, 4, 0.45, 2.1),
            biome: NoiseSpec::new(0.022, 4, 0.50, 2.05),
            danger: NoiseSpec::new(0.024, 5, 0.52, 2.15),
            content: NoiseSpec::new(0.055, 6, 0.50, 2.20),
            feature: NoiseSpec::new(0.110, 5, 0.55, 2.25),
            height: NoiseSpec::new(0.028, 5, 0.48, 2.00),
        }
    }
}

/// Class names plus a target mix, optionally overridden per faction region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub classes: Vec<String>,
    pub mix: Vec<f64>,
    #[serde(default)]
    pub regions: BTreeMap<String, Vec<f64>>,
}

impl Histogram {
    pub fn for_region(&self, region: &str) -> &[f64] {
        self.regions.get(region).map_or(&self.mix, |m| m)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    fn validate(&self, layer: &str, regions: &[String]) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidTemplate(format!("{layer}: {m}")));
        if self.classes.is_empty() {
            return bad("needs at least one class".into());
        }
        for (name, mix) in std::iter::once(("default", &self.mix)).chain(self.regions.iter().map(|(k, v)| (k.as_str(), v))) {
            if mix.len() != self.classes.len() {
                return bad(format!("mix {name} has {} entries for {} classes", mix.len(), self.classes.len()));
            }
            if mix.iter().any(|&f| !(f >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return bad(format!("mix {name} must be non-negative and sum to 1"));
            }
        }
        if let Some(r) = self.regions.keys().find(|r| !regions.contains(r)) {
            return bad(format!("override for unknown region {r:?}"));
        }
        Ok(())
    }
}

/// Feature ranges for one danger band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandFeatures {
    pub hp: [f64; 2],
    pub dps: [f64; 2],
    pub elite: f64,
    pub boss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Resource,
    Wildlife,
    Enemy,
    Landmark,
}

/// Restricts a subclass to some biomes and bands; empty lists allow all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subclass {
    pub name: String,
    #[serde(default)]
    pub biomes: Vec<String>,
    #[serde(default)]
    pub bands: Vec<DangerBand>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub kind: ClassKind,
    /// Points per class, or per faction region when `per_region` is set.
    pub quota: usize,
    /// Minimum distance between points of this class, metres.
    pub radius: f64,
    #[serde(default)]
    pub per_region: bool,
    /// Exponent applied to the unit intensity field.
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub biomes: Vec<String>,
    #[serde(default)]
    pub bands: Vec<DangerBand>,
    #[serde(default)]
    pub content: Vec<String>,
    #[serde(default)]
    pub subclasses: Vec<Subclass>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldTemplate {
    pub name: String,
    /// Seed the template is showcased with.
    pub seed: u64,
    /// Side of the parameter grid every layer is generated on.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Side of the continuous base rasters in the export; 0 skips them.
    #[serde(default = "default_base")]
    pub base_raster: usize,
    #[serde(default = "default_extent")]
    pub extent_m: f64,
    /// Normalised height below which a cell is water.
    #[serde(default = "default_sea")]
    pub sea_level: f64,
    /// Radial falloff `[start, end]` as fractions of the half side.
    #[serde(default = "default_falloff")]
    pub falloff: [f64; 2],
    #[serde(default = "default_thresholds")]
    pub thresholds: [f64; 3],
    /// Candidate draws per quota slot before placement gives up.
    #[serde(default = "default_attempts")]
    pub attempts_per_point: usize,
    #[serde(default)]
    pub layers: LayerSpecs,
    pub faction: Histogram,
    pub biome: Histogram,
    pub danger: Histogram,
    pub content: Histogram,
    pub bands: BTreeMap<DangerBand, BandFeatures>,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

fn default_grid() -> usize {
    512
}
fn default_base() -> usize {
    1024
}
fn default_extent() -> f64 {
    8000.0
}
fn default_sea() -> f64 {
    0.30
}
fn default_falloff() -> [f64; 2] {
    [0.55, 0.95]
}
fn default_thresholds() -> [f64; 3] {
    [0.35, 0.60, 0.82]
}
fn default_attempts() -> usize {
    400
}

const BUILTIN: [(&str, &str); 3] = [
    ("WindswardLike", include_str!("../../templates/windsward_like.toml")),
    ("ShatteredMountainLike", include_str!("../../templates/shattered_mountain_like.toml")),
    ("EdengroveLike", include_str!("../../templates/edengrove_like.toml")),
];

impl WorldTemplate {
    pub const BUILTIN_NAMES: [&'static str; 3] = ["WindswardLike", "ShatteredMountainLike", "EdengroveLike"];

    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let t: Self = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn builtin(name: &str) -> Result<Self, WorldError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| WorldError::UnknownTemplate(name.to_string()))?;
        Self::from_toml(text)
    }

    pub fn cell_size(&self) -> f64 {
        self.extent_m / self.grid as f64
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidTemplate(m.to_string()));
        if self.grid == 0 || !(self.extent_m > 0.0) {
            return bad("grid and extent must be > 0");
        }
        if !(0.0..1.0).contains(&self.sea_level) || !(0.0 <= self.falloff[0] && self.falloff[0] < self.falloff[1]) {
            return bad("sea level must lie in [0, 1) and falloff start < end");
        }
        let t = self.thresholds;
        if !(0.0 < t[0] && t[0] < t[1] && t[1] < t[2] && t[2] < 1.0) {
            return bad("danger thresholds must be strictly increasing inside (0, 1)");
        }
        if self.attempts_per_point == 0 {
            return bad("attempts_per_point must be > 0");
        }
        let l = &self.layers;
        for spec in [&l.faction, &l.biome, &l.danger, &l.content, &l.feature, &l.height] {
            spec.validate()?;
        }
        self.faction.validate("faction", &[])?;
        if !self.faction.regions.is_empty() {
            return bad("faction mix cannot vary by region");
        }
        let regions = &self.faction.classes;
        self.biome.validate("biome", regions)?;
        self.danger.validate("danger", regions)?;
        self.content.validate("content", regions)?;
        if self.danger.classes.len() != 4 {
            return bad("danger needs exactly four bands");
        }
        for band in DangerBand::ALL {
            let Some(f) = self.bands.get(&band) else {
                return Err(WorldError::InvalidTemplate(format!("missing feature ranges for {band:?}")));
            };
            if f.hp[0] > f.hp[1] || f.dps[0] > f.dps[1] || !(0.0..=1.0).contains(&f.elite) || !(0.0..=1.0).contains(&f.boss) || f.elite + f.boss > 1.0 {
                return Err(WorldError::InvalidTemplate(format!("bad feature ranges for {band:?}")));
            }
        }
        for c in &self.classes {
            if !(c.radius >= 0.0) || !(c.gamma > 0.0) {
                return Err(WorldError::InvalidTemplate(format!("class {}: radius must be >= 0, gamma > 0", c.name)));
            }
            let unknown = |names: &[String], h: &Histogram| names.iter().find(|n| h.index(n).is_none()).cloned();
            let sub_biomes: Vec<String> = c.subclasses.iter().flat_map(|s| s.biomes.clone()).collect();
            if let Some(n) = unknown(&c.biomes, &self.biome).or_else(|| unknown(&sub_biomes, &self.biome)) {
                return Err(WorldError::InvalidTemplate(format!("class {}: unknown biome {n:?}", c.name)));
            }
            if let Some(n) = unknown(&c.content, &self.content) {
                return Err(WorldError::InvalidTemplate(format!("class {}: unknown content type {n:?}", c.name)));
            }
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("class names must be unique");
        }
        Ok(())
    }
}
