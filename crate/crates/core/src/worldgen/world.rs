use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{island_relief, value_range};
use super::{
    danger_band, derive_features, island_height, place_points, regional_quantile, ClassKind, ClassSpec, DangerBand,
    DiscreteLayer, Histogram, PlacedPoint, PlacementRequest, WorldError, WorldTemplate,
};
use crate::geom::{dist2, Vec2};
use crate::noise::raster::Raster;
use crate::noise::{FieldSampler, NoiseSpec, SeedBundle};

/// Raw draws kept per class for the stream-isolation check.
const DRAW_LOG: usize = 100;

/// The three generation substreams derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSeeds {
    pub master: u64,
    pub layout: u64,
    pub noise: u64,
    pub place: u64,
}

impl WorldSeeds {
    /// Tags `world.layout`, `world.noise` and `world.place`; overrides in the
    /// bundle replace individual streams.
    pub fn from_bundle(b: &SeedBundle) -> Self {
        Self {
            master: b.master_seed,
            layout: b.substream("world.layout"),
            noise: b.substream("world.noise"),
            place: b.substream("world.place"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: String,
    /// Largest `|count - mix * region_cells|` over regions and classes.
    pub max_error_cells: f64,
    pub fallbacks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: String,
    pub quota: usize,
    pub placed: usize,
    pub shortfall: usize,
    pub radius: f64,
    /// Smallest pairwise distance; absent with fewer than two points.
    pub min_spacing: Option<f64>,
    pub candidates: usize,
    pub mask_violations: usize,
    #[serde(skip)]
    pub draw_log: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GeneratedWorld {
    pub template: WorldTemplate,
    pub seeds: WorldSeeds,
    /// Normalised island relief on the parameter grid.
    pub height: Vec<f64>,
    pub land: Vec<bool>,
    pub faction: DiscreteLayer,
    pub biome: DiscreteLayer,
    pub danger: DiscreteLayer,
    pub content: DiscreteLayer,
    /// Unit feature intensity on land, 0 on water.
    pub feature: Vec<f64>,
    pub points: Vec<PlacedPoint>,
    pub layers: Vec<LayerSummary>,
    pub classes: Vec<ClassSummary>,
    /// Continuous base rasters `(height, feature)`, when enabled.
    pub base: Option<(Vec<f64>, Vec<f64>)>,
}

fn sampler(spec: &NoiseSpec, seed: u64) -> Result<FieldSampler, WorldError> {
    Ok(FieldSampler::stationary(spec.clone().with_seed(seed), crate::noise::BoundaryMode::Unbounded)?)
}

/// Min-max over land cells, 0 on water.
fn unit_on_land(raw: &[f64], land: &[bool]) -> Vec<f64> {
    let on_land: Vec<f64> = raw.iter().zip(land).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
    let (lo, hi) = value_range(&on_land);
    let span = if hi > lo { hi - lo } else { 1.0 };
    raw.iter().zip(land).map(|(&v, &l)| if l { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 }).collect()
}

fn cumulative_edges(mix: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(mix.len() + 1);
    e.push(0.0);
    let mut acc = 0.0;
    for m in mix {
        acc += m;
        e.push(acc);
    }
    *e.last_mut().unwrap() = 1.0;
    e
}

fn layer_error(layer: &DiscreteLayer, hist: &Histogram, regions: &[Option<usize>], names: &[String]) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, name) in names.iter().enumerate() {
        let size = regions.iter().filter(|g| **g == Some(r)).count();
        if size == 0 {
            continue;
        }
        let mix = hist.for_region(name);
        for (c, k) in layer.counts_in(regions, r).into_iter().enumerate() {
            worst = worst.max((k as f64 - mix[c] * size as f64).abs());
        }
    }
    worst
}

struct Masks<'a> {
    land: &'a [bool],
    biome: &'a DiscreteLayer,
    danger: &'a DiscreteLayer,
    content: &'a DiscreteLayer,
}

impl Masks<'_> {
    fn permits(&self, class: &ClassSpec, i: usize) -> bool {
        let named = |list: &[String], layer: &DiscreteLayer| {
            list.is_empty() || layer.cells[i].is_some_and(|c| list.iter().any(|n| *n == layer.classes[c]))
        };
        self.land[i]
            && named(&class.biomes, self.biome)
            && named(&class.content, self.content)
            && (class.bands.is_empty() || self.danger.cells[i].is_some_and(|b| class.bands.contains(&DangerBand::from_index(b))))
    }

    fn name(layer: &DiscreteLayer, i: usize) -> String {
        layer.cells[i].map_or_else(String::new, |c| layer.classes[c].clone())
    }
}

fn min_spacing(points: &[Vec2]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = dist2(*a, *b);
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best.map(f64::sqrt)
}

/// Builds every raster, then every point layer, from `(template, seeds)`.
pub fn generate_world(template: &WorldTemplate, seeds: &SeedBundle) -> Result<GeneratedWorld, WorldError> {
    template.validate()?;
    let t = template;
    let ws = WorldSeeds::from_bundle(seeds);
    let layout = SeedBundle::new(ws.layout);
    let noise = SeedBundle::new(ws.noise);
    let place = SeedBundle::new(ws.place);
    let g = t.grid;
    let raster = |spec: &NoiseSpec, seed: u64| -> Result<Vec<f64>, WorldError> { Ok(sampler(spec, seed)?.raster(g, g, 1.0, [0.0, 0.0])) };

    let height_raw = raster(&t.layers.height, noise.substream("height"))?;
    let height = island_height(&height_raw, g, t.falloff);
    let land: Vec<bool> = height.iter().map(|&h| h >= t.sea_level).collect();

    let island: Vec<Option<usize>> = land.iter().map(|&l| l.then_some(0)).collect();
    let faction_raw = raster(&t.layers.faction, layout.substream("faction"))?;
    let faction = regional_quantile(
        "faction",
        &t.faction.classes,
        &faction_raw,
        &island,
        &["island".to_string()],
        &[&t.faction.mix],
        &cumulative_edges(&t.faction.mix),
    )?;
    let regions = &faction.cells;
    let names = &t.faction.classes;

    let regional = |layer: &str, hist: &Histogram, spec: &NoiseSpec, edges: Option<Vec<f64>>| -> Result<DiscreteLayer, WorldError> {
        let raw = raster(spec, layout.substream(layer))?;
        let mixes: Vec<&[f64]> = names.iter().map(|n| hist.for_region(n)).collect();
        let edges = edges.unwrap_or_else(|| cumulative_edges(&hist.mix));
        regional_quantile(layer, &hist.classes, &raw, regions, names, &mixes, &edges)
    };
    let biome = regional("biome", &t.biome, &t.layers.biome, None)?;
    let th = t.thresholds;
    let danger = regional("danger", &t.danger, &t.layers.danger, Some(vec![0.0, th[0], th[1], th[2], 1.0]))?;
    let content = regional("content", &t.content, &t.layers.content, None)?;

    let feature_raw = raster(&t.layers.feature, noise.substream("feature"))?;
    let feature = unit_on_land(&feature_raw, &land);

    let mut layers = vec![LayerSummary {
        layer: "faction".into(),
        max_error_cells: layer_error(&faction, &t.faction, &island, &["island".to_string()]),
        fallbacks: faction.fallbacks.clone(),
    }];
    for (layer, hist) in [(&biome, &t.biome), (&danger, &t.danger), (&content, &t.content)] {
        layers.push(LayerSummary {
            layer: layer.name.clone(),
            max_error_cells: layer_error(layer, hist, regions, names),
            fallbacks: layer.fallbacks.clone(),
        });
    }

    let masks = Masks { land: &land, biome: &biome, danger: &danger, content: &content };
    let cell_m = t.cell_size();
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for class in &t.classes {
        let field_raw = raster(&t.layers.feature, noise.substream(&format!("class.{}", class.name)))?;
        let intensity: Vec<f64> = unit_on_land(&field_raw, &land).into_iter().map(|v| v.powf(class.gamma)).collect();
        let allowed: Vec<usize> = (0..g * g).filter(|&i| masks.permits(class, i)).collect();
        let mut rng = place.rng(&class.name);
        let mut feat_rng = place.rng(&format!("{}.features", class.name));

        let groups: Vec<Option<usize>> = if class.per_region { (0..names.len()).map(Some).collect() } else { vec![None] };
        let mut accepted: Vec<(Vec2, usize)> = Vec::new();
        let mut summary = ClassSummary {
            class: class.name.clone(),
            quota: class.quota * groups.len(),
            placed: 0,
            shortfall: 0,
            radius: class.radius,
            min_spacing: None,
            candidates: 0,
            mask_violations: 0,
            draw_log: Vec::new(),
        };
        for group in groups {
            let cells: Vec<usize> = match group {
                Some(r) => allowed.iter().copied().filter(|&i| regions[i] == Some(r)).collect(),
                None => allowed.clone(),
            };
            let existing: Vec<Vec2> = accepted.iter().map(|p| p.0).collect();
            let req = PlacementRequest {
                allowed: &cells,
                intensity: &intensity,
                grid: g,
                cell: cell_m,
                quota: class.quota,
                radius: class.radius,
                max_candidates: class.quota * t.attempts_per_point,
                existing: &existing,
            };
            let room = DRAW_LOG - summary.draw_log.len();
            let got = place_points(&req, &mut rng, room);
            summary.candidates += got.candidates;
            summary.shortfall += got.shortfall;
            summary.draw_log.extend(got.draw_log);
            accepted.extend(got.points);
        }

        for &(pos, cell) in &accepted {
            if !masks.permits(class, cell) {
                summary.mask_violations += 1;
            }
            let band = danger.cells[cell].map_or(DangerBand::Green, DangerBand::from_index);
            let biome_name = Masks::name(&biome, cell);
            let fits: Vec<&str> = class
                .subclasses
                .iter()
                .filter(|s| (s.biomes.is_empty() || s.biomes.contains(&biome_name)) && (s.bands.is_empty() || s.bands.contains(&band)))
                .map(|s| s.name.as_str())
                .collect();
            let u: f64 = feat_rng.random();
            let subclass = if fits.is_empty() { class.name.clone() } else { fits[((u * fits.len() as f64) as usize).min(fits.len() - 1)].to_string() };
            let features = derive_features(feature[cell], &t.bands[&band], class.kind, &mut feat_rng);
            points.push(PlacedPoint {
                pos,
                class: class.name.clone(),
                kind: class.kind,
                subclass,
                band,
                faction: Masks::name(&faction, cell),
                biome: biome_name,
                content: Masks::name(&content, cell),
                features,
            });
        }
        let positions: Vec<Vec2> = accepted.iter().map(|p| p.0).collect();
        summary.placed = positions.len();
        summary.min_spacing = min_spacing(&positions);
        classes.push(summary);
    }

    let base = if t.base_raster > 0 {
        let b = t.base_raster;
        let scale = g as f64 / b as f64;
        let h_raw = sampler(&t.layers.height, noise.substream("height"))?.raster(b, b, scale, [0.0, 0.0]);
        let (lo, hi) = value_range(&height_raw);
        let h = island_relief(&h_raw, b, t.falloff, lo, hi);
        let f_raw = sampler(&t.layers.feature, noise.substream("feature"))?.raster(b, b, scale, [0.0, 0.0]);
        let land_raw: Vec<f64> = feature_raw.iter().zip(&land).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
        let (flo, fhi) = value_range(&land_raw);
        let fspan = if fhi > flo { fhi - flo } else { 1.0 };
        let f = f_raw.iter().zip(&h).map(|(&v, &hv)| if hv >= t.sea_level { ((v - flo) / fspan).clamp(0.0, 1.0) } else { 0.0 }).collect();
        Some((h, f))
    } else {
        None
    };

    Ok(GeneratedWorld {
        template: t.clone(),
        seeds: ws,
        height,
        land,
        faction,
        biome,
        danger,
        content,
        feature,
        points,
        layers,
        classes,
        base,
    })
}

#[derive(Serialize)]
struct GeoFeature<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Geometry,
    properties: &'a PlacedPoint,
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: Vec2,
}

#[derive(Serialize)]
struct GeoCollection<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    crs_note: &'static str,
    features: Vec<GeoFeature<'a>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    template: &'a str,
    seeds: WorldSeeds,
    grid: usize,
    cell_m: f64,
    land_cells: usize,
    layers: &'a [LayerSummary],
    classes: &'a [ClassSummary],
}

impl GeneratedWorld {
    pub fn danger_bands(&self) -> Vec<Option<DangerBand>> {
        self.danger.cells.iter().map(|c| c.map(DangerBand::from_index)).collect()
    }

    /// Danger band recomputed from the continuous danger value.
    pub fn sliced_danger(&self) -> Vec<Option<DangerBand>> {
        self.danger
            .level
            .iter()
            .zip(&self.land)
            .map(|(&v, &l)| l.then(|| danger_band(v, &self.template.thresholds)))
            .collect()
    }

    fn class_raster(&self, layer: &DiscreteLayer) -> Raster {
        let g = self.template.grid;
        let values = layer.cells.iter().map(|c| c.map_or(-1.0, |c| c as f64)).collect();
        self.decorate(Raster::new(g, g, values), &layer.name, self.template.cell_size())
            .with_extra("classes", layer.classes.join(","))
            .with_extra("nodata", -1)
    }

    fn decorate(&self, r: Raster, layer: &str, cell_m: f64) -> Raster {
        r.with_extra("layer", layer)
            .with_extra("template", &self.template.name)
            .with_extra("master_seed", self.seeds.master)
            .with_extra("cell_m", cell_m)
            .with_extra("coords", "cell centres, row-major, origin south-west, row 0 southernmost")
    }

    /// Every export as `(file name, bytes)`, in a fixed order.
    pub fn exports(&self) -> Result<Vec<(String, Vec<u8>)>, WorldError> {
        let g = self.template.grid;
        let cell = self.template.cell_size();
        let mut rasters = vec![
            ("faction", self.class_raster(&self.faction)),
            ("biome", self.class_raster(&self.biome)),
            ("danger", self.class_raster(&self.danger)),
            ("content", self.class_raster(&self.content)),
            ("danger_value", self.decorate(Raster::new(g, g, self.danger.level.clone()), "danger_value", cell)),
            ("feature", self.decorate(Raster::new(g, g, self.feature.clone()), "feature", cell)),
            ("height", self.decorate(Raster::new(g, g, self.height.clone()), "height", cell)),
        ];
        if let Some((h, f)) = &self.base {
            let b = self.template.base_raster;
            let bc = self.template.extent_m / b as f64;
            rasters.push(("height_base", self.decorate(Raster::new(b, b, h.clone()), "height_base", bc)));
            rasters.push(("feature_base", self.decorate(Raster::new(b, b, f.clone()), "feature_base", bc)));
        }
        let mut out = Vec::new();
        for (name, r) in rasters {
            let mut buf = Vec::new();
            r.write_to(&mut buf)?;
            out.push((format!("{name}.raster"), buf));
        }
        let geo = GeoCollection {
            kind: "FeatureCollection",
            crs_note: "metres from the south-west corner",
            features: self
                .points
                .iter()
                .map(|p| GeoFeature { kind: "Feature", geometry: Geometry { kind: "Point", coordinates: p.pos }, properties: p })
                .collect(),
        };
        out.push(("points.geojson".into(), serde_json::to_vec_pretty(&geo).expect("points serialise")));
        let summary = Summary {
            template: &self.template.name,
            seeds: self.seeds,
            grid: g,
            cell_m: cell,
            land_cells: self.land.iter().filter(|&&l| l).count(),
            layers: &self.layers,
            classes: &self.classes,
        };
        out.push(("summary.json".into(), serde_json::to_vec_pretty(&summary).expect("summary serialises")));
        Ok(out)
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<(), WorldError> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.exports()? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    /// SHA-256 over all exports in order.
    pub fn export_digest(&self) -> Result<String, WorldError> {
        let mut h = Sha256::new();
        for (name, bytes) in self.exports()? {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn histogram_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_error_cells).fold(0.0, f64::max)
    }

    pub fn spacing_ok(&self) -> bool {
        self.classes.iter().all(|c| c.min_spacing.is_none_or(|d| d >= c.radius))
    }

    pub fn quota_ok(&self) -> bool {
        self.classes.iter().all(|c| c.placed <= c.quota)
    }

    pub fn mask_violations(&self) -> usize {
        self.classes.iter().map(|c| c.mask_violations).sum()
    }

    pub fn points_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a PlacedPoint> + 'a {
        self.points.iter().filter(move |p| p.class == class)
    }

    pub fn kind_counts(&self) -> [usize; 4] {
        let mut k = [0; 4];
        for p in &self.points {
            k[match p.kind {
                ClassKind::Resource => 0,
                ClassKind::Wildlife => 1,
                ClassKind::Enemy => 2,
                ClassKind::Landmark => 3,
            }] += 1;
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A shipped template shrunk to a 96-cell grid with the same map scale.
    fn small(name: &str) -> WorldTemplate {
        let mut t = WorldTemplate::builtin(name).unwrap();
        let k = t.grid as f64 / 96.0;
        t.grid = 96;
        t.base_raster = 128;
        let l = &mut t.layers;
        for spec in [&mut l.faction, &mut l.biome, &mut l.danger, &mut l.content, &mut l.feature, &mut l.height] {
            spec.frequency *= k;
        }
        t
    }

    fn gen(t: &WorldTemplate, seeds: SeedBundle) -> GeneratedWorld {
        generate_world(t, &seeds).unwrap()
    }

    #[test]
    fn small_worlds_meet_every_placement_invariant() {
        for name in WorldTemplate::BUILTIN_NAMES {
            let t = small(name);
            let w = gen(&t, SeedBundle::new(t.seed));
            assert!(w.histogram_error() <= 1.0, "{name}: {}", w.histogram_error());
            assert!(w.spacing_ok() && w.quota_ok(), "{name}");
            assert_eq!(w.mask_violations(), 0);
            for c in &w.classes {
                let pts: Vec<Vec2> = w.points_of(&c.class).map(|p| p.pos).collect();
                for (i, a) in pts.iter().enumerate() {
                    for b in &pts[i + 1..] {
                        assert!(dist2(*a, *b) >= c.radius * c.radius);
                    }
                }
            }
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let t = small("EdengroveLike");
        let a = gen(&t, SeedBundle::new(99)).exports().unwrap();
        let b = gen(&t, SeedBundle::new(99)).exports().unwrap();
        assert_eq!(a, b);
        let c = gen(&t, SeedBundle::new(100)).exports().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn place_stream_leaves_rasters_alone() {
        let t = small("WindswardLike");
        let base = SeedBundle::new(42);
        let a = gen(&t, base.clone());
        let b = gen(&t, base.with_override("world.place", 12345));
        assert_eq!(a.faction, b.faction);
        assert_eq!((&a.biome, &a.danger, &a.content), (&b.biome, &b.danger, &b.content));
        assert_eq!((&a.height, &a.feature), (&b.height, &b.feature));
        assert_ne!(a.points, b.points);
    }

    #[test]
    fn layout_stream_leaves_candidate_draws_alone() {
        let t = small("ShatteredMountainLike");
        let base = SeedBundle::new(7);
        let a = gen(&t, base.clone());
        let b = gen(&t, base.with_override("world.layout", 999));
        assert_ne!(a.biome.cells, b.biome.cells);
        for (x, y) in a.classes.iter().zip(&b.classes) {
            // Stopping points may differ; the consumed draws may not.
            let n = x.draw_log.len().min(y.draw_log.len());
            assert!(n >= 8, "{}", x.class);
            assert_eq!(x.draw_log[..n], y.draw_log[..n], "{}", x.class);
        }
    }

    #[test]
    fn danger_classes_agree_with_threshold_slicing() {
        let w = gen(&small("WindswardLike"), SeedBundle::new(42));
        assert_eq!(w.danger_bands(), w.sliced_danger());
    }

    #[test]
    fn water_is_masked_from_every_layer() {
        let w = gen(&small("EdengroveLike"), SeedBundle::new(99));
        for (i, &l) in w.land.iter().enumerate() {
            for layer in [&w.faction, &w.biome, &w.danger, &w.content] {
                assert_eq!(layer.cells[i].is_some(), l);
            }
        }
        let g = w.template.grid;
        assert!(!w.land[0] && !w.land[g * g - 1]);
    }

    #[test]
    fn per_region_landmarks_get_one_per_faction() {
        let w = gen(&small("WindswardLike"), SeedBundle::new(42));
        let mut seen: Vec<&str> = w.points_of("settlement").map(|p| p.faction.as_str()).collect();
        seen.sort_unstable();
        assert_eq!(seen, ["green", "purple", "yellow"]);
    }

    #[test]
    fn exports_carry_headers_and_points() {
        let w = gen(&small("WindswardLike"), SeedBundle::new(42));
        let files = w.exports().unwrap();
        let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
        assert!(names.contains(&"biome.raster") && names.contains(&"height_base.raster"));
        let (_, biome) = files.iter().find(|f| f.0 == "biome.raster").unwrap();
        let r = Raster::read_from(&biome[..]).unwrap();
        assert_eq!((r.width, r.height), (96, 96));
        assert!(r.extras.iter().any(|(k, v)| k == "classes" && v.starts_with("grassland")));
        let (_, geo) = files.iter().find(|f| f.0 == "points.geojson").unwrap();
        let v: serde_json::Value = serde_json::from_slice(geo).unwrap();
        assert_eq!(v["features"].as_array().unwrap().len(), w.points.len());
    }
}
