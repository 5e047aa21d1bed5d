use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BandFeatures, ClassKind, DangerBand};
use crate::geom::{dist2, Vec2};
use crate::noise::SimRng;

/// One thinning run for a single class.
#[derive(Clone, Debug)]
pub struct PlacementRequest<'a> {
    /// Cells the class may occupy.
    pub allowed: &'a [usize],
    /// Acceptance probability per grid cell.
    pub intensity: &'a [f64],
    pub grid: usize,
    /// Cell side in metres.
    pub cell: f64,
    pub quota: usize,
    pub radius: f64,
    pub max_candidates: usize,
    /// Already accepted points of the same class (spacing applies to them).
    pub existing: &'a [Vec2],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Placement {
    /// Accepted `(position, cell)` pairs in acceptance order.
    pub points: Vec<(Vec2, usize)>,
    pub candidates: usize,
    pub shortfall: usize,
    /// Leading raw uniforms drawn from the stream.
    pub draw_log: Vec<f64>,
}

/// Bucketed neighbour lookup for the spacing test.
struct SpacingGrid {
    r2: f64,
    size: f64,
    buckets: HashMap<(i64, i64), Vec<Vec2>>,
}

impl SpacingGrid {
    fn new(radius: f64) -> Self {
        Self { r2: radius * radius, size: radius.max(1e-9), buckets: HashMap::new() }
    }

    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p[0] / self.size).floor() as i64, (p[1] / self.size).floor() as i64)
    }

    fn clear_of(&self, p: Vec2) -> bool {
        if self.r2 == 0.0 {
            return true;
        }
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    if b.iter().any(|&q| dist2(p, q) < self.r2) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: Vec2) {
        let k = self.key(p);
        self.buckets.entry(k).or_default().push(p);
    }
}

/// Inhomogeneous Poisson placement by thinning: candidates are uniform over
/// the allowed cells, kept with probability equal to the cell's intensity,
/// and rejected when closer than `radius` to an accepted point of the same
/// class. Each candidate consumes exactly four uniforms, so the stream of
/// raw draws does not depend on the masks or fields.
pub fn place_points(req: &PlacementRequest, rng: &mut SimRng, log_limit: usize) -> Placement {
    let mut out = Placement::default();
    let mut grid = SpacingGrid::new(req.radius);
    for &p in req.existing {
        grid.insert(p);
    }
    while out.points.len() < req.quota && out.candidates < req.max_candidates && !req.allowed.is_empty() {
        let u: [f64; 4] = std::array::from_fn(|_| rng.random());
        if out.draw_log.len() < log_limit {
            let take = (log_limit - out.draw_log.len()).min(4);
            out.draw_log.extend_from_slice(&u[..take]);
        }
        out.candidates += 1;
        let cell = req.allowed[((u[0] * req.allowed.len() as f64) as usize).min(req.allowed.len() - 1)];
        if u[3] >= req.intensity[cell] {
            continue;
        }
        let (col, row) = ((cell % req.grid) as f64, (cell / req.grid) as f64);
        let p = [(col + u[1]) * req.cell, (row + u[2]) * req.cell];
        if grid.clear_of(p) {
            grid.insert(p);
            out.points.push((p, cell));
        }
    }
    out.shortfall = req.quota - out.points.len();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Features {
    /// Unit feature-field value at the point.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hp_mult: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dps_mult: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elite: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boss: Option<bool>,
}

/// Band-conditioned features. Combatants (wildlife, enemies) get hp/dps
/// multipliers mapped linearly from `value` into the band's ranges; enemies
/// also draw one uniform for their rarity (boss, then elite).
pub fn derive_features(value: f64, ranges: &BandFeatures, kind: ClassKind, rng: &mut SimRng) -> Features {
    let lerp = |r: [f64; 2]| r[0] + (r[1] - r[0]) * value.clamp(0.0, 1.0);
    let mut f = Features { value, hp_mult: None, dps_mult: None, elite: None, boss: None };
    if matches!(kind, ClassKind::Wildlife | ClassKind::Enemy) {
        f.hp_mult = Some(lerp(ranges.hp));
        f.dps_mult = Some(lerp(ranges.dps));
    }
    if kind == ClassKind::Enemy {
        let u: f64 = rng.random();
        let boss = u < ranges.boss;
        f.boss = Some(boss);
        f.elite = Some(!boss && u < ranges.boss + ranges.elite);
    }
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedPoint {
    pub pos: Vec2,
    pub class: String,
    pub kind: ClassKind,
    pub subclass: String,
    pub band: DangerBand,
    pub faction: String,
    pub biome: String,
    pub content: String,
    pub features: Features,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng_from_seed;

    fn request<'a>(allowed: &'a [usize], intensity: &'a [f64], quota: usize, radius: f64) -> PlacementRequest<'a> {
        PlacementRequest { allowed, intensity, grid: 16, cell: 10.0, quota, radius, max_candidates: 100_000, existing: &[] }
    }

    #[test]
    fn zero_intensity_places_nothing() {
        let allowed: Vec<usize> = (0..256).collect();
        let zero = vec![0.0; 256];
        let p = place_points(&request(&allowed, &zero, 50, 0.0), &mut rng_from_seed(1), 0);
        assert!(p.points.is_empty());
        assert_eq!(p.shortfall, 50);
    }

    #[test]
    fn quota_one_lands_in_a_permitted_positive_cell() {
        let allowed = vec![17, 40, 41];
        let mut intensity = vec![0.0; 256];
        intensity[40] = 0.3;
        let p = place_points(&request(&allowed, &intensity, 1, 0.0), &mut rng_from_seed(2), 0);
        assert_eq!(p.points.len(), 1);
        let (pos, cell) = p.points[0];
        assert_eq!(cell, 40);
        assert!((80.0..90.0).contains(&pos[0]) && (20.0..30.0).contains(&pos[1]));
    }

    #[test]
    fn spacing_is_never_violated() {
        let allowed: Vec<usize> = (0..256).collect();
        let ones = vec![1.0; 256];
        let p = place_points(&request(&allowed, &ones, 10_000, 12.0), &mut rng_from_seed(3), 0);
        assert!(p.shortfall > 0);
        for (i, a) in p.points.iter().enumerate() {
            for b in &p.points[i + 1..] {
                assert!(dist2(a.0, b.0) >= 144.0);
            }
        }
    }

    #[test]
    fn existing_points_are_respected() {
        let allowed: Vec<usize> = (0..256).collect();
        let ones = vec![1.0; 256];
        let existing = [[80.0, 80.0]];
        let req = PlacementRequest { existing: &existing, ..request(&allowed, &ones, 200, 30.0) };
        let p = place_points(&req, &mut rng_from_seed(4), 0);
        assert!(p.points.iter().all(|(q, _)| dist2(*q, existing[0]) >= 900.0));
    }

    /// Chi-square goodness of fit over 4x4 super-cells with radius 0 and
    /// unit intensity; 15 degrees of freedom, critical value 30.58 at 0.01.
    #[test]
    fn unit_intensity_is_uniform() {
        let allowed: Vec<usize> = (0..256).collect();
        let ones = vec![1.0; 256];
        let n = 8000;
        let p = place_points(&request(&allowed, &ones, n, 0.0), &mut rng_from_seed(5), 0);
        assert_eq!(p.points.len(), n);
        let mut bins = [0usize; 16];
        for (q, _) in &p.points {
            let (i, j) = ((q[0] / 40.0) as usize, (q[1] / 40.0) as usize);
            bins[j * 4 + i] += 1;
        }
        let e = n as f64 / 16.0;
        let chi: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi < 30.58, "chi2 {chi}");
    }

    #[test]
    fn draw_log_ignores_masks_and_fields() {
        let a: Vec<usize> = (0..256).collect();
        let b = vec![3usize, 9];
        let ones = vec![1.0; 256];
        let half = vec![0.5; 256];
        let p = place_points(&request(&a, &ones, 40, 5.0), &mut rng_from_seed(6), 100);
        let q = place_points(&request(&b, &half, 40, 5.0), &mut rng_from_seed(6), 100);
        assert_eq!(p.draw_log.len(), 100);
        assert_eq!(p.draw_log, q.draw_log);
    }

    #[test]
    fn features_map_monotonically_into_band_ranges() {
        let green = BandFeatures { hp: [1.0, 1.5], dps: [0.8, 1.0], elite: 0.05, boss: 0.0 };
        let mut rng = rng_from_seed(7);
        let f0 = derive_features(0.0, &green, ClassKind::Enemy, &mut rng);
        assert_eq!((f0.hp_mult, f0.dps_mult), (Some(1.0), Some(0.8)));
        let mut last = f64::NEG_INFINITY;
        for k in 0..=20 {
            let f = derive_features(k as f64 / 20.0, &green, ClassKind::Enemy, &mut rng);
            assert!(f.hp_mult.unwrap() >= last);
            last = f.hp_mult.unwrap();
            assert_eq!(f.boss, Some(false));
        }
        let r = derive_features(0.3, &green, ClassKind::Resource, &mut rng);
        assert!(r.hp_mult.is_none() && r.boss.is_none());
    }

    #[test]
    fn rarity_frequencies_follow_band_probabilities() {
        let red = BandFeatures { hp: [1.0, 2.0], dps: [1.0, 2.0], elite: 0.2, boss: 0.05 };
        let mut rng = rng_from_seed(8);
        let n = 20_000;
        let (mut elite, mut boss) = (0, 0);
        for _ in 0..n {
            let f = derive_features(0.5, &red, ClassKind::Enemy, &mut rng);
            elite += f.elite.unwrap() as usize;
            boss += f.boss.unwrap() as usize;
        }
        // Binomial 4-sigma bands.
        let check = |k: usize, p: f64| ((k as f64 / n as f64) - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(check(elite, 0.2) && check(boss, 0.05), "{elite} {boss}");
    }
}
