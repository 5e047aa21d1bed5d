use serde::{Deserialize, Serialize};

use super::{DangerBand, WorldError};
use crate::noise::quantile_map;

/// A class raster over the parameter grid. Water cells hold `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLayer {
    pub name: String,
    pub classes: Vec<String>,
    pub cells: Vec<Option<usize>>,
    /// Rank-preserving unit value: class `c` occupies the open interval
    /// between its edges, ordered by field value within each region.
    pub level: Vec<f64>,
    /// Regions that fell back to global quantiles.
    pub fallbacks: Vec<String>,
}

impl DiscreteLayer {
    pub fn counts_in(&self, region: &[Option<usize>], r: usize) -> Vec<usize> {
        let mut out = vec![0; self.classes.len()];
        for (c, g) in self.cells.iter().zip(region) {
            if let (Some(c), Some(g)) = (c, g) {
                if *g == r {
                    out[*c] += 1;
                }
            }
        }
        out
    }
}

/// Band for a normalised danger value; upper bounds are inclusive.
pub fn danger_band(value: f64, thresholds: &[f64; 3]) -> DangerBand {
    match thresholds.iter().position(|&t| value <= t) {
        Some(i) => DangerBand::from_index(i),
        None => DangerBand::Black,
    }
}

/// Smallest and largest value; `(0, 1)` for an empty slice.
pub(crate) fn value_range(raw: &[f64]) -> (f64, f64) {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) }
}

/// Min-max normalised relief multiplied by a radial falloff that reaches
/// zero at `falloff[1]` of the half side, so the land forms one island.
pub fn island_height(raw: &[f64], grid: usize, falloff: [f64; 2]) -> Vec<f64> {
    let (lo, hi) = value_range(raw);
    island_relief(raw, grid, falloff, lo, hi)
}

/// [`island_height`] with an explicit normalisation range, for rasters of
/// the same field at another resolution.
pub(crate) fn island_relief(raw: &[f64], side: usize, falloff: [f64; 2], lo: f64, hi: f64) -> Vec<f64> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let half = side as f64 / 2.0;
    raw.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (c, r) = ((i % side) as f64 + 0.5, (i / side) as f64 + 0.5);
            let d = ((c - half).powi(2) + (r - half).powi(2)).sqrt() / half;
            let s = ((d - falloff[0]) / (falloff[1] - falloff[0])).clamp(0.0, 1.0);
            let keep = 1.0 - s * s * (3.0 - 2.0 * s);
            ((v - lo) / span).clamp(0.0, 1.0) * keep
        })
        .collect()
}

/// Quantile-maps `values` separately inside every region.
///
/// `mixes[r]` is region `r`'s target mix and `edges` the unit-interval
/// boundaries used for [`DiscreteLayer::level`] (`classes + 1` entries).
/// Zero-weight classes are skipped. A region with fewer cells than
/// positive-weight classes takes its classes from quantiles over all
/// regioned cells instead and is listed in `fallbacks`.
pub fn regional_quantile(
    name: &str,
    classes: &[String],
    values: &[f64],
    region: &[Option<usize>],
    region_names: &[String],
    mixes: &[&[f64]],
    edges: &[f64],
) -> Result<DiscreteLayer, WorldError> {
    assert_eq!(values.len(), region.len());
    assert_eq!(edges.len(), classes.len() + 1);
    let n_regions = region_names.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_regions];
    for (i, g) in region.iter().enumerate() {
        if let Some(g) = g {
            members[*g].push(i);
        }
    }
    let all: Vec<usize> = members.iter().flatten().copied().collect();
    let mut layer = DiscreteLayer {
        name: name.to_string(),
        classes: classes.to_vec(),
        cells: vec![None; values.len()],
        level: vec![-1.0; values.len()],
        fallbacks: Vec::new(),
    };
    for (r, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let mix = mixes[r];
        let live: Vec<usize> = (0..mix.len()).filter(|&c| mix[c] > 0.0).collect();
        let pool = if idx.len() < live.len() {
            layer.fallbacks.push(region_names[r].clone());
            &all
        } else {
            idx
        };
        let fractions: Vec<f64> = live.iter().map(|&c| mix[c]).collect();
        let total: f64 = fractions.iter().sum();
        let fractions: Vec<f64> = fractions.iter().map(|f| f / total).collect();
        let pool_values: Vec<f64> = pool.iter().map(|&i| values[i]).collect();
        let local = quantile_map(&pool_values, &fractions)?;

        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| pool_values[a].total_cmp(&pool_values[b]).then(a.cmp(&b)));
        let mut size = vec![0usize; live.len()];
        for &k in &local {
            size[k] += 1;
        }
        let mut seen = vec![0usize; live.len()];
        for &k in &order {
            let i = pool[k];
            let slot = local[k];
            let c = live[slot];
            let pos = (seen[slot] as f64 + 0.5) / size[slot] as f64;
            seen[slot] += 1;
            if region[i] == Some(r) {
                layer.cells[i] = Some(c);
                layer.level[i] = edges[c] + (edges[c + 1] - edges[c]) * pos;
            }
        }
    }
    Ok(layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn danger_bounds_are_inclusive() {
        let t = [0.35, 0.60, 0.82];
        assert_eq!(danger_band(0.35, &t), DangerBand::Green);
        assert_eq!(danger_band(0.350001, &t), DangerBand::Yellow);
        assert_eq!(danger_band(0.60, &t), DangerBand::Yellow);
        assert_eq!(danger_band(0.82, &t), DangerBand::Red);
        assert_eq!(danger_band(0.999, &t), DangerBand::Black);
        assert_eq!(danger_band(0.0, &t), DangerBand::Green);
    }

    proptest! {
        #[test]
        fn raising_a_value_never_lowers_its_band(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let t = [0.35, 0.60, 0.82];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(danger_band(lo, &t) <= danger_band(hi, &t));
        }
    }

    #[test]
    fn single_class_fills_everything() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let reg = vec![Some(0); 50];
        let l = regional_quantile("x", &names(1), &v, &reg, &names(1), &[&[1.0]], &[0.0, 1.0]).unwrap();
        assert!(l.cells.iter().all(|c| *c == Some(0)));
    }

    #[test]
    fn halves_split_within_one_cell() {
        let v: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        let reg = vec![Some(0); 37];
        let l = regional_quantile("x", &names(2), &v, &reg, &names(1), &[&[0.5, 0.5]], &[0.0, 0.5, 1.0]).unwrap();
        let c = l.counts_in(&reg, 0);
        assert!((c[0] as f64 - 18.5).abs() <= 1.0 && (c[1] as f64 - 18.5).abs() <= 1.0);
    }

    /// Counting oracle on a 64x64 raster split into four irregular regions.
    #[test]
    fn per_region_histograms_within_one_cell() {
        let n = 64 * 64;
        let v: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.618).sin() + ((i / 64) as f64 * 0.1).cos()).collect();
        let reg: Vec<Option<usize>> = (0..n)
            .map(|i| {
                let (c, r) = (i % 64, i / 64);
                if (c + r) % 17 == 0 {
                    None
                } else {
                    Some(((c * c + 3 * r) / 700) % 4)
                }
            })
            .collect();
        let mixes: [&[f64]; 4] = [&[0.2, 0.3, 0.5], &[0.6, 0.0, 0.4], &[1.0 / 3.0; 3], &[0.05, 0.9, 0.05]];
        let edges = [0.0, 0.3, 0.7, 1.0];
        let l = regional_quantile("x", &names(3), &v, &reg, &names(4), &mixes, &edges).unwrap();
        for r in 0..4 {
            let size = reg.iter().filter(|g| **g == Some(r)).count();
            let counts = l.counts_in(&reg, r);
            for (c, &k) in counts.iter().enumerate() {
                assert!((k as f64 - mixes[r][c] * size as f64).abs() <= 1.0, "region {r} class {c}: {k} of {size}");
            }
        }
        // Water stays unassigned.
        for (c, g) in l.cells.iter().zip(&reg) {
            assert_eq!(c.is_none(), g.is_none());
        }
    }

    #[test]
    fn levels_fall_inside_their_class_interval_and_keep_order() {
        let n = 500;
        let v: Vec<f64> = (0..n).map(|i| ((i * 37) % 499) as f64).collect();
        let reg = vec![Some(0); n];
        let mix = [0.35, 0.25, 0.22, 0.18];
        let edges = [0.0, 0.35, 0.60, 0.82, 1.0];
        let l = regional_quantile("danger", &names(4), &v, &reg, &names(1), &[&mix], &edges).unwrap();
        let t = [0.35, 0.60, 0.82];
        for i in 0..n {
            assert_eq!(danger_band(l.level[i], &t).index(), l.cells[i].unwrap());
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        for w in idx.windows(2) {
            assert!(l.level[w[0]] < l.level[w[1]]);
        }
    }

    #[test]
    fn tiny_regions_fall_back_to_global_quantiles() {
        let v: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut reg = vec![Some(0); 40];
        reg[39] = Some(1);
        let mix: &[f64] = &[0.5, 0.5];
        let l = regional_quantile("x", &names(2), &v, &reg, &names(2), &[mix, mix], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(l.fallbacks, vec!["c1".to_string()]);
        assert_eq!(l.cells[39], Some(1));
    }

    #[test]
    fn island_edges_are_water() {
        let g = 32;
        let raw = vec![0.5; g * g];
        let mut raw2 = raw.clone();
        raw2[0] = 0.0;
        raw2[1] = 1.0;
        let h = island_height(&raw2, g, [0.5, 0.9]);
        assert_eq!(h[0], 0.0);
        let centre = (g / 2) * g + g / 2;
        assert!((h[centre] - 0.5).abs() < 1e-12);
        assert!(h.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
