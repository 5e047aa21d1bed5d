//! Pairwise spatial structure of headings and speeds, and population diversity.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geom::{angle_diff, torus_delta};

/// Distance bin edges in world units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBins {
    edges: Vec<f64>,
}

impl DistanceBins {
    pub fn new(edges: Vec<f64>) -> Result<Self, MetricsError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
            return Err(MetricsError::InvalidBins);
        }
        Ok(Self { edges })
    }

    /// `[0, 10, 20, 30, 40, 60, 80, 100, 140, 180, 240, 320, 420, 520]`.
    pub fn extended() -> Self {
        Self::new(vec![0., 10., 20., 30., 40., 60., 80., 100., 140., 180., 240., 320., 420., 520.]).unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin index of distance `d`, half-open `[lo, hi)`.
    #[inline]
    pub fn index(&self, d: f64) -> Option<usize> {
        if d < self.edges[0] || d >= *self.edges.last().unwrap() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= d) - 1)
    }
}

/// Per-bin pair statistics. `None` marks an empty (undefined) bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialStats {
    pub bin_centers: Vec<f64>,
    pub pair_counts: Vec<u64>,
    pub s_dir: Vec<Option<f64>>,
    pub c_v: Vec<Option<f64>>,
    pub gamma_theta: Vec<Option<f64>>,
    pub gamma_v: Vec<Option<f64>>,
    pub corr_len_s_dir: Option<f64>,
    pub corr_len_c_v: Option<f64>,
}

#[derive(Clone, Copy, Default)]
struct BinAcc {
    n: u64,
    cos: f64,
    dtheta2: f64,
    dv2: f64,
    // Symmetrised speed moments: each pair contributes both (vi, vj) and (vj, vi).
    sv: f64,
    sv2: f64,
    svv: f64,
}

/// Pair statistics on a torus of side `l`.
///
/// `S_dir` is the mean of `cos(dtheta)`, `C_v` the (symmetrised) Pearson
/// correlation of paired speeds, and the semivariograms are half mean squared
/// differences with angles wrapped to `[-pi, pi]`.
pub fn spatial_stats(
    positions: &[[f64; 2]],
    headings: &[f64],
    speeds: &[f64],
    l: f64,
    bins: &DistanceBins,
    decay_fraction: f64,
) -> Result<SpatialStats, MetricsError> {
    let n = positions.len();
    if n < 2 {
        return Err(MetricsError::TooFew { needed: 2, got: n });
    }
    assert!(headings.len() == n && speeds.len() == n);
    let cs: Vec<(f64, f64)> = headings.iter().map(|t| (t.cos(), t.sin())).collect();
    let rmax2 = bins.edges().last().unwrap().powi(2);
    let mut acc = vec![BinAcc::default(); bins.len()];
    for i in 0..n {
        let [xi, yi] = positions[i];
        for j in (i + 1)..n {
            let dx = torus_delta(xi, positions[j][0], l);
            let dy = torus_delta(yi, positions[j][1], l);
            let d2 = dx * dx + dy * dy;
            if d2 >= rmax2 {
                continue;
            }
            let Some(b) = bins.index(d2.sqrt()) else { continue };
            let a = &mut acc[b];
            a.n += 1;
            a.cos += cs[i].0 * cs[j].0 + cs[i].1 * cs[j].1;
            let dt = angle_diff(headings[i], headings[j]);
            a.dtheta2 += dt * dt;
            let (vi, vj) = (speeds[i], speeds[j]);
            a.dv2 += (vi - vj) * (vi - vj);
            a.sv += vi + vj;
            a.sv2 += vi * vi + vj * vj;
            a.svv += 2.0 * vi * vj;
        }
    }
    let mut s_dir = Vec::with_capacity(bins.len());
    let mut c_v = Vec::with_capacity(bins.len());
    let mut gamma_theta = Vec::with_capacity(bins.len());
    let mut gamma_v = Vec::with_capacity(bins.len());
    for a in &acc {
        if a.n == 0 {
            s_dir.push(None);
            c_v.push(None);
            gamma_theta.push(None);
            gamma_v.push(None);
            continue;
        }
        let nf = a.n as f64;
        s_dir.push(Some(a.cos / nf));
        gamma_theta.push(Some(0.5 * a.dtheta2 / nf));
        gamma_v.push(Some(0.5 * a.dv2 / nf));
        let m = a.sv / (2.0 * nf);
        let var = a.sv2 / (2.0 * nf) - m * m;
        let cov = a.svv / (2.0 * nf) - m * m;
        c_v.push(if var > 1e-15 { Some(cov / var) } else { None });
    }
    let centers = bins.centers();
    Ok(SpatialStats {
        corr_len_s_dir: correlation_length(&centers, &s_dir, decay_fraction),
        corr_len_c_v: correlation_length(&centers, &c_v, decay_fraction),
        bin_centers: centers,
        pair_counts: acc.iter().map(|a| a.n).collect(),
        s_dir,
        c_v,
        gamma_theta,
        gamma_v,
    })
}

/// First bin centre at which the statistic falls to `fraction` of its value
/// in the first defined bin.
pub fn correlation_length(centers: &[f64], values: &[Option<f64>], fraction: f64) -> Option<f64> {
    let (first_idx, first) = values.iter().enumerate().find_map(|(i, v)| v.map(|v| (i, v)))?;
    if first <= 0.0 {
        return None;
    }
    let threshold = fraction * first;
    values[first_idx..]
        .iter()
        .zip(&centers[first_idx..])
        .find(|(v, _)| matches!(v, Some(x) if *x <= threshold))
        .map(|(_, &c)| c)
}

/// Mean `cos(dtheta)` over pairs closer than `r` (torus metric), using a
/// uniform cell grid. Equals the first-bin `S_dir` of [`spatial_stats`] when
/// the first bin is `[0, r)`.
pub fn directional_similarity_within(positions: &[[f64; 2]], headings: &[f64], l: f64, r: f64) -> Option<f64> {
    let n = positions.len();
    let cells = ((l / r).floor() as usize).max(1);
    let cell = l / cells as f64;
    let cell_of = |p: [f64; 2]| -> (usize, usize) {
        (((p[0] / cell) as usize).min(cells - 1), ((p[1] / cell) as usize).min(cells - 1))
    };
    let mut heads = vec![usize::MAX; cells * cells];
    let mut next = vec![usize::MAX; n];
    for (i, &p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        let c = cy * cells + cx;
        next[i] = heads[c];
        heads[c] = i;
    }
    let cs: Vec<(f64, f64)> = headings.iter().map(|t| (t.cos(), t.sin())).collect();
    let r2 = r * r;
    let (mut sum, mut count) = (0.0, 0u64);
    let span: Vec<isize> = if cells >= 3 { vec![-1, 0, 1] } else { (0..cells as isize).collect() };
    for i in 0..n {
        let (cx, cy) = cell_of(positions[i]);
        for &oy in &span {
            for &ox in &span {
                let (nx, ny) = if cells >= 3 {
                    (
                        (cx as isize + ox).rem_euclid(cells as isize) as usize,
                        (cy as isize + oy).rem_euclid(cells as isize) as usize,
                    )
                } else {
                    (ox as usize, oy as usize)
                };
                let mut j = heads[ny * cells + nx];
                while j != usize::MAX {
                    if j > i {
                        let dx = torus_delta(positions[i][0], positions[j][0], l);
                        let dy = torus_delta(positions[i][1], positions[j][1], l);
                        if dx * dx + dy * dy < r2 {
                            sum += cs[i].0 * cs[j].0 + cs[i].1 * cs[j].1;
                            count += 1;
                        }
                    }
                    j = next[j];
                }
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub polarization: f64,
    pub heading_entropy: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub speed_skew: Option<f64>,
}

pub const ENTROPY_BINS: usize = 36;

/// Polarisation, 36-bin heading entropy (nats) and speed moments.
pub fn diversity_stats(headings: &[f64], speeds: &[f64]) -> Result<DiversityStats, MetricsError> {
    if headings.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    Ok(DiversityStats {
        polarization: polarization(headings),
        heading_entropy: heading_entropy(headings),
        speed_mean: super::stats::mean(speeds).unwrap_or(0.0),
        speed_std: super::stats::std_dev(speeds).unwrap_or(0.0),
        speed_skew: super::stats::skewness(speeds),
    })
}

pub fn polarization(headings: &[f64]) -> f64 {
    let (sx, sy) = headings.iter().fold((0.0, 0.0), |(x, y), t| (x + t.cos(), y + t.sin()));
    (sx * sx + sy * sy).sqrt() / headings.len() as f64
}

pub fn heading_entropy(headings: &[f64]) -> f64 {
    let mut hist = [0u64; ENTROPY_BINS];
    for &t in headings {
        let b = ((crate::geom::wrap_angle(t) / TAU) * ENTROPY_BINS as f64) as usize;
        hist[b.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = headings.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn uniform_agents(n: usize, l: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = (0..n).map(|_| [rng.random::<f64>() * l, rng.random::<f64>() * l]).collect();
        let h = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
        let v = (0..n).map(|_| 0.6 + 0.8 * rng.random::<f64>()).collect();
        (p, h, v)
    }

    #[test]
    fn bins_index_half_open() {
        let b = DistanceBins::extended();
        assert_eq!(b.index(0.0), Some(0));
        assert_eq!(b.index(9.999), Some(0));
        assert_eq!(b.index(10.0), Some(1));
        assert_eq!(b.index(520.0), None);
        assert!(DistanceBins::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn aligned_headings_give_unit_similarity() {
        let (p, _, v) = uniform_agents(300, 200.0, 1);
        let h = vec![1.3; 300];
        let s = spatial_stats(&p, &h, &v, 200.0, &DistanceBins::extended(), 0.5).unwrap();
        for (sd, g) in s.s_dir.iter().zip(&s.gamma_theta) {
            if let Some(sd) = sd {
                assert!((sd - 1.0).abs() < 1e-12);
                assert_eq!(*g, Some(0.0));
            }
        }
    }

    #[test]
    fn equal_speeds_zero_semivariogram() {
        let (p, h, _) = uniform_agents(200, 100.0, 2);
        let s = spatial_stats(&p, &h, &vec![1.0; 200], 100.0, &DistanceBins::extended(), 0.5).unwrap();
        assert!(s.gamma_v.iter().flatten().all(|&g| g == 0.0));
        assert!(s.c_v.iter().all(|c| c.is_none()));
    }

    #[test]
    fn empty_bins_flagged() {
        let p = vec![[0.0, 0.0], [1.0, 0.0]];
        let s = spatial_stats(&p, &[0.0, 0.0], &[1.0, 1.0], 1000.0, &DistanceBins::extended(), 0.5).unwrap();
        assert_eq!(s.s_dir[0], Some(1.0));
        assert!(s.s_dir[1..].iter().all(Option::is_none));
    }

    #[test]
    fn grid_similarity_matches_all_pairs() {
        let (p, h, v) = uniform_agents(2000, 1000.0, 3);
        let bins = DistanceBins::new(vec![0.0, 10.0, 20.0]).unwrap();
        let full = spatial_stats(&p, &h, &v, 1000.0, &bins, 0.5).unwrap();
        let fast = directional_similarity_within(&p, &h, 1000.0, 10.0).unwrap();
        assert!((full.s_dir[0].unwrap() - fast).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let (p, h, v) = uniform_agents(150, 100.0, 4);
        let bins = DistanceBins::extended();
        let a = spatial_stats(&p, &h, &v, 100.0, &bins, 0.5).unwrap();
        let mut idx: Vec<usize> = (0..150).collect();
        idx.reverse();
        idx.swap(3, 77);
        let p2: Vec<_> = idx.iter().map(|&i| p[i]).collect();
        let h2: Vec<_> = idx.iter().map(|&i| h[i]).collect();
        let v2: Vec<_> = idx.iter().map(|&i| v[i]).collect();
        let b = spatial_stats(&p2, &h2, &v2, 100.0, &bins, 0.5).unwrap();
        assert_eq!(a.pair_counts, b.pair_counts);
        for (x, y) in a.s_dir.iter().zip(&b.s_dir) {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                (x, y) => assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn correlation_length_first_crossing() {
        let c = [5.0, 15.0, 25.0, 35.0];
        let v = [Some(1.0), Some(0.7), Some(0.4), Some(0.1)];
        assert_eq!(correlation_length(&c, &v, 0.5), Some(25.0));
        assert_eq!(correlation_length(&c, &[None, Some(1.0), Some(0.9), Some(0.9)], 0.5), None);
    }

    #[test]
    fn diversity_examples() {
        assert!((polarization(&[0.7; 10]) - 1.0).abs() < 1e-12);
        assert!(polarization(&[0.0, PI]) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>() * TAU).collect();
        assert!((heading_entropy(&h) - 36f64.ln()).abs() < 0.01);
    }
}
