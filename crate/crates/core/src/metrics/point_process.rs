//! Second-order point-pattern summaries and coverage distance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geom::torus_delta;

/// How pair distances are measured and corrected near the window edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Square torus of the given side: minimal-image distances, no weighting.
    Torus,
    /// Bounded square `[0, side]^2` with translation weights
    /// `A / ((side - |dx|)(side - |dy|))`.
    Translation,
}

pub const MIN_POINTS: usize = 10;

/// Pair displacements and weights within `rmax`, each unordered pair once.
fn pairs(points: &[[f64; 2]], side: f64, edge: EdgeMode, rmax: f64) -> Vec<(f64, f64)> {
    let area = side * side;
    let r2 = rmax * rmax;
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let (dx, dy) = match edge {
                EdgeMode::Torus => (
                    torus_delta(points[i][0], points[j][0], side),
                    torus_delta(points[i][1], points[j][1], side),
                ),
                EdgeMode::Translation => (points[j][0] - points[i][0], points[j][1] - points[i][1]),
            };
            let d2 = dx * dx + dy * dy;
            if d2 > r2 {
                continue;
            }
            let w = match edge {
                EdgeMode::Torus => 1.0,
                EdgeMode::Translation => {
                    let ov = (side - dx.abs()) * (side - dy.abs());
                    if ov <= 0.0 {
                        continue;
                    }
                    area / ov
                }
            };
            out.push((d2.sqrt(), w));
        }
    }
    out
}

/// Ripley's `K(r) = A / (n (n-1)) * sum_{i != j} w_ij 1[d_ij <= r]`.
pub fn ripley_k(points: &[[f64; 2]], radii: &[f64], side: f64, edge: EdgeMode) -> Result<Vec<f64>, MetricsError> {
    let n = points.len();
    if n < MIN_POINTS {
        return Err(MetricsError::TooFew { needed: MIN_POINTS, got: n });
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let pr = pairs(points, side, edge, rmax);
    let scale = side * side / (n as f64 * (n as f64 - 1.0));
    Ok(radii
        .iter()
        .map(|&r| 2.0 * scale * pr.iter().filter(|(d, _)| *d <= r).map(|(_, w)| w).sum::<f64>())
        .collect())
}

/// `K(r) / (pi r^2)`: 1 under complete spatial randomness.
pub fn k_ratio(points: &[[f64; 2]], radii: &[f64], side: f64, edge: EdgeMode) -> Result<Vec<f64>, MetricsError> {
    Ok(ripley_k(points, radii, side, edge)?.iter().zip(radii).map(|(k, r)| k / (PI * r * r)).collect())
}

/// Pair correlation `g(r)` with an Epanechnikov kernel of half-width
/// `bandwidth`.
pub fn pair_correlation(
    points: &[[f64; 2]],
    radii: &[f64],
    bandwidth: f64,
    side: f64,
    edge: EdgeMode,
) -> Result<Vec<f64>, MetricsError> {
    let n = points.len();
    if n < MIN_POINTS {
        return Err(MetricsError::TooFew { needed: MIN_POINTS, got: n });
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max) + bandwidth;
    let pr = pairs(points, side, edge, rmax);
    let scale = side * side / (n as f64 * (n as f64 - 1.0));
    Ok(radii
        .iter()
        .map(|&r| {
            let mut s = 0.0;
            for &(d, w) in &pr {
                let u = (r - d) / bandwidth;
                if u.abs() < 1.0 {
                    s += w * 0.75 * (1.0 - u * u) / bandwidth;
                }
            }
            2.0 * scale * s / (2.0 * PI * r)
        })
        .collect())
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nn_distance(points: &[[f64; 2]], side: f64, edge: EdgeMode) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let (dx, dy) = match edge {
                EdgeMode::Torus => (torus_delta(p[0], q[0], side), torus_delta(p[1], q[1], side)),
                EdgeMode::Translation => (q[0] - p[0], q[1] - p[1]),
            };
            best = best.min(dx * dx + dy * dy);
        }
        total += best.sqrt();
    }
    Some(total / points.len() as f64)
}

/// Mean over probes of the Euclidean distance to the nearest entity.
pub fn coverage_distance(entities: &[[f64; 2]], probes: &[[f64; 2]]) -> Option<f64> {
    if entities.is_empty() || probes.is_empty() {
        return None;
    }
    let total: f64 = probes
        .iter()
        .map(|p| {
            entities
                .iter()
                .map(|e| crate::geom::dist2(*p, *e))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Some(total / probes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn csr(n: usize, side: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect()
    }

    #[test]
    fn csr_k_ratio_near_one() {
        let pts = csr(1000, 100.0, 1);
        let radii = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        for edge in [EdgeMode::Torus, EdgeMode::Translation] {
            let k = k_ratio(&pts, &radii, 100.0, edge).unwrap();
            for v in &k[2..4] {
                assert!((v - 1.0).abs() < 0.1, "{edge:?} {k:?}");
            }
        }
    }

    #[test]
    fn lattice_has_exclusion_gap() {
        let pts: Vec<[f64; 2]> = (0..100).map(|i| [(i % 10) as f64 * 10.0 + 5.0, (i / 10) as f64 * 10.0 + 5.0]).collect();
        let g = pair_correlation(&pts, &[3.0, 5.0, 7.0], 1.0, 100.0, EdgeMode::Torus).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let g10 = pair_correlation(&pts, &[10.0], 1.0, 100.0, EdgeMode::Torus).unwrap();
        assert!(g10[0] > 1.0);
    }

    #[test]
    fn cluster_inflates_k() {
        let pts = vec![[50.0, 50.0]; 20];
        let k = k_ratio(&pts, &[1.0], 100.0, EdgeMode::Translation).unwrap();
        assert!(k[0] > 100.0);
        assert!(ripley_k(&pts[..5], &[1.0], 100.0, EdgeMode::Torus).is_err());
    }

    #[test]
    fn coverage_distance_quadrature() {
        // Single entity at the centre of a side-2 square. Mean distance by
        // midpoint quadrature on a fine grid versus a 4096-probe estimate.
        let m = 2000;
        let h = 2.0 / m as f64;
        let mut exact = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -1.0 + (i as f64 + 0.5) * h;
                let y = -1.0 + (j as f64 + 0.5) * h;
                exact += (x * x + y * y).sqrt();
            }
        }
        exact /= (m * m) as f64;
        // Closed form (sqrt2 + asinh 1) / 3 for the unit half-width square.
        assert!((exact - (2f64.sqrt() + 1f64.asinh()) / 3.0).abs() < 1e-6);
        let probes = csr(4096, 2.0, 7);
        let est = coverage_distance(&[[1.0, 1.0]], &probes).unwrap();
        assert!((est / exact - 1.0).abs() < 0.02, "{est} vs {exact}");
    }

    #[test]
    fn coverage_distance_basics() {
        assert_eq!(coverage_distance(&[[1.0, 1.0]], &[[1.0, 1.0]]), Some(0.0));
        assert_eq!(coverage_distance(&[], &[[1.0, 1.0]]), None);
        let probes = csr(500, 10.0, 3);
        let sparse = coverage_distance(&[[5.0, 5.0]], &probes).unwrap();
        let dense = coverage_distance(&csr(50, 10.0, 4), &probes).unwrap();
        assert!(dense < sparse);
    }

    #[test]
    fn nn_distance_on_lattice() {
        let pts: Vec<[f64; 2]> = (0..100).map(|i| [(i % 10) as f64 * 10.0, (i / 10) as f64 * 10.0]).collect();
        assert!((mean_nn_distance(&pts, 100.0, EdgeMode::Torus).unwrap() - 10.0).abs() < 1e-12);
    }
}
