//! Regional balance of counts on a rectangular grid.

use serde::{Deserialize, Serialize};

/// Row-major `nx * ny` counts of points falling in each grid region.
pub fn region_counts(points: &[[f64; 2]], side: f64, nx: usize, ny: usize) -> Vec<f64> {
    let mut counts = vec![0.0; nx * ny];
    for p in points {
        let cx = ((p[0] / side * nx as f64) as usize).min(nx - 1);
        let cy = ((p[1] / side * ny as f64) as usize).min(ny - 1);
        counts[cy * nx + cx] += 1.0;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceStats {
    /// Std over mean of regional counts (population std).
    pub regional_cv: Option<f64>,
    /// Moran's I with row-standardised rook weights; `None` if all counts equal.
    pub morans_i: Option<f64>,
}

pub fn spatial_balance(counts: &[f64], nx: usize, ny: usize) -> BalanceStats {
    assert_eq!(counts.len(), nx * ny);
    let n = counts.len() as f64;
    let m = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n;
    let regional_cv = if var == 0.0 {
        Some(0.0)
    } else if m > 0.0 {
        Some(var.sqrt() / m)
    } else {
        None
    };
    BalanceStats { regional_cv, morans_i: morans_i(counts, nx, ny) }
}

/// Moran's I on a grid with rook adjacency, rows of `W` summing to one.
pub fn morans_i(values: &[f64], nx: usize, ny: usize) -> Option<f64> {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let z: Vec<f64> = values.iter().map(|v| v - m).collect();
    let denom: f64 = z.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return None;
    }
    let mut num = 0.0;
    let mut s0 = 0.0;
    for y in 0..ny {
        for x in 0..nx {
            let mut nbrs = [None; 4];
            if x > 0 {
                nbrs[0] = Some(y * nx + x - 1);
            }
            if x + 1 < nx {
                nbrs[1] = Some(y * nx + x + 1);
            }
            if y > 0 {
                nbrs[2] = Some((y - 1) * nx + x);
            }
            if y + 1 < ny {
                nbrs[3] = Some((y + 1) * nx + x);
            }
            let k = nbrs.iter().flatten().count();
            if k == 0 {
                continue;
            }
            let w = 1.0 / k as f64;
            let i = y * nx + x;
            for &j in nbrs.iter().flatten() {
                num += w * z[i] * z[j];
            }
            s0 += 1.0;
        }
    }
    Some(n / s0 * num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn even_counts() {
        let b = spatial_balance(&[5.0; 64], 8, 8);
        assert_eq!(b.regional_cv, Some(0.0));
        assert_eq!(b.morans_i, None);
    }

    #[test]
    fn checkerboard_is_perfectly_dispersed() {
        let v: Vec<f64> = (0..64).map(|i| if (i % 8 + i / 8) % 2 == 0 { 10.0 } else { 2.0 }).collect();
        assert!((morans_i(&v, 8, 8).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn halves_are_positively_autocorrelated() {
        let v: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 10.0 } else { 2.0 }).collect();
        assert!(morans_i(&v, 8, 8).unwrap() > 0.7);
    }

    #[test]
    fn region_counting() {
        let c = region_counts(&[[0.0, 0.0], [99.9, 99.9], [100.0, 50.0]], 100.0, 2, 2);
        assert_eq!(c, vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn uniform_points_null() {
        // A single 8x8 realisation has sd ~0.1, so average over replicates.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 50;
        let mut sum = 0.0;
        for _ in 0..reps {
            let pts: Vec<[f64; 2]> = (0..10_000).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            sum += morans_i(&region_counts(&pts, 1.0, 8, 8), 8, 8).unwrap();
        }
        let i = sum / reps as f64;
        assert!(i.abs() < 0.05, "{i}");
    }
}
