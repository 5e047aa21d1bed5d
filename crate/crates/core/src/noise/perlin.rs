//! Classic 3D gradient noise with a seeded 256-entry permutation table.

use super::seed::{rng_from_seed, SimRng};
use rand::RngCore;

/// Supremum of the raw interpolated gradient sum over all gradient
/// assignments (reached near (0.355, 0.519, 0.5) inside a cell). Dividing by it
/// makes `[-1, 1]` a tight range.
pub const AMPLITUDE_BOUND: f64 = 1.036_354;
const INV_BOUND: f64 = 1.0 / AMPLITUDE_BOUND;

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// `floor` via truncation; the baseline x86-64 target lacks a rounding
/// instruction and would otherwise call into libm.
#[inline(always)]
pub(crate) fn fast_floor(x: f64) -> i64 {
    let i = x as i64;
    if (i as f64) > x {
        i - 1
    } else {
        i
    }
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

/// The 12 cube-edge gradients, four repeated to fill 16 slots. A table
/// lookup keeps the inner loop free of unpredictable branches.
const GRADS: [[f64; 3]; 16] = [
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [-1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [-1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [-1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, -1.0, 1.0],
    [0.0, 1.0, -1.0],
    [0.0, -1.0, -1.0],
    [1.0, 1.0, 0.0],
    [0.0, -1.0, 1.0],
    [-1.0, 1.0, 0.0],
    [0.0, -1.0, -1.0],
];

#[inline(always)]
fn grad(hash: u8, x: f64, y: f64, z: f64) -> f64 {
    let g = &GRADS[(hash & 15) as usize];
    g[0] * x + g[1] * y + g[2] * z
}

/// Lattice indices `(i, i + 1)` wrapped to `period` (0 = no wrap), reduced to
/// the table size.
#[inline(always)]
fn lattice_pair(i: i64, period: i64) -> (usize, usize) {
    if period > 0 {
        let a = i.rem_euclid(period);
        let b = if a + 1 == period { 0 } else { a + 1 };
        ((a & 255) as usize, (b & 255) as usize)
    } else {
        ((i & 255) as usize, ((i + 1) & 255) as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationTable {
    p: Box<[u8; 512]>,
}

impl PermutationTable {
    /// Fisher-Yates shuffle of `0..=255` driven by the seed's ChaCha8 stream.
    /// Index selection uses the high word of a 64x64 multiply so the table
    /// depends only on the raw stream.
    pub fn new(seed: u64) -> Self {
        let mut rng: SimRng = rng_from_seed(seed);
        let mut base = [0u8; 256];
        for (i, v) in base.iter_mut().enumerate() {
            *v = i as u8;
        }
        for i in (1..256usize).rev() {
            let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
            base.swap(i, j);
        }
        let mut p = Box::new([0u8; 512]);
        p[..256].copy_from_slice(&base);
        p[256..].copy_from_slice(&base);
        Self { p }
    }

    pub fn noise3(&self, x: f64, y: f64, z: f64) -> f64 {
        self.noise3_periodic(x, y, z, 0, 0)
    }

    /// Noise with the x/y lattice wrapped to the given integer periods.
    pub fn noise3_periodic(&self, x: f64, y: f64, z: f64, px: i64, py: i64) -> f64 {
        let (xi, yi) = (fast_floor(x), fast_floor(y));
        let (x0, x1) = lattice_pair(xi, px);
        let (y0, y1) = lattice_pair(yi, py);
        self.noise3_cells([x0, x1], x - xi as f64, [y0, y1], y - yi as f64, z)
    }

    /// Core evaluation from pre-reduced x/y lattice corners and in-cell
    /// fractions; `z` is unwrapped.
    #[inline]
    pub(crate) fn noise3_cells(&self, xs: [usize; 2], fx: f64, ys: [usize; 2], fy: f64, z: f64) -> f64 {
        let zi = fast_floor(z);
        let fz = z - zi as f64;
        let (z0, z1) = lattice_pair(zi, 0);
        let ([x0, x1], [y0, y1]) = (xs, ys);

        let p = &self.p;
        // Masks let the compiler drop the bounds checks (all sums are < 512).
        let ha = |a: usize, b: usize| p[(p[a & 255] as usize + b) & 511] as usize;
        let (a0, a1) = (ha(x0, y0), ha(x0, y1));
        let (b0, b1) = (ha(x1, y0), ha(x1, y1));
        let h = |ab: usize, c: usize| p[(ab + c) & 511];

        let (u, v, w) = (fade(fx), fade(fy), fade(fz));
        let (gx, gy, gz) = (fx - 1.0, fy - 1.0, fz - 1.0);

        let raw = lerp(
            w,
            lerp(
                v,
                lerp(u, grad(h(a0, z0), fx, fy, fz), grad(h(b0, z0), gx, fy, fz)),
                lerp(u, grad(h(a1, z0), fx, gy, fz), grad(h(b1, z0), gx, gy, fz)),
            ),
            lerp(
                v,
                lerp(u, grad(h(a0, z1), fx, fy, gz), grad(h(b0, z1), gx, fy, gz)),
                lerp(u, grad(h(a1, z1), fx, gy, gz), grad(h(b1, z1), gx, gy, gz)),
            ),
        );
        (raw * INV_BOUND).clamp(-1.0, 1.0)
    }
}

/// One-off noise evaluation. Builds the permutation table for `seed` on every
/// call; hot paths should hold a [`PermutationTable`] instead.
pub fn perlin3(x: f64, y: f64, t: f64, seed: u64) -> f64 {
    PermutationTable::new(seed).noise3(x, y, t)
}
