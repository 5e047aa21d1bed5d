//! Multi-octave fields with drift/resample temporal coherence.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::perlin::{fast_floor, PermutationTable};
use super::seed::{derive_indexed, splitmix_finalize, unit_from_bits};
use super::NoiseError;

/// Parameters for one octave stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Cycles per world unit.
    pub frequency: f64,
    pub octaves: u32,
    pub persistence: f64,
    pub lacunarity: f64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit `(x, y, t)` offsets; derived from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<[f64; 3]>,
}

impl NoiseSpec {
    pub fn new(frequency: f64, octaves: u32, persistence: f64, lacunarity: f64) -> Self {
        Self { frequency, octaves, persistence, lacunarity, seed: 0, offsets: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_offsets(mut self, offsets: [f64; 3]) -> Self {
        self.offsets = Some(offsets);
        self
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |m: &str| Err(NoiseError::InvalidSpec(m.to_string()));
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad("frequency must be > 0");
        }
        if self.octaves == 0 {
            return bad("octaves must be >= 1");
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return bad("persistence must lie in (0, 1]");
        }
        if !(self.lacunarity.is_finite() && self.lacunarity > 1.0) {
            return bad("lacunarity must be > 1");
        }
        if let Some(o) = self.offsets {
            if o.iter().any(|v| !v.is_finite()) {
                return bad("offsets must be finite");
            }
        }
        Ok(())
    }

    /// `A_K = sum_{k<K} p^k`.
    pub fn amplitude_norm(&self) -> f64 {
        (0..self.octaves).map(|k| self.persistence.powi(k as i32)).sum()
    }

    /// Offsets in `[0, 256)` per axis.
    pub fn offsets(&self) -> [f64; 3] {
        self.offsets.unwrap_or_else(|| cycle_offsets(self.seed, 0))
    }

    /// Short stable hash of the canonical JSON form (offsets resolved).
    pub fn spec_hash(&self) -> String {
        let canonical = NoiseSpec { offsets: Some(self.offsets()), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("noise spec serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Offsets for a given resample cycle, drawn from the spec seed.
fn cycle_offsets(seed: u64, cycle: u64) -> [f64; 3] {
    let base = derive_indexed(seed, cycle);
    let mut out = [0.0; 3];
    for (axis, o) in out.iter_mut().enumerate() {
        let bits = splitmix_finalize(base.wrapping_add(axis as u64 + 1));
        *o = unit_from_bits(bits) * 256.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TemporalMode {
    /// Phase advances by `velocity` phase units per tick.
    Drift { velocity: f64 },
    /// Offsets are re-drawn every `cycle` ticks; static within a cycle.
    Resample { cycle: u64 },
}

impl TemporalMode {
    pub fn stationary() -> Self {
        TemporalMode::Drift { velocity: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BoundaryMode {
    Unbounded,
    Toroidal { period: f64 },
}

#[derive(Clone, Debug)]
struct Octave {
    frequency: f64,
    amplitude: f64,
    /// Lattice period in cells, 0 when unbounded.
    lattice_period: i64,
    /// Toroidal offsets split into a lattice shift (mod the period) and a
    /// fraction, so sampling needs no integer division.
    shift: [i64; 2],
    frac: [f64; 2],
}

impl Octave {
    fn set_offsets(&mut self, ox: f64, oy: f64) {
        if self.lattice_period > 0 {
            for (k, o) in [ox, oy].into_iter().enumerate() {
                let f = o.floor();
                self.shift[k] = (f as i64).rem_euclid(self.lattice_period);
                self.frac[k] = o - f;
            }
        }
    }

    /// Wrapped corner pair and fraction along one axis for a world
    /// coordinate already reduced to `[0, period)`.
    #[inline(always)]
    fn axis(&self, x: f64, k: usize) -> ([usize; 2], f64) {
        let s = self.frequency * x + self.frac[k];
        let si = fast_floor(s);
        let p = self.lattice_period;
        let mut a = si + self.shift[k];
        while a >= p {
            a -= p;
        }
        let b = if a + 1 == p { 0 } else { a + 1 };
        ([(a & 255) as usize, (b & 255) as usize], s - si as f64)
    }
}

/// Evaluator for one normalised fBm field `n(x, t)` in `[-1, 1]`.
///
/// Evaluation is a pure read; only [`FieldSampler::advance`] mutates.
#[derive(Clone, Debug)]
pub struct FieldSampler {
    spec: NoiseSpec,
    table: PermutationTable,
    temporal: TemporalMode,
    boundary: BoundaryMode,
    octaves: Vec<Octave>,
    norm: f64,
    tick: u64,
    phase: f64,
    offsets: [f64; 3],
}

impl FieldSampler {
    pub fn new(spec: NoiseSpec, temporal: TemporalMode, boundary: BoundaryMode) -> Result<Self, NoiseError> {
        spec.validate()?;
        match temporal {
            TemporalMode::Drift { velocity } if !(velocity.is_finite() && velocity >= 0.0) => {
                return Err(NoiseError::InvalidSpec("drift velocity must be finite and >= 0".into()))
            }
            TemporalMode::Resample { cycle: 0 } => {
                return Err(NoiseError::InvalidSpec("resample cycle must be >= 1".into()))
            }
            _ => {}
        }
        let octaves = match boundary {
            BoundaryMode::Unbounded => (0..spec.octaves)
                .map(|k| Octave {
                    frequency: spec.frequency * spec.lacunarity.powi(k as i32),
                    amplitude: spec.persistence.powi(k as i32),
                    lattice_period: 0,
                    shift: [0; 2],
                    frac: [0.0; 2],
                })
                .collect(),
            BoundaryMode::Toroidal { period } => {
                if !(period.is_finite() && period > 0.0) {
                    return Err(NoiseError::InvalidSpec("toroidal period must be > 0".into()));
                }
                // Base frequency snapped so period*f is an integer; each octave's
                // lattice period is the rounded product, frequency follows from it.
                let base_cells = (period * spec.frequency).round().max(1.0);
                (0..spec.octaves)
                    .map(|k| {
                        let cells = (base_cells * spec.lacunarity.powi(k as i32)).round().max(1.0);
                        Octave {
                            frequency: cells / period,
                            amplitude: spec.persistence.powi(k as i32),
                            lattice_period: cells as i64,
                            shift: [0; 2],
                            frac: [0.0; 2],
                        }
                    })
                    .collect()
            }
        };
        let norm = spec.amplitude_norm();
        let offsets = spec.offsets();
        let mut octaves: Vec<Octave> = octaves;
        for o in &mut octaves {
            o.set_offsets(offsets[0], offsets[1]);
        }
        Ok(Self {
            table: PermutationTable::new(spec.seed),
            spec,
            temporal,
            boundary,
            octaves,
            norm,
            tick: 0,
            phase: 0.0,
            offsets,
        })
    }

    /// Static field (no temporal change).
    pub fn stationary(spec: NoiseSpec, boundary: BoundaryMode) -> Result<Self, NoiseError> {
        Self::new(spec, TemporalMode::stationary(), boundary)
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn temporal_mode(&self) -> TemporalMode {
        self.temporal
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Current temporal phase (always 0 in resample mode).
    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn current_offsets(&self) -> [f64; 3] {
        self.offsets
    }

    pub fn amplitude_norm(&self) -> f64 {
        self.norm
    }

    /// Effective per-octave frequencies (snapped in toroidal mode).
    pub fn octave_frequencies(&self) -> Vec<f64> {
        self.octaves.iter().map(|o| o.frequency).collect()
    }

    /// `n(x, t)` at the current phase.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        self.sample_at_phase(x, y, self.phase)
    }

    /// `n(x, t)` at an explicit phase (offsets of the current cycle).
    pub fn sample_at_phase(&self, x: f64, y: f64, phase: f64) -> f64 {
        // Wrapping the world coordinate first makes the seam exact in floating
        // point, not only up to rounding.
        let (x, y) = match self.boundary {
            BoundaryMode::Toroidal { period } => (wrap_coord(x, period), wrap_coord(y, period)),
            BoundaryMode::Unbounded => (x, y),
        };
        let [ox, oy, ot] = self.offsets;
        let t = phase + ot;
        let mut sum = 0.0;
        match self.boundary {
            BoundaryMode::Toroidal { .. } => {
                for o in &self.octaves {
                    let (xs, fx) = o.axis(x, 0);
                    let (ys, fy) = o.axis(y, 1);
                    sum += o.amplitude * self.table.noise3_cells(xs, fx, ys, fy, t);
                }
            }
            BoundaryMode::Unbounded => {
                for o in &self.octaves {
                    sum += o.amplitude * self.table.noise3(o.frequency * x + ox, o.frequency * y + oy, t);
                }
            }
        }
        (sum / self.norm).clamp(-1.0, 1.0)
    }

    /// `(n + 1) / 2` at the current phase.
    #[inline]
    pub fn sample_unit(&self, x: f64, y: f64) -> f64 {
        super::to_unit(self.sample(x, y))
    }

    /// Central-difference gradient with step `h` (world units).
    pub fn gradient(&self, x: f64, y: f64, h: f64) -> [f64; 2] {
        let dx = (self.sample(x + h, y) - self.sample(x - h, y)) / (2.0 * h);
        let dy = (self.sample(x, y + h) - self.sample(x, y - h)) / (2.0 * h);
        [dx, dy]
    }

    /// Number of single-octave noise evaluations per `sample` call.
    pub fn evaluations_per_sample(&self) -> u64 {
        self.octaves.len() as u64
    }

    pub fn advance(&mut self, ticks: u64) {
        let before = self.tick;
        self.tick += ticks;
        match self.temporal {
            TemporalMode::Drift { velocity } => {
                // Computed from the tick count so the phase is independent of
                // how the advance calls were split.
                self.phase = velocity * self.tick as f64;
            }
            TemporalMode::Resample { cycle } => {
                let (c0, c1) = (before / cycle, self.tick / cycle);
                if c0 != c1 {
                    self.offsets = self.offsets_for_cycle(c1);
                    for o in &mut self.octaves {
                        o.set_offsets(self.offsets[0], self.offsets[1]);
                    }
                }
            }
        }
    }

    /// Offsets used during resample cycle `cycle` (cycle 0 uses the spec's).
    pub fn offsets_for_cycle(&self, cycle: u64) -> [f64; 3] {
        if cycle == 0 {
            self.spec.offsets()
        } else {
            cycle_offsets(self.spec.seed, cycle)
        }
    }

    /// Row-major raster of `n` at cell centres; row 0 is the lowest `y`.
    pub fn raster(&self, width: usize, height: usize, cell: f64, origin: [f64; 2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(width * height);
        for r in 0..height {
            let y = origin[1] + (r as f64 + 0.5) * cell;
            for c in 0..width {
                let x = origin[0] + (c as f64 + 0.5) * cell;
                out.push(self.sample(x, y));
            }
        }
        out
    }
}

#[inline(always)]
fn wrap_coord(x: f64, period: f64) -> f64 {
    if (0.0..period).contains(&x) {
        x
    } else {
        x.rem_euclid(period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::perlin::perlin3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unbounded(spec: NoiseSpec) -> FieldSampler {
        FieldSampler::stationary(spec, BoundaryMode::Unbounded).unwrap()
    }

    #[test]
    fn amplitude_norm_geometric_sum() {
        let s = NoiseSpec::new(0.01, 4, 0.5, 2.0);
        assert!((s.amplitude_norm() - 1.875).abs() < 1e-15);
        assert_eq!(NoiseSpec::new(0.01, 1, 0.3, 2.0).amplitude_norm(), 1.0);
    }

    #[test]
    fn single_octave_equals_raw_noise() {
        let spec = NoiseSpec::new(0.05, 1, 0.5, 2.0).with_seed(11);
        let [ox, oy, ot] = spec.offsets();
        let f = unbounded(spec.clone());
        for k in 0..200 {
            let (x, y) = (k as f64 * 3.1, k as f64 * -1.7);
            let want = perlin3(0.05 * x + ox, 0.05 * y + oy, ot, 11);
            assert_eq!(f.sample(x, y), want);
        }
    }

    #[test]
    fn matches_naive_octave_sum() {
        // Independent oracle: direct summation through the free function.
        let spec = NoiseSpec::new(0.01, 4, 0.5, 2.0).with_seed(77);
        let [ox, oy, ot] = spec.offsets();
        let f = unbounded(spec);
        let table = PermutationTable::new(77);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = rng.random::<f64>() * 2000.0 - 1000.0;
            let y = rng.random::<f64>() * 2000.0 - 1000.0;
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..4 {
                let fk = 0.01 * 2f64.powi(k);
                let ak = 0.5f64.powi(k);
                num += ak * table.noise3(fk * x + ox, fk * y + oy, ot);
                den += ak;
            }
            assert!((f.sample(x, y) - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_advances_phase_exactly() {
        let mut f = FieldSampler::new(
            NoiseSpec::new(0.01, 2, 0.5, 2.0),
            TemporalMode::Drift { velocity: 0.002 },
            BoundaryMode::Unbounded,
        )
        .unwrap();
        f.advance(100);
        assert!((f.phase() - 0.2).abs() < 1e-12);
        let mut g = f.clone();
        g.advance(1);
        assert!(g.phase() > f.phase());
    }

    #[test]
    fn resample_changes_offsets_only_at_boundaries() {
        let mut f = FieldSampler::new(
            NoiseSpec::new(0.06, 3, 0.55, 2.0).with_seed(5),
            TemporalMode::Resample { cycle: 600 },
            BoundaryMode::Unbounded,
        )
        .unwrap();
        f.advance(599);
        let before = f.current_offsets();
        let v_before = f.sample(10.0, 20.0);
        f.advance(1);
        let at = f.current_offsets();
        assert_ne!(before, at);
        assert_ne!(v_before, f.sample(10.0, 20.0));
        f.advance(1);
        assert_eq!(at, f.current_offsets());
    }

    #[test]
    fn identical_seeds_replay_identically() {
        let mk = || {
            FieldSampler::new(
                NoiseSpec::new(0.02, 3, 0.5, 2.0).with_seed(9),
                TemporalMode::Drift { velocity: 0.01 },
                BoundaryMode::Toroidal { period: 100.0 },
            )
            .unwrap()
        };
        let (mut a, mut b) = (mk(), mk());
        for step in [1u64, 5, 17, 3] {
            a.advance(step);
            b.advance(step);
            for k in 0..50 {
                let (x, y) = (k as f64 * 1.9, k as f64 * 0.7);
                assert_eq!(a.sample(x, y).to_bits(), b.sample(x, y).to_bits());
            }
        }
    }

    #[test]
    fn toroidal_field_is_seamless() {
        let f = FieldSampler::new(
            NoiseSpec::new(0.011, 4, 0.5, 2.2).with_seed(4),
            TemporalMode::Drift { velocity: 0.002 },
            BoundaryMode::Toroidal { period: 1000.0 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let y = rng.random::<f64>() * 1000.0;
            worst = worst.max((f.sample(0.0, y) - f.sample(1000.0, y)).abs());
            let x = rng.random::<f64>() * 1000.0;
            worst = worst.max((f.sample(x, 0.0) - f.sample(x, 1000.0)).abs());
        }
        assert_eq!(worst, 0.0);
        // Frequencies were snapped to whole lattice cells per period.
        for fk in f.octave_frequencies() {
            assert!(((fk * 1000.0) - (fk * 1000.0).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(NoiseSpec::new(0.0, 4, 0.5, 2.0).validate().is_err());
        assert!(NoiseSpec::new(0.01, 0, 0.5, 2.0).validate().is_err());
        assert!(NoiseSpec::new(0.01, 4, 0.0, 2.0).validate().is_err());
        assert!(NoiseSpec::new(0.01, 4, 1.1, 2.0).validate().is_err());
        assert!(NoiseSpec::new(0.01, 4, 0.5, 1.0).validate().is_err());
        assert!(FieldSampler::new(
            NoiseSpec::new(0.01, 4, 0.5, 2.0),
            TemporalMode::Resample { cycle: 0 },
            BoundaryMode::Unbounded
        )
        .is_err());
    }

    #[test]
    fn smoothness_proxy_bounded_difference_quotient() {
        let f = unbounded(NoiseSpec::new(0.02, 5, 0.55, 2.2).with_seed(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let (x, y) = (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0);
            worst = worst.max((f.sample(x + h, y) - f.sample(x, y)).abs() / h);
        }
        // Lipschitz constant of the stack is O(sum_k p^k l^k f); no jumps.
        assert!(worst < 1.0, "difference quotient {worst}");
    }

    #[test]
    fn spec_hash_is_stable_and_sensitive() {
        let a = NoiseSpec::new(0.01, 4, 0.5, 2.0).with_seed(1);
        assert_eq!(a.spec_hash(), a.clone().spec_hash());
        assert_eq!(a.spec_hash().len(), 16);
        assert_ne!(a.spec_hash(), a.clone().with_seed(2).spec_hash());
    }
}

