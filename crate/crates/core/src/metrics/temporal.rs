//! Trajectory smoothness, spectral balance, coverage and path shape.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::stats::{mean, pearson, percentile};
use super::MetricsError;
use crate::geom::torus_delta;

/// Tick-major agent trajectories on a torus of side `l`.
///
/// Entry `t * n_agents + i` holds agent `i` at tick `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackSet {
    pub n_agents: usize,
    pub l: f64,
    pub positions: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl TrackSet {
    pub fn new(n_agents: usize, l: f64) -> Self {
        Self { n_agents, l, ..Default::default() }
    }

    pub fn ticks(&self) -> usize {
        if self.n_agents == 0 {
            0
        } else {
            self.positions.len() / self.n_agents
        }
    }

    pub fn push_tick(&mut self, positions: &[[f64; 2]], headings: &[f64], speeds: &[f64]) {
        debug_assert_eq!(positions.len(), self.n_agents);
        self.positions.extend_from_slice(positions);
        self.headings.extend_from_slice(headings);
        self.speeds.extend_from_slice(speeds);
    }

    pub fn tick_positions(&self, t: usize) -> &[[f64; 2]] {
        &self.positions[t * self.n_agents..(t + 1) * self.n_agents]
    }

    pub fn tick_headings(&self, t: usize) -> &[f64] {
        &self.headings[t * self.n_agents..(t + 1) * self.n_agents]
    }

    pub fn tick_speeds(&self, t: usize) -> &[f64] {
        &self.speeds[t * self.n_agents..(t + 1) * self.n_agents]
    }

    /// Torus-unwrapped displacement of agent `i` between ticks `t` and `t+1`.
    #[inline]
    pub fn step(&self, t: usize, i: usize) -> [f64; 2] {
        let a = self.positions[t * self.n_agents + i];
        let b = self.positions[(t + 1) * self.n_agents + i];
        [torus_delta(a[0], b[0], self.l), torus_delta(a[1], b[1], self.l)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JerkStats {
    pub mean: f64,
    pub p95: f64,
    /// Per-tick mean jerk, indexed from the first tick with a defined value.
    pub per_tick: Vec<f64>,
}

/// `jerk(t) = |dv(t+1) - dv(t)|` with `dv(t) = u(t+1) - u(t)` and `u` the
/// per-tick displacement (so a third difference of unwrapped positions).
pub fn jerk_stats(tracks: &TrackSet) -> Result<JerkStats, MetricsError> {
    let ticks = tracks.ticks();
    if ticks < 4 {
        return Err(MetricsError::TooFew { needed: 4, got: ticks });
    }
    let n = tracks.n_agents;
    let mut all = Vec::with_capacity(n * (ticks - 3));
    let mut per_tick = Vec::with_capacity(ticks - 3);
    for t in 0..ticks - 3 {
        let mut s = 0.0;
        for i in 0..n {
            let u0 = tracks.step(t, i);
            let u1 = tracks.step(t + 1, i);
            let u2 = tracks.step(t + 2, i);
            let jx = u2[0] - 2.0 * u1[0] + u0[0];
            let jy = u2[1] - 2.0 * u1[1] + u0[1];
            let j = (jx * jx + jy * jy).sqrt();
            s += j;
            all.push(j);
        }
        per_tick.push(s / n as f64);
    }
    Ok(JerkStats { mean: mean(&all).unwrap(), p95: percentile(&all, 95.0).unwrap(), per_tick })
}

/// Lag-1 autocorrelations: heading as mean `cos(theta(t+1) - theta(t))`,
/// speed as pooled Pearson correlation of `(v(t), v(t+1))`.
pub fn lag1_autocorrelations(tracks: &TrackSet) -> (Option<f64>, Option<f64>) {
    let ticks = tracks.ticks();
    let n = tracks.n_agents;
    if ticks < 2 || n == 0 {
        return (None, None);
    }
    let mut c = 0.0;
    let mut a = Vec::with_capacity(n * (ticks - 1));
    let mut b = Vec::with_capacity(n * (ticks - 1));
    for t in 0..ticks - 1 {
        for i in 0..n {
            c += (tracks.headings[(t + 1) * n + i] - tracks.headings[t * n + i]).cos();
            a.push(tracks.speeds[t * n + i]);
            b.push(tracks.speeds[(t + 1) * n + i]);
        }
    }
    (Some(c / (n * (ticks - 1)) as f64), pearson(&a, &b))
}

/// `sum_i v_i(t)^2` per tick.
pub fn kinetic_signal(tracks: &TrackSet) -> Vec<f64> {
    (0..tracks.ticks()).map(|t| tracks.tick_speeds(t).iter().map(|v| v * v).sum()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralRatio {
    pub ratio: Option<f64>,
    pub windows: usize,
    /// Set when the series was shorter than one window.
    pub short_series: bool,
}

pub const SPECTRUM_WINDOW: usize = 256;

/// High/low frequency energy ratio over non-overlapping windows.
///
/// Each window is mean-centred and transformed; with `m = w/2` nonzero
/// frequency bins, LF is bins `1..=m/4` and HF is bins `m/2+1..=m`. Energies
/// are summed across windows before dividing.
pub fn hf_lf_ratio(series: &[f64], window: usize) -> SpectralRatio {
    let (w, short) = if series.len() < window { (series.len(), true) } else { (window, false) };
    if w < 8 {
        return SpectralRatio { ratio: None, windows: 0, short_series: true };
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);
    let m = w / 2;
    let (lf_hi, hf_lo) = ((m / 4).max(1), m / 2 + 1);
    let (mut lf, mut hf) = (0.0, 0.0);
    let mut count = 0;
    for chunk in series.chunks_exact(w) {
        let mu = chunk.iter().sum::<f64>() / w as f64;
        let mut buf: Vec<Complex<f64>> = chunk.iter().map(|&x| Complex::new(x - mu, 0.0)).collect();
        fft.process(&mut buf);
        lf += buf[1..=lf_hi].iter().map(|c| c.norm_sqr()).sum::<f64>();
        hf += buf[hf_lo..=m].iter().map(|c| c.norm_sqr()).sum::<f64>();
        count += 1;
    }
    SpectralRatio { ratio: (lf > 0.0).then(|| hf / lf), windows: count, short_series: short }
}

/// Cell-grid visit tracker for sliding-window coverage fractions.
#[derive(Clone, Debug)]
pub struct CoverageGrid {
    cells: usize,
    side: f64,
    window: u64,
    last_visit: Vec<Option<u64>>,
}

impl CoverageGrid {
    pub fn new(cells: usize, side: f64, window: u64) -> Self {
        Self { cells, side, window, last_visit: vec![None; cells * cells] }
    }

    #[inline]
    pub fn cell_index(&self, p: [f64; 2]) -> usize {
        let k = self.cells as f64 / self.side;
        let cx = ((p[0] * k) as usize).min(self.cells - 1);
        let cy = ((p[1] * k) as usize).min(self.cells - 1);
        cy * self.cells + cx
    }

    pub fn visit(&mut self, p: [f64; 2], tick: u64) {
        let c = self.cell_index(p);
        self.last_visit[c] = Some(tick);
    }

    /// Fraction of cells visited in ticks `(tick - window, tick]`.
    pub fn fraction(&self, tick: u64) -> f64 {
        let lo = (tick + 1).saturating_sub(self.window);
        let hits = self.last_visit.iter().filter(|v| matches!(v, Some(t) if *t >= lo)).count();
        hits as f64 / self.last_visit.len() as f64
    }
}

/// Recent visited fraction at `tick` recomputed from the raw tracks.
pub fn visited_fraction_at(tracks: &TrackSet, cells: usize, window: usize, tick: usize) -> f64 {
    let mut seen = vec![false; cells * cells];
    let grid = CoverageGrid::new(cells, tracks.l, window as u64);
    let start = (tick + 1).saturating_sub(window);
    for t in start..=tick {
        for &p in tracks.tick_positions(t) {
            seen[grid.cell_index(p)] = true;
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / seen.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// Mean visited fraction over ticks with a full window.
    pub visited_fraction: Option<f64>,
    pub tortuosity_mean: Option<f64>,
    pub tortuosity_p95: Option<f64>,
    /// Paths whose chord fell below `1e-9` and were capped.
    pub tortuosity_capped: usize,
}

pub const TORTUOSITY_CAP: f64 = 1e6;

/// Sliding-window coverage (`cells x cells` grid) and tortuosity over
/// consecutive non-overlapping windows.
pub fn coverage_and_paths(tracks: &TrackSet, cells: usize, window: usize) -> CoverageStats {
    let ticks = tracks.ticks();
    let mut grid = CoverageGrid::new(cells, tracks.l, window as u64);
    let mut fractions = Vec::new();
    for t in 0..ticks {
        for &p in tracks.tick_positions(t) {
            grid.visit(p, t as u64);
        }
        if t + 1 >= window {
            fractions.push(grid.fraction(t as u64));
        }
    }
    let (tort, capped) = tortuosities(tracks, window);
    CoverageStats {
        visited_fraction: mean(&fractions),
        tortuosity_mean: mean(&tort),
        tortuosity_p95: percentile(&tort, 95.0),
        tortuosity_capped: capped,
    }
}

/// Arc length over chord length per agent for each full window of `window`
/// steps.
pub fn tortuosities(tracks: &TrackSet, window: usize) -> (Vec<f64>, usize) {
    let steps = tracks.ticks().saturating_sub(1);
    let mut out = Vec::new();
    let mut capped = 0;
    let mut start = 0;
    while start + window <= steps {
        for i in 0..tracks.n_agents {
            let (mut arc, mut cx, mut cy) = (0.0, 0.0, 0.0);
            for t in start..start + window {
                let u = tracks.step(t, i);
                arc += (u[0] * u[0] + u[1] * u[1]).sqrt();
                cx += u[0];
                cy += u[1];
            }
            let chord = (cx * cx + cy * cy).sqrt();
            if chord < 1e-9 {
                capped += 1;
                out.push(TORTUOSITY_CAP);
            } else {
                out.push((arc / chord).min(TORTUOSITY_CAP));
            }
        }
        start += window;
    }
    (out, capped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::wrap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::TAU;

    fn straight(n: usize, ticks: usize, l: f64) -> TrackSet {
        let mut tr = TrackSet::new(n, l);
        for t in 0..ticks {
            let p: Vec<[f64; 2]> =
                (0..n).map(|i| [wrap(i as f64 * 3.0 + 0.7 * t as f64, l), wrap(0.3 * t as f64, l)]).collect();
            tr.push_tick(&p, &vec![0.4; n], &vec![0.76; n]);
        }
        tr
    }

    #[test]
    fn constant_velocity_has_zero_jerk() {
        let j = jerk_stats(&straight(5, 50, 20.0)).unwrap();
        assert!(j.mean < 1e-12 && j.p95 < 1e-12);
    }

    #[test]
    fn straight_mover_tortuosity_one() {
        let (t, capped) = tortuosities(&straight(3, 130, 20.0), 60);
        assert_eq!(capped, 0);
        assert_eq!(t.len(), 6);
        assert!(t.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn static_agents_cover_occupied_cells() {
        let mut tr = TrackSet::new(3, 10.0);
        for _ in 0..80 {
            tr.push_tick(&[[0.5, 0.5], [0.6, 0.6], [9.5, 9.5]], &[0.0; 3], &[0.0; 3]);
        }
        let c = coverage_and_paths(&tr, 10, 60);
        assert!((c.visited_fraction.unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(c.tortuosity_capped, 3);
    }

    #[test]
    fn incremental_coverage_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tr = TrackSet::new(40, 100.0);
        let mut p: Vec<[f64; 2]> = (0..40).map(|_| [rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0]).collect();
        let mut grid = CoverageGrid::new(50, 100.0, 60);
        for t in 0..150 {
            for q in p.iter_mut() {
                q[0] = wrap(q[0] + rng.random::<f64>() * 4.0 - 2.0, 100.0);
                q[1] = wrap(q[1] + rng.random::<f64>() * 4.0 - 2.0, 100.0);
                grid.visit(*q, t);
            }
            tr.push_tick(&p, &[0.0; 40], &[1.0; 40]);
            if t >= 59 {
                assert_eq!(grid.fraction(t), visited_fraction_at(&tr, 50, 60, t as usize));
            }
        }
    }

    #[test]
    fn random_walk_is_tortuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 1000;
        let mut tr = TrackSet::new(n, 1000.0);
        let mut p: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * 1000.0, rng.random::<f64>() * 1000.0]).collect();
        tr.push_tick(&p, &vec![0.0; n], &vec![1.0; n]);
        for _ in 0..60 {
            for q in p.iter_mut() {
                let th = rng.random::<f64>() * TAU;
                q[0] = wrap(q[0] + th.cos(), 1000.0);
                q[1] = wrap(q[1] + th.sin(), 1000.0);
            }
            tr.push_tick(&p, &vec![0.0; n], &vec![1.0; n]);
        }
        let (t, _) = tortuosities(&tr, 60);
        assert!(mean(&t).unwrap() > 1.5);
    }

    #[test]
    fn spectral_ratio_references() {
        let sine: Vec<f64> = (0..2048).map(|t| (TAU * t as f64 / 128.0).sin()).collect();
        assert!(hf_lf_ratio(&sine, 256).ratio.unwrap() < 1e-6);
        // White noise: HF spans twice as many bins as LF.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let white: Vec<f64> = (0..256 * 400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = hf_lf_ratio(&white, 256);
        assert_eq!(r.windows, 400);
        assert!((r.ratio.unwrap() - 2.0).abs() < 0.1, "{:?}", r.ratio);
        assert!(hf_lf_ratio(&white[..100], 256).short_series);
    }
}
