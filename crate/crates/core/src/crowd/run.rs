use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{CrowdConfig, CrowdError, CrowdState, MotionPolicy, PolicyState};
use crate::metrics::spatial::{diversity_stats, polarization, spatial_stats, DistanceBins};
use crate::metrics::stats::{mean, percentile};
use crate::metrics::{
    coverage_and_paths, hf_lf_ratio, jerk_stats, kinetic_signal, lag1_autocorrelations, CoverageGrid, MetricReport,
    TrackSet, SPECTRUM_WINDOW,
};
use crate::noise::SeedBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub polarization: f64,
    pub mean_speed: f64,
    /// Mean third-difference jerk over agents; defined from tick 3 on.
    pub jerk_mean: Option<f64>,
    /// Sliding-window visited fraction; defined once the window is full.
    pub coverage_fraction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CrowdRun {
    pub policy: String,
    pub seed: u64,
    /// Frames `0..=T`.
    pub tracks: TrackSet,
    pub records: Vec<TickRecord>,
    /// Wall time of each policy tick, in nanoseconds.
    pub tick_ns: Vec<u64>,
    pub noise_evals: u64,
    pub rng_draws: u64,
}

impl CrowdRun {
    pub fn snapshot_ticks(&self, period: u64) -> impl Iterator<Item = usize> + '_ {
        (0..self.tracks.ticks()).filter(move |t| *t as u64 % period == 0)
    }

    pub fn mean_tick_ms(&self) -> f64 {
        mean(&self.tick_ms()).unwrap_or(0.0)
    }

    /// Median per-tick wall time; robust to scheduler interruptions.
    pub fn median_tick_ms(&self) -> f64 {
        percentile(&self.tick_ms(), 50.0).unwrap_or(0.0)
    }

    fn tick_ms(&self) -> Vec<f64> {
        self.tick_ns.iter().map(|&n| n as f64 * 1e-6).collect()
    }

    pub fn timing_report(&self) -> MetricReport {
        let ms = self.tick_ms();
        let mut r = MetricReport::default();
        r.set("tick_ms_mean", mean(&ms));
        r.set("tick_ms_median", percentile(&ms, 50.0));
        r.set("tick_ms_p95", percentile(&ms, 95.0));
        r.set("total_ms", Some(ms.iter().sum()));
        r
    }

    /// Per-tick CSV, snapshot CSV, deterministic summary JSON and a separate
    /// timing JSON (the only non-reproducible file).
    pub fn write_outputs(&self, dir: &Path, cfg: &CrowdConfig, summary: &MetricReport) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = io::BufWriter::new(fs::File::create(dir.join("ticks.csv"))?);
        writeln!(w, "tick,polarization,mean_speed,jerk_mean,coverage_fraction")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{}", r.tick, r.polarization, r.mean_speed, opt(r.jerk_mean), opt(r.coverage_fraction))?;
        }
        w.flush()?;

        let mut w = io::BufWriter::new(fs::File::create(dir.join("snapshots.csv"))?);
        writeln!(w, "tick,agent,x,y,heading,speed")?;
        for t in self.snapshot_ticks(cfg.snapshot_period) {
            let (p, h, s) = (self.tracks.tick_positions(t), self.tracks.tick_headings(t), self.tracks.tick_speeds(t));
            for i in 0..self.tracks.n_agents {
                writeln!(w, "{t},{i},{},{},{},{}", p[i][0], p[i][1], h[i], s[i])?;
            }
        }
        w.flush()?;

        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary).map_err(io::Error::other)?)?;
        fs::write(
            dir.join("timing.json"),
            serde_json::to_string_pretty(&self.timing_report()).map_err(io::Error::other)?,
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run_crowd(cfg: &CrowdConfig, policy: &MotionPolicy, seed: u64) -> Result<CrowdRun, CrowdError> {
    cfg.validate()?;
    let seeds = SeedBundle::new(seed);
    let mut state = CrowdState::random(cfg, &mut seeds.rng("crowd.init"));
    let mut pol = PolicyState::new(policy, cfg, &seeds, &state)?;
    let ticks = cfg.ticks as usize;
    let mut tracks = TrackSet::new(cfg.n_agents, cfg.side);
    tracks.positions.reserve(cfg.n_agents * (ticks + 1));
    tracks.headings.reserve(cfg.n_agents * (ticks + 1));
    tracks.speeds.reserve(cfg.n_agents * (ticks + 1));
    tracks.push_tick(&state.positions, &state.headings, &state.speeds);
    let mut tick_ns = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let start = Instant::now();
        pol.tick(cfg, &mut state);
        tick_ns.push(start.elapsed().as_nanos() as u64);
        tracks.push_tick(&state.positions, &state.headings, &state.speeds);
    }
    let records = tick_records(&tracks, cfg);
    Ok(CrowdRun {
        policy: policy.name().to_string(),
        seed,
        tracks,
        records,
        tick_ns,
        noise_evals: pol.noise_evals,
        rng_draws: pol.rng_draws,
    })
}

fn tick_records(tracks: &TrackSet, cfg: &CrowdConfig) -> Vec<TickRecord> {
    let jerk = jerk_stats(tracks).map(|j| j.per_tick).unwrap_or_default();
    let mut grid = CoverageGrid::new(cfg.coverage_cells, cfg.side, cfg.coverage_window as u64);
    (0..tracks.ticks())
        .map(|t| {
            for &p in tracks.tick_positions(t) {
                grid.visit(p, t as u64);
            }
            let speeds = tracks.tick_speeds(t);
            TickRecord {
                tick: t as u64,
                polarization: polarization(tracks.tick_headings(t)),
                mean_speed: mean(speeds).unwrap_or(0.0),
                jerk_mean: t.checked_sub(3).and_then(|k| jerk.get(k).copied()),
                coverage_fraction: (t + 1 >= cfg.coverage_window).then(|| grid.fraction(t as u64)),
            }
        })
        .collect()
}

/// Deterministic summary metrics. Spatial and diversity statistics are
/// averaged over snapshot frames; `s_dir_5` is the first distance bin.
pub fn summarize(run: &CrowdRun, cfg: &CrowdConfig) -> MetricReport {
    let mut r = MetricReport::default();
    let tracks = &run.tracks;
    let bins = DistanceBins::new(cfg.distance_bins.clone()).expect("validated bins");
    let snaps: Vec<usize> = run.snapshot_ticks(cfg.snapshot_period).collect();

    let nb = bins.len();
    let mut s_dir = vec![Vec::new(); nb];
    let mut c_v = vec![Vec::new(); nb];
    let (mut ls, mut lc) = (Vec::new(), Vec::new());
    let (mut pol, mut ent, mut sm, mut ss, mut sk) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &t in &snaps {
        let (p, h, v) = (tracks.tick_positions(t), tracks.tick_headings(t), tracks.tick_speeds(t));
        if let Ok(st) = spatial_stats(p, h, v, cfg.side, &bins, cfg.decay_fraction) {
            for b in 0..nb {
                s_dir[b].extend(st.s_dir[b]);
                c_v[b].extend(st.c_v[b]);
            }
            ls.extend(st.corr_len_s_dir);
            lc.extend(st.corr_len_c_v);
        }
        if let Ok(d) = diversity_stats(h, v) {
            pol.push(d.polarization);
            ent.push(d.heading_entropy);
            sm.push(d.speed_mean);
            ss.push(d.speed_std);
            sk.extend(d.speed_skew);
        }
    }
    let centers = bins.centers();
    r.set("s_dir_5", mean(&s_dir[0]));
    r.set("c_v_5", mean(&c_v[0]));
    for b in 1..nb {
        r.set(&format!("s_dir_{}", centers[b]), mean(&s_dir[b]));
        r.set(&format!("c_v_{}", centers[b]), mean(&c_v[b]));
    }
    r.set("corr_len_s_dir", mean(&ls));
    r.set("corr_len_c_v", mean(&lc));
    r.set("polarization", mean(&pol));
    r.set("heading_entropy", mean(&ent));
    r.set("speed_mean", mean(&sm));
    r.set("speed_std", mean(&ss));
    r.set("speed_skew", mean(&sk));

    match jerk_stats(tracks) {
        Ok(j) => {
            r.set("jerk_mean", Some(j.mean));
            r.set("jerk_p95", Some(j.p95));
        }
        Err(_) => {
            r.set("jerk_mean", None);
            r.set("jerk_p95", None);
        }
    }
    let (acf_h, acf_v) = lag1_autocorrelations(tracks);
    r.set("acf1_heading", acf_h);
    r.set("acf1_speed", acf_v);
    let spec = hf_lf_ratio(&kinetic_signal(tracks), SPECTRUM_WINDOW);
    if spec.short_series {
        r.flag("hf_lf");
    }
    r.set("hf_lf", spec.ratio);
    let cov = coverage_and_paths(tracks, cfg.coverage_cells, cfg.coverage_window);
    r.set("coverage", cov.visited_fraction);
    r.set("tortuosity_mean", cov.tortuosity_mean);
    r.set("tortuosity_p95", cov.tortuosity_p95);
    if cov.tortuosity_capped > 0 {
        r.flag("tortuosity_mean");
    }
    r.set("noise_evals_per_tick", Some(run.noise_evals as f64 / cfg.ticks as f64));
    r.set("rng_draws_per_tick", Some(run.rng_draws as f64 / cfg.ticks as f64));

    r.meta("policy", &run.policy);
    r.meta("seed", run.seed);
    r.meta("n_agents", cfg.n_agents);
    r.meta("ticks", cfg.ticks);
    r.meta("snapshot_frames", snaps.len());
    r.meta("coverage_grid", format!("{0}x{0}", cfg.coverage_cells));
    r.meta("coverage_window", cfg.coverage_window);
    r.meta("spectrum_window", SPECTRUM_WINDOW);
    r.meta("tortuosity_capped", cov.tortuosity_capped);
    r
}
