use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Controller, Mover, PolicyKind, SpawnConfig, SpawnError, SpawnPolicy, World};
use crate::geom::Vec2;
use crate::metrics::stats::{mean, percentile, std_dev, variance};
use crate::metrics::{
    coverage_distance, front_coherence, hf_lf_ratio, isi_stats, k_ratio, mean_nn_distance, pair_correlation,
    region_counts, spatial_balance, EdgeMode, MetricReport,
};
use crate::noise::SeedBundle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnEvent {
    pub tick: u64,
    pub id: u64,
    pub pos: Vec2,
    /// Elimination tick of the replaced entity.
    pub replaces: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub tick: u64,
    pub id: u64,
    pub pos: Vec2,
    pub player: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnTick {
    pub tick: u64,
    pub live: usize,
    pub spawns: usize,
    pub eliminations: usize,
    pub proposals: usize,
    pub dropped: usize,
}

/// Safety checks evaluated every tick, independently of the controller's own
/// bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub quota: u64,
    pub cooldown: u64,
    pub bounds: u64,
    pub population: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.quota + self.cooldown + self.bounds + self.population
    }
}

#[derive(Clone, Debug)]
pub struct SpawnRun {
    pub policy: PolicyKind,
    pub seed: u64,
    pub spawns: Vec<SpawnEvent>,
    pub eliminations: Vec<Elimination>,
    pub ticks: Vec<SpawnTick>,
    /// `(tick, [(id, position)])` every snapshot period.
    pub snapshots: Vec<(u64, Vec<(u64, Vec2)>)>,
    /// Proposal plus admission wall time per tick, nanoseconds.
    pub tick_ns: Vec<u64>,
    pub violations: Violations,
    pub noise_evals: u64,
    pub band_widened: u64,
    pub band_skipped: u64,
    pub rejected_slots: u64,
    pub clipped: u64,
}

impl SpawnRun {
    pub fn spawn_series(&self) -> Vec<f64> {
        self.ticks.iter().map(|r| r.spawns as f64).collect()
    }

    pub fn timing_report(&self) -> MetricReport {
        let ms: Vec<f64> = self.tick_ns.iter().map(|&n| n as f64 * 1e-6).collect();
        let mut r = MetricReport::default();
        r.set("tick_ms_mean", mean(&ms));
        r.set("tick_ms_median", percentile(&ms, 50.0));
        r.set("tick_ms_p95", percentile(&ms, 95.0));
        r
    }

    pub fn write_outputs(&self, dir: &Path, summary: &MetricReport) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = io::BufWriter::new(fs::File::create(dir.join("spawns.csv"))?);
        writeln!(w, "tick,id,x,y,replaces")?;
        for e in &self.spawns {
            writeln!(w, "{},{},{},{},{}", e.tick, e.id, e.pos[0], e.pos[1], e.replaces)?;
        }
        w.flush()?;
        let mut w = io::BufWriter::new(fs::File::create(dir.join("eliminations.csv"))?);
        writeln!(w, "tick,id,x,y,player")?;
        for e in &self.eliminations {
            writeln!(w, "{},{},{},{},{}", e.tick, e.id, e.pos[0], e.pos[1], e.player)?;
        }
        w.flush()?;
        let mut w = io::BufWriter::new(fs::File::create(dir.join("population.csv"))?);
        writeln!(w, "tick,live,spawns,eliminations,proposals,dropped")?;
        for r in &self.ticks {
            writeln!(w, "{},{},{},{},{},{}", r.tick, r.live, r.spawns, r.eliminations, r.proposals, r.dropped)?;
        }
        w.flush()?;
        let mut w = io::BufWriter::new(fs::File::create(dir.join("snapshots.csv"))?);
        writeln!(w, "tick,id,x,y")?;
        for (t, ents) in &self.snapshots {
            for (id, p) in ents {
                writeln!(w, "{t},{id},{},{}", p[0], p[1])?;
            }
        }
        w.flush()?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary).map_err(io::Error::other)?)?;
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&self.timing_report()).map_err(io::Error::other)?)
    }
}

pub fn run_spawn(cfg: &SpawnConfig, kind: PolicyKind, seed: u64) -> Result<SpawnRun, SpawnError> {
    cfg.validate()?;
    let seeds = SeedBundle::new(seed);
    let mut init = seeds.rng("spawn.init");
    let mover = |rng: &mut crate::noise::SimRng| Mover {
        pos: [rng.random::<f64>() * cfg.side, rng.random::<f64>() * cfg.side],
        heading: rng.random::<f64>() * std::f64::consts::TAU,
    };
    let monsters: Vec<(u64, Mover)> = (0..cfg.target_pop as u64).map(|id| (id, mover(&mut init))).collect();
    let players = (0..cfg.players).map(|_| mover(&mut init)).collect();
    let mut world = World { side: cfg.side, monsters, players, ready_at: vec![0; cfg.players] };
    let mut next_id = cfg.target_pop as u64;
    let mut motion = seeds.rng("spawn.motion");
    let mut headings = seeds.rng("spawn.heading");
    let mut policy = SpawnPolicy::new(kind, cfg, &seeds)?;
    let mut ctl = Controller::new(cfg);
    let (monster_p, player_p) = (cfg.monster.clone(), cfg.player_movers());
    let in_bounds = |p: Vec2| (0.0..=cfg.side).contains(&p[0]) && (0.0..=cfg.side).contains(&p[1]);

    let n = cfg.ticks as usize;
    let mut run = SpawnRun {
        policy: kind,
        seed,
        spawns: Vec::new(),
        eliminations: Vec::new(),
        ticks: Vec::with_capacity(n),
        snapshots: Vec::new(),
        tick_ns: Vec::with_capacity(n),
        violations: Violations::default(),
        noise_evals: 0,
        band_widened: 0,
        band_skipped: 0,
        rejected_slots: 0,
        clipped: 0,
    };
    let mut proposals = Vec::new();
    let mut cycle_spawns = 0usize;
    for t in 0..cfg.ticks {
        if t > 0 {
            world.step(&monster_p, &player_p, &mut motion);
        }
        let gone = world.eliminate(cfg.player.kill_radius, t, cfg.player.player_cooldown());
        for &(id, pos, player) in &gone {
            run.eliminations.push(Elimination { tick: t, id, pos, player });
            ctl.eliminated(pos, t, cfg.player.ticket_delay());
        }
        ctl.begin_tick(t);
        if t % cfg.cycle == 0 {
            cycle_spawns = 0;
        }

        let clock = Instant::now();
        proposals.clear();
        let entities = world.positions();
        let player_pos = world.player_positions();
        policy.propose(cfg, t, &entities, &player_pos, &mut proposals);
        let adm = ctl.admit(t, proposals.len());
        run.tick_ns.push(clock.elapsed().as_nanos() as u64);

        for (ticket, &pos) in adm.tickets.iter().zip(&proposals) {
            if ticket.eligible > t || ticket.eliminated + cfg.player.ticket_delay() > t {
                run.violations.cooldown += 1;
            }
            let heading = headings.random::<f64>() * std::f64::consts::TAU;
            world.monsters.push((next_id, Mover { pos, heading }));
            run.spawns.push(SpawnEvent { tick: t, id: next_id, pos, replaces: ticket.eliminated });
            next_id += 1;
        }
        cycle_spawns += adm.tickets.len();
        if cycle_spawns > cfg.cycle_quota || ctl.spawned_this_cycle > cfg.cycle_quota {
            run.violations.quota += 1;
        }
        if !proposals.iter().all(|&p| in_bounds(p)) || !world.in_bounds() {
            run.violations.bounds += 1;
        }
        let live = world.monsters.len();
        if live + ctl.queue.len() != cfg.target_pop || live > cfg.target_pop + cfg.cycle_quota {
            run.violations.population += 1;
        }
        run.ticks.push(SpawnTick {
            tick: t,
            live,
            spawns: adm.tickets.len(),
            eliminations: gone.len(),
            proposals: proposals.len(),
            dropped: adm.dropped,
        });
        if t % cfg.snapshot_period == 0 {
            run.snapshots.push((t, world.monsters.iter().map(|(id, m)| (*id, m.pos)).collect()));
        }
    }
    run.noise_evals = policy.noise_evals;
    run.band_widened = policy.band_widened;
    run.band_skipped = policy.band_skipped;
    run.rejected_slots = policy.rejected_slots;
    run.clipped = policy.clipped;
    Ok(run)
}

/// Pair-correlation kernel half-width in world units.
const PCF_BANDWIDTH: f64 = 1.5;

/// Deterministic summary over ticks at or after warmup.
pub fn summarize(run: &SpawnRun, cfg: &SpawnConfig) -> MetricReport {
    let mut r = MetricReport::default();
    let w = cfg.warmup.min(cfg.ticks) as usize;
    let spawns: Vec<f64> = run.spawn_series()[w..].to_vec();
    let driver: Vec<f64> = (w..run.ticks.len()).map(|t| (t as u64 % cfg.cycle) as f64 / cfg.cycle as f64).collect();
    let first = ((cfg.cycle - w as u64 % cfg.cycle) % cfg.cycle) as usize;
    let coh = front_coherence(&spawns, &driver, cfg.cycle as usize, first);
    r.set("front_coherence", coh.value);
    if coh.cycles_flat > 0 {
        r.flag("front_coherence");
    }

    let stamps: Vec<f64> = run.spawns.iter().filter(|e| e.tick as usize >= w).map(|e| e.tick as f64).collect();
    let isi = isi_stats(&stamps);
    r.set("isi_cv", isi.and_then(|s| s.cv));
    r.set("burstiness", isi.and_then(|s| s.burstiness));
    r.set("load_variance", variance(&spawns));
    let spec = hf_lf_ratio(&spawns, cfg.temporal_window);
    if spec.short_series {
        r.flag("hf_lf");
    }
    r.set("hf_lf", spec.ratio);

    let cycles = spawns.len() as f64 / cfg.cycle as f64;
    let elims = run.ticks[w..].iter().map(|k| k.eliminations).sum::<usize>() as f64;
    let spawned: f64 = spawns.iter().sum();
    r.set("spawns_per_cycle", (cycles > 0.0).then(|| spawned / cycles));
    r.set("eliminations_per_cycle", (cycles > 0.0).then(|| elims / cycles));
    r.set("flow_balance", (elims > 0.0).then(|| spawned / elims));
    let live: Vec<f64> = run.ticks[w..].iter().map(|k| k.live as f64).collect();
    r.set("live_mean", mean(&live));
    r.set("live_std", std_dev(&live));
    let lo = cfg.target_pop.saturating_sub(cfg.cycle_quota) as f64;
    r.set(
        "live_in_band",
        (!live.is_empty()).then(|| live.iter().filter(|&&v| v >= lo && v <= cfg.target_pop as f64).count() as f64 / live.len() as f64),
    );
    let dropped = run.ticks[w..].iter().map(|k| k.dropped).sum::<usize>() as f64;
    r.set("dropped_per_cycle", (cycles > 0.0).then(|| dropped / cycles));

    let mut probe_rng = SeedBundle::new(run.seed).rng("spawn.probe");
    let probes: Vec<Vec2> =
        (0..cfg.coverage_samples).map(|_| [probe_rng.random::<f64>() * cfg.side, probe_rng.random::<f64>() * cfg.side]).collect();
    let radii = &cfg.spatial_radii;
    let (mut cov, mut rcv, mut moran, mut nn) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut kr = vec![Vec::new(); radii.len()];
    let mut gr = vec![Vec::new(); radii.len()];
    for (_, ents) in run.snapshots.iter().filter(|(t, _)| *t as usize >= w) {
        let pts: Vec<Vec2> = ents.iter().map(|e| e.1).collect();
        cov.extend(coverage_distance(&pts, &probes));
        let bal = spatial_balance(&region_counts(&pts, cfg.side, cfg.regions, cfg.regions), cfg.regions, cfg.regions);
        rcv.extend(bal.regional_cv);
        moran.extend(bal.morans_i);
        nn.extend(mean_nn_distance(&pts, cfg.side, EdgeMode::Translation));
        if let Ok(k) = k_ratio(&pts, radii, cfg.side, EdgeMode::Translation) {
            for (acc, v) in kr.iter_mut().zip(k) {
                acc.push(v);
            }
        }
        if let Ok(g) = pair_correlation(&pts, radii, PCF_BANDWIDTH, cfg.side, EdgeMode::Translation) {
            for (acc, v) in gr.iter_mut().zip(g) {
                acc.push(v);
            }
        }
    }
    r.set("coverage_distance", mean(&cov));
    r.set("regional_cv", mean(&rcv));
    r.set("morans_i", mean(&moran));
    r.set("mean_nn_distance", mean(&nn));
    for (i, radius) in radii.iter().enumerate() {
        r.set(&format!("k_ratio_{radius}"), mean(&kr[i]));
        r.set(&format!("pcf_{radius}"), mean(&gr[i]));
    }

    r.set("noise_evals_per_tick", Some(run.noise_evals as f64 / cfg.ticks as f64));
    r.set("band_widened", Some(run.band_widened as f64));
    r.set("band_skipped", Some(run.band_skipped as f64));
    r.set("rejected_slots", Some(run.rejected_slots as f64));
    r.set("clipped_proposals", Some(run.clipped as f64));
    let v = run.violations;
    r.set("violations", Some(v.total() as f64));
    r.set("violations_quota", Some(v.quota as f64));
    r.set("violations_cooldown", Some(v.cooldown as f64));
    r.set("violations_bounds", Some(v.bounds as f64));
    r.set("violations_population", Some(v.population as f64));

    r.meta("policy", run.policy.name());
    r.meta("seed", run.seed);
    r.meta("side", cfg.side);
    r.meta("ticks", cfg.ticks);
    r.meta("cycle", cfg.cycle);
    r.meta("target_pop", cfg.target_pop);
    r.meta("cycle_quota", cfg.cycle_quota);
    r.meta("cooldown_budget", cfg.cooldown_budget);
    r.meta("players", cfg.players);
    r.meta("respawn_delay", cfg.player.respawn_delay);
    r.meta("warmup", cfg.warmup);
    r.meta("coverage_samples", cfg.coverage_samples);
    r.meta("coherence_cycles", coh.cycles_used);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::Scale;
    use crate::spawn::DelayTarget;

    fn short() -> SpawnConfig {
        SpawnConfig { ticks: 1500, ..SpawnConfig::scale(Scale::Small) }
    }

    #[test]
    fn every_policy_runs_without_violations() {
        let cfg = short();
        for kind in PolicyKind::ALL {
            let run = run_spawn(&cfg, kind, 3).unwrap();
            assert_eq!(run.violations, Violations::default(), "{kind:?}");
            assert!(!run.spawns.is_empty(), "{kind:?}");
            assert_eq!(run.ticks.len(), 1500);
        }
    }

    #[test]
    fn same_seed_same_events() {
        let cfg = short();
        for kind in PolicyKind::ALL {
            let a = run_spawn(&cfg, kind, 4).unwrap();
            let b = run_spawn(&cfg, kind, 4).unwrap();
            assert_eq!((&a.spawns, &a.eliminations, &a.ticks), (&b.spawns, &b.eliminations, &b.ticks), "{kind:?}");
            assert_eq!(summarize(&a, &cfg), summarize(&b, &cfg));
        }
    }

    #[test]
    fn replacements_respect_the_delay() {
        let mut cfg = short();
        cfg.player.delay_applies_to = DelayTarget::Monsters;
        let run = run_spawn(&cfg, PolicyKind::Uniform, 5).unwrap();
        assert!(!run.spawns.is_empty());
        for e in &run.spawns {
            assert!(e.tick >= e.replaces + 90);
        }
    }

    #[test]
    fn players_rest_after_a_kill() {
        let mut cfg = short();
        cfg.player.delay_applies_to = DelayTarget::Players;
        let run = run_spawn(&cfg, PolicyKind::Uniform, 5).unwrap();
        let mut last = vec![None::<u64>; cfg.players];
        for e in &run.eliminations {
            if let Some(prev) = last[e.player] {
                assert!(e.tick == prev || e.tick >= prev + 90, "player {} at {} after {}", e.player, e.tick, prev);
            }
            last[e.player] = Some(e.tick);
        }
    }

    #[test]
    fn live_count_stays_in_the_band() {
        let cfg = SpawnConfig::scale(Scale::Medium);
        for kind in [PolicyKind::Uniform, PolicyKind::PerlinA, PolicyKind::PerlinB] {
            let run = run_spawn(&cfg, kind, 3).unwrap();
            let post: Vec<_> = run.ticks.iter().filter(|t| t.tick >= cfg.warmup).collect();
            let lo = cfg.target_pop - cfg.cycle_quota;
            let inside = post.iter().filter(|t| (lo..=cfg.target_pop).contains(&t.live)).count();
            assert!(inside as f64 >= 0.95 * post.len() as f64, "{}: {inside}/{}", kind.name(), post.len());
        }
    }

    #[test]
    fn flow_balances_over_the_long_run() {
        let cfg = SpawnConfig::scale(Scale::Medium);
        let run = run_spawn(&cfg, PolicyKind::Uniform, 2).unwrap();
        let s = summarize(&run, &cfg);
        let fb = s.get("flow_balance").unwrap();
        assert!((fb - 1.0).abs() <= 0.05, "{fb}");
    }

    #[test]
    fn outputs_are_reproducible() {
        let cfg = SpawnConfig { ticks: 700, ..SpawnConfig::scale(Scale::Small) };
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let run = run_spawn(&cfg, PolicyKind::PerlinB, 6).unwrap();
            run.write_outputs(d.path(), &summarize(&run, &cfg)).unwrap();
        }
        for f in ["spawns.csv", "eliminations.csv", "population.csv", "snapshots.csv", "summary.json"] {
            assert_eq!(fs::read(dirs[0].path().join(f)).unwrap(), fs::read(dirs[1].path().join(f)).unwrap(), "{f}");
        }
    }
}
