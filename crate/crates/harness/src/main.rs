use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noisefield_core::crowd::Scale;
use noisefield_core::metrics::SeedSummary;
use noisefield_harness::acceptance::{self, Options};
use noisefield_harness::aggregate::{headline_metrics, load_records, write_tables};
use noisefield_harness::config::{Direction, ExperimentConfig, Preset, OUTPUT_ENV};
use noisefield_harness::runner::{run_batch, Batch};

#[derive(Parser)]
#[command(name = "noisefield", version, about = "Seeded batch runs of the noisefield simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crowd motion policies.
    Crowd(RunArgs),
    /// Action-timing schedulers.
    Action(RunArgs),
    /// Spawn policies.
    Spawn(RunArgs),
    /// World generation from templates.
    Worldgen(RunArgs),
    /// A named parameter sweep.
    Sweep {
        #[arg(long, value_enum)]
        preset: Preset,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rebuild the tables of an existing results directory.
    Aggregate { dir: PathBuf },
    /// Run the acceptance criteria.
    Check {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 5)]
        timing_seeds: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Methods, policies or templates; repeat or separate with commas.
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<Scale>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    seed_count: Option<usize>,
    /// Explicit seeds, comma-separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, env = OUTPUT_ENV)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(short = 'j', long)]
    parallelism: Option<usize>,
    /// Config override as dotted.key=value; repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    Scale::parse(s).ok_or_else(|| format!("unknown scale {s:?}; expected small, medium or large"))
}

impl RunArgs {
    fn config(&self, direction: Option<Direction>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = direction {
            if self.config.is_some() && cfg.direction != d {
                bail!("config is for {} but the {d} command was used", cfg.direction);
            }
            cfg.direction = d;
        }
        if !self.methods.is_empty() {
            cfg.methods = self.methods.clone();
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(b) = self.seed_base {
            cfg.seed_base = b;
        }
        if self.seed_count.is_some() {
            cfg.seed_count = self.seed_count;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if let Some(j) = self.parallelism {
            cfg.parallelism = j;
        }
        for s in &self.sets {
            cfg.set_override(s)?;
        }
        Ok(cfg)
    }
}

fn fmt_stat(s: Option<SeedSummary>) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.ci95))
}

fn print_batch(batch: &Batch) {
    let recs = &batch.records;
    let Some(first) = recs.first() else {
        println!("no runs");
        return;
    };
    let cols = headline_metrics(first.direction);
    print!("{:<20} {:<22} {:<7}", "point", "method", "scale");
    for c in cols {
        print!(" {c:>20}");
    }
    println!();
    let mut keys: Vec<(String, String, &str)> = Vec::new();
    for r in recs {
        let k = (r.point.clone(), r.method.clone(), r.scale.name());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (p, m, s) in keys {
        let group: Vec<_> = recs.iter().filter(|r| r.point == p && r.method == m && r.scale.name() == s && r.ok()).collect();
        print!("{:<20} {:<22} {:<7}", truncate(&p, 20), truncate(&m, 22), s);
        for c in cols {
            let xs: Vec<f64> = group.iter().filter_map(|r| r.metrics.as_ref()?.get(c)).collect();
            print!(" {:>20}", fmt_stat(SeedSummary::of(&xs)));
        }
        println!();
    }
    println!("{} runs, {} failed, config {} -> {}", recs.len(), batch.failures(), batch.config_hash, batch.root.display());
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Per-layer and per-class table from each run's `summary.json`.
fn print_worlds(batch: &Batch) -> Result<()> {
    for r in batch.records.iter().filter(|r| r.ok()) {
        let spec_dir = batch.root.join(&r.point).join(Path::new(&r.method).file_stem().unwrap_or_default()).join(r.scale.name()).join(format!("seed_{}", r.seed));
        let text = std::fs::read_to_string(spec_dir.join("summary.json"))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        println!("\n{} seed {}", r.method, r.seed);
        println!("  {:<10} {:>14} {:>10}", "layer", "max err cells", "fallbacks");
        for l in v["layers"].as_array().into_iter().flatten() {
            let fb = l["fallbacks"].as_array().map_or(0, Vec::len);
            println!("  {:<10} {:>14.2} {:>10}", l["layer"].as_str().unwrap_or("?"), l["max_error_cells"].as_f64().unwrap_or(f64::NAN), fb);
        }
        println!("  {:<12} {:>6} {:>7} {:>9} {:>7} {:>12}", "class", "quota", "placed", "shortfall", "radius", "min spacing");
        for c in v["classes"].as_array().into_iter().flatten() {
            let sp = c["min_spacing"].as_f64().map_or_else(|| "-".into(), |d| format!("{d:.1}"));
            println!(
                "  {:<12} {:>6} {:>7} {:>9} {:>7.1} {:>12}",
                c["class"].as_str().unwrap_or("?"),
                c["quota"].as_u64().unwrap_or(0),
                c["placed"].as_u64().unwrap_or(0),
                c["shortfall"].as_u64().unwrap_or(0),
                c["radius"].as_f64().unwrap_or(f64::NAN),
                sp
            );
        }
    }
    Ok(())
}

fn batch(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let b = run_batch(cfg)?;
    print_batch(&b);
    if cfg.direction == Direction::Worldgen {
        print_worlds(&b)?;
    }
    Ok(if b.failures() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Crowd(a) => batch(&a.config(Some(Direction::Crowd))?),
        Command::Action(a) => batch(&a.config(Some(Direction::Action))?),
        Command::Spawn(a) => batch(&a.config(Some(Direction::Spawn))?),
        Command::Worldgen(a) => batch(&a.config(Some(Direction::Worldgen))?),
        Command::Sweep { preset, run } => {
            let mut cfg = run.config(None)?;
            preset.apply(&mut cfg);
            batch(&cfg)
        }
        Command::Aggregate { dir } => {
            let records = load_records(&dir)?;
            if records.is_empty() {
                bail!("no run.json files under {}", dir.display());
            }
            write_tables(&dir, &records)?;
            println!("aggregated {} runs in {}", records.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { only, seeds, timing_seeds } => {
            let scratch = std::env::temp_dir().join(format!("noisefield-check-{}", std::process::id()));
            let mut opts = Options::new(scratch.clone());
            opts.only = only;
            opts.seeds = seeds;
            opts.timing_seeds = timing_seeds;
            let outcomes = acceptance::run(&opts);
            let _ = std::fs::remove_dir_all(&scratch);
            let mut ok = true;
            for o in &outcomes {
                println!("[{}] {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
                ok &= o.pass;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
