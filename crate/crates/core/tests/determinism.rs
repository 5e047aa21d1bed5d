use std::fs;
use std::path::Path;

use noisefield_core::action::{self, ActionConfig, Method};
use noisefield_core::crowd::{self, CrowdConfig, MotionPolicy, Scale};
use noisefield_core::spawn::{self, PolicyKind, SpawnConfig};

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn crowd_runs_repeat_exactly() {
    let cfg = CrowdConfig::scale(Scale::Small);
    for name in ["perlin_dual", "ou", "vicsek"] {
        let pol = MotionPolicy::by_name(name).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let run = crowd::run_crowd(&cfg, &pol, 4).unwrap();
            let m = crowd::summarize(&run, &cfg);
            run.write_outputs(d.path(), &cfg, &m).unwrap();
        }
        let a = files(dirs[0].path());
        assert!(!a.is_empty());
        assert_eq!(a, files(dirs[1].path()), "{name}");
    }
    let pol = MotionPolicy::by_name("perlin_dual").unwrap();
    let a = crowd::summarize(&crowd::run_crowd(&cfg, &pol, 4).unwrap(), &cfg);
    let b = crowd::summarize(&crowd::run_crowd(&cfg, &pol, 5).unwrap(), &cfg);
    assert_ne!(a.get("s_dir_5"), b.get("s_dir_5"));
}

#[test]
fn action_runs_repeat_exactly() {
    let cfg = ActionConfig::scale(Scale::Small);
    for m in [Method::Perlin, Method::Poisson, Method::HawkesInhib] {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let run = action::run_action_timing(&cfg, m, 8).unwrap();
            run.write_outputs(d.path(), &action::summarize(&run, &cfg)).unwrap();
        }
        assert_eq!(files(dirs[0].path()), files(dirs[1].path()), "{}", m.name());
    }
}

#[test]
fn spawn_runs_repeat_exactly() {
    let cfg = SpawnConfig::scale(Scale::Small);
    for k in PolicyKind::ALL {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let run = spawn::run_spawn(&cfg, k, 2).unwrap();
            run.write_outputs(d.path(), &spawn::summarize(&run, &cfg)).unwrap();
        }
        assert_eq!(files(dirs[0].path()), files(dirs[1].path()), "{}", k.name());
    }
}
