use std::path::Path;
use std::process::{Command, Output};

fn morl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morl"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const DST_ENV: &str = "[env]\nkind = \"dst\"\nmap = \"builtin:small\"\n";

#[test]
fn run_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{DST_ENV}\n[schedule]\nmode = \"sparse\"\nperiod = 100\n\n[run]\nsteps = 400\nseeds = [9]\nwindow = 20\nlast_steps = 100\n");
    std::fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let o = morl(&["run", "exp.toml", "--seeds", "3,4", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mean episodic regret"));
    let out = dir.path().join("out");
    for f in ["run_3.csv", "run_4.csv", "curves.csv", "summary.csv", "regret.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("run_9.csv").exists());
    let header = std::fs::read_to_string(out.join("run_3.csv")).unwrap();
    assert!(header.starts_with("run,episode,step,w_0,w_1,g_0,g_1,scalarized,optimal,regret\n"));

    std::fs::remove_file(out.join("curves.csv")).unwrap();
    let o = morl(&["aggregate", "out", "--window", "20"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("curves.csv").exists());
    assert!(stdout(&o).contains("aggregated 2 runs"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), format!("{DST_ENV}\n[agent]\nlearning_speed = 3\n")).unwrap();
    let o = morl(&["run", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("agent.learning_speed"));

    std::fs::write(dir.path().join("env.toml"), DST_ENV).unwrap();
    let o = morl(&["oracle", "env.toml", "--w", "0.5,0.2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = morl(&["oracle", "env.toml", "--w", "0.5,0.5,0.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = morl(&["partition", "env.toml", "--resolution", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = morl(&["bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_and_partition() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("env.toml"), DST_ENV).unwrap();
    let o = morl(&["oracle", "env.toml", "--w", "0,1", "--candidates"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("oracle: exact"));
    assert!(text.contains("policy: treasure 1 at row 1 col 0"), "{text}");
    assert!(text.contains("policy,label,v_0,v_1"));

    let o = morl(&["partition", "env.toml", "--resolution", "5", "--svg", "p.svg"], dir.path());
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("w_0,w_1,policy,label\n"));
    assert!(dir.path().join("p.svg").exists());

    std::fs::write(dir.path().join("mc.toml"), "[env]\nkind = \"minecart\"\n").unwrap();
    let o = morl(&["partition", "mc.toml", "--resolution", "20", "--out", "mc.csv"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("7 regions (policy family oracle)"));
    assert_eq!(std::fs::read_to_string(dir.path().join("mc.csv")).unwrap().lines().count(), 211);
}

#[test]
fn bundled_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = morl_core::runner::ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
