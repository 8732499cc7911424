use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ofl");

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ofl-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

const SIMULATE: &str = r#"
experiment = "simulate"
seed = 2
[potential]
family = "fpu_alpha"
alpha = 0.1
[chain]
n = 32
a = 1.5
gamma = 1.0
beta_exp = 0.5
[run]
T = 0.02
ensemble = 2
record = [0.0, 0.01, 0.02]
snapshots = 1
"#;

#[test]
fn same_seed_gives_identical_csvs() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    assert!(run(&a, "simulate", SIMULATE, &[]).status.success());
    assert!(run(&b, "simulate", SIMULATE, &[]).status.success());
    for f in ["trajectory_0000.csv", "summary.csv"] {
        let x = fs::read(a.join("out").join(f)).unwrap();
        let y = fs::read(b.join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 2);
    assert_eq!(m["experiment"], "simulate");
}

#[test]
fn seed_flag_overrides_config() {
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    assert!(run(&a, "simulate", SIMULATE, &["--seed", "2"]).status.success());
    assert!(run(&b, "simulate", SIMULATE, &["--seed", "3"]).status.success());
    let x = fs::read(a.join("out/summary.csv")).unwrap();
    let y = fs::read(b.join("out/summary.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn thread_count_does_not_change_results() {
    let a = scratch("thr-a");
    let b = scratch("thr-b");
    assert!(run(&a, "simulate", SIMULATE, &["--threads", "1"]).status.success());
    assert!(run(&b, "simulate", SIMULATE, &["--threads", "3"]).status.success());
    assert_eq!(fs::read(a.join("out/summary.csv")).unwrap(), fs::read(b.join("out/summary.csv")).unwrap());
}

#[test]
fn malformed_config_exits_2_without_output() {
    let d = scratch("bad");
    let o = run(&d, "simulate", "[chain\nn = 32", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.join("out").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let d = scratch("unknown");
    let o = run(&d, "simulate", &SIMULATE.replace("snapshots = 1", "snapshots = 1\nsnapshot = 2"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("snapshot"));
    assert!(!d.join("out").exists());
}

#[test]
fn invalid_parameters_exit_2() {
    let d = scratch("invalid");
    let o = run(&d, "simulate", &SIMULATE.replace("n = 32", "n = 4"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&d, "kernel", "[kernel]\ntimes = [-1.0]\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.join("out").exists());
}

#[test]
fn cheap_experiments_write_their_schemas() {
    let cases: [(&str, &str, &str, &str); 4] = [
        ("kernel", "[kernel]\ntimes = [0.1]\nx_max = 2.0\n", "kernel_00.csv", "x,P_t(x)"),
        ("poisson", "[poisson]\nns = [32, 64]\n", "norms.csv", "n,norm_name,value"),
        ("nlfh", "[potential]\nfamily = \"toda\"\n", "classification.csv", ""),
        ("validate-potential", "[potential]\nfamily = \"harmonic\"\n[validate]\nsamples = 200\n", "validation.csv", ""),
    ];
    for (cmd, cfg, file, header) in cases {
        let d = scratch(cmd);
        let o = run(&d, cmd, cfg, &[]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(d.join("out").join(file)).unwrap();
        assert!(text.lines().count() > 1, "{cmd} wrote no rows");
        if !header.is_empty() {
            assert_eq!(text.lines().next().unwrap(), header);
        }
        assert!(d.join("out/manifest.json").exists());
    }
}
