use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = include_str!("../../../fracdens.toml");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracdens"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn with_config() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("fracdens.toml"), CONFIG).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_config_runs_every_command() {
    let dir = with_config();
    for cmd in ["fbm-sim", "distance", "density"] {
        let o = run(dir.path(), &[cmd, "--count", "2000"]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let o = run(dir.path(), &["verify", "--only", "3,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "out/fbm-sim/paths.csv",
        "out/fbm-sim/cov_report.csv",
        "out/fbm-sim/paths.svg",
        "out/distance/sweep.csv",
        "out/distance/sweep.svg",
        "out/density/density.csv",
        "out/density/density.svg",
        "out/verify/c3_brownian.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let svg = std::fs::read_to_string(dir.path().join("out/distance/sweep.svg")).unwrap();
    assert!(svg.contains("viewBox=\"0 0 800 600\""));
    let csv = std::fs::read_to_string(dir.path().join("out/distance/sweep.csv")).unwrap();
    assert!(csv.contains("\nr,dir_index,upper,optimized,residual,ratio,converged\n"));
    assert!(csv.starts_with("# H: 0.75\n"));
    assert!(csv.contains("# fitted_C: "));
}

#[test]
fn csv_headers_match_contract() {
    let dir = with_config();
    assert!(
        run(dir.path(), &["fbm-sim", "--count", "100", "--hurst", "0.5"])
            .status
            .success()
    );
    assert!(run(
        dir.path(),
        &["density", "--count", "500", "--t-list", "0.5,0.25"]
    )
    .status
    .success());
    let header = |f: &str| {
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .find(|l| !l.starts_with('#'))
            .unwrap()
            .to_string()
    };
    assert_eq!(header("out/fbm-sim/paths.csv"), "t,comp_1");
    assert_eq!(
        header("out/fbm-sim/cov_report.csv"),
        "s,t,empirical,exact,stderr,z"
    );
    assert_eq!(
        header("out/density/density.csv"),
        "t,y_offset,phat,stderr,phat_times_tNH,bandwidth"
    );
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = with_config();
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    let mut first = Vec::new();
    for round in 0..2 {
        for cmd in ["fbm-sim", "density"] {
            let threads = if round == 0 { "1" } else { "3" };
            let o = run(
                dir.path(),
                &[cmd, "--seed", "42", "--count", "3000", "--threads", threads],
            );
            assert!(o.status.success(), "{}", stderr(&o));
        }
        let files = [
            "out/fbm-sim/paths.csv",
            "out/fbm-sim/cov_report.csv",
            "out/density/density.csv",
        ];
        let now: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect();
        if round == 0 {
            first = now;
        } else {
            assert_eq!(first, now);
        }
    }
    assert!(
        run(dir.path(), &["fbm-sim", "--seed", "43", "--count", "3000"])
            .status
            .success()
    );
    assert_ne!(first[0], read("out/fbm-sim/paths.csv"));
}

#[test]
fn invalid_hurst_is_a_validation_error() {
    let dir = with_config();
    let o = run(dir.path(), &["fbm-sim", "--hurst", "1.2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`hurst`"), "{}", stderr(&o));
    let o = run(dir.path(), &["density", "--hurst", "0.3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`hurst`"));
    let o = run(dir.path(), &["distance", "--field", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
    let o = run(dir.path(), &["distance", "--field-param", "eps"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "fbm-sim",
            "--hurst",
            "0.5",
            "--grid-n",
            "8",
            "--seed",
            "1",
            "--out-dir",
            "o",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`count`"), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("fracdens.toml"),
        "hurst = 0.6\ngrid_n = 16\nseed = 1\nout_dir = \"o\"\n",
    )
    .unwrap();
    let o = run(dir.path(), &["density"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`x`"), "{}", stderr(&o));
}

#[test]
fn explicit_config_path_and_bad_file() {
    let dir = with_config();
    let other = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fracdens.toml");
    let o = run(
        other.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "fbm-sim",
            "--count",
            "50",
            "--out-dir",
            "sim",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(other.path().join("sim/paths.csv").exists());
    std::fs::write(other.path().join("bad.toml"), "hurst = [").unwrap();
    let o = run(other.path(), &["--config", "bad.toml", "fbm-sim"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_determinism_criterion() {
    let dir = with_config();
    let o = run(dir.path(), &["verify", "--seed", "42", "--only", "2,3,9"]);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(o.status.success(), "{out}{}", stderr(&o));
    assert!(out.contains("9   PASS"), "{out}");
    assert!(!dir.path().join("out/verify/.rerun").exists());
}
