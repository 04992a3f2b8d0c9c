use std::fs;
use std::process::{Command, Output};

fn tipflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tipflow")).args(args).output().expect("binary runs")
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

#[test]
fn lists_every_preset() {
    let out = tipflow(&["list-presets"]);
    assert!(out.status.success());
    let listing = text(&out);
    for name in ["fig6", "fig7", "fig8", "rs-baseline", "fluid-random", "fluid-integrable", "steady-exp"] {
        assert!(listing.contains(name), "{name} missing from\n{listing}");
    }
}

#[test]
fn run_writes_outputs_and_verdict_is_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fig6");
    let out = tipflow(&[
        "run", "fig6", "--out", out_dir.to_str().unwrap(), "--runs", "3", "--horizon", "80", "--seed", "42",
    ]);
    assert!(out.status.success(), "{}", text(&out));
    for file in ["run_000.csv", "run_002.csv", "summary.csv", "verdict.txt", "manifest.txt", "plot.svg"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let first = fs::read_to_string(out_dir.join("run_000.csv")).unwrap();
    assert!(first.starts_with("t,L,X,W,N\n0,"));
    assert_eq!(first.lines().count(), 81);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run,seed,final_L,tail_mean_L,tail_slope\n0,42,"));

    let written = fs::read_to_string(out_dir.join("verdict.txt")).unwrap();
    let again = tipflow(&["verdict", out_dir.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8_lossy(&again.stdout), written);

    // The manifest alone reproduces the run.
    let replay = dir.path().join("replay");
    let out = tipflow(&["run", out_dir.join("manifest.txt").to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(fs::read_to_string(replay.join("run_000.csv")).unwrap(), first);
}

#[test]
fn fluid_and_steady_presets_run() {
    let dir = tempfile::tempdir().unwrap();
    let fluid = dir.path().join("fluid");
    let out = tipflow(&["run", "fluid-random", "--horizon", "200", "--set", "fluid.steps_per_h=20", "--out", fluid.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let csv = fs::read_to_string(fluid.join("fluid.csv")).unwrap();
    assert!(csv.starts_with("t,x_total,l_total,w_total,zeta_1,zeta_2\n"));
    assert!(fs::read_to_string(fluid.join("density.csv")).unwrap().starts_with("t,s,x,l\n"));
    let verdict = tipflow(&["verdict", fluid.to_str().unwrap()]);
    assert!(text(&verdict).contains("verdict = bounded"));

    let steady = dir.path().join("steady");
    let out = tipflow(&["run", "steady-exp", "--out", steady.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(fs::read_to_string(steady.join("steady.txt")).unwrap().contains("tip integral: diverges"));
}

#[test]
fn errors_are_reported() {
    let out = tipflow(&["run", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("unknown preset `fig9`"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"bad\"\nexpected = \"bounded\"\n[sim]\nlambda = 1.0\nh = 2\nhorizon = 10\npolicy = \"mcmc{-1}\"\n").unwrap();
    let out = tipflow(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("line 7"), "{}", text(&out));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = tipflow(&["run", "fig6", "--runs", "2", "--horizon", "20", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("cannot write"), "{}", text(&out));

    let out = tipflow(&["run", "fig6", "--set", "sim.lambda"]);
    assert_eq!(out.status.code(), Some(2));
}
