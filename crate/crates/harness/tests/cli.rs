use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 8] = [
    "--set",
    "protocol.x0=[0.3,0.5]",
    "--set",
    "protocol.n_traj=40",
    "--set",
    "t=[0.05,0.2]",
    "--set",
    "mc.n_paths=50",
];

fn wfdens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfdens"))
        .args(args)
        .env_remove("WFDENS_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(&SMALL);
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ensemble_bytes(dir: &Path) -> Vec<Vec<u8>> {
    let mut files: Vec<_> = fs::read_dir(dir.join("ensembles"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = wfdens(&with_small(&["simulate", "-o", d.to_str().unwrap()]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (ea, eb) = (ensemble_bytes(&a), ensemble_bytes(&b));
    assert_eq!(ea.len(), 2);
    assert_eq!(ea, eb);
}

#[test]
fn invalid_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = wfdens(&[
        "simulate",
        "-o",
        out.to_str().unwrap(),
        "--set",
        "protocol.n_traj=0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("protocol.n_traj"));
    assert!(!out.exists());

    let o = wfdens(&["config", "--set", "protocol.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn beta_moment_beyond_range_reports_the_variance_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wfdens(&[
        "density",
        "--model",
        "BetaMoment",
        "--x0",
        "0.3",
        "--t",
        "50",
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("var < E(1-E)"), "{}", stderr(&o));
    assert!(!tmp.path().join("densities").exists());
}

#[test]
fn exact_density_has_confidence_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("exact.csv");
    let o = wfdens(&with_small(&[
        "density",
        "--model",
        "ExactMC",
        "--x0",
        "0.5",
        "--t",
        "0.1",
        "--out",
        csv.to_str().unwrap(),
        "-o",
        tmp.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l == "x,density,std_error,lower,upper"));
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let row: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 5);
        assert!(row[3] <= row[1] && row[1] <= row[4] && row[2] >= 0.0);
        rows += 1;
    }
    assert_eq!(rows, 2001);
}

#[test]
fn figures_without_inputs_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = wfdens(&["figures", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    // An empty distance table is refused the same way.
    let compare = out.join("compare");
    fs::create_dir_all(&compare).unwrap();
    fs::write(
        compare.join("distances.csv"),
        "# schema-version: 1\nx0,t,model,hellinger,l2\n",
    )
    .unwrap();
    let o = wfdens(&["figures", "-o", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!out.join("figures").exists());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wfdens"))
        .args(with_small(&["simulate", "-o", "rel"]))
        .env("WFDENS_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("rel/ensembles").is_dir());
    assert!(tmp.path().join("rel/resolved_config.json").is_file());
}

#[test]
fn all_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = wfdens(&with_small(&["all", "-o", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "compare/distances.csv",
        "compare/heatmap_hellinger.csv",
        "compare/heatmap_l2.csv",
        "compare/report.json",
        "figures/heatmap_hellinger.svg",
        "figures/comparison_panels.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let rows = fs::read_to_string(out.join("compare/distances.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count();
    // Header plus 2 x0 values, 2 times and 4 models.
    assert_eq!(rows, 1 + 2 * 2 * 4);
}
