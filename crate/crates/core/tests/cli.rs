use std::path::Path;
use std::process::{Command, Output};

use noma_offload::config::RunConfig;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-offload"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NOMA_OFFLOAD_THREADS")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn solve_writes_allocation_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--seed", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "allocation.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scheme,status,position,device,gamma,tau_c_s,tau_i_s,e_c_j,e_i_j,common_bits,individual_bits");
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[1].starts_with("proposed,feasible,0,"));
    let manifest = read(dir.path(), "manifest.txt");
    assert!(manifest.contains("# master_seed = 4"));
    // the echoed config parses back to the same run
    let cfg = RunConfig::parse(&manifest).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.echo(), RunConfig::parse(&cfg.echo()).unwrap().echo());
}

#[test]
fn infeasible_and_bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--set", "k_common_bits=1e9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve", "--set", "bandwith_hz=1e6"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwith_hz"));
    let out = run(&["sweep", "--axis", "k", "--values", "3:1:1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["solve", "--schemes", "s-cdma"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# two devices\nn_devices = 2\nk_common_bits = 2e6\n").unwrap();
    let out = run(
        &["solve", "--config", cfg.to_str().unwrap(), "--set", "e_max_j=0.1", "--schemes", "proposed,s-oma"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "allocation.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    let manifest = RunConfig::parse(&read(dir.path(), "manifest.txt")).unwrap();
    assert_eq!(manifest.scenario.e_max_j, vec![0.1, 0.1]);
    assert_eq!(manifest.scenario.k_common_bits, 2e6);
}

#[test]
fn sweep_reruns_are_bit_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "--axis", "n", "--values", "2,3", "--set", "n_trials=3", "--schemes", "proposed,s-noma", "--seed", "9"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut two = args.to_vec();
    two.extend(["--threads", "2"]);
    assert_eq!(run(&one, a.path()).status.code(), Some(0));
    assert_eq!(run(&two, b.path()).status.code(), Some(0));
    let csv = read(a.path(), "sweep_n.csv");
    assert_eq!(csv, read(b.path(), "sweep_n.csv"));
    assert!(csv.starts_with("sweep,scheme,metric,mean,stderr,n_ok,n_fail\n"));
    assert!(csv.contains("\n2,proposed,objective,"));
}

#[test]
fn convergence_output_and_oracle_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["convergence", "--set", "n_devices=2", "--set", "grid_resolution=32", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "convergence.csv");
    assert!(csv.starts_with("iteration,phi_bits\n1,"));
    assert!(csv.lines().last().unwrap().starts_with("oracle,"));

    let dir = tempfile::tempdir().unwrap();
    let out = run(&["convergence", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oracle"));
    assert!(!read(dir.path(), "convergence.csv").contains("oracle"));
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_noma-offload"))
        .args(["sweep", "--axis", "k", "--values", "1e6", "--set", "n_trials=2", "--schemes", "proposed", "--out"])
        .arg(dir.path())
        .env("NOMA_OFFLOAD_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("sweep_k.csv").exists());
}
