use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_csp-sched");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN).args(args).env(key, value).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["generate", "-o", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.json", &["--seed", "1", "--m", "3"]);
    let b = generate(dir.path(), "b.json", &["--seed", "1", "--m", "3"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn generate_rejects_bad_config() {
    let out = run(&["generate", "--angle-max", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("angle_max"));
}

#[test]
fn every_solver_output_verifies_at_its_beta() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(
        dir.path(),
        "i.json",
        &["--seed", "5", "--m", "2", "--constant-demands", "--window-model", "random-contiguous"],
    );
    for (alg, beta) in [
        ("exact", "1"),
        ("greedy-sequential", "1"),
        ("fptas", "3"),
        ("ptas", "1"),
        ("ufp", "1"),
        ("mixed+exact", "1"),
    ] {
        let sol = dir.path().join(format!("{alg}.json"));
        let out = run(&["solve", s(&inst), "-a", alg, "-o", s(&sol)]);
        assert!(out.status.success(), "{alg}: {}", text(&out.stderr));
        let v = run(&["verify", s(&inst), s(&sol), "--beta", beta]);
        assert_eq!(v.status.code(), Some(0), "{alg}: {}", text(&v.stdout));
        // Same flags, same bytes.
        let again = dir.path().join(format!("{alg}-again.json"));
        run(&["solve", s(&inst), "-a", alg, "-o", s(&again)]);
        assert_eq!(std::fs::read(&sol).unwrap(), std::fs::read(&again).unwrap(), "{alg}");
    }
}

#[test]
fn greedy_on_two_slots_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &["--m", "2"]);
    let out = run(&["solve", s(&inst), "-a", "greedy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("greedy requires m=1"), "{}", text(&out.stderr));
}

#[test]
fn report_row_and_fptas_beta() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &["--seed", "2", "--n", "5"]);
    let report = dir.path().join("r.csv");
    for alg in ["fptas", "exact"] {
        let out = run(&["solve", s(&inst), "-a", alg, "--epsilon", "0.5", "--report", s(&report)]);
        assert!(out.status.success());
    }
    let csv = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "instance,algorithm,epsilon,utility,beta,elapsed_ms");
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[1], "fptas");
    assert!(fields[4].parse::<f64>().unwrap() <= 3.0);
    let exact: Vec<&str> = lines[2].split(',').collect();
    assert!(fields[3].parse::<f64>().unwrap() + 1e-9 >= exact[3].parse::<f64>().unwrap());
}

#[test]
fn verify_reports_excess_and_accepts_looser_beta() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    std::fs::write(
        &inst,
        r#"{"m": 1, "capacities": [10.0], "users": [
            {"id": "a", "preferences": [{"id": "p", "window": [1], "values": [[6.0, 0.0]], "utility": 1.0, "elastic": false}]},
            {"id": "b", "preferences": [{"id": "p", "window": [1], "values": [[3.999, 0.0]], "utility": 1.0, "elastic": false}]},
            {"id": "c", "preferences": [{"id": "p", "window": [1], "values": [[0.0, 0.0]], "utility": 1.0, "elastic": false}]}
        ]}"#,
    )
    .unwrap();
    let sol = dir.path().join("s.json");
    std::fs::write(&sol, r#"{"chosen": [["a", "p"], ["b", "p"]], "fractional": []}"#).unwrap();
    assert_eq!(run(&["verify", s(&inst), s(&sol)]).status.code(), Some(0));

    std::fs::write(
        &inst,
        std::fs::read_to_string(&inst).unwrap().replace("3.999", "4.999"),
    )
    .unwrap();
    let out = run(&["verify", s(&inst), s(&sol)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("slot 1: |load|=10.999000 exceeds beta*C=10.000000 by 0.999000"), "{}", text(&out.stdout));
    assert_eq!(run(&["verify", s(&inst), s(&sol), "--beta", "1.1"]).status.code(), Some(0));
}

#[test]
fn malformed_solution_names_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &[]);
    let sol = dir.path().join("s.json");
    std::fs::write(&sol, "{\"chosen\": [\n  [\"u0\" \"p0\"]]}").unwrap();
    let out = run(&["verify", s(&inst), s(&sol)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("s.json") && err.contains("line 2"), "{err}");
}

#[test]
fn compare_tabulates_ratios() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..4 {
        generate(dir.path(), &format!("g{seed}.json"), &["--seed", &seed.to_string()]);
    }
    let pattern = format!("{}/g*.json", dir.path().display());
    let out = run(&["compare", &pattern, "--algorithms", "exact,greedy,fptas", "--min-ratio", "0.35"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let table = text(&out.stdout);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[6], "ok", "{row}");
        let ratio: f64 = f[3].parse().unwrap();
        if f[1] == "fptas" {
            assert!(ratio >= 1.0 - 1e-9, "{row}");
        }
    }
}

#[test]
fn compare_on_empty_glob_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = format!("{}/none*.json", dir.path().display());
    let out = run(&["compare", &pattern]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout).lines().count(), 1);
}

#[test]
fn memory_cap_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &["--n", "8", "--max-prefs-per-user", "3"]);
    let out = run_env(&["solve", s(&inst), "-a", "fptas", "--epsilon", "0.1"], "CSP_SCHED_MEM_CAP", "1K");
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &[]);
    let out = run(&["solve", s(&inst), "-a", "simplex"]);
    assert_eq!(out.status.code(), Some(2));
}
