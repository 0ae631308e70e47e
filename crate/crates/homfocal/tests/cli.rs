use std::process::Command;

fn homfocal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_homfocal")).args(args).output().unwrap()
}

#[test]
fn verify_generators_passes_on_builtin_table() {
    let out = homfocal(&["verify-generators", "--instances", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n_generators"], 7);
    assert!(report["max_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn verify_generators_fails_on_corrupted_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut table: serde_json::Value = serde_json::from_str(homfocal_core::generators::EMBEDDED_TABLE).unwrap();
    let term = &mut table["polynomials"][0][0]["coef"];
    assert_eq!(term, "1/1");
    *term = serde_json::json!("2/1");
    let path = dir.path().join("table.json");
    std::fs::write(&path, serde_json::to_string(&table).unwrap()).unwrap();
    let out = homfocal(&["verify-generators", "--instances", "50", "--table", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn dataset_benchmark_and_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.json");
    let data = data.to_str().unwrap();
    let gen = homfocal(&["--seed", "4", "synth-dataset", "--case", "fr", "--n-scenes", "3", "--placement", "hemisphere", "--sigma", "0.5", "-o", data]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));

    let bench = homfocal(&["benchmark", data, "--case", "fr", "--max-iterations", "50", "--min-iterations", "50"]);
    assert!(bench.status.success(), "{}", String::from_utf8_lossy(&bench.stderr));
    let text = String::from_utf8(bench.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "case,method,n_triplets,median_xi_f,mean_xi_f,maa_0.1,maa_0.2,mean_runtime_ms");
    assert!(lines.next().unwrap().starts_with("fr,H_fr,3,"));

    let solved = homfocal(&["solve", data, "--case", "fr", "--max-iterations", "50", "--min-iterations", "50", "--fov-filter", "5:170"]);
    assert!(solved.status.success(), "{}", String::from_utf8_lossy(&solved.stderr));
    let json: serde_json::Value = serde_json::from_slice(&solved.stdout).unwrap();
    let records = json["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    for r in records {
        assert_eq!(r["model"]["f"].as_array().unwrap().len(), 3);
        assert_eq!(r["model"]["pose2"]["r"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn stability_and_sweep_write_csv() {
    let stab = homfocal(&["synth-stability", "--case", "ff", "--n-scenes", "50", "--bin-width", "1"]);
    assert!(stab.status.success());
    let text = String::from_utf8(stab.stdout).unwrap();
    assert!(text.starts_with("case,log10_lo,log10_hi,count\n"));
    let total: usize = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 50);

    let sweep = homfocal(&["synth-sweep", "--case", "fff", "--n-scenes", "3", "--sigmas", "0,1", "--max-iterations", "30", "--min-iterations", "30"]);
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    assert_eq!(String::from_utf8(sweep.stdout).unwrap().lines().count(), 3);
}

#[test]
fn rejects_bad_arguments() {
    assert!(!homfocal(&["benchmark", "x.json", "--case", "ffff"]).status.success());
    assert!(!homfocal(&["solve", "x.json", "--case", "fff", "--fov-filter", "60"]).status.success());
    let missing = homfocal(&["solve", "/nonexistent/x.json", "--case", "fff"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/x.json"));
}
