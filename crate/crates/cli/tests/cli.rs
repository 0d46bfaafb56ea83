use std::path::Path;
use std::process::{Command, Output};

use varcurv_core::io::{read_mask, save_cut_problem};
use varcurv_core::{BinaryMask, CutProblem, FieldUnit, GridDomain, PerimeterWeights, ScalarField};

fn varcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcurv")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifests(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exponent_prints_formulas_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = varcurv(&["exponent", "--n", "2", "--p", "5", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("alpha0 = 0.15\n"), "{text}");
    assert!(text.contains("alpha_star = 0.5"), "{text}");
    assert!(text.contains("k,alpha_k\n0,0.15\n"), "{text}");
    let csv = std::fs::read_to_string(out.join("iterates.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((last - 0.5).abs() < 1e-12);
    assert_eq!(manifests(&out), 1);
}

#[test]
fn classify_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = varcurv(&[
        "counterexample", "--family", "cusp2d", "--alpha", "0.5", "--p", "3", "--classify", "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "finite, threshold 0.25");
}

#[test]
fn threshold_table_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = varcurv(&["counterexample", "--family", "cusp-nd", "--threshold-table", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 5 * 19);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (alpha, thr): (f64, f64) = (f[2].parse().unwrap(), f[4].parse().unwrap());
        assert_eq!(f[3] == "finite", alpha > thr, "{row}");
    }
}

#[test]
fn missing_problem_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = varcurv(&["minimize", "--problem", path(&missing), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--problem"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let o = varcurv(&["exponent", "--n", "2", "--p", "5", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
    let o = varcurv(&["exponent", "--n", "3", "--p", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n/--p"), "{}", stderr(&o));
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# exponent run\nn = 3\np = 10\n").unwrap();
    let o = varcurv(&["exponent", "--config", path(&cfg), "--out", path(&dir.path().join("a"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("alpha0 = 0.175"));
    // the command line overrides the file
    let o = varcurv(&["exponent", "--config", path(&cfg), "--p", "4", "--out", path(&dir.path().join("b"))]);
    assert!(stdout(&o).contains("alpha0 = 0.0625"), "{}", stdout(&o));
    std::fs::write(&cfg, "n = 3\nnot a pair\n").unwrap();
    let o = varcurv(&["exponent", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
    std::fs::write(&cfg, "n = 3\np = 5\nunknown-key = 1\n").unwrap();
    let o = varcurv(&["exponent", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--unknown-key"));
}

fn disk_bundle(dir: &Path) -> std::path::PathBuf {
    let dom = GridDomain::cube(2, 24, -1.0, 1.0).unwrap();
    let h = ScalarField::constant(dom, 4.0, Some(FieldUnit::Curvature)).unwrap();
    let datum = BinaryMask::from_predicate(dom, |x| x[0] * x[0] + x[1] * x[1] < 0.3);
    let free = BinaryMask::from_predicate(dom, |x| x[0].abs() < 0.8 && x[1].abs() < 0.8);
    save_cut_problem(dir, &CutProblem::new(h, datum, free, PerimeterWeights::n16()).unwrap()).unwrap()
}

#[test]
fn minimize_verify_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = disk_bundle(&dir.path().join("problem"));
    let run = dir.path().join("min");
    let o = varcurv(&["minimize", "--problem", path(&bundle), "--out", path(&run)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_mask(&run.join("minimizer.pbm")).unwrap();
    assert!(m.count() > 0);

    let ver = dir.path().join("ver");
    let o = varcurv(&[
        "verify", "--problem", path(&bundle), "--candidate", path(&run.join("minimizer.pbm")), "--trials", "200",
        "--max-radius", "0.25", "--out", path(&ver),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ver.join("minimality.json")).unwrap()).unwrap();
    assert_eq!(rep["trials"], 200);
    assert!(rep["max_improvement"].as_f64().unwrap() <= 1e-9);

    for (src, again) in [(&run, "min2"), (&ver, "ver2")] {
        let o = varcurv(&["replay", path(&src.join("manifest.json")), "--out", path(&dir.path().join(again))]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("replay identical"));
        assert_eq!(manifests(&dir.path().join(again)), 1);
    }
}

#[test]
fn pmc_generated_problem_replays() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("pmc");
    let o = varcurv(&[
        "pmc", "--random-bound", "1", "--nodes", "65", "--seed", "4", "--boundary-slope", "-0.2", "--out",
        path(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("divergence bound holds"));
    let csv = std::fs::read_to_string(run.join("solution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 66);
    // the written problem is itself an input
    let again = dir.path().join("again");
    let o = varcurv(&["pmc", "--problem", path(&run.join("problem.json")), "--seed", "4", "--out", path(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(run.join("solution.csv")).unwrap(), std::fs::read(again.join("solution.csv")).unwrap());
    let o = varcurv(&["replay", path(&run.join("manifest.json")), "--out", path(&dir.path().join("r"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn curvature_and_psi_fit_on_a_generated_cusp() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let o = varcurv(&[
        "counterexample", "--family", "cusp2d", "--alpha", "0.5", "--spacing", "0.05", "--out", path(&gen),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let set = gen.join("set.pbm");
    let o = varcurv(&["curvature", "--set", path(&set), "--points", "16", "--archive", "--out", path(&dir.path().join("c"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let idx: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/sweep/index.json")).unwrap()).unwrap();
    // the sweep stops once E is covered
    let masks = idx["masks"].as_array().unwrap().len();
    assert!(masks >= 1 && masks <= 16);
    assert_eq!(masks, idx["lambdas"].as_array().unwrap().len());
    let o = varcurv(&[
        "psi-fit", "--set", path(&set), "--center", "-0.5,0", "--r-min", "0.4", "--r-max", "1.6", "--out",
        path(&dir.path().join("p")),
    ]);
    // radius 1.6 around (−0.5, 0) leaves the domain
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leaves the domain"), "{}", stderr(&o));
}
