use std::path::Path;
use std::process::{Command, Output};

fn veegan(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veegan"))
        .args(args)
        .env("VEEGAN_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMOKE: &str = r#"
[experiment]
name = "smoke"
methods = ["GAN", "ALI", "UNROLLED", "VEEGAN"]
n_runs = 2
master_seed = 4

[trainer]
steps = 0
gen_hidden = [8]
rec_hidden = [8]
disc_hidden = [8]

[eval]
n_samples = 200
"#;

#[test]
fn check_bound_grid_and_negative_control() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = veegan(&["check-bound"], tmp.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("2205 points"));

    let bad = veegan(&["check-bound", "--swap-sides"], tmp.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("VIOLATION a="));
}

#[test]
fn check_bound_single_point_equality() {
    let tmp = tempfile::tempdir().unwrap();
    let o = veegan(&["check-bound", "--a", "0", "--b", "0", "--s", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("equality within 1e-9"), "{}", stdout(&o));
    let o = veegan(&["check-bound", "--a", "1", "--b", "1", "--s", "0.1"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("equality"));
}

#[test]
fn bad_config_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad.cfg", "[trainer]\nlearning_rat = 0.1\n");
    let o = veegan(&["run", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rat"), "{}", stderr(&o));
}

#[test]
fn smoke_run_is_byte_identical_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "smoke.cfg", SMOKE);
    let (da, db) = (tmp.path().join("a"), tmp.path().join("b"));
    let a = veegan(&["run", "--config", &cfg, "--out", da.to_str().unwrap()], tmp.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = veegan(&["run", "--config", &cfg, "--out", db.to_str().unwrap()], tmp.path());
    assert_eq!(b.status.code(), Some(0));
    let ra = std::fs::read(da.join("results.csv")).unwrap();
    let rb = std::fs::read(db.join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(stdout(&a).as_bytes(), &ra[..]);
    let text = String::from_utf8(ra).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# veegan results schema 1");
    assert_eq!(lines[1], "method,run,seed,modes,hq_fraction,ivom,wallclock_s");
    assert_eq!(lines.len(), 2 + 4 * 2 + 4 * 2);
    for m in ["GAN", "ALI", "UNROLLED", "VEEGAN"] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("{m},mean,"))));
        assert!(lines.iter().any(|l| l.starts_with(&format!("{m},std,"))));
    }
}

#[test]
fn default_output_goes_under_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "smoke.cfg", SMOKE);
    let o = veegan(&["run", "--config", &cfg, "--timings", "--jobs", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("smoke");
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(!csv.lines().nth(2).unwrap().ends_with("NA"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 8);
    assert!(dir.join("traces/veegan_run1.csv").exists());
    assert!(dir.join("models/gan_run0.bin").exists());
}

#[test]
fn divergence_marks_run_failed_and_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "div.cfg",
        r#"
[experiment]
name = "div"
methods = ["GAN"]
n_runs = 1

[trainer]
steps = 50
gen_hidden = [8]
disc_hidden = [8]
gen_opt = { kind = "sgd", lr = 1e305 }
disc_opt = { kind = "sgd", lr = 1e305 }
"#,
    );
    let o = veegan(&["run", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("div/results.csv")).unwrap();
    assert!(csv.contains("GAN,0,") && csv.contains(",failed,failed,failed,"), "{csv}");
    assert!(tmp.path().join("div/models/gan_run0.last_good.bin").exists());
}

#[test]
fn train_eval_and_export_density() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "t.cfg",
        "[trainer]\nsteps = 20\nbatch_size = 16\ngen_hidden = [8]\nrec_hidden = [8]\ndisc_hidden = [8]\n[eval]\nn_samples = 100\n",
    );
    let out = tmp.path().join("m");
    let o = veegan(&["train", "-c", &cfg, "--method", "veegan", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = stdout(&o).trim().to_string();
    assert!(out.join("veegan_run0_trace.csv").exists());

    let o = veegan(&["eval", "-c", &cfg, "--method", "VEEGAN", "--model", &model], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(m["modes"].as_u64().unwrap() <= 8);

    let grid = tmp.path().join("g.txt");
    let o = veegan(
        &["export-density", "-c", &cfg, "--method", "VEEGAN", "--model", &model, "--resolution", "20", "--n", "500", "--bounds", "-3", "3", "-3", "3", "--out", grid.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("# bounds -3 3 -3 3 resolution 20 n 500\n"));
    assert_eq!(text.lines().count(), 21);

    let data = tmp.path().join("d.txt");
    let o = veegan(&["export-density", "-c", &cfg, "--out", data.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let total: f64 = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .skip(1)
        .flat_map(|l| l.split(' ').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn grad_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = veegan(&["grad-check"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
