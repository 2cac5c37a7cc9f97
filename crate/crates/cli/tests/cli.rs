use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sdid");

/// Small balanced panel: 12 controls, 4 treated, 6 periods, effect 2 in the
/// last two. Deterministic, no RNG.
fn write_panel(dir: &Path) {
    let mut s = String::from("unit,year,y,treated,region,size\n");
    for i in 0..16 {
        let treated = i < 4;
        for t in 0..6 {
            let wobble = ((i * 7 + t * 3) % 5) as f64 * 0.1;
            let y = 10.0 + i as f64 * 0.5 + 0.3 * t as f64 + wobble + if treated && t >= 4 { 2.0 } else { 0.0 };
            let d = u8::from(treated && t >= 4);
            s.push_str(&format!("u{i},{},{y},{d},r{},{}\n", 2010 + t, i % 2, i));
        }
    }
    fs::write(dir.join("panel.csv"), s).unwrap();
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("job.toml");
    fs::write(&path, body).unwrap();
    path
}

const BASE: &str = r#"
[panel]
path = "panel.csv"
[panel.schema]
unit = "unit"
period = "year"
outcome = "y"
treated = "treated"
covariates = ["region", "size"]
"#;

fn sdid(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--config").arg(config).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn estimate_writes_four_variant_table_with_weight_footer() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), BASE);
    let out = sdid(&cfg, &["estimate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = read_csv(&dir.path().join("out/estimate.csv"));
    assert_eq!(rows[0], ["statistic", "uniform/uniform", "uniform/sdid", "sdid/uniform", "sdid/sdid"]);
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["tau", "pre_fit_rmse", "n_treated", "n_control", "n_obs", "unit_weights", "time_weights"]);
    assert_eq!(rows[6][1..], ["no", "no", "sdid", "sdid"]);
    assert_eq!(rows[7][1..], ["no", "sdid", "no", "sdid"]);
    for v in &rows[1][1..] {
        let tau: f64 = v.parse().unwrap();
        assert!((tau - 2.0).abs() < 0.2, "tau {tau}");
    }
    assert_eq!(rows[3][1], "4");
    assert_eq!(rows[4][1], "12");

    let text = fs::read_to_string(dir.path().join("out/estimate.txt")).unwrap();
    assert!(text.starts_with("statistic"));
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/estimate.json")).unwrap()).unwrap();
    assert_eq!(prov["command"], "estimate");
    assert_eq!(prov["inputs"][0]["role"], "panel");
    assert_eq!(prov["estimates"].as_array().unwrap().len(), 4);
    assert!(prov["decisions"]["zeta"].is_string());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let body = format!("{BASE}\n[bootstrap]\nreplicates = 40\nseed = 5\nspecs = [\"sdid/sdid\", \"uniform/uniform\"]\n");
    let cfg = write_config(dir.path(), &body);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "4")] {
        let o = sdid(&cfg, &["bootstrap", "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["bootstrap.csv", "bootstrap.txt", "bootstrap.json", "bootstrap_replicates.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let rows = read_csv(&a.join("bootstrap.csv"));
    let names: Vec<&str> = rows[1..4].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["tau", "se", "ci_low"]);
    assert_eq!(read_csv(&a.join("bootstrap_replicates.csv")).len(), 41);

    let other = sdid(&cfg, &["bootstrap", "--out", dir.path().join("c").to_str().unwrap(), "--seed", "6"]);
    assert!(other.status.success());
    assert_ne!(fs::read(a.join("bootstrap_replicates.csv")).unwrap(), fs::read(dir.path().join("c/bootstrap_replicates.csv")).unwrap());
}

#[test]
fn unknown_column_is_a_config_error_naming_the_column() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), &BASE.replace("outcome = \"y\"", "outcome = \"turnout\""));
    let out = sdid(&cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    let report = stderr_json(&out);
    assert_eq!(report["status"], "error");
    assert_eq!(report["error"]["kind"], "config");
    assert_eq!(report["error"]["column"], "turnout");
    assert!(!dir.path().join("out/estimate.csv").exists());
}

#[test]
fn stochastic_job_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), &format!("{BASE}\n[bootstrap]\nreplicates = 10\n"));
    let out = sdid(&cfg, &["bootstrap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("seed"));
    assert!(sdid(&cfg, &["bootstrap", "--seed", "1"]).status.success());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), &format!("{BASE}\n[estimate]\nspecz = []\n"));
    let out = sdid(&cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("specz"));
}

#[test]
fn malformed_outcome_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let p = dir.path().join("panel.csv");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[2] = "abc".into();
    lines[3] = cells.join(",");
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    let cfg = write_config(dir.path(), BASE);
    let out = sdid(&cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["column"], "y");
}

#[test]
fn figures_are_long_format() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), &format!("{BASE}\n[figures]\nspecs = [\"sdid/sdid\", \"uniform/uniform\"]\n"));
    let out = sdid(&cfg, &["export-figures"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = read_csv(&dir.path().join("out/figure_trends_sdid_sdid.csv"));
    assert_eq!(rows[0], ["period", "series", "value"]);
    assert_eq!(rows.len(), 1 + 2 * 6);
    assert_eq!(rows[1][..2], ["2010", "treated"]);
    assert_eq!(rows[2][..2], ["2010", "counterfactual"]);

    let did = read_csv(&dir.path().join("out/figure_trends_uniform_uniform.csv"));
    assert_eq!(did[2][1], "control");
    let arms = read_csv(&dir.path().join("out/figure_arm_trends.csv"));
    assert_eq!(arms.len(), 13);
    // Treated mean in the first period: units 0..4, t = 0.
    let expected = (0..4).map(|i| 10.0 + i as f64 * 0.5 + ((i * 7) % 5) as f64 * 0.1).sum::<f64>() / 4.0;
    assert!((arms[1][2].parse::<f64>().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn subgroups_and_placebo_run_from_one_config() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let body = format!(
        "{BASE}\n[placebo]\ndrop_last = 2\nspecs = [\"sdid/sdid\"]\n\n\
         [[subgroup]]\nname = \"even\"\npredicate = {{ op = \"eq\", attr = \"region\", value = \"r0\" }}\nspecs = [\"sdid/sdid\"]\n"
    );
    let cfg = write_config(dir.path(), &body);
    let out = sdid(&cfg, &["run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("placebo.csv") && stdout.contains("subgroup.csv"));

    let placebo = read_csv(&dir.path().join("out/placebo.csv"));
    let tau: f64 = placebo[1][1].parse().unwrap();
    assert!(tau.abs() < 0.5, "placebo tau {tau}");
    let sub = read_csv(&dir.path().join("out/subgroup.csv"));
    assert_eq!(sub[0], ["subgroup", "spec", "tau", "n_treated", "n_control"]);
    assert_eq!(sub[1][..2], ["even", "sdid/sdid"]);
    assert_eq!(sub[1][3], "2");
    assert_eq!(sub[1][4], "6");
}

#[test]
fn validate_reports_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path());
    let cfg = write_config(dir.path(), BASE);
    let out = sdid(&cfg, &["validate"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("16 units (4 treated, 12 control)"));
    assert!(!dir.path().join("out").exists());
}
