use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn savvy(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_savvy")).args(args).current_dir(cwd).env("SAVVY_LOG", "off").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().clone();
    r.records().map(|rec| header.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.into(), v.into())).collect()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const WORKED: &str =
    "subject_id,arm,time,event\ne1,E,1,1\ne2,E,2,2\ne3,E,3,0\ne4,E,4,1\nc1,C,1.5,1\nc2,C,2.5,0\nc3,C,3,3\nc4,C,4,1\n";

// 30 subjects per arm with every event type, large enough for a stable bootstrap
fn mid_sized() -> String {
    let mut out = String::from("subject_id,arm,time,event\n");
    for (arm, codes) in [("E", [1, 1, 2, 0]), ("C", [1, 3, 2, 0])] {
        for i in 0..30 {
            out.push_str(&format!("{arm}{i},{arm},{},{}\n", 5 + 7 * i, codes[i % 4]));
        }
    }
    out
}

fn simulate(tmp: &Path, body: &str) -> PathBuf {
    let cfg = write(tmp, "sim.toml", body);
    let out = savvy(&["simulate", "--config", cfg.to_str().unwrap(), "-o", "data"], tmp);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    tmp.join("data")
}

const GRID_SIM: &str = r#"
[simulate]
datasets = 6
n_per_arm = 80
seed = 3
[simulate.grid]
lambda_ae_per_year = [0.5, 1.0]
lambda_ce_per_year = [0.2, 0.6]
censoring_max_days = 730
"#;

#[test]
fn bad_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = write(tmp.path(), "t__a.csv", WORKED);
    let d = data.to_str().unwrap();
    assert_eq!(code(&savvy(&["analyze", d, "--quantiles", "0.5"], tmp.path())), 2);
    assert_eq!(code(&savvy(&["analyze", d, "-B", "1"], tmp.path())), 2);
    assert_eq!(code(&savvy(&["analyze", d, "--min-events", "0"], tmp.path())), 2);
    assert_eq!(code(&savvy(&["analyze", d, "--ce-mode", "composite"], tmp.path())), 2);
    assert_eq!(code(&savvy(&["analyze", "missing.csv"], tmp.path())), 2);
    assert_eq!(code(&savvy(&["analyze"], tmp.path())), 2);
    let cfg = write(tmp.path(), "bad.toml", "[run]\nbogus = true\n");
    assert_eq!(code(&savvy(&["analyze", d, "--config", cfg.to_str().unwrap()], tmp.path())), 2);
    assert_eq!(code(&savvy(&["simulate"], tmp.path())), 2);
}

#[test]
fn corrupt_dataset_is_isolated() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write(&data, "good__ae.csv", &mid_sized());
    write(&data, "bad__ae.csv", "subject_id,arm,time,event\ne1,E,-1,1\nc1,C,1,1\n");
    let out = savvy(&["analyze", "data", "-B", "20", "-o", "out"], tmp.path());
    assert_eq!(code(&out), 1);
    let summary = read_csv(&tmp.path().join("out/exclusions_summary.csv"));
    assert!(!summary.is_empty());
    for row in &summary {
        assert_eq!(row["total"], "2");
        assert_eq!(row["failed"], "1", "{row:?}");
    }
    let failed: Vec<_> =
        read_csv(&tmp.path().join("out/exclusions.csv")).into_iter().filter(|r| r["status"] == "failed").collect();
    assert!(failed.iter().all(|r| r["trial_id"] == "bad"));
}

#[test]
fn empty_manifest_gives_empty_summary() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "manifest.csv", "trial_id,ae_type_id,path\n");
    let out = savvy(&["describe", "--manifest", "manifest.csv", "-o", "out"], tmp.path());
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(tmp.path().join("out/describe.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn describe_worked_example() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t__a.csv", WORKED);
    assert_eq!(code(&savvy(&["describe", "t__a.csv", "-o", "out"], tmp.path())), 0);
    let rows = read_csv(&tmp.path().join("out/describe.csv"));
    let e = rows.iter().find(|r| r["arm"] == "E").unwrap();
    assert_eq!(e["trial_id"], "t");
    assert_eq!(e["n"], "4");
    assert_eq!(e["ae_count"], "2");
}

#[test]
fn zero_probability_is_excluded_from_rr_tables() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t__a.csv", &mid_sized());
    // no AE in arm C
    write(tmp.path(), "z__a.csv", "subject_id,arm,time,event\ne1,E,1,1\ne2,E,2,0\nc1,C,1,0\nc2,C,3,2\n");
    let out = savvy(&["analyze", "t__a.csv", "z__a.csv", "-B", "20", "-o", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let excl = read_csv(&tmp.path().join("out/exclusions.csv"));
    let prob = excl.iter().find(|r| r["table"] == "all_ce/prob_q100" && r["trial_id"] == "z").unwrap();
    assert_eq!(prob["status"], "excluded");
    let ratios = read_csv(&tmp.path().join("out/all_ce/ratios_prob_q100.csv"));
    assert!(ratios.iter().all(|r| r["trial_id"] == "t"));
    assert!(!ratios.is_empty());
    // estimates are still reported for the excluded dataset
    let est = read_csv(&tmp.path().join("out/all_ce/estimates.csv"));
    assert!(est.iter().any(|r| r["trial_id"] == "z"));
}

#[test]
fn no_competing_events_no_censoring() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(
        tmp.path(),
        "[simulate]\ndatasets = 4\nn_per_arm = 60\nseed = 9\n\
         [simulate.arm_e]\nlambda_ae = 0.004\nlambda_ce = 0.0\n\
         [simulate.arm_c]\nlambda_ae = 0.002\nlambda_ce = 0.0\n",
    );
    let out = savvy(&["analyze", "--manifest", data.join("manifest.csv").to_str().unwrap(), "-B", "30", "-o", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let nonparametric = ["incidence_proportion", "one_minus_km", "aalen_johansen", "aalen_johansen_death_only"];

    let est = read_csv(&tmp.path().join("out/all_ce/estimates.csv"));
    let mut groups: BTreeMap<(String, String, String), Vec<(String, f64)>> = BTreeMap::new();
    for r in &est {
        groups
            .entry((r["trial_id"].clone(), r["quantile"].clone(), r["arm"].clone()))
            .or_default()
            .push((r["estimator"].clone(), r["value"].parse().unwrap()));
    }
    for (key, vals) in &groups {
        let get = |n: &str| vals.iter().find(|(e, _)| e == n).unwrap().1;
        let ip = get("incidence_proportion");
        for n in nonparametric {
            assert!((get(n) - ip).abs() < 1e-12, "{key:?} {n}");
        }
        // the rate transforms coincide with each other but not with the proportion
        assert!((get("id_transform_ignore_ce") - get("id_transform_account_ce")).abs() < 1e-12);
    }

    let ratios = read_csv(&tmp.path().join("out/all_ce/ratios_prob_q100.csv"));
    assert!(!ratios.is_empty());
    for r in ratios.iter().filter(|r| nonparametric.contains(&r["candidate"].as_str())) {
        assert!(r["log_ratio"].parse::<f64>().unwrap().abs() < 1e-12, "{r:?}");
    }

    let cross = read_csv(&tmp.path().join("out/all_ce/crosstab_prob_q100.csv"));
    for r in cross.iter().filter(|r| nonparametric.contains(&r["candidate"].as_str())) {
        for (col, v) in r.iter().filter(|(c, _)| *c != "candidate" && *c != "candidate_category") {
            if *col != r["candidate_category"] {
                assert_eq!(v, "0", "{r:?}");
            }
        }
    }
}

#[test]
fn meta_on_analyze_output_matches_report() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), GRID_SIM);
    let manifest = data.join("manifest.csv");
    let m = manifest.to_str().unwrap();
    assert_eq!(code(&savvy(&["analyze", "--manifest", m, "-B", "40", "-o", "an"], tmp.path())), 0);
    assert_eq!(code(&savvy(&["meta", "an", "-o", "me"], tmp.path())), 0);
    assert_eq!(code(&savvy(&["report", "--manifest", m, "-B", "40", "-o", "rep"], tmp.path())), 0);
    for f in ["meta_average.csv", "meta_regression.csv"] {
        let a = fs::read_to_string(tmp.path().join("me").join(f)).unwrap();
        let b = fs::read_to_string(tmp.path().join("rep").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
        assert!(a.lines().count() > 1);
    }
}

#[test]
fn flags_override_config_and_manifest_records_them() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), GRID_SIM);
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!("[run]\nmanifest = {:?}\nreplicates = 25\nseed = 5\nquantiles = [1.0, 0.6]\n", data.join("manifest.csv")),
    );
    let c = cfg.to_str().unwrap();
    let out =
        savvy(&["analyze", "--config", c, "--seed", "77", "--quantiles", "0.9", "-o", "out", "--format", "json"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    assert!(text.contains("77"), "{text}");
    assert!(tmp.path().join("out/all_ce/ratios_prob_q90.csv").exists());
    assert!(!tmp.path().join("out/all_ce/ratios_prob_q60.csv").exists());
    // the output directory is not part of the manifest
    assert!(!text.contains(tmp.path().join("out").to_str().unwrap()));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let data = simulate(tmp.path(), GRID_SIM);
    let m = data.join("manifest.csv");
    for out in ["a", "b"] {
        assert_eq!(code(&savvy(&["report", "--manifest", m.to_str().unwrap(), "-B", "30", "-o", out], tmp.path())), 0);
    }
    let list = |d: &str| {
        let mut v: Vec<_> =
            walk(&tmp.path().join(d)).into_iter().map(|p| p.strip_prefix(tmp.path().join(d)).unwrap().to_path_buf()).collect();
        v.sort();
        v
    };
    let files = list("a");
    assert_eq!(files, list("b"));
    for f in files {
        assert_eq!(
            fs::read(tmp.path().join("a").join(&f)).unwrap(),
            fs::read(tmp.path().join("b").join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
