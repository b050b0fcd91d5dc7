use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TWO_EV: &str = "evcs-v1\npower constant 1\nEV1 0 2 0.75 1\nEV2 0 2 1.25 1\n";

fn evcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcs"))
        .args(args)
        .output()
        .expect("spawn evcs")
}

fn evcs_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcs"))
        .args(args)
        .env(key, value)
        .output()
        .expect("spawn evcs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a CSV report as header-keyed maps.
fn rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            header
                .iter()
                .map(String::from)
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn small_corpus(dir: &Path) -> PathBuf {
    let spec = write(
        dir,
        "small.toml",
        r#"count = 12
seed = 4
evs_per_instance = [3, 6]
rate_cap = [1.0, 3.0]
arrival_window = 24
sojourn = { min = 1.0, mean = 8.0, max = 30.0 }
laxity = { min = 0.01, mean = 2.0, max = 20.0 }
"#,
    );
    let out = dir.join("corpus");
    let o = evcs(&["gen", s(&spec), s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn run_on_two_ev_instance_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "two.evcs", TWO_EV);
    let sched = dir.path().join("sched.csv");
    let o = evcs(&["run", s(&f), "--alg", "sllf", "--schedule", s(&sched)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["feasible"], "true");
    assert_eq!(r[0]["algorithm"], "sllf");
    let sched = rows(&std::fs::read_to_string(sched).unwrap());
    let rate = |id: &str, t: &str| -> f64 {
        sched
            .iter()
            .find(|x| x["session"] == id && x["slot"] == t)
            .unwrap()["rate"]
            .parse()
            .unwrap()
    };
    assert!((rate("EV1", "0") - 0.25).abs() < 1e-8);
    assert!((rate("EV2", "0") - 0.75).abs() < 1e-8);
    assert!((rate("EV1", "1") - 0.5).abs() < 1e-8);
}

#[test]
fn run_on_offline_infeasible_instance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "tight.evcs",
        &TWO_EV.replace("constant 1", "constant 0.5"),
    );
    let o = evcs(&["run", s(&f), "--alg", "sllf"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(rows(&stdout(&o))[0]["feasible"], "false");
}

#[test]
fn unknown_algorithm_is_a_usage_error_listing_names() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "two.evcs", TWO_EV);
    let o = evcs(&["run", s(&f), "--alg", "fifo"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["sllf", "llf", "edf", "es", "rep", "olp"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn parse_errors_exit_two_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "cut.evcs",
        "evcs-v1\npower constant 1\nEV1 0 2\n",
    );
    let o = evcs(&["check", s(&f)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cut.evcs:3:"), "{}", stderr(&o));
    let g = write(dir.path(), "v9.evcs", "evcs-v9\npower constant 1\n");
    assert_eq!(evcs(&["check", s(&g)]).status.code(), Some(2));
    assert_eq!(evcs(&["sweep"]).status.code(), Some(2));
}

#[test]
fn check_reports_validity_feasibility_and_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "two.evcs", TWO_EV);
    let o = evcs(&["check", s(&f)]);
    assert!(o.status.success());
    let r = &rows(&stdout(&o))[0];
    assert_eq!(r["valid"], "true");
    assert_eq!(r["offline_feasible"], "true");
    let p: f64 = r["min_power_capacity"].parse().unwrap();
    assert!((p - 1.0).abs() < 1e-5);

    let bad = write(
        dir.path(),
        "bad.evcs",
        "evcs-v1\npower constant 1\nEV1 3 2 1 1\n",
    );
    let o = evcs(&["check", s(&bad)]);
    assert!(o.status.success());
    let r = &rows(&stdout(&o))[0];
    assert_eq!(r["valid"], "false");
    assert!(r["violations"].contains("empty sojourn"));
    assert_eq!(r["offline_feasible"], "");
}

#[test]
fn generation_is_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_corpus(dir.path());
    let spec = dir.path().join("small.toml");
    let b = dir.path().join("again");
    let c = dir.path().join("other");
    assert!(evcs(&["gen", s(&spec), s(&b)]).status.success());
    assert!(evcs(&["gen", s(&spec), s(&c), "--seed", "99"])
        .status
        .success());
    let file = |d: &Path| std::fs::read(d.join("inst-0003.evcs")).unwrap();
    assert_eq!(file(&a), file(&b));
    assert_ne!(file(&a), file(&c));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let args = [
        "sweep",
        s(&corpus),
        "--bin-by",
        "sojourn-ratio",
        "--bins",
        "3",
    ];
    let first = evcs(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, evcs(&args).stdout);
    assert_eq!(first.stdout, evcs_env(&args, "EVCS_THREADS", "1").stdout);
    assert_eq!(
        evcs_env(&args, "EVCS_THREADS", "zero").status.code(),
        Some(2)
    );
}

#[test]
fn json_carries_the_csv_values() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let csv_out = stdout(&evcs(&["sweep", s(&corpus), "--per-instance"]));
    let json_out = stdout(&evcs(&["sweep", s(&corpus), "--per-instance", "--json"]));
    let doc: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    assert_eq!(doc["schema"], "evcs-report-v1");
    assert_eq!(doc["command"], "sweep");
    let records = doc["records"].as_array().unwrap();
    let table = rows(&csv_out);
    assert_eq!(records.len(), table.len());
    assert_eq!(table.len(), 12 * 6);
    for (j, c) in records.iter().zip(&table) {
        for (key, text) in c {
            let v = &j[key];
            match v {
                serde_json::Value::String(x) => assert_eq!(x, text),
                serde_json::Value::Bool(b) => assert_eq!(b.to_string(), *text),
                serde_json::Value::Number(n) => {
                    assert_eq!(n.as_f64().unwrap(), text.parse::<f64>().unwrap(), "{key}")
                }
                other => panic!("unexpected {key}: {other}"),
            }
        }
    }
}

#[test]
fn sweep_rows_are_canonically_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = evcs(&[
        "sweep",
        s(&corpus),
        "--algs",
        "olp,sllf,sllf",
        "--per-instance",
    ]);
    let r = rows(&stdout(&o));
    let keys: Vec<(String, String)> = r
        .iter()
        .map(|x| (x["path"].clone(), x["algorithm"].clone()))
        .collect();
    assert_eq!(keys.len(), 24);
    assert_eq!(keys[0].1, "sllf");
    assert_eq!(keys[1].1, "olp");
    assert!(keys.windows(2).all(|w| w[0].0 <= w[1].0));

    let binned = rows(&stdout(&evcs(&[
        "sweep",
        s(&corpus),
        "--algs",
        "sllf",
        "--bin-by",
        "norm-laxity",
        "--bins",
        "2",
    ])));
    assert_eq!(binned[0]["group"], "all");
    let in_bins: usize = binned[1..]
        .iter()
        .map(|x| x["instances"].parse::<usize>().unwrap())
        .sum();
    assert_eq!(in_bins, 12);
}

#[test]
fn empty_corpus_reports_full_success() {
    let dir = tempfile::tempdir().unwrap();
    let o = evcs(&["sweep", s(dir.path()), "--algs", "sllf"]);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o))[0]["success_rate"], "1.0");
}

#[test]
fn augment_ranks_sllf_no_worse_than_llf_on_the_shipped_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mtv");
    let o = evcs(&["gen", s(&shipped("google_mtv.toml")), s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = evcs(&["augment", s(&out), "--algs", "sllf,llf", "--mode", "power"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let eps = |alg: &str| -> f64 {
        r.iter().find(|x| x["algorithm"] == alg).unwrap()["eps"]
            .parse()
            .unwrap()
    };
    assert!(
        eps("sllf") <= eps("llf"),
        "sllf {} llf {}",
        eps("sllf"),
        eps("llf")
    );
    assert!(r.iter().all(|x| x["feasible_at_eps"] == "true"));
}

#[test]
fn augment_reports_bounds_on_the_separated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sep");
    assert!(evcs(&["gen", s(&shipped("separated.toml")), s(&out)])
        .status
        .success());
    let o = evcs(&["augment", s(&out), "--algs", "sllf", "--mode", "power-rate"]);
    let r = &rows(&stdout(&o))[0];
    let eps: f64 = r["eps"].parse().unwrap();
    let b1: f64 = r["theorem1_bound"].parse().unwrap();
    let b2: f64 = r["theorem2_bound"].parse().unwrap();
    assert!(eps <= b1 && eps <= b2);
    assert_eq!(r["mode"], "power-rate");
}
