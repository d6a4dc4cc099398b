use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use carbonet_cli::{main_with, EXIT_INPUT, EXIT_OK};
use carbonet_core::discretize::tertile_states;
use carbonet_core::graph::Dag;
use carbonet_core::network::{BayesianNetwork, Cpt, Metadata};
use carbonet_core::synthetic::{simulate_prices, TernaryNetBuilder};

fn carbonet(args: &[&str]) -> i32 {
    let mut all = vec!["carbonet"];
    all.extend_from_slice(args);
    main_with(all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_prices(path: &Path, tickers: usize, days: usize, seed: u64) {
    let names: Vec<String> = (0..tickers).map(|i| format!("T{i}")).collect();
    let panel = simulate_prices(&names, days, seed);
    let mut out = String::from("date");
    for n in &panel.names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (i, d) in panel.dates.iter().enumerate() {
        let _ = write!(out, "{d}");
        for col in &panel.series {
            let _ = write!(out, ",{:.6}", col[i]);
        }
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn pipeline(prices: &Path, out: &Path) {
    let small = ["--max-lag", "2", "--p-max", "2", "--q-max", "2", "--seed", "11"];
    let mut prep = vec!["prep", "--input", s(prices), "--out", s(out)];
    prep.extend_from_slice(&small);
    assert_eq!(carbonet(&prep), EXIT_OK);
    assert_eq!(carbonet(&["learn", "--out", s(out), "--resamples", "20", "--seed", "11"]), EXIT_OK);
    assert_eq!(carbonet(&["analyze", "--out", s(out), "--target", "T0", "--top-k", "5"]), EXIT_OK);
    assert_eq!(
        carbonet(&["dbn", "--out", s(out), "--target", "T1", "--resamples", "20", "--seed", "11"]),
        EXIT_OK
    );
}

#[test]
fn pipeline_is_deterministic_and_composable() {
    let tmp = tempfile::tempdir().unwrap();
    let prices = tmp.path().join("prices.csv");
    write_prices(&prices, 3, 700, 3);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pipeline(&prices, &a);
    pipeline(&prices, &b);
    let fa = read_dir_bytes(&a);
    assert_eq!(fa, read_dir_bytes(&b));

    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expect in [
        "panel_ar_garch.csv",
        "panel_garch.csv",
        "filters.csv",
        "thresholds.json",
        "model.json",
        "edge_frequencies.csv",
        "model.dot",
        "cpdag.json",
        "mpe.csv",
        "evidence_sweep.csv",
        "sensitivity.json",
        "tornado_High.csv",
        "two_slice.json",
        "temporal_report.csv",
        "manifest_prep.json",
        "manifest_learn.json",
        "manifest_analyze.json",
        "manifest_dbn.json",
    ] {
        assert!(names.contains(&expect), "missing {expect}");
    }

    let filters = fs::read_to_string(a.join("filters.csv")).unwrap();
    assert_eq!(filters.lines().count(), 4);
    assert!(filters.starts_with("instrument,ar_garch_lag,ar_garch_p,ar_garch_q,ar_garch_bic,garch_p,garch_q,garch_bic"));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest_prep.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"][0]["file"], "prices.csv");
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(!String::from_utf8(fs::read(a.join("manifest_prep.json")).unwrap()).unwrap().contains(s(tmp.path())));

    // the generator makes T1 follow T0's previous return
    let tf = fs::read_to_string(a.join("transition_frequencies.csv")).unwrap();
    assert!(tf.lines().any(|l| l.ends_with(",T0->T1@T+1")), "{tf}");
}

#[test]
fn tornado_rows_sorted_and_dot_widths() {
    let tmp = tempfile::tempdir().unwrap();
    let net = TernaryNetBuilder::new(4).edge(0, 1, 0.8).edge(1, 2, 0.6).edge(0, 3, 0.4).build(9);
    let model = tmp.path().join("m.json");
    fs::write(&model, net.to_json_string().unwrap()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        carbonet(&["analyze", "--model", s(&model), "--out", s(&out), "--target", "X2", "--top-k", "8"]),
        EXIT_OK
    );
    for st in ["Low", "Neutral", "High"] {
        let text = fs::read_to_string(out.join(format!("tornado_{st}.csv"))).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mags: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[6].parse::<f64>().unwrap().abs())
            .collect();
        assert_eq!(mags.len(), 8);
        assert!(mags.windows(2).all(|w| w[0] >= w[1]));
    }
    let mpe = fs::read_to_string(out.join("mpe.csv")).unwrap();
    assert!(mpe.starts_with("node,X2=Low,X2=Neutral,X2=High\n"));

    let cfg = carbonet_cli::PipelineConfig {
        model: Some(model.clone()),
        ..Default::default()
    };
    let dot = carbonet_cli::commands::export_dot(&cfg).unwrap();
    assert_eq!(dot.matches("penwidth=").count(), 3);
}

#[test]
fn disconnected_model_sweep_is_all_baseline() {
    let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let cpts = (0..3)
        .map(|v| Cpt {
            node: v,
            parents: vec![],
            parent_cards: vec![],
            card: 3,
            values: vec![0.2, 0.3, 0.5],
        })
        .collect();
    let net = BayesianNetwork::new(Dag::empty(names), vec![tertile_states(); 3], cpts, Metadata::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");
    fs::write(&model, net.to_json_string().unwrap()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(carbonet(&["analyze", "--model", s(&model), "--out", s(&out), "--target", "A"]), EXIT_OK);
    let sweep: serde_json::Value = serde_json::from_slice(&fs::read(out.join("evidence_sweep.json")).unwrap()).unwrap();
    let base = sweep["baseline"].clone();
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        for (x, y) in r["distribution"].as_array().unwrap().iter().zip(base.as_array().unwrap()) {
            assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-12);
        }
        assert!(r["tvd"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.csv");
    assert_eq!(carbonet(&["prep", "--input", s(&missing), "--out", s(&out)]), EXIT_INPUT);
    assert_eq!(carbonet(&["prep", "--out", s(&out)]), EXIT_INPUT);
    assert_eq!(carbonet(&["learn", "--out", s(&out), "--threshold", "1.5"]), EXIT_INPUT);
    assert_eq!(carbonet(&["learn", "--bogus"]), EXIT_INPUT);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "date,A\n2020-01-01,1\n2020-01-02,-3\n").unwrap();
    assert_eq!(carbonet(&["prep", "--input", s(&bad), "--out", s(&out)]), EXIT_INPUT);

    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "resamples = lots\n").unwrap();
    assert_eq!(carbonet(&["learn", "--config", s(&cfg), "--out", s(&out)]), EXIT_INPUT);
}

#[test]
fn dbn_unknown_shock_node_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let net = TernaryNetBuilder::new(3).edge(0, 1, 0.8).build(2);
    let model = tmp.path().join("m.json");
    fs::write(&model, net.to_json_string().unwrap()).unwrap();
    let panel = tmp.path().join("panel.csv");
    let data = carbonet_core::synthetic::sample_dataset(&net, 300, 4);
    let dates = carbonet_core::synthetic::business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 300);
    let dp = carbonet_core::discretize::DiscretePanel {
        dates,
        data,
        thresholds: Default::default(),
    };
    let mut buf = Vec::new();
    dp.write_csv(&mut buf).unwrap();
    fs::write(&panel, buf).unwrap();
    let out = tmp.path().join("out");
    let base = ["dbn", "--model", s(&model), "--input", s(&panel), "--out", s(&out), "--target", "X1", "--resamples", "5"];
    let mut bad = base.to_vec();
    bad.extend_from_slice(&["--shocks", "NOPE=High"]);
    assert_eq!(carbonet(&bad), EXIT_INPUT);
    let mut ok = base.to_vec();
    ok.extend_from_slice(&["--shocks", "X0=High,X0=Low&X2=High"]);
    assert_eq!(carbonet(&ok), EXIT_OK);
    let report = fs::read_to_string(out.join("temporal_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.contains("\nX0=Low;X2=High,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "seed = 5\nresamples = 30\ntarget = X0\n").unwrap();
    let flags = carbonet_cli::Flags {
        config: Some(cfg),
        seed: Some(8),
        ..Default::default()
    };
    let c = flags.resolve().unwrap();
    assert_eq!((c.seed, c.resamples, c.target.as_deref()), (8, 30, Some("X0")));
    assert_eq!(c.out, PathBuf::from("out"));
}
