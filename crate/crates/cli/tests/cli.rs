use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rdbounds::bounds::{linspace, sharp_bounds, CutoffPair, Direction};
use rdbounds::simulation::{generate_fuzzy, generate_sharp};
use rdbounds::{BandwidthPlan, KernelSpec, RdSample};

fn rdbounds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdbounds")).args(args).output().expect("binary runs")
}

fn write_data(path: &Path, data: &[RdSample]) {
    let mut s = String::from("y,x,c,d\n");
    for r in data {
        s.push_str(&format!("{},{},{},{}\n", r.y, r.x, r.c, u8::from(r.d)));
    }
    fs::write(path, s).unwrap();
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let i = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[i].parse().unwrap()).collect()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn sharp_outputs_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let data = generate_sharp(400, 11);
    write_data(&input, &data);
    let out = dir.path().join("out");
    let o = rdbounds(&[
        "bounds",
        "--input",
        input.to_str().unwrap(),
        "--cutoffs",
        "1,2.25",
        "--interval",
        "1.25,2",
        "--grid",
        "16",
        "--bw-mode",
        "manual",
        "--bw-1l",
        "0.5",
        "--bw-0h",
        "0.45",
        "--bw-0l",
        "0.3",
        "--bootstrap",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = BandwidthPlan::new(0.5, 0.45, 0.3).unwrap();
    let grid = linspace(1.25, 2.0, 16);
    let lib = sharp_bounds(
        &data,
        CutoffPair::new(1.0, 2.25).unwrap(),
        &grid,
        &plan,
        KernelSpec::TRIANGULAR,
        Direction::IncreasingDominant,
    )
    .unwrap();
    let f = out.join("bounds.csv");
    assert_eq!(column(&f, "lower"), lib.lower);
    assert_eq!(column(&f, "upper"), lib.upper);
    assert_eq!(column(&f, "x"), grid);
    for name in ["band.csv", "pointwise.csv", "plot.csv", "manifest.json", "config.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let plot = fs::read_to_string(out.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 5 * 16);
    assert!(plot.starts_with("series,x,value\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, &generate_sharp(300, 5));
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rdbounds(&[
            "bounds",
            "--input",
            input.to_str().unwrap(),
            "--cutoffs",
            "1,2.25",
            "--bootstrap",
            "150",
            "--seed",
            "9",
            "--grid",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for name in ["bounds.csv", "band.csv", "pointwise.csv", "plot.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn fuzzy_compliance_violation_names_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let mut data = generate_fuzzy(300, 2);
    let bad: Vec<usize> = (0..data.len()).filter(|&i| data[i].x < data[i].c).take(2).collect();
    for &i in &bad {
        data[i].d = true;
    }
    write_data(&input, &data);
    let out = dir.path().join("out");
    let o = rdbounds(&[
        "bounds",
        "--design",
        "fuzzy",
        "--input",
        input.to_str().unwrap(),
        "--cutoffs",
        "1,2.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "compliance_violation");
    let lines: Vec<usize> = bad.iter().map(|i| i + 2).collect();
    assert_eq!(e["lines"], serde_json::json!(lines));
    assert!(!out.join("bounds.csv").exists());
    assert!(!out.join("manifest.json").exists());
    assert!(out.join("config.txt").exists());
}

#[test]
fn fuzzy_run_adds_takeup_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, &generate_fuzzy(400, 4));
    let out = dir.path().join("out");
    let o = rdbounds(&[
        "bounds",
        "--design",
        "fuzzy",
        "--input",
        input.to_str().unwrap(),
        "--cutoffs",
        "1,2.25",
        "--grid",
        "10",
        "--bootstrap",
        "150",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = column(&out.join("bounds.csv"), "p_hat");
    assert_eq!(p.len(), 10);
    assert!(p.iter().all(|&v| (0.05..=1.0).contains(&v)));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let mut s = String::from("outcome,score,group\n");
    for r in generate_sharp(300, 8) {
        s.push_str(&format!("{},{},{}\n", r.y, r.x, r.c));
    }
    fs::write(&input, s).unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# analysis\ninput = {}\ny = outcome\nx = score\nc = group\nd = -\ncutoffs = 1, 2.25\ngrid = 30\nbootstrap = 120\nout = {}\n",
            input.display(),
            out.display()
        ),
    )
    .unwrap();
    let o = rdbounds(&["bounds", "--config", cfg.to_str().unwrap(), "--grid", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(column(&out.join("bounds.csv"), "x").len(), 7);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("grid = 7\n") && echo.contains("d = -\n"));
}

#[test]
fn input_errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    fs::write(&input, "y,x,c\n1,0.5,1\n2,NaN,1\n").unwrap();
    let out = dir.path().join("out");
    let o =
        rdbounds(&["bounds", "--input", input.to_str().unwrap(), "--cutoffs", "1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "input");
    assert_eq!(e["line"], 3);

    fs::write(&input, "y,x\n1,0.5\n").unwrap();
    let o =
        rdbounds(&["bounds", "--input", input.to_str().unwrap(), "--cutoffs", "1,2", "--out", out.to_str().unwrap()]);
    let e = stderr_json(&o);
    assert_eq!(e["error"], "missing_column");
    assert_eq!(e["column"], "c");

    let o = rdbounds(&["bounds", "--input", "x.csv", "--cutoffs", "2,1", "--out", out.to_str().unwrap()]);
    assert_eq!(stderr_json(&o)["error"], "invalid_config");
}

#[test]
fn simulate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = rdbounds(&[
        "simulate",
        "--n",
        "300",
        "--reps",
        "4",
        "--bootstrap",
        "100",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("sharp design, n = 300 per group"));
    assert_eq!(column(&out.join("report.csv"), "x"), vec![1.25, 1.5, 1.75, 2.0]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["completed"], 4);
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn decision_model_emits_curves() {
    let o = rdbounds(&["decision-model", "--example", "1", "--agents", "5000", "--grid", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,low,high,se_low,se_high,gap,gap_se"));
    assert_eq!(lines.count(), 5);

    let o = rdbounds(&[
        "decision-model",
        "--example",
        "custom",
        "--noise",
        "uniform:-4:4",
        "--cutoffs",
        "4,6",
        "--agents",
        "2000",
        "--grid",
        "3",
        "--periodicity",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = rdbounds(&["decision-model", "--example", "1", "--beta", "0.5"]);
    assert_eq!(stderr_json(&o)["error"], "invalid_config");
}
