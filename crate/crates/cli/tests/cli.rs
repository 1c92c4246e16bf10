use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn seqmon(dir: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_seqmon"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEQMON_CRITVAL_CACHE")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

/// Deterministic training and monitoring files with one regressor; a shift of 3 after row 20.
fn write_data(dir: &Path) {
    let mut train = String::from("y,x\n");
    for t in 0..80 {
        let x = ((t * 37 % 17) as f64 - 8.0) / 4.0;
        let e = ((t * 53 % 29) as f64 - 14.0) / 10.0;
        train.push_str(&format!("{},{}\n", 1.0 + 0.5 * x + e, x));
    }
    let mut mon = String::from("y,x\n");
    for t in 0..80 {
        let x = ((t * 41 % 13) as f64 - 6.0) / 3.0;
        let e = ((t * 59 % 31) as f64 - 15.0) / 10.0;
        let shift = if t >= 20 { 3.0 } else { 0.0 };
        mon.push_str(&format!("{},{}\n", 1.0 + 0.5 * x + e + shift, x));
    }
    std::fs::write(dir.join("train.csv"), train).unwrap();
    std::fs::write(dir.join("mon.csv"), mon).unwrap();
}

#[test]
fn fit_intercept_only_example() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("two.csv"), "y\n3\n5\n").unwrap();
    let o = seqmon(dir.path(), &["fit", "two.csv"], None);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["beta_hat"], serde_json::json!([4]));
    assert_eq!(v["m"], 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    assert_eq!(
        code(&seqmon(
            dir.path(),
            &["fit", "train.csv", "-o", "model.json"],
            None
        )),
        0
    );

    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "mon.csv",
            "--eta",
            "0.5",
        ],
        None,
    );
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("1/2"));

    assert_eq!(
        code(&seqmon(dir.path(), &["simulate", "missing.json"], None)),
        2
    );
    assert_eq!(
        code(&seqmon(
            dir.path(),
            &["monitor", "--model", "nope.json", "--eta", "0.2"],
            None
        )),
        2
    );
    let o = seqmon(
        dir.path(),
        &["monitor", "--model", "model.json", "mon.csv"],
        None,
    );
    assert_eq!(code(&o), 2);
    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "mon.csv",
            "--eta",
            "0.7",
            "--trim",
            "weird",
        ],
        None,
    );
    assert_eq!(code(&o), 2);
    assert_eq!(code(&seqmon(dir.path(), &["critval"], None)), 2);
}

#[test]
fn forced_zero_critical_value_rejects_at_first_live_step() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    seqmon(dir.path(), &["fit", "train.csv", "-o", "model.json"], None);
    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "mon.csv",
            "--eta",
            "0.75",
            "--trim",
            "fixed_4",
            "--critical-value",
            "0",
        ],
        None,
    );
    assert_eq!(code(&o), 3);
    let out = text(&o.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(*lines.last().unwrap(), "tau=4");
    let ev: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    assert_eq!(ev["decision"], "reject");
    let warm: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(warm["statistic"], -1);
}

#[test]
fn stdin_and_file_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    seqmon(dir.path(), &["fit", "train.csv", "-o", "model.json"], None);
    let args = [
        "monitor",
        "--model",
        "model.json",
        "--eta",
        "0.25",
        "--critical-value",
        "1.5",
        "--horizon",
        "80",
    ];
    let from_file = seqmon(dir.path(), &[&args[..], &["mon.csv"]].concat(), None);
    let data = std::fs::read_to_string(dir.path().join("mon.csv")).unwrap();
    let from_stdin = seqmon(dir.path(), &args, Some(&data));
    assert_eq!(from_file.stdout, from_stdin.stdout);
    assert_eq!(code(&from_file), 3);
}

#[test]
fn events_file_and_horizon_termination() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    seqmon(dir.path(), &["fit", "train.csv", "-o", "model.json"], None);
    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "mon.csv",
            "--eta",
            "0.25",
            "--critical-value",
            "inf",
            "--horizon",
            "30",
            "--events-out",
            "ev.ndjson",
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    assert_eq!(text(&o.stdout), "tau=30\n");
    let events = std::fs::read_to_string(dir.path().join("ev.ndjson")).unwrap();
    assert_eq!(events.lines().count(), 30);
    assert!(events.lines().last().unwrap().contains("\"terminate\""));
}

#[test]
fn data_and_numeric_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    seqmon(dir.path(), &["fit", "train.csv", "-o", "model.json"], None);
    std::fs::write(dir.path().join("bad.csv"), "y,x\n1,oops\n").unwrap();
    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "bad.csv",
            "--eta",
            "0.2",
            "--critical-value",
            "2",
        ],
        None,
    );
    assert_eq!(code(&o), 4);
    std::fs::write(dir.path().join("wide.csv"), "y,x,z\n1,2,3\n").unwrap();
    let o = seqmon(
        dir.path(),
        &[
            "monitor",
            "--model",
            "model.json",
            "wide.csv",
            "--eta",
            "0.2",
            "--critical-value",
            "2",
        ],
        None,
    );
    assert_eq!(code(&o), 4);

    std::fs::write(
        dir.path().join("flat.csv"),
        "y,x\n2,1\n4,2\n6,3\n8,4\n10,5\n",
    )
    .unwrap();
    assert_eq!(code(&seqmon(dir.path(), &["fit", "flat.csv"], None)), 5);
    std::fs::write(
        dir.path().join("collinear.csv"),
        "y,x,z\n1,1,2\n2,2,4\n4,3,6\n3,4,8\n5,5,10\n",
    )
    .unwrap();
    assert_eq!(
        code(&seqmon(dir.path(), &["fit", "collinear.csv"], None)),
        5
    );
}

#[test]
fn critval_commands_fill_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--steps", "1000", "--reps", "2000"];
    let o = seqmon(
        dir.path(),
        &[&["critval", "--eta", "0.85"][..], &small].concat(),
        None,
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["alpha"], 0.05);
    assert_eq!(v["seed"], 0);
    let c = v["critical_value"].as_f64().unwrap();
    assert!(c > 1.5 && c < 3.5);
    assert!(dir.path().join("critval-cache.json").is_file());

    let o = seqmon(
        dir.path(),
        &[&["critval", "--eta", "0.15"][..], &small].concat(),
        None,
    );
    let w: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(w["critical_value"], v["critical_value"]);

    let o = seqmon(
        dir.path(),
        &[&["veto-critval", "--etas", "0.2,0.85"][..], &small].concat(),
        None,
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["c_alpha"].as_f64().unwrap() >= 1.0);
    let cache = std::fs::read_to_string(dir.path().join("critval-cache.json")).unwrap();
    let table: serde_json::Value = serde_json::from_str(&cache).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 3);
}

#[test]
fn simulate_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{"kind":"size","dgp":{"m":100,"horizon":100,"d":2,"rho":0.5,"phi":0.5,"theta":0.5,
            "sigma_beta":0.5,"seed":0},"monitors":[{"eta":0.51},{"eta":0.75}],
            "trims":["log_log","log"],"replications":30,"seed":2,
            "critval":{"n_steps":1000,"n_reps":2000,"seed":4}}"#,
    )
    .unwrap();
    let o = seqmon(
        dir.path(),
        &["simulate", "exp.json", "--out-dir", "out"],
        None,
    );
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let size = std::fs::read_to_string(dir.path().join("out/size.csv")).unwrap();
    assert_eq!(size.lines().next().unwrap(), "monitor,lnln_m/100,ln_m/100");
    assert_eq!(size.lines().count(), 3);
    let display = std::fs::read_to_string(dir.path().join("out/size_display.csv")).unwrap();
    assert!(display
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .all(|v| v.len() == 5));
    assert!(dir.path().join("out/manifest.json").is_file());
}
