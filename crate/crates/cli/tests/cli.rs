use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_spec(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("small.toml");
    fs::write(&spec, "n_samples = 3000\n").unwrap();
    spec
}

fn gen(dir: &Path, out: &Path, seed: &str) {
    let spec = small_spec(dir);
    let o = trace(&["gen", "--spec", p(&spec), "--out", p(out), "--seed", seed]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_spec_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = trace(&["gen", "--spec", p(&dir.path().join("nope.toml")), "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
    assert_eq!(code(&trace(&["frobnicate"])), 2);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(dir.path(), &a, "7");
    gen(dir.path(), &b, "7");
    for f in ["log.csv", "truth.csv", "run.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    gen(dir.path(), &c, "8");
    assert_ne!(fs::read(a.join("log.csv")).unwrap(), fs::read(c.join("log.csv")).unwrap());
}

#[test]
fn pretrain_stream_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(dir.path(), &data, "3");
    let cfg = data.join("run.toml");

    let o = trace(&["pretrain", "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bundle = data.join("bundle");
    for f in ["manifest.toml", "static.ckpt", "likelihood.ckpt", "completer.ckpt", "window_weights.txt"] {
        assert!(bundle.join(f).exists(), "{f}");
    }

    // same seed, same checkpoints
    let again = dir.path().join("again");
    assert_eq!(code(&trace(&["pretrain", "--config", p(&cfg), "--out", p(&again)])), 0);
    for f in ["static.ckpt", "likelihood.ckpt", "completer.ckpt", "window_weights.txt"] {
        assert_eq!(fs::read(bundle.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let no_retro = dir.path().join("no_retro");
    assert_eq!(
        code(&trace(&["pretrain", "--config", p(&cfg), "--no-retro", "--out", p(&no_retro)])),
        0
    );
    assert!(!no_retro.join("completer.ckpt").exists());
    // the full model needs a completer
    let o = trace(&["stream", "--config", p(&cfg), "--bundle", p(&no_retro)]);
    assert_eq!(code(&o), 2);

    let out = dir.path().join("out");
    for b in ["trace", "vanilla"] {
        let o = trace(&["stream", "--config", p(&cfg), "--backbone", b, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = trace(&["stream", "--config", p(&cfg), "--ablate", "no_gate,no_traj", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(out.join("trace-no_traj+no_gate.report.csv").exists());
    let intervals = fs::read_to_string(out.join("trace.intervals.csv")).unwrap();
    assert!(intervals.starts_with("interval_start,n,n_pos,auc,nll,pr_auc,ece\n"));

    let t = out.join("trace.report.csv");
    let v = out.join("vanilla.report.csv");
    let table = dir.path().join("tables/cmp");
    let o = trace(&["report", p(&t), p(&v), "--out", p(&table)]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(table.with_extension("csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,auc,nll,pr_auc,ece");
    assert!(lines[1].starts_with("trace,") && lines[2].starts_with("vanilla,"));
    assert_eq!(lines.len(), 3);
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        fs::read_to_string(table.with_extension("txt")).unwrap()
    );

    let one = trace(&["report", p(&t)]);
    assert_eq!(code(&one), 0);
    assert_eq!(String::from_utf8_lossy(&one.stdout).lines().count(), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "# format=trace-report/1\n# method=x\nstart,auc\n").unwrap();
    assert_eq!(code(&trace(&["report", p(&t), p(&bad)])), 2);

    // identical inputs give identical reports
    let out2 = dir.path().join("out2");
    assert_eq!(code(&trace(&["stream", "--config", p(&cfg), "--out", p(&out2)])), 0);
    assert_eq!(fs::read(&t).unwrap(), fs::read(out2.join("trace.report.csv")).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen(dir.path(), &data, "1");
    let cfg = data.join("run.toml");

    let o = trace(&["stream", "--config", p(&cfg), "--ablate", "no_everything"]);
    assert_eq!(code(&o), 2);
    let o = trace(&["stream", "--config", p(&cfg), "--backbone", "bogus"]);
    assert_eq!(code(&o), 2);
    // trace without a pretrained bundle
    let o = trace(&["stream", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bundle"));

    let text = fs::read_to_string(&cfg).unwrap();
    let bad = data.join("bad.toml");
    fs::write(&bad, text.replace("lambda = 0.1", "lambda = -1.0")).unwrap();
    assert_eq!(code(&trace(&["pretrain", "--config", p(&bad)])), 2);
    assert_eq!(code(&trace(&["pretrain", "--config", p(&data.join("missing.toml"))])), 2);

    // a missing log is a runtime failure
    fs::remove_file(data.join("log.csv")).unwrap();
    assert_eq!(code(&trace(&["pretrain", "--config", p(&cfg)])), 1);
}
