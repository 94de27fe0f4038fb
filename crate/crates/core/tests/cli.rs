use std::path::Path;
use std::process::{Command, Output};

use dualsep::io;

fn dualsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualsep"))
        .args(args)
        .output()
        .expect("run dualsep")
}

fn ok(args: &[&str]) -> String {
    let out = dualsep(args);
    assert!(
        out.status.success(),
        "dualsep {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_separate_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    std::fs::write(
        &cfg,
        "grid_size = 16\nepochs = 3\nbatch_size = 64\nkernel_width = 16\nkernel_layers = 2\nbkgd_width = 16\nfit_epochs = 5\nfit_width = 16\n",
    )
    .unwrap();
    let (bundle, model, sep, met) = (d.join("bundle"), d.join("model"), d.join("sep"), d.join("metrics"));

    ok(&["synth", "--config", s(&cfg), "--out", s(&bundle)]);
    assert!(bundle.join("observed.grd").exists());

    let est = ok(&["estimate-lambda", "--config", s(&cfg), "--data", s(&bundle)]);
    assert!(est.contains("lambda = ") && est.contains("denominator = "));

    let out = ok(&["train", "--config", s(&cfg), "--data", s(&bundle), "--r", "1", "--auto-lambda", "--out", s(&model)]);
    assert!(out.contains("trained r = 1"));
    let trace = std::fs::read_to_string(model.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert_eq!(trace.lines().next(), Some("epoch,loss"));

    let out = ok(&["separate", "--model", s(&model.join("model.dsck")), "--out", s(&sep)]);
    let residual: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("decomposition_residual = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-9);
    let observed = io::read_grid(bundle.join("observed.grd")).unwrap();
    let total = io::read_grid(sep.join("total.grd")).unwrap();
    assert!(total.same_shape(&observed));

    let out = ok(&["metrics", "--data", s(&bundle), "--separation", s(&sep), "--out", s(&met)]);
    assert!(out.contains("rmse = ") && out.contains("msle_sig = "));
    let t1 = std::fs::read_to_string(met.join("synthetic.csv")).unwrap();
    assert!(t1.starts_with("r,lambda,rmse,msle_sig,mae_bkg,psnr,ssim,mae\n1,"));
    let t2 = std::fs::read_to_string(met.join("fit.csv")).unwrap();
    assert!(t2.starts_with("r,lambda,rmse,psnr,ssim,re,chi2,chi2_pval\n1,"));

    let report = ok(&[
        "report-compression",
        "--raw",
        s(&bundle.join("observed.grd")),
        "--model",
        s(&model.join("model.dsck")),
    ]);
    let model_len = std::fs::metadata(model.join("model.dsck")).unwrap().len();
    assert!(report.contains(&format!("total_model_bytes = {model_len}")));
}

#[test]
fn diagnose_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", s(&d.join("b")), "--grid-size", "12"]);
    let out = d.join("diag");
    ok(&[
        "diagnose",
        "--grid",
        s(&d.join("b/observed.grd")),
        "--reference",
        s(&d.join("b/background.grd")),
        "--bins",
        "8",
        "--out",
        s(&out),
    ]);
    for f in [
        "projection_0.csv",
        "projection_45.csv",
        "fourier_slice.csv",
        "diagonal.csv",
        "heatmap.pgm",
        "heatmap_scale.csv",
        "histogram.csv",
        "scatter.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let p0 = std::fs::read_to_string(out.join("projection_0.csv")).unwrap();
    assert_eq!(p0.lines().count(), 13);
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    let total: u64 = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 144);
    assert!(std::fs::read(out.join("heatmap.pgm")).unwrap().starts_with(b"P5\n12 12\n255\n"));
}

#[test]
fn sweep_rows_sorted_by_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("sweep.toml");
    std::fs::write(
        &cfg,
        "grid_size = 12\nepochs = 2\nbatch_size = 48\nkernel_width = 8\nkernel_layers = 1\nbkgd_width = 8\nsweep_r = [1, 2]\nsweep_lambda = [0.001, 0.1]\n",
    )
    .unwrap();
    ok(&["synth", "--config", s(&cfg), "--out", s(&d.join("b"))]);
    let out = ok(&["sweep", "--config", s(&cfg), "--data", s(&d.join("b")), "--out", s(&d.join("sweep.csv"))]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "r,lambda,rmse,msle_sig,mae_bkg,psnr,ssim,mae");
    assert_eq!(rows.len(), 5);
    let rmse: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(rmse.windows(2).all(|w| w[0] <= w[1]), "{rmse:?}");
    assert_eq!(std::fs::read_to_string(d.join("sweep.csv")).unwrap(), out);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_eq!(dualsep(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(dualsep(&["train", "--lambda", "0.1", "--auto-lambda"]).status.code(), Some(1));
    assert_eq!(dualsep(&["--help"]).status.code(), Some(0));

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(dualsep(&["synth", "--config", s(&bad), "--out", s(&d.join("x"))]).status.code(), Some(1));

    let junk = d.join("junk.dsck");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let out = dualsep(&["separate", "--model", s(&junk), "--out", s(&d.join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    ok(&["synth", "--out", s(&d.join("b")), "--grid-size", "16"]);
    let budget = d.join("budget.toml");
    std::fs::write(&budget, "compute_budget = 10\n").unwrap();
    let out = dualsep(&["train", "--config", s(&budget), "--data", s(&d.join("b")), "--out", s(&d.join("m"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));

    let diverge = d.join("diverge.toml");
    std::fs::write(&diverge, "epochs = 3\nlr = 1e300\nkernel_width = 8\nbkgd_width = 8\nkernel_layers = 1\n").unwrap();
    let out = dualsep(&["train", "--config", s(&diverge), "--data", s(&d.join("b")), "--out", s(&d.join("m2"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
