use std::fs;
use std::process::{Command, Output};

use roughvol::functions::FunctionFamily;
use roughvol::harness::{strong_error_study, StrongStudyConfig};
use roughvol::estimators::QuadratureConfig;
use roughvol::kernel::RenormScheme;

fn roughvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughvol"))
        .args(args)
        .env_remove("ROUGHVOL_THREADS")
        .env_remove("ROUGHVOL_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data lines (provenance comments stripped).
fn data(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn selftest_passes() {
    let o = roughvol(&["selftest"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.contains("checks passed"));
}

#[test]
fn price_regression_fixture() {
    let o = roughvol(&[
        "price", "--H", "0.3", "--N", "8", "--M", "100000", "--f", "bergomi:sigma0=0.2,eta=2", "--rho", "-0.8",
        "--K", "1", "--S0", "1", "--seed", "42",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# roughvol "));
    assert!(text.contains("# seed = 42\n"));
    let rows = data(&text);
    assert_eq!(rows[0], "N,eps,price,stderr,ci_lo,ci_hi,M,seed,f,scheme");
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    let price: f64 = fields[2].parse().unwrap();
    // frozen from the first run of this configuration
    assert!((price - 0.105_363_482_140_744_55).abs() < 1e-12, "{price}");
    assert!(rows[1].ends_with(",100000,42,\"bergomi:sigma0=0.2,eta=2\",nonconstant"));
}

#[test]
fn strong_rate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strong.csv");
    let plots = dir.path().join("plots");
    let o = roughvol(&[
        "strong-rate", "--H", "0.3", "--N", "4..7", "--Nref", "9", "--M", "10000", "--seed", "7", "--out",
        out.to_str().unwrap(), "--emit-plot-data", plots.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lib = strong_error_study(&StrongStudyConfig {
        h_list: vec![0.3],
        n_list: vec![4, 5, 6, 7],
        n_ref: 9,
        f: FunctionFamily::Exp,
        scheme: RenormScheme::NonConstant,
        m_samples: 10_000,
        quad: QuadratureConfig::default(),
        seed: 7,
    })
    .unwrap();
    let rows_text = fs::read_to_string(&out).unwrap();
    let rows = data(&rows_text);
    assert_eq!(rows[0], "study,H,N,eps,error,stderr");
    assert_eq!(rows.len(), 5);
    for (line, row) in rows[1..].iter().zip(&lib[0].rows) {
        let error: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(error, row.error);
    }
    let summary_text = fs::read_to_string(dir.path().join("strong.summary.csv")).unwrap();
    let summary = data(&summary_text);
    assert_eq!(summary[0], "study,H,fitted_rate,ci_lo,ci_hi,n_points,M,seed");
    let fitted: f64 = summary[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(fitted, lib[0].fit.unwrap().slope);
    assert!(summary_text.contains("reference_digest"));
    // output locations are not part of the provenance
    assert!(!rows_text.contains("strong.csv") && !rows_text.contains("plots"));
    let plot = fs::read_to_string(plots.join("fig1_2_strong_error.csv")).unwrap();
    assert!(plot.starts_with("H,log2_eps,log2_error,log2_ci_lo,log2_ci_hi,log2_fit\n"));
    assert_eq!(plot.lines().count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(roughvol(&["price", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(roughvol(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(roughvol(&[]).status.code(), Some(1));
    // missing market keys
    let o = roughvol(&["price", "--f", "exp"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`rho`"));
    // out-of-range parameter
    assert_eq!(roughvol(&["price", "--H", "0.8", "--f", "exp", "--rho", "0", "--K", "1", "--S0", "1"]).status.code(), Some(1));
    // weak study is exp-only
    assert_eq!(roughvol(&["weak-rate", "--f", "const:c=1"]).status.code(), Some(1));
    // numerical blow-up
    let o = roughvol(&["volterra-sim", "--N", "8", "--u", "const:c=0", "--v", "poly:0,0,50", "--z", "1", "--paths", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_layering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# desk pricing run\nH = 0.2\nN = 5\nM = 2000\nf = exp\nrho = -0.5\nK = 1\nS0 = 1\nseed = 9\nM = 3000   # later value wins\n",
    )
    .unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = roughvol(&["price", "--config", path]);
    assert!(from_file.status.success());
    assert!(String::from_utf8_lossy(&from_file.stderr).contains("overrides line"));
    let flags_only = roughvol(&[
        "price", "--H", "0.2", "--N", "5", "--M", "3000", "--f", "exp", "--rho", "-0.5", "--K", "1", "--S0", "1",
        "--seed", "9",
    ]);
    assert_eq!(from_file.stdout, flags_only.stdout);

    // a flag beats the file
    let overridden = roughvol(&["price", "--config", path, "--seed", "10"]);
    assert!(stdout(&overridden).contains("# seed = 10\n"));

    // an empty file changes nothing
    let empty = dir.path().join("empty.cfg");
    fs::write(&empty, "").unwrap();
    let with_empty = roughvol(&[
        "price", "--config", empty.to_str().unwrap(), "--H", "0.2", "--N", "5", "--M", "3000", "--f", "exp", "--rho",
        "-0.5", "--K", "1", "--S0", "1", "--seed", "9",
    ]);
    assert_eq!(with_empty.stdout, flags_only.stdout);

    // parse errors carry the line
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "H = 0.3\nbroken\n").unwrap();
    let o = roughvol(&["price", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn seed_from_environment() {
    let run = |env_seed: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_roughvol"));
        c.args(["price", "--N", "4", "--M", "500", "--f", "exp", "--rho", "0.3", "--K", "1", "--S0", "1"]);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        c.env_remove("ROUGHVOL_SEED");
        if let Some(s) = env_seed {
            c.env("ROUGHVOL_SEED", s);
        }
        c.output().unwrap().stdout
    };
    assert_eq!(run(Some("5"), None), run(None, Some("5")));
    assert_ne!(run(Some("5"), None), run(None, None));
    assert_eq!(run(Some("5"), Some("6")), run(None, Some("6")));
}

#[test]
fn other_subcommands_write_csv() {
    let o = roughvol(&["ldp", "--f", "exp", "--rho", "-0.5", "--y", "-0.1,0,0.1", "--n-grid", "16"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data(&text);
    assert_eq!(rows[0], "y,I,converged,n_starts,best_start,grad_norm");
    assert_eq!(rows.len(), 4);

    let o = roughvol(&["volterra-sim", "--N", "5", "--u", "const:c=1", "--z", "0.5", "--paths", "3", "--times", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data(&text);
    assert_eq!(rows[0], "sample_id,t,Z_eps");
    assert_eq!(rows.len(), 10);
    assert!(rows[1].starts_with("0,0,0.5"));

    let o = roughvol(&["weak-rate", "--H", "0.5", "--N", "2..4", "--M", "200", "--d", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("study,H,N,eps,error,stderr\nweak,0.5,2,"));
    assert!(text.contains("study,H,fitted_rate,ci_lo,ci_hi,n_points,M,seed\nweak,0.5,"));

    let o = roughvol(&["option-rate", "--N", "2..4", "--Nref", "5", "--M", "200", "--d", "3", "--psi-variant", "paper-sec6"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# psi-variant = paper-sec6\n"));
}
