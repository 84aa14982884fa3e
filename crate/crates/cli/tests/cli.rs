//! End-to-end tests against the compiled binary: exit codes, emitted files,
//! and byte-level determinism across runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn twinlab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_twinlab"));
    // Tests control the output directory explicitly unless they are testing
    // the fallback itself.
    c.env_remove("TWINLAB_OUT");
    c
}

fn ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn twinlab");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output()
        .expect("spawn twinlab")
        .status
        .code()
        .expect("exit code")
}

/// Generates a small cohort under `dir` and returns the embeddings path.
fn synth_small(dir: &Path) -> PathBuf {
    ok(twinlab()
        .args([
            "synth",
            "--users",
            "30",
            "--questions",
            "12",
            "--embed-dim",
            "6",
            "--traits",
            "2",
            "--out",
        ])
        .arg(dir));
    dir.join("embeddings.csv")
}

/// Trains a small model on `data` into `out` and returns the checkpoint path.
fn train_small(data: &Path, out: &Path, extra: &[&str]) -> PathBuf {
    ok(twinlab()
        .args(["train", "--data"])
        .arg(data)
        .args([
            "--latent-dim",
            "3",
            "--epochs",
            "3",
            "--batch-size",
            "8",
            "--out",
        ])
        .arg(out)
        .args(extra));
    out.join("model.ckpt")
}

fn read_csv_rows(path: &Path, expect_header: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some(expect_header),
        "header of {}",
        path.display()
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    let out = ok(twinlab().arg("--help"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("twinlab"));
    ok(twinlab().arg("--version"));
    ok(twinlab().args(["train", "--help"]));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(exit_code(twinlab().arg("frobnicate")), 1);
    assert_eq!(exit_code(twinlab().args(["synth", "--bogus-flag"])), 1);
    // No embeddings source anywhere.
    assert_eq!(exit_code(twinlab().arg("train")), 1);
    // Well-formed flags, invalid values.
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    assert_eq!(
        exit_code(
            twinlab()
                .args(["train", "--latent-dim", "0", "--data"])
                .arg(&data)
                .arg("--out")
                .arg(dir.path().join("run")),
        ),
        1
    );
    let ckpt = train_small(&data, &dir.path().join("run"), &[]);
    let interpret = |extra: &[&str]| {
        let mut c = twinlab();
        c.args(["interpret", "--checkpoint"])
            .arg(&ckpt)
            .arg("--data")
            .arg(&data)
            .arg("--patterns")
            .arg(dir.path().join("patterns.json"))
            .arg("--out")
            .arg(dir.path().join("run"))
            .args(extra);
        c
    };
    assert_eq!(exit_code(&mut interpret(&["--quantile", "0.9"])), 1);
    assert_eq!(exit_code(&mut interpret(&["--alpha", "1.5"])), 1);
    assert_eq!(exit_code(&mut interpret(&["--dims", "1,x"])), 1);
    assert_eq!(exit_code(&mut interpret(&["--dims", "99"])), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        exit_code(
            twinlab()
                .args(["train", "--data", "/nonexistent/embeddings.csv", "--out"])
                .arg(dir.path()),
        ),
        2
    );
    // A CSV with the wrong header is rejected before any training.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,x,y\nu1,0.5,0.5\n").unwrap();
    assert_eq!(
        exit_code(
            twinlab()
                .args(["train", "--data"])
                .arg(&bad)
                .arg("--out")
                .arg(dir.path())
        ),
        2
    );
    assert_eq!(
        exit_code(
            twinlab()
                .args(["eval", "--checkpoint", "/nonexistent/model.ckpt", "--data"])
                .arg(&bad)
                .arg("--out")
                .arg(dir.path()),
        ),
        2
    );
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    let ckpt = train_small(&data, &run, &[]);

    let bytes = fs::read(&ckpt).unwrap();
    let truncated = dir.path().join("truncated.ckpt");
    fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] ^= 0xff;
    let bad_magic = dir.path().join("bad_magic.ckpt");
    fs::write(&bad_magic, &wrong_magic).unwrap();

    for broken in [truncated, bad_magic] {
        assert_eq!(
            exit_code(
                twinlab()
                    .args(["eval", "--checkpoint"])
                    .arg(&broken)
                    .arg("--data")
                    .arg(&data)
                    .arg("--out")
                    .arg(&run),
            ),
            2
        );
    }
}

#[test]
fn full_pipeline_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    assert!(dir.path().join("patterns.json").is_file());
    assert!(dir.path().join("traits.csv").is_file());

    let run = dir.path().join("run");
    let ckpt = train_small(&data, &run, &[]);
    assert!(ckpt.is_file());
    let trace = read_csv_rows(&run.join("trace.csv"), "epoch,train_loss,val_loss,recon,kl");
    assert_eq!(trace.len(), 3);
    assert_eq!(trace[0][0], "1");
    let kl_rows = read_csv_rows(&run.join("per_dim_kl.csv"), "epoch,dim,kl");
    assert_eq!(kl_rows.len(), 3 * 3);

    ok(twinlab()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["n_users"], 30);
    assert_eq!(eval["per_dim_kl"].as_array().unwrap().len(), 3);
    assert!(eval["recon_mse"].as_f64().unwrap().is_finite());

    ok(twinlab()
        .args(["interpret", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--patterns")
        .arg(dir.path().join("patterns.json"))
        .args(["--k-clusters", "2", "--out"])
        .arg(&run));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["n_users"], 30);
    assert_eq!(report["tests"].as_array().unwrap().len(), 3 * 7);
    assert_eq!(report["clusters"].as_array().unwrap().len(), 2);
    let importance = read_csv_rows(
        &run.join("importance.csv"),
        "dim,variance,range,variance_rank,range_rank",
    );
    assert_eq!(importance.len(), 3);
    let tests = read_csv_rows(
        &run.join("tests.csv"),
        "dim,category,mean_diff,u,p,p_corrected,d,n_high,n_low",
    );
    assert_eq!(tests.len(), 3 * 7);

    ok(twinlab()
        .args(["cluster", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--patterns")
        .arg(dir.path().join("patterns.json"))
        .args(["--k-clusters", "3", "--out"])
        .arg(&run));
    let assignments = read_csv_rows(&run.join("assignments.csv"), "user_id,cluster");
    assert_eq!(assignments.len(), 30);
    assert!(assignments
        .iter()
        .all(|r| r[1].parse::<usize>().unwrap() < 3));
    let inertia = read_csv_rows(&run.join("inertia.csv"), "k,inertia");
    assert_eq!(inertia.len(), 3);
    let values: Vec<f64> = inertia.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(
        values.windows(2).all(|w| w[1] <= w[0] + 1e-9),
        "inertia not decreasing: {values:?}"
    );

    ok(twinlab()
        .args(["baseline", "--data"])
        .arg(&data)
        .args(["--max-k", "4", "--checkpoint"])
        .arg(&ckpt)
        .arg("--out")
        .arg(&run));
    let pca_err = read_csv_rows(&run.join("pca_error.csv"), "k,mse");
    assert_eq!(pca_err.len(), 4);
    let mse: Vec<f64> = pca_err.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(
        mse.windows(2).all(|w| w[1] <= w[0] + 1e-12),
        "pca error not decreasing: {mse:?}"
    );
    let fa = read_csv_rows(&run.join("fa_loglik.csv"), "iter,loglik");
    assert!(fa.len() >= 2);
    assert_eq!(fa[0][0], "0");
    let proj = read_csv_rows(&run.join("projection.csv"), "user_id,pc1,pc2,dominant_dim");
    assert_eq!(proj.len(), 30);

    ok(twinlab()
        .args(["report", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run));
    let latent = read_csv_rows(
        &run.join("latent_projection.csv"),
        "user_id,pc1,pc2,dominant_dim",
    );
    assert_eq!(latent.len(), 30);
    assert!(latent.iter().all(|r| r[3].parse::<usize>().unwrap() < 3));
}

#[test]
fn baseline_without_checkpoint_omits_dominant_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    ok(twinlab()
        .args(["baseline", "--data"])
        .arg(&data)
        .args(["--max-k", "2", "--out"])
        .arg(&run));
    let proj = read_csv_rows(&run.join("projection.csv"), "user_id,pc1,pc2");
    assert_eq!(proj.len(), 30);
}

#[test]
fn same_seed_reproduces_bytes_and_different_seed_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for out in [&a, &b] {
        ok(twinlab()
            .args([
                "synth",
                "--users",
                "25",
                "--questions",
                "10",
                "--embed-dim",
                "5",
                "--seed",
                "11",
                "--out",
            ])
            .arg(out));
    }
    ok(twinlab()
        .args([
            "synth",
            "--users",
            "25",
            "--questions",
            "10",
            "--embed-dim",
            "5",
            "--seed",
            "12",
            "--out",
        ])
        .arg(&c));
    for name in ["embeddings.csv", "patterns.json", "traits.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        fs::read(a.join("embeddings.csv")).unwrap(),
        fs::read(c.join("embeddings.csv")).unwrap()
    );

    let (ra, rb) = (dir.path().join("run-a"), dir.path().join("run-b"));
    train_small(&a.join("embeddings.csv"), &ra, &["--seed", "11"]);
    train_small(&a.join("embeddings.csv"), &rb, &["--seed", "11"]);
    for name in ["model.ckpt", "trace.csv", "per_dim_kl.csv"] {
        assert_eq!(
            fs::read(ra.join(name)).unwrap(),
            fs::read(rb.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn beta_zero_makes_loss_equal_recon() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    train_small(&data, &run, &["--beta", "0"]);
    let trace = read_csv_rows(&run.join("trace.csv"), "epoch,train_loss,val_loss,recon,kl");
    for row in &trace {
        // loss = recon + beta * kl; recon and kl are the training-set
        // components, so at beta 0 the train loss is the recon term exactly.
        assert_eq!(row[1], row[3], "train_loss vs recon in {row:?}");
    }
}

#[test]
fn config_file_env_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_out = dir.path().join("from-file");
    let env_out = dir.path().join("from-env");
    let flag_out = dir.path().join("from-flag");

    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\nout = \"{}\"\n[synth]\nn_users = 12\nn_questions = 6\nembed_dim = 4\nn_traits = 2\n",
            cfg_out.display()
        ),
    )
    .unwrap();

    // File out wins over the environment fallback.
    ok(twinlab()
        .args(["synth", "--config"])
        .arg(&cfg)
        .env("TWINLAB_OUT", &env_out));
    assert!(cfg_out.join("embeddings.csv").is_file());
    assert!(!env_out.exists());

    // Without a file-level out, the environment fills it.
    let cfg_no_out = dir.path().join("no-out.toml");
    fs::write(
        &cfg_no_out,
        "seed = 5\n[synth]\nn_users = 12\nn_questions = 6\nembed_dim = 4\nn_traits = 2\n",
    )
    .unwrap();
    ok(twinlab()
        .args(["synth", "--config"])
        .arg(&cfg_no_out)
        .env("TWINLAB_OUT", &env_out));
    assert!(env_out.join("embeddings.csv").is_file());

    // The flag beats both.
    ok(twinlab()
        .args(["synth", "--config"])
        .arg(&cfg)
        .env("TWINLAB_OUT", &env_out)
        .arg("--out")
        .arg(&flag_out));
    assert!(flag_out.join("embeddings.csv").is_file());

    // Same merged settings, same bytes: the file seed reproduces an explicit
    // --seed run, and a --seed flag overrides the file's.
    let direct = dir.path().join("direct");
    ok(twinlab()
        .args([
            "synth",
            "--users",
            "12",
            "--questions",
            "6",
            "--embed-dim",
            "4",
            "--traits",
            "2",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&direct));
    assert_eq!(
        fs::read(cfg_out.join("embeddings.csv")).unwrap(),
        fs::read(direct.join("embeddings.csv")).unwrap()
    );
    let reseeded = dir.path().join("reseeded");
    ok(twinlab()
        .args(["synth", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--out"])
        .arg(&reseeded));
    assert_ne!(
        fs::read(reseeded.join("embeddings.csv")).unwrap(),
        fs::read(direct.join("embeddings.csv")).unwrap()
    );

    // Unknown config keys are usage errors, not silent drift.
    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "sede = 5\n").unwrap();
    assert_eq!(
        exit_code(twinlab().args(["synth", "--config"]).arg(&typo)),
        1
    );
}

#[test]
fn dims_flag_restricts_tested_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    let ckpt = train_small(&data, &run, &[]);
    ok(twinlab()
        .args(["interpret", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--patterns")
        .arg(dir.path().join("patterns.json"))
        .args(["--dims", "0,2", "--k-clusters", "2", "--out"])
        .arg(&run));
    let tests = read_csv_rows(
        &run.join("tests.csv"),
        "dim,category,mean_diff,u,p,p_corrected,d,n_high,n_low",
    );
    assert_eq!(tests.len(), 2 * 7);
    assert!(tests.iter().all(|r| r[0] == "0" || r[0] == "2"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["dims"], serde_json::json!([0, 2]));
}

#[test]
fn single_cluster_profile_matches_global_means() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    let ckpt = train_small(&data, &run, &[]);
    ok(twinlab()
        .args(["cluster", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--patterns")
        .arg(dir.path().join("patterns.json"))
        .args(["--k-clusters", "1", "--out"])
        .arg(&run));

    let clusters: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("clusters.json")).unwrap()).unwrap();
    let only = &clusters.as_array().unwrap()[0];
    assert_eq!(only["size"], 30);

    let patterns: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("patterns.json")).unwrap())
            .unwrap();
    let (mut ext_sum, mut neu_sum, mut n) = (0.0, 0.0, 0.0);
    for p in patterns.as_array().unwrap() {
        let c = &p["counts"];
        let get = |k: &str| c[k].as_f64().unwrap();
        let total = get("strongly_agree")
            + get("agree")
            + get("neither")
            + get("disagree")
            + get("strongly_disagree");
        ext_sum += (get("strongly_agree") + get("strongly_disagree")) / total;
        neu_sum += get("neither") / total;
        n += 1.0;
    }
    let ext = only["mean_extremity"].as_f64().unwrap();
    let neu = only["mean_neutrality"].as_f64().unwrap();
    assert!(
        (ext - ext_sum / n).abs() < 1e-12,
        "extremity {ext} vs {}",
        ext_sum / n
    );
    assert!(
        (neu - neu_sum / n).abs() < 1e-12,
        "neutrality {neu} vs {}",
        neu_sum / n
    );
}

#[test]
fn mismatched_patterns_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    let ckpt = train_small(&data, &run, &[]);
    // A smaller cohort's patterns file misses most of the users.
    let other = dir.path().join("other");
    ok(twinlab()
        .args([
            "synth",
            "--users",
            "5",
            "--questions",
            "12",
            "--embed-dim",
            "6",
            "--out",
        ])
        .arg(&other));
    assert_eq!(
        exit_code(
            twinlab()
                .args(["interpret", "--checkpoint"])
                .arg(&ckpt)
                .arg("--data")
                .arg(&data)
                .arg("--patterns")
                .arg(other.join("patterns.json"))
                .arg("--out")
                .arg(&run),
        ),
        2
    );
}

#[test]
fn hierarchical_variant_trains_and_reports_top_kl() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path());
    let run = dir.path().join("run");
    let ckpt = train_small(
        &data,
        &run,
        &["--model", "hierarchical", "--hier-top-dim", "2"],
    );
    ok(twinlab()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("eval.json")).unwrap()).unwrap();
    assert!(eval["kl_top"].as_f64().unwrap() >= 0.0);
}
