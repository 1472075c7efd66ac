use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn leakscope(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakscope"))
        .args(args)
        .env("LEAKSCOPE_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mink_scores_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let eval = fixture("tiny_eval.jsonl");
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let o = leakscope(
            &[
                "score",
                "-d",
                s(&eval),
                "--attack",
                "mink",
                "--k",
                "20",
                "--out",
                s(&out),
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("attack,id,position,score\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn population_attacks_without_population_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let eval = fixture("tiny_eval.jsonl");
    for attack in ["rmia", "informia"] {
        let o = leakscope(&["score", "-d", s(&eval), "--attack", attack], dir.path());
        assert_eq!(o.status.code(), Some(2), "{attack}");
    }
}

#[test]
fn unknown_flags_and_attacks_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let eval = fixture("tiny_eval.jsonl");
    let o = leakscope(
        &["score", "-d", s(&eval), "--attack", "loss", "--frobnicate"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = leakscope(
        &["score", "-d", s(&eval), "--attack", "nonsense"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = leakscope(
        &[
            "score",
            "-d",
            s(&eval),
            "--attack",
            "rmia",
            "--gamma",
            "0.5",
            "--population",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_dataset_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"schema\":\"leakscope/1\",\"seq_signal\":\"geo_mean\",\"log\":\"nat\"}\n{\"id\":\"a\",\"p_target\":1.5,\"p_refs\":[0.5]}\n").unwrap();
    let o = leakscope(&["validate", s(&bad)], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = leakscope(
        &["validate", "--full", s(&fixture("tiny_eval.jsonl"))],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_reports_perfect_auc() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.jsonl");
    let scores = dir.path().join("perfect.csv");
    let mut data =
        String::from("{\"schema\":\"leakscope/1\",\"seq_signal\":\"geo_mean\",\"log\":\"nat\"}\n");
    let mut csv = String::from("attack,id,position,score\n");
    for i in 0..6 {
        let label = if i < 3 { "member" } else { "nonmember" };
        data.push_str(&format!(
            "{{\"id\":\"r{i}\",\"label\":\"{label}\",\"p_target\":0.5,\"p_refs\":[0.5]}}\n"
        ));
        csv.push_str(&format!("perfect,r{i},,{}\n", 10 - i));
    }
    std::fs::write(&labels, data).unwrap();
    std::fs::write(&scores, csv).unwrap();
    let table = dir.path().join("table.csv");
    let o = leakscope(
        &[
            "eval",
            "--scores",
            s(&scores),
            "--labels",
            s(&labels),
            "--out",
            s(&table),
            "--roc-dir",
            s(&dir.path().join("roc")),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(&table).unwrap();
    assert_eq!(written.lines().nth(1), Some("perfect,1,1,1"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1.0000"));
    assert!(dir.path().join("roc/perfect.roc.csv").exists());
}

#[test]
fn stats_and_report_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let eval = fixture("tiny_eval.jsonl");
    let scores = dir.path().join("tok.jsonl");
    let o = leakscope(
        &[
            "score",
            "-d",
            s(&eval),
            "--attack",
            "informia-token",
            "--out",
            s(&scores),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = leakscope(
        &["stats", "-d", s(&eval), "--scores", s(&scores)],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "entity_groups.csv",
        "private_split.csv",
        "priv_bits.csv",
        "summary.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["correlation"]["method"], "pearson");

    let reports = dir.path().join("reports");
    let o = leakscope(
        &[
            "report",
            "-d",
            s(&eval),
            "--scores",
            s(&scores),
            "--out-dir",
            s(&reports),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["heatmap.html", "top_sequences.html", "top_private.html"] {
        assert!(reports.join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("conf.json");
    let out = dir.path().join("from_config.jsonl");
    let body = serde_json::json!({
        "attack": "informia",
        "data": fixture("tiny_eval.jsonl"),
        "population": fixture("tiny_population.jsonl"),
        "base": "e",
        "out": out,
    });
    std::fs::write(&conf, body.to_string()).unwrap();
    let o = leakscope(&["--config", s(&conf), "score"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("{\"attack\":\"informia\""));

    std::fs::write(&conf, "{\"gama\": 2}").unwrap();
    let o = leakscope(&["--config", s(&conf), "score"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_output_goes_to_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = leakscope(
        &[
            "score",
            "-d",
            s(&fixture("tiny_eval.jsonl")),
            "--attack",
            "loss",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("loss.csv").exists());
}
