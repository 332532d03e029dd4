use std::path::Path;
use std::process::{Command, Output};

use verigate_cli::score::{OutputLine, ScoreSummary};

fn verigate(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_verigate"));
    cmd.args(args).env_remove("VERIGATE_CONFIG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GOOD: &str =
    r#"{"id":"a","response":"<think>hmm</think>La casa de papel","gold_aliases":["La Casa de Papel","Money Heist"],"ref_lengths":[16]}"#;
const MISS: &str = r#"{"id":"b","response":"<think>hmm</think>The Paper House","gold_aliases":["Money Heist"],"ref_lengths":[11]}"#;

#[test]
fn score_writes_one_line_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    std::fs::write(&input, format!("{GOOD}\n{{broken\n{MISS}\n")).unwrap();

    let out = verigate(&["score", "--input", path(&input), "--output", path(&output)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: ScoreSummary = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary.n_records, 2);
    assert_eq!(summary.n_errors, 1);
    assert_eq!(summary.entity_accuracy_pct, 50.0);
    assert!((summary.mean_reward - 0.7).abs() < 1e-12);

    let text = std::fs::read_to_string(&output).unwrap();
    let lines: Vec<OutputLine> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(matches!(&lines[0], OutputLine::Scored(s) if s.id == "a" && s.reward == 1.2));
    assert!(matches!(&lines[1], OutputLine::Error(e) if e.line == Some(2)));
    assert!(matches!(&lines[2], OutputLine::Scored(s) if s.id == "b" && s.reward == 0.2));
}

#[test]
fn score_rejects_empty_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    let output = dir.path().join("out.jsonl");
    std::fs::write(&input, "").unwrap();
    let out = verigate(&["score", "--input", path(&input), "--output", path(&output)], &[]);
    assert!(!out.status.success());
    assert!(!output.exists());

    let missing = dir.path().join("nope.jsonl");
    let out = verigate(&["score", "--input", path(&missing), "--output", path(&output)], &[]);
    assert!(!out.status.success());
    assert!(!output.exists());
}

#[test]
fn config_precedence_env_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[reward]\nalpha = 0.3\n").unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, format!("{MISS}\n")).unwrap();
    let output = dir.path().join("out.jsonl");

    let reward_of = |out: Output| -> f64 {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<ScoreSummary>(&out.stdout).unwrap().mean_reward
    };
    let args = ["score", "--input", path(&input), "--output", path(&output)];
    assert_eq!(reward_of(verigate(&args, &[])), 0.2);
    assert_eq!(reward_of(verigate(&args, &[("VERIGATE_CONFIG", &cfg)])), 0.3);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--alpha", "0.1"]);
    assert_eq!(reward_of(verigate(&with_flag, &[("VERIGATE_CONFIG", &cfg)])), 0.1);

    std::fs::write(&cfg, "[reward]\nalpha = 1.5\n").unwrap();
    let out = verigate(&args, &[("VERIGATE_CONFIG", &cfg)]);
    assert!(!out.status.success());
}

#[test]
fn passk_writes_csv_and_checks_n() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("counts.jsonl");
    let output = dir.path().join("curve.csv");
    std::fs::write(&input, "{\"id\":\"p1\",\"n\":4,\"c\":1}\n{\"id\":\"p2\",\"n\":4,\"c\":0}\n").unwrap();
    let out = verigate(&["passk", "--input", path(&input), "--ks", "1,2,4", "--output", path(&output)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&output).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "k,estimate");
    assert_eq!(rows[1], "1,0.125");
    assert_eq!(rows[2], "2,0.25");
    assert_eq!(rows[3], "4,0.5");

    std::fs::write(&input, "{\"id\":\"p1\",\"n\":4,\"c\":1}\n{\"id\":\"p2\",\"n\":6,\"c\":0}\n").unwrap();
    let out = verigate(&["passk", "--input", path(&input), "--output", path(&output)], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('4') && err.contains('6'), "{err}");
}

#[test]
fn gen_then_train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let lex_dir = dir.path().join("lex");
    let out = verigate(&["gen", "--seed", "5", "--out", path(&lex_dir)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["lexicon.json", "train_prompts.json", "test_prompts.json"] {
        assert!(lex_dir.join(f).exists(), "{f}");
    }

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nsteps = 3\nlexicon = \"lex/lexicon.json\"\n[optim]\nmini_batch = 2\nupdates_per_batch = 2\n")
        .unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = verigate(
            &["train", "--config", path(&cfg), "--ablation", "no_len_gate", "--seed", "9", "--out", path(&out_dir)],
            &[],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("pass@1"));
        assert!(out_dir.join("policy.json").exists());
        std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "step,mean_reward,mean_trans_length,mean_entropy,pass1_eval");
    assert_eq!(lines.len(), 1 + 4);
}

#[test]
fn train_rejects_unknown_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let out = verigate(&["train", "--ablation", "bogus", "--out", path(dir.path())], &[]);
    assert!(!out.status.success());
}
