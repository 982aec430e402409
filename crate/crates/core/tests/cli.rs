mod common;

use std::path::Path;

use common::{path_str, tabreduce};
use tabreduce::cli::{AnswerRecord, ReductionRecord, RunManifest};
use tabreduce::data::{annotated_pairs, load_dataset, split_by_table, InstanceRecord, SplitRatios};
use tabreduce::metrics::Report;
use tabreduce::policy::PolicyModel;
use tabreduce::trainer::{evaluate_recall, make_examples, SftEpochRecord};

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn records(p: &Path) -> Vec<InstanceRecord> {
    let (ok, bad) = load_dataset(p).unwrap();
    assert!(bad.is_empty());
    ok
}

fn small_synth(dir: &Path, seed: u64) -> std::path::PathBuf {
    let out = dir.join("synth.jsonl");
    let seed = seed.to_string();
    let code = tabreduce(&["synth", "--n", "240", "--seed", &seed, "--max-rows", "20", "--out", path_str(&out)]);
    assert_eq!(code, 0);
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_synth(d, 1);
    let data = path_str(&data);
    let out = d.join("o.jsonl");
    let out = path_str(&out);
    assert_eq!(tabreduce(&["--help"]), 0);
    assert_eq!(tabreduce(&["annotate", "--in", "/nonexistent/x.jsonl", "--out", out]), 2);
    assert_eq!(tabreduce(&["annotate", "--in", data, "--out", out, "--target", "cells"]), 1);
    assert_eq!(tabreduce(&["--jobs", "0", "annotate", "--in", data, "--out", out]), 1);
    assert_eq!(tabreduce(&["reduce", "--data", data, "--out", out]), 1);
    assert_eq!(tabreduce(&["qa", "--data", data, "--out", out]), 1);
    assert_eq!(tabreduce(&["report", "--answers", data, "--buckets", "5,3", "--out", out]), 1);

    // mock answering needs gold SQL on every record
    let mut recs = records(Path::new(data));
    recs[0].sql = None;
    let no_sql = d.join("nosql.jsonl");
    std::fs::write(&no_sql, recs.iter().map(|r| r.to_json_line() + "\n").collect::<String>()).unwrap();
    assert_eq!(tabreduce(&["qa", "--data", path_str(&no_sql), "--mock", "--out", out]), 1);

    // an unreachable endpoint is a remote failure
    let llm = d.join("llm.json");
    std::fs::write(&llm, r#"{"max_attempts": 1, "timeout_secs": 2}"#).unwrap();
    let code = tabreduce(&[
        "qa", "--data", data, "--endpoint", "http://127.0.0.1:9", "--llm-config", path_str(&llm), "--out", out,
    ]);
    assert_eq!(code, 3);
    let manifest: RunManifest = serde_json::from_str(&read(&d.join("o.jsonl.manifest.json"))).unwrap();
    assert!(manifest.status.starts_with("failed"), "{}", manifest.status);
}

#[test]
fn annotate_is_thread_count_independent_and_honours_target() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_synth(d, 2);
    // strip the generator's annotations so the command does the work
    let stripped: String = records(&data)
        .into_iter()
        .map(|mut r| {
            r.relevant_columns = None;
            r.relevant_rows = None;
            r.annotation_status = None;
            r.to_json_line() + "\n"
        })
        .collect();
    let raw = d.join("raw.jsonl");
    std::fs::write(&raw, stripped).unwrap();
    let (one, four, cols) = (d.join("one.jsonl"), d.join("four.jsonl"), d.join("cols.jsonl"));
    assert_eq!(tabreduce(&["--jobs", "1", "annotate", "--in", path_str(&raw), "--out", path_str(&one)]), 0);
    assert_eq!(tabreduce(&["--jobs", "4", "annotate", "--in", path_str(&raw), "--out", path_str(&four)]), 0);
    assert_eq!(read(&one), read(&four));
    assert_eq!(records(&one), records(&data));

    let code = tabreduce(&["annotate", "--in", path_str(&raw), "--out", path_str(&cols), "--target", "columns"]);
    assert_eq!(code, 0);
    for (c, full) in records(&cols).iter().zip(records(&one)) {
        assert_eq!(c.relevant_rows, None);
        assert_eq!(c.relevant_columns, full.relevant_columns);
        assert_eq!(c.annotation_status.as_deref(), Some("ok"));
    }
    assert!(d.join("one.jsonl.manifest.json").exists());
}

#[test]
fn pipeline_outputs_agree_with_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_synth(d, 3);
    let cfg = d.join("sft.json");
    std::fs::write(&cfg, r#"{"epochs": 6, "seed": 3, "split_seed": 3}"#).unwrap();
    let sft_dir = d.join("sft");
    let code = tabreduce(&[
        "sft", "--data", path_str(&data), "--target", "columns", "--out", path_str(&sft_dir),
        "--config", path_str(&cfg), "--save-checkpoints",
    ]);
    assert_eq!(code, 0);

    // the kept model is the first checkpoint with the best logged recall,
    // and re-scoring every checkpoint reproduces the log
    let split = split_by_table(records(&data), SplitRatios::default(), 3).unwrap();
    let log: Vec<SftEpochRecord> = read(&sft_dir.join("metrics.jsonl"))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(log.len(), 6);
    let mut best = (f64::NEG_INFINITY, 0);
    for rec in &log {
        let ckpt = PolicyModel::load(&sft_dir.join(format!("checkpoints/epoch-{}.model.json", rec.epoch))).unwrap();
        let valid = make_examples(&ckpt, &annotated_pairs(&split.valid));
        let recall = evaluate_recall(&ckpt.params, &valid).unwrap();
        assert_eq!(Some(recall), rec.valid_recall);
        if recall > best.0 {
            best = (recall, rec.epoch);
        }
    }
    let model_text = read(&sft_dir.join("model.json"));
    assert_eq!(model_text, read(&sft_dir.join(format!("checkpoints/epoch-{}.model.json", best.1))));

    let report_path = d.join("eval.json");
    let code = tabreduce(&[
        "eval-reduce", "--data", path_str(&data), "--model", path_str(&sft_dir.join("model.json")),
        "--report", path_str(&report_path), "--split", "test", "--split-seed", "3",
    ]);
    assert_eq!(code, 0);
    let report: Report = serde_json::from_str(&read(&report_path)).unwrap();
    let model = PolicyModel::load(&sft_dir.join("model.json")).unwrap();
    let test = make_examples(&model, &annotated_pairs(&split.test));
    let cols = report.columns.unwrap();
    assert_eq!(cols.count, test.len());
    assert!((cols.recall - evaluate_recall(&model.params, &test).unwrap()).abs() < 1e-12);

    let rl_cfg = d.join("rl.json");
    std::fs::write(&rl_cfg, r#"{"iterations": 3, "rollout_episodes_per_iter": 64, "seed": 3, "split_seed": 3}"#).unwrap();
    let rl_dir = d.join("rl");
    let code = tabreduce(&[
        "train-rl", "--data", path_str(&data), "--init", path_str(&sft_dir.join("model.json")),
        "--target", "columns", "--out", path_str(&rl_dir), "--config", path_str(&rl_cfg),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read(&rl_dir.join("metrics.jsonl")).lines().count(), 3);
    let manifest: RunManifest = serde_json::from_str(&read(&rl_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest.status, "ok");
    assert_eq!(manifest.seeds["seed"], 3);
    // a row target on a column model is refused
    let code = tabreduce(&[
        "train-rl", "--data", path_str(&data), "--init", path_str(&sft_dir.join("model.json")),
        "--target", "rows", "--out", path_str(&d.join("bad")),
    ]);
    assert_eq!(code, 1);

    let red = d.join("red.jsonl");
    let code = tabreduce(&[
        "reduce", "--data", path_str(&data), "--col-model", path_str(&rl_dir.join("model.json")),
        "--out", path_str(&red), "--split", "test", "--split-seed", "3",
    ]);
    assert_eq!(code, 0);
    let reductions: Vec<ReductionRecord> = read(&red).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reductions.len(), split.test.len());
    for (r, rec) in reductions.iter().zip(&split.test) {
        assert_eq!(r.id, rec.id);
        assert_eq!(r.rows.len(), rec.table.num_rows(), "no row model keeps every row");
    }

    let answers = d.join("answers.jsonl");
    let code = tabreduce(&[
        "qa", "--data", path_str(&data), "--mock", "--context", "gold", "--out", path_str(&answers),
        "--split", "test", "--split-seed", "3",
    ]);
    assert_eq!(code, 0);
    let answered: Vec<AnswerRecord> = read(&answers).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(answered.len(), split.test.len());
    assert!(answered.iter().all(|a| a.correct), "gold context with no budget answers everything");

    let rep = d.join("qa-report.json");
    let code = tabreduce(&[
        "report", "--answers", path_str(&answers), "--reductions", path_str(&red), "--buckets", "0,100",
        "--out", path_str(&rep), "--csv", path_str(&d.join("acc.csv")),
    ]);
    assert_eq!(code, 0);
    let report: Report = serde_json::from_str(&read(&rep)).unwrap();
    assert_eq!(report.accuracy, Some(1.0));
    assert_eq!(report.bucket_accuracy.iter().map(|b| b.count).sum::<usize>(), answered.len());
    assert!(read(&d.join("acc.csv")).starts_with("lower_tokens"));
}
