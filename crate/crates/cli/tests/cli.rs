mod common;

use common::*;
use medsev_cli::{MetricsFile, ModelFile, PredictionLine};

#[test]
fn featurize_writes_one_row_per_post() {
    let (dir, cfg) = fixture(5, BASE_CONFIG);
    run_ok(&["featurize", "--config", path_str(&cfg)]);
    let text = std::fs::read_to_string(dir.path().join("out/features.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,ws_pos,ws_neg,ws_obj,ts_pos,ts_neg");
    assert_eq!(lines.len(), 41);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        for v in &cols[1..] {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn missing_lexicon_names_the_path() {
    let (dir, cfg) = fixture(5, BASE_CONFIG);
    let missing = dir.path().join("nope.tsv");
    let out = medsev(&["featurize", "--config", path_str(&cfg), "--lexicon", path_str(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.tsv"), "{err}");
    assert!(!dir.path().join("out/features.csv").exists());
}

#[test]
fn train_then_predict_matches_in_sample_prediction() {
    let (dir, cfg) = fixture(10, BASE_CONFIG);
    run_ok(&["train", "--config", path_str(&cfg)]);
    let model = ModelFile::load(&dir.path().join("out/model.json")).unwrap();
    assert_eq!(model.pipelines.len(), 2);

    run_ok(&["predict", "--config", path_str(&cfg)]);
    let text = std::fs::read_to_string(dir.path().join("out/predictions.jsonl")).unwrap();
    let lines: Vec<PredictionLine> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 80);

    let corpus = medsev::corpus::load_corpus(dir.path().join("corpus.jsonl"), None).unwrap();
    let lexicon = medsev::lexicon::load_simple_lexicon(dir.path().join("lexicon.tsv")).unwrap();
    let planted = medsev::view_ingest::load_view_vectors(dir.path().join("planted.csv")).unwrap();
    for line in &lines {
        let post = corpus.get(&line.id).unwrap();
        assert_eq!(line.task, post.task);
        let direct = model
            .pipeline(post.task)
            .unwrap()
            .predict(&lexicon, std::slice::from_ref(&planted), &[(post.id.clone(), post.text.clone())])
            .unwrap();
        assert_eq!(line.label, direct[0].label);
        assert!((line.probabilities.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(line.view_contributions.len(), 2);
    }
}

#[test]
fn predict_unlabeled_input_with_out_flag() {
    let (dir, cfg) = fixture(5, BASE_CONFIG);
    run_ok(&["train", "--config", path_str(&cfg)]);
    let input = dir.path().join("new.jsonl");
    std::fs::write(&input, "{\"id\":\"c0001\",\"text\":\"i feel awful\"}\n").unwrap();
    let out = dir.path().join("preds.jsonl");
    run_ok(&["predict", "--config", path_str(&cfg), "--input", path_str(&input), "--out", path_str(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
}

#[test]
fn latent_dim_above_sample_count_fails() {
    let (_dir, cfg) = fixture(5, BASE_CONFIG);
    let out = medsev(&["train", "--config", path_str(&cfg), "--latent-dim", "500"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("latent dimension exceeds sample count"), "{err}");
}

#[test]
fn zero_weight_view_is_accepted_and_ignored() {
    let config = BASE_CONFIG.replace("path = \"planted.csv\"", "path = \"planted.csv\"\n\n[[views.external]]\npath = \"noise.csv\"\nweight = 0.0");
    let (dir, cfg) = fixture(5, &config);
    run_ok(&["train", "--config", path_str(&cfg)]);
    let model = ModelFile::load(&dir.path().join("out/model.json")).unwrap();
    for p in &model.pipelines {
        let noise = p.fusion.views.iter().find(|v| v.name == "noise").unwrap();
        assert_eq!(noise.weight, 0.0);
        assert!(noise.u.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn eval_reports_ten_folds_per_task() {
    let (dir, cfg) = fixture(10, BASE_CONFIG);
    let out = run_ok(&["eval", "--config", path_str(&cfg)]);
    let metrics: MetricsFile =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.tasks.len(), 2);
    for t in &metrics.tasks {
        assert_eq!(t.folds.len(), 10);
    }
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("macro_f1") && table.contains("mean"), "{table}");
}

#[test]
fn ablate_writes_table_and_needs_two_views() {
    let (dir, cfg) = fixture(10, BASE_CONFIG);
    run_ok(&["ablate", "--config", path_str(&cfg), "--folds", "4"]);
    let text = std::fs::read_to_string(dir.path().join("out/ablation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "view,condition_f1,medication_f1");
    assert!(lines[1].starts_with("All,"));
    assert_eq!(lines.len(), 4);

    let single = BASE_CONFIG.replace("[[views.external]]\npath = \"planted.csv\"\n", "");
    let (_dir, cfg) = fixture(10, &single);
    let out = medsev(&["ablate", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ablation needs ≥2 views"));
}

#[test]
fn help_documents_flags() {
    let out = run_ok(&["predict", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in ["--config", "--seed", "--out", "--corpus", "--lexicon", "--folds", "--latent-dim", "--epochs", "--model", "--input"] {
        assert!(help.contains(flag), "missing {flag} in\n{help}");
    }
}

#[test]
fn bad_config_exits_with_one() {
    let (_dir, cfg) = fixture(5, "[fusion]\nlatent = 3\n");
    let out = medsev(&["train", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.toml"));
}
