//! Acceptance gate: one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use medsev::classifier::{train_softmax, SoftmaxModel, TrainConfig};
use medsev::corpus::{split_kfold, tokenize, Corpus, ForumPost, Label, TaskKind};
use medsev::evaluation::{ablate, cross_validate, CvObserver, FoldReport};
use medsev::fusion::{fit_wgcca, wgcca_objective, WgccaConfig};
use medsev::lexicon::{mark_negated, Lexicon, SentimentPrior};
use medsev::oracles::{
    align_signs, assemble_wgcca_matrix, brute_force_sentiment, jacobi_eigen, random_orthonormal,
    random_sentiment_case,
};
use medsev::pipeline::{FitStage, PipelineSpec, ViewKind, ViewSpec};
use medsev::sentiment_views::{compute_idf, target_view, word_level_view, SentimentFeaturizer, TargetParams};
use medsev::synthetic::{generate, SyntheticConfig, NOISE_VIEW, PLANTED_VIEW};
use medsev::view_ingest::ViewMatrix;
use medsev::Error;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn sentiment_oracle() -> Outcome {
    let start = Instant::now();
    let cases = 2000;
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        let case = random_sentiment_case(seed);
        let (ws, ts) = brute_force_sentiment(&case);
        let w = word_level_view(&case.tokens, &case.negated, &case.lexicon, &case.idf);
        let t = target_view(&case.tokens, &case.lexicon, &case.params);
        for (a, b) in [(w.ws_pos, ws[0]), (w.ws_neg, ws[1]), (w.ws_obj, ws[2]), (t.ts_pos, ts[0]), (t.ts_neg, ts[1])] {
            check(a.is_finite(), || format!("seed {seed}: non-finite output"))?;
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("{cases} posts, max deviation {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn gaussian(m: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, d, |_, _| rng.sample(StandardNormal))
}

fn wgcca_correctness() -> Outcome {
    let start = Instant::now();
    let instances = 60;
    let mut worst = [0.0f64; 2];
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(4..=20);
        let n_views = rng.random_range(2..=4);
        let views: Vec<ViewMatrix> = (0..n_views)
            .map(|i| {
                let d = rng.random_range(1..=6);
                let ids = (0..m).map(|r| format!("r{r}")).collect();
                let w = rng.random_range(0.1..2.0);
                ViewMatrix::new(format!("v{i}"), ids, gaussian(m, d, &mut rng))
                    .unwrap()
                    .with_weight(w)
                    .unwrap()
            })
            .collect();
        let k = rng.random_range(1..=3.min(m - 1));
        let (model, fused) = fit_wgcca(&views, &WgccaConfig { latent_dim: Some(k), ridge: None })
            .map_err(|e| format!("instance {seed}: {e}"))?;
        let g = &fused.g;
        let xs: Vec<DMatrix<f64>> = views.iter().map(|v| v.data().clone()).collect();
        let weights: Vec<f64> = views.iter().map(ViewMatrix::weight).collect();
        let ridges: Vec<f64> = model.views.iter().map(|v| v.ridge).collect();

        let ortho = (g.transpose() * g - DMatrix::<f64>::identity(k, k)).amax();
        check(ortho <= 1e-8, || format!("instance {seed}: G'G off identity by {ortho:e}"))?;

        let p = assemble_wgcca_matrix(&xs, &weights, &ridges);
        let lambda1 = model.eigenvalues[0];
        for j in 0..k {
            let col = g.column(j);
            let resid = (&p * col - col * model.eigenvalues[j]).amax();
            worst[0] = worst[0].max(resid / lambda1.max(1.0));
            check(resid <= 1e-6 * lambda1.max(1.0), || format!("instance {seed}: residual {resid:e}"))?;
        }

        let (vals, vecs) = jacobi_eigen(&p);
        for j in 0..k {
            let diff = (model.eigenvalues[j] - vals[j]).abs();
            worst[1] = worst[1].max(diff);
            check(diff <= 1e-8, || format!("instance {seed}: eigenvalue {j} differs by {diff:e}"))?;
        }
        // Eigenvectors are compared only where the spectrum is separated.
        let oracle_g = vecs.columns(0, k).clone_owned();
        let aligned = align_signs(&oracle_g, g);
        for j in 0..k {
            let gap_below = if j + 1 < vals.len() { vals[j] - vals[j + 1] } else { f64::INFINITY };
            let gap_above = if j > 0 { vals[j - 1] - vals[j] } else { f64::INFINITY };
            if gap_below.min(gap_above) > 1e-4 {
                let d = (aligned.column(j) - oracle_g.column(j)).amax();
                check(d <= 1e-6, || format!("instance {seed}: eigenvector {j} differs by {d:e}"))?;
            }
        }

        // Ridge-penalized objective, which the eigen-solution minimizes exactly.
        let objective = |g: &DMatrix<f64>, us: &[DMatrix<f64>]| {
            let xr: Vec<&DMatrix<f64>> = xs.iter().collect();
            let ur: Vec<&DMatrix<f64>> = us.iter().collect();
            let fit = wgcca_objective(g, &xr, &ur, &weights).unwrap();
            fit + us
                .iter()
                .zip(&weights)
                .zip(&ridges)
                .map(|((u, w), r)| w * r * u.norm_squared())
                .sum::<f64>()
        };
        let optimal_maps = |g: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
            xs.iter()
                .zip(&ridges)
                .map(|(x, r)| {
                    let gram = x.transpose() * x + DMatrix::identity(x.ncols(), x.ncols()) * *r;
                    gram.try_inverse().unwrap() * x.transpose() * g
                })
                .collect()
        };
        let fitted_us: Vec<DMatrix<f64>> = model.views.iter().map(|v| v.u.clone()).collect();
        let best = objective(g, &fitted_us);
        for _ in 0..100 {
            let cand = random_orthonormal(m, k, &mut rng);
            let obj = objective(&cand, &optimal_maps(&cand));
            check(best <= obj + 1e-9 * obj.abs().max(1.0), || {
                format!("instance {seed}: fitted objective {best} above candidate {obj}")
            })?;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "{instances} instances, residual/max(1,l1) {:.1e}, eigenvalue diff {:.1e}, {:.2}s",
        worst[0],
        worst[1],
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let instances = 25;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=8);
        let n = rng.random_range(2..12);
        let mut model = SoftmaxModel {
            weights: gaussian(k, 4, &mut rng),
            bias: (0..4).map(|_| rng.sample(StandardNormal)).collect(),
            class_names: names.clone(),
        };
        let x = gaussian(n, k, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let l2 = rng.random_range(0.0..0.5);
        let analytic = model.loss_and_grad(&x, &labels, l2).map_err(|e| e.to_string())?;
        let mut numeric_w = DMatrix::zeros(k, 4);
        for i in 0..k {
            for c in 0..4 {
                let orig = model.weights[(i, c)];
                model.weights[(i, c)] = orig + eps;
                let up = model.loss_and_grad(&x, &labels, l2).unwrap().loss;
                model.weights[(i, c)] = orig - eps;
                let down = model.loss_and_grad(&x, &labels, l2).unwrap().loss;
                model.weights[(i, c)] = orig;
                numeric_w[(i, c)] = (up - down) / (2.0 * eps);
            }
        }
        let mut numeric_b = DVector::zeros(4);
        for c in 0..4 {
            let orig = model.bias[c];
            model.bias[c] = orig + eps;
            let up = model.loss_and_grad(&x, &labels, l2).unwrap().loss;
            model.bias[c] = orig - eps;
            let down = model.loss_and_grad(&x, &labels, l2).unwrap().loss;
            model.bias[c] = orig;
            numeric_b[c] = (up - down) / (2.0 * eps);
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        for (a, b) in analytic.grad_weights.iter().zip(numeric_w.iter()) {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in analytic.grad_bias.iter().zip(numeric_b.iter()) {
            worst = worst.max(rel(*a, *b));
        }
    }
    check(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    within(start.elapsed(), 2.0)?;
    Ok(format!("{instances} instances, max relative error {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn synthetic_benchmark() -> Outcome {
    let start = Instant::now();
    let bench = generate(&SyntheticConfig::default(), 2024);
    check(bench.corpus.len() == 400, || format!("{} posts", bench.corpus.len()))?;
    let plan = split_kfold(&bench.corpus, 10, 7, true).map_err(|e| e.to_string())?;
    let report = cross_validate(&bench.corpus, &bench.spec(false), &plan, &mut ()).map_err(|e| e.to_string())?;
    let f1 = report.macro_f1.mean;
    check(f1 >= 0.95, || format!("mean macro-F1 {f1:.4} < 0.95"))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "mean macro-F1 {f1:.4} ± {:.4} over 10 folds, {:.2}s",
        report.macro_f1.std,
        start.elapsed().as_secs_f64()
    ))
}

fn ablation_sanity() -> Outcome {
    let start = Instant::now();
    let seeds = 20;
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..seeds {
        let bench = generate(&SyntheticConfig::default(), 500 + seed);
        let plan = split_kfold(&bench.corpus, 10, seed, true).map_err(|e| e.to_string())?;
        let table = ablate(&bench.corpus, &bench.spec(true), &plan).map_err(|e| format!("seed {seed}: {e}"))?;
        let drop = |view: &str| -table.row(view).expect("ablated view").delta[0];
        let (planted, noise) = (drop(PLANTED_VIEW), drop(NOISE_VIEW));
        if planted > noise {
            wins += 1;
        }
        margins.push(planted - noise);
    }
    let rate = wins as f64 / seeds as f64;
    check(rate >= 0.95, || format!("planted drop exceeded noise drop in {wins}/{seeds} seeds"))?;
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "planted drop > noise drop in {wins}/{seeds} seeds (min margin {min_margin:.3}), {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

struct LeakAudit {
    test_ids: Vec<BTreeSet<String>>,
    stages: Vec<BTreeSet<FitStage>>,
    violations: Vec<String>,
    folds_seen: usize,
}

impl CvObserver for LeakAudit {
    fn on_fit(&mut self, fold: usize, stage: FitStage, ids: &[String]) {
        for id in ids {
            if self.test_ids[fold].contains(id) {
                self.violations.push(format!("fold {fold}: {stage:?} fit on held-out {id}"));
            }
        }
        self.stages[fold].insert(stage);
    }

    fn on_fold(&mut self, fold: usize, test_ids: &[String], _report: &FoldReport) {
        let got: BTreeSet<String> = test_ids.iter().cloned().collect();
        if got != self.test_ids[fold] {
            self.violations.push(format!("fold {fold}: evaluated ids differ from the plan"));
        }
        self.folds_seen += 1;
    }
}

fn no_leakage() -> Outcome {
    let bench = generate(&SyntheticConfig::default(), 31);
    let mut spec = bench.spec(true);
    spec.views.push(ViewSpec::builtin(ViewKind::HashedContent { dim: 16, seed: 5 }, 0.5));
    let plan = split_kfold(&bench.corpus, 10, 3, true).map_err(|e| e.to_string())?;
    let mut audit = LeakAudit {
        test_ids: (0..10)
            .map(|f| plan.test_ids(f).into_iter().map(str::to_string).collect())
            .collect(),
        stages: vec![BTreeSet::new(); 10],
        violations: Vec::new(),
        folds_seen: 0,
    };
    cross_validate(&bench.corpus, &spec, &plan, &mut audit).map_err(|e| e.to_string())?;
    check(audit.violations.is_empty(), || audit.violations.join("; "))?;
    check(audit.folds_seen == 10, || format!("{} folds evaluated", audit.folds_seen))?;
    for (fold, stages) in audit.stages.iter().enumerate() {
        check(stages.len() == 4, || format!("fold {fold}: only {stages:?} reported"))?;
    }

    // Inspect the fitted structures directly as well.
    for fold in 0..10 {
        let train = bench.corpus.subset(plan.train_ids(fold));
        let fitted = spec.fit(&train).map_err(|e| e.to_string())?;
        let held_out = &audit.test_ids[fold];
        check(fitted.train_ids.iter().all(|id| !held_out.contains(id)), || format!("fold {fold}: train ids leak"))?;
        check(fitted.idf.corpus_size() == train.len(), || format!("fold {fold}: idf document count"))?;
        let train_vocab: BTreeSet<String> = train
            .posts()
            .iter()
            .flat_map(|p| tokenize(&p.text).tokens)
            .collect();
        check(fitted.idf.words().all(|w| train_vocab.contains(w)), || {
            format!("fold {fold}: idf holds words outside the training folds")
        })?;
        // Scaling means must equal the training-row means of each raw view.
        for proj in &fitted.fusion.views {
            let Some(scaling) = &proj.scaling else { continue };
            let source = match proj.name.as_str() {
                PLANTED_VIEW => Some(&bench.planted),
                NOISE_VIEW => Some(&bench.noise),
                _ => None,
            };
            if let Some(source) = source {
                let rows = source.select(&fitted.train_ids).map_err(|e| e.to_string())?;
                let mean = rows.data().row_mean();
                let diff = mean.iter().zip(&scaling.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                check(diff < 1e-12, || format!("fold {fold}: {} scaling not fit on training rows", proj.name))?;
            }
        }
        check(fitted.classifier.latent_dim() == fitted.fusion.latent_dim, || format!("fold {fold}: shapes"))?;
    }
    Ok("4 fitted structures audited on all 10 folds, no held-out id observed".into())
}

fn determinism() -> Outcome {
    let (dir, cfg) = common::fixture(10, common::BASE_CONFIG);
    let cfg = common::path_str(&cfg).to_string();
    let mut compared = 0;
    for (cmd, file) in [("featurize", "features.csv"), ("train", "model.json"), ("eval", "metrics.json")] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("run{run}_{file}"));
            let res = common::medsev(&[cmd, "--config", &cfg, "--out", common::path_str(&out)]);
            check(res.status.success(), || {
                format!("{cmd} failed: {}", String::from_utf8_lossy(&res.stderr))
            })?;
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        check(outputs[0] == outputs[1], || format!("{cmd} output differs between runs"))?;
        check(!outputs[0].is_empty(), || format!("{cmd} output is empty"))?;
        compared += 1;
    }
    Ok(format!("{compared} commands produced bitwise-identical outputs across reruns"))
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn degenerate_inputs() -> Outcome {
    let mut cases = 0;
    let lexicon = Lexicon::new([
        ("good".to_string(), SentimentPrior::from_pos_neg(0.8, 0.0).unwrap()),
        ("bad".to_string(), SentimentPrior::from_pos_neg(0.0, 0.7).unwrap()),
    ]);
    let featurizer = SentimentFeaturizer::new(lexicon.clone());

    // Empty post: all five values are zero.
    let empty = tokenize("");
    let idf = compute_idf([&empty]);
    check(featurizer.featurize(&empty, &idf) == [0.0; 5], || "empty post not all zero".into())?;
    cases += 1;

    // Punctuation only tokenizes to nothing.
    let punct = tokenize("?!... --");
    check(punct.is_empty() && featurizer.featurize(&punct, &idf) == [0.0; 5], || "punctuation-only post".into())?;
    cases += 1;

    // No lexicon words: word-level view is zero.
    let plain = tokenize("i feel the doctor today");
    let idf = compute_idf([&plain]);
    let w = word_level_view(&plain, &mark_negated(&plain, &lexicon, 3), &lexicon, &idf);
    check([w.ws_pos, w.ws_neg, w.ws_obj] == [0.0; 3], || format!("no-lexicon post gave {w:?}"))?;
    cases += 1;

    // No stative verb: target view is zero even with sentiment words.
    let nostat = tokenize("good good bad day");
    let t = target_view(&nostat, &lexicon, &TargetParams::default());
    check(t.ts_pos == 0.0 && t.ts_neg == 0.0, || format!("no-stative post gave {t:?}"))?;
    cases += 1;

    // Constant feature column and an all-constant view: fit succeeds, finite outputs.
    let bench = generate(&SyntheticConfig { posts_per_class: 15, ..SyntheticConfig::default() }, 77);
    let ids: Vec<String> = bench.corpus.ids().map(str::to_string).collect();
    let m = ids.len();
    let mut data = bench.planted.data().clone();
    data.column_mut(1).fill(3.5);
    let with_const_col = ViewMatrix::new("planted", ids.clone(), data).unwrap();
    let all_const = ViewMatrix::new("flat", ids.clone(), DMatrix::from_element(m, 3, 2.0)).unwrap();
    let mut spec = PipelineSpec::new(bench.lexicon.clone(), vec![
        ViewSpec::builtin(ViewKind::Sentiment, 1.0),
        ViewSpec::external(with_const_col.clone()),
        ViewSpec::external(all_const.clone()),
    ]);
    spec.fusion.latent_dim = Some(3);
    let fitted = spec.fit(&bench.corpus).map_err(|e| format!("constant columns: {e}"))?;
    let posts: Vec<(String, String)> = bench
        .corpus
        .posts()
        .iter()
        .map(|p| (p.id.clone(), p.text.clone()))
        .collect();
    let preds = fitted
        .predict(&bench.lexicon, &[with_const_col.clone(), all_const.clone()], &posts)
        .map_err(|e| e.to_string())?;
    for p in &preds {
        check(all_finite(&p.probabilities), || format!("{}: non-finite probabilities", p.id))?;
        check(p.view_contributions.values().all(|v| v.is_finite()), || format!("{}: non-finite contribution", p.id))?;
    }
    cases += 1;

    // Empty post through a fitted pipeline: finite prediction.
    let empty_pred = fitted
        .predict(&bench.lexicon, &[with_const_col.clone(), all_const.clone()], &[("c0000".into(), String::new())])
        .map_err(|e| e.to_string())?;
    check(all_finite(&empty_pred[0].probabilities), || "empty post prediction not finite".into())?;
    cases += 1;

    // Training fold missing a class: contracted fold-wrapped error.
    let posts: Vec<ForumPost> = (0..12)
        .map(|i| {
            let label = if i == 0 { Label::Recover } else { [Label::Exist, Label::Deteriorate, Label::Other][i % 3] };
            ForumPost::new(format!("p{i}"), "i feel good today.", TaskKind::MedicalCondition, label).unwrap()
        })
        .collect();
    let corpus = Corpus::new(posts).unwrap();
    let mut single = PipelineSpec::new(lexicon.clone(), vec![ViewSpec::builtin(ViewKind::Sentiment, 1.0)]);
    single.fusion.latent_dim = Some(2);
    let plan = split_kfold(&corpus, 3, 1, false).unwrap();
    match cross_validate(&corpus, &single, &plan, &mut ()) {
        Err(Error::Fold { source, .. }) if matches!(*source, Error::EmptyClass(_)) => {}
        other => return Err(format!("single-class fold: expected fold/empty-class error, got {other:?}")),
    }
    cases += 1;

    // Classifier on a single-class label set is rejected, not trained.
    let x = DMatrix::from_element(4, 2, 1.0);
    let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    check(
        matches!(train_softmax(&x, &[0, 0, 0, 0], names, &TrainConfig::default()), Err(Error::EmptyClass(_))),
        || "single-class training set not rejected".into(),
    )?;
    cases += 1;

    // A one-row fit is an error, not a panic.
    let tiny = ViewMatrix::new("t", vec!["a".into()], DMatrix::from_element(1, 2, 1.0)).unwrap();
    check(fit_wgcca(&[tiny], &WgccaConfig::default()).is_err(), || "single-row fusion not rejected".into())?;
    cases += 1;

    Ok(format!("{cases} degenerate cases returned the contracted value or error"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 sentiment-view oracle equivalence", sentiment_oracle),
        ("2 wGCCA correctness", wgcca_correctness),
        ("3 softmax gradient check", gradient_check),
        ("4 end-to-end synthetic benchmark", synthetic_benchmark),
        ("5 ablation sanity", ablation_sanity),
        ("6 no-leakage audit", no_leakage),
        ("7 determinism", determinism),
        ("8 degenerate-input suite", degenerate_inputs),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
