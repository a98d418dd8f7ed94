use std::collections::BTreeSet;

use medsev::corpus::{split_kfold, Corpus, ForumPost, Label, TaskKind};
use medsev::evaluation::{ablate, cross_validate, CvObserver, FoldReport, ALL_VIEWS};
use medsev::pipeline::FitStage;
use medsev::synthetic::{generate, SyntheticConfig, NOISE_VIEW, PLANTED_VIEW};
use medsev::Error;

fn small() -> medsev::synthetic::SyntheticBenchmark {
    generate(
        &SyntheticConfig {
            posts_per_class: 30,
            ..SyntheticConfig::default()
        },
        5,
    )
}

#[test]
fn reports_are_deterministic() {
    let b = small();
    let plan = split_kfold(&b.corpus, 5, 11, true).unwrap();
    let spec = b.spec(true);
    let r1 = cross_validate(&b.corpus, &spec, &plan, &mut ()).unwrap();
    let r2 = cross_validate(&b.corpus, &spec, &plan, &mut ()).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.folds.len(), 5);
    assert_eq!(r1.folds.iter().map(|f| f.test_size).sum::<usize>(), 120);
}

#[test]
fn ablation_baseline_equals_plain_cv() {
    let b = small();
    let plan = split_kfold(&b.corpus, 5, 2, true).unwrap();
    let spec = b.spec(true);
    let cv = cross_validate(&b.corpus, &spec, &plan, &mut ()).unwrap();
    let table = ablate(&b.corpus, &spec, &plan).unwrap();
    let all = table.row(ALL_VIEWS).unwrap();
    assert_eq!(all.f1[0].to_bits(), cv.macro_f1.mean.to_bits());
    assert_eq!(table.rows.len(), 4);
    let planted = table.row(PLANTED_VIEW).unwrap();
    let noise = table.row(NOISE_VIEW).unwrap();
    assert!(planted.delta[0] < noise.delta[0]);
}

#[test]
fn ablation_needs_two_views() {
    let b = small();
    let plan = split_kfold(&b.corpus, 5, 2, true).unwrap();
    let spec = b.spec(false).without_view(PLANTED_VIEW);
    let err = ablate(&b.corpus, &spec, &plan).unwrap_err();
    assert!(err.to_string().contains("ablation needs ≥2 views"), "{err}");
}

struct Audit {
    test_ids: Vec<BTreeSet<String>>,
    stages: Vec<BTreeSet<FitStage>>,
}

impl CvObserver for Audit {
    fn on_fit(&mut self, fold: usize, stage: FitStage, ids: &[String]) {
        for id in ids {
            assert!(!self.test_ids[fold].contains(id), "fold {fold} {stage:?} saw {id}");
        }
        self.stages[fold].insert(stage);
    }

    fn on_fold(&mut self, fold: usize, test_ids: &[String], _report: &FoldReport) {
        assert_eq!(test_ids.iter().cloned().collect::<BTreeSet<_>>(), self.test_ids[fold]);
    }
}

#[test]
fn fitted_structures_never_see_held_out_ids() {
    let b = small();
    let plan = split_kfold(&b.corpus, 4, 8, true).unwrap();
    let mut audit = Audit {
        test_ids: (0..4)
            .map(|f| plan.test_ids(f).into_iter().map(str::to_string).collect())
            .collect(),
        stages: vec![BTreeSet::new(); 4],
    };
    cross_validate(&b.corpus, &b.spec(true), &plan, &mut audit).unwrap();
    for s in audit.stages {
        assert_eq!(s.len(), 4);
    }
}

#[test]
fn missing_class_in_training_fold_is_a_fold_error() {
    let posts: Vec<ForumPost> = (0..8)
        .map(|i| {
            let label = if i == 0 { Label::Recover } else { [Label::Exist, Label::Deteriorate, Label::Other][i % 3] };
            ForumPost::new(format!("p{i}"), "i feel good today.", TaskKind::MedicalCondition, label).unwrap()
        })
        .collect();
    let corpus = Corpus::new(posts).unwrap();
    let b = small();
    let mut spec = b.spec(false);
    spec.views.truncate(1);
    spec.fusion.latent_dim = Some(2);
    let plan = split_kfold(&corpus, 2, 0, false).unwrap();
    match cross_validate(&corpus, &spec, &plan, &mut ()) {
        Err(Error::Fold { source, .. }) => assert!(matches!(*source, Error::EmptyClass(_)), "{source}"),
        other => panic!("expected a fold error, got {other:?}"),
    }
}

#[test]
fn multi_task_corpus_rejected_by_cv() {
    let b = small();
    let mut posts = b.corpus.posts().to_vec();
    posts.push(ForumPost::new("x", "works", TaskKind::Medication, Label::Effective).unwrap());
    let corpus = Corpus::new(posts).unwrap();
    let plan = split_kfold(&corpus, 5, 0, false).unwrap();
    assert!(cross_validate(&corpus, &b.spec(false), &plan, &mut ()).is_err());
}
