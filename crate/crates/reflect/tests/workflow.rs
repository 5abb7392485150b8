use reflect::checkpoint::{Checkpoint, ModelState};
use reflect::config::{default_alpha, ModelKind, RunConfig};
use reflect::workflow::{self, gradcheck, GradCheckSettings};
use reflect_core::dataset::Split;
use reflect_core::neural::Mlp;
use reflect_core::reflection::{AttributeVector, Mirror, RefModel};
use reflect_core::synth::{synth_generate, SyntheticSpec};
use std::path::Path;

fn planted(dir: &Path) -> (SyntheticSpec, RunConfig) {
    let spec = SyntheticSpec {
        dim: 8,
        pairs: 20,
        split: reflect_core::dataset::SplitCounts::new(10, 5, 5),
        non_attribute: 30,
        non_attribute_train: 4,
        distractors: 40,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let data = synth_generate(&spec).unwrap();
    workflow::write_synthetic(dir, &spec, &data).unwrap();
    (spec, RunConfig::load(dir.join("config.json")).unwrap())
}

/// A reflection model whose MLPs ignore their input and emit the given mirror.
fn oracle(mirror: &Mirror, parameterized: bool) -> RefModel {
    let d = mirror.dim();
    let input = if parameterized { 2 * d } else { d };
    let constant = |bias: &[f64]| {
        let mut m = Mlp::zeros(&[input, 4, d]).unwrap();
        m.layers_mut()[1].bias = bias.to_vec();
        m
    };
    RefModel::from_parts(
        AttributeVector::random("SYN", d, 0, false),
        constant(mirror.normal()),
        constant(mirror.point()),
        parameterized,
    )
    .unwrap()
}

fn checkpoint_for(model: ModelState, kind: ModelKind, dim: usize) -> Checkpoint {
    Checkpoint {
        format: reflect::checkpoint::CHECKPOINT_FORMAT.into(),
        version: reflect::checkpoint::CHECKPOINT_VERSION,
        kind,
        attribute: "SYN".into(),
        dim,
        model,
        provenance: reflect::checkpoint::Provenance {
            train_set_sha256: String::new(),
            train_pairs: 0,
            val_pairs: 0,
            non_attribute_train: 0,
            vocab_size: 0,
            embeddings: None,
        },
        train_config: None,
        seed: 0,
        steps: 0,
        best_epoch: None,
    }
}

#[test]
fn files_reproduce_the_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = planted(dir.path());
    let direct = synth_generate(&spec).unwrap();
    let prep = workflow::prepare(&cfg).unwrap();
    assert_eq!(prep.table, direct.table);
    assert_eq!(prep.dataset, direct.dataset);
    assert_eq!(prep.non_attribute.train, direct.non_attribute.train);
    assert_eq!(prep.non_attribute.test, direct.non_attribute.test);
}

#[test]
fn oracle_checkpoint_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = planted(dir.path());
    let truth = synth_generate(&spec).unwrap().mirrors;
    let prep = workflow::prepare(&cfg).unwrap();
    for pm in [false, true] {
        let ck = checkpoint_for(ModelState::Reflection(oracle(&truth[0], pm)), ModelKind::Ref, spec.dim);
        let path = dir.path().join("oracle.json");
        ck.save(&path).unwrap();
        let doc = workflow::evaluate_checkpoint(&cfg, &prep, &Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(doc.accuracy, Some(1.0));
        assert_eq!(doc.stability, Some(1.0));
        assert_eq!(doc.vocab_size, prep.table.len());
        assert_eq!(doc.items.len(), 2 * 5 + 26);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = planted(dir.path());
    cfg.train.max_epochs = 3;
    for kind in [ModelKind::RefPm, ModelKind::Mlp, ModelKind::Diff, ModelKind::MeanDiffMinus] {
        cfg.model.kind = kind;
        cfg.model.hidden = Some(vec![5]);
        let prep = workflow::prepare(&cfg).unwrap();
        let trained = workflow::train_model(&cfg, &prep).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        trained.checkpoint.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, trained.checkpoint, "{kind}");
        assert_eq!(back.provenance.train_set_sha256.len(), 64);
    }
}

#[test]
fn checkpoint_version_and_format_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let m = oracle(&Mirror::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap(), false);
    let mut ck = checkpoint_for(ModelState::Reflection(m), ModelKind::Ref, 2);
    let path = dir.path().join("c.json");
    ck.version = 99;
    ck.save(&path).unwrap();
    assert!(Checkpoint::load(&path).unwrap_err().to_string().contains("version 99"));
    ck.version = reflect::checkpoint::CHECKPOINT_VERSION;
    ck.dim = 3;
    ck.save(&path).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn knowledge_baselines_have_no_stability() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = planted(dir.path());
    let prep = workflow::prepare(&cfg).unwrap();
    for (kind, stable) in [
        (ModelKind::Diff, false),
        (ModelKind::MeanDiff, false),
        (ModelKind::DiffPlus, true),
        (ModelKind::MeanDiffMinus, true),
    ] {
        cfg.model.kind = kind;
        let ck = workflow::train_model(&cfg, &prep).unwrap().checkpoint;
        let doc = workflow::evaluate_checkpoint(&cfg, &prep, &ck).unwrap();
        assert_eq!(doc.stability.is_some(), stable, "{kind}");
        assert!(doc.accuracy.is_some());
    }
}

#[test]
fn antonym_defaults() {
    assert_eq!(default_alpha("AN"), 1.5e-3);
    assert_eq!(default_alpha("antonym"), 1.5e-3);
    assert_eq!(default_alpha("MF"), 1e-4);
    assert_eq!(ModelKind::Ref.default_hidden(), vec![300]);
    assert_eq!(ModelKind::Mlp.default_hidden(), vec![300, 300]);
    for k in ModelKind::ALL {
        assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, format!("\"{}\"", k.name()));
    }
    assert!("diff*".parse::<ModelKind>().is_err());
}

#[test]
fn config_rejects_unknown_fields_and_mixed_sources() {
    let bad: Result<RunConfig, _> = serde_json::from_str(r#"{"attribute":"MF","model":{"kind":"ref"},"typo":1}"#);
    assert!(bad.is_err());
    let cfg: RunConfig = serde_json::from_str(
        r#"{"attribute":"MF","model":{"kind":"ref"},"synthetic":{},"embeddings":{"path":"e.txt"}}"#,
    )
    .unwrap();
    assert!(matches!(cfg.validate(), Err(reflect::Error::Usage(_))));
    let cfg: RunConfig = serde_json::from_str(r#"{"attribute":"AN","model":{"kind":"mlp"},"synthetic":{}}"#).unwrap();
    cfg.validate().unwrap();
    let r = cfg.resolved();
    assert_eq!(r.train.alpha, Some(1.5e-3));
    assert_eq!(r.model.hidden, Some(vec![300, 300]));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = planted(dir.path());
    cfg.train.max_epochs = 4;
    cfg.model.hidden = Some(vec![6]);
    let path = dir.path().join("resolved.json");
    reflect::fsutil::write_json(&path, &cfg.resolved()).unwrap();
    let again = RunConfig::load(&path).unwrap();
    let a = workflow::train_model(&cfg, &workflow::prepare(&cfg).unwrap()).unwrap();
    let b = workflow::train_model(&again, &workflow::prepare(&again).unwrap()).unwrap();
    assert_eq!(a.checkpoint.model, b.checkpoint.model);
    assert_eq!(a.history, b.history);
}

#[test]
fn chained_transfer_and_oov() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, cfg) = planted(dir.path());
    let truth = synth_generate(&spec).unwrap().mirrors;
    let prep = workflow::prepare(&cfg).unwrap();
    let model = ModelState::Reflection(oracle(&truth[0], false));
    let pair = &prep.dataset.pairs(Split::Test)[0];
    let words = vec![pair.source.clone(), "never-seen".to_string(), pair.source.to_uppercase()];
    let rows = workflow::transfer_words(&[&model], &prep.table, &words);
    assert_eq!(rows[0][0].output, pair.target);
    assert!(rows[0][0].mirror_distance.unwrap() > 0.0);
    assert!(rows[1][0].oov);
    assert_eq!(rows[1][0].output, "never-seen");
    assert_eq!(rows[2][0].output, pair.target);
    let twice = workflow::transfer_words(&[&model, &model], &prep.table, &words[..1]);
    assert_eq!(twice[0][0].output, pair.target);
    assert_eq!(twice[0][1].input, pair.target);
    assert_eq!(twice[0][1].output, pair.source);
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    for kind in [ModelKind::Ref, ModelKind::RefPm, ModelKind::Mlp] {
        let ok = gradcheck(kind, &GradCheckSettings::default()).unwrap();
        assert!(ok.max_relative_error < 1e-4, "{kind}: {}", ok.max_relative_error);
        let bad = gradcheck(
            kind,
            &GradCheckSettings {
                corrupt: true,
                ..GradCheckSettings::default()
            },
        )
        .unwrap();
        assert!(bad.max_relative_error > 0.5, "{kind}: {}", bad.max_relative_error);
    }
    assert!(gradcheck(ModelKind::Diff, &GradCheckSettings::default()).is_err());
}
