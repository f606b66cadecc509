use ekmanlab::pipeline::PredictResponse;
use ekmanlab::CoarseLabel;
use ekmanlab_web::{model_kinds, normalize_trace, Demo};
use serde_json::Value;

#[test]
fn trains_and_predicts_every_kind() {
    let kinds = model_kinds();
    assert_eq!(kinds.len(), 11);
    for kind in &kinds {
        let demo = Demo::train(kind, 300, 1).unwrap();
        let r: PredictResponse = serde_json::from_str(&demo.predict_json("I love this so much!").unwrap()).unwrap();
        assert_eq!(r.model_name, *kind);
        let total: f64 = r.probabilities.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() <= 1e-6, "{kind}");
    }
}

#[test]
fn logreg_demo_recognizes_joy() {
    let demo = Demo::train("logreg", 800, 3).unwrap();
    let r: PredictResponse = serde_json::from_str(&demo.predict_json("thank you, this is wonderful").unwrap()).unwrap();
    assert_eq!(r.label, CoarseLabel::Joy);
    assert!(demo.predict_json("").unwrap().contains(r#""empty_input":true"#));
}

#[test]
fn rejects_bad_requests() {
    assert!(Demo::train("knn", 300, 1).is_err());
    assert!(Demo::train("nb", 10, 1).is_err());
    assert!(Demo::train("nb", 1_000_000, 1).is_err());
    assert!(Demo::load(b"not a bundle").is_err());
}

#[test]
fn loads_bundle_bytes() {
    let demo = Demo::train("nb", 300, 2).unwrap();
    let bytes = demo.bundle().to_bytes().unwrap();
    let loaded = Demo::load(&bytes).unwrap();
    let a: Value = serde_json::from_str(&demo.predict_json("so gross").unwrap()).unwrap();
    let b: Value = serde_json::from_str(&loaded.predict_json("so gross").unwrap()).unwrap();
    assert_eq!(a["probabilities"], b["probabilities"]);
}

#[test]
fn trace_shows_each_stage() {
    let v: Value = serde_json::from_str(&normalize_trace("I can't believe it!!! 😄")).unwrap();
    for key in ["minimal", "lowercase", "emoji", "contractions", "tokens", "lemmas", "filtered"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["contractions"].as_str().unwrap().contains("cannot") || v["contractions"].as_str().unwrap().contains("can not"));
    assert!(!v["emoji"].as_str().unwrap().contains('😄'));
}
