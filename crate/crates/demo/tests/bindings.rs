use causal_mia_demo::{bound, explore, halfwidth};

#[test]
fn explorer_returns_three_curves() {
    let v = explore(30, 60, 1.0, 20.0, 3).unwrap();
    for k in ["onerun", "raw", "corrected"] {
        let auc = v[k]["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc), "{k}");
        let pts = v[k]["points"].as_array().unwrap();
        assert_eq!(pts.last().unwrap(), &serde_json::json!([1.0, 1.0]));
        assert!(pts.len() <= 401);
    }
    assert_eq!(v, explore(30, 60, 1.0, 20.0, 3).unwrap());
    assert!(explore(0, 60, 1.0, 20.0, 3).is_err());
}

#[test]
fn bound_and_halfwidth() {
    let b = bound(0.0, 0.0).unwrap();
    for p in b["points"].as_array().unwrap() {
        assert!((p[0].as_f64().unwrap() - p[1].as_f64().unwrap()).abs() < 1e-15);
    }
    assert!(bound(-1.0, 0.0).is_err());
    let h = halfwidth(100, 100, 2.0).unwrap();
    assert!((h["halfwidth"].as_f64().unwrap() - 0.4).abs() < 1e-15);
    assert!(halfwidth(0, 1, 1.0).is_err());
}
