mod common;

use multitypical::io::{
    self, load_model, read_csv, save_model, write_intersection_matrix, write_learning_curve,
    write_mode_weights, write_nll_values, write_projections, write_test_outcomes, CalibrationJson,
    ModelJson,
};
use multitypical_core::ensemble::IntersectionMatrix;
use multitypical_core::mixture::{random_base_distribution, BaseDistributionConfig};
use multitypical_core::training::LearningCurve;
use multitypical_core::typicality::{CalibratedModel, CalibrationSettings};
use multitypical_core::{GaussianComponent, MixtureModel};

fn model(seed: u64) -> MixtureModel {
    let cfg = BaseDistributionConfig {
        dim: 7,
        num_components: 5,
        ..BaseDistributionConfig::reference()
    };
    random_base_distribution(&cfg, seed).unwrap()
}

#[test]
fn model_json_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let m = model(seed);
        let path = dir.path().join(format!("m{seed}.json"));
        save_model(&path, &m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let x = m.sample(50, seed).unwrap();
        assert_eq!(
            back.neg_log_densities(&x).unwrap(),
            m.neg_log_densities(&x).unwrap()
        );
    }
}

#[test]
fn model_json_rejects_inconsistent_files() {
    let m = model(1);
    let good = ModelJson::from(&m);
    let mut bad = good.clone();
    bad.format_version = 2;
    assert!(bad.into_model().is_err());
    let mut bad = good.clone();
    bad.num_components = 4;
    assert!(bad.into_model().is_err());
    let mut bad = good.clone();
    bad.dim = 6;
    assert!(bad.into_model().is_err());
    let mut bad = good.clone();
    bad.components[0].log_var[0] = f64::NAN;
    assert!(bad.into_model().is_err());

    let mut text = serde_json::to_value(&good).unwrap();
    text["extra"] = serde_json::Value::Bool(true);
    assert!(serde_json::from_value::<ModelJson>(text).is_err());

    let dir = tempfile::tempdir().unwrap();
    assert!(load_model(&dir.path().join("missing.json")).is_err());
}

#[test]
fn zero_weight_models_are_not_saved() {
    let c = GaussianComponent::standard(1).unwrap();
    let m =
        MixtureModel::from_normalized(vec![c.clone(), c], vec![0.0, f64::NEG_INFINITY]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(save_model(&dir.path().join("z.json"), &m).is_err());
}

#[test]
fn calibration_json_round_trip() {
    let settings = CalibrationSettings {
        entropy_samples: 5000,
        num_sequences: 2000,
        ..Default::default()
    };
    let cal = CalibratedModel::calibrate(model(2), &settings, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&dir.path().join("m.json"), &cal.model).unwrap();
    let json = CalibrationJson::new("q1", "m.json", &cal);
    io::write_json(&dir.path().join("c.json"), &json).unwrap();
    let back: CalibrationJson = io::read_json(&dir.path().join("c.json")).unwrap();
    assert_eq!(back, json);
    assert_eq!(back.load(dir.path()).unwrap(), cal);
}

fn header(path: &std::path::Path) -> Vec<String> {
    read_csv(path).unwrap().0
}

#[test]
fn csv_exports_have_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);

    let curve = LearningCurve {
        train_nll: vec![3.0, 2.5],
        test_nll: vec![3.1, 2.7],
    };
    write_learning_curve(&p("curve.csv"), &curve).unwrap();
    let (h, rows) = read_csv(&p("curve.csv")).unwrap();
    assert_eq!(h, ["epoch", "train_nll", "test_nll"]);
    assert_eq!(rows, [["0", "3", "3.1"], ["1", "2.5", "2.7"]]);

    write_test_outcomes(&p("out.csv"), &[(0.2, 0.5, true), (0.9, 0.5, false)]).unwrap();
    let (h, rows) = read_csv(&p("out.csv")).unwrap();
    assert_eq!(h, ["sequence_id", "score", "epsilon", "accepted"]);
    assert_eq!(rows[1], ["1", "0.9", "0.5", "false"]);

    let m = model(0);
    write_mode_weights(&p("w.csv"), &[("p".into(), &m)]).unwrap();
    let (h, rows) = read_csv(&p("w.csv")).unwrap();
    assert_eq!(h, ["model", "component", "weight"]);
    assert_eq!(rows.len(), 5);
    let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);

    write_nll_values(&p("nll.csv"), &[("p".into(), vec![1.0, 2.0])]).unwrap();
    assert_eq!(header(&p("nll.csv")), ["source", "nll"]);

    write_projections(&p("proj.csv"), &[(0, "p".into(), 0.5, -0.5)]).unwrap();
    assert_eq!(header(&p("proj.csv")), ["basis", "source", "x", "y"]);
    let raw = std::fs::read_to_string(p("proj.csv")).unwrap();
    assert_eq!(raw, "basis,source,x,y\n0,p,0.5,-0.5\n");
}

#[test]
fn intersection_matrix_csv_layout() {
    let labels: Vec<String> = ["p", "q1"].iter().map(|s| s.to_string()).collect();
    let m = IntersectionMatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        entries: vec![95.27, 40.0, 93.04, 96.0],
        samples_per_cell: 1000,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_intersection_matrix(&path, &m).unwrap();
    let raw = std::fs::read_to_string(&path).unwrap();
    assert_eq!(raw, "typical_set,p,q1\nT(p),95.3,40.0\nT(q1),93.0,96.0\n");
}

#[test]
fn floats_survive_json_text_exactly() {
    let values = [
        0.1,
        1.0 / 3.0,
        f64::MIN_POSITIVE,
        1e300,
        -2.5e-310,
        std::f64::consts::SQRT_2,
    ];
    let text = serde_json::to_string(&values).unwrap();
    let back: Vec<f64> = serde_json::from_str(&text).unwrap();
    for (a, b) in values.iter().zip(&back) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
