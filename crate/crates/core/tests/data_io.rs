use std::fs;

use riskfed::data::{self, Label};
use riskfed::Error;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn two_rows_keep_their_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "feature_0,feature_1,label\n1.5,-2,1\n3e-1,4,-1\n");
    let d = data::load_csv::<f64>(&p).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.records()[0].features, vec![1.5, -2.0]);
    assert_eq!(d.records()[1].features, vec![0.3, 4.0]);
    assert_eq!(d.records()[0].label, Label::Positive);
    assert_eq!(d.records()[1].label, Label::Negative);
    assert_eq!(d.records()[1].sector, 0);
}

#[test]
fn write_then_load_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let original = data::generate_synthetic::<f64>(200, 5, 3, 9).unwrap();
    let first = dir.path().join("first.csv");
    data::write_csv(&original, &first).unwrap();
    let loaded = data::load_csv::<f64>(&first).unwrap();
    assert_eq!(loaded, original);
    let second = dir.path().join("second.csv");
    data::write_csv(&loaded, &second).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn hand_written_file_round_trips_at_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "h.csv", "feature_0,feature_1,label,sector\n0.1,-7,1,2\n");
    let out = dir.path().join("out.csv");
    data::write_csv(&data::load_csv::<f64>(&p).unwrap(), &out).unwrap();
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "feature_0,feature_1,label,sector\n1.0000000000000001e-1,-7.0000000000000000e0,1,2\n"
    );
}

#[test]
fn bad_cells_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        ("feature_0,label\n1,1\n2,0\n", "line 3"),
        ("feature_0,label\n1,1\nNaN,1\n", "line 3"),
        ("feature_0,label\n,1\n", "line 2"),
        ("feature_0,label\n1\n", "line 2"),
    ] {
        let p = write(&dir, "bad.csv", body);
        let err = data::load_csv::<f64>(&p).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{body:?}: {err:?}");
        assert!(err.to_string().contains(needle), "{body:?}: {err}");
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = data::load_csv::<f64>("/nonexistent/riskfed.csv").unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

/// Full-batch logistic regression by gradient descent, kept independent of
/// the crate's optimizers.
fn logistic_fit(x: &[Vec<f64>], y: &[f64], iters: usize, lr: f64) -> Vec<f64> {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![0.0; d + 1];
    for _ in 0..iters {
        let mut g = vec![0.0; d + 1];
        for (xi, &yi) in x.iter().zip(y) {
            let s: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
            let coef = -yi / (1.0 + (yi * s).exp());
            for j in 0..d {
                g[j] += coef * xi[j];
            }
            g[d] += coef;
        }
        for j in 0..=d {
            w[j] -= lr * g[j] / n;
        }
    }
    w
}

#[test]
fn generator_is_learnable_by_a_linear_model() {
    let all = data::generate_synthetic::<f64>(10_000, 130, 1, 3).unwrap();
    let split = data::temporal_split(&all, 0.8).unwrap();
    let x: Vec<Vec<f64>> = split.train.iter().map(|r| r.features.clone()).collect();
    let y: Vec<f64> = split.train.iter().map(|r| r.label.as_int() as f64).collect();
    let w = logistic_fit(&x, &y, 100, 1.0);
    let weights = riskfed::model::WeightVector::new(w).unwrap();
    let acc = riskfed::metrics::accuracy(&riskfed::LinearModel, &weights, &split.test).unwrap();
    assert!(acc > 0.75, "held-out accuracy {acc}");
}
