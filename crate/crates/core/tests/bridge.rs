use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use melime::blackbox::{BlackBox, BridgeModel, FnBlackBox};
use melime::generators::KdeModel;
use melime::local_models::SurrogateFamily;
use melime::{explain, BlackBoxError, Dataset, EngineConfig, Instance, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Serves one connection: sends `handshake`, then answers each request with
/// `respond(id, rows)`, or stays silent when it returns `None`.
fn peer<F>(handshake: Value, respond: F) -> String
where
    F: Fn(u64, &[Vec<f64>]) -> Option<Value> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        writeln!(out, "{handshake}").unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let req: Value = serde_json::from_str(&line).unwrap();
            let id = req["id"].as_u64().unwrap();
            let rows: Vec<Vec<f64>> = serde_json::from_value(req["x"].clone()).unwrap();
            match respond(id, &rows) {
                Some(v) => {
                    if writeln!(out, "{v}").is_err() {
                        break;
                    }
                }
                None => thread::sleep(Duration::from_secs(5)),
            }
        }
    });
    format!("tcp://{addr}")
}

fn regression_handshake(d: usize) -> Value {
    json!({"melime_bridge": 1, "task": "regression", "n_features": d, "classes": []})
}

fn doubling_peer() -> String {
    peer(regression_handshake(2), |id, rows| {
        Some(json!({"id": id, "y": rows.iter().map(|r| vec![2.0 * r[0]]).collect::<Vec<_>>()}))
    })
}

#[test]
fn bridge_matches_in_process_model() {
    let bb = BridgeModel::connect(&doubling_peer()).unwrap().into_black_box(None).unwrap();
    let local = FnBlackBox::new(|x: &[f64]| 2.0 * x[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let xs: Vec<Instance> = (0..n)
            .map(|_| Instance::new(vec![rng.random_range(-1e3..1e3), rng.random_range(-1.0..1.0)]).unwrap())
            .collect();
        let a = bb.predict_batch(&xs).unwrap();
        let b = local.predict_batch(&xs).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-9, "{p} vs {q}");
        }
    }
}

#[test]
fn explanation_over_bridge_equals_in_process() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = (0..200).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let train = Arc::new(Dataset::from_rows(rows).unwrap());
    let kde = KdeModel::fit(train, Some(0.3)).unwrap();
    let x = Instance::new(vec![0.5, -0.5]).unwrap();
    let cfg = EngineConfig {
        r: 1.0,
        seed: 3,
        ..Default::default()
    };
    let bb = BridgeModel::connect(&doubling_peer()).unwrap().into_black_box(None).unwrap();
    let local = FnBlackBox::new(|x: &[f64]| 2.0 * x[0]);
    let remote = explain(&bb, &x, &kde, &Transform::Identity, SurrogateFamily::linear(), &cfg).unwrap();
    let inproc = explain(&local, &x, &kde, &Transform::Identity, SurrogateFamily::linear(), &cfg).unwrap();
    assert_eq!(remote.to_json().to_string(), inproc.to_json().to_string());
}

#[test]
fn peer_error_surfaces_with_id() {
    let addr = peer(regression_handshake(1), |id, rows| {
        if id == 7 {
            Some(json!({"id": id, "error": "shape"}))
        } else {
            Some(json!({"id": id, "y": rows.iter().map(|r| vec![r[0]]).collect::<Vec<_>>()}))
        }
    });
    let model = BridgeModel::connect(&addr).unwrap();
    for _ in 0..7 {
        model.predict_rows(&[vec![1.0]]).unwrap();
    }
    match model.predict_rows(&[vec![1.0]]) {
        Err(BlackBoxError::Peer { id, message }) => {
            assert_eq!(id, 7);
            assert_eq!(message, "shape");
        }
        other => panic!("expected peer error, got {other:?}"),
    }
    // The connection stays usable after a peer-reported error.
    assert_eq!(model.predict_rows(&[vec![3.0]]).unwrap(), vec![vec![3.0]]);
}

#[test]
fn version_mismatch_rejected() {
    let addr = peer(json!({"melime_bridge": 2, "task": "regression", "n_features": 1}), |_, _| None);
    match BridgeModel::connect(&addr) {
        Err(BlackBoxError::VersionMismatch { found: 2, expected: 1 }) => {}
        other => panic!("expected version mismatch, got {other:?}"),
    }
}

#[test]
fn silent_peer_times_out() {
    let addr = peer(regression_handshake(1), |_, _| None);
    let model = BridgeModel::connect_with_timeout(&addr, Duration::from_millis(200)).unwrap();
    match model.predict_rows(&[vec![0.0]]) {
        Err(BlackBoxError::Timeout(t)) => assert_eq!(t, Duration::from_millis(200)),
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn malformed_responses_rejected() {
    let addr = peer(regression_handshake(1), |id, _| match id {
        0 => Some(json!({"id": id, "y": [[1.0], [2.0]]})),
        1 => Some(json!({"id": 99, "y": [[1.0]]})),
        _ => Some(json!({"id": id, "y": [["x"]]})),
    });
    let model = BridgeModel::connect(&addr).unwrap();
    for _ in 0..3 {
        assert!(matches!(model.predict_rows(&[vec![0.0]]), Err(BlackBoxError::Malformed(_))));
    }
}

#[test]
fn dimension_checked_before_sending() {
    let model = BridgeModel::connect(&doubling_peer()).unwrap();
    assert!(matches!(
        model.predict_rows(&[vec![1.0]]),
        Err(BlackBoxError::DimensionMismatch { expected: 2, actual: 1 })
    ));
}

#[test]
fn classification_column_selected_by_label() {
    let hs = json!({"melime_bridge": 1, "task": "classification", "n_features": 1, "classes": ["a", "b"]});
    let addr = peer(hs.clone(), |id, rows| {
        let y: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0 - r[0], r[0]]).collect();
        Some(json!({"id": id, "y": y}))
    });
    let bb = BridgeModel::connect(&addr).unwrap().into_black_box(Some("b")).unwrap();
    let y = bb.predict_batch(&[Instance::new(vec![0.25]).unwrap()]).unwrap();
    assert_eq!(y, vec![0.25]);

    let addr = peer(hs, |_, _| None);
    let err = BridgeModel::connect(&addr).unwrap().into_black_box(Some("zebra")).unwrap_err();
    assert!(matches!(err, BlackBoxError::UnknownClass(_)));
}

#[test]
fn shell_command_peer() {
    // A constant peer written in plain sh: one handshake, one answer.
    let script = r#"echo '{"melime_bridge":1,"task":"regression","n_features":1}'; read line; echo '{"id":0,"y":[[5]]}'"#;
    let model = BridgeModel::connect(script).unwrap();
    assert_eq!(model.predict_rows(&[vec![1.0]]).unwrap(), vec![vec![5.0]]);
}
