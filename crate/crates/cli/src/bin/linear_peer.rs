//! A bridge peer serving `y = b + Σ w_j x_j` on its standard streams.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "melime-linear-peer", about = "Serve a linear model over the bridge protocol")]
struct Args {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    intercept: f64,
    /// One weight per feature.
    #[arg(required = true, allow_negative_numbers = true)]
    weights: Vec<f64>,
}

fn answer(line: &str, weights: &[f64], intercept: f64) -> Value {
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"id": null, "error": format!("bad request: {e}")}),
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    let Some(rows) = req.get("x").and_then(Value::as_array) else {
        return json!({"id": id, "error": "missing x"});
    };
    let mut ys = Vec::with_capacity(rows.len());
    for row in rows {
        let Some(vals) = row.as_array().map(|r| r.iter().filter_map(Value::as_f64).collect::<Vec<_>>()) else {
            return json!({"id": id, "error": "row is not a list"});
        };
        if vals.len() != weights.len() {
            return json!({"id": id, "error": format!("expected {} features, got {}", weights.len(), vals.len())});
        }
        ys.push(vec![intercept + vals.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>()]);
    }
    json!({"id": id, "y": ys})
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let hello = json!({"melime_bridge": 1, "task": "regression", "n_features": args.weights.len(), "classes": []});
    if writeln!(out, "{hello}").and_then(|_| out.flush()).is_err() {
        return ExitCode::FAILURE;
    }
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let resp = answer(&line, &args.weights, args.intercept);
        if writeln!(out, "{resp}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
