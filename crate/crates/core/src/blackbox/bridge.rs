//! Newline-delimited JSON bridge to an external model process.
//!
//! The peer speaks first with a handshake line
//! `{"melime_bridge":1,"task":"regression"|"classification","n_features":d,"classes":[...]}`.
//! Each request `{"id":k,"x":[[...],...]}` is answered by `{"id":k,"y":[[...],...]}`
//! (one inner list per row: length 1 for regression, one probability per
//! class for classification) or `{"id":k,"error":"msg"}`. One message per
//! line; both sides flush after every line.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BlackBox, BlackBoxError, Task};
use crate::types::Instance;

pub const BRIDGE_PROTOCOL_VERSION: i64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// What the peer declared about itself.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeHandshake {
    pub task: Task,
    pub n_features: usize,
    pub classes: Vec<String>,
}

impl BridgeHandshake {
    fn parse(line: &str) -> Result<Self, BlackBoxError> {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| BlackBoxError::Malformed(format!("handshake is not JSON: {e}")))?;
        let version = v
            .get("melime_bridge")
            .and_then(Value::as_i64)
            .ok_or_else(|| BlackBoxError::Malformed("handshake lacks \"melime_bridge\"".into()))?;
        if version != BRIDGE_PROTOCOL_VERSION {
            return Err(BlackBoxError::VersionMismatch {
                found: version,
                expected: BRIDGE_PROTOCOL_VERSION,
            });
        }
        let task = match v.get("task").and_then(Value::as_str) {
            Some("regression") => Task::Regression,
            Some("classification") => Task::Classification,
            other => return Err(BlackBoxError::Malformed(format!("unknown task {other:?}"))),
        };
        let n_features = v
            .get("n_features")
            .and_then(Value::as_u64)
            .filter(|&d| d > 0)
            .ok_or_else(|| BlackBoxError::Malformed("handshake lacks positive \"n_features\"".into()))?
            as usize;
        let classes = match v.get("classes") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|c| match c {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    other => Err(BlackBoxError::Malformed(format!("bad class label {other}"))),
                })
                .collect::<Result<_, _>>()?,
            Some(other) => return Err(BlackBoxError::Malformed(format!("bad classes {other}"))),
        };
        if task == Task::Classification && classes.len() < 2 {
            return Err(BlackBoxError::Malformed(
                "classification handshake needs at least two classes".into(),
            ));
        }
        Ok(Self {
            task,
            n_features,
            classes,
        })
    }

    /// Values per response row.
    pub fn outputs(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => self.classes.len(),
        }
    }
}

struct Connection {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    child: Option<Child>,
}

impl Connection {
    fn recv_line(&self, timeout: Duration) -> Result<String, BlackBoxError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(BlackBoxError::Io(e)),
                Err(RecvTimeoutError::Timeout) => return Err(BlackBoxError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(BlackBoxError::Disconnected),
            }
        }
    }

    fn send_line(&mut self, line: &str) -> Result<(), BlackBoxError> {
        let w = self.writer.as_mut().ok_or(BlackBoxError::Disconnected)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        // Closing the peer's input is its signal to exit.
        self.writer.take();
        if let Some(child) = self.child.as_mut() {
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A live connection to a bridge peer. Requests on one connection are
/// strictly sequential.
pub struct BridgeModel {
    conn: Mutex<Connection>,
    handshake: BridgeHandshake,
    timeout: Duration,
}

impl std::fmt::Debug for BridgeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeModel")
            .field("handshake", &self.handshake)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl BridgeModel {
    /// `tcp://host:port` connects over TCP; anything else is run as a shell
    /// command speaking the protocol on its standard streams.
    pub fn connect(target: &str) -> Result<Self, BlackBoxError> {
        Self::connect_with_timeout(target, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(target: &str, timeout: Duration) -> Result<Self, BlackBoxError> {
        match target.strip_prefix("tcp://") {
            Some(addr) => Self::connect_tcp(addr, timeout),
            None => {
                let mut cmd = Command::new("sh");
                cmd.arg("-c").arg(target);
                Self::spawn(cmd, timeout)
            }
        }
    }

    pub fn spawn(mut command: Command, timeout: Duration) -> Result<Self, BlackBoxError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::from_streams(stdout, stdin, Some(child), timeout)
    }

    pub fn connect_tcp(addr: &str, timeout: Duration) -> Result<Self, BlackBoxError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Self::from_streams(reader, stream, None, timeout)
    }

    /// Wraps an already-open pair of streams and reads the handshake.
    pub fn from_streams<R, W>(
        reader: R,
        writer: W,
        child: Option<Child>,
        timeout: Duration,
    ) -> Result<Self, BlackBoxError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let conn = Connection {
            writer: Some(Box::new(writer)),
            lines: rx,
            next_id: 0,
            child,
        };
        let handshake = BridgeHandshake::parse(&conn.recv_line(timeout)?)?;
        Ok(Self {
            conn: Mutex::new(conn),
            handshake,
            timeout,
        })
    }

    pub fn handshake(&self) -> &BridgeHandshake {
        &self.handshake
    }

    /// One request/response round trip; rows are validated against the handshake.
    pub fn predict_rows(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        for x in xs {
            if x.len() != self.handshake.n_features {
                return Err(BlackBoxError::DimensionMismatch {
                    expected: self.handshake.n_features,
                    actual: x.len(),
                });
            }
        }
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let id = conn.next_id;
        conn.next_id += 1;
        let request = json!({"id": id, "x": xs});
        conn.send_line(&request.to_string())?;
        let line = conn.recv_line(self.timeout)?;
        drop(conn);
        self.parse_response(id, &line, xs.len())
    }

    fn parse_response(&self, id: u64, line: &str, rows: usize) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| BlackBoxError::Malformed(format!("response is not JSON: {e}")))?;
        let obj = v
            .as_object()
            .ok_or_else(|| BlackBoxError::Malformed("response is not an object".into()))?;
        match obj.get("id") {
            Some(Value::Null) | None => {}
            Some(got) if got.as_u64() == Some(id) => {}
            Some(got) => {
                return Err(BlackBoxError::Malformed(format!(
                    "response id {got} does not match request {id}"
                )))
            }
        }
        if let Some(err) = obj.get("error") {
            let message = match err {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return Err(BlackBoxError::Peer { id, message });
        }
        if obj.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(BlackBoxError::Malformed(format!("response lacks id {id}")));
        }
        let ys = obj
            .get("y")
            .and_then(Value::as_array)
            .ok_or_else(|| BlackBoxError::Malformed("response lacks \"y\"".into()))?;
        if ys.len() != rows {
            return Err(BlackBoxError::Malformed(format!(
                "expected {rows} rows, got {}",
                ys.len()
            )));
        }
        let width = self.handshake.outputs();
        ys.iter()
            .map(|row| {
                let row: Vec<f64> = row
                    .as_array()
                    .ok_or_else(|| BlackBoxError::Malformed("response row is not a list".into()))?
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .filter(|f| f.is_finite())
                            .ok_or_else(|| BlackBoxError::Malformed(format!("non-numeric output {v}")))
                    })
                    .collect::<Result<_, _>>()?;
                if row.len() != width {
                    return Err(BlackBoxError::Malformed(format!(
                        "expected {width} outputs per row, got {}",
                        row.len()
                    )));
                }
                if self.handshake.task == Task::Classification {
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return Err(BlackBoxError::Malformed(format!(
                            "class probabilities sum to {sum}"
                        )));
                    }
                }
                Ok(row)
            })
            .collect()
    }

    /// Scalar black box over one output column: the regression value, or the
    /// probability of `class`.
    pub fn into_black_box(self, class: Option<&str>) -> Result<BridgeBlackBox, BlackBoxError> {
        let column = match (self.handshake.task, class) {
            (Task::Regression, None) => 0,
            (Task::Regression, Some(c)) => return Err(BlackBoxError::UnknownClass(c.to_owned())),
            (Task::Classification, Some(c)) => self
                .handshake
                .classes
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| BlackBoxError::UnknownClass(c.to_owned()))?,
            (Task::Classification, None) => {
                return Err(BlackBoxError::UnknownClass(
                    "<none: classification peers need a target class>".into(),
                ))
            }
        };
        Ok(BridgeBlackBox { model: self, column })
    }
}

/// A [`BridgeModel`] reduced to one scalar output.
#[derive(Debug)]
pub struct BridgeBlackBox {
    model: BridgeModel,
    column: usize,
}

impl BridgeBlackBox {
    pub fn handshake(&self) -> &BridgeHandshake {
        self.model.handshake()
    }
}

impl BlackBox<Instance> for BridgeBlackBox {
    fn predict_batch(&self, xs: &[Instance]) -> Result<Vec<f64>, BlackBoxError> {
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.values().to_vec()).collect();
        Ok(self
            .model
            .predict_rows(&rows)?
            .into_iter()
            .map(|r| r[self.column])
            .collect())
    }
}
