//! Black-box models: the prediction interface explained by LIME, a linear
//! scorer, softmax (logistic) regression trained with an L1 penalty, and a
//! bridge to models running in another process.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointCloud, Seed};

/// Weights at or below this magnitude count as zero.
pub const ZERO_WEIGHT: f64 = 1e-8;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data needs at least two classes, found {0}")]
    SingleClass(usize),
    #[error("training data has no labels")]
    Unlabelled,
    #[error("loss became non-finite at epoch {0}; lower the learning rate")]
    NonFiniteLoss(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("model process exited ({0})")]
    ProcessExited(String),
    #[error("protocol error: {reason}; line: `{excerpt}`")]
    Protocol { reason: String, excerpt: String },
    #[error("model process did not answer within {0:?}")]
    Timeout(Duration),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A classifier queried only through its predictions.
pub trait BlackBoxModel: Send + Sync {
    /// Input dimension, when known.
    fn n_features(&self) -> Option<usize>;

    /// One output row per input row; for classifiers each row is a
    /// probability vector over the classes.
    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError>;

    fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict(&[x.to_vec()])?.pop().unwrap_or_default())
    }
}

fn check_batch(batch: &[Vec<f64>], n: usize) -> Result<(), ModelError> {
    match batch.iter().find(|r| r.len() != n) {
        Some(r) => Err(ModelError::DimensionMismatch {
            expected: n,
            found: r.len(),
        }),
        None => Ok(()),
    }
}

/// Affine scores x·W + b (N × C weights), returned unnormalised.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: DMatrix<f64>, bias: Vec<f64>) -> Result<Self, ModelError> {
        validate_params(&weights, &bias)?;
        Ok(Self { weights, bias })
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let s = self.weights.tr_mul(&x);
        s.iter().zip(&self.bias).map(|(s, b)| s + b).collect()
    }
}

fn validate_params(weights: &DMatrix<f64>, bias: &[f64]) -> Result<(), ModelError> {
    if weights.ncols() != bias.len() {
        return Err(ModelError::InvalidModel(format!(
            "{} weight columns but {} biases",
            weights.ncols(),
            bias.len()
        )));
    }
    if weights.iter().chain(bias).any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidModel("non-finite parameter".into()));
    }
    Ok(())
}

impl BlackBoxModel for LinearModel {
    fn n_features(&self) -> Option<usize> {
        Some(self.weights.nrows())
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        check_batch(batch, self.weights.nrows())?;
        Ok(batch.iter().map(|x| self.scores(x)).collect())
    }
}

/// Softmax over affine scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub linear: LinearModel,
}

impl LogisticModel {
    pub fn new(weights: DMatrix<f64>, bias: Vec<f64>) -> Result<Self, ModelError> {
        if bias.len() < 2 {
            return Err(ModelError::InvalidModel(
                "a classifier needs at least two classes".into(),
            ));
        }
        Ok(Self {
            linear: LinearModel::new(weights, bias)?,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.linear.n_classes()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.linear.weights
    }

    /// Features whose weight exceeds [`ZERO_WEIGHT`] in some class.
    pub fn support(&self) -> Vec<usize> {
        let w = &self.linear.weights;
        (0..w.nrows())
            .filter(|&j| w.row(j).iter().any(|v| v.abs() > ZERO_WEIGHT))
            .collect()
    }

    fn probs(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.linear.scores(x))
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

impl BlackBoxModel for LogisticModel {
    fn n_features(&self) -> Option<usize> {
        self.linear.n_features()
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        check_batch(batch, self.linear.weights.nrows())?;
        Ok(batch.iter().map(|x| self.probs(x)).collect())
    }
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "type")]
    pub kind: String,
    /// N rows of C weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub n_classes: usize,
}

impl ModelFile {
    fn matrix(&self) -> Result<DMatrix<f64>, ModelError> {
        let n = self.weights.len();
        if self.bias.len() != self.n_classes || self.weights.iter().any(|r| r.len() != self.n_classes) {
            return Err(ModelError::InvalidModel(format!(
                "weights and bias must have n_classes = {} columns",
                self.n_classes
            )));
        }
        Ok(DMatrix::from_fn(n, self.n_classes, |i, j| self.weights[i][j]))
    }

    fn from_parts(kind: &str, weights: &DMatrix<f64>, bias: &[f64]) -> Self {
        Self {
            kind: kind.to_string(),
            weights: weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bias: bias.to_vec(),
            n_classes: bias.len(),
        }
    }
}

impl From<&LogisticModel> for ModelFile {
    fn from(m: &LogisticModel) -> Self {
        ModelFile::from_parts("logistic", &m.linear.weights, &m.linear.bias)
    }
}

impl From<&LinearModel> for ModelFile {
    fn from(m: &LinearModel) -> Self {
        ModelFile::from_parts("linear", &m.weights, &m.bias)
    }
}

/// A model loaded from a [`ModelFile`].
#[derive(Clone, Debug, PartialEq)]
pub enum StoredModel {
    Logistic(LogisticModel),
    Linear(LinearModel),
}

impl TryFrom<ModelFile> for StoredModel {
    type Error = ModelError;

    fn try_from(f: ModelFile) -> Result<Self, ModelError> {
        let w = f.matrix()?;
        match f.kind.as_str() {
            "logistic" => Ok(StoredModel::Logistic(LogisticModel::new(w, f.bias)?)),
            "linear" => Ok(StoredModel::Linear(LinearModel::new(w, f.bias)?)),
            other => Err(ModelError::InvalidModel(format!("unknown model type `{other}`"))),
        }
    }
}

impl BlackBoxModel for StoredModel {
    fn n_features(&self) -> Option<usize> {
        match self {
            StoredModel::Logistic(m) => m.n_features(),
            StoredModel::Linear(m) => m.n_features(),
        }
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        match self {
            StoredModel::Logistic(m) => m.predict(batch),
            StoredModel::Linear(m) => m.predict(batch),
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StoredModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str::<ModelFile>(&text)?.try_into()
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, file)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub l1_strength: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Standard deviation of the random initial weights.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    1e-3
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            l1_strength: 0.01,
            epochs: 500,
            lr: 0.1,
            init_scale: default_init_scale(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedLogistic {
    pub model: LogisticModel,
    /// Indices of features with a non-zero weight.
    pub ground_truth: Vec<usize>,
    /// Penalised objective before training and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Softmax regression with an L1 penalty on the weights (not the bias),
/// trained by full-batch proximal gradient descent with a fixed step.
/// Labels must be `0..C`.
pub fn train_l1_logistic(train: &PointCloud, params: &TrainParams, seed: Seed) -> Result<TrainedLogistic, ModelError> {
    let labels = train.labels().ok_or(ModelError::Unlabelled)?;
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(ModelError::SingleClass(classes.len()));
    }
    if !(params.l1_strength >= 0.0) || !(params.lr > 0.0) || !(params.init_scale >= 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "need l1_strength >= 0, lr > 0, init_scale >= 0 (got {}, {}, {})",
            params.l1_strength, params.lr, params.init_scale
        )));
    }
    let c = classes[classes.len() - 1] + 1;
    let (n, d) = (train.len(), train.dim());
    let x = train.to_matrix();
    let mut y = DMatrix::<f64>::zeros(n, c);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }

    let mut rng = seed.rng();
    let normal = Normal::new(0.0, params.init_scale.max(f64::MIN_POSITIVE)).expect("valid scale");
    let mut w = DMatrix::from_fn(d, c, |_, _| {
        if params.init_scale > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        }
    });
    let mut b = DVector::<f64>::zeros(c);

    let objective = |w: &DMatrix<f64>, b: &DVector<f64>| -> (f64, DMatrix<f64>) {
        // returns penalised loss and P − Y
        let mut scores = &x * w;
        for mut row in scores.row_iter_mut() {
            row += b.transpose();
        }
        let mut loss = 0.0;
        for (i, mut row) in scores.row_iter_mut().enumerate() {
            let m = row.max();
            let lse = m + row.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
            row.apply(|s| *s = (*s - lse).exp());
        }
        let penalty = params.l1_strength * w.iter().map(|v| v.abs()).sum::<f64>();
        (loss / n as f64 + penalty, scores - &y)
    };

    let (mut loss, mut residual) = objective(&w, &b);
    let mut history = vec![loss];
    let thresh = params.lr * params.l1_strength;
    for epoch in 0..params.epochs {
        let grad_w = x.tr_mul(&residual) / n as f64;
        let grad_b = residual.row_sum().transpose() / n as f64;
        w -= grad_w * params.lr;
        w.apply(|v| *v = v.signum() * (v.abs() - thresh).max(0.0));
        b -= grad_b * params.lr;
        (loss, residual) = objective(&w, &b);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(epoch));
        }
        history.push(loss);
    }

    let model = LogisticModel::new(w, b.as_slice().to_vec())?;
    Ok(TrainedLogistic {
        ground_truth: model.support(),
        model,
        loss_history: history,
    })
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(model: &dyn BlackBoxModel, data: &PointCloud) -> Result<f64, ModelError> {
    let labels = data.labels().ok_or(ModelError::Unlabelled)?;
    let rows: Vec<Vec<f64>> = data.points().map(<[f64]>::to_vec).collect();
    let out = model.predict(&rows)?;
    let hits = out.iter().zip(labels).filter(|(p, &l)| argmax(p) == l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Index of the largest entry (first on ties).
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    points: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    probs: Vec<Vec<f64>>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
}

/// A model served by an external process over newline-delimited JSON on
/// stdin/stdout. Requests are serialised through one pipe.
pub struct SubprocessModel {
    session: Mutex<Session>,
    n_features: Option<usize>,
    timeout: Duration,
}

const EXCERPT_LEN: usize = 120;

fn excerpt(line: &str) -> String {
    line.chars().take(EXCERPT_LEN).collect()
}

impl SubprocessModel {
    /// Launches `program args...`.
    pub fn spawn(command: &[String], n_features: Option<usize>, timeout: Duration) -> Result<Self, ModelError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ModelError::InvalidParameter("empty model command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            session: Mutex::new(Session {
                child,
                stdin,
                lines: rx,
                next_id: 0,
                broken: None,
            }),
            n_features,
            timeout,
        })
    }

    /// Number of requests answered so far.
    pub fn requests(&self) -> u64 {
        self.session.lock().map(|s| s.next_id).unwrap_or(0)
    }

    fn exited(session: &mut Session) -> ModelError {
        let status = match session.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            Ok(None) => "closed its output".to_string(),
            Err(e) => e.to_string(),
        };
        ModelError::ProcessExited(status)
    }
}

impl BlackBoxModel for SubprocessModel {
    fn n_features(&self) -> Option<usize> {
        self.n_features
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        if let Some(n) = self.n_features {
            check_batch(batch, n)?;
        }
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let session = &mut *guard;
        if let Some(reason) = &session.broken {
            return Err(ModelError::ProcessExited(format!(
                "session unusable after earlier failure: {reason}"
            )));
        }
        let id = session.next_id;
        let mut line = serde_json::to_string(&Request { id, points: batch })?;
        line.push('\n');
        if session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
            .is_err()
        {
            let err = Self::exited(session);
            session.broken = Some(err.to_string());
            return Err(err);
        }
        let reply = match session.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                session.broken = Some(e.to_string());
                return Err(e.into());
            }
            Err(RecvTimeoutError::Timeout) => {
                // a late answer would desynchronise later requests
                let _ = session.child.kill();
                session.broken = Some("timeout".into());
                return Err(ModelError::Timeout(self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let _ = session.child.wait();
                let err = Self::exited(session);
                session.broken = Some(err.to_string());
                return Err(err);
            }
        };
        let fail = |session: &mut Session, reason: String| {
            session.broken = Some(reason.clone());
            ModelError::Protocol {
                reason,
                excerpt: excerpt(&reply),
            }
        };
        let resp: Response = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => return Err(fail(session, format!("malformed response ({e})"))),
        };
        if resp.id != id {
            return Err(fail(session, format!("expected id {id}, got {}", resp.id)));
        }
        if resp.probs.len() != batch.len() {
            return Err(fail(
                session,
                format!("{} rows for {} points", resp.probs.len(), batch.len()),
            ));
        }
        if resp.probs.iter().flatten().any(|p| !p.is_finite()) {
            return Err(fail(session, "non-finite probability".into()));
        }
        session.next_id += 1;
        Ok(resp.probs)
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        if let Ok(session) = self.session.get_mut() {
            let _ = session.child.kill();
            let _ = session.child.wait();
        }
    }
}
