//! Training of the pair networks: balanced labels, intra-pair shuffling,
//! transform perturbation, minibatch Adam on the exact cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{patch_input, PairModel, SiameseModel, TwinModel};
use super::net::NetConfig;
use super::{sigmoid_pair, twin_symmetrized, Decision, DisambigError};
use crate::foa::{build_boundary_pairs, build_quad, Corner, FoaError};
use crate::synthgen::ForgeryRecord;
use crate::warp::WarpedPatch;

/// A network input stored in single precision to keep large sample sets in
/// memory.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTensor(Vec<f32>);

impl PatchTensor {
    pub fn from_patch(patch: &WarpedPatch) -> Self {
        Self(patch_input(patch).into_iter().map(|v| v as f32).collect())
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Quadruple `(P1, ~P1, P2, ~P2)` with its hypothesis label.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinSample {
    pub patches: [PatchTensor; 4],
    pub label: Decision,
}

/// Ordered boundary pair; `first_is_target` is the training label.
#[derive(Clone, Debug, PartialEq)]
pub struct SiameseSample {
    pub b1: PatchTensor,
    pub b2: PatchTensor,
    pub first_is_target: bool,
}

impl TwinSample {
    /// Builds the quadruple from ground truth. Under H1 the target is taken as
    /// the first region. The true transform is perturbed when `perturb` is set.
    pub fn from_record<R: Rng + ?Sized>(
        record: &ForgeryRecord,
        label: Decision,
        perturb: bool,
        rng: &mut R,
    ) -> Result<Self, FoaError> {
        let (s, t) = (record.source_pixels(), record.target_pixels());
        let (p1, p2, theta) = match label {
            Decision::H0 => (s, t, record.transform),
            Decision::H1 => (t, s, record.transform.invert()),
        };
        let theta = if perturb {
            theta.perturb(rng).unwrap_or(theta)
        } else {
            theta
        };
        let q = build_quad(&record.image, &p1, &p2, &theta)?;
        Ok(Self {
            patches: [&q.x1, &q.x2, &q.x3, &q.x4].map(PatchTensor::from_patch),
            label,
        })
    }
}

impl SiameseSample {
    /// Corner pair `[B_S, B_T]` (label 0) or `[B_T, B_S]` (label 1).
    pub fn from_record(
        record: &ForgeryRecord,
        first_is_target: bool,
        corner: Corner,
    ) -> Result<Self, FoaError> {
        let (s, t) = (record.source_pixels(), record.target_pixels());
        let (pairs_s, pairs_t) = build_boundary_pairs(&record.image, &s, &t, &record.transform)?;
        let pairs = if first_is_target { pairs_t } else { pairs_s };
        let pair = pairs.into_iter().find(|p| p.corner == corner).expect("all corners present");
        Ok(Self {
            b1: PatchTensor::from_patch(&pair.b1),
            b2: PatchTensor::from_patch(&pair.b2),
            first_is_target,
        })
    }
}

/// Twin samples with alternating labels; records whose regions are too small
/// are skipped.
pub fn twin_samples<'a>(
    records: impl IntoIterator<Item = &'a ForgeryRecord>,
    perturb: bool,
    seed: u64,
) -> Vec<TwinSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in records {
        let label = if out.len() % 2 == 0 { Decision::H0 } else { Decision::H1 };
        if let Ok(s) = TwinSample::from_record(r, label, perturb, &mut rng) {
            out.push(s);
        }
    }
    out
}

/// Siamese samples with alternating order labels and a random corner each.
pub fn siamese_samples<'a>(records: impl IntoIterator<Item = &'a ForgeryRecord>, seed: u64) -> Vec<SiameseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in records {
        let corner = Corner::ALL[rng.gen_range(0..4)];
        if let Ok(s) = SiameseSample::from_record(r, out.len() % 2 == 1, corner) {
            out.push(s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of the samples held out for the per-epoch validation accuracy.
    pub validation_fraction: f64,
    /// Randomly swap the members of each pair (twin only).
    pub shuffle_pairs: bool,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            shuffle_pairs: true,
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DisambigError> {
        self.net.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DisambigError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DisambigError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DisambigError::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_accuracy)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DisambigError> {
        let io = |source: std::io::Error| DisambigError::Io { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for e in &self.epochs {
            w.serialize(e).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Cross-entropy of the twin softmax for inputs `(x1, x2, x3, x4)` in the
/// given order, and its gradient with respect to every parameter.
pub fn twin_loss_and_grad(model: &PairModel, inputs: [&[f64]; 4], label: Decision) -> (f64, Vec<f64>) {
    let (l, p) = (model.layout(), model.params());
    let side = model.config().input_size;
    let fwd: Vec<_> = inputs.iter().map(|x| l.features(p, x, side)).collect();
    let (z0, h0) = l.pair_logit(p, &fwd[0].0, &fwd[1].0);
    let (z1, h1) = l.pair_logit(p, &fwd[2].0, &fwd[3].0);
    let (f0, f1) = sigmoid_pair(z0 - z1);
    let (loss, y0) = match label {
        Decision::H0 => (softplus(z1 - z0), 1.0),
        Decision::H1 => (softplus(z0 - z1), 0.0),
    };
    let mut g = vec![0.0; l.total];
    let (d1, d2) = l.pair_backward(p, &h0, f0 - y0, &mut g);
    let (d3, d4) = l.pair_backward(p, &h1, f1 - (1.0 - y0), &mut g);
    for (i, d) in [d1, d2, d3, d4].iter().enumerate() {
        l.features_backward(p, &fwd[i].1, d, &mut g);
    }
    (loss, g)
}

/// Binary cross-entropy of `sigmoid(z)` against `first_is_target`, and its
/// gradient.
pub fn siamese_loss_and_grad(model: &PairModel, b1: &[f64], b2: &[f64], first_is_target: bool) -> (f64, Vec<f64>) {
    let (l, p) = (model.layout(), model.params());
    let side = model.config().input_size;
    let (fa, ca) = l.features(p, b1, side);
    let (fb, cb) = l.features(p, b2, side);
    let (z, h) = l.pair_logit(p, &fa, &fb);
    let y = if first_is_target { 1.0 } else { 0.0 };
    let loss = softplus(z) - y * z;
    let mut g = vec![0.0; l.total];
    let (da, db) = l.pair_backward(p, &h, sigmoid_pair(z).0 - y, &mut g);
    l.features_backward(p, &ca, &da, &mut g);
    l.features_backward(p, &cb, &db, &mut g);
    (loss, g)
}

fn split_indices(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64) * fraction).floor() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

/// Generic minibatch loop. `grad_of(sample, flags)` returns loss and gradient,
/// `flags` being random bits drawn in sequence so results do not depend on
/// thread scheduling.
fn run_training<S: Sync>(
    samples: &[S],
    cfg: &TrainConfig,
    model: &mut PairModel,
    grad_of: impl Fn(&PairModel, &S, [bool; 2]) -> (f64, Vec<f64>) + Sync,
    correct: impl Fn(&PairModel, &S) -> bool + Sync,
) -> Result<TrainingLog, DisambigError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DisambigError::EmptyDataset);
    }
    if samples.len() < 2 && cfg.validation_fraction > 0.0 {
        log::debug!("single sample: no validation split");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1d);
    let (mut train, val) = split_indices(samples.len(), cfg.validation_fraction, &mut rng);
    let mut adam = Adam::new(model.params().len(), cfg.learning_rate);
    let mut log = TrainingLog::default();
    for epoch in 1..=cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(cfg.batch_size) {
            let flags: Vec<[bool; 2]> = batch.iter().map(|_| [rng.gen(), rng.gen()]).collect();
            let m: &PairModel = model;
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .zip(flags.par_iter())
                .map(|(&i, &f)| grad_of(m, &samples[i], f))
                .collect();
            let mut grad = vec![0.0; model.params().len()];
            for (loss, g) in &results {
                total += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            adam.step(model.params_mut(), &grad);
        }
        let loss = total / train.len() as f64;
        if !loss.is_finite() || model.params().iter().any(|v| !v.is_finite()) {
            return Err(DisambigError::NonFiniteLoss(epoch));
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            let m: &PairModel = model;
            let hits = val.par_iter().filter(|&&i| correct(m, &samples[i])).count();
            Some(hits as f64 / val.len() as f64)
        };
        log::info!("epoch {epoch}: loss {loss:.5}, validation accuracy {val_accuracy:?}");
        log.epochs.push(EpochLog { epoch, loss, val_accuracy });
    }
    Ok(log)
}

pub fn train_twin(samples: &[TwinSample], cfg: &TrainConfig) -> Result<(TwinModel, TrainingLog), DisambigError> {
    let mut model = PairModel::new(cfg.net.clone(), cfg.seed)?;
    let shuffle = cfg.shuffle_pairs;
    let log = run_training(
        samples,
        cfg,
        &mut model,
        |m, s, [swap12, swap34]| {
            let x: Vec<Vec<f64>> = s.patches.iter().map(PatchTensor::to_f64).collect();
            let (a, b) = if shuffle && swap12 { (1, 0) } else { (0, 1) };
            let (c, d) = if shuffle && swap34 { (3, 2) } else { (2, 3) };
            twin_loss_and_grad(m, [&x[a], &x[b], &x[c], &x[d]], s.label)
        },
        |m, s| twin_sample_correct(m, s),
    )?;
    Ok((TwinModel(model), log))
}

pub fn train_siamese(samples: &[SiameseSample], cfg: &TrainConfig) -> Result<(SiameseModel, TrainingLog), DisambigError> {
    let mut model = PairModel::new(cfg.net.clone(), cfg.seed)?;
    let log = run_training(
        samples,
        cfg,
        &mut model,
        |m, s, _| siamese_loss_and_grad(m, &s.b1.to_f64(), &s.b2.to_f64(), s.first_is_target),
        |m, s| siamese_sample_correct(m, s),
    )?;
    Ok((SiameseModel(model), log))
}

/// Symmetrized twin decision on a stored sample matches its label.
pub fn twin_sample_correct(m: &PairModel, s: &TwinSample) -> bool {
    let x: Vec<Vec<f64>> = s.patches.iter().map(PatchTensor::to_f64).collect();
    twin_symmetrized(m, [&x[0], &x[1], &x[2], &x[3]]).decision() == s.label
}

pub fn siamese_sample_correct(m: &PairModel, s: &SiameseSample) -> bool {
    let z = m.logit(&m.features(&s.b1.to_f64()), &m.features(&s.b2.to_f64()));
    (z > 0.0) == s.first_is_target
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetConfig {
        NetConfig { channels: vec![2, 3, 3], stride: 2, feature_dim: 4, input_size: 12 }
    }

    fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    fn check_gradient(model: &mut PairModel, loss: impl Fn(&PairModel) -> (f64, Vec<f64>)) -> f64 {
        let (_, g) = loss(model);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let up = loss(model).0;
            model.params_mut()[i] = orig - h;
            let down = loss(model).0;
            model.params_mut()[i] = orig;
            worst = worst.max(relative_error(g[i], (up - down) / (2.0 * h)));
        }
        worst
    }

    #[test]
    fn twin_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = tiny();
        let mut model = PairModel::new(cfg.clone(), 4).unwrap();
        let x: Vec<Vec<f64>> = (0..4).map(|_| random_input(&mut rng, cfg.input_len())).collect();
        for label in [Decision::H0, Decision::H1] {
            let worst = check_gradient(&mut model, |m| twin_loss_and_grad(m, [&x[0], &x[1], &x[2], &x[3]], label));
            assert!(worst <= 1e-3, "worst relative error {worst}");
        }
    }

    #[test]
    fn siamese_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = tiny();
        let mut model = PairModel::new(cfg.clone(), 6).unwrap();
        let a = random_input(&mut rng, cfg.input_len());
        let b = random_input(&mut rng, cfg.input_len());
        for y in [false, true] {
            let worst = check_gradient(&mut model, |m| siamese_loss_and_grad(m, &a, &b, y));
            assert!(worst <= 1e-3, "worst relative error {worst}");
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = NetConfig { channels: vec![4, 8], stride: 2, feature_dim: 8, input_size: 16 };
        let sample = TwinSample {
            patches: std::array::from_fn(|_| PatchTensor::from_values(random_input(&mut rng, net.input_len()))),
            label: Decision::H1,
        };
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            learning_rate: 1e-2,
            validation_fraction: 0.0,
            shuffle_pairs: false,
            seed: 1,
            net,
        };
        let (_, log) = train_twin(std::slice::from_ref(&sample), &cfg).unwrap();
        assert!(log.final_loss().unwrap() < 0.01, "{:?}", log.final_loss());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let cfg = TrainConfig { net: tiny(), ..Default::default() };
        assert!(matches!(train_twin(&[], &cfg), Err(DisambigError::EmptyDataset)));
        assert!(matches!(train_siamese(&[], &cfg), Err(DisambigError::EmptyDataset)));
    }

    #[test]
    fn training_log_csv() {
        let log = TrainingLog {
            epochs: vec![
                EpochLog { epoch: 1, loss: 0.5, val_accuracy: Some(0.75) },
                EpochLog { epoch: 2, loss: 0.25, val_accuracy: None },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        log.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,loss,val_accuracy\n1,0.5,0.75\n2,0.25,\n");
    }
}
