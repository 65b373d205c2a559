//! Deterministic minibatch training with hand-written backpropagation, and
//! complexity metrics tracked across checkpoints.
//!
//! At a breakpoint the activation's derivative is taken from the piece on the
//! right. Batches are drawn from a per-epoch shuffle of the seed, and the loop
//! runs on one thread, so a seed fixes the whole trajectory.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryProbe, DistanceOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::netgen::stream_rng;
use crate::network::{dot, Network};
use crate::region1d::{count_regions_batch, LineSpec};
use crate::region2d::{enumerate_plane, SliceFrame};
use crate::stats::RunningStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    /// Mean over batch and outputs of the squared error against one-hot targets.
    MeanSquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    /// Epoch fractions at which to snapshot, e.g. `0.0, 0.05, ..., 20.0`.
    pub schedule: Vec<f64>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Train-set metrics at checkpoints use at most this many examples.
    pub eval_limit: Option<usize>,
}

impl TrainConfig {
    /// Adam with the conventional `(0.9, 0.999, 1e-8)`, cross-entropy loss and
    /// a checkpoint at the end of every epoch.
    pub fn adam(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate,
            batch_size,
            epochs,
            loss: LossKind::SoftmaxCrossEntropy,
            schedule: (0..=epochs).map(|e| e as f64).collect(),
            seed,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eval_limit: None,
        }
    }

    pub fn sgd(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            ..Self::adam(learning_rate, batch_size, epochs, seed)
        }
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_eval_limit(mut self, limit: usize) -> Self {
        self.eval_limit = Some(limit);
        self
    }

    /// A zero learning rate is accepted and leaves the weights untouched.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.schedule.iter().any(|&f| !(f >= 0.0 && f <= self.epochs as f64)) {
            return Err(Error::InvalidArgument(format!(
                "checkpoint fractions must lie in [0, {}]",
                self.epochs
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("bad Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// `count` evenly spaced epoch fractions from `start` to `end` inclusive.
pub fn linspace_schedule(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch_fraction: f64,
    pub step: u64,
    pub network: Network,
    pub train: Metrics,
    pub test: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub checkpoints: Vec<Checkpoint>,
    /// Epoch fraction of the step whose loss or parameters became non-finite.
    /// The last checkpoint then holds the last parameters with a finite
    /// batch loss.
    pub diverged_at: Option<f64>,
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.biases().len()]).collect(),
        }
    }

    fn clear(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.fill(0.0);
        }
    }
}

/// Forward activations of a batch, row-major `batch x width` per layer.
struct Tape {
    /// Pre-activations of every layer including the output.
    pre: Vec<Vec<f64>>,
    /// Post-activations of the hidden layers.
    post: Vec<Vec<f64>>,
}

fn forward_batch(net: &Network, x: &[f64], batch: usize) -> Tape {
    let depth = net.depth();
    let act = net.activation();
    let mut pre = Vec::with_capacity(depth + 1);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for (l, layer) in net.layers().iter().enumerate() {
        let input: &[f64] = if l == 0 { x } else { &post[l - 1] };
        let (rows, cols) = (layer.rows(), layer.cols());
        let mut p = vec![0.0; batch * rows];
        for b in 0..batch {
            let h = &input[b * cols..(b + 1) * cols];
            for (i, out) in p[b * rows..(b + 1) * rows].iter_mut().enumerate() {
                *out = dot(layer.row(i), h) + layer.biases()[i];
            }
        }
        if l < depth {
            post.push(p.iter().map(|&t| act.eval(t)).collect());
        }
        pre.push(p);
    }
    Tape { pre, post }
}

/// Loss summed over the batch, its gradient with respect to the outputs
/// (already divided by `scale`), and the number of correct predictions.
fn output_loss(loss: LossKind, y: &[f64], labels: &[u8], outputs: usize, scale: f64, dy: Option<&mut [f64]>) -> (f64, usize) {
    let mut total = 0.0;
    let mut correct = 0;
    let mut dy = dy;
    for (b, &label) in labels.iter().enumerate() {
        let row = &y[b * outputs..(b + 1) * outputs];
        let label = label as usize;
        let argmax = row
            .iter()
            .enumerate()
            .fold(0, |best, (o, &v)| if v > row[best] { o } else { best });
        if argmax == label {
            correct += 1;
        }
        match loss {
            LossKind::SoftmaxCrossEntropy => {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                let log_z = m + z.ln();
                total += log_z - row[label];
                if let Some(d) = dy.as_deref_mut() {
                    for (o, (g, &v)) in d[b * outputs..(b + 1) * outputs].iter_mut().zip(row).enumerate() {
                        let p = (v - log_z).exp();
                        *g = (p - f64::from(o == label)) / scale;
                    }
                }
            }
            LossKind::MeanSquaredError => {
                for (o, &v) in row.iter().enumerate() {
                    let r = v - f64::from(o == label);
                    total += r * r / outputs as f64;
                    if let Some(d) = dy.as_deref_mut() {
                        d[b * outputs + o] = 2.0 * r / (outputs as f64 * scale);
                    }
                }
            }
        }
    }
    (total, correct)
}

/// Mean loss of a batch and its parameter gradient, accumulated into `grads`
/// after clearing it. `x` is row-major `labels.len() x input_dim`.
pub fn loss_and_gradient(net: &Network, x: &[f64], labels: &[u8], loss: LossKind, grads: &mut Gradients) -> Result<f64> {
    let batch = labels.len();
    if batch == 0 || x.len() != batch * net.input_dim() {
        return Err(Error::Shape {
            context: "training batch".into(),
            expected: batch * net.input_dim(),
            found: x.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= net.output_dim()) {
        return Err(Error::InvalidArgument(format!("label {l} outside {} outputs", net.output_dim())));
    }
    grads.clear();
    let tape = forward_batch(net, x, batch);
    let depth = net.depth();
    let outputs = net.output_dim();
    let mut delta = vec![0.0; batch * outputs];
    let (total, _) = output_loss(loss, &tape.pre[depth], labels, outputs, batch as f64, Some(&mut delta));
    let act = net.activation();
    for l in (0..=depth).rev() {
        let layer = &net.layers()[l];
        let (rows, cols) = (layer.rows(), layer.cols());
        let input: &[f64] = if l == 0 { x } else { &tape.post[l - 1] };
        let gw = &mut grads.weights[l];
        let gb = &mut grads.biases[l];
        for b in 0..batch {
            let h = &input[b * cols..(b + 1) * cols];
            for i in 0..rows {
                let d = delta[b * rows + i];
                if d == 0.0 {
                    continue;
                }
                gb[i] += d;
                for (g, &hj) in gw[i * cols..(i + 1) * cols].iter_mut().zip(h) {
                    *g += d * hj;
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut below = vec![0.0; batch * cols];
        for b in 0..batch {
            let dh = &mut below[b * cols..(b + 1) * cols];
            for i in 0..rows {
                let d = delta[b * rows + i];
                if d != 0.0 {
                    for (a, &w) in dh.iter_mut().zip(layer.row(i)) {
                        *a += d * w;
                    }
                }
            }
        }
        for (d, &p) in below.iter_mut().zip(&tape.pre[l - 1]) {
            *d *= act.derivative(p);
        }
        delta = below;
    }
    Ok(total / batch as f64)
}

/// Mean loss and accuracy over the first `limit` examples.
pub fn evaluate(net: &Network, data: &Dataset, loss: LossKind, limit: Option<usize>) -> Result<Metrics> {
    check_data(net, data)?;
    let n = limit.map_or(data.len(), |l| l.min(data.len()));
    const CHUNK: usize = 1000;
    let parts: Vec<(f64, usize)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n);
            let x: Vec<f64> = range.clone().flat_map(|i| data.input(i).iter().map(|&v| v as f64)).collect();
            let labels = &data.labels()[range];
            let tape = forward_batch(net, &x, labels.len());
            output_loss(loss, &tape.pre[net.depth()], labels, net.output_dim(), 1.0, None)
        })
        .collect();
    let (total, correct) = parts.iter().fold((0.0, 0), |(t, c), &(a, b)| (t + a, c + b));
    Ok(Metrics {
        loss: total / n as f64,
        accuracy: correct as f64 / n as f64,
    })
}

fn check_data(net: &Network, data: &Dataset) -> Result<()> {
    if data.dim() != net.input_dim() {
        return Err(Error::Shape {
            context: "dataset dimension".into(),
            expected: net.input_dim(),
            found: data.dim(),
        });
    }
    if data.classes() > net.output_dim() {
        return Err(Error::Shape {
            context: "number of classes".into(),
            expected: net.output_dim(),
            found: data.classes(),
        });
    }
    Ok(())
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

fn params_finite(net: &Network) -> bool {
    net.layers()
        .iter()
        .all(|l| l.weights().iter().chain(l.biases()).all(|v| v.is_finite()))
}

fn apply_update(net: &mut Network, grads: &Gradients, config: &TrainConfig, adam: &mut Option<Adam>) {
    let lr = config.learning_rate;
    let Some(state) = adam.as_mut() else {
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            sgd_step(layer.weights_mut(), &grads.weights[l], lr);
            sgd_step(layer.biases_mut(), &grads.biases[l], lr);
        }
        return;
    };
    state.t += 1;
    let fix = (1.0 - config.beta1.powi(state.t), 1.0 - config.beta2.powi(state.t));
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let (m, v) = (&mut state.m, &mut state.v);
        adam_step(layer.weights_mut(), &grads.weights[l], &mut m.weights[l], &mut v.weights[l], config, fix);
        adam_step(layer.biases_mut(), &grads.biases[l], &mut m.biases[l], &mut v.biases[l], config, fix);
    }
}

fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

fn adam_step(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], config: &TrainConfig, fix: (f64, f64)) {
    let (b1, b2) = (config.beta1, config.beta2);
    for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = b1 * *mi + (1.0 - b1) * g;
        *vi = b2 * *vi + (1.0 - b2) * g * g;
        *p -= config.learning_rate * (*mi / fix.0) / ((*vi / fix.1).sqrt() + config.epsilon);
    }
}

/// Trains a copy of `net` and returns snapshots at the scheduled epoch
/// fractions. A fraction `f` is taken before step `round(f * steps_per_epoch)`.
pub fn train(net: &Network, train_data: &Dataset, test_data: Option<&Dataset>, config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    check_data(net, train_data)?;
    if let Some(t) = test_data {
        check_data(net, t)?;
    }
    let n = train_data.len();
    let steps_per_epoch = n.div_ceil(config.batch_size) as u64;
    let total_steps = steps_per_epoch * config.epochs as u64;
    let mut marks: Vec<(u64, f64)> = config
        .schedule
        .iter()
        .map(|&f| (((f * steps_per_epoch as f64).round() as u64).min(total_steps), f))
        .collect();
    marks.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    marks.dedup_by_key(|m| m.0);

    let snapshot = |net: &Network, step: u64, fraction: f64| -> Result<Checkpoint> {
        Ok(Checkpoint {
            epoch_fraction: fraction,
            step,
            network: net.clone(),
            train: evaluate(net, train_data, config.loss, config.eval_limit)?,
            test: test_data.map(|t| evaluate(net, t, config.loss, None)).transpose()?,
        })
    };

    let mut current = net.clone();
    let mut last_good = (net.clone(), 0u64);
    let mut grads = Gradients::zeros_like(net);
    let mut adam = (config.optimizer == OptimizerKind::Adam).then(|| Adam {
        m: Gradients::zeros_like(net),
        v: Gradients::zeros_like(net),
        t: 0,
    });
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = marks.iter().peekable();
    let mut step: u64 = 0;
    let dim = net.input_dim();
    let mut x = Vec::with_capacity(config.batch_size * dim);
    let mut labels = Vec::with_capacity(config.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut stream_rng(config.seed, epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            while let Some(&&(s, f)) = next_mark.peek() {
                if s != step {
                    break;
                }
                checkpoints.push(snapshot(&current, step, f)?);
                next_mark.next();
            }
            x.clear();
            labels.clear();
            for &i in chunk {
                x.extend(train_data.input(i).iter().map(|&v| v as f64));
                labels.push(train_data.labels()[i]);
            }
            let loss = loss_and_gradient(&current, &x, &labels, config.loss, &mut grads)?;
            if loss.is_finite() {
                last_good = (current.clone(), step);
                apply_update(&mut current, &grads, config, &mut adam);
            }
            if !loss.is_finite() || !params_finite(&current) {
                let fraction = step as f64 / steps_per_epoch as f64;
                let (good, good_step) = &last_good;
                if checkpoints.last().is_none_or(|c| c.step != *good_step) {
                    let f = *good_step as f64 / steps_per_epoch as f64;
                    checkpoints.push(snapshot(good, *good_step, f)?);
                }
                return Ok(TrainRun {
                    checkpoints,
                    diverged_at: Some(fraction),
                });
            }
            step += 1;
        }
    }
    for &(s, f) in next_mark {
        debug_assert_eq!(s, total_steps);
        checkpoints.push(snapshot(&current, s, f)?);
    }
    Ok(TrainRun {
        checkpoints,
        diverged_at: None,
    })
}

/// Probes frozen at the start of training so that metrics are comparable
/// across checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProbes {
    pub lines: Vec<LineSpec>,
    pub points: Vec<Vec<f64>>,
    pub frame: Option<SliceFrame>,
}

impl ComplexityProbes {
    /// Infinite lines through the origin and `n_lines` random training
    /// examples, and `n_points` random training examples for distances.
    pub fn from_dataset(data: &Dataset, n_lines: usize, n_points: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = stream_rng(seed, 0);
        let lines = (0..n_lines)
            .map(|_| LineSpec::line(&vec![0.0; data.dim()], &data.input_f64(rng.random_range(0..data.len()))))
            .collect();
        let points = (0..n_points)
            .map(|_| data.input_f64(rng.random_range(0..data.len())))
            .collect();
        Self {
            lines,
            points,
            frame: None,
        }
    }

    pub fn with_frame(mut self, frame: SliceFrame) -> Self {
        self.frame = Some(frame);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub epoch_fraction: f64,
    pub regions_per_neuron: f64,
    pub regions_per_neuron_se: f64,
    pub mean_dist_times_neurons: f64,
    pub mean_dist_times_neurons_se: f64,
    pub plane_regions: Option<usize>,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

/// Regions per line divided by the hidden neuron count, mean distance to the
/// boundary times the neuron count, and optionally the regions in the frame.
pub fn complexity_of(net: &Network, probes: &ComplexityProbes) -> Result<(RunningStats, RunningStats, Option<usize>)> {
    let neurons = net.hidden_neuron_count() as f64;
    let mut regions = RunningStats::new();
    for p in count_regions_batch(net, &probes.lines) {
        regions.push(p?.region_count() as f64 / neurons);
    }
    let probe = BoundaryProbe::new(net);
    let mut dist = RunningStats::new();
    for x in &probes.points {
        let d = probe.distance(x, DistanceOptions::default())?.distance;
        if d.is_finite() {
            dist.push(d * neurons);
        }
    }
    let plane = probes
        .frame
        .as_ref()
        .map(|f| enumerate_plane(net, f).map(|a| a.region_count()))
        .transpose()?;
    Ok((regions, dist, plane))
}

pub fn track_complexity(checkpoints: &[Checkpoint], probes: &ComplexityProbes) -> Result<Vec<ComplexityRow>> {
    checkpoints
        .par_iter()
        .map(|c| {
            let (regions, dist, plane) = complexity_of(&c.network, probes)?;
            Ok(ComplexityRow {
                epoch_fraction: c.epoch_fraction,
                regions_per_neuron: regions.mean(),
                regions_per_neuron_se: regions.std_error(),
                mean_dist_times_neurons: dist.mean(),
                mean_dist_times_neurons_se: dist.std_error(),
                plane_regions: plane,
                train_loss: c.train.loss,
                train_acc: c.train.accuracy,
                test_loss: c.test.as_ref().map(|m| m.loss),
                test_acc: c.test.as_ref().map(|m| m.accuracy),
            })
        })
        .collect()
}
