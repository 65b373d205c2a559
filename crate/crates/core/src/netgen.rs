//! Random initialization, the sawtooth construction and weight perturbation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::PiecewiseLinearActivation;
use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::stats::normal_pdf;

/// Identity of the random generator, recorded alongside generated networks.
pub const GENERATOR_ID: &str = "chacha8/seed_from_u64+per-layer-stream/standard-normal-ziggurat";

/// Bias variance used for the experiments at initialization.
pub const DEFAULT_BIAS_VARIANCE: f64 = 1e-6;

/// Zero-symmetric weight law, rescaled to variance `gain / fan_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightLaw {
    Normal,
    /// `+-sqrt(gain / fan_in)` with probability 1/2 each.
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub weight_law: WeightLaw,
    /// Weight variance is `weight_gain / fan_in`; He initialization uses 2.
    pub weight_gain: f64,
    /// Bias standard deviation per layer (hidden layers, then output).
    pub bias_sd: Vec<f64>,
    pub activation: PiecewiseLinearActivation,
    pub seed: u64,
}

impl InitSpec {
    /// He-normal ReLU initialization with bias variance `1e-6`.
    pub fn he(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            weight_law: WeightLaw::Normal,
            weight_gain: 2.0,
            bias_sd: vec![DEFAULT_BIAS_VARIANCE.sqrt(); hidden.len() + 1],
            activation: PiecewiseLinearActivation::relu(),
            seed,
        }
    }

    pub fn with_bias_sd(mut self, sd: f64) -> Self {
        self.bias_sd = vec![sd; self.hidden.len() + 1];
        self
    }

    pub fn with_weight_law(mut self, law: WeightLaw) -> Self {
        self.weight_law = law;
        self
    }

    pub fn with_weight_gain(mut self, gain: f64) -> Self {
        self.weight_gain = gain;
        self
    }

    pub fn with_activation(mut self, activation: PiecewiseLinearActivation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("widths must be at least 1".into()));
        }
        if self.bias_sd.len() != self.hidden.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "need {} bias standard deviations, got {}",
                self.hidden.len() + 1,
                self.bias_sd.len()
            )));
        }
        if !(self.weight_gain > 0.0 && self.weight_gain.is_finite()) {
            return Err(Error::InvalidArgument("weight variance must be positive".into()));
        }
        if self.bias_sd.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("bias sd must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Hidden bias standard deviations.
    pub fn hidden_bias_sd(&self) -> &[f64] {
        &self.bias_sd[..self.hidden.len()]
    }

    pub fn hidden_neuron_count(&self) -> usize {
        self.hidden.iter().sum()
    }

    pub fn metadata(&self) -> InitMetadata {
        InitMetadata {
            seed: self.seed,
            weight_law: self.weight_law,
            weight_gain: self.weight_gain,
            bias_sd: self.bias_sd.clone(),
            generator: GENERATOR_ID.to_string(),
        }
    }
}

/// Provenance of a generated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitMetadata {
    pub seed: u64,
    pub weight_law: WeightLaw,
    pub weight_gain: f64,
    pub bias_sd: Vec<f64>,
    pub generator: String,
}

/// Deterministic generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// He-style initialization. Each layer draws from its own stream of the seed.
pub fn he_init(spec: &InitSpec) -> Result<Network> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.hidden.len() + 1);
    let mut fan_in = spec.input_dim;
    let widths = spec.hidden.iter().chain(std::iter::once(&spec.output_dim));
    for (l, &width) in widths.enumerate() {
        let mut rng = stream_rng(spec.seed, l as u64);
        let scale = (spec.weight_gain / fan_in as f64).sqrt();
        let weights: Vec<f64> = (0..width * fan_in)
            .map(|_| match spec.weight_law {
                WeightLaw::Normal => scale * std_normal(&mut rng),
                WeightLaw::TwoPoint => {
                    if rng.random::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                }
            })
            .collect();
        let sd = spec.bias_sd[l];
        let biases: Vec<f64> = (0..width).map(|_| sd * std_normal(&mut rng)).collect();
        layers.push(Layer::new(width, fan_in, weights, biases)?);
        fan_in = width;
    }
    Network::new(spec.input_dim, layers, spec.activation.clone())
}

/// ReLU network on one input computing the `(n + 1)`-fold composition of the
/// triangle map `x -> 2x` on `[0, 1/2]`, `2 - 2x` on `[1/2, 1]`: a sawtooth with
/// `2^n` teeth on `[0, 1]`. It has `n + 1` hidden layers of three neurons and
/// one output neuron, `3n + 4` neurons in total.
pub fn build_sawtooth(n: usize) -> Result<Network> {
    if n == 0 {
        return Err(Error::InvalidArgument("tooth exponent must be >= 1".into()));
    }
    // triangle(t) = 2 relu(t) - 4 relu(t - 1/2) + 2 relu(t - 1)
    let readout = [2.0, -4.0, 2.0];
    let offsets = vec![0.0, -0.5, -1.0];
    let mut layers = Vec::with_capacity(n + 2);
    layers.push(Layer::new(3, 1, vec![1.0; 3], offsets.clone())?);
    for _ in 0..n {
        let mut w = Vec::with_capacity(9);
        for _ in 0..3 {
            w.extend_from_slice(&readout);
        }
        layers.push(Layer::new(3, 3, w, offsets.clone())?);
    }
    layers.push(Layer::new(1, 3, readout.to_vec(), vec![0.0])?);
    Network::new(1, layers, PiecewiseLinearActivation::relu())
}

/// Adds independent `N(0, noise_sd^2)` noise to every weight and bias.
pub fn perturb(net: &Network, noise_sd: f64, seed: u64) -> Result<Network> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise sd must be finite and >= 0".into()));
    }
    let mut out = net.clone();
    if noise_sd == 0.0 {
        return Ok(out);
    }
    for (l, layer) in out.layers_mut().iter_mut().enumerate() {
        let mut rng = stream_rng(seed, l as u64);
        for w in layer.weights_mut() {
            *w += noise_sd * std_normal(&mut rng);
        }
        for b in layer.biases_mut() {
            *b += noise_sd * std_normal(&mut rng);
        }
    }
    Ok(out)
}

/// Bias density constants of a normal bias law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDensity {
    /// `sup_z sup_b rho_z(b)`.
    pub c_bias_sup: f64,
    /// `inf_z inf_{|b| <= eta} rho_z(b)`.
    pub c_bias_inf: f64,
    pub eta: f64,
    pub hidden_bias_sd: Vec<f64>,
}

impl BiasDensity {
    pub fn density(&self, layer: usize, b: f64) -> f64 {
        normal_pdf(b, self.hidden_bias_sd[layer])
    }
}

pub fn bias_density_stats(spec: &InitSpec, eta: f64) -> Result<BiasDensity> {
    spec.validate()?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let sds = spec.hidden_bias_sd().to_vec();
    if sds.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidArgument("bias law needs a density (sd > 0)".into()));
    }
    let min_sd = sds.iter().copied().fold(f64::INFINITY, f64::min);
    let c_bias_sup = normal_pdf(0.0, min_sd);
    // the normal density is decreasing in |b|, so the infimum sits at |b| = eta
    let c_bias_inf = sds
        .iter()
        .map(|&s| normal_pdf(eta, s))
        .fold(f64::INFINITY, f64::min);
    Ok(BiasDensity {
        c_bias_sup,
        c_bias_inf,
        eta,
        hidden_bias_sd: sds,
    })
}

/// `eta = (sup_K |x|^2 / n_in + sum_j sigma_j^2) * exp(c * sum_j 1/n_j)`,
/// the half-width entering the lower bound; `c` is an unspecified absolute
/// constant (callers default it to 1).
pub fn lower_bound_eta(spec: &InitSpec, sup_norm_sq: f64, c: f64) -> f64 {
    let bias_var: f64 = spec.hidden_bias_sd().iter().map(|s| s * s).sum();
    let inv_width: f64 = spec.hidden.iter().map(|&n| 1.0 / n as f64).sum();
    (sup_norm_sq / spec.input_dim as f64 + bias_var) * (c * inv_width).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;

    fn triangle(t: f64) -> f64 {
        if (0.0..=0.5).contains(&t) {
            2.0 * t
        } else if (0.5..=1.0).contains(&t) {
            2.0 - 2.0 * t
        } else {
            0.0
        }
    }

    fn sawtooth_oracle(n: usize, x: f64) -> f64 {
        (0..=n).fold(x, |t, _| triangle(t))
    }

    #[test]
    fn sawtooth_neuron_counts() {
        assert_eq!(build_sawtooth(1).unwrap().neuron_count(), 7);
        assert_eq!(build_sawtooth(4).unwrap().neuron_count(), 16);
        assert!(build_sawtooth(0).is_err());
    }

    #[test]
    fn sawtooth_matches_triangle_composition() {
        for n in 1..=5 {
            let net = build_sawtooth(n).unwrap();
            for i in 0..1000 {
                let x = -0.5 + 2.0 * (i as f64 + 0.5) / 1000.0;
                let y = net.output(&[x]).unwrap()[0];
                assert!((y - sawtooth_oracle(n, x)).abs() < 1e-9, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn sawtooth_fixed_points() {
        let net = build_sawtooth(3).unwrap();
        assert_eq!(net.output(&[0.0]).unwrap()[0], 0.0);
        // 2^n teeth, apexes at (2k+1) / 2^(n+1)
        for k in 0..8 {
            let apex = (2 * k + 1) as f64 / 16.0;
            assert!((net.output(&[apex]).unwrap()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn he_init_is_deterministic() {
        let spec = InitSpec::he(20, &[8, 8], 3, 42);
        assert_eq!(he_init(&spec).unwrap(), he_init(&spec).unwrap());
        assert_ne!(he_init(&spec).unwrap(), he_init(&spec.clone().with_seed(43)).unwrap());
    }

    #[test]
    fn he_weight_variance() {
        let mut s = RunningStats::new();
        for seed in 0..10 {
            let net = he_init(&InitSpec::he(512, &[64], 1, seed)).unwrap();
            for &w in net.layers()[0].weights() {
                s.push(w);
            }
        }
        let target = 2.0 / 512.0;
        assert!((s.variance() - target).abs() < 0.05 * target);
        assert!(s.mean().abs() < 3.0 * s.std_error());
    }

    #[test]
    fn two_point_law_has_he_variance() {
        let net = he_init(&InitSpec::he(50, &[40], 1, 3).with_weight_law(WeightLaw::TwoPoint)).unwrap();
        let scale = (2.0f64 / 50.0).sqrt();
        assert!(net.layers()[0].weights().iter().all(|&w| (w.abs() - scale).abs() < 1e-15));
    }

    #[test]
    fn bias_variance_matches_default() {
        let mut s = RunningStats::new();
        for seed in 0..4 {
            let net = he_init(&InitSpec::he(10, &[1000, 1000, 1000], 1, seed)).unwrap();
            for l in net.hidden_layers() {
                for &b in l.biases() {
                    s.push(b);
                }
            }
        }
        assert!(s.count() >= 10_000);
        assert!((s.variance() - 1e-6).abs() < 0.1e-6);
    }

    #[test]
    fn perturb_zero_is_identity() {
        let net = build_sawtooth(2).unwrap();
        assert_eq!(perturb(&net, 0.0, 9).unwrap(), net);
        assert!(perturb(&net, -1.0, 9).is_err());
    }

    #[test]
    fn perturb_noise_sd() {
        let net = he_init(&InitSpec::he(100, &[100], 1, 1)).unwrap();
        let p = perturb(&net, 0.1, 5).unwrap();
        let s: RunningStats = p.layers()[0]
            .weights()
            .iter()
            .zip(net.layers()[0].weights())
            .map(|(a, b)| a - b)
            .collect();
        assert!(s.count() >= 10_000);
        assert!((s.std_dev() - 0.1).abs() < 0.01);
        assert_eq!(p, perturb(&net, 0.1, 5).unwrap());
    }

    #[test]
    fn bias_density_constants() {
        let spec = InitSpec::he(4, &[3], 1, 0).with_bias_sd(1.0);
        let d = bias_density_stats(&spec, 0.0).unwrap();
        assert!((d.c_bias_sup - 0.398_942_28).abs() < 1e-8);
        assert!((d.c_bias_inf - d.c_bias_sup).abs() < 1e-15);
        let spec = InitSpec::he(4, &[3], 1, 0).with_bias_sd(1e-3);
        let d = bias_density_stats(&spec, 0.0).unwrap();
        assert!((d.c_bias_sup - 398.942_28).abs() < 1e-4);
        assert!(bias_density_stats(&spec, -1.0).is_err());
    }

    #[test]
    fn eta_lower_bound_matches_grid_minimum() {
        let mut spec = InitSpec::he(4, &[8, 16], 1, 0);
        spec.bias_sd = vec![0.5, 0.8, 1.0];
        let eta = lower_bound_eta(&spec, 2.0, 1.0);
        let expected = (2.0 / 4.0 + 0.25 + 0.64) * (1.0f64 / 8.0 + 1.0 / 16.0).exp();
        assert!((eta - expected).abs() < 1e-12);
        let d = bias_density_stats(&spec, eta).unwrap();
        // direct minimum of the per-layer densities on a grid over [-eta, eta]
        let grid_min = (0..=2000)
            .flat_map(|i| {
                let b = -eta + 2.0 * eta * i as f64 / 2000.0;
                [0.5, 0.8].map(|s| normal_pdf(b, s))
            })
            .fold(f64::INFINITY, f64::min);
        assert!((d.c_bias_inf - grid_min).abs() < 1e-12);
    }
}
