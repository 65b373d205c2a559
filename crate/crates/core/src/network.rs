//! Dense piecewise-linear networks and their exact local structure.
//!
//! Convention: the pre-activation of a hidden neuron includes its bias,
//! `pre = w . h + b`, and its post-activation is `phi(pre)`. Breakpoints of
//! `phi` act directly as thresholds on `pre`. The last layer is affine with no
//! activation.

use serde::{Deserialize, Serialize};

use crate::activation::{PieceLookup, PiecewiseLinearActivation};
use crate::error::{shape, Error, Result};

/// A dense affine layer, weights stored row-major as `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(shape("layer weights", rows * cols, weights.len()));
        }
        if biases.len() != rows {
            return Err(shape("layer biases", rows, biases.len()));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite layer parameter".into()));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            biases,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    /// `W x + b`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), x) + self.biases[i])
            .collect()
    }

    /// `W x` without the bias.
    pub fn apply_linear(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A hidden neuron: `layer` is 1-based over hidden layers, `unit` 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronRef {
    pub layer: usize,
    pub unit: usize,
}

impl NeuronRef {
    pub fn new(layer: usize, unit: usize) -> Self {
        Self { layer, unit }
    }
}

/// Piece index of every hidden neuron, flattened layer by layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivationPattern(pub Vec<u8>);

impl ActivationPattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn piece(&self, flat: usize) -> usize {
        self.0[flat] as usize
    }

    /// Flat indices where two patterns disagree.
    pub fn differences(&self, other: &Self) -> Vec<usize> {
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `y = matrix * x + offset`, matrix row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| dot(&self.matrix[i * self.cols..(i + 1) * self.cols], x) + self.offset[i])
            .collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero_matrix(&self) -> bool {
        self.matrix.iter().all(|&a| a == 0.0)
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Pre-activations of each hidden layer.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
    activation: PiecewiseLinearActivation,
}

impl Network {
    /// `layers` are the hidden layers followed by the affine output layer.
    pub fn new(
        input_dim: usize,
        layers: Vec<Layer>,
        activation: PiecewiseLinearActivation,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs an output layer".into()));
        }
        let mut fan_in = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.cols != fan_in {
                return Err(Error::LayerShape {
                    layer: i,
                    message: format!("expected {} columns, found {}", fan_in, layer.cols),
                });
            }
            if layer.rows == 0 {
                return Err(Error::LayerShape {
                    layer: i,
                    message: "zero width".into(),
                });
            }
            fan_in = layer.rows;
        }
        let total: usize = layers[..layers.len() - 1].iter().map(|l| l.rows).sum();
        if total > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many neurons".into()));
        }
        Ok(Self {
            input_dim,
            layers,
            activation,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: PiecewiseLinearActivation,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &w in hidden.iter().chain(std::iter::once(&output_dim)) {
            layers.push(Layer::zeros(w, fan_in));
            fan_in = w;
        }
        Self::new(input_dim, layers, activation).expect("zero network shape is consistent")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.rows).unwrap_or(0)
    }

    pub fn activation(&self) -> &PiecewiseLinearActivation {
        &self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("network has an output layer")
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden_layers().iter().map(|l| l.rows).collect()
    }

    /// Number of neurons carrying the nonlinearity.
    pub fn hidden_neuron_count(&self) -> usize {
        self.hidden_layers().iter().map(|l| l.rows).sum()
    }

    /// Hidden plus output neurons.
    pub fn neuron_count(&self) -> usize {
        self.hidden_neuron_count() + self.output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Start of each hidden layer in the flattened neuron order.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.depth() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in self.hidden_layers() {
            acc += l.rows;
            offsets.push(acc);
        }
        offsets
    }

    pub fn flat_index(&self, z: NeuronRef) -> usize {
        self.layer_offsets()[z.layer - 1] + z.unit
    }

    pub fn neuron_ref(&self, flat: usize) -> NeuronRef {
        let offsets = self.layer_offsets();
        let layer = offsets.partition_point(|&o| o <= flat);
        NeuronRef::new(layer, flat - offsets[layer - 1])
    }

    pub fn check_neuron(&self, z: NeuronRef) -> Result<()> {
        if z.layer == 0 || z.layer > self.depth() {
            return Err(Error::InvalidArgument(format!("no hidden layer {}", z.layer)));
        }
        let width = self.layers[z.layer - 1].rows;
        if z.unit >= width {
            return Err(shape("neuron unit", width, z.unit));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(shape("input", self.input_dim, x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut h = x.to_vec();
        for layer in self.hidden_layers() {
            let p = layer.apply(&h);
            h = p.iter().map(|&t| self.activation.eval(t)).collect();
            pre.push(p);
        }
        let output = self.output_layer().apply(&h);
        Ok(ForwardPass { pre, output })
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Hidden neurons whose pre-activation sits on a breakpoint.
    pub fn boundary_neurons(&self, pass: &ForwardPass) -> Vec<NeuronRef> {
        let mut out = Vec::new();
        for (l, pre) in pass.pre.iter().enumerate() {
            for (u, &p) in pre.iter().enumerate() {
                if let PieceLookup::OnBreakpoint(_) = self.activation.lookup(p) {
                    out.push(NeuronRef::new(l + 1, u));
                }
            }
        }
        out
    }

    /// Pattern with ties resolved to the right piece.
    pub fn pattern_of(&self, pass: &ForwardPass) -> ActivationPattern {
        ActivationPattern(
            pass.pre
                .iter()
                .flatten()
                .map(|&p| self.activation.piece_right_closed(p) as u8)
                .collect(),
        )
    }

    /// Activation pattern at `x`; fails if any neuron sits on a breakpoint.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<ActivationPattern> {
        let pass = self.forward(x)?;
        let on = self.boundary_neurons(&pass);
        if !on.is_empty() {
            return Err(Error::OnBoundary { neurons: on });
        }
        Ok(self.pattern_of(&pass))
    }

    /// Activation pattern at `x` with ties resolved to the right piece.
    pub fn pattern_right_closed(&self, x: &[f64]) -> Result<ActivationPattern> {
        Ok(self.pattern_of(&self.forward(x)?))
    }

    fn slopes_for(&self, pattern: &ActivationPattern, offsets: &[usize], layer: usize) -> Vec<f64> {
        pattern.0[offsets[layer]..offsets[layer + 1]]
            .iter()
            .map(|&p| self.activation.slope(p as usize))
            .collect()
    }

    /// Gradient of the pre-activation of `z` with respect to the input, with
    /// the pattern at `x` held fixed (ties resolved to the right piece).
    pub fn neuron_gradient(&self, x: &[f64], z: NeuronRef) -> Result<Vec<f64>> {
        self.check_neuron(z)?;
        let pattern = self.pattern_right_closed(x)?;
        Ok(self.neuron_gradient_for_pattern(&pattern, z))
    }

    pub fn neuron_gradient_for_pattern(&self, pattern: &ActivationPattern, z: NeuronRef) -> Vec<f64> {
        let offsets = self.layer_offsets();
        let mut r = self.layers[z.layer - 1].row(z.unit).to_vec();
        for l in (0..z.layer - 1).rev() {
            let slopes = self.slopes_for(pattern, &offsets, l);
            let layer = &self.layers[l];
            let mut next = vec![0.0; layer.cols];
            for (i, (&ri, &qi)) in r.iter().zip(&slopes).enumerate() {
                let s = ri * qi;
                if s != 0.0 {
                    for (n, &w) in next.iter_mut().zip(layer.row(i)) {
                        *n += s * w;
                    }
                }
            }
            r = next;
        }
        r
    }

    /// Forward pass together with the input gradients of every hidden
    /// pre-activation, one row-major `width x input_dim` matrix per layer.
    pub fn hidden_gradients(&self, x: &[f64]) -> Result<(ForwardPass, Vec<Vec<f64>>)> {
        let pass = self.forward(x)?;
        let pattern = self.pattern_of(&pass);
        let grads = self.hidden_gradients_for_pattern(&pattern);
        Ok((pass, grads))
    }

    pub fn hidden_gradients_for_pattern(&self, pattern: &ActivationPattern) -> Vec<Vec<f64>> {
        let n = self.input_dim;
        let offsets = self.layer_offsets();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        for (l, layer) in self.hidden_layers().iter().enumerate() {
            if l == 0 {
                out.push(layer.weights.clone());
                continue;
            }
            let prev = &out[l - 1];
            let slopes = self.slopes_for(pattern, &offsets, l - 1);
            let mut g = vec![0.0; layer.rows * n];
            for i in 0..layer.rows {
                let gi = &mut g[i * n..(i + 1) * n];
                for (k, (&w, &q)) in layer.row(i).iter().zip(&slopes).enumerate() {
                    let s = w * q;
                    if s != 0.0 {
                        for (a, &b) in gi.iter_mut().zip(&prev[k * n..(k + 1) * n]) {
                            *a += s * b;
                        }
                    }
                }
            }
            out.push(g);
        }
        out
    }

    /// The affine map computed on the region with the given pattern.
    pub fn affine_for_pattern(&self, pattern: &ActivationPattern) -> AffineMap {
        let n = self.input_dim;
        let offsets = self.layer_offsets();
        // current post-activation as an affine map of x: h = a x + c
        let mut a: Vec<f64> = identity(n);
        let mut c: Vec<f64> = vec![0.0; n];
        let mut width = n;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut na = vec![0.0; layer.rows * n];
            let mut nc = layer.biases.clone();
            for i in 0..layer.rows {
                let row = layer.row(i);
                let nai = &mut na[i * n..(i + 1) * n];
                for k in 0..width {
                    let w = row[k];
                    if w != 0.0 {
                        for (d, &s) in nai.iter_mut().zip(&a[k * n..(k + 1) * n]) {
                            *d += w * s;
                        }
                        nc[i] += w * c[k];
                    }
                }
            }
            if l < self.depth() {
                let pieces = &pattern.0[offsets[l]..offsets[l + 1]];
                for (i, &p) in pieces.iter().enumerate() {
                    let q = self.activation.slope(p as usize);
                    let b = self.activation.intercept(p as usize);
                    for v in &mut na[i * n..(i + 1) * n] {
                        *v *= q;
                    }
                    nc[i] = q * nc[i] + b;
                }
            }
            a = na;
            c = nc;
            width = layer.rows;
        }
        AffineMap {
            rows: self.output_dim(),
            cols: n,
            matrix: a,
            offset: c,
        }
    }

    /// Affine map on the region containing `x`; `x` must be interior.
    pub fn local_affine(&self, x: &[f64]) -> Result<AffineMap> {
        let pattern = self.activation_pattern(x)?;
        Ok(self.affine_for_pattern(&pattern))
    }

    /// Network seen on the affine slice `origin + sum_i s_i * directions[i]`,
    /// taking the slice coordinates `s` as input.
    pub fn restrict_to_slice(&self, origin: &[f64], directions: &[Vec<f64>]) -> Result<Network> {
        self.check_input(origin)?;
        for d in directions {
            self.check_input(d)?;
        }
        if directions.is_empty() {
            return Err(Error::InvalidArgument("slice needs at least one direction".into()));
        }
        let first = &self.layers[0];
        let k = directions.len();
        let mut w = vec![0.0; first.rows * k];
        for i in 0..first.rows {
            for (j, d) in directions.iter().enumerate() {
                w[i * k + j] = dot(first.row(i), d);
            }
        }
        let b = first.apply(origin);
        let mut layers = self.layers.clone();
        layers[0] = Layer::new(first.rows, k, w, b)?;
        Network::new(k, layers, self.activation.clone())
    }

    /// First `depth` hidden layers followed by a zero scalar output layer.
    pub fn truncate_hidden(&self, depth: usize) -> Result<Network> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidArgument(format!("cannot truncate to depth {depth}")));
        }
        let mut layers: Vec<Layer> = self.layers[..depth].to_vec();
        layers.push(Layer::zeros(1, self.layers[depth - 1].rows));
        Network::new(self.input_dim, layers, self.activation.clone())
    }

    /// For each hidden neuron, whether a path of open (nonzero-slope) neurons
    /// through nonzero weights connects it to some output. The neuron itself
    /// is not required to be open.
    pub fn good_mask(&self, pattern: &ActivationPattern) -> Vec<bool> {
        let offsets = self.layer_offsets();
        let depth = self.depth();
        let mut good = vec![false; self.hidden_neuron_count()];
        if depth == 0 {
            return good;
        }
        // reaches[k] for the layer above the one being processed
        let out = self.output_layer();
        let mut reach_above: Vec<bool> = vec![true; out.rows];
        let mut above = out;
        for l in (0..depth).rev() {
            let width = self.layers[l].rows;
            let mut reach = vec![false; width];
            for (j, r) in reach.iter_mut().enumerate() {
                *r = (0..above.rows).any(|k| reach_above[k] && above.weight(k, j) != 0.0);
                good[offsets[l] + j] = *r;
            }
            // the next layer down only passes through open neurons of this layer
            reach_above = reach
                .iter()
                .enumerate()
                .map(|(j, &r)| r && self.activation.slope(pattern.piece(offsets[l] + j)) != 0.0)
                .collect();
            above = &self.layers[l];
        }
        good
    }

    /// Backpropagated sensitivity of every output to each hidden neuron's
    /// post-activation, `d output / d post`, for the fixed pattern.
    pub fn output_sensitivities(&self, pattern: &ActivationPattern) -> Vec<Vec<f64>> {
        let offsets = self.layer_offsets();
        let depth = self.depth();
        let od = self.output_dim();
        let mut sens = vec![vec![0.0; od]; self.hidden_neuron_count()];
        if depth == 0 {
            return sens;
        }
        // rows: d output_o / d post of current layer, stored [unit][o]
        let out = self.output_layer();
        let mut current: Vec<Vec<f64>> = (0..out.cols)
            .map(|j| (0..od).map(|o| out.weight(o, j)).collect())
            .collect();
        for l in (0..depth).rev() {
            for (j, s) in current.iter().enumerate() {
                sens[offsets[l] + j].clone_from(s);
            }
            if l == 0 {
                break;
            }
            let layer = &self.layers[l];
            let mut below = vec![vec![0.0; od]; layer.cols];
            for (i, s) in current.iter().enumerate() {
                let q = self.activation.slope(pattern.piece(offsets[l] + i));
                if q == 0.0 {
                    continue;
                }
                for (k, b) in below.iter_mut().enumerate() {
                    let w = layer.weight(i, k) * q;
                    if w != 0.0 {
                        for (bo, &so) in b.iter_mut().zip(s) {
                            *bo += w * so;
                        }
                    }
                }
            }
            current = below;
        }
        sens
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_relu() -> Network {
        Network::new(
            1,
            vec![
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap()
    }

    #[test]
    fn single_relu_forward() {
        let net = single_relu();
        assert_eq!(net.output(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(net.output(&[-1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(3, &[4, 5], 2, PiecewiseLinearActivation::relu());
        let pass = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(pass.output, vec![0.0, 0.0]);
        assert!(pass.pre.iter().flatten().all(|&p| p == 0.0));
        let g = net.neuron_gradient(&[1.0, 2.0, 3.0], NeuronRef::new(2, 1)).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn pattern_flags_boundary() {
        let net = single_relu();
        assert_eq!(net.activation_pattern(&[3.0]).unwrap().0, vec![1]);
        match net.activation_pattern(&[0.0]) {
            Err(Error::OnBoundary { neurons }) => assert_eq!(neurons, vec![NeuronRef::new(1, 0)]),
            other => panic!("expected on-boundary, got {other:?}"),
        }
        assert!(net.local_affine(&[0.0]).is_err());
        // right-closed tie rule
        assert_eq!(net.pattern_right_closed(&[0.0]).unwrap().0, vec![1]);
    }

    #[test]
    fn hard_tanh_pattern() {
        let net = Network::new(
            1,
            vec![
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::hard_tanh(),
        )
        .unwrap();
        assert_eq!(net.activation_pattern(&[0.5]).unwrap().0, vec![1]);
    }

    #[test]
    fn shape_errors() {
        let net = single_relu();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(net.neuron_gradient(&[1.0], NeuronRef::new(2, 0)).is_err());
        assert!(Network::new(
            2,
            vec![Layer::new(1, 3, vec![0.0; 3], vec![0.0]).unwrap()],
            PiecewiseLinearActivation::relu()
        )
        .is_err());
    }

    #[test]
    fn zero_network_affine_is_output_bias() {
        let mut net = Network::zeros(2, &[3], 2, PiecewiseLinearActivation::relu());
        net.layers_mut()[1].biases_mut().copy_from_slice(&[0.5, -1.5]);
        // every pre-activation is exactly 0: on the boundary
        assert!(net.local_affine(&[1.0, 1.0]).is_err());
        let pattern = net.pattern_right_closed(&[1.0, 1.0]).unwrap();
        let a = net.affine_for_pattern(&pattern);
        assert!(a.is_zero_matrix());
        assert_eq!(a.offset, vec![0.5, -1.5]);
    }

    #[test]
    fn positive_chain_affine_is_weight_product() {
        let net = Network::new(
            1,
            vec![
                Layer::new(1, 1, vec![2.0], vec![1.0]).unwrap(),
                Layer::new(1, 1, vec![3.0], vec![0.5]).unwrap(),
                Layer::new(1, 1, vec![-0.5], vec![0.25]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let a = net.local_affine(&[1.0]).unwrap();
        assert_eq!(a.matrix, vec![2.0 * 3.0 * -0.5]);
        let y = net.output(&[1.0]).unwrap()[0];
        assert!((a.apply(&[1.0])[0] - y).abs() < 1e-12);
    }

    #[test]
    fn first_layer_gradient_is_weight_row() {
        let net = Network::new(
            3,
            vec![
                Layer::new(2, 3, vec![1.0, -2.0, 0.5, 0.3, 0.1, -0.7], vec![0.1, -0.2]).unwrap(),
                Layer::new(1, 2, vec![1.0, 1.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let g = net.neuron_gradient(&[0.3, 0.2, 0.1], NeuronRef::new(1, 1)).unwrap();
        assert_eq!(g, vec![0.3, 0.1, -0.7]);
    }

    #[test]
    fn flat_index_round_trip() {
        let net = Network::zeros(2, &[3, 4, 2], 1, PiecewiseLinearActivation::relu());
        for flat in 0..net.hidden_neuron_count() {
            let z = net.neuron_ref(flat);
            assert_eq!(net.flat_index(z), flat);
        }
        assert_eq!(net.neuron_ref(3), NeuronRef::new(2, 0));
    }

    #[test]
    fn dead_neuron_is_not_good() {
        // neuron (1,1) feeds only zero weights
        let net = Network::new(
            1,
            vec![
                Layer::new(2, 1, vec![1.0, 1.0], vec![0.1, -0.3]).unwrap(),
                Layer::new(1, 2, vec![1.0, 0.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let p = net.pattern_right_closed(&[1.0]).unwrap();
        assert_eq!(net.good_mask(&p), vec![true, false]);
        let s = net.output_sensitivities(&p);
        assert_eq!(s[1], vec![0.0]);
    }
}
