#![allow(dead_code)]

use proptest::prelude::*;
use pwl_regions::netgen::{std_normal, stream_rng};
use pwl_regions::{he_init, InitSpec, Network, PiecewiseLinearActivation};

pub fn activation(kind: u8) -> PiecewiseLinearActivation {
    match kind % 3 {
        0 => PiecewiseLinearActivation::relu(),
        1 => PiecewiseLinearActivation::hard_tanh(),
        _ => PiecewiseLinearActivation::leaky_relu(0.2).unwrap(),
    }
}

/// He-initialized nets with at most `max_neurons` hidden neurons and biases
/// large enough to put breakpoints inside the unit ball.
pub fn arb_net(input_dims: std::ops::RangeInclusive<usize>, max_neurons: usize) -> impl Strategy<Value = Network> {
    (
        input_dims,
        prop::collection::vec(1usize..=8, 1..=3),
        0u8..3,
        any::<u64>(),
    )
        .prop_filter("neuron budget", move |(_, h, _, _)| h.iter().sum::<usize>() <= max_neurons)
        .prop_map(|(n_in, hidden, act, seed)| {
            let spec = InitSpec::he(n_in, &hidden, 2, seed)
                .with_bias_sd(0.5)
                .with_activation(activation(act));
            he_init(&spec).unwrap()
        })
}

pub fn gaussian_point(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| std_normal(&mut rng)).collect()
}

pub fn hidden_pre(net: &Network, x: &[f64]) -> Vec<f64> {
    net.forward(x).unwrap().pre.concat()
}
