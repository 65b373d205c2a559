mod common;

use common::{arb_net, gaussian_point, hidden_pre};
use proptest::prelude::*;
use pwl_regions::region1d::filter_crossings_by_gradient;
use pwl_regions::{build_sawtooth, count_regions_on_line, count_regions_on_segment, perturb, Layer, Network};

const GRID: usize = 4001;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// Exact partition of a segment against dense sampling, and interval
    /// ends against the stored pattern.
    #[test]
    fn segment_partition_matches_dense_sampling(net in arb_net(1..=3, 20), seed in any::<u64>()) {
        let n = net.input_dim();
        let p0: Vec<f64> = gaussian_point(seed, 0, n).iter().map(|v| 2.0 * v).collect();
        let p1: Vec<f64> = gaussian_point(seed, 1, n).iter().map(|v| 2.0 * v).collect();
        let part = count_regions_on_segment(&net, &p0, &p1).unwrap();
        prop_assert_eq!(part.intervals.len(), part.crossings.len() + 1);
        prop_assert_eq!(part.intervals.first().unwrap().lo, 0.0);
        prop_assert_eq!(part.intervals.last().unwrap().hi, 1.0);

        // Pattern constant on each interval: equal at both shrunk ends, which
        // forces it constant in between since every layer is affine there.
        for (k, iv) in part.intervals.iter().enumerate() {
            let d = 1e-7 * (iv.hi - iv.lo);
            for t in [iv.lo + d, iv.hi - d] {
                prop_assert_eq!(&net.pattern_right_closed(&part.point_at(t)).unwrap(), &iv.pattern);
            }
            if k > 0 {
                prop_assert_ne!(&part.intervals[k - 1].pattern, &iv.pattern);
                prop_assert_eq!(part.intervals[k - 1].hi, iv.lo);
            }
        }

        // Dense samples agree with the interval containing them.
        let mut runs = 1;
        let mut prev = None;
        for j in 0..GRID {
            let t = j as f64 / (GRID - 1) as f64;
            let pattern = net.pattern_right_closed(&part.point_at(t)).unwrap();
            let near_crossing = part.crossings.iter().any(|c| (c.t - t).abs() < 1e-9);
            if !near_crossing {
                prop_assert_eq!(&pattern, &part.interval_at(t).unwrap().pattern, "t = {}", t);
            }
            if prev.as_ref().is_some_and(|p| p != &pattern) {
                runs += 1;
            }
            prev = Some(pattern);
        }
        prop_assert!(runs <= part.region_count());
    }

    /// Input gradients of every pre-activation against central differences.
    #[test]
    fn neuron_gradient_matches_finite_differences(net in arb_net(1..=4, 20), seed in any::<u64>()) {
        let n = net.input_dim();
        let x = gaussian_point(seed, 0, n);
        let h = 1e-6;
        let pattern = net.pattern_right_closed(&x).unwrap();
        let mut shifted = Vec::with_capacity(2 * n);
        for i in 0..n {
            for s in [h, -h] {
                let mut y = x.clone();
                y[i] += s;
                shifted.push(y);
            }
        }
        prop_assume!(shifted.iter().all(|y| net.pattern_right_closed(y).unwrap() == pattern));
        for flat in 0..net.hidden_neuron_count() {
            let z = net.neuron_ref(flat);
            let g = net.neuron_gradient(&x, z).unwrap();
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
            for i in 0..n {
                let fd = (hidden_pre(&net, &shifted[2 * i])[flat] - hidden_pre(&net, &shifted[2 * i + 1])[flat]) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-4 * scale, "neuron {:?} coord {}: fd {} vs {}", z, i, fd, g[i]);
            }
        }
    }

    /// Relabeling hidden units leaves the partition of any line unchanged.
    #[test]
    fn permuting_hidden_units_preserves_counts(net in arb_net(1..=3, 20), seed in any::<u64>(), shift in 1usize..7) {
        let permuted = rotate_units(&net, shift);
        let n = net.input_dim();
        let point = gaussian_point(seed, 0, n);
        let dir = gaussian_point(seed, 1, n);
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        prop_assert!(close(&net.output(&point).unwrap(), &permuted.output(&point).unwrap()));
        let a = count_regions_on_line(&net, &point, &dir).unwrap();
        let b = count_regions_on_line(&permuted, &point, &dir).unwrap();
        prop_assert_eq!(a.region_count(), b.region_count());
        prop_assert!(close(&a.crossing_params(), &b.crossing_params()));
        prop_assert_eq!(
            filter_crossings_by_gradient(&a).region_count(),
            filter_crossings_by_gradient(&b).region_count()
        );
    }
}

/// Cyclically shifts the units of every hidden layer by `shift`.
fn rotate_units(net: &Network, shift: usize) -> Network {
    let layers = net.layers();
    let mut out = Vec::with_capacity(layers.len());
    let mut prev_perm: Option<Vec<usize>> = None;
    for (l, layer) in layers.iter().enumerate() {
        let (rows, cols) = (layer.rows(), layer.cols());
        let perm: Vec<usize> = if l + 1 < layers.len() {
            (0..rows).map(|i| (i + shift) % rows).collect()
        } else {
            (0..rows).collect()
        };
        let mut w = Vec::with_capacity(rows * cols);
        for &r in &perm {
            for c in 0..cols {
                let src_col = prev_perm.as_ref().map_or(c, |p| p[c]);
                w.push(layer.weight(r, src_col));
            }
        }
        let b = perm.iter().map(|&r| layer.biases()[r]).collect();
        out.push(Layer::new(rows, cols, w, b).unwrap());
        prev_perm = Some(perm);
    }
    Network::new(net.input_dim(), out, net.activation().clone()).unwrap()
}

#[test]
fn sawtooth_piece_counts() {
    for n in 1..=8 {
        let net = build_sawtooth(n).unwrap();
        assert_eq!(net.neuron_count(), 3 * n + 4);
        let part = count_regions_on_segment(&net, &[0.0], &[1.0]).unwrap();
        assert_eq!(filter_crossings_by_gradient(&part).region_count(), 1 << (n + 1), "n = {n}");
        // teeth: local maxima of the output at the crossing points
        let values: Vec<f64> = part
            .crossing_params()
            .iter()
            .map(|&t| net.output(&[t]).unwrap()[0])
            .collect();
        let peaks = values.iter().filter(|&&v| (v - 1.0).abs() < 1e-9).count();
        assert_eq!(peaks, 1 << n, "n = {n}");
    }
}

#[test]
fn perturbed_sawtooth_is_usually_simpler() {
    let net = build_sawtooth(6).unwrap();
    let pieces = |net: &Network| {
        filter_crossings_by_gradient(&count_regions_on_segment(net, &[0.0], &[1.0]).unwrap()).region_count()
    };
    let base = pieces(&net);
    let reduced = (0..40).filter(|&s| pieces(&perturb(&net, 0.1, s).unwrap()) < base).count();
    assert!(reduced >= 36, "{reduced} of 40");
}
