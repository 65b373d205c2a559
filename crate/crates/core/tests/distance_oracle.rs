mod common;

use common::{arb_net, gaussian_point};
use proptest::prelude::*;
use pwl_regions::boundary::verify_distance_exactness;
use pwl_regions::distance_to_boundary;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The closed-form distance never exceeds the first pattern change along
    /// any ray, and matches bisection along the minimizing normal.
    #[test]
    fn distance_formula_against_ray_search(net in arb_net(1..=4, 20), seed in any::<u64>()) {
        let x = gaussian_point(seed, 7, net.input_dim());
        let check = verify_distance_exactness(&net, &x, 64, seed).unwrap();
        prop_assert!(!check.lower_bound_violated, "{:?}", check);
        prop_assert!(!check.bisection_mismatch, "{:?}", check);
        prop_assert!(check.formula >= 0.0);
    }

    /// Moving a bit less than the distance along any direction keeps the pattern.
    #[test]
    fn ball_inside_distance_keeps_pattern(net in arb_net(1..=4, 20), seed in any::<u64>()) {
        let n = net.input_dim();
        let x = gaussian_point(seed, 0, n);
        let d = distance_to_boundary(&net, &x).unwrap().distance;
        prop_assume!(d.is_finite());
        let pattern = net.pattern_right_closed(&x).unwrap();
        for k in 1..=16 {
            let dir = gaussian_point(seed, k, n);
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + 0.999 * d * b / len).collect();
            prop_assert_eq!(&net.pattern_right_closed(&y).unwrap(), &pattern);
        }
    }
}
