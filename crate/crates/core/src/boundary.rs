//! Distance from a point to the boundary of its linear region.
//!
//! On the region containing `x` every pre-activation is affine, so the
//! distance to the level set `pre_z = xi_i` is `|pre_z(x) - xi_i| / |grad z|`.
//! The minimum over neurons and breakpoints is the exact distance to the
//! boundary of the (convex) region.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::PieceLookup;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::netgen::{std_normal, stream_rng};
use crate::network::{dot, norm, ActivationPattern, Network, NeuronRef};
use crate::region1d::{count_regions_in_range, filter_crossings_by_gradient};
use crate::stats::{quantile_sorted, Histogram, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    /// Input units; `0` on a boundary, infinite when every gradient vanishes.
    pub distance: f64,
    pub neuron: Option<NeuronRef>,
    pub breakpoint: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceOptions {
    /// Skip neurons whose crossing would not change the output gradient.
    pub gradient_filter: bool,
}

/// Precomputed first-layer Gram matrix so that input-gradient norms cost
/// `O(width^2)` per neuron instead of `O(width * n_in)`.
pub struct BoundaryProbe<'a> {
    net: &'a Network,
    gram: Option<Vec<f64>>,
}

impl<'a> BoundaryProbe<'a> {
    pub fn new(net: &'a Network) -> Self {
        let first = &net.layers()[0];
        let n1 = first.rows();
        let gram = if n1 < net.input_dim() && net.depth() > 1 {
            let mut g = vec![0.0; n1 * n1];
            for i in 0..n1 {
                for j in i..n1 {
                    let v = dot(first.row(i), first.row(j));
                    g[i * n1 + j] = v;
                    g[j * n1 + i] = v;
                }
            }
            Some(g)
        } else {
            None
        };
        Self { net, gram }
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Input-gradient norms of all hidden neurons for a fixed pattern.
    pub fn gradient_norms(&self, pattern: &ActivationPattern) -> Vec<f64> {
        let net = self.net;
        let Some(gram) = &self.gram else {
            return net
                .hidden_gradients_for_pattern(pattern)
                .iter()
                .zip(net.hidden_widths())
                .flat_map(|(g, w)| {
                    let n = net.input_dim();
                    (0..w).map(move |i| norm(&g[i * n..(i + 1) * n])).collect::<Vec<_>>()
                })
                .collect();
        };
        let act = net.activation();
        let offsets = net.layer_offsets();
        let n1 = net.layers()[0].rows();
        let mut out = Vec::with_capacity(net.hidden_neuron_count());
        for i in 0..n1 {
            out.push(gram[i * n1 + i].max(0.0).sqrt());
        }
        // d pre_l / d pre_1, row-major width_l x n1
        let mut jac: Vec<f64> = Vec::new();
        for l in 1..net.depth() {
            let layer = &net.layers()[l];
            let slopes: Vec<f64> = (offsets[l - 1]..offsets[l])
                .map(|f| act.slope(pattern.piece(f)))
                .collect();
            let mut next = vec![0.0; layer.rows() * n1];
            for r in 0..layer.rows() {
                let row = &mut next[r * n1..(r + 1) * n1];
                for (k, (&w, &q)) in layer.row(r).iter().zip(&slopes).enumerate() {
                    let s = w * q;
                    if s == 0.0 {
                        continue;
                    }
                    if l == 1 {
                        row[k] += s;
                    } else {
                        for (a, &b) in row.iter_mut().zip(&jac[k * n1..(k + 1) * n1]) {
                            *a += s * b;
                        }
                    }
                }
            }
            for r in 0..layer.rows() {
                let g = &next[r * n1..(r + 1) * n1];
                let mut sq = 0.0;
                for (i, &gi) in g.iter().enumerate() {
                    if gi != 0.0 {
                        sq += gi * dot(&gram[i * n1..(i + 1) * n1], g);
                    }
                }
                out.push(sq.max(0.0).sqrt());
            }
            jac = next;
        }
        out
    }

    pub fn distance(&self, x: &[f64], opts: DistanceOptions) -> Result<DistanceSample> {
        let net = self.net;
        let pass = net.forward(x)?;
        let act = net.activation();
        for (l, pre) in pass.pre.iter().enumerate() {
            for (u, &p) in pre.iter().enumerate() {
                if let PieceLookup::OnBreakpoint(j) = act.lookup(p) {
                    return Ok(DistanceSample {
                        distance: 0.0,
                        neuron: Some(NeuronRef::new(l + 1, u)),
                        breakpoint: Some(j),
                    });
                }
            }
        }
        let pattern = net.pattern_of(&pass);
        let norms = self.gradient_norms(&pattern);
        let silent: Option<Vec<bool>> = opts.gradient_filter.then(|| {
            net.output_sensitivities(&pattern)
                .iter()
                .map(|s| s.iter().all(|&v| v == 0.0))
                .collect()
        });
        let mut best = DistanceSample {
            distance: f64::INFINITY,
            neuron: None,
            breakpoint: None,
        };
        for (flat, &p) in pass.pre.iter().flatten().enumerate() {
            let g = norms[flat];
            if g == 0.0 || silent.as_ref().is_some_and(|s| s[flat]) {
                continue;
            }
            for (j, &xi) in act.breakpoints().iter().enumerate() {
                let d = (p - xi).abs() / g;
                if d < best.distance {
                    best = DistanceSample {
                        distance: d,
                        neuron: Some(net.neuron_ref(flat)),
                        breakpoint: Some(j),
                    };
                }
            }
        }
        Ok(best)
    }
}

pub fn distance_to_boundary(net: &Network, x: &[f64]) -> Result<DistanceSample> {
    BoundaryProbe::new(net).distance(x, DistanceOptions::default())
}

/// Where sample points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SampleSource {
    /// Normal with the training set's per-coordinate mean and variance.
    GaussianMomentMatched,
    DatasetTrain,
    DatasetTest,
    UniformCube { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub source: SampleSource,
    pub count: usize,
    pub seed: u64,
}

/// Datasets available to a sampler.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleContext<'a> {
    pub train: Option<&'a Dataset>,
    pub test: Option<&'a Dataset>,
}

impl SampleSpec {
    /// The sample points; point `i` uses stream `i` of the seed.
    pub fn draw(&self, input_dim: usize, ctx: SampleContext<'_>) -> Result<Vec<Vec<f64>>> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let need = |d: Option<&Dataset>, what: &str| -> Result<()> {
            match d {
                None => Err(Error::Config(format!("sample source {what} needs a loaded dataset"))),
                Some(d) if d.dim() != input_dim => Err(Error::Shape {
                    context: "dataset dimension".into(),
                    expected: input_dim,
                    found: d.dim(),
                }),
                Some(_) => Ok(()),
            }
        };
        match &self.source {
            SampleSource::GaussianMomentMatched | SampleSource::DatasetTrain => need(ctx.train, "train")?,
            SampleSource::DatasetTest => need(ctx.test, "test")?,
            SampleSource::UniformCube { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidArgument("uniform cube needs lo < hi".into()));
                }
            }
        }
        if let SampleSource::GaussianMomentMatched = self.source {
            ctx.train.expect("checked").moments();
        }
        Ok((0..self.count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(self.seed, i as u64);
                match &self.source {
                    SampleSource::GaussianMomentMatched => ctx.train.expect("checked").moment_matched_sample(&mut rng),
                    SampleSource::DatasetTrain => pick(ctx.train.expect("checked"), &mut rng),
                    SampleSource::DatasetTest => pick(ctx.test.expect("checked"), &mut rng),
                    SampleSource::UniformCube { lo, hi } => {
                        (0..input_dim).map(|_| rng.random_range(*lo..*hi)).collect()
                    }
                }
            })
            .collect())
    }
}

fn pick<R: Rng + ?Sized>(d: &Dataset, rng: &mut R) -> Vec<f64> {
    d.input_f64(rng.random_range(0..d.len()))
}

/// Distances for a batch of samples with log10 summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub samples: Vec<DistanceSample>,
    /// Mean over finite distances.
    pub mean: f64,
    pub std_error: f64,
    /// 5%, 25%, 50%, 75% and 95% quantiles of the finite distances.
    pub quantiles: [f64; 5],
    pub min: f64,
    pub max: f64,
    /// Histogram of `log10(distance)` over positive finite distances.
    pub log10_histogram: Histogram,
    pub zero_count: usize,
    pub infinite_count: usize,
}

pub const DEFAULT_BINS: usize = 50;

impl DistanceReport {
    pub fn from_samples(samples: Vec<DistanceSample>, bins: usize) -> Self {
        let mut finite: Vec<f64> = samples
            .iter()
            .map(|s| s.distance)
            .filter(|d| d.is_finite())
            .collect();
        let stats: RunningStats = finite.iter().copied().collect();
        finite.sort_by(f64::total_cmp);
        let q = [0.05, 0.25, 0.5, 0.75, 0.95].map(|p| quantile_sorted(&finite, p));
        let logs: Vec<f64> = finite.iter().filter(|&&d| d > 0.0).map(|d| d.log10()).collect();
        let (lo, hi) = match (logs.first(), logs.last()) {
            (Some(&a), Some(&b)) if b > a => (a, b + (b - a) * 1e-9),
            (Some(&a), _) => (a - 0.5, a + 0.5),
            _ => (0.0, 1.0),
        };
        let mut hist = Histogram::new(lo, hi, bins.max(1));
        logs.iter().for_each(|&v| hist.push(v));
        Self {
            mean: stats.mean(),
            std_error: stats.std_error(),
            quantiles: q,
            min: finite.first().copied().unwrap_or(f64::NAN),
            max: finite.last().copied().unwrap_or(f64::NAN),
            log10_histogram: hist,
            zero_count: samples.iter().filter(|s| s.distance == 0.0).count(),
            infinite_count: samples.iter().filter(|s| s.distance.is_infinite()).count(),
            samples,
        }
    }

    /// Ratio of the largest to the smallest positive finite distance.
    pub fn spread(&self) -> f64 {
        let pos: Vec<f64> = self
            .samples
            .iter()
            .map(|s| s.distance)
            .filter(|d| d.is_finite() && *d > 0.0)
            .collect();
        let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pos.iter().copied().fold(0.0, f64::max);
        hi / lo
    }
}

pub fn distance_histogram(
    net: &Network,
    spec: &SampleSpec,
    ctx: SampleContext<'_>,
    opts: DistanceOptions,
    bins: usize,
) -> Result<DistanceReport> {
    let points = spec.draw(net.input_dim(), ctx)?;
    distances_at(net, &points, opts, bins)
}

pub fn distances_at(net: &Network, points: &[Vec<f64>], opts: DistanceOptions, bins: usize) -> Result<DistanceReport> {
    let probe = BoundaryProbe::new(net);
    let samples = points
        .par_iter()
        .map(|x| probe.distance(x, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceReport::from_samples(samples, bins))
}

/// Comparison of the distance formula against search oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCheck {
    pub formula: f64,
    /// First pattern change along the minimizing neuron's normal, by bisection.
    pub bisection: Option<f64>,
    /// Smallest first pattern change over the random directions.
    pub directional_min: f64,
    pub directions: usize,
    /// `formula > directional_min + tol`.
    pub lower_bound_violated: bool,
    /// `|formula - bisection| > 1e-8 * scale`.
    pub bisection_mismatch: bool,
    /// The crossing at the formula distance leaves the output gradient
    /// unchanged, so the formula underestimates the distance to the set where
    /// the gradient is discontinuous.
    pub known_gap: bool,
    /// Distance along the normal to the first output-gradient jump.
    pub gradient_boundary_along_normal: Option<f64>,
}

impl DistanceCheck {
    pub fn ok(&self) -> bool {
        !self.lower_bound_violated && !self.bisection_mismatch
    }
}

fn unit_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
        let l = norm(&v);
        if l > 0.0 {
            return v.iter().map(|x| x / l).collect();
        }
    }
}

/// First parameter `t > 0` where the pattern changes along `x + t d`.
fn first_change(net: &Network, x: &[f64], d: &[f64]) -> Result<Option<f64>> {
    let p = count_regions_in_range(net, x, d, 0.0, f64::INFINITY)?;
    Ok(p.crossings.first().map(|c| c.t))
}

/// Checks the formula at interior `x` against bisection along the minimizing
/// normal and exact ray searches in `directions` random directions.
pub fn verify_distance_exactness(net: &Network, x: &[f64], directions: usize, seed: u64) -> Result<DistanceCheck> {
    let formula = distance_to_boundary(net, x)?;
    let n = net.input_dim();
    let mut rng = stream_rng(seed, 0);
    let mut directional_min = f64::INFINITY;
    for _ in 0..directions {
        let d = unit_random(n, &mut rng);
        if let Some(t) = first_change(net, x, &d)? {
            directional_min = directional_min.min(t);
        }
    }
    let scale = 1.0 + formula.distance.abs();
    let mut check = DistanceCheck {
        formula: formula.distance,
        bisection: None,
        directional_min,
        directions,
        lower_bound_violated: formula.distance > directional_min + 1e-9 * (1.0 + directional_min),
        bisection_mismatch: false,
        known_gap: false,
        gradient_boundary_along_normal: None,
    };
    let (Some(z), Some(j)) = (formula.neuron, formula.breakpoint) else {
        return Ok(check);
    };
    if formula.distance == 0.0 {
        return Ok(check);
    }
    let pattern = net.activation_pattern(x)?;
    let grad = net.neuron_gradient_for_pattern(&pattern, z);
    let pre = net.forward(x)?.pre[z.layer - 1][z.unit];
    let xi = net.activation().breakpoints()[j];
    let g = norm(&grad);
    let sign = if xi > pre { 1.0 } else { -1.0 };
    let dir: Vec<f64> = grad.iter().map(|v| sign * v / g).collect();
    let at = |s: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
    // bracket: no change at lo, change at hi
    let (mut lo, mut hi) = (0.0, 2.0 * formula.distance);
    let mut bracketed = false;
    for _ in 0..60 {
        if net.pattern_right_closed(&at(hi))? != pattern {
            bracketed = true;
            break;
        }
        hi *= 2.0;
    }
    if bracketed {
        while hi - lo > 1e-10 * scale {
            let mid = 0.5 * (lo + hi);
            if net.pattern_right_closed(&at(mid))? == pattern {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        check.bisection = Some(hi);
        check.bisection_mismatch = (hi - formula.distance).abs() > 1e-8 * scale;
    } else {
        check.bisection_mismatch = true;
    }
    let line = count_regions_in_range(net, x, &dir, 0.0, f64::INFINITY)?;
    let filtered = filter_crossings_by_gradient(&line);
    let first_jump = filtered.crossings.first().map(|c| c.t);
    check.gradient_boundary_along_normal = first_jump;
    check.known_gap = match first_jump {
        Some(t) => t > formula.distance * (1.0 + 1e-9) + 1e-12,
        None => true,
    };
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{he_init, InitSpec};
    use crate::network::Layer;
    use crate::PiecewiseLinearActivation;

    #[test]
    fn plane_distance() {
        let net = Network::new(
            2,
            vec![
                Layer::new(1, 2, vec![1.0, 0.0], vec![0.0]).unwrap(),
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let d = distance_to_boundary(&net, &[0.3, 7.0]).unwrap();
        assert!((d.distance - 0.3).abs() < 1e-15);
        assert_eq!(d.neuron, Some(NeuronRef::new(1, 0)));
        let on = distance_to_boundary(&net, &[0.0, 1.0]).unwrap();
        assert_eq!(on.distance, 0.0);
        let c = verify_distance_exactness(&net, &[0.3, 7.0], 50, 1).unwrap();
        assert!((c.bisection.unwrap() - 0.3).abs() < 1e-10);
        assert!(c.ok() && !c.known_gap);
    }

    #[test]
    fn dead_network_is_infinitely_far() {
        let net = Network::zeros(3, &[4], 1, PiecewiseLinearActivation::relu());
        let mut net2 = net.clone();
        net2.layers_mut()[0].biases_mut().iter_mut().for_each(|b| *b = 1.0);
        assert_eq!(distance_to_boundary(&net2, &[1.0, 2.0, 3.0]).unwrap().distance, f64::INFINITY);
    }

    #[test]
    fn gram_norms_match_direct_gradients() {
        let net = he_init(&InitSpec::he(40, &[8, 6, 5], 2, 3)).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let probe = BoundaryProbe::new(&net);
        let pattern = net.pattern_right_closed(&x).unwrap();
        let norms = probe.gradient_norms(&pattern);
        for flat in 0..net.hidden_neuron_count() {
            let g = net.neuron_gradient_for_pattern(&pattern, net.neuron_ref(flat));
            assert!((norm(&g) - norms[flat]).abs() < 1e-10 * (1.0 + norms[flat]));
        }
    }

    #[test]
    fn dead_neuron_is_a_known_gap() {
        // neuron 1 feeds a zero weight; its hyperplane x = 0.1 is not part of the boundary
        let net = Network::new(
            1,
            vec![
                Layer::new(2, 1, vec![1.0, 1.0], vec![1.0, -0.1]).unwrap(),
                Layer::new(1, 2, vec![1.0, 0.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let c = verify_distance_exactness(&net, &[0.3], 20, 2).unwrap();
        assert!((c.formula - 0.2).abs() < 1e-12);
        assert!(c.known_gap);
        assert!((c.gradient_boundary_along_normal.unwrap() - 1.3).abs() < 1e-12);
        let filtered = BoundaryProbe::new(&net)
            .distance(&[0.3], DistanceOptions { gradient_filter: true })
            .unwrap();
        assert!((filtered.distance - 1.3).abs() < 1e-12);
    }

    #[test]
    fn report_mass_and_determinism() {
        let net = he_init(&InitSpec::he(5, &[6, 6], 1, 1)).unwrap();
        let spec = SampleSpec {
            source: SampleSource::UniformCube { lo: -1.0, hi: 1.0 },
            count: 300,
            seed: 9,
        };
        let r = distance_histogram(&net, &spec, SampleContext::default(), DistanceOptions::default(), 50).unwrap();
        assert_eq!(r.log10_histogram.total() as usize + r.zero_count + r.infinite_count, 300);
        let again = distance_histogram(&net, &spec, SampleContext::default(), DistanceOptions::default(), 50).unwrap();
        assert_eq!(r.mean.to_bits(), again.mean.to_bits());
        let missing = SampleSpec {
            source: SampleSource::DatasetTrain,
            ..spec
        };
        assert!(matches!(
            distance_histogram(&net, &missing, SampleContext::default(), DistanceOptions::default(), 50),
            Err(Error::Config(_))
        ));
    }
}
