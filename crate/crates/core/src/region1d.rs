//! Exact linear regions along a line or segment.
//!
//! The line `origin + t * direction` is pushed through the network one hidden
//! layer at a time. On every current interval each neuron's pre-activation is
//! affine in `t`, so its breakpoint crossings are roots of affine functions.
//! The interval is cut at those roots and the next layer sees the refined
//! partition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::PiecewiseLinearActivation;
use crate::error::{Error, Result};
use crate::network::{ActivationPattern, Network, NeuronRef};

/// Two parameters closer than `MERGE_TOL * (1 + |t|)` are the same point.
pub const MERGE_TOL: f64 = 1e-12;

/// Relative output-slope jump below which a crossing is not a gradient
/// discontinuity.
pub const GRADIENT_JUMP_TOL: f64 = 1e-8;

fn tol(t: f64) -> f64 {
    MERGE_TOL * (1.0 + t.abs())
}

/// Lower end of the open range where roots count as interior.
fn inner_lo(lo: f64) -> f64 {
    if lo.is_finite() {
        lo + tol(lo)
    } else {
        lo
    }
}

fn inner_hi(hi: f64) -> f64 {
    if hi.is_finite() {
        hi - tol(hi)
    } else {
        hi
    }
}

/// A hidden neuron crossing breakpoint `breakpoint` of the activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingNeuron {
    pub neuron: NeuronRef,
    pub breakpoint: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub neurons: Vec<CrossingNeuron>,
    /// More than one neuron changes piece here.
    pub degenerate: bool,
}

/// A maximal parameter interval with constant activation pattern. The network
/// output on it is `output_slope * t + output_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineInterval {
    pub lo: f64,
    pub hi: f64,
    pub pattern: ActivationPattern,
    pub output_slope: Vec<f64>,
    pub output_offset: Vec<f64>,
}

impl LineInterval {
    pub fn output_at(&self, t: f64) -> Vec<f64> {
        self.output_slope
            .iter()
            .zip(&self.output_offset)
            .map(|(s, o)| s * t + o)
            .collect()
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePartition {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub intervals: Vec<LineInterval>,
    /// `crossings[i]` separates `intervals[i]` and `intervals[i + 1]`.
    pub crossings: Vec<Crossing>,
    /// Number of intervals entering each hidden layer.
    pub layer_intervals: Vec<usize>,
    /// Crossings without an output-gradient jump have been removed.
    pub gradient_filtered: bool,
}

impl LinePartition {
    pub fn region_count(&self) -> usize {
        self.crossings.len() + 1
    }

    /// Crossings counted once per participating neuron.
    pub fn neuron_crossing_count(&self) -> usize {
        self.crossings.iter().map(|c| c.neurons.len()).sum()
    }

    pub fn degenerate_count(&self) -> usize {
        self.crossings.iter().filter(|c| c.degenerate).count()
    }

    pub fn crossing_params(&self) -> Vec<f64> {
        self.crossings.iter().map(|c| c.t).collect()
    }

    /// Interval containing `t`, right-closed at crossings.
    pub fn interval_at(&self, t: f64) -> Option<&LineInterval> {
        if t < self.t_min || t > self.t_max {
            return None;
        }
        let i = self.crossings.partition_point(|c| c.t <= t);
        self.intervals.get(i)
    }

    /// Input-space point at parameter `t`.
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.direction)
            .map(|(o, d)| o + t * d)
            .collect()
    }

    /// Upper bound on crossings from the splitting recursion:
    /// `sum_l width_l * T * intervals entering layer l`.
    pub fn crossing_budget(&self, net: &Network) -> usize {
        let t = net.activation().num_breakpoints();
        net.hidden_widths()
            .iter()
            .zip(&self.layer_intervals)
            .map(|(w, k)| w * t * k)
            .sum()
    }
}

/// A line or segment `origin + t * direction`, `t` in `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl LineSpec {
    pub fn segment(p0: &[f64], p1: &[f64]) -> Self {
        Self {
            origin: p0.to_vec(),
            direction: p1.iter().zip(p0).map(|(a, b)| a - b).collect(),
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    pub fn line(point: &[f64], direction: &[f64]) -> Self {
        Self {
            origin: point.to_vec(),
            direction: direction.to_vec(),
            t_min: f64::NEG_INFINITY,
            t_max: f64::INFINITY,
        }
    }

    pub fn count(&self, net: &Network) -> Result<LinePartition> {
        count_regions_in_range(net, &self.origin, &self.direction, self.t_min, self.t_max)
    }
}

pub fn count_regions_on_segment(net: &Network, p0: &[f64], p1: &[f64]) -> Result<LinePartition> {
    LineSpec::segment(p0, p1).count(net)
}

pub fn count_regions_on_line(net: &Network, point: &[f64], direction: &[f64]) -> Result<LinePartition> {
    LineSpec::line(point, direction).count(net)
}

/// Counts every line in parallel.
pub fn count_regions_batch(net: &Network, lines: &[LineSpec]) -> Vec<Result<LinePartition>> {
    lines.par_iter().map(|l| l.count(net)).collect()
}

/// Partitions of each segment of the polyline through `points`.
pub fn count_regions_on_polyline(net: &Network, points: &[Vec<f64>]) -> Result<Vec<LinePartition>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("polyline needs at least two points".into()));
    }
    points
        .windows(2)
        .map(|w| count_regions_on_segment(net, &w[0], &w[1]))
        .collect()
}

/// Regions met along a polyline: joints inside a region do not add one.
pub fn polyline_region_count(parts: &[LinePartition]) -> usize {
    parts.iter().map(|p| p.crossings.len()).sum::<usize>() + 1
}

struct Work {
    lo: f64,
    hi: f64,
    pattern: Vec<u8>,
    slope: Vec<f64>,
    offset: Vec<f64>,
}

pub fn count_regions_in_range(
    net: &Network,
    origin: &[f64],
    direction: &[f64],
    t_min: f64,
    t_max: f64,
) -> Result<LinePartition> {
    if direction.iter().all(|&d| d == 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    if t_min.is_nan() || t_max.is_nan() || t_min >= t_max {
        return Err(Error::InvalidArgument(format!("empty parameter range [{t_min}, {t_max}]")));
    }
    let restricted = net.restrict_to_slice(origin, &[direction.to_vec()])?;
    let act = restricted.activation();
    let mut work = vec![Work {
        lo: t_min,
        hi: t_max,
        pattern: Vec::new(),
        slope: vec![1.0],
        offset: vec![0.0],
    }];
    let mut layer_intervals = Vec::with_capacity(net.depth());
    for layer in restricted.hidden_layers() {
        layer_intervals.push(work.len());
        let mut next = Vec::with_capacity(work.len() * 2);
        for w in &work {
            let a = layer.apply_linear(&w.slope);
            let c = layer.apply_linear(&w.offset);
            let c: Vec<f64> = c.iter().zip(layer.biases()).map(|(x, b)| x + b).collect();
            split(act, w, &a, &c, &mut next);
        }
        work = next;
    }
    let out = restricted.output_layer();
    let intervals: Vec<LineInterval> = work
        .into_iter()
        .map(|w| {
            let s = out.apply_linear(&w.slope);
            let o = out.apply(&w.offset);
            LineInterval {
                lo: w.lo,
                hi: w.hi,
                pattern: ActivationPattern(w.pattern),
                output_slope: s,
                output_offset: o,
            }
        })
        .collect();
    let intervals = merge_equal(intervals);
    let crossings = intervals
        .windows(2)
        .map(|p| crossing_between(net, &p[0], &p[1]))
        .collect();
    Ok(LinePartition {
        origin: origin.to_vec(),
        direction: direction.to_vec(),
        t_min,
        t_max,
        intervals,
        crossings,
        layer_intervals,
        gradient_filtered: false,
    })
}

/// Piece of `a t + c` just right of `lo`, consistent with the root tolerance.
fn start_piece(act: &PiecewiseLinearActivation, lo: f64, a: f64, c: f64) -> u8 {
    let above = act
        .breakpoints()
        .iter()
        .filter(|&&xi| {
            if a == 0.0 {
                c >= xi
            } else if lo == f64::NEG_INFINITY {
                a < 0.0
            } else {
                let r = (xi - c) / a;
                if a > 0.0 {
                    r <= inner_lo(lo)
                } else {
                    r > inner_lo(lo)
                }
            }
        })
        .count();
    above as u8
}

fn split(act: &PiecewiseLinearActivation, w: &Work, a: &[f64], c: &[f64], out: &mut Vec<Work>) {
    let mut pieces: Vec<u8> = a
        .iter()
        .zip(c)
        .map(|(&ai, &ci)| start_piece(act, w.lo, ai, ci))
        .collect();
    // (t, unit, piece after the crossing)
    let mut events: Vec<(f64, usize, u8)> = Vec::new();
    for (u, (&ai, &ci)) in a.iter().zip(c).enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &xi) in act.breakpoints().iter().enumerate() {
            let r = (xi - ci) / ai;
            if r > inner_lo(w.lo) && r < inner_hi(w.hi) {
                let after = if ai > 0.0 { j + 1 } else { j };
                events.push((r, u, after as u8));
            }
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut lo = w.lo;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        let mut k = i;
        while k < events.len() && events[k].0 - t <= tol(t) {
            k += 1;
        }
        out.push(child(act, w, lo, t, &pieces, a, c));
        for &(_, u, after) in &events[i..k] {
            pieces[u] = after;
        }
        lo = t;
        i = k;
    }
    out.push(child(act, w, lo, w.hi, &pieces, a, c));
}

fn child(
    act: &PiecewiseLinearActivation,
    w: &Work,
    lo: f64,
    hi: f64,
    pieces: &[u8],
    a: &[f64],
    c: &[f64],
) -> Work {
    let mut pattern = Vec::with_capacity(w.pattern.len() + pieces.len());
    pattern.extend_from_slice(&w.pattern);
    pattern.extend_from_slice(pieces);
    let slope = pieces
        .iter()
        .zip(a)
        .map(|(&p, &ai)| act.slope(p as usize) * ai)
        .collect();
    let offset = pieces
        .iter()
        .zip(c)
        .map(|(&p, &ci)| act.slope(p as usize) * ci + act.intercept(p as usize))
        .collect();
    Work {
        lo,
        hi,
        pattern,
        slope,
        offset,
    }
}

fn merge_equal(intervals: Vec<LineInterval>) -> Vec<LineInterval> {
    let mut out: Vec<LineInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if last.pattern == iv.pattern => last.hi = iv.hi,
            _ => out.push(iv),
        }
    }
    out
}

fn crossing_between(net: &Network, left: &LineInterval, right: &LineInterval) -> Crossing {
    let neurons: Vec<CrossingNeuron> = left
        .pattern
        .differences(&right.pattern)
        .into_iter()
        .map(|flat| {
            let (p, q) = (left.pattern.piece(flat), right.pattern.piece(flat));
            CrossingNeuron {
                neuron: net.neuron_ref(flat),
                breakpoint: p.min(q),
            }
        })
        .collect();
    Crossing {
        t: left.hi,
        degenerate: neurons.len() > 1,
        neurons,
    }
}

fn gradient_jumps(left: &LineInterval, right: &LineInterval) -> bool {
    let scale = left
        .output_slope
        .iter()
        .chain(&right.output_slope)
        .fold(0.0f64, |m, s| m.max(s.abs()));
    left.output_slope
        .iter()
        .zip(&right.output_slope)
        .any(|(a, b)| (a - b).abs() > GRADIENT_JUMP_TOL * scale)
}

/// Keeps only crossings where the output slope along the line jumps. Merged
/// intervals keep the pattern of their leftmost part.
pub fn filter_crossings_by_gradient(partition: &LinePartition) -> LinePartition {
    let mut intervals: Vec<LineInterval> = Vec::with_capacity(partition.intervals.len());
    let mut crossings = Vec::with_capacity(partition.crossings.len());
    for (i, iv) in partition.intervals.iter().enumerate() {
        match intervals.last_mut() {
            Some(last) if !gradient_jumps(last, iv) => last.hi = iv.hi,
            Some(_) => {
                crossings.push(partition.crossings[i - 1].clone());
                intervals.push(iv.clone());
            }
            None => intervals.push(iv.clone()),
        }
    }
    LinePartition {
        intervals,
        crossings,
        gradient_filtered: true,
        ..partition.clone()
    }
}
