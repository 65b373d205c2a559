use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pwl_regions::boundary::{distances_at, DistanceOptions, SampleContext};
use pwl_regions::netfile::FORMAT_VERSION;
use pwl_regions::netgen::{stream_rng, std_normal, GENERATOR_ID};
use pwl_regions::region1d::filter_crossings_by_gradient;
use pwl_regions::region2d::PlaneArena;
use pwl_regions::stats::RunningStats;
use pwl_regions::theory::{
    corollary_bounds, crossing_regression_suite, distance_lower_bound, expected_crossings_k1, gradient_moment_check,
    log_gradient_check, open_path_probability, preactivation_moment_check, tube_volume_check, CorollaryOptions,
    DistanceBoundOptions,
};
use pwl_regions::train::{linspace_schedule, track_complexity, ComplexityProbes, LossKind, OptimizerKind};
use pwl_regions::{
    build_sawtooth, enumerate_plane, he_init, load_mnist, perturb, render_svg, synth_blobs, ArrayEncoding, Dataset,
    Error, InitSpec, LineSpec, Network, NetworkFile, PiecewiseLinearActivation, SampleSource, SampleSpec, SliceFrame,
    Split, SvgStyle, TheoryReport, TrainConfig, WeightLaw,
};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{Manifest, OutputDir};
use crate::{
    ArchArgs, Check, Cli, Command, CountLineArgs, DistanceArgs, DistanceSource, EncodingArg, EnumeratePlaneArgs,
    Format, InitArgs, LossArg, OptimizerArg, PerturbArgs, PlaneArgs, PointSource, RenderArgs, SawtoothArgs, TrainArgs,
    VerifyTheoryArgs, WeightLawArg, EXIT_DATA, EXIT_USAGE,
};

pub enum Outcome {
    Ok,
    Violation,
}

/// Bad flag combinations found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_) | Error::Config(_) | Error::InvalidActivation(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

struct Ctx {
    seed: Option<u64>,
    format: Option<Format>,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn csv(&self, default: Format) -> bool {
        self.format.unwrap_or(default) == Format::Csv
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = command_name(&cli.command);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        argv: std::env::args().collect(),
        seed: cli.seed.unwrap_or(0),
        threads: rayon::current_num_threads(),
        format: match cli.format {
            Some(Format::Csv) => "csv".into(),
            Some(Format::Json) => "json".into(),
            None => "default".into(),
        },
        generator: GENERATOR_ID.to_string(),
        network_format_version: FORMAT_VERSION,
        seeds: BTreeMap::new(),
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
    };
    let mut out = OutputDir::create(&cli.out, manifest)?;
    let ctx = Ctx {
        seed: cli.seed,
        format: cli.format,
    };
    let outcome = match &cli.command {
        Command::Init(a) => init(&ctx, a, &mut out),
        Command::Sawtooth(a) => sawtooth(&ctx, a, &mut out),
        Command::Perturb(a) => perturb_cmd(&ctx, a, &mut out),
        Command::CountLine(a) => count_line(&ctx, a, &mut out),
        Command::EnumeratePlane(a) => enumerate(&ctx, a, &mut out),
        Command::Distance(a) => distance(&ctx, a, &mut out),
        Command::VerifyTheory(a) => verify_theory(&ctx, a, &mut out),
        Command::Train(a) => train_cmd(&ctx, a, &mut out),
        Command::Render(a) => render(&ctx, a, &mut out),
    }?;
    out.finish()?;
    Ok(outcome)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Init(_) => "init",
        Command::Sawtooth(_) => "sawtooth",
        Command::Perturb(_) => "perturb",
        Command::CountLine(_) => "count-line",
        Command::EnumeratePlane(_) => "enumerate-plane",
        Command::Distance(_) => "distance",
        Command::VerifyTheory(_) => "verify-theory",
        Command::Train(_) => "train",
        Command::Render(_) => "render",
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn encoding(e: EncodingArg) -> ArrayEncoding {
    match e {
        EncodingArg::Decimal => ArrayEncoding::Decimal,
        EncodingArg::HexLe => ArrayEncoding::HexLe,
    }
}

fn parse_activation(s: &str) -> Result<PiecewiseLinearActivation> {
    match s {
        "relu" => Ok(PiecewiseLinearActivation::relu()),
        "hard-tanh" => Ok(PiecewiseLinearActivation::hard_tanh()),
        _ => match s.strip_prefix("leaky-relu") {
            Some(rest) => {
                let slope = match rest.strip_prefix(':') {
                    Some(v) => v.parse::<f64>().map_err(|_| usage(format!("bad leaky-relu slope {v:?}")))?,
                    None if rest.is_empty() => 0.01,
                    None => return Err(usage(format!("unknown activation {s:?}"))),
                };
                Ok(PiecewiseLinearActivation::leaky_relu(slope)?)
            }
            None => Err(usage(format!("unknown activation {s:?}; use relu, hard-tanh or leaky-relu:<slope>"))),
        },
    }
}

/// Applies architecture flags on top of `base`.
fn apply_arch(base: InitSpec, a: &ArchArgs) -> Result<InitSpec> {
    let hidden = a.hidden.clone().unwrap_or_else(|| base.hidden.clone());
    let mut spec = InitSpec::he(
        a.input_dim.unwrap_or(base.input_dim),
        &hidden,
        a.output_dim.unwrap_or(base.output_dim),
        base.seed,
    )
    .with_weight_law(base.weight_law)
    .with_weight_gain(base.weight_gain)
    .with_activation(base.activation.clone());
    spec.bias_sd = if base.bias_sd.len() == hidden.len() + 1 {
        base.bias_sd.clone()
    } else {
        vec![base.bias_sd.first().copied().unwrap_or(1e-3); hidden.len() + 1]
    };
    if let Some(sd) = a.bias_sd {
        spec = spec.with_bias_sd(sd);
    }
    if let Some(g) = a.gain {
        spec = spec.with_weight_gain(g);
    }
    if let Some(law) = a.weight_law {
        spec = spec.with_weight_law(match law {
            WeightLawArg::Normal => WeightLaw::Normal,
            WeightLawArg::TwoPoint => WeightLaw::TwoPoint,
        });
    }
    if let Some(act) = &a.activation {
        spec = spec.with_activation(parse_activation(act)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(value)
}

fn load_net(path: &Path, out: &mut OutputDir) -> Result<(Network, NetworkFile)> {
    out.record_input("network", path);
    let loaded = pwl_regions::load_network(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(loaded)
}

fn write_net(
    out: &mut OutputDir,
    name: &str,
    net: &Network,
    init: Option<pwl_regions::netgen::InitMetadata>,
    enc: EncodingArg,
) -> Result<()> {
    let file = NetworkFile::from_network(net, init, encoding(enc));
    out.write_bytes(name, file.to_json()?.as_bytes())?;
    Ok(())
}

fn mnist(dir: Option<&Path>, split: Split, out: &mut OutputDir) -> Result<Dataset> {
    let dir = dir.ok_or_else(|| usage("this option needs --mnist-dir"))?;
    out.record_input("mnist", dir);
    let data = load_mnist(dir, split).with_context(|| format!("loading MNIST from {}", dir.display()))?;
    Ok(data)
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// init, sawtooth, perturb

fn init(ctx: &Ctx, a: &InitArgs, out: &mut OutputDir) -> Result<Outcome> {
    let base = match &a.config {
        Some(path) => {
            out.record_input("config", path);
            read_json::<InitSpec>(path)?
        }
        None => {
            let input = a.arch.input_dim.ok_or_else(|| usage("init needs --input-dim or --config"))?;
            let hidden = a.arch.hidden.clone().ok_or_else(|| usage("init needs --hidden or --config"))?;
            InitSpec::he(input, &hidden, a.arch.output_dim.unwrap_or(10), 0)
        }
    };
    let mut spec = apply_arch(base, &a.arch)?;
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    out.record_seed("init", spec.seed);
    let net = he_init(&spec)?;
    out.write_json("init_spec.json", &spec)?;
    write_net(out, "network.json", &net, Some(spec.metadata()), a.encoding)?;
    eprintln!(
        "initialized {} hidden neurons in {} layers",
        net.hidden_neuron_count(),
        spec.hidden.len()
    );
    Ok(Outcome::Ok)
}

#[derive(Debug, Serialize)]
struct SawtoothRow {
    trial: usize,
    seed: u64,
    noise_sd: f64,
    regions: usize,
    linear_pieces: usize,
    reduced: bool,
}

#[derive(Debug, Serialize)]
struct SawtoothSummary {
    n: usize,
    neurons: usize,
    regions: usize,
    linear_pieces: usize,
    noise_sd: f64,
    trials: usize,
    reduced_trials: usize,
}

fn pieces_on_unit_interval(net: &Network) -> pwl_regions::Result<(usize, usize)> {
    let part = pwl_regions::count_regions_on_segment(net, &[0.0], &[1.0])?;
    let pieces = filter_crossings_by_gradient(&part).region_count();
    Ok((part.region_count(), pieces))
}

fn sawtooth(ctx: &Ctx, a: &SawtoothArgs, out: &mut OutputDir) -> Result<Outcome> {
    let net = build_sawtooth(a.n)?;
    let (regions, pieces) = pieces_on_unit_interval(&net)?;
    let base = ctx.seed();
    out.record_seed("trials", format!("{base} + trial"));
    let rows = (0..a.trials)
        .into_par_iter()
        .map(|t| {
            let seed = base.wrapping_add(t as u64);
            let noisy = perturb(&net, a.perturb_sd, seed)?;
            let (r, p) = pieces_on_unit_interval(&noisy)?;
            Ok(SawtoothRow {
                trial: t,
                seed,
                noise_sd: a.perturb_sd,
                regions: r,
                linear_pieces: p,
                reduced: p < pieces,
            })
        })
        .collect::<pwl_regions::Result<Vec<_>>>()?;
    let summary = SawtoothSummary {
        n: a.n,
        neurons: net.neuron_count(),
        regions,
        linear_pieces: pieces,
        noise_sd: a.perturb_sd,
        trials: a.trials,
        reduced_trials: rows.iter().filter(|r| r.reduced).count(),
    };
    write_net(out, "network.json", &net, None, a.encoding)?;
    out.write_json("summary.json", &summary)?;
    out.write_table("trials", &rows, ctx.csv(Format::Csv))?;
    eprintln!(
        "sawtooth n={}: {} neurons, {} pieces on [0,1]; {} of {} perturbed nets have fewer",
        a.n, summary.neurons, pieces, summary.reduced_trials, a.trials
    );
    Ok(Outcome::Ok)
}

fn perturb_cmd(ctx: &Ctx, a: &PerturbArgs, out: &mut OutputDir) -> Result<Outcome> {
    let (net, file) = load_net(&a.net, out)?;
    let seed = ctx.seed();
    out.record_seed("perturb", seed);
    let noisy = perturb(&net, a.sd, seed)?;
    write_net(out, "network.json", &noisy, file.init, a.encoding)?;
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// count-line

#[derive(Debug, Serialize)]
struct LineRow {
    line: usize,
    regions: usize,
    linear_pieces: usize,
    neurons: usize,
    regions_per_neuron: f64,
    crossings: usize,
    degenerate: usize,
}

#[derive(Debug, Serialize)]
struct LineSummary {
    lines: usize,
    neurons: usize,
    mean_regions: f64,
    mean_regions_per_neuron: f64,
    regions_per_neuron_se: f64,
}

fn count_line(ctx: &Ctx, a: &CountLineArgs, out: &mut OutputDir) -> Result<Outcome> {
    let (net, _) = load_net(&a.net, out)?;
    let n_in = net.input_dim();
    let seed = ctx.seed();
    let specs: Vec<LineSpec> = match (&a.from, &a.to) {
        (Some(p0), Some(p1)) => {
            if p0.len() != n_in || p1.len() != n_in {
                return Err(usage(format!("--from and --to need {n_in} coordinates")));
            }
            vec![LineSpec::segment(p0, p1)]
        }
        _ => {
            let data = match a.random_point {
                PointSource::Mnist => Some(mnist(a.mnist_dir.as_deref(), Split::Train, out)?),
                PointSource::MnistTest => Some(mnist(a.mnist_dir.as_deref(), Split::Test, out)?),
                _ => None,
            };
            if let Some(d) = &data {
                if d.dim() != n_in {
                    bail!(Error::Shape {
                        context: "dataset dimension vs network input".into(),
                        expected: n_in,
                        found: d.dim(),
                    });
                }
            }
            out.record_seed("lines", format!("stream {seed}/line"));
            (0..a.lines)
                .map(|i| {
                    let mut rng = stream_rng(seed, i as u64);
                    let point = match (&data, a.random_point) {
                        (Some(d), _) => d.input_f64(rng.random_range(0..d.len())),
                        (None, PointSource::Uniform) => (0..n_in).map(|_| rng.random::<f64>()).collect(),
                        (None, _) => (0..n_in).map(|_| std_normal(&mut rng)).collect(),
                    };
                    if a.through_origin {
                        LineSpec::line(&vec![0.0; n_in], &point)
                    } else {
                        LineSpec::line(&point, &unit_gaussian(&mut rng, n_in))
                    }
                })
                .collect()
        }
    };
    let neurons = net.hidden_neuron_count();
    let rows = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let part = spec.count(&net)?;
            let regions = part.region_count();
            Ok(LineRow {
                line: i,
                regions,
                linear_pieces: filter_crossings_by_gradient(&part).region_count(),
                neurons,
                regions_per_neuron: regions as f64 / neurons.max(1) as f64,
                crossings: part.neuron_crossing_count(),
                degenerate: part.degenerate_count(),
            })
        })
        .collect::<pwl_regions::Result<Vec<_>>>()?;
    let rpn: RunningStats = rows.iter().map(|r| r.regions_per_neuron).collect();
    let summary = LineSummary {
        lines: rows.len(),
        neurons,
        mean_regions: rows.iter().map(|r| r.regions as f64).sum::<f64>() / rows.len().max(1) as f64,
        mean_regions_per_neuron: rpn.mean(),
        regions_per_neuron_se: rpn.std_error(),
    };
    out.write_table("lines", &rows, ctx.csv(Format::Csv))?;
    out.write_json("summary.json", &summary)?;
    eprintln!(
        "{} lines: regions per neuron {:.4} +- {:.4}",
        summary.lines, summary.mean_regions_per_neuron, summary.regions_per_neuron_se
    );
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// planes

fn build_frame(n_in: usize, p: &PlaneArgs, out: &mut OutputDir) -> Result<SliceFrame> {
    if let Some(axes) = &p.axes {
        if axes.len() != 2 {
            return Err(usage("--axes takes two coordinates"));
        }
        return Ok(SliceFrame::axis_aligned(vec![0.0; n_in], axes[0], axes[1], p.side.unwrap_or(2.0))?);
    }
    let anchors: Vec<Vec<f64>> = if let Some(path) = &p.points {
        out.record_input("points", path);
        read_json(path)?
    } else if p.through.is_some() || p.exemplars.is_some() {
        let data = mnist(p.mnist_dir.as_deref(), Split::Train, out)?;
        let idx: Vec<usize> = match (&p.through, &p.exemplars) {
            (Some(t), _) => t.clone(),
            (None, Some(classes)) => {
                let ex = data.class_exemplars();
                classes
                    .iter()
                    .map(|&c| {
                        ex.get(c)
                            .copied()
                            .flatten()
                            .ok_or_else(|| usage(format!("no training example of class {c}")))
                    })
                    .collect::<Result<_>>()?
            }
            _ => unreachable!(),
        };
        idx.iter()
            .map(|&i| {
                if i < data.len() {
                    Ok(data.input_f64(i))
                } else {
                    Err(usage(format!("training index {i} out of range")))
                }
            })
            .collect::<Result<_>>()?
    } else if n_in == 2 {
        return Ok(SliceFrame::axis_aligned(vec![0.0; 2], 0, 1, p.side.unwrap_or(2.0))?);
    } else {
        return Err(usage("choose a slice with --axes, --points, --through or --exemplars"));
    };
    if anchors.len() != 3 {
        return Err(usage(format!("a slice needs three points, got {}", anchors.len())));
    }
    Ok(SliceFrame::through_points(&anchors[0], &anchors[1], &anchors[2], p.side)?)
}

#[derive(Debug, Serialize)]
struct PlaneSummary {
    #[serde(flatten)]
    stats: pwl_regions::RegionStats,
    side: f64,
    euler_characteristic: i64,
    snapped_vertices: usize,
    thin_polygons: usize,
}

fn enumerate(ctx: &Ctx, a: &EnumeratePlaneArgs, out: &mut OutputDir) -> Result<Outcome> {
    let (net, _) = load_net(&a.net, out)?;
    let frame = build_frame(net.input_dim(), &a.plane, out)?;
    let arena = enumerate_plane(&net, &frame)?;
    let summary = PlaneSummary {
        stats: arena.stats(a.bins),
        side: frame.side,
        euler_characteristic: arena.euler_characteristic(),
        snapped_vertices: arena.flags.snapped_vertices,
        thin_polygons: arena.flags.thin_polygons,
    };
    out.write_json("regions.json", &summary)?;
    if ctx.csv(Format::Json) {
        #[derive(Serialize)]
        struct PolygonRow {
            polygon: usize,
            vertices: usize,
            area: f64,
            perimeter: f64,
            centroid_x: f64,
            centroid_y: f64,
        }
        let rows: Vec<PolygonRow> = (0..arena.polygons.len())
            .map(|p| {
                let c = arena.polygon_centroid(p);
                PolygonRow {
                    polygon: p,
                    vertices: arena.polygons[p].vertices.len(),
                    area: arena.polygon_area(p),
                    perimeter: arena.polygon_perimeter(p),
                    centroid_x: c[0],
                    centroid_y: c[1],
                }
            })
            .collect();
        out.write_csv("polygons.csv", &rows)?;
    }
    if !a.no_arena {
        out.write_json("arena.json", &arena)?;
    }
    if a.svg {
        out.write_bytes("regions.svg", render_svg(&arena, &SvgStyle::default()).as_bytes())?;
    }
    eprintln!("{} regions in a square of side {:.4}", summary.stats.regions, frame.side);
    Ok(Outcome::Ok)
}

fn render(_ctx: &Ctx, a: &RenderArgs, out: &mut OutputDir) -> Result<Outcome> {
    let arena: PlaneArena = match (&a.arena, &a.net) {
        (Some(path), _) => {
            out.record_input("arena", path);
            read_json(path)?
        }
        (None, Some(path)) => {
            let (net, _) = load_net(path, out)?;
            let frame = build_frame(net.input_dim(), &a.plane, out)?;
            enumerate_plane(&net, &frame)?
        }
        (None, None) => return Err(usage("render needs --arena or --net")),
    };
    let default = SvgStyle::default();
    let style = SvgStyle {
        size: a.size,
        stroke: a.stroke.clone().or(default.stroke.clone()),
        show_anchors: !a.no_anchors,
        ..default
    };
    out.write_bytes("regions.svg", render_svg(&arena, &style).as_bytes())?;
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// distance

#[derive(Debug, Serialize)]
struct DistanceSummary {
    samples: usize,
    neurons: usize,
    mean: f64,
    std_error: f64,
    mean_times_neurons: f64,
    quantiles: [f64; 5],
    min: f64,
    max: f64,
    zero_count: usize,
    infinite_count: usize,
}

fn distance(ctx: &Ctx, a: &DistanceArgs, out: &mut OutputDir) -> Result<Outcome> {
    let (net, _) = load_net(&a.net, out)?;
    let (train, test) = match a.source {
        DistanceSource::Gaussian | DistanceSource::Train => {
            (Some(mnist(a.mnist_dir.as_deref(), Split::Train, out)?), None)
        }
        DistanceSource::Test => (None, Some(mnist(a.mnist_dir.as_deref(), Split::Test, out)?)),
        DistanceSource::Uniform => (None, None),
    };
    let source = match a.source {
        DistanceSource::Gaussian => SampleSource::GaussianMomentMatched,
        DistanceSource::Train => SampleSource::DatasetTrain,
        DistanceSource::Test => SampleSource::DatasetTest,
        DistanceSource::Uniform => SampleSource::UniformCube { lo: a.lo, hi: a.hi },
    };
    let spec = SampleSpec {
        source,
        count: a.samples,
        seed: ctx.seed(),
    };
    out.record_seed("samples", spec.seed);
    let points = spec.draw(
        net.input_dim(),
        SampleContext {
            train: train.as_ref(),
            test: test.as_ref(),
        },
    )?;
    let report = distances_at(&net, &points, DistanceOptions::default(), a.bins)?;
    let neurons = net.hidden_neuron_count();
    let summary = DistanceSummary {
        samples: report.samples.len(),
        neurons,
        mean: report.mean,
        std_error: report.std_error,
        mean_times_neurons: report.mean * neurons as f64,
        quantiles: report.quantiles,
        min: report.min,
        max: report.max,
        zero_count: report.zero_count,
        infinite_count: report.infinite_count,
    };
    out.write_json("summary.json", &summary)?;
    if ctx.csv(Format::Json) {
        #[derive(Serialize)]
        struct Row {
            sample: usize,
            distance: f64,
            layer: Option<usize>,
            unit: Option<usize>,
        }
        let rows: Vec<Row> = report
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Row {
                sample: i,
                distance: s.distance,
                layer: s.neuron.map(|z| z.layer),
                unit: s.neuron.map(|z| z.unit),
            })
            .collect();
        out.write_csv("samples.csv", &rows)?;
    } else {
        out.write_json("distance.json", &report)?;
    }
    eprintln!(
        "mean distance {:.4e} +- {:.1e}; times #neurons {:.4}",
        summary.mean, summary.std_error, summary.mean_times_neurons
    );
    Ok(Outcome::Ok)
}

// ---------------------------------------------------------------------------
// verify-theory

#[derive(Debug, Serialize)]
struct TheoryCsvRow<'a> {
    check: &'a str,
    quantity: &'a str,
    theory: f64,
    estimate: f64,
    std_error: f64,
    relation: String,
    tolerance: f64,
    sigmas: f64,
    gated: bool,
    passed: bool,
    samples: u64,
    note: &'a str,
}

fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

fn verify_theory(ctx: &Ctx, a: &VerifyTheoryArgs, out: &mut OutputDir) -> Result<Outcome> {
    let all = [
        Check::GradMoment,
        Check::PreactMoment,
        Check::OpenPath,
        Check::LogGrad,
        Check::Crossings,
        Check::Corollary,
        Check::DistanceBound,
        Check::Tube,
    ];
    let mut checks: Vec<Check> = Vec::new();
    for &c in &a.check {
        let expanded: &[Check] = if c == Check::All { &all } else { std::slice::from_ref(&c) };
        for &e in expanded {
            if !checks.contains(&e) {
                checks.push(e);
            }
        }
    }
    let seed = ctx.seed();
    out.record_seed("ensemble", format!("{seed} + member"));
    let spec_for = |n_in: usize, hidden: &[usize]| -> Result<InitSpec> {
        apply_arch(InitSpec::he(n_in, hidden, 1, seed), &a.arch)
    };
    let mut reports: Vec<TheoryReport> = Vec::new();
    for check in checks {
        match check {
            Check::GradMoment | Check::PreactMoment => {
                let spec = spec_for(32, &[32; 5])?;
                let x = ones(spec.input_dim);
                let n = a.seeds.unwrap_or(2000);
                reports.push(if check == Check::GradMoment {
                    gradient_moment_check(&spec, &x, n)?
                } else {
                    preactivation_moment_check(&spec, &x, n)?
                });
            }
            Check::OpenPath => {
                let spec = spec_for(8, &[8, 8, 8])?;
                reports.push(open_path_probability(&spec, &ones(spec.input_dim), a.seeds.unwrap_or(2000))?);
            }
            Check::LogGrad => {
                let spec = spec_for(64, &[64; 4])?;
                reports.push(log_gradient_check(&spec, &ones(spec.input_dim), a.seeds.unwrap_or(2000))?);
            }
            Check::Crossings => {
                let draws = a.seeds.unwrap_or(10_000);
                for (i, case) in crossing_regression_suite()?.iter().enumerate() {
                    let mut r = expected_crossings_k1(
                        &case.net,
                        case.bias_sd,
                        &case.p0,
                        &case.p1,
                        draws,
                        4,
                        seed.wrapping_add(i as u64),
                    )?;
                    r.check = format!("{} {}", r.check, case.name);
                    reports.push(r);
                }
            }
            Check::Corollary => {
                let spec = spec_for(2, &[16, 16, 16])?;
                let frame = SliceFrame::axis_aligned(vec![0.0; spec.input_dim], 0, 1, 2.0)?;
                let opts = CorollaryOptions {
                    n_seeds: a.seeds.unwrap_or(20),
                    ..CorollaryOptions::default()
                };
                reports.push(corollary_bounds(&spec, a.k, &frame, &opts)?);
            }
            Check::DistanceBound => {
                let data = match &a.mnist_dir {
                    Some(dir) => Some(mnist(Some(dir), Split::Train, out)?),
                    None => None,
                };
                let (spec, source) = match &data {
                    Some(d) => (spec_for(d.dim(), &[32, 32, 32])?, SampleSource::GaussianMomentMatched),
                    None => (spec_for(32, &[32, 32, 32])?, SampleSource::UniformCube { lo: 0.0, hi: 1.0 }),
                };
                let samples = SampleSpec {
                    source,
                    count: a.samples,
                    seed,
                };
                let opts = DistanceBoundOptions {
                    n_seeds: a.seeds.unwrap_or(5),
                    ..DistanceBoundOptions::default()
                };
                let ctx = SampleContext {
                    train: data.as_ref(),
                    test: None,
                };
                reports.push(distance_lower_bound(&spec, &samples, ctx, &opts)?);
            }
            Check::Tube => {
                let spec = spec_for(2, &[16, 16, 16])?;
                let frame = SliceFrame::axis_aligned(vec![0.0; spec.input_dim], 0, 1, 2.0)?;
                let arenas = a.seeds.unwrap_or(10);
                let tube = (0..arenas)
                    .into_par_iter()
                    .map(|s| {
                        let member = seed.wrapping_add(s as u64);
                        let net = he_init(&spec.clone().with_seed(member))?;
                        let arena = enumerate_plane(&net, &frame)?;
                        let mut r = tube_volume_check(&arena, &[0.01, 0.05], a.mc_points, member)?;
                        r.check = format!("{} arena {s}", r.check);
                        Ok(r)
                    })
                    .collect::<pwl_regions::Result<Vec<_>>>()?;
                reports.extend(tube);
            }
            Check::All => unreachable!(),
        }
    }
    out.write_json("reports.json", &reports)?;
    if ctx.csv(Format::Json) {
        let rows: Vec<TheoryCsvRow<'_>> = reports
            .iter()
            .flat_map(|r| {
                r.rows.iter().map(move |row| TheoryCsvRow {
                    check: &r.check,
                    quantity: &row.quantity,
                    theory: row.theory,
                    estimate: row.estimate,
                    std_error: row.std_error,
                    relation: serde_json::to_value(row.relation)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    tolerance: row.tolerance,
                    sigmas: row.sigmas,
                    gated: row.gated,
                    passed: row.passed,
                    samples: row.samples,
                    note: row.note.as_deref().unwrap_or(""),
                })
            })
            .collect();
        out.write_csv("rows.csv", &rows)?;
    }
    let mut violated = false;
    for r in &reports {
        let ok = r.passed();
        violated |= !ok;
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, r.check);
        for row in r.failures() {
            println!(
                "  {}: estimate {:.6} vs {:.6} (se {:.2e})",
                row.quantity, row.estimate, row.theory, row.std_error
            );
        }
    }
    Ok(if violated { Outcome::Violation } else { Outcome::Ok })
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Serialize)]
struct TrainSummary {
    checkpoints: usize,
    diverged_at: Option<f64>,
    final_test_accuracy: Option<f64>,
    final_train_accuracy: f64,
    config: TrainConfig,
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs, out: &mut OutputDir) -> Result<Outcome> {
    let (net, file) = load_net(&a.net, out)?;
    let seed = ctx.seed();
    let (train_data, test_data) = match (&a.blobs, &a.mnist_dir) {
        (Some(b), _) => {
            if b.len() != 4 {
                return Err(usage("--blobs takes classes,per_class,dim,separation"));
            }
            let (c, n, d) = (b[0] as usize, b[1] as usize, b[2] as usize);
            (
                synth_blobs(c, n, d, b[3], seed)?,
                synth_blobs(c, n.div_ceil(5).max(1), d, b[3], seed.wrapping_add(1))?,
            )
        }
        (None, Some(_)) => (
            mnist(a.mnist_dir.as_deref(), Split::Train, out)?,
            mnist(a.mnist_dir.as_deref(), Split::Test, out)?,
        ),
        (None, None) => return Err(usage("train needs --mnist-dir or --blobs")),
    };
    let mut config = match &a.config {
        Some(path) => {
            out.record_input("config", path);
            read_json::<TrainConfig>(path)?
        }
        None => TrainConfig::adam(1e-3, 32, 20, seed),
    };
    if ctx.seed.is_some() || a.config.is_none() {
        config.seed = seed;
    }
    if let Some(o) = a.optimizer {
        config.optimizer = match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        };
    }
    if let Some(lr) = a.lr {
        config.learning_rate = lr;
    }
    if let Some(bs) = a.batch_size {
        config.batch_size = bs;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(l) = a.loss {
        config.loss = match l {
            LossArg::CrossEntropy => LossKind::SoftmaxCrossEntropy,
            LossArg::Mse => LossKind::MeanSquaredError,
        };
    }
    if let Some(limit) = a.eval_limit {
        config.eval_limit = Some(limit);
    }
    match &a.schedule {
        Some(s) => config.schedule = s.clone(),
        None if a.config.is_none() => {
            let mut s = linspace_schedule(0.0, 0.5, 11);
            s.extend((1..=config.epochs).map(|e| e as f64));
            config.schedule = s;
        }
        None => {}
    }
    config.validate()?;
    out.record_seed("shuffle", config.seed);
    out.record_seed("probes", seed);
    let run = pwl_regions::train(&net, &train_data, Some(&test_data), &config)?;
    let probes = ComplexityProbes::from_dataset(&train_data, a.track_lines, a.track_points, seed);
    let rows = track_complexity(&run.checkpoints, &probes)?;
    out.write_table("metrics", &rows, ctx.csv(Format::Csv))?;
    if a.save_checkpoints {
        for c in &run.checkpoints {
            write_net(
                out,
                &format!("checkpoints/epoch-{:08.4}.json", c.epoch_fraction),
                &c.network,
                file.init.clone(),
                a.encoding,
            )?;
        }
    }
    let last = run.checkpoints.last().ok_or_else(|| usage("empty checkpoint schedule"))?;
    write_net(out, "network.json", &last.network, file.init.clone(), a.encoding)?;
    let summary = TrainSummary {
        checkpoints: run.checkpoints.len(),
        diverged_at: run.diverged_at,
        final_test_accuracy: last.test.as_ref().map(|m| m.accuracy),
        final_train_accuracy: last.train.accuracy,
        config,
    };
    out.write_json("summary.json", &summary)?;
    if let Some(f) = run.diverged_at {
        eprintln!("training diverged at epoch fraction {f}; kept the last finite state");
    }
    for r in &rows {
        eprintln!(
            "epoch {:7.3}  regions/neuron {:.4}  dist*neurons {:.4}  test acc {}",
            r.epoch_fraction,
            r.regions_per_neuron,
            r.mean_dist_times_neurons,
            r.test_acc.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(Outcome::Ok)
}
