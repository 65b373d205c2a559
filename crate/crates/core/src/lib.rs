//! Linear regions of piecewise-linear networks: exact enumeration along lines
//! and planes, boundary distances, and Monte-Carlo checks of the expected
//! complexity of networks at initialization.

pub mod activation;
pub mod boundary;
pub mod data;
pub mod error;
pub mod netfile;
pub mod netgen;
pub mod network;
pub mod region1d;
pub mod region2d;
pub mod stats;
pub mod svg;
pub mod theory;
pub mod train;

pub use activation::{PieceLookup, PiecewiseLinearActivation};
pub use boundary::{distance_to_boundary, DistanceReport, DistanceSample, SampleSource, SampleSpec};
pub use data::{load_idx, load_mnist, synth_blobs, Dataset, Split};
pub use error::{Error, Result};
pub use netfile::{load_network, save_network, ArrayEncoding, NetworkFile};
pub use netgen::{build_sawtooth, he_init, perturb, InitSpec, WeightLaw};
pub use network::{ActivationPattern, AffineMap, ForwardPass, Layer, Network, NeuronRef};
pub use region1d::{count_regions_on_line, count_regions_on_segment, LinePartition, LineSpec};
pub use region2d::{enumerate_plane, PlaneArena, RegionStats, SliceFrame};
pub use svg::{render_svg, SvgStyle};
pub use theory::{TheoryReport, TheoryRow};
pub use train::{train, Checkpoint, TrainConfig};
