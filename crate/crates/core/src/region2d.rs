//! Exact linear regions meeting a square in a 2-D affine slice of input space.
//!
//! The square starts as one polygon. Hidden layers are processed in order and
//! within a layer neurons in index order; for every breakpoint, each polygon
//! whose vertices straddle the neuron's level set is cut along it. Because a
//! neuron's pre-activation is affine on every polygon of the partition built
//! from the earlier layers, the cut is a straight chord and the children stay
//! convex. Vertices are shared between polygons, and an edge crossed by a cut
//! yields one new vertex used by both polygons on that edge, so the result is
//! a conforming planar subdivision.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{dot, norm, ActivationPattern, AffineMap, Network, NeuronRef};
use crate::region1d::CrossingNeuron;
use crate::stats::{histogram_of, Histogram};

/// Vertices within `SNAP_TOL * scale` of a cut line are moved onto it.
pub const SNAP_TOL: f64 = 1e-10;

/// Polygons with area below `THIN_TOL * side^2` are flagged.
pub const THIN_TOL: f64 = 1e-12;

/// A square of side `side` centred at `center`, spanned by orthonormal `u`, `v`.
/// Slice coordinates `s` range over `[-side/2, side/2]^2` and map to
/// `center + s0 u + s1 v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceFrame {
    pub center: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub side: f64,
    /// Marked points in slice coordinates.
    pub anchors: Vec<[f64; 2]>,
}

impl SliceFrame {
    pub fn new(center: Vec<f64>, u: Vec<f64>, v: Vec<f64>, side: f64) -> Result<Self> {
        let n = center.len();
        if u.len() != n || v.len() != n {
            return Err(Error::InvalidArgument("slice directions must match the input dimension".into()));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidArgument(format!("square side must be positive, got {side}")));
        }
        let ortho = (dot(&u, &u) - 1.0).abs().max((dot(&v, &v) - 1.0).abs()).max(dot(&u, &v).abs());
        if ortho > 1e-10 {
            return Err(Error::InvalidArgument("slice directions must be orthonormal".into()));
        }
        Ok(Self {
            center,
            u,
            v,
            side,
            anchors: Vec::new(),
        })
    }

    /// The plane spanned by input coordinates `i` and `j`.
    pub fn axis_aligned(center: Vec<f64>, i: usize, j: usize, side: f64) -> Result<Self> {
        let n = center.len();
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidArgument(format!("bad axes {i}, {j} for dimension {n}")));
        }
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        u[i] = 1.0;
        v[j] = 1.0;
        Self::new(center, u, v, side)
    }

    /// The plane through three points, centred at their circumcenter. The
    /// side defaults to twice the circumradius, so the square contains the
    /// circumcircle.
    pub fn through_points(a: &[f64], b: &[f64], c: &[f64], side: Option<f64>) -> Result<Self> {
        let n = a.len();
        if b.len() != n || c.len() != n {
            return Err(Error::InvalidArgument("anchor points differ in dimension".into()));
        }
        let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let ac: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let lab = norm(&ab);
        if lab == 0.0 {
            return Err(Error::InvalidArgument("anchor points coincide".into()));
        }
        let u: Vec<f64> = ab.iter().map(|x| x / lab).collect();
        let cu = dot(&ac, &u);
        let mut v: Vec<f64> = ac.iter().zip(&u).map(|(x, e)| x - cu * e).collect();
        let cv = norm(&v);
        if cv <= 1e-12 * (lab + norm(&ac)) {
            return Err(Error::InvalidArgument("anchor points are collinear".into()));
        }
        v.iter_mut().for_each(|x| *x /= cv);
        // circumcenter of (0,0), (lab,0), (cu,cv)
        let ox = lab / 2.0;
        let oy = (cu * cu + cv * cv - lab * cu) / (2.0 * cv);
        let radius = (ox * ox + oy * oy).sqrt();
        let center: Vec<f64> = a
            .iter()
            .zip(&u)
            .zip(&v)
            .map(|((p, e1), e2)| p + ox * e1 + oy * e2)
            .collect();
        let mut frame = Self::new(center, u, v, side.unwrap_or(2.0 * radius))?;
        frame.anchors = vec![[-ox, -oy], [lab - ox, -oy], [cu - ox, cv - oy]];
        Ok(frame)
    }

    pub fn half(&self) -> f64 {
        self.side / 2.0
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn embed(&self, s: [f64; 2]) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.u)
            .zip(&self.v)
            .map(|((c, u), v)| c + s[0] * u + s[1] * v)
            .collect()
    }

    pub fn contains(&self, s: [f64; 2]) -> bool {
        let h = self.half();
        s[0].abs() <= h && s[1].abs() <= h
    }

    /// The network seen in slice coordinates.
    pub fn restrict(&self, net: &Network) -> Result<Network> {
        net.restrict_to_slice(&self.center, &[self.u.clone(), self.v.clone()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLabel {
    Frame,
    Neuron(CrossingNeuron),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaVertex {
    pub pos: [f64; 2],
    /// Neurons whose level sets pass through the vertex.
    pub neurons: Vec<CrossingNeuron>,
    pub on_frame: bool,
    /// Moved onto a cut line by the snapping tolerance.
    pub snapped: bool,
}

impl ArenaVertex {
    /// Generated by more neurons than a generic vertex of its kind.
    pub fn is_degenerate(&self) -> bool {
        let generic = if self.on_frame { 1 } else { 2 };
        self.neurons.len() > generic
    }

    fn add_neuron(&mut self, c: CrossingNeuron) {
        if !self.neurons.contains(&c) {
            self.neurons.push(c);
        }
    }
}

/// Convex polygon with counter-clockwise vertices; `edge_labels[k]` labels the
/// edge from `vertices[k]` to `vertices[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaPolygon {
    pub vertices: Vec<u32>,
    pub edge_labels: Vec<EdgeLabel>,
    pub pattern: ActivationPattern,
    /// Network output as a map of slice coordinates.
    pub affine: AffineMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaEdge {
    pub a: u32,
    pub b: u32,
    pub label: EdgeLabel,
    /// Polygons on each side; frame edges have one.
    pub polygons: Vec<u32>,
}

impl ArenaEdge {
    pub fn is_interior(&self) -> bool {
        self.polygons.len() == 2
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArenaFlags {
    pub snapped_vertices: usize,
    pub thin_polygons: usize,
    pub degenerate_vertices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneArena {
    pub frame: SliceFrame,
    pub vertices: Vec<ArenaVertex>,
    pub polygons: Vec<ArenaPolygon>,
    pub edges: Vec<ArenaEdge>,
    pub flags: ArenaFlags,
}

struct Builder<'a> {
    net: &'a Network,
    vertices: Vec<ArenaVertex>,
    /// Pre-activations of the current layer, `width` per vertex.
    values: Vec<f64>,
    width: usize,
    polygons: Vec<Poly>,
    cache: HashMap<(u32, u32), u32>,
}

struct Poly {
    verts: Vec<u32>,
    labels: Vec<EdgeLabel>,
    pattern: Vec<u8>,
}

pub fn enumerate_plane(net: &Network, frame: &SliceFrame) -> Result<PlaneArena> {
    if frame.center.len() != net.input_dim() {
        return Err(Error::Shape {
            context: "slice frame".into(),
            expected: net.input_dim(),
            found: frame.center.len(),
        });
    }
    let restricted = frame.restrict(net)?;
    let h = frame.half();
    let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
    let mut b = Builder {
        net: &restricted,
        vertices: corners
            .iter()
            .map(|&pos| ArenaVertex {
                pos,
                neurons: Vec::new(),
                on_frame: true,
                snapped: false,
            })
            .collect(),
        values: Vec::new(),
        width: 0,
        polygons: vec![Poly {
            verts: vec![0, 1, 2, 3],
            labels: vec![EdgeLabel::Frame; 4],
            pattern: Vec::new(),
        }],
        cache: HashMap::new(),
    };
    for l in 0..restricted.depth() {
        b.load_layer(l);
        let bps = restricted.activation().breakpoints().to_vec();
        for unit in 0..b.width {
            for (j, &xi) in bps.iter().enumerate() {
                b.cut(l, unit, j, xi);
            }
        }
        b.assign_pieces();
    }
    Ok(b.finish(frame.clone()))
}

impl Builder<'_> {
    fn load_layer(&mut self, l: usize) {
        let layer = &self.net.layers()[l];
        let act = self.net.activation();
        let mut values = Vec::with_capacity(self.vertices.len() * layer.rows());
        for (k, v) in self.vertices.iter().enumerate() {
            let input: Vec<f64> = if l == 0 {
                v.pos.to_vec()
            } else {
                self.values[k * self.width..(k + 1) * self.width]
                    .iter()
                    .map(|&p| act.eval(p))
                    .collect()
            };
            values.extend(layer.apply(&input));
        }
        self.values = values;
        self.width = layer.rows();
    }

    fn value(&self, v: u32, unit: usize) -> f64 {
        self.values[v as usize * self.width + unit]
    }

    fn cut(&mut self, l: usize, unit: usize, bp: usize, xi: f64) {
        let scale = (0..self.vertices.len())
            .map(|v| self.values[v * self.width + unit].abs())
            .fold(xi.abs(), f64::max);
        let tol = SNAP_TOL * scale;
        let sign: Vec<i8> = (0..self.vertices.len())
            .map(|v| {
                let f = self.values[v * self.width + unit] - xi;
                if f > tol {
                    1
                } else if f < -tol {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let label = CrossingNeuron {
            neuron: NeuronRef::new(l + 1, unit),
            breakpoint: bp,
        };
        self.cache.clear();
        let count = self.polygons.len();
        for p in 0..count {
            let straddles = {
                let verts = &self.polygons[p].verts;
                verts.iter().any(|&v| sign[v as usize] > 0) && verts.iter().any(|&v| sign[v as usize] < 0)
            };
            if straddles {
                let (pos, neg) = self.split(p, &sign, unit, xi, label);
                self.polygons[p] = pos;
                self.polygons.push(neg);
            }
        }
    }

    /// Vertex where the cut crosses edge `(a, b)`, shared with the neighbour.
    fn edge_vertex(&mut self, a: u32, b: u32, edge: EdgeLabel, unit: usize, xi: f64, cut: CrossingNeuron) -> u32 {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = self.cache.get(&key) {
            return m;
        }
        let (a, b) = key;
        let fa = self.value(a, unit) - xi;
        let fb = self.value(b, unit) - xi;
        let t = fa / (fa - fb);
        let pa = self.vertices[a as usize].pos;
        let pb = self.vertices[b as usize].pos;
        let pos = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        let w = self.width;
        let (a, b) = (a as usize, b as usize);
        for i in 0..w {
            let va = self.values[a * w + i];
            let vb = self.values[b * w + i];
            self.values.push(va + t * (vb - va));
        }
        let m = self.vertices.len();
        self.values[m * w + unit] = xi;
        let (neurons, on_frame) = match edge {
            EdgeLabel::Frame => (vec![cut], true),
            EdgeLabel::Neuron(other) => (vec![other, cut], false),
        };
        self.vertices.push(ArenaVertex {
            pos,
            neurons,
            on_frame,
            snapped: false,
        });
        let m = m as u32;
        self.cache.insert(key, m);
        m
    }

    fn split(&mut self, p: usize, sign: &[i8], unit: usize, xi: f64, cut: CrossingNeuron) -> (Poly, Poly) {
        let verts = self.polygons[p].verts.clone();
        let labels = self.polygons[p].labels.clone();
        let n = verts.len();
        // new vertices on straddled edges, and snapped vertices on the chord
        let mut mids: Vec<Option<u32>> = vec![None; n];
        for k in 0..n {
            let (a, b) = (verts[k], verts[(k + 1) % n]);
            let (sa, sb) = (sign[a as usize], sign[b as usize]);
            if sa * sb < 0 {
                mids[k] = Some(self.edge_vertex(a, b, labels[k], unit, xi, cut));
            }
            if sa == 0 {
                let slot = a as usize * self.width + unit;
                let vtx = &mut self.vertices[a as usize];
                if self.values[slot] != xi {
                    vtx.snapped = true;
                    self.values[slot] = xi;
                }
                vtx.add_neuron(cut);
            }
        }
        let chord = EdgeLabel::Neuron(cut);
        let side = |want: i8| {
            let mut out_v = Vec::with_capacity(n + 2);
            let mut out_l = Vec::with_capacity(n + 2);
            for k in 0..n {
                let a = verts[k];
                let b = verts[(k + 1) % n];
                let (sa, sb) = (sign[a as usize], sign[b as usize]);
                if sa == want || sa == 0 {
                    out_v.push(a);
                    out_l.push(if sa == 0 && sb == -want { chord } else { labels[k] });
                }
                if let Some(m) = mids[k] {
                    out_v.push(m);
                    out_l.push(if sa == want { chord } else { labels[k] });
                }
            }
            (out_v, out_l)
        };
        let (pv, pl) = side(1);
        let (nv, nl) = side(-1);
        let pattern = self.polygons[p].pattern.clone();
        (
            Poly {
                verts: pv,
                labels: pl,
                pattern: pattern.clone(),
            },
            Poly {
                verts: nv,
                labels: nl,
                pattern,
            },
        )
    }

    fn assign_pieces(&mut self) {
        let act = self.net.activation();
        let w = self.width;
        for poly in &mut self.polygons {
            let k = poly.verts.len() as f64;
            for unit in 0..w {
                let mean = poly
                    .verts
                    .iter()
                    .map(|&v| self.values[v as usize * w + unit])
                    .sum::<f64>()
                    / k;
                poly.pattern.push(act.piece_right_closed(mean) as u8);
            }
        }
    }

    fn finish(self, frame: SliceFrame) -> PlaneArena {
        let net = self.net;
        let side2 = frame.area();
        let mut flags = ArenaFlags::default();
        let polygons: Vec<ArenaPolygon> = self
            .polygons
            .into_iter()
            .map(|p| {
                let pattern = ActivationPattern(p.pattern);
                let affine = net.affine_for_pattern(&pattern);
                ArenaPolygon {
                    vertices: p.verts,
                    edge_labels: p.labels,
                    pattern,
                    affine,
                }
            })
            .collect();
        let mut index: HashMap<(u32, u32), usize> = HashMap::new();
        let mut edges: Vec<ArenaEdge> = Vec::new();
        for (pid, poly) in polygons.iter().enumerate() {
            let n = poly.vertices.len();
            for k in 0..n {
                let (a, b) = (poly.vertices[k], poly.vertices[(k + 1) % n]);
                let key = (a.min(b), a.max(b));
                match index.get(&key) {
                    Some(&e) => edges[e].polygons.push(pid as u32),
                    None => {
                        index.insert(key, edges.len());
                        edges.push(ArenaEdge {
                            a: key.0,
                            b: key.1,
                            label: poly.edge_labels[k],
                            polygons: vec![pid as u32],
                        });
                    }
                }
            }
        }
        let vertices = self.vertices;
        flags.snapped_vertices = vertices.iter().filter(|v| v.snapped).count();
        flags.degenerate_vertices = vertices.iter().filter(|v| v.is_degenerate()).count();
        let mut arena = PlaneArena {
            frame,
            vertices,
            polygons,
            edges,
            flags,
        };
        arena.flags.thin_polygons = (0..arena.polygons.len())
            .filter(|&p| arena.polygon_area(p) < THIN_TOL * side2)
            .count();
        arena
    }
}

/// Result of locating a slice point in an arena.
#[derive(Debug, Clone, PartialEq)]
pub struct PointQuery<'a> {
    pub polygon: usize,
    pub pattern: &'a ActivationPattern,
    pub affine: &'a AffineMap,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub regions: usize,
    /// Total length of interior edges: the part of the boundary inside the square.
    pub interior_edge_length: f64,
    pub interior_edges: usize,
    /// Vertices off the frame, where two neuron level sets meet.
    pub interior_vertices: usize,
    /// Frame vertices where an interior edge ends.
    pub frame_crossings: usize,
    pub area: f64,
    pub edge_length_density: f64,
    pub vertex_density: f64,
    pub degenerate_vertices: usize,
    pub area_histogram: Histogram,
    pub perimeter_histogram: Histogram,
}

impl PlaneArena {
    pub fn region_count(&self) -> usize {
        self.polygons.len()
    }

    pub fn position(&self, v: u32) -> [f64; 2] {
        self.vertices[v as usize].pos
    }

    pub fn polygon_points(&self, p: usize) -> Vec<[f64; 2]> {
        self.polygons[p].vertices.iter().map(|&v| self.position(v)).collect()
    }

    /// Signed area (positive for counter-clockwise).
    pub fn polygon_area(&self, p: usize) -> f64 {
        shoelace(&self.polygon_points(p))
    }

    pub fn polygon_perimeter(&self, p: usize) -> f64 {
        let pts = self.polygon_points(p);
        let n = pts.len();
        (0..n).map(|k| dist(pts[k], pts[(k + 1) % n])).sum()
    }

    pub fn polygon_centroid(&self, p: usize) -> [f64; 2] {
        let pts = self.polygon_points(p);
        let n = pts.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let (p0, p1) = (pts[k], pts[(k + 1) % n]);
            let cr = p0[0] * p1[1] - p1[0] * p0[1];
            cx += (p0[0] + p1[0]) * cr;
            cy += (p0[1] + p1[1]) * cr;
            a2 += cr;
        }
        if a2.abs() < 1e-300 {
            let k = n as f64;
            return [pts.iter().map(|q| q[0]).sum::<f64>() / k, pts.iter().map(|q| q[1]).sum::<f64>() / k];
        }
        [cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let edge = &self.edges[e];
        dist(self.position(edge.a), self.position(edge.b))
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = &ArenaEdge> {
        self.edges.iter().filter(|e| e.is_interior())
    }

    /// Vertices off the frame.
    pub fn interior_vertex_ids(&self) -> Vec<u32> {
        (0..self.vertices.len() as u32)
            .filter(|&v| !self.vertices[v as usize].on_frame)
            .collect()
    }

    /// Frame vertices that end an interior edge.
    pub fn frame_crossing_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .interior_edges()
            .flat_map(|e| [e.a, e.b])
            .filter(|&v| self.vertices[v as usize].on_frame)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Vertices, edges and faces of the subdivision including the frame;
    /// `V - E + F = 1` for a subdivided square.
    pub fn euler_characteristic(&self) -> i64 {
        let used: std::collections::HashSet<u32> = self
            .polygons
            .iter()
            .flat_map(|p| p.vertices.iter().copied())
            .collect();
        used.len() as i64 - self.edges.len() as i64 + self.polygons.len() as i64
    }

    /// Polygon containing `s`; on shared edges the lowest id wins.
    pub fn query_point(&self, s: [f64; 2]) -> Result<PointQuery<'_>> {
        if !self.frame.contains(s) {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) lies outside the square of side {}",
                s[0], s[1], self.frame.side
            )));
        }
        let tol = 1e-12 * self.frame.side;
        for (pid, _) in self.polygons.iter().enumerate() {
            let pts = self.polygon_points(pid);
            let n = pts.len();
            let mut min_dist = f64::INFINITY;
            let mut inside = true;
            for k in 0..n {
                let (a, b) = (pts[k], pts[(k + 1) % n]);
                let len = dist(a, b);
                if len == 0.0 {
                    continue;
                }
                let d = ((b[0] - a[0]) * (s[1] - a[1]) - (b[1] - a[1]) * (s[0] - a[0])) / len;
                if d < -tol {
                    inside = false;
                    break;
                }
                min_dist = min_dist.min(d);
            }
            if inside {
                let poly = &self.polygons[pid];
                let on_interior_edge = (0..n).any(|k| {
                    let (a, b) = (pts[k], pts[(k + 1) % n]);
                    let len = dist(a, b);
                    len > 0.0
                        && matches!(poly.edge_labels[k], EdgeLabel::Neuron(_))
                        && (((b[0] - a[0]) * (s[1] - a[1]) - (b[1] - a[1]) * (s[0] - a[0])) / len).abs() <= tol
                });
                return Ok(PointQuery {
                    polygon: pid,
                    pattern: &poly.pattern,
                    affine: &poly.affine,
                    on_boundary: on_interior_edge && min_dist <= tol,
                });
            }
        }
        Err(Error::InvalidArgument("point not covered by any polygon".into()))
    }

    /// Polygons whose interior meets the horizontal line `s1 = y`.
    pub fn scanline_count(&self, y: f64) -> usize {
        (0..self.polygons.len())
            .filter(|&p| {
                let pts = self.polygon_points(p);
                let lo = pts.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
                lo < y && y < hi
            })
            .count()
    }

    pub fn stats(&self, bins: usize) -> RegionStats {
        region_stats(self, bins)
    }
}

pub fn region_stats(arena: &PlaneArena, bins: usize) -> RegionStats {
    let areas: Vec<f64> = (0..arena.polygons.len()).map(|p| arena.polygon_area(p)).collect();
    let perimeters: Vec<f64> = (0..arena.polygons.len()).map(|p| arena.polygon_perimeter(p)).collect();
    let mut length = 0.0;
    let mut interior_edges = 0;
    for (e, edge) in arena.edges.iter().enumerate() {
        if edge.is_interior() {
            length += arena.edge_length(e);
            interior_edges += 1;
        }
    }
    let area: f64 = areas.iter().sum();
    let interior_vertices = arena.interior_vertex_ids().len();
    let square = arena.frame.area();
    RegionStats {
        regions: arena.polygons.len(),
        interior_edge_length: length,
        interior_edges,
        interior_vertices,
        frame_crossings: arena.frame_crossing_ids().len(),
        area,
        edge_length_density: length / square,
        vertex_density: interior_vertices as f64 / square,
        degenerate_vertices: arena.flags.degenerate_vertices,
        area_histogram: histogram_of(&areas, bins.max(1)),
        perimeter_histogram: histogram_of(&perimeters, bins.max(1)),
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|k| {
            let (a, b) = (pts[k], pts[(k + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}
