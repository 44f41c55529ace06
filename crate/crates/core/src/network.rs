//! Tree pipe networks.
//!
//! A [`Network`] is an immutable, validated tree of pipes. Each pipe carries
//! its own coordinate `x ∈ [0, ℓ]` running from its `from` vertex to its `to`
//! vertex, so the internal normal is `+1` at `x = 0` and `-1` at `x = ℓ`.
//! One leaf, `x0`, is inaccessible; the remaining leaves are the accessible
//! ends, and their order fixes every matrix index downstream.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular area perturbation on the open interval `(x0, x1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaBlock {
    pub x0: f64,
    pub x1: f64,
    pub delta: f64,
}

/// Sampled area table, linearly interpolated and clamped at its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaTable {
    pub x: Vec<f64>,
    pub area: Vec<f64>,
}

/// Cross-sectional area `A(x)` along one pipe, in m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AreaProfile {
    Blocks {
        base: f64,
        #[serde(default)]
        blocks: Vec<AreaBlock>,
    },
    Table {
        table: AreaTable,
    },
}

impl AreaProfile {
    pub fn uniform(area: f64) -> Self {
        AreaProfile::Blocks {
            base: area,
            blocks: Vec::new(),
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        match self {
            AreaProfile::Blocks { base, blocks } => {
                base + blocks
                    .iter()
                    .filter(|b| x > b.x0 && x < b.x1)
                    .map(|b| b.delta)
                    .sum::<f64>()
            }
            AreaProfile::Table { table } => interp_clamped(&table.x, &table.area, x),
        }
    }

    /// Exact `∫_a^b A(x) dx`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        match self {
            AreaProfile::Blocks { base, blocks } => {
                base * (b - a)
                    + blocks
                        .iter()
                        .map(|blk| blk.delta * (b.min(blk.x1) - a.max(blk.x0)).max(0.0))
                        .sum::<f64>()
            }
            AreaProfile::Table { table } => {
                // Breakpoints of the piecewise-linear interpolant inside (a, b).
                let mut pts = vec![a];
                pts.extend(table.x.iter().copied().filter(|&x| x > a && x < b));
                pts.push(b);
                pts.windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.at(w[0]) + self.at(w[1])))
                    .sum()
            }
        }
    }

    /// Mean area over `(a, b)`.
    pub fn mean(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b) / (b - a)
    }

    /// Constant-area segments `(start, end, area)` covering `[0, length]`,
    /// or `None` when the profile is not piecewise constant.
    pub fn constant_segments(&self, length: f64) -> Option<Vec<(f64, f64, f64)>> {
        let mut cuts = vec![0.0, length];
        match self {
            AreaProfile::Blocks { blocks, .. } => {
                for b in blocks {
                    cuts.extend([b.x0, b.x1].into_iter().filter(|&x| x > 0.0 && x < length));
                }
            }
            AreaProfile::Table { table } => {
                let first = table.area.first()?;
                if table.area.iter().any(|a| a != first) {
                    return None;
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        Some(
            cuts.windows(2)
                .map(|w| (w[0], w[1], self.at(0.5 * (w[0] + w[1]))))
                .collect(),
        )
    }

    fn validate(&self, pipe: &str, length: f64) -> Result<()> {
        let invalid = |msg: &str| Error::InvalidArea(pipe.to_string(), msg.to_string());
        let probes: Vec<f64> = match self {
            AreaProfile::Blocks { base, blocks } => {
                if !base.is_finite() {
                    return Err(invalid("base area is not finite"));
                }
                let mut pts = vec![0.0, length];
                for b in blocks {
                    if !(b.x0 < b.x1) || !b.delta.is_finite() {
                        return Err(invalid("block needs x0 < x1 and a finite delta"));
                    }
                    pts.extend([b.x0, b.x1].into_iter().filter(|&x| x > 0.0 && x < length));
                }
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            }
            AreaProfile::Table { table } => {
                if table.x.len() < 2 || table.x.len() != table.area.len() {
                    return Err(invalid("table needs at least two (x, area) pairs of equal length"));
                }
                if table.x.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(invalid("table x must be strictly increasing"));
                }
                let mut pts = table.x.clone();
                pts.extend([0.0, length]);
                pts
            }
        };
        for x in probes {
            let area = self.at(x);
            if !(area > 0.0) {
                return Err(Error::NonpositiveArea {
                    pipe: pipe.to_string(),
                    x,
                    area,
                });
            }
        }
        Ok(())
    }

    /// True if `A` is constant on a neighbourhood of the given pipe end.
    fn constant_near(&self, at_start: bool, length: f64) -> bool {
        match self {
            AreaProfile::Blocks { blocks, .. } => blocks.iter().all(|b| {
                if at_start {
                    b.x0 > 0.0 || b.x1 <= 0.0
                } else {
                    b.x1 < length || b.x0 >= length
                }
            }),
            AreaProfile::Table { table } => {
                let (x, a) = (&table.x, &table.area);
                let n = x.len();
                if at_start {
                    x[0] > 0.0 || (a[0] == a[1] && x[1] > 0.0)
                } else {
                    x[n - 1] < length || (a[n - 1] == a[n - 2] && x[n - 2] < length)
                }
            }
        }
    }
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub area: AreaProfile,
}

/// Raw network description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub wave_speed: f64,
    pub gravity: f64,
    pub vertices: Vec<String>,
    pub pipes: Vec<PipeSpec>,
    pub x0: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accessible: Option<Vec<String>>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Which end of a pipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// `x = 0`, internal normal `+1`.
    Start,
    /// `x = ℓ`, internal normal `-1`.
    Finish,
}

impl End {
    pub fn normal(self) -> f64 {
        match self {
            End::Start => 1.0,
            End::Finish => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipe {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub area: AreaProfile,
}

impl Pipe {
    pub fn vertex_at(&self, end: End) -> usize {
        match end {
            End::Start => self.from,
            End::Finish => self.to,
        }
    }

    pub fn offset_of(&self, end: End) -> f64 {
        match end {
            End::Start => 0.0,
            End::Finish => self.length,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    wave_speed: f64,
    gravity: f64,
    vertices: Vec<String>,
    pipes: Vec<Pipe>,
    x0: usize,
    accessible: Vec<usize>,
    /// `(pipe, end)` pairs incident to each vertex.
    incidence: Vec<Vec<(usize, End)>>,
    /// All-pairs path length between vertices, m.
    dist: Vec<Vec<f64>>,
    /// For each pipe, the end facing away from `x0`.
    far_end: Vec<End>,
    /// For each pipe, positions (into `accessible`) of the leaves beyond its far end.
    leaves_beyond: Vec<Vec<usize>>,
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec = NetworkSpec::from_json(text)
            .map_err(|e| Error::InvalidConfig(format!("network JSON: {e}")))?;
        validate_network(&spec)
    }

    pub fn wave_speed(&self) -> f64 {
        self.wave_speed
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn pipe(&self, index: usize) -> &Pipe {
        &self.pipes[index]
    }

    pub fn x0(&self) -> usize {
        self.x0
    }

    /// Accessible leaves (vertex indices) in IRM order.
    pub fn accessible(&self) -> &[usize] {
        &self.accessible
    }

    pub fn accessible_ids(&self) -> Vec<String> {
        self.accessible.iter().map(|&v| self.vertices[v].clone()).collect()
    }

    pub fn incidence(&self, vertex: usize) -> &[(usize, End)] {
        &self.incidence[vertex]
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.incidence[vertex].len()
    }

    pub fn is_leaf(&self, vertex: usize) -> bool {
        self.degree(vertex) == 1
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.vertices
            .iter()
            .position(|v| v == id)
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    pub fn pipe_index(&self, id: &str) -> Result<usize> {
        self.pipes
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| Error::UnknownPipe(id.to_string()))
    }

    /// Position of an accessible leaf in IRM order.
    pub fn accessible_position(&self, vertex: usize) -> Option<usize> {
        self.accessible.iter().position(|&v| v == vertex)
    }

    /// The single pipe end attached to a leaf.
    pub fn leaf_end(&self, leaf: usize) -> (usize, End) {
        debug_assert!(self.is_leaf(leaf));
        self.incidence[leaf][0]
    }

    /// Internal normal `ν` at a leaf.
    pub fn leaf_normal(&self, leaf: usize) -> f64 {
        self.leaf_end(leaf).1.normal()
    }

    /// Cross-sectional area at a leaf.
    pub fn leaf_area(&self, leaf: usize) -> f64 {
        let (p, end) = self.leaf_end(leaf);
        let pipe = &self.pipes[p];
        pipe.area.at(pipe.offset_of(end))
    }

    /// Hydraulic impedance `a / (g A)` at a leaf: the head produced per unit
    /// injected flow before any reflection returns.
    pub fn leaf_impedance(&self, leaf: usize) -> f64 {
        self.wave_speed / (self.gravity * self.leaf_area(leaf))
    }

    pub fn vertex_distance(&self, u: usize, v: usize) -> f64 {
        self.dist[u][v]
    }

    /// End of `pipe` that faces away from `x0`.
    pub fn far_end(&self, pipe: usize) -> End {
        self.far_end[pipe]
    }

    /// Accessible leaves (positions in IRM order) cut off from `x0` by `pipe`.
    pub fn leaves_beyond(&self, pipe: usize) -> &[usize] {
        &self.leaves_beyond[pipe]
    }

    /// Longest path from the far end of `pipe` to one of the leaves beyond it.
    pub fn max_leaf_distance_beyond(&self, pipe: usize) -> f64 {
        let w = self.pipes[pipe].vertex_at(self.far_end[pipe]);
        self.leaves_beyond[pipe]
            .iter()
            .map(|&j| self.dist[self.accessible[j]][w])
            .fold(0.0, f64::max)
    }

    /// Total internal volume `∫ A dx` of the network, m³.
    pub fn total_volume(&self) -> f64 {
        self.pipes.iter().map(|p| p.area.integral(0.0, p.length)).sum()
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            wave_speed: self.wave_speed,
            gravity: self.gravity,
            vertices: self.vertices.clone(),
            pipes: self
                .pipes
                .iter()
                .map(|p| PipeSpec {
                    id: p.id.clone(),
                    from: self.vertices[p.from].clone(),
                    to: self.vertices[p.to].clone(),
                    length: p.length,
                    area: p.area.clone(),
                })
                .collect(),
            x0: self.vertices[self.x0].clone(),
            accessible: Some(self.accessible_ids()),
        }
    }
}

/// Checks topology, constants and area profiles, and fixes the accessible
/// leaf order (the spec's list when given, otherwise vertex order).
pub fn validate_network(spec: &NetworkSpec) -> Result<Network> {
    if !(spec.wave_speed > 0.0 && spec.wave_speed.is_finite())
        || !(spec.gravity > 0.0 && spec.gravity.is_finite())
    {
        return Err(Error::NonpositiveConstant);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, v) in spec.vertices.iter().enumerate() {
        if index.insert(v.as_str(), i).is_some() {
            return Err(Error::DuplicateId(v.clone()));
        }
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    };
    let nv = spec.vertices.len();
    if spec.pipes.is_empty() {
        return Err(Error::Disconnected(nv));
    }

    let mut pipe_ids = HashSet::new();
    let mut pipes = Vec::with_capacity(spec.pipes.len());
    let mut uf = UnionFind::new(nv);
    for p in &spec.pipes {
        if !pipe_ids.insert(p.id.as_str()) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
        if !(p.length > 0.0 && p.length.is_finite()) {
            return Err(Error::NonpositiveLength(p.id.clone(), p.length));
        }
        let (from, to) = (lookup(&p.from)?, lookup(&p.to)?);
        if from == to || !uf.union(from, to) {
            return Err(Error::CycleDetected(p.id.clone()));
        }
        p.area.validate(&p.id, p.length)?;
        pipes.push(Pipe {
            id: p.id.clone(),
            from,
            to,
            length: p.length,
            area: p.area.clone(),
        });
    }
    let components = uf.components();
    if components > 1 {
        return Err(Error::Disconnected(components));
    }

    let mut incidence = vec![Vec::new(); nv];
    for (k, p) in pipes.iter().enumerate() {
        incidence[p.from].push((k, End::Start));
        incidence[p.to].push((k, End::Finish));
    }
    if let Some(v) = (0..nv).find(|&v| incidence[v].len() == 2) {
        return Err(Error::DegreeTwoVertex(spec.vertices[v].clone()));
    }
    let x0 = lookup(&spec.x0)?;
    if incidence[x0].len() != 1 {
        return Err(Error::NonLeafX0(spec.x0.clone()));
    }
    for inc in &incidence {
        if let [(p, end)] = inc.as_slice() {
            let pipe = &pipes[*p];
            if !pipe.area.constant_near(*end == End::Start, pipe.length) {
                return Err(Error::AreaNotConstantAtLeaf(pipe.id.clone()));
            }
        }
    }

    let leaves: Vec<usize> = (0..nv)
        .filter(|&v| incidence[v].len() == 1 && v != x0)
        .collect();
    let accessible = match &spec.accessible {
        None => leaves.clone(),
        Some(list) => {
            let acc = list.iter().map(|id| lookup(id)).collect::<Result<Vec<_>>>()?;
            let mut sorted = acc.clone();
            sorted.sort_unstable();
            if sorted != leaves {
                let want: Vec<&str> = leaves.iter().map(|&v| spec.vertices[v].as_str()).collect();
                return Err(Error::AccessibleMismatch(format!(
                    "expected a permutation of {want:?}, got {list:?}"
                )));
            }
            acc
        }
    };

    let dist = (0..nv)
        .map(|s| single_source_distances(s, &pipes, &incidence))
        .collect::<Vec<_>>();

    // Rooting the tree at x0: each pipe's far end is the endpoint farther from x0.
    let parent = parents_from(x0, &pipes, &incidence);
    let far_end: Vec<End> = pipes
        .iter()
        .map(|p| {
            if parent[p.to] == Some(p.from) {
                End::Finish
            } else {
                End::Start
            }
        })
        .collect();
    let leaves_beyond = pipes
        .iter()
        .zip(&far_end)
        .map(|(p, &end)| {
            let w = p.vertex_at(end);
            accessible
                .iter()
                .enumerate()
                .filter(|&(_, &leaf)| {
                    let mut v = Some(leaf);
                    while let Some(u) = v {
                        if u == w {
                            return true;
                        }
                        v = parent[u];
                    }
                    false
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    Ok(Network {
        wave_speed: spec.wave_speed,
        gravity: spec.gravity,
        vertices: spec.vertices.clone(),
        pipes,
        x0,
        accessible,
        incidence,
        dist,
        far_end,
        leaves_beyond,
    })
}

fn single_source_distances(src: usize, pipes: &[Pipe], incidence: &[Vec<(usize, End)>]) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; incidence.len()];
    d[src] = 0.0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(p, end) in &incidence[u] {
            let pipe = &pipes[p];
            let v = match end {
                End::Start => pipe.to,
                End::Finish => pipe.from,
            };
            if d[v].is_infinite() {
                d[v] = d[u] + pipe.length;
                queue.push_back(v);
            }
        }
    }
    d
}

fn parents_from(root: usize, pipes: &[Pipe], incidence: &[Vec<(usize, End)>]) -> Vec<Option<usize>> {
    let mut parent = vec![None; incidence.len()];
    let mut seen = vec![false; incidence.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(p, end) in &incidence[u] {
            let v = match end {
                End::Start => pipes[p].to,
                End::Finish => pipes[p].from,
            };
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&x| self.find(x) == x).count()
    }
}

/// A non-junction point on a pipe, `offset` metres from the pipe's `x = 0` end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOnPipe {
    pipe: usize,
    offset: f64,
}

impl PointOnPipe {
    pub fn new(net: &Network, pipe: usize, offset: f64) -> Result<Self> {
        let p = net
            .pipes
            .get(pipe)
            .ok_or_else(|| Error::UnknownPipe(pipe.to_string()))?;
        let endpoint = if offset == 0.0 {
            Some(p.from)
        } else if offset == p.length {
            Some(p.to)
        } else {
            None
        };
        if let Some(v) = endpoint {
            if net.degree(v) >= 3 {
                return Err(Error::PointIsJunction(net.vertices[v].clone()));
            }
        }
        if !(offset > 0.0 && offset < p.length) {
            return Err(Error::PointOutOfRange {
                pipe: p.id.clone(),
                offset,
            });
        }
        Ok(Self { pipe, offset })
    }

    /// A cut point approached from inside the pipe; `offset` may sit on an
    /// endpoint, in which case the point is the one-sided limit along `pipe`.
    pub(crate) fn limit(pipe: usize, offset: f64) -> Self {
        Self { pipe, offset }
    }

    pub fn pipe(&self) -> usize {
        self.pipe
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

/// Something a travel time can be measured to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Vertex(usize),
    Point(PointOnPipe),
}

impl From<PointOnPipe> for Location {
    fn from(p: PointOnPipe) -> Self {
        Location::Point(p)
    }
}

impl Network {
    fn anchors(&self, loc: Location) -> [(usize, f64); 2] {
        match loc {
            Location::Vertex(v) => [(v, 0.0), (v, 0.0)],
            Location::Point(p) => {
                let pipe = &self.pipes[p.pipe];
                [(pipe.from, p.offset), (pipe.to, pipe.length - p.offset)]
            }
        }
    }

    /// Length of the unique tree path between two locations, m.
    pub fn distance(&self, u: Location, v: Location) -> f64 {
        if let (Location::Point(a), Location::Point(b)) = (u, v) {
            if a.pipe == b.pipe {
                return (a.offset - b.offset).abs();
            }
        }
        let mut best = f64::INFINITY;
        for (a, da) in self.anchors(u) {
            for (b, db) in self.anchors(v) {
                best = best.min(da + self.dist[a][b] + db);
            }
        }
        best
    }
}

/// Travel time along the tree, `distance / a`.
pub fn travel_time(net: &Network, u: Location, v: Location) -> f64 {
    net.distance(u, v) / net.wave_speed
}

/// Per-leaf activation durations for one cut point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTimes {
    /// Seconds, indexed in accessible-leaf order.
    pub f: Vec<f64>,
    pub cut_point: PointOnPipe,
}

impl ActionTimes {
    pub fn max(&self) -> f64 {
        self.f.iter().copied().fold(0.0, f64::max)
    }
}

/// Action times `f(x_j) = TT(x_j, p)` for leaves cut off from `x0` by `p`,
/// zero elsewhere.
pub fn action_times(net: &Network, p: PointOnPipe) -> Result<ActionTimes> {
    let p = PointOnPipe::new(net, p.pipe, p.offset)?;
    Ok(action_times_unchecked(net, p))
}

pub(crate) fn action_times_unchecked(net: &Network, p: PointOnPipe) -> ActionTimes {
    let mut f = vec![0.0; net.accessible.len()];
    let pipe = &net.pipes[p.pipe];
    let end = net.far_end[p.pipe];
    let w = pipe.vertex_at(end);
    let along = (p.offset - pipe.offset_of(end)).abs();
    for &j in &net.leaves_beyond[p.pipe] {
        f[j] = (net.dist[net.accessible[j]][w] + along) / net.wave_speed;
    }
    ActionTimes { f, cut_point: p }
}

/// The part of the network cut off from `x0` by a point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    /// `(pipe, start, end)` sub-intervals in pipe coordinates.
    pub covered: Vec<(usize, f64, f64)>,
    /// Accessible leaves (vertex indices) on the boundary of the set.
    pub boundary_leaves: Vec<usize>,
    pub cut_point: PointOnPipe,
}

impl AdmissibleSet {
    pub fn contains(&self, loc: Location, net: &Network) -> bool {
        match loc {
            Location::Point(p) => self
                .covered
                .iter()
                .any(|&(k, a, b)| k == p.pipe && p.offset >= a && p.offset <= b),
            Location::Vertex(v) => self.covered.iter().any(|&(k, a, b)| {
                let pipe = &net.pipes[k];
                (pipe.from == v && a == 0.0) || (pipe.to == v && b == pipe.length)
            }),
        }
    }

    /// `∫_{D_p} A(x) dx`, m³.
    pub fn volume(&self, net: &Network) -> f64 {
        self.covered
            .iter()
            .map(|&(k, a, b)| net.pipes[k].area.integral(a, b))
            .sum()
    }
}

pub fn admissible_set(net: &Network, p: PointOnPipe) -> Result<AdmissibleSet> {
    let p = PointOnPipe::new(net, p.pipe, p.offset)?;
    let pipe = &net.pipes[p.pipe];
    let end = net.far_end[p.pipe];
    let w = pipe.vertex_at(end);
    let mut covered = vec![match end {
        End::Start => (p.pipe, 0.0, p.offset),
        End::Finish => (p.pipe, p.offset, pipe.length),
    }];
    // Whole pipes beyond the far end: walk away from the cut pipe.
    let mut stack = vec![(w, p.pipe)];
    while let Some((u, came_from)) = stack.pop() {
        for &(k, e) in &net.incidence[u] {
            if k == came_from {
                continue;
            }
            covered.push((k, 0.0, net.pipes[k].length));
            let other = match e {
                End::Start => net.pipes[k].to,
                End::Finish => net.pipes[k].from,
            };
            stack.push((other, k));
        }
    }
    covered.sort_by_key(|c| c.0);
    let boundary_leaves = net.leaves_beyond[p.pipe]
        .iter()
        .map(|&j| net.accessible[j])
        .collect();
    Ok(AdmissibleSet {
        covered,
        boundary_leaves,
        cut_point: p,
    })
}

/// Domain of influence of the action times: points reached from some leaf
/// strictly within its action time.
pub fn in_domain_of_influence(net: &Network, f: &ActionTimes, loc: Location) -> bool {
    net.accessible
        .iter()
        .zip(&f.f)
        .any(|(&leaf, &fj)| travel_time(net, Location::Vertex(leaf), loc) < fj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn raw(pipes: &[(&str, &str, &str, f64)], vertices: &[&str], x0: &str) -> NetworkSpec {
        NetworkSpec {
            wave_speed: 1000.0,
            gravity: 9.81,
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            pipes: pipes
                .iter()
                .map(|&(id, f, t, l)| PipeSpec {
                    id: id.into(),
                    from: f.into(),
                    to: t.into(),
                    length: l,
                    area: AreaProfile::uniform(1.0),
                })
                .collect(),
            x0: x0.into(),
            accessible: None,
        }
    }

    #[test]
    fn example_one_validates() {
        let net = presets::example1();
        assert_eq!(net.accessible_ids(), ["A", "B"]);
        assert_eq!(net.vertices()[net.x0()], "C");
        assert_eq!(net.pipes().len(), net.vertices().len() - 1);
    }

    #[test]
    fn single_pipe() {
        let net = validate_network(&raw(&[("AB", "A", "B", 100.0)], &["A", "B"], "B")).unwrap();
        assert_eq!(net.accessible_ids(), ["A"]);
        assert_eq!(net.leaf_normal(net.accessible()[0]), 1.0);
    }

    #[test]
    fn rejects_degree_two() {
        let spec = raw(
            &[("AM", "A", "M", 1.0), ("MB", "M", "B", 1.0)],
            &["A", "M", "B"],
            "B",
        );
        assert_eq!(validate_network(&spec).unwrap_err(), Error::DegreeTwoVertex("M".into()));
    }

    #[test]
    fn rejects_cycle_and_disconnection() {
        let cyc = raw(
            &[
                ("AD", "A", "D", 1.0),
                ("BD", "B", "D", 1.0),
                ("CD", "C", "D", 1.0),
                ("AB", "A", "B", 1.0),
            ],
            &["A", "B", "C", "D"],
            "C",
        );
        assert!(matches!(validate_network(&cyc), Err(Error::CycleDetected(_))));
        let split = raw(&[("AB", "A", "B", 1.0), ("CD", "C", "D", 1.0)], &["A", "B", "C", "D"], "A");
        assert_eq!(validate_network(&split).unwrap_err(), Error::Disconnected(2));
    }

    #[test]
    fn rejects_bad_x0_and_values() {
        let star = raw(
            &[("AD", "A", "D", 1.0), ("BD", "B", "D", 1.0), ("CD", "C", "D", 1.0)],
            &["A", "B", "C", "D"],
            "D",
        );
        assert_eq!(validate_network(&star).unwrap_err(), Error::NonLeafX0("D".into()));

        let mut neg = raw(&[("AB", "A", "B", -1.0)], &["A", "B"], "B");
        assert!(matches!(validate_network(&neg), Err(Error::NonpositiveLength(..))));
        neg.pipes[0].length = 10.0;
        neg.pipes[0].area = AreaProfile::Blocks {
            base: 1.0,
            blocks: vec![AreaBlock { x0: 2.0, x1: 3.0, delta: -1.5 }],
        };
        assert!(matches!(validate_network(&neg), Err(Error::NonpositiveArea { .. })));
        neg.pipes[0].area = AreaProfile::Blocks {
            base: 1.0,
            blocks: vec![AreaBlock { x0: 0.0, x1: 3.0, delta: -0.5 }],
        };
        assert!(matches!(validate_network(&neg), Err(Error::AreaNotConstantAtLeaf(_))));
        neg.pipes[0].area = AreaProfile::uniform(1.0);
        neg.wave_speed = 0.0;
        assert_eq!(validate_network(&neg).unwrap_err(), Error::NonpositiveConstant);
    }

    #[test]
    fn accessible_order_is_honoured() {
        let mut spec = presets::example1_spec();
        spec.accessible = Some(vec!["B".into(), "A".into()]);
        let net = validate_network(&spec).unwrap();
        assert_eq!(net.accessible_ids(), ["B", "A"]);
        spec.accessible = Some(vec!["B".into(), "C".into()]);
        assert!(matches!(validate_network(&spec), Err(Error::AccessibleMismatch(_))));
    }

    #[test]
    fn example_one_travel_times() {
        let net = presets::example1();
        let v = |id: &str| Location::Vertex(net.vertex_index(id).unwrap());
        assert!((travel_time(&net, v("A"), v("D")) - 0.4).abs() < 1e-12);
        assert!((travel_time(&net, v("A"), v("B")) - 0.7).abs() < 1e-12);
        assert_eq!(travel_time(&net, v("A"), v("A")), 0.0);
        let p = PointOnPipe::new(&net, net.pipe_index("DC").unwrap(), 100.0).unwrap();
        assert!((travel_time(&net, v("B"), p.into()) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn example_one_action_times() {
        let net = presets::example1();
        let dc = PointOnPipe::new(&net, net.pipe_index("DC").unwrap(), 100.0).unwrap();
        let f = action_times(&net, dc).unwrap();
        assert!((f.f[0] - 0.5).abs() < 1e-12 && (f.f[1] - 0.4).abs() < 1e-12);
        let ad = PointOnPipe::new(&net, net.pipe_index("AD").unwrap(), 200.0).unwrap();
        let f = action_times(&net, ad).unwrap();
        assert!((f.f[0] - 0.2).abs() < 1e-12);
        assert_eq!(f.f[1], 0.0);
    }

    #[test]
    fn example_two_action_times() {
        let net = presets::example2();
        let p = PointOnPipe::new(&net, net.pipe_index("ED").unwrap(), 50.0).unwrap();
        let f = action_times(&net, p).unwrap();
        for (got, want) in f.f.iter().zip([0.35, 0.45, 0.45]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn junction_points_are_rejected() {
        let net = presets::example1();
        let ad = net.pipe_index("AD").unwrap();
        assert_eq!(
            PointOnPipe::new(&net, ad, 400.0).unwrap_err(),
            Error::PointIsJunction("D".into())
        );
        assert!(matches!(
            PointOnPipe::new(&net, ad, 0.0),
            Err(Error::PointOutOfRange { .. })
        ));
    }

    #[test]
    fn example_one_admissible_set() {
        let net = presets::example1();
        let dc = net.pipe_index("DC").unwrap();
        let set = admissible_set(&net, PointOnPipe::new(&net, dc, 100.0).unwrap()).unwrap();
        let (ad, bd) = (net.pipe_index("AD").unwrap(), net.pipe_index("BD").unwrap());
        assert_eq!(set.covered, vec![(ad, 0.0, 400.0), (bd, 0.0, 300.0), (dc, 0.0, 100.0)]);
        let ids: Vec<_> = set.boundary_leaves.iter().map(|&v| net.vertices()[v].as_str()).collect();
        assert_eq!(ids, ["A", "B"]);
        assert!((set.volume(&net) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn single_pipe_admissible_set() {
        let spec = raw(&[("AB", "A", "B", 100.0)], &["A", "B"], "B");
        let net = validate_network(&spec).unwrap();
        let set = admissible_set(&net, PointOnPipe::new(&net, 0, 30.0).unwrap()).unwrap();
        assert_eq!(set.covered, vec![(0, 0.0, 30.0)]);
    }

    #[test]
    fn example_two_admissible_set() {
        let net = presets::example2();
        let ae = net.pipe_index("AE").unwrap();
        let set = admissible_set(&net, PointOnPipe::new(&net, ae, 150.0).unwrap()).unwrap();
        assert_eq!(set.covered, vec![(ae, 0.0, 150.0)]);
        assert_eq!(set.boundary_leaves, vec![net.vertex_index("A").unwrap()]);
    }

    #[test]
    fn reversed_pipe_orientation() {
        // Leaf A sits at the x = ℓ end of its pipe.
        let mut spec = presets::example1_spec();
        spec.pipes[0] = PipeSpec {
            id: "DA".into(),
            from: "D".into(),
            to: "A".into(),
            length: 400.0,
            area: AreaProfile::uniform(1.0),
        };
        let net = validate_network(&spec).unwrap();
        let a = net.vertex_index("A").unwrap();
        assert_eq!(net.leaf_normal(a), -1.0);
        let da = net.pipe_index("DA").unwrap();
        assert_eq!(net.far_end(da), End::Finish);
        let p = PointOnPipe::new(&net, da, 300.0).unwrap();
        let f = action_times(&net, p).unwrap();
        assert!((f.f[0] - 0.1).abs() < 1e-12);
        let set = admissible_set(&net, p).unwrap();
        assert_eq!(set.covered, vec![(da, 300.0, 400.0)]);
    }

    #[test]
    fn area_profile_integrals() {
        let a = AreaProfile::Blocks {
            base: 1.0,
            blocks: vec![
                AreaBlock { x0: 410.0, x1: 450.0, delta: -0.4 },
                AreaBlock { x0: 150.0, x1: 250.0, delta: -0.2 },
            ],
        };
        assert_eq!(a.at(200.0), 0.8);
        assert_eq!(a.at(150.0), 1.0);
        assert!((a.integral(0.0, 500.0) - (500.0 - 16.0 - 20.0)).abs() < 1e-12);
        assert_eq!(a.constant_segments(500.0).unwrap().len(), 5);
        let t = AreaProfile::Table {
            table: AreaTable { x: vec![0.0, 10.0, 20.0], area: vec![1.0, 1.0, 3.0] },
        };
        assert_eq!(t.at(15.0), 2.0);
        assert!((t.integral(0.0, 20.0) - 30.0).abs() < 1e-12);
        assert!(t.constant_segments(20.0).is_none());
    }
}
