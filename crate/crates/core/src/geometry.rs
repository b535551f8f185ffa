//! Lattice frame, structured hexagon meshes and coordinate-matched edge
//! identifications (translations, rotations by 2π/3, Bloch phases).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use faer::c64;

use crate::error::{Error, Result};

/// Bumped whenever a geometric or ordering convention changes; part of the
/// operator cache key.
pub const CONVENTIONS_VERSION: &str = "hexdtn-conventions/1";

const MESH_HEADER: &str = "# hexdtn-mesh v1";
const MATCH_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Rotation about the origin by `turns`·2π/3.
    pub fn rotate_thirds(self, turns: i32) -> Point {
        let s3 = 3f64.sqrt() / 2.0;
        match turns.rem_euclid(3) {
            0 => self,
            1 => Point::new(-0.5 * self.x - s3 * self.y, s3 * self.x - 0.5 * self.y),
            _ => Point::new(-0.5 * self.x + s3 * self.y, -s3 * self.x - 0.5 * self.y),
        }
    }

    pub fn rotate_thirds_about(self, turns: i32, center: Point) -> Point {
        (self - center).rotate_thirds(turns) + center
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        Point::new(self * p.x, self * p.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeFrame {
    d: f64,
}

impl LatticeFrame {
    pub fn new(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Config(format!("lattice side d must be positive, got {d}")));
        }
        Ok(LatticeFrame { d })
    }

    pub fn side(&self) -> f64 {
        self.d
    }

    /// Vertical period L = √3·d.
    pub fn period(&self) -> f64 {
        3f64.sqrt() * self.d
    }

    pub fn e1(&self) -> Point {
        Point::new(1.5 * self.d, 0.5 * self.period())
    }

    pub fn e2(&self) -> Point {
        Point::new(0.0, self.period())
    }

    /// a·e1 + b·e2.
    pub fn lattice_point(&self, a: i64, b: i64) -> Point {
        (a as f64) * self.e1() + (b as f64) * self.e2()
    }

    /// Center of the half-space cell C_pq (C_00 sits at e1).
    pub fn halfspace_center(&self, p: i64, q: i64) -> Point {
        self.lattice_point(p + 1, q)
    }

    /// Hexagon vertex `i` relative to the cell center, counter-clockwise from (d, 0).
    pub fn vertex(&self, i: usize) -> Point {
        let (d, l) = (self.d, self.period());
        match i % 6 {
            0 => Point::new(d, 0.0),
            1 => Point::new(0.5 * d, 0.5 * l),
            2 => Point::new(-0.5 * d, 0.5 * l),
            3 => Point::new(-d, 0.0),
            4 => Point::new(-0.5 * d, -0.5 * l),
            _ => Point::new(0.5 * d, -0.5 * l),
        }
    }

    pub fn hexagon_area(&self) -> f64 {
        1.5 * 3f64.sqrt() * self.d * self.d
    }

    /// Lattice coordinates (a, b) of the cell containing `p` (nearest lattice point).
    pub fn containing_cell(&self, p: Point) -> (i64, i64) {
        let l = self.period();
        let a0 = (p.x / (1.5 * self.d)).floor() as i64;
        let mut best = (0, 0);
        let mut best_dist = f64::INFINITY;
        for a in a0 - 1..=a0 + 2 {
            let b0 = ((p.y - 0.5 * l * a as f64) / l).round() as i64;
            for b in b0 - 1..=b0 + 1 {
                let dist = (p - self.lattice_point(a, b)).norm();
                if dist < best_dist {
                    best_dist = dist;
                    best = (a, b);
                }
            }
        }
        best
    }
}

/// Hexagon boundary edges, named by position in the flat-top hexagon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    UR,
    Top,
    UL,
    LL,
    Bot,
    LR,
}

impl EdgeLabel {
    pub const ALL: [EdgeLabel; 6] = [
        EdgeLabel::UR,
        EdgeLabel::Top,
        EdgeLabel::UL,
        EdgeLabel::LL,
        EdgeLabel::Bot,
        EdgeLabel::LR,
    ];

    /// Start and end vertex indices (counter-clockwise).
    pub fn vertices(self) -> (usize, usize) {
        let i = self as usize;
        (i, (i + 1) % 6)
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeLabel::UR => "UR",
            EdgeLabel::Top => "TOP",
            EdgeLabel::UL => "UL",
            EdgeLabel::LL => "LL",
            EdgeLabel::Bot => "BOT",
            EdgeLabel::LR => "LR",
        }
    }
}

/// Exact integer key for mesh nodes: every node coordinate is a multiple of
/// (d/2m, L/2m), also after lattice translations and 2π/3 rotations.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NodeKeyer {
    sx: f64,
    sy: f64,
}

impl NodeKeyer {
    pub(crate) fn new(frame: &LatticeFrame, m: usize) -> Self {
        NodeKeyer {
            sx: 2.0 * m as f64 / frame.side(),
            sy: 2.0 * m as f64 / frame.period(),
        }
    }

    pub(crate) fn key(&self, p: Point) -> Result<(i64, i64)> {
        let (u, v) = (p.x * self.sx, p.y * self.sy);
        let (ku, kv) = (u.round(), v.round());
        if (u - ku).abs() > 1e-6 || (v - kv).abs() > 1e-6 {
            return Err(Error::Geometry(format!(
                "point ({:.15}, {:.15}) is not on the mesh lattice",
                p.x, p.y
            )));
        }
        Ok((ku as i64, kv as i64))
    }
}

/// Conforming structured triangulation of one hexagon.
#[derive(Clone, Debug)]
pub struct MeshedCell {
    frame: LatticeFrame,
    center: Point,
    segments: usize,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: [Vec<usize>; 6],
    lookup: HashMap<(i64, i64), usize>,
}

fn segments_for(frame: &LatticeFrame, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("mesh size h must be positive, got {h}")));
    }
    if h > frame.side() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "mesh size h = {h} exceeds the hexagon side d = {}",
            frame.side()
        )));
    }
    let m = (frame.side() / h).round();
    if m < 1.0 || m > 4096.0 {
        return Err(Error::Config(format!("degenerate mesh: {m} segments per edge")));
    }
    Ok(m as usize)
}

/// Mesh of the cell centered at e1 (C_00); the same node ordering as the interior cell.
pub fn build_reference_cell(frame: LatticeFrame, h: f64) -> Result<MeshedCell> {
    let m = segments_for(&frame, h)?;
    MeshedCell::build(frame, m, frame.e1())
}

/// Mesh of the defect cell Ω^i centered at the origin.
pub fn build_interior_cell(frame: LatticeFrame, h: f64) -> Result<MeshedCell> {
    let m = segments_for(&frame, h)?;
    MeshedCell::build(frame, m, Point::default())
}

impl MeshedCell {
    /// Meshes one 2π/3 sector (two of the six vertex triangles) and rotates it twice.
    pub fn build(frame: LatticeFrame, m: usize, center: Point) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("degenerate mesh: zero segments per edge".into()));
        }
        let keyer = NodeKeyer::new(&frame, m);
        let mut sector_nodes = Vec::new();
        let mut sector_tris = Vec::new();
        for s in 0..2 {
            let (a, b) = (frame.vertex(s), frame.vertex(s + 1));
            let mut idx = vec![vec![0usize; m + 1]; m + 1];
            for i in 0..=m {
                for j in 0..=m - i {
                    idx[i][j] = sector_nodes.len();
                    sector_nodes.push((1.0 / m as f64) * ((i as f64) * a + (j as f64) * b));
                }
            }
            for i in 0..m {
                for j in 0..m - i {
                    sector_tris.push([idx[i][j], idx[i + 1][j], idx[i][j + 1]]);
                    if i + j + 1 < m {
                        sector_tris.push([idx[i + 1][j], idx[i + 1][j + 1], idx[i][j + 1]]);
                    }
                }
            }
        }

        let mut nodes = Vec::new();
        let mut lookup = HashMap::new();
        let mut triangles = Vec::new();
        for turn in 0..3 {
            let mut local = Vec::with_capacity(sector_nodes.len());
            for p in &sector_nodes {
                let q = p.rotate_thirds(turn);
                let key = keyer.key(q)?;
                let id = *lookup.entry(key).or_insert_with(|| {
                    nodes.push(q);
                    nodes.len() - 1
                });
                local.push(id);
            }
            for t in &sector_tris {
                triangles.push([local[t[0]], local[t[1]], local[t[2]]]);
            }
        }

        let mut cell = MeshedCell {
            frame,
            center,
            segments: m,
            nodes,
            triangles,
            edges: Default::default(),
            lookup,
        };
        for label in EdgeLabel::ALL {
            let (s, e) = label.vertices();
            let (a, b) = (frame.vertex(s), frame.vertex(e));
            let mut list = Vec::with_capacity(m + 1);
            for t in 0..=m {
                let f = t as f64 / m as f64;
                let p = a + f * (b - a);
                list.push(cell.find_local(p).ok_or_else(|| {
                    Error::Geometry(format!("edge {} node {t} missing from mesh", label.name()))
                })?);
            }
            cell.edges[label as usize] = list;
        }
        cell.check_invariants()?;
        Ok(cell)
    }

    pub fn frame(&self) -> &LatticeFrame {
        &self.frame
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn mesh_size(&self) -> f64 {
        self.frame.side() / self.segments as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node coordinates relative to the cell center.
    pub fn local_nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn global_node(&self, i: usize) -> Point {
        self.center + self.nodes[i]
    }

    pub fn global_nodes(&self) -> Vec<Point> {
        self.nodes.iter().map(|&p| self.center + p).collect()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Nodes along an edge, from its start vertex to its end vertex (both included).
    pub fn edge(&self, label: EdgeLabel) -> &[usize] {
        &self.edges[label as usize]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.edges.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * (self.nodes[b] - self.nodes[a]).cross(self.nodes[c] - self.nodes[a])
    }

    /// Node at a local coordinate, if any.
    pub fn find_local(&self, p: Point) -> Option<usize> {
        let key = NodeKeyer::new(&self.frame, self.segments).key(p).ok()?;
        let id = *self.lookup.get(&key)?;
        ((self.nodes[id] - p).norm() <= MATCH_TOL * self.frame.side()).then_some(id)
    }

    pub fn find_global(&self, p: Point) -> Option<usize> {
        self.find_local(p - self.center)
    }

    /// perm[i] = node at Θ^turns(node i) about the cell center.
    pub fn rotation_permutation(&self, turns: i32) -> Result<Vec<usize>> {
        self.nodes
            .iter()
            .map(|&p| {
                self.find_local(p.rotate_thirds(turns)).ok_or_else(|| {
                    Error::Geometry(format!("rotated node ({}, {}) has no image", p.x, p.y))
                })
            })
            .collect()
    }

    /// Same mesh translated to another center.
    pub fn translated(&self, center: Point) -> MeshedCell {
        MeshedCell {
            center,
            ..self.clone()
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let d = self.frame.side();
        let tol = 1e-12 * d;
        for (t, _) in self.triangles.iter().enumerate() {
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::Geometry(format!("triangle {t} is not positively oriented")));
            }
        }
        let area: f64 = (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum();
        if (area - self.frame.hexagon_area()).abs() > 1e-10 * d * d {
            return Err(Error::Geometry(format!("mesh area {area} differs from hexagon area")));
        }
        let e2 = self.frame.e2();
        let e1 = self.frame.e1();
        let pairs = [
            (EdgeLabel::Bot, EdgeLabel::Top, e2),
            (EdgeLabel::LL, EdgeLabel::UR, e1),
            (EdgeLabel::UL, EdgeLabel::LR, e1 - e2),
        ];
        for (src, dst, shift) in pairs {
            let a = self.edge(src);
            let b = self.edge(dst);
            for &i in a {
                let p = self.nodes[i] + shift;
                if !b.iter().any(|&j| (self.nodes[j] - p).norm() <= tol) {
                    return Err(Error::Geometry(format!(
                        "edge {} does not match edge {} after translation",
                        src.name(),
                        dst.name()
                    )));
                }
            }
        }
        for &p in &self.nodes {
            let q = p.rotate_thirds(1);
            match self.find_local(q) {
                Some(j) if (self.nodes[j] - q).norm() <= tol => {}
                _ => {
                    return Err(Error::Geometry(format!(
                        "mesh not invariant under 2π/3 rotation at ({}, {})",
                        p.x, p.y
                    )))
                }
            }
        }
        Ok(())
    }

    /// Versioned plain-text listing of nodes (global coordinates), triangles and edges.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MESH_HEADER}");
        let _ = writeln!(
            s,
            "center {:.17e} {:.17e} side {:.17e} segments {}",
            self.center.x,
            self.center.y,
            self.frame.side(),
            self.segments
        );
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for (i, p) in self.global_nodes().iter().enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e}", p.x, p.y);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]);
        }
        for label in EdgeLabel::ALL {
            let ids: Vec<String> = self.edge(label).iter().map(|i| i.to_string()).collect();
            let _ = writeln!(s, "edge {} {} {}", label.name(), ids.len(), ids.join(" "));
        }
        s
    }
}

/// Global points of the reference period of Σ^0 (UR ∪ LR of Ω^i): bottom vertex
/// (d/2, −L/2) included, top vertex (d/2, L/2) excluded, ordered upward.
pub fn sigma0_points(frame: &LatticeFrame, m: usize) -> Vec<Point> {
    let (v5, v0, v1) = (frame.vertex(5), frame.vertex(0), frame.vertex(1));
    let mut pts = Vec::with_capacity(2 * m);
    for t in 0..m {
        pts.push(v5 + (t as f64 / m as f64) * (v0 - v5));
    }
    for t in 0..m {
        pts.push(v0 + (t as f64 / m as f64) * (v1 - v0));
    }
    pts
}

/// Reference to a hexagon edge of the lattice cell a·e1 + b·e2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRef {
    pub label: EdgeLabel,
    pub cell: (i64, i64),
}

/// Identification of the nodes of one edge with those of another:
/// target[permutation[i]] = phase · source[i].
#[derive(Clone, Debug)]
pub struct EdgeMap {
    pub source: EdgeRef,
    pub target: EdgeRef,
    pub permutation: Vec<usize>,
    pub phase: c64,
}

impl EdgeMap {
    pub fn apply(&self, trace: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); trace.len()];
        for (i, &v) in trace.iter().enumerate() {
            out[self.permutation[i]] = self.phase * v;
        }
        out
    }

    pub fn apply_inverse(&self, trace: &[c64]) -> Vec<c64> {
        let inv = self.phase.conj();
        self.permutation.iter().map(|&j| inv * trace[j]).collect()
    }
}

/// Maps a source edge onto a target edge by an explicit point transform, matching
/// coordinates within 1e-10·d.
fn match_edge(
    cell: &MeshedCell,
    source: EdgeRef,
    target: EdgeRef,
    transform: impl Fn(Point) -> Point,
    phase: c64,
) -> Result<EdgeMap> {
    let f = cell.frame();
    let tol = MATCH_TOL * f.side();
    let src_center = f.lattice_point(source.cell.0, source.cell.1);
    let dst_center = f.lattice_point(target.cell.0, target.cell.1);
    let dst: Vec<Point> = cell
        .edge(target.label)
        .iter()
        .map(|&j| dst_center + cell.local_nodes()[j])
        .collect();
    let mut permutation = Vec::new();
    for &i in cell.edge(source.label) {
        let p = transform(src_center + cell.local_nodes()[i]);
        let j = dst.iter().position(|q| (*q - p).norm() <= tol).ok_or_else(|| {
            Error::Geometry(format!(
                "node ({:.6}, {:.6}) of edge {} has no image on edge {}",
                p.x,
                p.y,
                source.label.name(),
                target.label.name()
            ))
        })?;
        permutation.push(j);
    }
    let mut seen = permutation.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != permutation.len() {
        return Err(Error::Geometry("edge map is not a bijection".into()));
    }
    Ok(EdgeMap {
        source,
        target,
        permutation,
        phase,
    })
}

/// Bloch phase e^{i·shift·k·L}.
pub fn bloch_phase(k: f64, period: f64, shift: i64) -> c64 {
    c64::cis(k * period * shift as f64)
}

/// The edge identifications used by the half-space construction, for wavenumber k:
/// Σ^0 ↔ Σ^ℓ_00, TOP ↔ BOT of C_00, right interface of C_00 ↔ left of C_10,
/// and the two rotation identities between Γ^± of the strip and the Σ^∓ periods.
pub fn canonical_edge_maps(cell: &MeshedCell, k: f64) -> Result<Vec<EdgeMap>> {
    use EdgeLabel::*;
    let f = *cell.frame();
    let l = f.period();
    if !(k > -std::f64::consts::PI / l - 1e-14 && k <= std::f64::consts::PI / l + 1e-14) {
        return Err(Error::Config(format!("wavenumber {k} outside the Brillouin zone")));
    }
    let one = c64::new(1.0, 0.0);
    let ph = bloch_phase(k, l, 1);
    let e2 = f.e2();
    let r = |label, a, b| EdgeRef { label, cell: (a, b) };
    let id = |p: Point| p;
    let maps_head = vec![
        match_edge(cell, r(UR, 0, 0), r(LL, 1, 0), id, one)?,
        match_edge(cell, r(LR, 0, 0), r(UL, 1, 0), move |p| p + e2, ph)?,
        match_edge(cell, r(Bot, 1, 0), r(Top, 1, 0), move |p| p + e2, ph)?,
        match_edge(cell, r(UR, 1, 0), r(LL, 2, 0), id, one)?,
        match_edge(cell, r(LR, 1, 0), r(UL, 2, 0), move |p| p + e2, ph)?,
    ];
    let mut maps = maps_head;
    // Γ^+_00 rotated by −2π/3 is Σ^-_0 = Σ^0 − e2.
    maps.push(match_edge(cell, r(Top, 1, 0), r(LR, 0, -1), |p| p.rotate_thirds(-1), one)?);
    maps.push(match_edge(cell, r(UL, 1, 0), r(UR, 0, -1), |p| p.rotate_thirds(-1), one)?);
    // Γ^-_{0,-1} rotated by 2π/3 is Σ^+_0 = Σ^0 + e2.
    maps.push(match_edge(cell, r(LL, 1, -1), r(LR, 0, 1), |p| p.rotate_thirds(1), one)?);
    maps.push(match_edge(cell, r(Bot, 1, -1), r(UR, 0, 1), |p| p.rotate_thirds(1), one)?);
    Ok(maps)
}

/// A cell node identified with a period DOF up to a Bloch shift:
/// value(node) = e^{i·shift·k·L} · value(dof).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Identification {
    pub node: usize,
    pub dof: usize,
    pub shift: i64,
}

/// k-independent node bookkeeping for the reference cell C_00 in terms of the
/// Σ^0 period representation (2m DOFs).
#[derive(Clone, Debug)]
pub struct CellLayout {
    pub period_points: Vec<Point>,
    /// LL ∪ UL nodes of C_00 as shifted copies of Σ^0 DOFs.
    pub left: Vec<Identification>,
    /// UR ∪ LR nodes of C_00 as shifted copies of Σ^0 + e1 DOFs.
    pub right: Vec<Identification>,
    /// Interior TOP nodes (slave) and their BOT masters.
    pub top_bottom: Vec<(usize, usize)>,
    /// Node of C_00 carrying Γ^+ DOF j (rotation image of Σ^-_0 DOF j).
    pub gamma_plus: Vec<usize>,
    /// Node of C_00 whose value times e^{-ikL} is Γ^-_{0,-1} DOF j.
    pub gamma_minus: Vec<usize>,
}

impl CellLayout {
    pub fn new(cell: &MeshedCell) -> Result<Self> {
        use EdgeLabel::*;
        let f = *cell.frame();
        let m = cell.segments();
        let (e1, e2) = (f.e1(), f.e2());
        let period_points = sigma0_points(&f, m);
        let tol = MATCH_TOL * f.side();
        let c00 = f.halfspace_center(0, 0);

        // cell node x (global) = p_j + offset + q·e2
        let identify = |labels: [EdgeLabel; 2], offset: Point| -> Result<Vec<Identification>> {
            let mut ids = Vec::new();
            let mut nodes: Vec<usize> = labels.iter().flat_map(|&l| cell.edge(l).to_vec()).collect();
            nodes.sort_unstable();
            nodes.dedup();
            for node in nodes {
                let g = c00 + cell.local_nodes()[node];
                let mut found = false;
                for (dof, &p) in period_points.iter().enumerate() {
                    for q in -1..=2 {
                        if (p + offset + (q as f64) * e2 - g).norm() <= tol {
                            ids.push(Identification { node, dof, shift: q });
                            found = true;
                        }
                    }
                }
                if !found {
                    return Err(Error::Geometry(format!("boundary node {node} has no period image")));
                }
            }
            Ok(ids)
        };
        let left = identify([LL, UL], Point::default())?;
        let right = identify([UR, LR], e1)?;

        let top = cell.edge(Top);
        let mut top_bottom = Vec::new();
        for &t in &top[1..top.len() - 1] {
            let p = cell.local_nodes()[t] - e2;
            let b = cell
                .find_local(p)
                .ok_or_else(|| Error::Geometry("TOP node without BOT partner".into()))?;
            top_bottom.push((t, b));
        }

        let gamma = |turns: i32, shift: Point, center: Point| -> Result<Vec<usize>> {
            period_points
                .iter()
                .map(|&p| {
                    let g = (p + shift).rotate_thirds(turns) - center;
                    cell.find_local(g)
                        .ok_or_else(|| Error::Geometry(format!("Γ image ({}, {}) not a node", g.x, g.y)))
                })
                .collect()
        };
        let gamma_plus = gamma(1, -e2, c00)?;
        let gamma_minus = gamma(-1, e2, f.halfspace_center(0, -1))?;
        Ok(CellLayout {
            period_points,
            left,
            right,
            top_bottom,
            gamma_plus,
            gamma_minus,
        })
    }

    pub fn period_len(&self) -> usize {
        self.period_points.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> LatticeFrame {
        LatticeFrame::new(1.0).unwrap()
    }

    fn close(a: Point, b: Point) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn frame_vectors() {
        let f = LatticeFrame::new(0.7).unwrap();
        let l = 3f64.sqrt() * 0.7;
        assert!((f.e1().norm() - l).abs() < 1e-14);
        assert!((f.e2().norm() - l).abs() < 1e-14);
        let cos = f.e1().dot(f.e2()) / (l * l);
        assert!((cos - 0.5).abs() < 1e-14);
        assert_eq!(f.period(), f.e2().y);
        assert!(LatticeFrame::new(0.0).is_err());
    }

    #[test]
    fn segment_count_and_boundary() {
        let cell = build_reference_cell(frame(), 0.5).unwrap();
        assert_eq!(cell.segments(), 2);
        for label in EdgeLabel::ALL {
            assert_eq!(cell.edge(label).len(), 3);
        }
        assert_eq!(cell.boundary_nodes().len(), 12);
        assert_eq!(cell.node_count(), 3 * 2 * 3 + 1);
    }

    #[test]
    fn top_matches_bottom() {
        let cell = build_reference_cell(frame(), 0.25).unwrap();
        let l = frame().period();
        let top: Vec<Point> = cell.edge(EdgeLabel::Top).iter().map(|&i| cell.local_nodes()[i]).collect();
        let bot: Vec<Point> = cell.edge(EdgeLabel::Bot).iter().map(|&i| cell.local_nodes()[i]).collect();
        let mut tx: Vec<f64> = top.iter().map(|p| p.x).collect();
        let mut bx: Vec<f64> = bot.iter().map(|p| p.x).collect();
        tx.sort_by(f64::total_cmp);
        bx.sort_by(f64::total_cmp);
        for (a, b) in tx.iter().zip(&bx) {
            assert!((a - b).abs() < 1e-14);
        }
        for p in &top {
            let q = bot.iter().find(|q| (q.x - p.x).abs() < 1e-14).unwrap();
            assert!((p.y - q.y - l).abs() < 1e-14);
        }
    }

    #[test]
    fn area_sums_to_hexagon() {
        let cell = build_reference_cell(frame(), 0.125).unwrap();
        let mut total = 0.0;
        for t in 0..cell.triangles().len() {
            let a = cell.triangle_area(t);
            assert!(a > 0.0);
            total += a;
        }
        assert!((total - 1.5 * 3f64.sqrt()).abs() < 1e-10);
        assert_eq!(cell.node_count(), 3 * 8 * 9 + 1);
    }

    #[test]
    fn interior_cell_rotation_invariant() {
        let cell = build_interior_cell(frame(), 0.25).unwrap();
        let perm = cell.rotation_permutation(1).unwrap();
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..cell.node_count()).collect::<Vec<_>>());
        for (i, &j) in perm.iter().enumerate() {
            assert!(close(cell.local_nodes()[i].rotate_thirds(1), cell.local_nodes()[j]));
        }
    }

    #[test]
    fn sigma0_span_and_corner() {
        for h in [0.5f64, 0.25, 1.0 / 3.0, 0.125] {
            let f = frame();
            let m = (1.0 / h).round() as usize;
            let pts = sigma0_points(&f, m);
            let l = f.period();
            assert!(close(pts[0], Point::new(0.5, -l / 2.0)));
            assert!(pts.iter().all(|p| p.y >= -l / 2.0 - 1e-14 && p.y < l / 2.0));
            assert!(pts.iter().any(|p| close(*p, Point::new(1.0, 0.0))));
            let cell = build_interior_cell(f, h).unwrap();
            assert!(pts.iter().all(|&p| cell.find_global(p).is_some()));
        }
    }

    #[test]
    fn rotation_examples() {
        let f = frame();
        let l = f.period();
        let sigma_minus = [Point::new(0.5, -l / 2.0), Point::new(1.0, -l), Point::new(0.5, -1.5 * l)];
        let gamma_plus = [Point::new(0.5, l / 2.0), Point::new(1.0, l), Point::new(2.0, l)];
        for (a, b) in sigma_minus.iter().zip(&gamma_plus) {
            assert!(close(a.rotate_thirds(1), *b));
        }
        let sigma_plus = [Point::new(0.5, l / 2.0), Point::new(1.0, l), Point::new(0.5, 1.5 * l)];
        let gamma_minus = [Point::new(0.5, -l / 2.0), Point::new(1.0, -l), Point::new(2.0, -l)];
        for (a, b) in sigma_plus.iter().zip(&gamma_minus) {
            assert!(close(a.rotate_thirds(-1), *b));
        }
        // Γ^+_00 = UL ∪ TOP of the cell at e1.
        let c00 = f.halfspace_center(0, 0);
        assert!(close(c00 + f.vertex(1), gamma_plus[2]));
        assert!(close(c00 + f.vertex(2), gamma_plus[1]));
        assert!(close(c00 + f.vertex(3), gamma_plus[0]));
    }

    #[test]
    fn edge_maps_at_zero_have_unit_phases() {
        let cell = build_reference_cell(frame(), 0.25).unwrap();
        let maps = canonical_edge_maps(&cell, 0.0).unwrap();
        assert_eq!(maps.len(), 9);
        for m in &maps {
            assert!((m.phase - c64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn edge_maps_roundtrip() {
        let cell = build_reference_cell(frame(), 0.25).unwrap();
        let l = frame().period();
        let pi = std::f64::consts::PI;
        for k in [-pi / l * 0.99, -0.3, 0.0, 0.7, pi / l] {
            for map in canonical_edge_maps(&cell, k).unwrap() {
                assert!((map.phase.norm() - 1.0).abs() < 1e-15);
                let v: Vec<c64> = (0..map.permutation.len())
                    .map(|i| c64::new(i as f64 + 0.5, 1.0 - i as f64))
                    .collect();
                let w = map.apply(&v);
                let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                let n1: f64 = w.iter().map(|z| z.norm_sqr()).sum();
                assert!((n0 - n1).abs() < 1e-12 * n0);
                let back = map.apply_inverse(&w);
                for (a, b) in v.iter().zip(&back) {
                    assert!((a - b).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn out_of_zone_wavenumber_rejected() {
        let cell = build_reference_cell(frame(), 0.5).unwrap();
        assert!(canonical_edge_maps(&cell, 10.0).is_err());
    }

    #[test]
    fn translated_blocks_match() {
        let f = frame();
        let cell = build_reference_cell(f, 0.25).unwrap();
        let tol = 1e-10;
        for p in -2..=2 {
            for q in -2..=2 {
                let c = cell.translated(f.halfspace_center(p, q));
                let right = c.translated(f.halfspace_center(p + 1, q));
                for &i in c.edge(EdgeLabel::UR) {
                    let g = c.global_node(i);
                    assert!(right.edge(EdgeLabel::LL).iter().any(|&j| (right.global_node(j) - g).norm() < tol));
                }
                let up = c.translated(f.halfspace_center(p, q + 1));
                for &i in c.edge(EdgeLabel::Top) {
                    let g = c.global_node(i);
                    assert!(up.edge(EdgeLabel::Bot).iter().any(|&j| (up.global_node(j) - g).norm() < tol));
                }
            }
        }
    }

    #[test]
    fn layout_sizes() {
        for m in [1usize, 2, 4, 8] {
            let cell = build_reference_cell(frame(), 1.0 / m as f64).unwrap();
            let lay = CellLayout::new(&cell).unwrap();
            assert_eq!(lay.period_len(), 2 * m);
            // corner of Σ^0 appears twice on the left (V2 and V4), once on the right.
            assert_eq!(lay.left.len(), 2 * m + 1);
            assert_eq!(lay.right.len(), 2 * m + 1);
            assert_eq!(lay.top_bottom.len(), m - 1);
            let mut gp = lay.gamma_plus.clone();
            gp.sort_unstable();
            gp.dedup();
            assert_eq!(gp.len(), 2 * m);
        }
    }

    #[test]
    fn bad_mesh_size() {
        assert!(build_reference_cell(frame(), 0.0).is_err());
        assert!(build_reference_cell(frame(), 2.0).is_err());
        assert!(build_reference_cell(frame(), f64::NAN).is_err());
    }

    #[test]
    fn export_has_header() {
        let cell = build_interior_cell(frame(), 0.5).unwrap();
        let txt = cell.export_text();
        assert!(txt.starts_with(MESH_HEADER));
        assert!(txt.contains("edge TOP 3"));
    }
}
