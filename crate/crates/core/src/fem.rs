//! Complex P1 finite elements for Δu + ρu = f: assembly, constrained solves with
//! Dirichlet data and Bloch-phase DOF identification, variational Neumann traces,
//! and the Robin problem with a dense boundary operator.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::geometry::{bloch_phase, EdgeLabel, MeshedCell, Point};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Plain triangle mesh in global coordinates.
#[derive(Clone, Debug, Default)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

impl From<&MeshedCell> for TriMesh {
    fn from(cell: &MeshedCell) -> Self {
        TriMesh {
            nodes: cell.global_nodes(),
            triangles: cell.triangles().to_vec(),
        }
    }
}

impl TriMesh {
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * (pb - pa).cross(pc - pa)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        (1.0 / 3.0) * (self.nodes[a] + self.nodes[b] + self.nodes[c])
    }

    /// Nodes on edges belonging to exactly one triangle.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut count: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<usize> = count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .flat_map(|((a, b), _)| [a, b])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Row-compressed complex sparse matrix. Duplicate triplets are summed in
/// insertion order, so assembly is deterministic.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<c64>,
}

impl CsrMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, c64)>) -> Self {
        trips.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(trips.len());
        let mut vals: Vec<c64> = Vec::with_capacity(trips.len());
        let mut last = None;
        for (r, c, v) in trips {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.cols[i], self.vals[i]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> c64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(i) => self.vals[self.row_ptr[r] + i],
            Err(_) => ZERO,
        }
    }

    pub fn mul_vec(&self, x: &[c64]) -> Vec<c64> {
        (0..self.nrows)
            .map(|r| {
                let mut s = ZERO;
                for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.vals[i] * x[self.cols[i]];
                }
                s
            })
            .collect()
    }

    pub fn mul_mat(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let mut out = Mat::<c64>::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.nrows {
                let mut s = ZERO;
                for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.vals[i] * x[(self.cols[i], j)];
                }
                out[(r, j)] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, c64>> {
        let trips: Vec<Triplet<usize, usize, c64>> =
            self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| Error::Numerical(format!("sparse matrix construction failed: {e:?}")))
    }
}

/// Sparse LU factorization with a post-solve residual check.
pub struct SparseSolver {
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, c64>,
}

impl SparseSolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Numerical("sparse solver needs a square matrix".into()));
        }
        let lu = matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseSolver { matrix, lu })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: MatRef<'_, c64>) -> Result<Mat<c64>> {
        if self.matrix.nrows == 0 {
            return Ok(Mat::zeros(0, rhs.ncols()));
        }
        let x = self.lu.solve(rhs);
        let r = self.matrix.mul_mat(x.as_ref()) - rhs;
        let res = r.norm_l2();
        let scale = self.matrix.max_abs() * x.norm_l2() + rhs.norm_l2();
        if !(res <= 1e-10 * scale) || !x.norm_l2().is_finite() {
            return Err(Error::Numerical(format!(
                "linear solve residual {res:.3e} exceeds tolerance (scale {scale:.3e})"
            )));
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub load: Vec<c64>,
}

impl AssembledSystem {
    pub fn size(&self) -> usize {
        self.load.len()
    }

    /// A·u − b, the variational residual.
    pub fn residual(&self, u: &[c64]) -> Vec<c64> {
        let mut r = self.matrix.mul_vec(u);
        for (ri, bi) in r.iter_mut().zip(&self.load) {
            *ri -= bi;
        }
        r
    }
}

/// Galerkin P1 system with ρ and f evaluated at triangle centroids; the mass
/// integrals of the hat functions are exact.
pub fn assemble(
    mesh: &TriMesh,
    rho: &dyn Fn(Point) -> c64,
    source: Option<&dyn Fn(Point) -> c64>,
    rho_b: f64,
) -> Result<AssembledSystem> {
    let n = mesh.nodes.len();
    let mut trips = Vec::with_capacity(9 * mesh.triangles.len());
    let mut load = vec![ZERO; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        if !(area > 0.0) {
            return Err(Error::Geometry(format!("triangle {t} has non-positive area")));
        }
        let c = mesh.centroid(t);
        let r = rho(c);
        if !(r.im >= rho_b) || !r.re.is_finite() {
            return Err(Error::Validation(format!(
                "coefficient rho = {r} at ({:.6}, {:.6}) violates the dissipation floor Im rho >= {rho_b}",
                c.x, c.y
            )));
        }
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        // ∇φ_a = rot90(p_{a+2} − p_{a+1}) / (2|T|)
        let grads: [Point; 3] = std::array::from_fn(|a| {
            let e = p[(a + 2) % 3] - p[(a + 1) % 3];
            (0.5 / area) * Point::new(-e.y, e.x)
        });
        for a in 0..3 {
            for b in 0..3 {
                let stiff = area * grads[a].dot(grads[b]);
                let mass = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                trips.push((tri[a], tri[b], c64::new(stiff, 0.0) - r * mass));
            }
        }
        if let Some(f) = source {
            let fv = f(c);
            for &node in tri {
                load[node] -= fv * (area / 3.0);
            }
        }
    }
    Ok(AssembledSystem {
        matrix: CsrMatrix::from_triplets(n, n, trips),
        load,
    })
}

/// Consistent P1 mass matrix.
pub fn mass_matrix(mesh: &TriMesh) -> CsrMatrix {
    let n = mesh.nodes.len();
    let mut trips = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        for a in 0..3 {
            for b in 0..3 {
                let m = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                trips.push((tri[a], tri[b], c64::new(m, 0.0)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, trips)
}

/// Discrete L² inner product (v, u) = v^H M u.
pub fn l2_inner(mass: &CsrMatrix, v: &[c64], u: &[c64]) -> c64 {
    let mu = mass.mul_vec(u);
    v.iter().zip(&mu).map(|(a, b)| a.conj() * b).sum()
}

pub fn l2_norm(mass: &CsrMatrix, u: &[c64]) -> f64 {
    l2_inner(mass, u, u).re.max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dof {
    Free(usize),
    Fixed(usize),
}

/// Node → reduced unknown, with value(node) = phase · value(dof).
#[derive(Clone, Debug)]
pub struct DofMap {
    slots: Vec<(Dof, c64)>,
    n_free: usize,
    n_fixed: usize,
}

impl DofMap {
    pub fn new(slots: Vec<(Dof, c64)>, n_free: usize, n_fixed: usize) -> Result<Self> {
        let mut seen_free = vec![false; n_free];
        let mut seen_fixed = vec![false; n_fixed];
        for (dof, _) in &slots {
            match *dof {
                Dof::Free(i) if i < n_free => seen_free[i] = true,
                Dof::Fixed(i) if i < n_fixed => seen_fixed[i] = true,
                _ => return Err(Error::Config(format!("DOF index {dof:?} out of range"))),
            }
        }
        if seen_free.iter().chain(&seen_fixed).any(|s| !s) {
            return Err(Error::Config("DOF map leaves unknowns without nodes".into()));
        }
        Ok(DofMap {
            slots,
            n_free,
            n_fixed,
        })
    }

    /// `fixed[i]` carries fixed DOF i; all other nodes are free in increasing order.
    pub fn dirichlet(n_nodes: usize, fixed: &[usize]) -> Result<Self> {
        let mut slots = vec![None; n_nodes];
        for (i, &node) in fixed.iter().enumerate() {
            if node >= n_nodes || slots[node].is_some() {
                return Err(Error::Config(format!("invalid or repeated fixed node {node}")));
            }
            slots[node] = Some((Dof::Fixed(i), ONE));
        }
        let mut n_free = 0;
        let slots = slots
            .into_iter()
            .map(|s| {
                s.unwrap_or_else(|| {
                    n_free += 1;
                    (Dof::Free(n_free - 1), ONE)
                })
            })
            .collect();
        DofMap::new(slots, n_free, fixed.len())
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_fixed(&self) -> usize {
        self.n_fixed
    }

    pub fn slots(&self) -> &[(Dof, c64)] {
        &self.slots
    }

    /// Nodal values from free and fixed unknowns (one column per right-hand side).
    pub fn expand(&self, free: MatRef<'_, c64>, fixed: MatRef<'_, c64>) -> Mat<c64> {
        let ncols = free.ncols().max(fixed.ncols());
        Mat::from_fn(self.slots.len(), ncols, |i, j| {
            let (dof, z) = self.slots[i];
            z * match dof {
                Dof::Free(d) => free[(d, j)],
                Dof::Fixed(d) => fixed[(d, j)],
            }
        })
    }
}

/// Z^H A Z split into free/fixed blocks, with A_ff factorized.
pub struct ReducedSystem {
    map: DofMap,
    a_fb: CsrMatrix,
    a_bf: CsrMatrix,
    a_bb: CsrMatrix,
    load_f: Vec<c64>,
    load_b: Vec<c64>,
    solver: SparseSolver,
}

impl ReducedSystem {
    pub fn new(system: &AssembledSystem, map: DofMap) -> Result<Self> {
        if map.slots.len() != system.size() {
            return Err(Error::Config(format!(
                "DOF map covers {} nodes, system has {}",
                map.slots.len(),
                system.size()
            )));
        }
        let (nf, nb) = (map.n_free, map.n_fixed);
        let (mut ff, mut fb, mut bf, mut bb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, c, v) in system.matrix.iter() {
            let (dr, zr) = map.slots[r];
            let (dc, zc) = map.slots[c];
            let val = zr.conj() * v * zc;
            match (dr, dc) {
                (Dof::Free(i), Dof::Free(j)) => ff.push((i, j, val)),
                (Dof::Free(i), Dof::Fixed(j)) => fb.push((i, j, val)),
                (Dof::Fixed(i), Dof::Free(j)) => bf.push((i, j, val)),
                (Dof::Fixed(i), Dof::Fixed(j)) => bb.push((i, j, val)),
            }
        }
        let mut load_f = vec![ZERO; nf];
        let mut load_b = vec![ZERO; nb];
        for (i, &(d, z)) in map.slots.iter().enumerate() {
            match d {
                Dof::Free(j) => load_f[j] += z.conj() * system.load[i],
                Dof::Fixed(j) => load_b[j] += z.conj() * system.load[i],
            }
        }
        Ok(ReducedSystem {
            solver: SparseSolver::new(CsrMatrix::from_triplets(nf, nf, ff))?,
            a_fb: CsrMatrix::from_triplets(nf, nb, fb),
            a_bf: CsrMatrix::from_triplets(nb, nf, bf),
            a_bb: CsrMatrix::from_triplets(nb, nb, bb),
            map,
            load_f,
            load_b,
        })
    }

    pub fn map(&self) -> &DofMap {
        &self.map
    }

    /// Free unknowns for given fixed values; the load enters every column when `with_load`.
    pub fn solve(&self, fixed: MatRef<'_, c64>, with_load: bool) -> Result<Mat<c64>> {
        if fixed.nrows() != self.map.n_fixed {
            return Err(Error::Config(format!(
                "expected {} fixed values, got {}",
                self.map.n_fixed,
                fixed.nrows()
            )));
        }
        let mut rhs = -self.a_fb.mul_mat(fixed);
        if with_load {
            for j in 0..rhs.ncols() {
                for i in 0..rhs.nrows() {
                    rhs[(i, j)] += self.load_f[i];
                }
            }
        }
        self.solver.solve(rhs.as_ref())
    }

    /// Reduced residual on the fixed unknowns: the dual (Neumann) data there.
    pub fn dual(&self, free: MatRef<'_, c64>, fixed: MatRef<'_, c64>, with_load: bool) -> Mat<c64> {
        let mut out = self.a_bf.mul_mat(free) + self.a_bb.mul_mat(fixed);
        if with_load {
            for j in 0..out.ncols() {
                for i in 0..out.nrows() {
                    out[(i, j)] -= self.load_b[i];
                }
            }
        }
        out
    }

    /// Schur complement A_bb − A_bf A_ff⁻¹ A_fb: the discrete Dirichlet-to-dual map.
    pub fn schur(&self) -> Result<Mat<c64>> {
        let eye = Mat::<c64>::identity(self.map.n_fixed, self.map.n_fixed);
        let free = self.solve(eye.as_ref(), false)?;
        Ok(self.dual(free.as_ref(), eye.as_ref(), false))
    }

    /// Full nodal solution and fixed-DOF dual for given fixed values.
    pub fn solve_full(&self, fixed: MatRef<'_, c64>, with_load: bool) -> Result<(Mat<c64>, Mat<c64>)> {
        let free = self.solve(fixed, with_load)?;
        let dual = self.dual(free.as_ref(), fixed, with_load);
        Ok((self.map.expand(free.as_ref(), fixed), dual))
    }
}

/// Dirichlet solve on a hexagon. With `bloch = Some(k)`, TOP is identified with
/// BOT by the phase e^{ikL} and only UR, UL, LL, LR need data.
pub fn solve_dirichlet(
    cell: &MeshedCell,
    system: &AssembledSystem,
    data: &BTreeMap<EdgeLabel, Vec<c64>>,
    bloch: Option<f64>,
) -> Result<Vec<c64>> {
    let n = cell.node_count();
    let mut value: Vec<Option<c64>> = vec![None; n];
    let needed: Vec<EdgeLabel> = match bloch {
        Some(_) => vec![EdgeLabel::UR, EdgeLabel::UL, EdgeLabel::LL, EdgeLabel::LR],
        None => EdgeLabel::ALL.to_vec(),
    };
    for label in needed {
        let trace = data
            .get(&label)
            .ok_or_else(|| Error::Config(format!("missing Dirichlet data on edge {}", label.name())))?;
        let nodes = cell.edge(label);
        if trace.len() != nodes.len() {
            return Err(Error::Config(format!(
                "edge {} needs {} values, got {}",
                label.name(),
                nodes.len(),
                trace.len()
            )));
        }
        for (&node, &v) in nodes.iter().zip(trace) {
            match value[node] {
                Some(old) if (old - v).norm() > 1e-12 * (1.0 + v.norm()) => {
                    return Err(Error::Config(format!(
                        "inconsistent Dirichlet data at the vertex shared by edge {}",
                        label.name()
                    )))
                }
                _ => value[node] = Some(v),
            }
        }
    }

    let mut slots: Vec<Option<(Dof, c64)>> = vec![None; n];
    let mut fixed_vals = Vec::new();
    for i in 0..n {
        if let Some(v) = value[i] {
            slots[i] = Some((Dof::Fixed(fixed_vals.len()), ONE));
            fixed_vals.push(v);
        }
    }
    let mut n_free = 0;
    let mut slaves = Vec::new();
    if let Some(k) = bloch {
        let phase = bloch_phase(k, cell.frame().period(), 1);
        let top = cell.edge(EdgeLabel::Top);
        let bot = cell.edge(EdgeLabel::Bot);
        for (&t, &b) in top[1..top.len() - 1].iter().zip(bot[1..bot.len() - 1].iter().rev()) {
            slaves.push((t, b, phase));
        }
    }
    for i in 0..n {
        if slots[i].is_none() && !slaves.iter().any(|s| s.0 == i) {
            slots[i] = Some((Dof::Free(n_free), ONE));
            n_free += 1;
        }
    }
    for (t, b, phase) in slaves {
        let (dof, z) = slots[b].ok_or_else(|| Error::Geometry("BOT master is unassigned".into()))?;
        slots[t] = Some((dof, z * phase));
    }
    let map = DofMap::new(slots.into_iter().map(Option::unwrap).collect(), n_free, fixed_vals.len())?;
    let reduced = ReducedSystem::new(system, map)?;
    let fixed = Mat::from_fn(fixed_vals.len(), 1, |i, _| fixed_vals[i]);
    let (u, _) = reduced.solve_full(fixed.as_ref(), true)?;
    Ok(u.col(0).iter().copied().collect())
}

/// Variational Neumann trace ⟨∂_ν u, φ_j⟩ = (A u − b)_j on the given boundary nodes.
pub fn neumann_trace(
    system: &AssembledSystem,
    field: &[c64],
    nodes: &[usize],
    boundary: &[usize],
) -> Result<Vec<c64>> {
    if let Some(&bad) = nodes.iter().find(|n| boundary.binary_search(n).is_err()) {
        return Err(Error::Config(format!("node {bad} is not a boundary node")));
    }
    let r = system.residual(field);
    Ok(nodes.iter().map(|&i| r[i]).collect())
}

/// Neumann trace on a union of hexagon edges (shared vertices counted once, sorted).
pub fn neumann_trace_edges(
    cell: &MeshedCell,
    system: &AssembledSystem,
    field: &[c64],
    edges: &[EdgeLabel],
) -> Result<(Vec<usize>, Vec<c64>)> {
    let mut nodes: Vec<usize> = edges.iter().flat_map(|&e| cell.edge(e).to_vec()).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let vals = neumann_trace(system, field, &nodes, &cell.boundary_nodes())?;
    Ok((nodes, vals))
}

/// Solves a(u, v) + ⟨Λu, v⟩ = ℓ(v) with Λ a dense operator on the listed boundary nodes.
pub fn solve_robin(system: &AssembledSystem, boundary: &[usize], lambda: MatRef<'_, c64>) -> Result<Vec<c64>> {
    let nb = boundary.len();
    if lambda.nrows() != nb || lambda.ncols() != nb {
        return Err(Error::Config(format!(
            "boundary operator is {}x{}, expected {nb}x{nb}",
            lambda.nrows(),
            lambda.ncols()
        )));
    }
    let n = system.size();
    let mut trips: Vec<(usize, usize, c64)> = system.matrix.iter().collect();
    for i in 0..nb {
        for j in 0..nb {
            trips.push((boundary[i], boundary[j], lambda[(i, j)]));
        }
    }
    let solver = SparseSolver::new(CsrMatrix::from_triplets(n, n, trips))?;
    let rhs = Mat::from_fn(n, 1, |i, _| system.load[i]);
    let u = solver.solve(rhs.as_ref())?;
    Ok(u.col(0).iter().copied().collect())
}
