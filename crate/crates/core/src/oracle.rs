//! Brute-force reference solvers on finite patches of lattice cells glued from the
//! same cell mesh: truncated lattice, exterior annulus, strip, half-space patch.

use std::collections::{BTreeMap, HashMap};

use faer::{c64, Mat, MatRef};

use crate::dense::ZERO;
use crate::error::{Error, Result};
use crate::fem::{assemble, l2_norm, mass_matrix, AssembledSystem, CsrMatrix, Dof, DofMap, ReducedSystem, TriMesh};
use crate::geometry::{bloch_phase, sigma0_points, CellLayout, EdgeLabel, LatticeFrame, MeshedCell, NodeKeyer, Point};
use crate::medium::{eval_sum, MediumSpec, Shape};

const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Default cap on patch unknowns.
pub const DEFAULT_MAX_DOFS: usize = 2_000_000;

/// Hexagonal distance of the lattice cell a·e1 + b·e2 from the origin cell.
pub fn ring_of(a: i64, b: i64) -> i64 {
    a.abs().max(b.abs()).max((a + b).abs())
}

/// Conforming union of translated copies of one cell mesh.
#[derive(Clone, Debug)]
pub struct Patch {
    frame: LatticeFrame,
    reference: MeshedCell,
    cells: Vec<(i64, i64)>,
    mesh: TriMesh,
    cell_nodes: Vec<Vec<usize>>,
    keyer: NodeKeyer,
    lookup: HashMap<(i64, i64), usize>,
}

impl Patch {
    /// Cells given by lattice coordinates (a, b), centered at a·e1 + b·e2.
    pub fn new(frame: LatticeFrame, m: usize, cells: Vec<(i64, i64)>, max_dofs: usize) -> Result<Self> {
        let n_cell = 3 * m * (m + 1) + 1;
        if cells.len().saturating_mul(n_cell) > max_dofs {
            return Err(Error::Config(format!(
                "patch of {} cells with {n_cell} nodes each exceeds the cap of {max_dofs} unknowns",
                cells.len()
            )));
        }
        let reference = MeshedCell::build(frame, m, Point::default())?;
        let keyer = NodeKeyer::new(&frame, m);
        let mut lookup = HashMap::new();
        let mut nodes = Vec::new();
        let mut triangles = Vec::new();
        let mut cell_nodes = Vec::with_capacity(cells.len());
        for &(a, b) in &cells {
            let c = frame.lattice_point(a, b);
            let mut ids = Vec::with_capacity(reference.node_count());
            for &p in reference.local_nodes() {
                let g = c + p;
                let id = *lookup.entry(keyer.key(g)?).or_insert_with(|| {
                    nodes.push(g);
                    nodes.len() - 1
                });
                ids.push(id);
            }
            triangles.extend(reference.triangles().iter().map(|t| [ids[t[0]], ids[t[1]], ids[t[2]]]));
            cell_nodes.push(ids);
        }
        Ok(Patch {
            frame,
            reference,
            cells,
            mesh: TriMesh { nodes, triangles },
            cell_nodes,
            keyer,
            lookup,
        })
    }

    /// All cells with ring index ≤ `rings`, optionally without the origin cell.
    pub fn rings(frame: LatticeFrame, m: usize, rings: usize, with_center: bool, max_dofs: usize) -> Result<Self> {
        if rings < 2 {
            return Err(Error::Config(format!("a lattice patch needs at least 2 rings, got {rings}")));
        }
        let n = rings as i64;
        let mut cells = Vec::new();
        for a in -n..=n {
            for b in -n..=n {
                let r = ring_of(a, b);
                if r <= n && (with_center || r > 0) {
                    cells.push((a, b));
                }
            }
        }
        Patch::new(frame, m, cells, max_dofs)
    }

    pub fn frame(&self) -> &LatticeFrame {
        &self.frame
    }

    /// Cell mesh centered at the origin; local node numbering of every patch cell.
    pub fn reference(&self) -> &MeshedCell {
        &self.reference
    }

    pub fn cells(&self) -> &[(i64, i64)] {
        &self.cells
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn node_count(&self) -> usize {
        self.mesh.nodes.len()
    }

    pub fn cell_index(&self, cell: (i64, i64)) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell)
    }

    pub fn cell_nodes(&self, idx: usize) -> &[usize] {
        &self.cell_nodes[idx]
    }

    pub fn find(&self, p: Point) -> Option<usize> {
        let id = *self.lookup.get(&self.keyer.key(p).ok()?)?;
        ((self.mesh.nodes[id] - p).norm() <= 1e-9 * self.frame.side()).then_some(id)
    }

    /// Values of a patch field on one cell, in local node order.
    pub fn cell_values(&self, field: &[c64], idx: usize) -> Vec<c64> {
        self.cell_nodes[idx].iter().map(|&g| field[g]).collect()
    }

    /// ρ_per in every cell, plus ρ_0 and f in the origin cell.
    pub fn assemble(&self, medium: &MediumSpec, source: &[Shape]) -> Result<AssembledSystem> {
        let f = self.frame;
        let rho = |c: Point| {
            let (a, b) = f.containing_cell(c);
            let local = c - f.lattice_point(a, b);
            if (a, b) == (0, 0) {
                medium.rho_interior(local)
            } else {
                medium.rho_per(local)
            }
        };
        let src = |c: Point| {
            if f.containing_cell(c) == (0, 0) {
                eval_sum(source, c)
            } else {
                ZERO
            }
        };
        assemble(&self.mesh, &rho, Some(&src), medium.rho_b)
    }
}

/// Zero-Dirichlet solve of the patch with the given fixed nodes and values.
fn dirichlet_solve(
    system: &AssembledSystem,
    fixed: &[usize],
    values: MatRef<'_, c64>,
    with_load: bool,
) -> Result<(Mat<c64>, Mat<c64>)> {
    let map = DofMap::dirichlet(system.size(), fixed)?;
    ReducedSystem::new(system, map)?.solve_full(values, with_load)
}

/// Truncated-lattice reference: rings of cells around Ω^i, zero Dirichlet outside.
pub struct TruncatedSolution {
    pub patch: Patch,
    pub field: Vec<c64>,
}

impl TruncatedSolution {
    pub fn interior(&self) -> Vec<c64> {
        let idx = self.patch.cell_index((0, 0)).expect("truncated patch contains the origin cell");
        self.patch.cell_values(&self.field, idx)
    }

    /// Field on the cell a·e1 + b·e2 in local node order.
    pub fn cell(&self, a: i64, b: i64) -> Option<Vec<c64>> {
        self.patch.cell_index((a, b)).map(|i| self.patch.cell_values(&self.field, i))
    }
}

pub fn truncated_solve(
    frame: LatticeFrame,
    m: usize,
    medium: &MediumSpec,
    source: &[Shape],
    rings: usize,
    max_dofs: usize,
) -> Result<TruncatedSolution> {
    let patch = Patch::rings(frame, m, rings, true, max_dofs)?;
    let system = patch.assemble(medium, source)?;
    let outer = patch.mesh.boundary_nodes();
    let zeros = Mat::<c64>::zeros(outer.len(), 1);
    let (u, _) = dirichlet_solve(&system, &outer, zeros.as_ref(), true)?;
    let field = u.col(0).iter().copied().collect();
    Ok(TruncatedSolution { patch, field })
}

/// Dirichlet-to-dual map of the annulus (rings 1..=N, zero on the outer boundary)
/// on the Σ^i nodes, in the arc order Θ^a(Σ^0 period points), a = 0, 1, 2.
pub struct AnnulusDtn {
    pub matrix: Mat<c64>,
    pub n_t: usize,
}

impl AnnulusDtn {
    pub fn apply(&self, phi: &[c64]) -> Vec<c64> {
        let x = &self.matrix * crate::dense::to_col(phi);
        crate::dense::from_col(x.as_ref())
    }

    /// Σ^0-rows of the map restricted to symmetric traces: Σ_a M[arc0 i, arc_a j].
    pub fn symmetric_block(&self) -> Mat<c64> {
        let n = self.n_t;
        Mat::from_fn(n, n, |i, j| (0..3).map(|a| self.matrix[(i, a * n + j)]).sum())
    }
}

pub fn exterior_annulus_dtn(
    frame: LatticeFrame,
    m: usize,
    medium: &MediumSpec,
    rings: usize,
    max_dofs: usize,
) -> Result<AnnulusDtn> {
    let patch = Patch::rings(frame, m, rings, false, max_dofs)?;
    let system = patch.assemble(medium, &[])?;
    let sigma0 = sigma0_points(&frame, m);
    let mut inner = Vec::with_capacity(3 * sigma0.len());
    for turns in 0..3 {
        for &p in &sigma0 {
            inner.push(
                patch
                    .find(p.rotate_thirds(turns))
                    .ok_or_else(|| Error::Geometry("Σ^i node missing from the annulus".into()))?,
            );
        }
    }
    let mut fixed = inner.clone();
    let outer: Vec<usize> = patch.mesh.boundary_nodes().into_iter().filter(|n| !inner.contains(n)).collect();
    fixed.extend(&outer);
    let nb = inner.len();
    let values = Mat::from_fn(fixed.len(), nb, |i, j| if i == j { ONE } else { ZERO });
    let (_, dual) = dirichlet_solve(&system, &fixed, values.as_ref(), false)?;
    Ok(AnnulusDtn {
        matrix: dual.subrows(0, nb).to_owned(),
        n_t: sigma0.len(),
    })
}

/// Propagator oracle: strip of `n_cells` cells C_p0 with the quasi-periodic
/// identification x ~ x + e2 (phase e^{ikL}), data φ on Σ^ℓ_00, zero on the far
/// interface; returns the trace on Σ^ℓ_10 in the period representation.
pub fn strip_oracle_p(
    frame: LatticeFrame,
    m: usize,
    medium: &MediumSpec,
    k: f64,
    phi: MatRef<'_, c64>,
    n_cells: usize,
) -> Result<Mat<c64>> {
    if n_cells < 2 {
        return Err(Error::Config(format!("strip needs at least 2 cells, got {n_cells}")));
    }
    let cells: Vec<(i64, i64)> = (0..n_cells as i64).map(|p| (p + 1, 0)).collect();
    let patch = Patch::new(frame, m, cells, DEFAULT_MAX_DOFS)?;
    let mut system = patch.assemble(medium, &[])?;
    system.load.iter_mut().for_each(|b| *b = ZERO);
    let reference_c00 = patch.reference.translated(frame.e1());
    let layout = CellLayout::new(&reference_c00)?;
    let n_t = layout.period_len();
    if phi.nrows() != n_t {
        return Err(Error::Config(format!("strip data has {} rows, expected {n_t}", phi.nrows())));
    }
    let l = frame.period();
    let n = patch.node_count();
    let mut slots: Vec<Option<(Dof, c64)>> = vec![None; n];
    // fixed 0..n_t: left data; fixed n_t: shared zero on the far interface
    for id in &layout.left {
        slots[patch.cell_nodes[0][id.node]] = Some((Dof::Fixed(id.dof), bloch_phase(k, l, id.shift)));
    }
    let last = n_cells - 1;
    for label in [EdgeLabel::UR, EdgeLabel::LR] {
        for &node in patch.reference.edge(label) {
            slots[patch.cell_nodes[last][node]] = Some((Dof::Fixed(n_t), ONE));
        }
    }
    let e2 = frame.e2();
    let mut slaves = Vec::new();
    for (i, &x) in patch.mesh.nodes.iter().enumerate() {
        if let Some(j) = patch.find(x + e2) {
            if slots[j].is_none() {
                slaves.push((j, i));
            }
        }
    }
    let slave_set: std::collections::HashSet<usize> = slaves.iter().map(|s| s.0).collect();
    if slaves.iter().any(|s| slave_set.contains(&s.1)) {
        return Err(Error::Geometry("strip identification chains are not supported".into()));
    }
    let mut n_free = 0;
    for (i, slot) in slots.iter_mut().enumerate() {
        if slot.is_none() && !slave_set.contains(&i) {
            *slot = Some((Dof::Free(n_free), ONE));
            n_free += 1;
        }
    }
    let ph = bloch_phase(k, l, 1);
    for (s, mst) in slaves {
        let (dof, z) = slots[mst].ok_or_else(|| Error::Geometry("strip master unassigned".into()))?;
        slots[s] = Some((dof, z * ph));
    }
    let map = DofMap::new(slots.into_iter().map(Option::unwrap).collect(), n_free, n_t + 1)?;
    let reduced = ReducedSystem::new(&system, map)?;
    let fixed = Mat::from_fn(n_t + 1, phi.ncols(), |i, j| if i < n_t { phi[(i, j)] } else { ZERO });
    let (u, _) = reduced.solve_full(fixed.as_ref(), false)?;
    let mut out = Mat::<c64>::zeros(n_t, phi.ncols());
    let mut done = vec![false; n_t];
    for id in &layout.left {
        if done[id.dof] {
            continue;
        }
        done[id.dof] = true;
        let g = patch.cell_nodes[1][id.node];
        let back = bloch_phase(k, l, -id.shift);
        for c in 0..phi.ncols() {
            out[(id.dof, c)] = u[(g, c)] * back;
        }
    }
    Ok(out)
}

/// Half-space patch: cells C_pq with 0 ≤ p < n_p, |q| ≤ n_q, Dirichlet data ψ_q on
/// the periods Σ^0 + q·e2 of Σ^H, zero on the rest of the boundary.
pub struct HalfspacePatch {
    pub patch: Patch,
    pub field: Vec<c64>,
}

impl HalfspacePatch {
    /// Field on C_pq in local node order.
    pub fn cell(&self, p: i64, q: i64) -> Option<Vec<c64>> {
        self.patch.cell_index((p + 1, q)).map(|i| self.patch.cell_values(&self.field, i))
    }

    /// Value at a global point, if it is a patch node.
    pub fn at(&self, x: Point) -> Option<c64> {
        self.patch.find(x).map(|i| self.field[i])
    }
}

pub fn halfspace_patch_solve(
    frame: LatticeFrame,
    m: usize,
    medium: &MediumSpec,
    samples: &BTreeMap<i64, Vec<c64>>,
    n_p: usize,
    n_q: usize,
) -> Result<HalfspacePatch> {
    let nq = n_q as i64;
    let cells: Vec<(i64, i64)> = (0..n_p as i64)
        .flat_map(|p| (-nq..=nq).map(move |q| (p + 1, q)))
        .collect();
    let patch = Patch::new(frame, m, cells, DEFAULT_MAX_DOFS)?;
    let mut system = patch.assemble(medium, &[])?;
    system.load.iter_mut().for_each(|b| *b = ZERO);
    let boundary = patch.mesh.boundary_nodes();
    let mut value: HashMap<usize, c64> = boundary.iter().map(|&b| (b, ZERO)).collect();
    let pts = sigma0_points(&frame, m);
    for (&q, psi) in samples {
        if psi.len() != pts.len() {
            return Err(Error::Config(format!("period sample has {} values, expected {}", psi.len(), pts.len())));
        }
        for (j, &p) in pts.iter().enumerate() {
            if let Some(node) = patch.find(p + (q as f64) * frame.e2()) {
                if let Some(v) = value.get_mut(&node) {
                    *v = psi[j];
                }
            }
        }
    }
    let fixed: Vec<usize> = boundary;
    let vals = Mat::from_fn(fixed.len(), 1, |i, _| value[&fixed[i]]);
    let (u, _) = dirichlet_solve(&system, &fixed, vals.as_ref(), false)?;
    Ok(HalfspacePatch {
        field: u.col(0).iter().copied().collect(),
        patch,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldComparison {
    /// ‖a − b‖ / ‖a‖ over all cells, mass-weighted.
    pub relative: f64,
    /// Per cell: ‖a − b‖ / ‖a‖ on that cell.
    pub per_cell: Vec<f64>,
}

/// Compares fields given cell by cell on a common cell mesh.
pub fn compare_fields(a: &[Vec<c64>], b: &[Vec<c64>], cell: &MeshedCell) -> Result<FieldComparison> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len() || x.len() != cell.node_count()) {
        return Err(Error::Config("field layouts differ".into()));
    }
    let mass: CsrMatrix = mass_matrix(&TriMesh::from(cell));
    let (mut num, mut den) = (0.0, 0.0);
    let mut per_cell = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let diff: Vec<c64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        let (dn, an) = (l2_norm(&mass, &diff), l2_norm(&mass, x));
        num += dn * dn;
        den += an * an;
        per_cell.push(if an > 0.0 { dn / an } else if dn > 0.0 { f64::INFINITY } else { 0.0 });
    }
    let relative = if den > 0.0 {
        (num / den).sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(FieldComparison { relative, per_cell })
}
