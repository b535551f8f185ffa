//! Per-wavenumber half-space operators: cell problems on C_00, local DtN and
//! DtD maps, the propagation operator P_k from the stationary Riccati equation,
//! the half-space DtN Λ̂_k, and cell-by-cell field reconstruction.

use std::collections::BTreeMap;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::dense::{cond2, matpow, norm2, solve, spectral_radius, ZERO};
use crate::error::{Error, Result};
use crate::fem::{assemble, AssembledSystem, Dof, DofMap, ReducedSystem, TriMesh};
use crate::floquet::{fb_forward, KGrid};
use crate::geometry::{bloch_phase, CellLayout, MeshedCell, Point};

const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// k-independent data for the reference cell C_00.
pub struct HalfspaceContext {
    cell: MeshedCell,
    layout: CellLayout,
    system: AssembledSystem,
}

/// Solution operators of the two cell problems for one k.
#[derive(Clone, Debug)]
pub struct CellProblems {
    pub k: f64,
    /// Nodal field of C_00 for Dirichlet data on Σ^ℓ_00 (columns: period DOFs).
    pub e_l: Mat<c64>,
    /// Same for data on the right period Σ^ℓ_10.
    pub e_r: Mat<c64>,
    /// Dirichlet-to-dual map on [left | right] period DOFs.
    pub schur: Mat<c64>,
}

#[derive(Clone, Debug)]
pub struct CellOperatorSet {
    pub k: f64,
    pub t_ll: Mat<c64>,
    pub t_lr: Mat<c64>,
    pub t_rl: Mat<c64>,
    pub t_rr: Mat<c64>,
    pub d_lp: Mat<c64>,
    pub d_lm: Mat<c64>,
    pub d_rp: Mat<c64>,
    pub d_rm: Mat<c64>,
    pub p: Mat<c64>,
    pub lambda_hat: Mat<c64>,
    pub e_l: Mat<c64>,
    pub e_r: Mat<c64>,
    /// Riccati residual relative to max ‖T‖₂.
    pub riccati_residual: f64,
    pub spectral_radius: f64,
}

impl HalfspaceContext {
    /// `rho_per` is evaluated in coordinates relative to the cell center.
    pub fn new(cell: MeshedCell, rho_per: &(dyn Fn(Point) -> c64 + Sync), rho_b: f64) -> Result<Self> {
        let layout = CellLayout::new(&cell)?;
        let center = cell.center();
        let system = assemble(&TriMesh::from(&cell), &|p| rho_per(p - center), None, rho_b)?;
        Ok(HalfspaceContext { cell, layout, system })
    }

    pub fn cell(&self) -> &MeshedCell {
        &self.cell
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.system
    }

    pub fn n_t(&self) -> usize {
        self.layout.period_len()
    }

    /// Reduced unknowns of C_00 for wavenumber k: [free | left period | right period],
    /// TOP interior nodes slaved to BOT with e^{ikL}.
    pub fn dof_map(&self, k: f64) -> Result<DofMap> {
        let n = self.cell.node_count();
        let n_t = self.n_t();
        let l = self.cell.frame().period();
        let mut slots: Vec<Option<(Dof, c64)>> = vec![None; n];
        for id in &self.layout.left {
            slots[id.node] = Some((Dof::Fixed(id.dof), bloch_phase(k, l, id.shift)));
        }
        for id in &self.layout.right {
            slots[id.node] = Some((Dof::Fixed(n_t + id.dof), bloch_phase(k, l, id.shift)));
        }
        let slaves: Vec<usize> = self.layout.top_bottom.iter().map(|&(t, _)| t).collect();
        let mut n_free = 0;
        for (i, slot) in slots.iter_mut().enumerate() {
            if slot.is_none() && !slaves.contains(&i) {
                *slot = Some((Dof::Free(n_free), ONE));
                n_free += 1;
            }
        }
        let ph = bloch_phase(k, l, 1);
        for &(t, b) in &self.layout.top_bottom {
            let (dof, z) = slots[b].ok_or_else(|| Error::Geometry("BOT master unassigned".into()))?;
            slots[t] = Some((dof, z * ph));
        }
        DofMap::new(slots.into_iter().map(Option::unwrap).collect(), n_free, 2 * n_t)
    }

    pub fn solve_cell_problems(&self, k: f64) -> Result<CellProblems> {
        let n_t = self.n_t();
        let reduced = ReducedSystem::new(&self.system, self.dof_map(k)?)?;
        let eye = Mat::<c64>::identity(2 * n_t, 2 * n_t);
        let (fields, schur) = reduced.solve_full(eye.as_ref(), false)?;
        Ok(CellProblems {
            k,
            e_l: fields.subcols(0, n_t).to_owned(),
            e_r: fields.subcols(n_t, n_t).to_owned(),
            schur,
        })
    }

    pub fn operator_set(&self, k: f64) -> Result<CellOperatorSet> {
        let cp = self.solve_cell_problems(k)?;
        let [t_ll, t_lr, t_rl, t_rr] = local_dtn(&cp);
        let [d_lp, d_lm, d_rp, d_rm] = local_dtd(&cp, &self.layout);
        let ric = solve_riccati(t_ll.as_ref(), t_lr.as_ref(), t_rl.as_ref(), t_rr.as_ref())
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("k = {k:.6}: {msg}")),
                other => other,
            })?;
        let lambda_hat = halfspace_dtn_k(t_ll.as_ref(), t_rl.as_ref(), ric.p.as_ref());
        Ok(CellOperatorSet {
            k,
            t_ll,
            t_lr,
            t_rl,
            t_rr,
            d_lp,
            d_lm,
            d_rp,
            d_rm,
            spectral_radius: ric.spectral_radius,
            riccati_residual: ric.residual,
            p: ric.p,
            lambda_hat,
            e_l: cp.e_l,
            e_r: cp.e_r,
        })
    }

    /// Operator sets for every grid node, computed in parallel, returned in grid order.
    pub fn operator_sets(&self, grid: &KGrid) -> Result<Vec<CellOperatorSet>> {
        grid.nodes().par_iter().map(|&k| self.operator_set(k)).collect()
    }
}

/// (T^{ℓℓ}, T^{ℓr}, T^{rℓ}, T^{rr}); the first superscript is the data side, the
/// second the side where the dual trace is taken.
pub fn local_dtn(cp: &CellProblems) -> [Mat<c64>; 4] {
    let n = cp.e_l.ncols();
    let s = cp.schur.as_ref();
    [
        s.submatrix(0, 0, n, n).to_owned(),
        s.submatrix(n, 0, n, n).to_owned(),
        s.submatrix(0, n, n, n).to_owned(),
        s.submatrix(n, n, n, n).to_owned(),
    ]
}

/// (D^{ℓ+}, D^{ℓ−}, D^{r+}, D^{r−}): Dirichlet traces on Γ^+_00 and Γ^-_00 in the
/// period representations given by the layout.
pub fn local_dtd(cp: &CellProblems, layout: &CellLayout) -> [Mat<c64>; 4] {
    let rows = |e: &Mat<c64>, nodes: &[usize]| Mat::from_fn(nodes.len(), e.ncols(), |i, j| e[(nodes[i], j)]);
    [
        rows(&cp.e_l, &layout.gamma_plus),
        rows(&cp.e_l, &layout.gamma_minus),
        rows(&cp.e_r, &layout.gamma_plus),
        rows(&cp.e_r, &layout.gamma_minus),
    ]
}

#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub p: Mat<c64>,
    /// All 2n eigenvalues of the quadratic pencil (infinite ones as ∞).
    pub eigenvalues: Vec<c64>,
    pub residual: f64,
    pub condition: f64,
    pub spectral_radius: f64,
}

/// ‖T^{rℓ}P² + (T^{ℓℓ}+T^{rr})P + T^{ℓr}‖₂ / max ‖T‖₂.
pub fn riccati_residual(
    t_ll: MatRef<'_, c64>,
    t_lr: MatRef<'_, c64>,
    t_rl: MatRef<'_, c64>,
    t_rr: MatRef<'_, c64>,
    p: MatRef<'_, c64>,
) -> f64 {
    let r = t_rl * p * p + (t_ll + t_rr) * p + t_lr;
    let scale = [t_ll, t_lr, t_rl, t_rr].iter().map(|t| norm2(*t)).fold(0.0, f64::max);
    norm2(r.as_ref()) / scale
}

const SPLIT_MARGIN: f64 = 1e-8;

/// Stable solution of T^{rℓ}P² + (T^{ℓℓ}+T^{rr})P + T^{ℓr} = 0 from the quadratic
/// eigenproblem, linearized as a 2n generalized eigenproblem and solved by QZ.
pub fn solve_riccati(
    t_ll: MatRef<'_, c64>,
    t_lr: MatRef<'_, c64>,
    t_rl: MatRef<'_, c64>,
    t_rr: MatRef<'_, c64>,
) -> Result<RiccatiSolution> {
    let n = t_ll.nrows();
    for t in [t_ll, t_lr, t_rl, t_rr] {
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::Config("Riccati coefficients must be square and of equal size".into()));
        }
    }
    let a1 = t_ll + t_rr;
    // [[0, I], [−A0, −A1]] z = λ [[I, 0], [0, A2]] z,  z = (w, λw)
    let a = Mat::<c64>::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => ZERO,
        (true, false) => if j - n == i { ONE } else { ZERO },
        (false, true) => -t_lr[(i - n, j)],
        (false, false) => -a1[(i - n, j - n)],
    });
    let b = Mat::<c64>::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => if i == j { ONE } else { ZERO },
        (false, false) => t_rl[(i - n, j - n)],
        _ => ZERO,
    });
    let gev = a
        .generalized_eigen(&b)
        .map_err(|e| Error::Numerical(format!("QZ iteration failed: {e:?}")))?;
    let (sa, sb) = (gev.S_a(), gev.S_b());
    let mut eigenvalues = Vec::with_capacity(2 * n);
    let mut selected = Vec::new();
    for i in 0..2 * n {
        let (x, y) = (sa[i], sb[i]);
        let lam = if y.norm() <= 1e-14 * x.norm() {
            c64::new(f64::INFINITY, 0.0)
        } else {
            x / y
        };
        if x.norm() < (1.0 - SPLIT_MARGIN) * y.norm() {
            selected.push(i);
        }
        eigenvalues.push(lam);
    }
    if selected.len() != n {
        let mut moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        return Err(Error::Numerical(format!(
            "spectral splitting failed: {} eigenvalues inside the unit disc, expected {n}; |λ| = {moduli:?}",
            selected.len()
        )));
    }
    let u = gev.U();
    let mut w = Mat::<c64>::from_fn(n, n, |i, j| u[(i, selected[j])]);
    for j in 0..n {
        let s = (0..n).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if s > 0.0 {
            for i in 0..n {
                w[(i, j)] /= s;
            }
        }
    }
    let condition = cond2(w.as_ref());
    let lam: Vec<c64> = selected.iter().map(|&i| eigenvalues[i]).collect();
    let from_basis = if condition <= 1e12 {
        let wl = Mat::<c64>::from_fn(n, n, |i, j| w[(i, j)] * lam[j]);
        // P W = W Λ  ⇔  Wᵀ Pᵀ = (W Λ)ᵀ
        solve(w.transpose(), wl.transpose()).ok().map(|pt| pt.transpose().to_owned())
    } else {
        None
    };
    let p = match from_basis {
        Some(p) if riccati_residual(t_ll, t_lr, t_rl, t_rr, p.as_ref()) <= 1e-8 => p,
        // Clustered evanescent eigenvalues make the eigenvector basis degenerate while the
        // stable invariant subspace itself stays well defined; cyclic reduction recovers it.
        _ => cyclic_reduction(t_lr, a1.as_ref(), t_rl).map_err(|e| {
            Error::Numerical(format!(
                "stable eigenvector basis is ill-conditioned (cond {condition:.3e}) and cyclic reduction failed ({e}); perturb the mesh size or wavenumber"
            ))
        })?,
    };
    let residual = riccati_residual(t_ll, t_lr, t_rl, t_rr, p.as_ref());
    if !(residual <= 1e-8) {
        return Err(Error::Numerical(format!("Riccati residual {residual:.3e} exceeds 1e-8")));
    }
    let spectral_radius = lam.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(RiccatiSolution {
        p,
        eigenvalues,
        residual,
        condition,
        spectral_radius,
    })
}

/// Minimal solvent of A0 + A1 X + A2 X² = 0 by cyclic reduction; requires the
/// eigenvalues of the quadratic pencil to split across the unit circle.
pub fn cyclic_reduction(a0: MatRef<'_, c64>, a1: MatRef<'_, c64>, a2: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let (mut b0, mut b1, mut b2) = (a0.to_owned(), a1.to_owned(), a2.to_owned());
    let mut hat = a1.to_owned();
    let scale = norm2(a1).max(norm2(a0)).max(norm2(a2));
    for _ in 0..64 {
        let lu = faer::linalg::solvers::PartialPivLu::new(b1.as_ref());
        let k0 = faer::linalg::solvers::Solve::solve(&lu, &b0);
        let k2 = faer::linalg::solvers::Solve::solve(&lu, &b2);
        if k0.norm_l2().is_nan() || k2.norm_l2().is_nan() {
            return Err(Error::Numerical("singular middle coefficient in cyclic reduction".into()));
        }
        let step = &b2 * &k0;
        let n0 = -(&b0 * &k0);
        let n2 = -(&b2 * &k2);
        b1 = &b1 - &b0 * &k2 - &step;
        hat = &hat - &step;
        b0 = n0;
        b2 = n2;
        if step.norm_l2() <= 1e-17 * scale {
            break;
        }
    }
    let x = solve(hat.as_ref(), (-a0.to_owned()).as_ref())?;
    Ok(x)
}

/// Damped fixed point P ← −(T^{ℓℓ}+T^{rr})⁻¹(T^{ℓr} + T^{rℓ}P²); only used as an
/// independent cross-check of the eigenvalue construction.
pub fn riccati_fixed_point(
    t_ll: MatRef<'_, c64>,
    t_lr: MatRef<'_, c64>,
    t_rl: MatRef<'_, c64>,
    t_rr: MatRef<'_, c64>,
    damping: f64,
    max_iter: usize,
) -> Result<Mat<c64>> {
    let n = t_ll.nrows();
    let a1 = t_ll + t_rr;
    let mut p = Mat::<c64>::zeros(n, n);
    for _ in 0..max_iter {
        let rhs = -(t_lr + t_rl * &p * &p);
        let next = solve(a1.as_ref(), rhs.as_ref())?;
        let step = (&next - &p).norm_l2();
        p = &p + (&next - &p) * faer::Scale(c64::new(damping, 0.0));
        if step <= 1e-14 * (1.0 + p.norm_l2()) {
            return Ok(p);
        }
    }
    if riccati_residual(t_ll, t_lr, t_rl, t_rr, p.as_ref()) <= 1e-8 {
        Ok(p)
    } else {
        Err(Error::Numerical("Riccati fixed-point iteration did not converge".into()))
    }
}

/// Λ̂_k = T^{ℓℓ} + T^{rℓ} P_k.
pub fn halfspace_dtn_k(t_ll: MatRef<'_, c64>, t_rl: MatRef<'_, c64>, p: MatRef<'_, c64>) -> Mat<c64> {
    t_ll + t_rl * p
}

/// Field on C_pq (reference-mesh nodes) for period data φ: e^{iqkL}[e^ℓ P^p φ + e^r P^{p+1} φ].
pub fn reconstruct_cell(set: &CellOperatorSet, phi: MatRef<'_, c64>, p: i64, q: i64, period: f64) -> Result<Mat<c64>> {
    if p < 0 {
        return Err(Error::Config(format!("cell index p = {p} lies outside the half-space")));
    }
    let pp = matpow(set.p.as_ref(), p as usize) * phi;
    let pp1 = &set.p * &pp;
    let u = &set.e_l * &pp + &set.e_r * &pp1;
    Ok(u * faer::Scale(bloch_phase(set.k, period, q)))
}

/// Half-space field on the requested cells for period samples φ_q on Σ^0 + q·e2.
pub fn halfspace_solve(
    sets: &[CellOperatorSet],
    grid: &KGrid,
    samples: &BTreeMap<i64, Vec<c64>>,
    cells: &[(i64, i64)],
) -> Result<Vec<Vec<c64>>> {
    check_sets(sets, grid)?;
    let hat = fb_forward(samples, grid)?;
    let s = grid.scale();
    let n_cell = sets.first().map_or(0, |st| st.e_l.nrows());
    let mut out = vec![vec![ZERO; n_cell]; cells.len()];
    for (i, set) in sets.iter().enumerate() {
        let phi = crate::dense::to_col(&hat.values[i]);
        for (c, &(p, q)) in cells.iter().enumerate() {
            let u = reconstruct_cell(set, phi.as_ref(), p, q, grid.period())?;
            let wgt = c64::new(s * grid.weights()[i], 0.0);
            for (o, j) in out[c].iter_mut().zip(0..n_cell) {
                *o += wgt * u[(j, 0)];
            }
        }
    }
    Ok(out)
}

/// Dual trace of the half-space solution on the period Σ^0 + q·e2.
pub fn halfspace_dtn_apply(
    sets: &[CellOperatorSet],
    grid: &KGrid,
    samples: &BTreeMap<i64, Vec<c64>>,
    q: i64,
) -> Result<Vec<c64>> {
    check_sets(sets, grid)?;
    let hat = fb_forward(samples, grid)?;
    let s = grid.scale();
    let n_t = hat.trace_len();
    let mut out = vec![ZERO; n_t];
    for (i, set) in sets.iter().enumerate() {
        let g = &set.lambda_hat * crate::dense::to_col(&hat.values[i]);
        let wgt = grid.phase(i, q) * (s * grid.weights()[i]);
        for (j, o) in out.iter_mut().enumerate() {
            *o += wgt * g[(j, 0)];
        }
    }
    Ok(out)
}

fn check_sets(sets: &[CellOperatorSet], grid: &KGrid) -> Result<()> {
    if sets.len() != grid.len() || sets.iter().zip(grid.nodes()).any(|(s, k)| (s.k - k).abs() > 1e-14) {
        return Err(Error::Config("operator sets do not match the k-grid".into()));
    }
    Ok(())
}

/// ‖P^j‖₂^{1/j} for j = 1..=count.
pub fn power_norm_sequence(p: MatRef<'_, c64>, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|j| norm2(matpow(p, j).as_ref()).powf(1.0 / j as f64))
        .collect()
}

pub fn max_spectral_radius(sets: &[CellOperatorSet]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for s in sets {
        m = m.max(spectral_radius(s.p.as_ref())?);
    }
    Ok(m)
}
