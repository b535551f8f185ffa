//! Half-space DtD kernel, the constrained Nyström system for the FB transform of
//! the exterior trace on Σ^H, symmetry extension/restriction between Σ^0 and Σ^i,
//! and assembly of the symmetric exterior DtN map.

use faer::linalg::solvers::{Qr, SolveLstsq};
use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::dense::{cond2, solve, ZERO};
use crate::error::{Error, Result};
use crate::floquet::KGrid;
use crate::geometry::{sigma0_points, MeshedCell};
use crate::halfspace::{CellOperatorSet, HalfspaceContext};

const ONE: c64 = c64 { re: 1.0, im: 0.0 };
const MAX_CONDITION: f64 = 1e12;

fn scaled(m: MatRef<'_, c64>, s: c64) -> Mat<c64> {
    m * faer::Scale(s)
}

/// (L/2π)[e^{iξL}(D^{ℓ+}+D^{r+}P)(I−Pe^{iξL})⁻¹ + I + e^{−i(k+ξ)L}(D^{ℓ−}+D^{r−}P)(I−Pe^{−i(k+ξ)L})⁻¹]
/// in the Σ^0 period representation. Returns the kernel block and the larger of
/// the two resolvent condition numbers.
pub fn kernel_kh(set: &CellOperatorSet, xi: f64, period: f64) -> Result<(Mat<c64>, f64)> {
    let n = set.p.nrows();
    let eye = Mat::<c64>::identity(n, n);
    let plus = c64::cis(xi * period);
    let minus = c64::cis(-(set.k + xi) * period);
    let mut out = eye.clone();
    let mut worst: f64 = 0.0;
    for (ph, dl, dr) in [(plus, &set.d_lp, &set.d_rp), (minus, &set.d_lm, &set.d_rm)] {
        let resolvent = &eye - scaled(set.p.as_ref(), ph);
        let cond = cond2(resolvent.as_ref());
        worst = worst.max(cond);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Numerical(format!(
                "I − P e^(iζL) is near-singular (cond {cond:.3e}) at k = {:.6}, ξ = {xi:.6}",
                set.k
            )));
        }
        let lead = dl + dr * &set.p;
        // lead · resolvent⁻¹ = (resolvent⁻ᵀ leadᵀ)ᵀ
        let x = solve(resolvent.transpose(), lead.transpose())?;
        out += scaled(x.transpose(), ph);
    }
    Ok((scaled(out.as_ref(), c64::new(period / (2.0 * std::f64::consts::PI), 0.0)), worst))
}

/// Flux balance at the nodes of the edge joining the corner (d/2, −L/2) of Ω^i to
/// the lattice vertex below it. That edge lies on Σ^H and on Θ_{−2π/3}Σ^H but inside
/// none of the three rotated half-spaces, so the fixed-point equation only makes
/// the glued field continuous there; these rows add the discrete Helmholtz
/// equation at its m nodes. Terms are (period shift q, local node of C_0q); the
/// cell on the far side enters through its rotation image C_00 (q = 0).
#[derive(Clone, Debug)]
pub struct SpokeStencil {
    pub rows: Vec<Vec<(i64, usize)>>,
}

impl SpokeStencil {
    pub fn new(ctx: &HalfspaceContext) -> Result<Self> {
        let cell = ctx.cell();
        let f = *cell.frame();
        let m = cell.segments();
        let pts = sigma0_points(&f, m);
        let mut rows = Vec::with_capacity(m);
        for p in &pts[m..] {
            let x = *p - f.e2();
            let mut terms = Vec::new();
            for q in -3..=1 {
                if let Some(node) = cell.find_local(x - f.halfspace_center(0, q)) {
                    terms.push((q, node));
                }
            }
            let image = cell
                .find_local(x.rotate_thirds(1) - f.halfspace_center(0, 0))
                .ok_or_else(|| Error::Geometry("rotated spoke node is not a node of C_00".into()))?;
            if terms.is_empty() {
                return Err(Error::Geometry("spoke node outside the half-space cells".into()));
            }
            terms.push((0, image));
            rows.push(terms);
        }
        Ok(SpokeStencil { rows })
    }
}

/// Stacked system: block (j, i) = δ_ij I − w_i K(k_i, ξ_j); then the Σ^0 constraint
/// √(L/2π) w_i I; then the spoke flux rows.
pub struct DtdSystem {
    n_t: usize,
    n_k: usize,
    n_spoke: usize,
    scale: f64,
    weights: Vec<f64>,
    matrix: Mat<c64>,
    qr: Qr<c64>,
    pub max_condition: f64,
}

#[derive(Clone, Debug)]
pub struct DtdSolution {
    /// ψ̂(k_i): n_t × (number of right-hand sides), one entry per grid node.
    pub psi_hat: Vec<Mat<c64>>,
    /// max over columns of ‖residual (i)‖ in the k-weighted norm, relative to ‖φ‖.
    pub residual_nystrom: f64,
    /// max over columns of ‖residual (ii)‖ relative to ‖φ‖.
    pub residual_constraint: f64,
    /// max over columns of the spoke flux residual relative to ‖φ‖.
    pub residual_spoke: f64,
}

pub fn assemble_dtd_system(ctx: &HalfspaceContext, sets: &[CellOperatorSet], grid: &KGrid) -> Result<DtdSystem> {
    let n_k = grid.len();
    if sets.len() != n_k || n_k == 0 {
        return Err(Error::Config("operator sets do not match the k-grid".into()));
    }
    let n_t = sets[0].p.nrows();
    if n_t != ctx.n_t() {
        return Err(Error::Config("operator sets do not match the cell".into()));
    }
    let period = grid.period();
    let pairs: Vec<(usize, usize)> = (0..n_k).flat_map(|j| (0..n_k).map(move |i| (j, i))).collect();
    let blocks: Vec<(Mat<c64>, f64)> = pairs
        .par_iter()
        .map(|&(j, i)| kernel_kh(&sets[i], grid.nodes()[j], period))
        .collect::<Result<_>>()?;
    let stencil = SpokeStencil::new(ctx)?;
    let n_spoke = stencil.rows.len();
    let flux: Vec<Mat<c64>> = sets
        .par_iter()
        .map(|s| ctx.system().matrix.mul_mat((&s.e_l + &s.e_r * &s.p).as_ref()))
        .collect();
    let scale = grid.scale();
    let mut matrix = Mat::<c64>::zeros((n_k + 1) * n_t + n_spoke, n_k * n_t);
    let mut max_condition: f64 = 0.0;
    for (&(j, i), (block, cond)) in pairs.iter().zip(&blocks) {
        max_condition = max_condition.max(*cond);
        let w = grid.weights()[i];
        for r in 0..n_t {
            for c in 0..n_t {
                let delta = if i == j && r == c { ONE } else { ZERO };
                matrix[(j * n_t + r, i * n_t + c)] = delta - block[(r, c)] * w;
            }
        }
    }
    for i in 0..n_k {
        let w = scale * grid.weights()[i];
        for r in 0..n_t {
            matrix[(n_k * n_t + r, i * n_t + r)] = c64::new(w, 0.0);
        }
        for (s, terms) in stencil.rows.iter().enumerate() {
            let row = (n_k + 1) * n_t + s;
            for &(q, node) in terms {
                let z = grid.phase(i, q) * w;
                for c in 0..n_t {
                    matrix[(row, i * n_t + c)] += z * flux[i][(node, c)];
                }
            }
        }
    }
    if matrix.col_iter().any(|col| col.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))) {
        return Err(Error::Numerical("DtD system contains non-finite entries".into()));
    }
    let qr = matrix.qr();
    Ok(DtdSystem {
        n_t,
        n_k,
        n_spoke,
        scale,
        weights: grid.weights().to_vec(),
        matrix,
        qr,
        max_condition,
    })
}

impl DtdSystem {
    pub fn shape(&self) -> (usize, usize) {
        (self.matrix.nrows(), self.matrix.ncols())
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    /// Least-squares solve for Σ^0 data φ (n_t × ncols, one column per trace).
    pub fn solve(&self, phi: MatRef<'_, c64>) -> Result<DtdSolution> {
        let (n_t, n_k) = (self.n_t, self.n_k);
        if phi.nrows() != n_t {
            return Err(Error::Config(format!("Σ^0 data has {} rows, expected {n_t}", phi.nrows())));
        }
        let ncols = phi.ncols();
        let mut rhs = Mat::<c64>::zeros(self.matrix.nrows(), ncols);
        for r in 0..n_t {
            for c in 0..ncols {
                rhs[(n_k * n_t + r, c)] = phi[(r, c)];
            }
        }
        let x = self.qr.solve_lstsq(&rhs);
        let res = &self.matrix * &x - &rhs;
        let mut worst = [0.0f64; 3];
        for c in 0..ncols {
            let pn = (0..n_t).map(|r| phi[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            let mut parts = [0.0; 3];
            for j in 0..n_k {
                for r in 0..n_t {
                    parts[0] += self.weights[j] * res[(j * n_t + r, c)].norm_sqr();
                }
            }
            for r in 0..n_t {
                parts[1] += res[(n_k * n_t + r, c)].norm_sqr();
            }
            for s in 0..self.n_spoke {
                parts[2] += res[((n_k + 1) * n_t + s, c)].norm_sqr();
            }
            for (w, p) in worst.iter_mut().zip(parts) {
                let rel = if pn > 0.0 { p.sqrt() / pn } else { p.sqrt() };
                *w = if rel.is_nan() { f64::NAN } else { w.max(rel) };
            }
        }
        if worst.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("least-squares DtD solve produced non-finite values".into()));
        }
        let psi_hat = (0..n_k).map(|i| x.subrows(i * n_t, n_t).to_owned()).collect();
        Ok(DtdSolution {
            psi_hat,
            residual_nystrom: worst[0],
            residual_constraint: worst[1],
            residual_spoke: worst[2],
        })
    }

    /// √(L/2π)
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl DtdSolution {
    /// Fails with diagnostics when either residual exceeds `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if !(self.residual_nystrom <= tol && self.residual_constraint <= tol && self.residual_spoke <= tol) {
            return Err(Error::Numerical(format!(
                "DtD integral equation not converged: residual (i) {:.3e}, residual (ii) {:.3e}, spoke flux {:.3e}, tolerance {tol:.1e}",
                self.residual_nystrom, self.residual_constraint, self.residual_spoke
            )));
        }
        Ok(())
    }

    /// Period samples of the trace on Σ^H: ψ_q = √(L/2π) Σ_i w_i e^{iqk_iL} ψ̂_i.
    pub fn period_trace(&self, grid: &KGrid, q: i64) -> Mat<c64> {
        let (n_t, ncols) = (self.psi_hat[0].nrows(), self.psi_hat[0].ncols());
        let mut out = Mat::<c64>::zeros(n_t, ncols);
        for (i, psi) in self.psi_hat.iter().enumerate() {
            out += scaled(psi.as_ref(), grid.phase(i, q) * (grid.scale() * grid.weights()[i]));
        }
        out
    }
}

/// Applies the discrete D^H to ψ̂ on the grid: ξ_j ↦ Σ_i w_i K(k_i, ξ_j) ψ̂_i.
pub fn apply_dh(sets: &[CellOperatorSet], grid: &KGrid, psi_hat: &[Mat<c64>]) -> Result<Vec<Mat<c64>>> {
    (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let mut acc = Mat::<c64>::zeros(psi_hat[0].nrows(), psi_hat[0].ncols());
            for (i, set) in sets.iter().enumerate() {
                let (kern, _) = kernel_kh(set, grid.nodes()[j], grid.period())?;
                acc += scaled((kern * &psi_hat[i]).as_ref(), c64::new(grid.weights()[i], 0.0));
            }
            Ok(acc)
        })
        .collect()
}

/// Rotation bookkeeping between Σ^0 (period representation) and Σ^i = arc0 ∪ arc1 ∪ arc2
/// on the interior-cell mesh; arc_a[j] is the node at Θ^a(p_j).
#[derive(Clone, Debug)]
pub struct SymmetryOps {
    arcs: [Vec<usize>; 3],
}

impl SymmetryOps {
    pub fn new(interior: &MeshedCell) -> Result<Self> {
        let f = interior.frame();
        let pts = sigma0_points(f, interior.segments());
        let arc = |turns: i32| -> Result<Vec<usize>> {
            pts.iter()
                .map(|&p| {
                    interior.find_global(p.rotate_thirds(turns)).ok_or_else(|| {
                        Error::Geometry("interior mesh is not invariant under 2π/3 rotation".into())
                    })
                })
                .collect()
        };
        Ok(SymmetryOps {
            arcs: [arc(0)?, arc(1)?, arc(2)?],
        })
    }

    pub fn n_t(&self) -> usize {
        self.arcs[0].len()
    }

    /// Σ^i nodes in arc order (arc0, arc1, arc2).
    pub fn sigma_nodes(&self) -> Vec<usize> {
        self.arcs.concat()
    }

    pub fn arc(&self, a: usize) -> &[usize] {
        &self.arcs[a]
    }

    /// E: Σ^0 trace → symmetric Σ^i trace (arc order).
    pub fn extend(&self, phi0: &[c64]) -> Vec<c64> {
        [phi0, phi0, phi0].concat()
    }

    /// R: Σ^i trace (arc order) → Σ^0.
    pub fn restrict(&self, phi: &[c64]) -> Vec<c64> {
        phi[..self.n_t()].to_vec()
    }

    /// Dual restriction: ⟨R g, ψ⟩ = (1/3)⟨g, E ψ⟩.
    pub fn restrict_dual(&self, g: &[c64]) -> Vec<c64> {
        let n = self.n_t();
        (0..n).map(|j| (g[j] + g[n + j] + g[2 * n + j]) / 3.0).collect()
    }

    /// Dual extension: ⟨E g, φ⟩ = 3⟨g, R φ⟩ for symmetric φ.
    pub fn extend_dual(&self, g0: &[c64]) -> Vec<c64> {
        [g0, g0, g0].concat()
    }

    /// Validation error unless φ (arc order) is invariant under the rotation.
    pub fn check_symmetric(&self, phi: &[c64], tol: f64) -> Result<()> {
        let n = self.n_t();
        if phi.len() != 3 * n {
            return Err(Error::Config(format!("Σ^i trace has {} values, expected {}", phi.len(), 3 * n)));
        }
        let scale = phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let back = self.extend(&self.restrict(phi));
        let err = phi.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if err > tol * scale.max(1e-300) {
            return Err(Error::Validation(format!(
                "boundary data is not hexagonally symmetric (deviation {err:.3e})"
            )));
        }
        Ok(())
    }

    /// Σ^i matrix from a Σ^0 → Σ^0-dual operator: Λ_full[arc_a i, arc_b j] = Λ0[i, j] / 3,
    /// i.e. E_dual ∘ Λ0 ∘ (mean over arcs). Exact on symmetric traces.
    pub fn full_matrix(&self, lambda0: MatRef<'_, c64>) -> Mat<c64> {
        let n = self.n_t();
        Mat::from_fn(3 * n, 3 * n, |r, c| lambda0[(r % n, c % n)] / 3.0)
    }
}

/// Λ0 = R^H Λ^H D φ on Σ^0 for the solved ψ̂ (columns as in the solution). Row 0
/// (the lower endpoint of Σ^0) also collects the dual of the period above, which
/// by symmetry carries the exterior contribution from the cell below Ω^i.
pub fn assemble_lambda(sets: &[CellOperatorSet], grid: &KGrid, sol: &DtdSolution) -> Result<Mat<c64>> {
    if sets.len() != grid.len() || sol.psi_hat.len() != grid.len() {
        return Err(Error::Config("DtD solution does not match the k-grid".into()));
    }
    let (n_t, ncols) = (sol.psi_hat[0].nrows(), sol.psi_hat[0].ncols());
    let mut out = Mat::<c64>::zeros(n_t, ncols);
    let s = grid.scale();
    for (i, (set, psi)) in sets.iter().zip(&sol.psi_hat).enumerate() {
        let g = &set.lambda_hat * psi;
        let w = c64::new(s * grid.weights()[i], 0.0);
        let up = grid.phase(i, 1) * w;
        for c in 0..ncols {
            for r in 0..n_t {
                out[(r, c)] += w * g[(r, c)];
            }
            out[(0, c)] += up * g[(0, c)];
        }
    }
    Ok(out)
}

/// Σ^0 → Σ^0-dual matrix of the symmetric exterior DtN map, via the basis solve.
pub struct LambdaResult {
    pub lambda0: Mat<c64>,
    pub solution: DtdSolution,
    pub max_condition: f64,
}

pub fn compute_lambda(ctx: &HalfspaceContext, sets: &[CellOperatorSet], grid: &KGrid, tol: f64) -> Result<LambdaResult> {
    let system = assemble_dtd_system(ctx, sets, grid)?;
    let n_t = sets[0].p.nrows();
    let eye = Mat::<c64>::identity(n_t, n_t);
    let solution = system.solve(eye.as_ref())?;
    solution.check(tol)?;
    let lambda0 = assemble_lambda(sets, grid, &solution)?;
    Ok(LambdaResult {
        lambda0,
        solution,
        max_condition: system.max_condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::matpow;
    use crate::floquet::make_kgrid;
    use crate::geometry::{build_interior_cell, build_reference_cell, LatticeFrame};
    use crate::halfspace::HalfspaceContext;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(h: f64, n_k: usize) -> (HalfspaceContext, KGrid, Vec<CellOperatorSet>) {
        let f = LatticeFrame::new(1.0).unwrap();
        let ctx = HalfspaceContext::new(build_reference_cell(f, h).unwrap(), &|_| c64::new(1.0, 1.0), 1.0).unwrap();
        let grid = make_kgrid(n_k, f.period()).unwrap();
        let sets = ctx.operator_sets(&grid).unwrap();
        (ctx, grid, sets)
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<c64> {
        Mat::from_fn(r, c, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn kernel_with_zero_operators_is_scaled_identity() {
        let (_, grid, sets) = fixture(0.5, 4);
        let mut s = sets[1].clone();
        let n = s.p.nrows();
        for m in [&mut s.p, &mut s.d_lp, &mut s.d_lm, &mut s.d_rp, &mut s.d_rm] {
            *m = Mat::zeros(n, n);
        }
        let (k, cond) = kernel_kh(&s, 0.3, grid.period()).unwrap();
        let want = Mat::<c64>::identity(n, n) * faer::Scale(c64::new(grid.period() / (2.0 * std::f64::consts::PI), 0.0));
        assert!((&k - &want).norm_l2() == 0.0);
        assert!((cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_matches_neumann_series() {
        let (_, grid, sets) = fixture(0.5, 4);
        let s = &sets[2];
        let n = s.p.nrows();
        let xi = 0.4;
        let ph = c64::cis(xi * grid.period());
        let eye = Mat::<c64>::identity(n, n);
        let r = solve((&eye - &s.p * faer::Scale(ph)).as_ref(), eye.as_ref()).unwrap();
        let mut series = Mat::<c64>::zeros(n, n);
        for j in 0..=30 {
            series += matpow(s.p.as_ref(), j) * faer::Scale(c64::cis(j as f64 * xi * grid.period()));
        }
        let pn = crate::dense::norm2(s.p.as_ref());
        let bound = pn.powi(31) / (1.0 - pn);
        assert!(crate::dense::norm2((&r - &series).as_ref()) <= bound + 1e-13);
    }

    #[test]
    fn system_shape_and_constraint_rows() {
        let (ctx, grid, sets) = fixture(0.5, 32);
        let sys = assemble_dtd_system(&ctx, &sets, &grid).unwrap();
        let n_t = 4;
        assert_eq!(sys.shape(), (33 * n_t + 2, 32 * n_t));
        // constant Ψ through the constraint rows: √(L/2π)·(2π/L)·Ψ₀
        let psi0 = [c64::new(1.0, 2.0), c64::new(-1.0, 0.5), ONE, ZERO];
        let x = Mat::from_fn(32 * n_t, 1, |r, _| psi0[r % n_t]);
        let y = sys.matrix() * &x;
        let factor = sys.scale() * 2.0 * std::f64::consts::PI / grid.period();
        for r in 0..n_t {
            assert!((y[(32 * n_t + r, 0)] - psi0[r] * factor).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_and_linear() {
        let (ctx, grid, sets) = fixture(0.5, 8);
        let sys = assemble_dtd_system(&ctx, &sets, &grid).unwrap();
        let zero = sys.solve(Mat::<c64>::zeros(4, 1).as_ref()).unwrap();
        assert!(zero.psi_hat.iter().all(|m| m.norm_l2() == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = rand_mat(&mut rng, 4, 1);
        let alpha = c64::new(-0.7, 1.3);
        let a = sys.solve(phi.as_ref()).unwrap();
        let b = sys.solve((&phi * faer::Scale(alpha)).as_ref()).unwrap();
        for (x, y) in a.psi_hat.iter().zip(&b.psi_hat) {
            assert!((x * faer::Scale(alpha) - y).norm_l2() < 1e-12 * (1.0 + y.norm_l2()));
        }
    }

    #[test]
    fn residuals_small_and_fixed_point() {
        let (ctx, grid, sets) = fixture(0.25, 16);
        let sys = assemble_dtd_system(&ctx, &sets, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = rand_mat(&mut rng, 8, 3);
        let sol = sys.solve(phi.as_ref()).unwrap();
        sol.check(1e-6).unwrap();
        // Σ^0 restriction of the period-0 trace is φ itself
        let t0 = sol.period_trace(&grid, 0);
        assert!((&t0 - &phi).norm_l2() <= 1e-6 * phi.norm_l2());
        let dh = apply_dh(&sets, &grid, &sol.psi_hat).unwrap();
        let mut num = 0.0;
        for (a, b) in dh.iter().zip(&sol.psi_hat) {
            num += (a - b).norm_l2().powi(2);
        }
        assert!(num.sqrt() <= 1e-5 * phi.norm_l2());
    }

    #[test]
    fn symmetry_operator_identities() {
        let f = LatticeFrame::new(1.0).unwrap();
        let ops = SymmetryOps::new(&build_interior_cell(f, 0.25).unwrap()).unwrap();
        let n = ops.n_t();
        assert_eq!(n, 8);
        let mut nodes = ops.sigma_nodes();
        nodes.sort_unstable();
        nodes.dedup();
        assert_eq!(nodes.len(), 24);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi0: Vec<c64> = (0..n).map(|_| c64::new(rng.random(), rng.random())).collect();
        assert_eq!(ops.restrict(&ops.extend(&phi0)), phi0);
        let sym = ops.extend(&phi0);
        assert_eq!(ops.extend(&ops.restrict(&sym)), sym);
        ops.check_symmetric(&sym, 1e-10).unwrap();
        let mut asym = sym.clone();
        asym[n + 1] += c64::new(0.1, 0.0);
        assert!(matches!(ops.check_symmetric(&asym, 1e-10), Err(Error::Validation(_))));
        let g: Vec<c64> = (0..3 * n).map(|_| c64::new(rng.random(), rng.random())).collect();
        let pair = |a: &[c64], b: &[c64]| -> c64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let lhs = pair(&ops.restrict_dual(&g), &phi0);
        let rhs = pair(&g, &ops.extend(&phi0)) / 3.0;
        assert!((lhs - rhs).norm() < 1e-13);
        let g0: Vec<c64> = g[..n].to_vec();
        let lhs = pair(&ops.extend_dual(&g0), &sym);
        let rhs = pair(&g0, &ops.restrict(&sym)) * 3.0;
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn full_matrix_on_symmetric_traces() {
        let f = LatticeFrame::new(1.0).unwrap();
        let ops = SymmetryOps::new(&build_interior_cell(f, 0.5).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l0 = rand_mat(&mut rng, 4, 4);
        let full = ops.full_matrix(l0.as_ref());
        let phi0 = rand_mat(&mut rng, 4, 1);
        let sym = crate::dense::to_col(&ops.extend(&crate::dense::from_col(phi0.as_ref())));
        let out = &full * &sym;
        let want = &l0 * &phi0;
        for a in 0..3 {
            for i in 0..4 {
                assert!((out[(a * 4 + i, 0)] - want[(i, 0)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn lambda_of_zero_is_zero() {
        let (ctx, grid, sets) = fixture(0.5, 4);
        let sys = assemble_dtd_system(&ctx, &sets, &grid).unwrap();
        let sol = sys.solve(Mat::<c64>::zeros(4, 2).as_ref()).unwrap();
        assert_eq!(assemble_lambda(&sets, &grid, &sol).unwrap().norm_l2(), 0.0);
    }
}
