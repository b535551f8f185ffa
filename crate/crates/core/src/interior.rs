//! End-to-end defect solve: exterior DtN on Σ^i, interior Robin problem and
//! reconstruction of the exterior field by sectors.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dense::{from_col, to_col, ZERO};
use crate::dtd::{compute_lambda, DtdSolution, SymmetryOps};
use crate::error::{Error, Result, StageExt};
use crate::fem::{assemble, solve_robin, AssembledSystem, TriMesh};
use crate::floquet::{make_kgrid, KGrid};
use crate::geometry::{build_interior_cell, build_reference_cell, LatticeFrame, MeshedCell, Point};
use crate::halfspace::{max_spectral_radius, reconstruct_cell, CellOperatorSet, HalfspaceContext};
use crate::medium::{eval_sum, validate, MediumSpec, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual bound for the DtD integral equation and its constraints.
    pub dtd: f64,
    /// Pointwise bound for hexagonal symmetry of inputs and of the solution.
    pub symmetry: f64,
    /// Relative bound on the discrete energy balance.
    pub energy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            dtd: 1e-6,
            symmetry: 1e-10,
            energy: 1e-8,
        }
    }
}

pub const DEFAULT_HORIZON: i64 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub d: f64,
    pub medium: MediumSpec,
    pub source: Vec<Shape>,
    pub h: f64,
    pub n_k: usize,
    pub tolerances: Tolerances,
    /// Reconstruction limit on |p| and |q|.
    pub horizon: i64,
}

impl ProblemConfig {
    pub fn frame(&self) -> Result<LatticeFrame> {
        LatticeFrame::new(self.d)
    }

    pub fn validate(&self) -> Result<()> {
        let frame = self.frame()?;
        if !(self.h > 0.0 && self.h <= self.d) {
            return Err(Error::Config(format!("mesh size h = {} must lie in (0, d]", self.h)));
        }
        if self.n_k < 2 {
            return Err(Error::Config(format!("n_k = {} must be at least 2", self.n_k)));
        }
        if self.horizon < 0 {
            return Err(Error::Config(format!("horizon = {} must be non-negative", self.horizon)));
        }
        let t = self.tolerances;
        if ![t.dtd, t.symmetry, t.energy].iter().all(|x| *x > 0.0 && x.is_finite()) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        validate(&frame, &self.medium, &self.source, t.symmetry)
    }
}

/// Per-k operator data of the periodic half-space, reusable across sources and defects.
pub struct Precomputed {
    pub ctx: HalfspaceContext,
    pub grid: KGrid,
    pub sets: Vec<CellOperatorSet>,
}

impl Precomputed {
    pub fn compute(config: &ProblemConfig) -> Result<Self> {
        let (ctx, grid) = context(config)?;
        let sets = ctx.operator_sets(&grid).stage("halfspace operators")?;
        Ok(Precomputed { ctx, grid, sets })
    }

    /// Wraps operator sets loaded from elsewhere after checking they fit the configuration.
    pub fn from_sets(config: &ProblemConfig, sets: Vec<CellOperatorSet>) -> Result<Self> {
        let (ctx, grid) = context(config)?;
        let n_t = ctx.n_t();
        let fits = sets.len() == grid.len()
            && sets
                .iter()
                .zip(grid.nodes())
                .all(|(s, k)| (s.k - k).abs() <= 1e-14 && s.p.nrows() == n_t && s.e_l.nrows() == ctx.cell().node_count());
        if !fits {
            return Err(Error::Config("cached operators do not match the configuration".into()));
        }
        Ok(Precomputed { ctx, grid, sets })
    }
}

fn context(config: &ProblemConfig) -> Result<(HalfspaceContext, KGrid)> {
    config.validate().stage("config")?;
    let frame = config.frame()?;
    let cell = build_reference_cell(frame, config.h).stage("mesh")?;
    let medium = &config.medium;
    let ctx = HalfspaceContext::new(cell, &|p| medium.rho_per(p), medium.rho_b).stage("cell assembly")?;
    let grid = make_kgrid(config.n_k, frame.period()).stage("k-grid")?;
    Ok((ctx, grid))
}

/// Terms of Im∫ρ|u|² − Im⟨Λu, u⟩ = Im∫f ū on the discrete level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBalance {
    pub absorption: f64,
    pub boundary: f64,
    pub source: f64,
    /// |absorption − boundary − source| / max(|terms|).
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub n_t: usize,
    pub n_k: usize,
    pub interior_nodes: usize,
    pub max_riccati_residual: f64,
    pub max_spectral_radius: f64,
    pub max_kernel_condition: f64,
    pub dtd_residual_nystrom: f64,
    pub dtd_residual_constraint: f64,
    pub dtd_residual_spoke: f64,
    pub energy: EnergyBalance,
    pub symmetry_defect: f64,
    pub lambda_symmetry_defect: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellId {
    Interior,
    /// Cell C_pq of the half-space rotated by sector·2π/3.
    Exterior { sector: u8, p: i64, q: i64 },
}

#[derive(Clone, Debug)]
pub struct CellField {
    pub id: CellId,
    pub points: Vec<Point>,
    pub values: Vec<c64>,
}

pub struct DefectSolution {
    pub config: ProblemConfig,
    pub interior: MeshedCell,
    pub system: AssembledSystem,
    pub u: Vec<c64>,
    pub symmetry: SymmetryOps,
    pub lambda0: Mat<c64>,
    pub lambda_full: Mat<c64>,
    pub dtd: DtdSolution,
    pub pre: Precomputed,
    pub diagnostics: Diagnostics,
}

pub fn solve_defect_problem(config: &ProblemConfig) -> Result<DefectSolution> {
    let pre = Precomputed::compute(config)?;
    solve_with(config, pre)
}

pub fn solve_with(config: &ProblemConfig, pre: Precomputed) -> Result<DefectSolution> {
    config.validate().stage("config")?;
    let frame = config.frame()?;
    let tol = config.tolerances;
    let lam = compute_lambda(&pre.ctx, &pre.sets, &pre.grid, tol.dtd).stage("dtd")?;

    let interior = build_interior_cell(frame, config.h).stage("mesh")?;
    let symmetry = SymmetryOps::new(&interior).stage("mesh")?;
    let lambda_full = symmetry.full_matrix(lam.lambda0.as_ref());
    let medium = &config.medium;
    let source = &config.source;
    let src = |p: Point| eval_sum(source, p);
    let system = assemble(
        &TriMesh::from(&interior),
        &|p| medium.rho_interior(p),
        Some(&src),
        medium.rho_b,
    )
    .stage("interior assembly")?;
    let sigma = symmetry.sigma_nodes();
    let u = solve_robin(&system, &sigma, lambda_full.as_ref()).stage("robin")?;

    let energy = energy_balance(&system, &sigma, &lambda_full, &u);
    if !(energy.defect <= tol.energy) {
        return Err(Error::Numerical(format!(
            "energy balance violated: relative defect {:.3e}",
            energy.defect
        )))
        .stage("robin");
    }
    let symmetry_defect = rotation_defect(&interior, &u).stage("symmetry")?;
    if !(symmetry_defect <= tol.symmetry) {
        return Err(Error::Numerical(format!(
            "interior solution is not hexagonally symmetric (deviation {symmetry_defect:.3e})"
        )))
        .stage("symmetry");
    }
    let trace: Vec<c64> = sigma.iter().map(|&i| u[i]).collect();
    let g = from_col((&lambda_full * to_col(&trace)).as_ref());
    let lambda_symmetry_defect = arc_defect(&symmetry, &g);

    let diagnostics = Diagnostics {
        n_t: pre.ctx.n_t(),
        n_k: pre.grid.len(),
        interior_nodes: interior.node_count(),
        max_riccati_residual: pre.sets.iter().map(|s| s.riccati_residual).fold(0.0, f64::max),
        max_spectral_radius: max_spectral_radius(&pre.sets).stage("halfspace operators")?,
        max_kernel_condition: lam.max_condition,
        dtd_residual_nystrom: lam.solution.residual_nystrom,
        dtd_residual_constraint: lam.solution.residual_constraint,
        dtd_residual_spoke: lam.solution.residual_spoke,
        energy,
        symmetry_defect,
        lambda_symmetry_defect,
    };
    Ok(DefectSolution {
        config: config.clone(),
        interior,
        system,
        u,
        symmetry,
        lambda0: lam.lambda0,
        lambda_full,
        dtd: lam.solution,
        pre,
        diagnostics,
    })
}

fn energy_balance(system: &AssembledSystem, sigma: &[usize], lambda: &Mat<c64>, u: &[c64]) -> EnergyBalance {
    // ū·(K − M_ρ)u with K real symmetric: Im part is −Im∫ρ|u|²; load b = −∫fφ.
    let au = system.matrix.mul_vec(u);
    let absorption = -u.iter().zip(&au).map(|(a, b)| a.conj() * b).sum::<c64>().im;
    let trace: Vec<c64> = sigma.iter().map(|&i| u[i]).collect();
    let lt = from_col((lambda * to_col(&trace)).as_ref());
    let boundary = trace.iter().zip(&lt).map(|(a, b)| a.conj() * b).sum::<c64>().im;
    let source = -u.iter().zip(&system.load).map(|(a, b)| a.conj() * b).sum::<c64>().im;
    let scale = absorption.abs().max(boundary.abs()).max(source.abs());
    let defect = if scale == 0.0 {
        0.0
    } else {
        (absorption - boundary - source).abs() / scale
    };
    EnergyBalance {
        absorption,
        boundary,
        source,
        defect,
    }
}

/// max |u(Θx) − u(x)| / max |u| over the nodes of a rotation-invariant mesh.
pub fn rotation_defect(cell: &MeshedCell, u: &[c64]) -> Result<f64> {
    let perm = cell.rotation_permutation(1)?;
    let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(perm.iter().enumerate().map(|(i, &j)| (u[j] - u[i]).norm()).fold(0.0, f64::max) / scale)
}

/// Deviation of a Σ^i vector (arc order) from its arc-wise mean, relative to its size.
fn arc_defect(ops: &SymmetryOps, g: &[c64]) -> f64 {
    let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let back = ops.extend(&ops.restrict_dual(g));
    g.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
}

impl DefectSolution {
    /// u^i on the Σ^0 period points.
    pub fn phi0(&self) -> Vec<c64> {
        self.symmetry.arc(0).iter().map(|&i| self.u[i]).collect()
    }

    pub fn interior_field(&self) -> CellField {
        CellField {
            id: CellId::Interior,
            points: self.interior.global_nodes(),
            values: self.u.clone(),
        }
    }

    /// Trace of the exterior field on the period Σ^0 + q·e2 of the half-space boundary.
    pub fn period_trace(&self, q: i64) -> Vec<c64> {
        let t = self.dtd.period_trace(&self.pre.grid, q) * to_col(&self.phi0());
        from_col(t.as_ref())
    }

    /// Exterior field on cells (sector, p, q); sector s is the half-space rotated by s·2π/3.
    pub fn exterior_field(&self, cells: &[(u8, i64, i64)]) -> Result<Vec<CellField>> {
        let horizon = self.config.horizon;
        for &(s, p, q) in cells {
            if s > 2 {
                return Err(Error::Config(format!("sector {s} does not exist (0, 1, 2)")));
            }
            if p < 0 || p > horizon || q.abs() > horizon {
                return Err(Error::Config(format!(
                    "cell (p, q) = ({p}, {q}) lies outside the reconstruction horizon {horizon}"
                )));
            }
        }
        let pre = &self.pre;
        let phi = to_col(&self.phi0());
        let n_cell = pre.ctx.cell().node_count();
        let mut values = vec![vec![ZERO; n_cell]; cells.len()];
        let s = pre.grid.scale();
        for (i, set) in pre.sets.iter().enumerate() {
            let psi = &self.dtd.psi_hat[i] * &phi;
            let w = c64::new(s * pre.grid.weights()[i], 0.0);
            for (c, &(_, p, q)) in cells.iter().enumerate() {
                let u = reconstruct_cell(set, psi.as_ref(), p, q, pre.grid.period())?;
                for (o, j) in values[c].iter_mut().zip(0..n_cell) {
                    *o += w * u[(j, 0)];
                }
            }
        }
        let frame = self.config.frame()?;
        let local = pre.ctx.cell().local_nodes();
        Ok(cells
            .iter()
            .zip(values)
            .map(|(&(sector, p, q), values)| {
                let center = frame.lattice_point(p + 1, q);
                CellField {
                    id: CellId::Exterior { sector, p, q },
                    points: local.iter().map(|&x| (center + x).rotate_thirds(sector as i32)).collect(),
                    values,
                }
            })
            .collect())
    }

    /// Every cell within the horizon in all three sectors.
    pub fn horizon_cells(&self) -> Vec<(u8, i64, i64)> {
        let n = self.config.horizon;
        let mut out = Vec::new();
        for s in 0..3u8 {
            for p in 0..=n {
                for q in -n..=n {
                    out.push((s, p, q));
                }
            }
        }
        out
    }
}
