//! Pipeline-versus-oracle measurements and convergence studies.

use faer::c64;

use crate::error::{Error, Result, StageExt};
use crate::interior::{solve_defect_problem, DefectSolution, ProblemConfig};
use crate::oracle::{compare_fields, exterior_annulus_dtn, truncated_solve, TruncatedSolution};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleErrors {
    /// Relative L²(Ω^i) error of u^i.
    pub interior: f64,
    /// Relative L² error on the six cells adjacent to Ω^i.
    pub neighbours: f64,
}

/// Sector cells covering the six neighbours of Ω^i, with their lattice coordinates.
pub const NEIGHBOURS: [((u8, i64, i64), (i64, i64)); 6] = [
    ((0, 0, 0), (1, 0)),
    ((0, 0, -1), (1, -1)),
    ((1, 0, 0), (-1, 1)),
    ((1, 0, -1), (0, 1)),
    ((2, 0, 0), (0, -1)),
    ((2, 0, -1), (-1, 0)),
];

/// Compares a pipeline solution with a truncated-lattice solution on the same mesh.
pub fn compare_with_oracle(sol: &DefectSolution, oracle: &TruncatedSolution) -> Result<OracleErrors> {
    if oracle.patch.reference().segments() != sol.interior.segments() {
        return Err(Error::Config("oracle and pipeline meshes differ".into()));
    }
    let interior = compare_fields(&[oracle.interior()], &[sol.u.clone()], &sol.interior)?.relative;
    let cells: Vec<_> = NEIGHBOURS.iter().map(|c| c.0).collect();
    let fields = sol.exterior_field(&cells)?;
    let mut reference = Vec::with_capacity(fields.len());
    for f in &fields {
        let vals = f
            .points
            .iter()
            .map(|&x| {
                oracle
                    .patch
                    .find(x)
                    .map(|i| oracle.field[i])
                    .ok_or_else(|| Error::Geometry(format!("node ({:.4}, {:.4}) missing from the oracle", x.x, x.y)))
            })
            .collect::<Result<Vec<c64>>>()?;
        reference.push(vals);
    }
    let values: Vec<Vec<c64>> = fields.into_iter().map(|f| f.values).collect();
    let neighbours = compare_fields(&reference, &values, &sol.interior)?.relative;
    Ok(OracleErrors { interior, neighbours })
}

/// Relative Frobenius error of the Σ^0 block of Λ against the annulus oracle.
pub fn lambda_error(sol: &DefectSolution, rings: usize, max_dofs: usize) -> Result<f64> {
    let c = &sol.config;
    let annulus = exterior_annulus_dtn(c.frame()?, sol.interior.segments(), &c.medium, rings, max_dofs)?;
    let o = annulus.symmetric_block();
    Ok((&sol.lambda0 - &o).norm_l2() / o.norm_l2())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub h: f64,
    pub n_k: usize,
    pub rings: usize,
    pub errors: OracleErrors,
}

pub fn measure(config: &ProblemConfig, rings: usize, max_dofs: usize) -> Result<Measurement> {
    let sol = solve_defect_problem(config)?;
    let oracle = truncated_solve(
        config.frame()?,
        sol.interior.segments(),
        &config.medium,
        &config.source,
        rings,
        max_dofs,
    )
    .stage("oracle")?;
    Ok(Measurement {
        h: config.h,
        n_k: config.n_k,
        rings,
        errors: compare_with_oracle(&sol, &oracle)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub base: Measurement,
    /// Base followed by halved h.
    pub h: Vec<Measurement>,
    /// Base followed by doubled N_k.
    pub n_k: Vec<Measurement>,
    /// Base followed by more oracle rings.
    pub rings: Vec<Measurement>,
}

impl Convergence {
    /// Each curve strictly decreasing in the interior error.
    pub fn monotone(&self) -> [bool; 3] {
        let dec = |c: &[Measurement]| c.windows(2).all(|w| w[1].errors.interior < w[0].errors.interior);
        [dec(&self.h), dec(&self.n_k), dec(&self.rings)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("curve,h,n_k,rings,interior_error,neighbour_error\n");
        for (name, curve) in [("h", &self.h), ("n_k", &self.n_k), ("rings", &self.rings)] {
            for m in curve.iter() {
                s.push_str(&format!(
                    "{name},{:.17e},{},{},{:.17e},{:.17e}\n",
                    m.h, m.n_k, m.rings, m.errors.interior, m.errors.neighbours
                ));
            }
        }
        s
    }
}

/// Refines h (halving), N_k (doubling) and the oracle rings (+2) `steps` times from the base.
pub fn convergence_study(config: &ProblemConfig, rings: usize, steps: usize, max_dofs: usize) -> Result<Convergence> {
    let base = measure(config, rings, max_dofs)?;
    let mut h = vec![base.clone()];
    let mut n_k = vec![base.clone()];
    let mut r = vec![base.clone()];
    for s in 1..=steps {
        let mut c = config.clone();
        c.h = config.h / f64::powi(2.0, s as i32);
        h.push(measure(&c, rings, max_dofs)?);
        let mut c = config.clone();
        c.n_k = config.n_k << s;
        n_k.push(measure(&c, rings, max_dofs)?);
        r.push(measure(config, rings + 2 * s, max_dofs)?);
    }
    Ok(Convergence { base, h, n_k, rings: r })
}
