//! Floquet-Bloch transform in y with period L on a uniform midpoint k-grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::c64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    period: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Midpoint rule on (−π/L, π/L): k_i = −π/L + (i + 1/2)·(2π/L)/N_k.
pub fn make_kgrid(n_k: usize, period: f64) -> Result<KGrid> {
    if n_k < 2 || n_k % 2 != 0 {
        return Err(Error::Config(format!("N_k must be even and at least 2, got {n_k}")));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::Config(format!("invalid period {period}")));
    }
    let w = 2.0 * PI / period / n_k as f64;
    let nodes = (0..n_k).map(|i| -PI / period + (i as f64 + 0.5) * w).collect();
    Ok(KGrid {
        period,
        nodes,
        weights: vec![w; n_k],
    })
}

impl KGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// √(L/2π)
    pub fn scale(&self) -> f64 {
        (self.period / (2.0 * PI)).sqrt()
    }

    /// e^{i q k_i L}
    pub fn phase(&self, i: usize, q: i64) -> c64 {
        c64::cis(q as f64 * self.nodes[i] * self.period)
    }
}

/// Per-k traces on the reference period (Σ^0 representation).
#[derive(Clone, Debug, PartialEq)]
pub struct QpTraceField {
    pub values: Vec<Vec<c64>>,
}

impl QpTraceField {
    pub fn zeros(n_k: usize, n_t: usize) -> Self {
        QpTraceField {
            values: vec![vec![c64::new(0.0, 0.0); n_t]; n_k],
        }
    }

    pub fn trace_len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Σ_i w_i ‖φ̂_i‖²
    pub fn parseval_norm_sqr(&self, grid: &KGrid) -> f64 {
        self.values
            .iter()
            .zip(grid.weights())
            .map(|(v, w)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// φ̂(k_i) = √(L/2π) Σ_q φ_q e^{−i q k_i L}.
pub fn fb_forward(samples: &BTreeMap<i64, Vec<c64>>, grid: &KGrid) -> Result<QpTraceField> {
    let n_t = samples.values().next().map_or(0, Vec::len);
    if samples.values().any(|v| v.len() != n_t) {
        return Err(Error::Config("period samples have different lengths".into()));
    }
    if let (Some(lo), Some(hi)) = (samples.keys().next(), samples.keys().next_back()) {
        if (hi - lo + 1) as usize > grid.len() {
            log::warn!(
                "data spans {} periods but the k-grid has {} nodes; the transform is no longer exactly invertible",
                hi - lo + 1,
                grid.len()
            );
        }
    }
    let s = grid.scale();
    let values = (0..grid.len())
        .map(|i| {
            let mut acc = vec![c64::new(0.0, 0.0); n_t];
            for (&q, v) in samples {
                let ph = grid.phase(i, -q) * s;
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += ph * x;
                }
            }
            acc
        })
        .collect();
    Ok(QpTraceField { values })
}

/// φ_q = √(L/2π) Σ_i w_i e^{i q k_i L} φ̂(k_i).
pub fn fb_inverse(field: &QpTraceField, grid: &KGrid, q: i64) -> Result<Vec<c64>> {
    if field.values.len() != grid.len() {
        return Err(Error::Config(format!(
            "field has {} wavenumbers, grid has {}",
            field.values.len(),
            grid.len()
        )));
    }
    let s = grid.scale();
    let mut out = vec![c64::new(0.0, 0.0); field.trace_len()];
    for (i, v) in field.values.iter().enumerate() {
        let ph = grid.phase(i, q) * (s * grid.weights()[i]);
        for (o, x) in out.iter_mut().zip(v) {
            *o += ph * x;
        }
    }
    Ok(out)
}

/// Values on the period shifted by q periods: multiply by e^{iqkL}.
pub fn qp_extend(trace: &[c64], k: f64, period: f64, q: i64) -> Vec<c64> {
    let ph = c64::cis(q as f64 * k * period);
    trace.iter().map(|v| ph * v).collect()
}

pub fn qp_restrict(trace: &[c64], k: f64, period: f64, q: i64) -> Vec<c64> {
    qp_extend(trace, k, period, -q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: f64 = 1.732_050_807_568_877_2;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn grid_formula() {
        let g = make_kgrid(2, L).unwrap();
        assert!((g.nodes()[0] + PI / (2.0 * L)).abs() < 1e-15);
        assert!((g.nodes()[1] - PI / (2.0 * L)).abs() < 1e-15);
        assert!(g.weights().iter().all(|w| (w - PI / L).abs() < 1e-15));
        let g = make_kgrid(32, L).unwrap();
        let sum: f64 = g.weights().iter().sum();
        assert!((sum - 2.0 * PI / L).abs() < 1e-14);
        assert!((g.nodes()[1] - g.nodes()[0] - 2.0 * PI / (L * 32.0)).abs() < 1e-14);
        assert!(g.nodes().iter().all(|k| k.abs() < PI / L));
        assert!(make_kgrid(1, L).is_err());
        assert!(make_kgrid(7, L).is_err());
    }

    #[test]
    fn single_period_transforms() {
        let g = make_kgrid(8, L).unwrap();
        let phi = vec![c(1.0, 2.0), c(-0.5, 0.0)];
        let s = g.scale();
        let f0 = fb_forward(&BTreeMap::from([(0, phi.clone())]), &g).unwrap();
        let f1 = fb_forward(&BTreeMap::from([(1, phi.clone())]), &g).unwrap();
        for i in 0..g.len() {
            let k = g.nodes()[i];
            for j in 0..2 {
                assert!((f0.values[i][j] - phi[j] * s).norm() < 1e-15);
                assert!((f1.values[i][j] - phi[j] * s * c64::cis(-k * L)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_field_inverts_to_single_period() {
        let g = make_kgrid(16, L).unwrap();
        let phi = vec![c(0.3, -1.0)];
        let field = QpTraceField {
            values: vec![vec![phi[0] * g.scale()]; g.len()],
        };
        for q in -7..8 {
            let v = fb_inverse(&field, &g, q).unwrap()[0];
            let want = if q == 0 { phi[0] } else { c(0.0, 0.0) };
            assert!((v - want).norm() < 1e-13, "q={q} {v}");
        }
        assert_eq!(fb_inverse(&QpTraceField::zeros(16, 3), &g, 2).unwrap(), vec![c(0.0, 0.0); 3]);
        assert!(fb_inverse(&QpTraceField::zeros(4, 3), &g, 0).is_err());
    }

    #[test]
    fn qp_phases() {
        let v = vec![c(1.0, 1.0), c(2.0, -3.0)];
        assert_eq!(qp_extend(&v, 0.4, L, 0), v);
        assert_eq!(qp_extend(&v, 0.0, L, 1), v);
    }

    fn samples_strategy(n_k: usize) -> impl Strategy<Value = BTreeMap<i64, Vec<c64>>> {
        let half = (n_k / 2) as i64;
        proptest::collection::btree_map(
            -half..half,
            proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b)), 3),
            1..6,
        )
    }

    proptest! {
        #[test]
        fn roundtrip_and_parseval(samples in samples_strategy(16)) {
            let g = make_kgrid(16, L).unwrap();
            let f = fb_forward(&samples, &g).unwrap();
            let mut norm = 0.0;
            for q in -8..8 {
                let back = fb_inverse(&f, &g, q).unwrap();
                let want = samples.get(&q).cloned().unwrap_or_else(|| vec![c(0.0, 0.0); 3]);
                for (a, b) in back.iter().zip(&want) {
                    prop_assert!((a - b).norm() < 1e-13);
                }
                norm += want.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            prop_assert!((f.parseval_norm_sqr(&g) - norm).abs() < 1e-12 * (1.0 + norm));
        }

        #[test]
        fn qp_extend_restrict_inverse(k in -1.8..1.8f64, q in -20i64..20, a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let v = vec![c(a, b), c(b, -a)];
            let e = qp_extend(&v, k, L, q);
            let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let n1: f64 = e.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((n0 - n1).abs() < 1e-12 * (1.0 + n0));
            let r = qp_restrict(&e, k, L, q);
            for (x, y) in r.iter().zip(&v) {
                prop_assert!((x - y).norm() < 1e-13);
            }
        }
    }
}
