//! Closed-form coefficient descriptions: sums of centered shapes in cell-local
//! coordinates, evaluated at triangle centroids.

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LatticeFrame, Point};

/// [re, im]
pub type Complex = [f64; 2];

fn cx(v: Complex) -> c64 {
    c64::new(v[0], v[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Constant { value: Complex },
    Disc { radius: f64, value: Complex },
    Ring { inner: f64, outer: f64, value: Complex },
    /// Concentric flat-top hexagon with the given side.
    Hexagon { side: f64, value: Complex },
    /// amplitude · exp(−r²/width²), cut off at `cutoff`.
    Gaussian { width: f64, cutoff: f64, amplitude: Complex },
    /// amplitude · (1 − r²/radius²)² inside the disc.
    Bump { radius: f64, amplitude: Complex },
    /// Constant on a closed polygon (even-odd rule).
    Polygon { vertices: Vec<[f64; 2]>, value: Complex },
}

fn inside_hexagon(p: Point, side: f64) -> bool {
    let s3 = 3f64.sqrt();
    p.y.abs() <= 0.5 * s3 * side && s3 * p.x.abs() + p.y.abs() <= s3 * side
}

fn inside_polygon(p: Point, v: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + n - 1) % n]);
        if (a[1] > p.y) != (b[1] > p.y) && p.x < (b[0] - a[0]) * (p.y - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
    }
    inside
}

impl Shape {
    pub fn eval(&self, p: Point) -> c64 {
        let r2 = p.dot(p);
        let zero = c64::new(0.0, 0.0);
        match self {
            Shape::Constant { value } => cx(*value),
            Shape::Disc { radius, value } => {
                if r2 < radius * radius {
                    cx(*value)
                } else {
                    zero
                }
            }
            Shape::Ring { inner, outer, value } => {
                if r2 >= inner * inner && r2 < outer * outer {
                    cx(*value)
                } else {
                    zero
                }
            }
            Shape::Hexagon { side, value } => {
                if inside_hexagon(p, *side) {
                    cx(*value)
                } else {
                    zero
                }
            }
            Shape::Gaussian { width, cutoff, amplitude } => {
                if r2 < cutoff * cutoff {
                    cx(*amplitude) * (-r2 / (width * width)).exp()
                } else {
                    zero
                }
            }
            Shape::Bump { radius, amplitude } => {
                let t = 1.0 - r2 / (radius * radius);
                if t > 0.0 {
                    cx(*amplitude) * (t * t)
                } else {
                    zero
                }
            }
            Shape::Polygon { vertices, value } => {
                if inside_polygon(p, vertices) {
                    cx(*value)
                } else {
                    zero
                }
            }
        }
    }

    /// Radius of a disc containing the support; None when unbounded.
    pub fn extent(&self) -> Option<f64> {
        match self {
            Shape::Constant { value } => (value[0] == 0.0 && value[1] == 0.0).then_some(0.0),
            Shape::Disc { radius, .. } | Shape::Bump { radius, .. } => Some(*radius),
            Shape::Ring { outer, .. } => Some(*outer),
            Shape::Hexagon { side, .. } => Some(*side),
            Shape::Gaussian { cutoff, .. } => Some(*cutoff),
            Shape::Polygon { vertices, .. } => {
                Some(vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max))
            }
        }
    }

    /// Whether the support lies in the closed hexagon of side d.
    pub fn contained_in_cell(&self, frame: &LatticeFrame) -> bool {
        let d = frame.side();
        match self {
            Shape::Hexagon { side, .. } => *side <= d,
            Shape::Polygon { vertices, .. } => vertices
                .iter()
                .all(|v| inside_hexagon(Point::new(v[0], v[1]), d * (1.0 + 1e-12))),
            other => other.extent().is_some_and(|r| r <= 0.5 * frame.period()),
        }
    }

    fn check(&self) -> Result<()> {
        let pos = |name: &str, x: f64| -> Result<()> {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("shape parameter {name} must be positive, got {x}")))
            }
        };
        match self {
            Shape::Constant { .. } => Ok(()),
            Shape::Disc { radius, .. } | Shape::Bump { radius, .. } => pos("radius", *radius),
            Shape::Ring { inner, outer, .. } => {
                pos("outer", *outer)?;
                if !(*inner >= 0.0 && inner < outer) {
                    return Err(Error::Config(format!("ring needs 0 <= inner < outer, got {inner}, {outer}")));
                }
                Ok(())
            }
            Shape::Hexagon { side, .. } => pos("side", *side),
            Shape::Gaussian { width, cutoff, .. } => {
                pos("width", *width)?;
                pos("cutoff", *cutoff)
            }
            Shape::Polygon { vertices, .. } => {
                if vertices.len() < 3 {
                    return Err(Error::Config("polygon needs at least 3 vertices".into()));
                }
                Ok(())
            }
        }
    }
}

pub fn eval_sum(shapes: &[Shape], p: Point) -> c64 {
    shapes.iter().fold(c64::new(0.0, 0.0), |acc, s| acc + s.eval(p))
}

/// ρ = ρ_per + ρ_0 with ρ_0 and f supported in the defect cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    pub rho_b: f64,
    pub rho_per: Vec<Shape>,
    #[serde(default)]
    pub rho_0: Vec<Shape>,
}

impl MediumSpec {
    pub fn rho_per(&self, local: Point) -> c64 {
        eval_sum(&self.rho_per, local)
    }

    pub fn rho_0(&self, p: Point) -> c64 {
        eval_sum(&self.rho_0, p)
    }

    pub fn rho_interior(&self, p: Point) -> c64 {
        self.rho_per(p) + self.rho_0(p)
    }
}

/// Sample points strictly inside the hexagon of side d (a triangular lattice, offset
/// so that no sample sits on a symmetry axis).
pub fn sample_points(frame: &LatticeFrame, n: usize) -> Vec<Point> {
    let d = frame.side();
    let mut out = Vec::new();
    for i in 0..=2 * n {
        for j in 0..=2 * n {
            let p = Point::new(
                d * ((i as f64 + 0.37) / n as f64 - 1.0),
                0.5 * frame.period() * ((j as f64 + 0.21) / n as f64 - 1.0),
            );
            if inside_hexagon(p, d * (1.0 - 1e-9)) {
                out.push(p);
            }
        }
    }
    out
}

/// Largest |g(Θx) − g(x)| / (1 + |g(x)|) over the samples.
pub fn symmetry_defect(g: &dyn Fn(Point) -> c64, samples: &[Point]) -> f64 {
    samples
        .iter()
        .map(|&p| (g(p.rotate_thirds(1)) - g(p)).norm() / (1.0 + g(p).norm()))
        .fold(0.0, f64::max)
}

/// Structural and pointwise checks of the coefficients and source.
pub fn validate(frame: &LatticeFrame, medium: &MediumSpec, source: &[Shape], tol: f64) -> Result<()> {
    if !(medium.rho_b.is_finite() && medium.rho_b > 0.0) {
        return Err(Error::Config(format!("rho_b must be positive, got {}", medium.rho_b)));
    }
    if medium.rho_per.is_empty() {
        return Err(Error::Config("rho_per needs at least one shape".into()));
    }
    for s in medium.rho_per.iter().chain(&medium.rho_0).chain(source) {
        s.check()?;
    }
    for (name, list) in [("rho_0", &medium.rho_0[..]), ("f", source)] {
        if let Some(s) = list.iter().find(|s| !s.contained_in_cell(frame)) {
            return Err(Error::Validation(format!("support of {name} leaves the defect cell: {s:?}")));
        }
    }
    let samples = sample_points(frame, 24);
    let src = |p: Point| eval_sum(source, p);
    for (name, g) in [
        ("rho_per", &(|p| medium.rho_per(p)) as &dyn Fn(Point) -> c64),
        ("rho_0", &|p| medium.rho_0(p)),
        ("f", &src),
    ] {
        let defect = symmetry_defect(g, &samples);
        if defect > tol {
            return Err(Error::Validation(format!(
                "{name} is not invariant under the 2π/3 rotation (deviation {defect:.3e})"
            )));
        }
    }
    for &p in &samples {
        for (name, r) in [("rho_per", medium.rho_per(p)), ("rho_per + rho_0", medium.rho_interior(p))] {
            if r.im < medium.rho_b {
                return Err(Error::Validation(format!(
                    "Im {name} = {} < rho_b = {} at ({:.4}, {:.4})",
                    r.im, medium.rho_b, p.x, p.y
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> LatticeFrame {
        LatticeFrame::new(1.0).unwrap()
    }

    fn desk() -> (MediumSpec, Vec<Shape>) {
        (
            MediumSpec {
                rho_b: 1.0,
                rho_per: vec![
                    Shape::Constant { value: [1.0, 1.0] },
                    Shape::Disc { radius: 0.3, value: [1.0, 0.0] },
                ],
                rho_0: vec![Shape::Disc { radius: 0.3, value: [1.0, 0.0] }],
            },
            vec![Shape::Bump { radius: 0.5, amplitude: [1.0, 0.0] }],
        )
    }

    #[test]
    fn shape_values() {
        let o = Point::new(0.0, 0.0);
        let far = Point::new(0.9, 0.0);
        let (m, f) = desk();
        assert_eq!(m.rho_per(o), c64::new(2.0, 1.0));
        assert_eq!(m.rho_per(far), c64::new(1.0, 1.0));
        assert_eq!(m.rho_interior(o), c64::new(3.0, 1.0));
        assert_eq!(eval_sum(&f, o), c64::new(1.0, 0.0));
        assert_eq!(eval_sum(&f, far), c64::new(0.0, 0.0));
        let hex = Shape::Hexagon { side: 0.5, value: [1.0, 0.0] };
        assert_eq!(hex.eval(Point::new(0.49, 0.0)).re, 1.0);
        assert_eq!(hex.eval(Point::new(0.0, 0.44)).re, 0.0);
        let tri = Shape::Polygon {
            vertices: vec![[0.5, 0.0], [-0.25, 0.433], [-0.25, -0.433]],
            value: [2.0, 0.0],
        };
        assert_eq!(tri.eval(o).re, 2.0);
        assert_eq!(tri.eval(Point::new(0.45, 0.3)).re, 0.0);
        let ring = Shape::Ring { inner: 0.2, outer: 0.4, value: [0.0, 1.0] };
        assert_eq!(ring.eval(Point::new(0.3, 0.0)).im, 1.0);
        assert_eq!(ring.eval(Point::new(0.1, 0.0)).im, 0.0);
    }

    #[test]
    fn desk_medium_is_valid() {
        let (m, f) = desk();
        validate(&frame(), &m, &f, 1e-10).unwrap();
    }

    #[test]
    fn rejections() {
        let (m, f) = desk();
        let mut bad = m.clone();
        bad.rho_0 = vec![Shape::Disc { radius: 0.95, value: [1.0, 0.0] }];
        assert!(matches!(validate(&frame(), &bad, &f, 1e-10), Err(Error::Validation(_))));
        let lopsided = vec![Shape::Polygon {
            vertices: vec![[0.1, 0.1], [0.4, 0.1], [0.4, 0.4]],
            value: [1.0, 0.0],
        }];
        assert!(matches!(validate(&frame(), &m, &lopsided, 1e-10), Err(Error::Validation(_))));
        let mut weak = m.clone();
        weak.rho_per[0] = Shape::Constant { value: [1.0, 0.5] };
        assert!(matches!(validate(&frame(), &weak, &f, 1e-10), Err(Error::Validation(_))));
        let mut neg = m.clone();
        neg.rho_per.push(Shape::Disc { radius: -1.0, value: [0.0, 0.0] });
        assert!(matches!(validate(&frame(), &neg, &f, 1e-10), Err(Error::Config(_))));
        let unbounded = vec![Shape::Constant { value: [1.0, 0.0] }];
        assert!(validate(&frame(), &m, &unbounded, 1e-10).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let (m, _) = desk();
        let text = toml::to_string(&m).unwrap();
        assert!(text.contains("shape = \"disc\""));
        let back: MediumSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
