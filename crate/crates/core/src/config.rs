//! TOML problem description.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interior::{ProblemConfig, Tolerances, DEFAULT_HORIZON};
use crate::medium::{MediumSpec, Shape};
use crate::oracle::DEFAULT_MAX_DOFS;

/// Version of the geometric conventions (cell numbering, Σ^0 period layout,
/// orientation of the rotation); part of every hash.
pub const CONVENTIONS_VERSION: &str = "hexdtn-conventions/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub lattice: LatticeSection,
    pub medium: MediumSpec,
    #[serde(default)]
    pub source: SourceSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub validation: ValidationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub d: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default)]
    pub f: Vec<Shape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub h: f64,
    pub n_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub horizon: i64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            horizon: DEFAULT_HORIZON,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSection {
    /// Rings of the truncated-lattice oracle.
    pub rings: usize,
    /// Refinement steps per convergence curve.
    pub steps: usize,
    pub max_dofs: usize,
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            rings: 8,
            steps: 1,
            max_dofs: DEFAULT_MAX_DOFS,
        }
    }
}

impl ConfigFile {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.problem().validate()?;
        if cfg.validation.rings < 2 {
            return Err(Error::Config("validation.rings must be at least 2".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> ProblemConfig {
        ProblemConfig {
            d: self.lattice.d,
            medium: self.medium.clone(),
            source: self.source.f.clone(),
            h: self.discretization.h,
            n_k: self.discretization.n_k,
            tolerances: self.tolerances,
            horizon: self.output.horizon,
        }
    }

    /// Hash of every numerical input.
    pub fn hash(&self) -> Result<[u8; 32]> {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        digest(&canonical)
    }
}

#[derive(Serialize)]
struct OperatorInputs<'a> {
    d: f64,
    rho_b: f64,
    rho_per: &'a [Shape],
    h: f64,
    n_k: usize,
}

/// Hash of the inputs that determine the per-k half-space operators.
pub fn operator_hash(config: &ProblemConfig) -> Result<[u8; 32]> {
    digest(&OperatorInputs {
        d: config.d,
        rho_b: config.medium.rho_b,
        rho_per: &config.medium.rho_per,
        h: config.h,
        n_k: config.n_k,
    })
}

fn digest<T: Serialize>(value: &T) -> Result<[u8; 32]> {
    // toml prints floats in shortest round-trip form, so the text is canonical.
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(CONVENTIONS_VERSION.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    Ok(h.finalize().into())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reference configuration used in the examples and the acceptance suite.
pub const DESK_CONFIG: &str = r#"[lattice]
d = 1.0

[medium]
rho_b = 1.0

[[medium.rho_per]]
shape = "constant"
value = [1.0, 1.0]

[[medium.rho_per]]
shape = "disc"
radius = 0.3
value = [1.0, 0.0]

[[medium.rho_0]]
shape = "disc"
radius = 0.3
value = [1.0, 0.0]

[[source.f]]
shape = "bump"
radius = 0.5
amplitude = [1.0, 0.0]

[discretization]
h = 0.125
n_k = 32

[tolerances]
dtd = 1e-6
symmetry = 1e-10
energy = 1e-8

[output]
dir = "out"
horizon = 4

[validation]
rings = 8
steps = 1
max_dofs = 2000000
"#;
