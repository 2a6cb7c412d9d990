use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{Cutoff, DomainMap, FieldTemplate, Mode, ReferenceDomain, Vec3};
use crate::pde::{CgSettings, NewtonSettings, PbeCoefficients};
use crate::smolyak::Rule;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryBlock,
    pub coefficients: CoefficientsBlock,
    pub charges: ChargesBlock,
    pub stochastic: StochasticBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub sparse_grid: SparseGridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub bounds: Option<BoundsBlock>,
    #[serde(default)]
    pub region: Option<RegionBlock>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    /// Half edge of the cubic box in Å.
    pub box_half: f64,
    #[serde(default)]
    pub center: [f64; 3],
    pub inner_radius: f64,
    pub outer_radius: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsBlock {
    pub eps: [f64; 3],
    pub kappa2: [f64; 3],
    #[serde(default)]
    pub boundary_value: f64,
    #[serde(default)]
    pub interface_jump: [f64; 2],
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineCharge {
    pub position: [f64; 3],
    pub charge: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargesBlock {
    #[serde(default)]
    pub inline: Vec<InlineCharge>,
    pub pqr: Option<PathBuf>,
    /// Gaussian width in Å.
    pub width: Option<f64>,
    /// Minimum distance in Å between a charge and the box boundary after
    /// recentring and shifting.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    4.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticBlock {
    pub n: usize,
    /// Shift amplitudes `alpha_k` in Å, nonincreasing.
    pub alpha: Vec<f64>,
    /// Cutoff plateau half-width; defaults to the outer radius.
    pub plateau: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { n: 33 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseGridBlock {
    pub rule: String,
    pub levels: Vec<usize>,
    pub reference: usize,
}

impl Default for SparseGridBlock {
    fn default() -> Self {
        Self { rule: "SM".into(), levels: vec![1, 2, 3, 4], reference: 6 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Worker threads for knot solves; 0 uses every core.
    pub threads: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let n = NewtonSettings::default();
        Self { newton_tol: n.tol, newton_max_iter: n.max_iter, cg_tol: n.cg.tol, cg_max_iter: n.cg.max_iter, threads: 0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    /// Wall time breaks bitwise reproducibility of the CSV, so it is opt-in.
    pub record_wall_time: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { csv: "study.csv".into(), svg: None, record_wall_time: false }
    }
}

/// Inputs of the perturbation bounds. Missing entries are derived from the
/// run where possible.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub b1: Option<f64>,
    pub binf: Option<f64>,
    #[serde(default)]
    pub y0_inf: f64,
    pub y_inf: Option<f64>,
    pub c_max: Option<f64>,
    pub u0_norm: Option<f64>,
    pub u_norm: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_trials")]
    pub algebra_trials: usize,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        Self {
            b1: None,
            binf: None,
            y0_inf: 0.0,
            y_inf: None,
            c_max: None,
            u0_norm: None,
            u_norm: None,
            samples: default_samples(),
            algebra_trials: default_trials(),
        }
    }
}

fn default_samples() -> usize {
    1000
}

fn default_trials() -> usize {
    8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBlock {
    pub m: Option<f64>,
    pub a: Option<f64>,
    pub r: f64,
    /// Sparse-grid levels whose bounds are reported; knot counts follow the rule.
    #[serde(default)]
    pub levels: Vec<usize>,
    pub m_tilde: Option<f64>,
    /// Level of the study interpolant sampled for `M̃` when `m_tilde` is absent.
    #[serde(default = "default_m_tilde_level")]
    pub m_tilde_level: usize,
    #[serde(default = "default_angles")]
    pub angles: usize,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
}

fn default_m_tilde_level() -> usize {
    2
}

fn default_angles() -> usize {
    64
}

fn default_power_iterations() -> usize {
    20
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.stochastic;
        if !(1..=3).contains(&s.n) {
            return Err(Error::Config(format!("stochastic.n must be 1, 2 or 3, got {}", s.n)));
        }
        if s.alpha.len() != s.n {
            return Err(Error::Config(format!("stochastic.alpha needs {} entries, got {}", s.n, s.alpha.len())));
        }
        if s.alpha.iter().any(|a| !(*a >= 0.0)) || s.alpha.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("stochastic.alpha must be nonnegative and nonincreasing".into()));
        }
        let sg = &self.sparse_grid;
        sg.rule.parse::<Rule>()?;
        if let Some(&w) = sg.levels.iter().find(|&&w| w >= sg.reference) {
            return Err(Error::Config(format!("reference level {} must exceed study level {w}", sg.reference)));
        }
        if self.grid.n < 5 {
            return Err(Error::Config("grid.n must be at least 5".into()));
        }
        if self.charges.inline.is_empty() && self.charges.pqr.is_none() {
            return Err(Error::Config("charges need an inline list or a pqr path".into()));
        }
        self.domain()?;
        Ok(())
    }

    pub fn rule(&self) -> Rule {
        self.sparse_grid.rule.parse().expect("validated")
    }

    pub fn domain(&self) -> Result<ReferenceDomain> {
        let g = &self.geometry;
        let c = Vec3::from(g.center);
        ReferenceDomain::new(
            c - Vec3::repeat(g.box_half),
            c + Vec3::repeat(g.box_half),
            c,
            g.inner_radius,
            g.outer_radius,
        )
    }

    /// Shift model: mode `k` moves the plateau rigidly by `sqrt(3) alpha_k y_k`
    /// along axis `k`, and the cutoff decays to zero at the box boundary.
    pub fn shift_map(&self) -> Result<DomainMap> {
        let g = &self.geometry;
        let plateau = self.stochastic.plateau.unwrap_or(g.outer_radius);
        if !(plateau >= g.outer_radius && plateau < g.box_half) {
            return Err(Error::Config(format!(
                "cutoff plateau {plateau} must lie in [outer_radius, box_half)"
            )));
        }
        let cutoff = Cutoff { center: Vec3::from(g.center), plateau, width: g.box_half - plateau };
        let modes = self
            .stochastic
            .alpha
            .iter()
            .enumerate()
            .map(|(k, a)| Mode::new(3.0 * a * a, FieldTemplate::CutoffShift { axis: k, cutoff }))
            .collect();
        DomainMap::new(modes)
    }

    pub fn coefficients(&self) -> PbeCoefficients {
        let c = &self.coefficients;
        PbeCoefficients {
            eps: c.eps,
            kappa2: c.kappa2,
            charges: Vec::new(),
            charge_width: self.charges.width,
            boundary_value: c.boundary_value,
            interface_jump: c.interface_jump,
        }
    }

    pub fn newton_settings(&self) -> NewtonSettings {
        let s = &self.solver;
        NewtonSettings {
            tol: s.newton_tol,
            max_iter: s.newton_max_iter,
            cg: CgSettings { tol: s.cg_tol, max_iter: s.cg_max_iter },
            ..NewtonSettings::default()
        }
    }
}
