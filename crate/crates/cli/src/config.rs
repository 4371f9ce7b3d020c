//! Run configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nfpe::appendix::AppendixPotential;
use nfpe::coefficients::{CoefficientSet, ConstantPotential, Constants, Potential, QuadraticPotential, Tabulated};
use nfpe::grid::Grid;
use nfpe::operator::FluxScheme;
use nfpe::particles::Bandwidth;
use nfpe::resolvent::SolverOptions;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub coefficients: CoefficientsConfig,
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub run: Option<TimeConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumConfig>,
    #[serde(default)]
    pub particles: Option<ParticleConfig>,
    #[serde(default)]
    pub hypotheses: HypothesesConfig,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "preset")]
pub enum CoefficientsConfig {
    Linear {
        #[serde(default = "two")]
        m: f64,
    },
    SmoothNonlinear {
        gamma: f64,
        gamma1: f64,
        b0: f64,
        b_sup: f64,
        #[serde(default = "two")]
        m: f64,
    },
    /// Samples on `r >= 0` with `r[0] = 0`, interpolated by monotone cubics.
    Custom {
        r: Vec<f64>,
        beta: Vec<f64>,
        b: Vec<f64>,
        gamma: f64,
        gamma1: f64,
        b0: f64,
        b_sup: f64,
        #[serde(default = "two")]
        m: f64,
    },
}

fn two() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum PotentialConfig {
    /// The confining radial potential built from the coefficient constants.
    Confining {
        dimension: usize,
        #[serde(default = "one")]
        safety: f64,
    },
    /// `offset + scale |x|²`.
    Quadratic { dimension: usize, scale: f64, offset: f64 },
    Constant { dimension: usize, value: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub scheme: SchemeConfig,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    #[default]
    ExponentialFitting,
    Upwind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Fresh directory for this run; relative paths resolve against `NFPE_OUTPUT_ROOT` when set.
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum InitialConfig {
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// The equilibrium of the given mass.
    Equilibrium {
        #[serde(default = "one")]
        mass: f64,
    },
    /// A field written by this program.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub max_step_splits: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            max_halvings: s.max_halvings,
            max_step_splits: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub target_mass: f64,
    /// Also evolve `[initial]` over `[run]` and measure the distance to the equilibrium.
    #[serde(default)]
    pub convergence: bool,
    #[serde(default = "default_tol_conv")]
    pub tol_conv: f64,
}

fn default_tol_conv() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// `"silverman"` (the default) or a fixed positive width.
    #[serde(default)]
    pub bandwidth: Option<BandwidthConfig>,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Compare the final estimate with a PDE run of `[run].steps` steps.
    #[serde(default)]
    pub cross_check: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum BandwidthConfig {
    Fixed(f64),
    Named(BandwidthName),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthName {
    Silverman,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesConfig {
    /// Lattice points per axis on the grid box.
    pub samples: usize,
    pub r_max: f64,
    pub density_samples: usize,
    pub growth_radius: Option<f64>,
}

impl Default for HypothesesConfig {
    fn default() -> Self {
        Self {
            samples: 201,
            r_max: 10.0,
            density_samples: 2001,
            growth_radius: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every numeric field before anything is computed.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = self.potential.dimension();
        if !(1..=2).contains(&d) {
            return Err(invalid(format!("potential.dimension must be 1 or 2, got {d}")));
        }
        if self.grid.lo.len() != d || self.grid.hi.len() != d || self.grid.cells.len() != d {
            return Err(invalid(format!("grid.lo, grid.hi and grid.cells need {d} entries")));
        }
        match &self.potential {
            PotentialConfig::Confining { safety, .. } => positive("potential.safety", *safety)?,
            PotentialConfig::Quadratic { scale, offset, .. } => {
                positive("potential.scale", *scale)?;
                positive("potential.offset", *offset)?;
            }
            PotentialConfig::Constant { value, .. } => positive("potential.value", *value)?,
        }
        if let Some(InitialConfig::Gaussian { center, sigma, mass }) = &self.initial {
            if center.len() != d {
                return Err(invalid(format!("initial.center needs {d} entries")));
            }
            positive("initial.sigma", *sigma)?;
            positive("initial.mass", *mass)?;
        }
        if let Some(InitialConfig::Equilibrium { mass }) = &self.initial {
            positive("initial.mass", *mass)?;
        }
        if let Some(run) = &self.run {
            positive("run.t_final", run.t_final)?;
            if run.steps == 0 {
                return Err(invalid("run.steps must be >= 1"));
            }
            if run.snapshot_stride == 0 {
                return Err(invalid("run.snapshot_stride must be >= 1"));
            }
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter must be >= 1"));
        }
        if let Some(eq) = &self.equilibrium {
            positive("equilibrium.target_mass", eq.target_mass)?;
            positive("equilibrium.tol_conv", eq.tol_conv)?;
        }
        if let Some(p) = &self.particles {
            if p.n == 0 {
                return Err(invalid("particles.n must be >= 1"));
            }
            positive("particles.dt", p.dt)?;
            positive("particles.t_final", p.t_final)?;
            if let Some(BandwidthConfig::Fixed(h)) = p.bandwidth {
                positive("particles.bandwidth", h)?;
            }
            if !(p.noise_scale >= 0.0 && p.noise_scale.is_finite()) {
                return Err(invalid("particles.noise_scale must be finite and nonnegative"));
            }
        }
        if self.hypotheses.samples < 2 || self.hypotheses.density_samples < 2 {
            return Err(invalid("hypotheses sample counts must be >= 2"));
        }
        positive("hypotheses.r_max", self.hypotheses.r_max)?;
        Ok(())
    }

    /// The output directory after applying `NFPE_OUTPUT_ROOT`.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os("NFPE_OUTPUT_ROOT") {
            Some(root) if self.output.dir.is_relative() => PathBuf::from(root).join(&self.output.dir),
            _ => self.output.dir.clone(),
        }
    }

    /// The coefficient set without the potential (a flat placeholder is attached).
    fn base_coefficients(&self) -> Result<CoefficientSet, CliError> {
        let d = self.potential.dimension();
        let flat: Arc<dyn Potential> = Arc::new(ConstantPotential { dimension: d, value: 1.0 });
        let cs = match &self.coefficients {
            CoefficientsConfig::Linear { m } => CoefficientSet::new(
                Arc::new(nfpe::coefficients::Linear),
                flat,
                Constants { gamma: 1.0, gamma1: 1.0, b0: 1.0, b_sup: 1.0, m: *m },
            )?,
            CoefficientsConfig::SmoothNonlinear { gamma, gamma1, b0, b_sup, m } => CoefficientSet::smooth_nonlinear(flat, *gamma, *gamma1, *b0, *b_sup, *m)?,
            CoefficientsConfig::Custom { r, beta, b, gamma, gamma1, b0, b_sup, m } => {
                if r.len() != beta.len() || r.len() != b.len() {
                    return Err(invalid("coefficients.r, beta and b must have equal length"));
                }
                let tab = Tabulated::new(r.clone(), beta.clone(), b.clone())?;
                CoefficientSet::new(
                    Arc::new(tab),
                    flat,
                    Constants {
                        gamma: *gamma,
                        gamma1: *gamma1,
                        b0: *b0,
                        b_sup: *b_sup,
                        m: *m,
                    },
                )?
            }
        };
        Ok(cs)
    }

    pub fn confining_potential(&self) -> Result<Option<AppendixPotential>, CliError> {
        match &self.potential {
            PotentialConfig::Confining { safety, .. } => Ok(Some(AppendixPotential::for_coefficients(&self.base_coefficients()?, *safety)?)),
            _ => Ok(None),
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientSet, CliError> {
        let base = self.base_coefficients()?;
        let pot: Arc<dyn Potential> = match &self.potential {
            PotentialConfig::Confining { safety, .. } => Arc::new(AppendixPotential::for_coefficients(&base, *safety)?),
            PotentialConfig::Quadratic { dimension, scale, offset } => Arc::new(QuadraticPotential {
                dimension: *dimension,
                scale: *scale,
                offset: *offset,
            }),
            PotentialConfig::Constant { dimension, value } => Arc::new(ConstantPotential {
                dimension: *dimension,
                value: *value,
            }),
        };
        Ok(base.with_potential(pot))
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        Ok(Arc::new(Grid::new(self.grid.lo.clone(), self.grid.hi.clone(), self.grid.cells.clone())?))
    }

    pub fn scheme(&self) -> FluxScheme {
        match self.grid.scheme {
            SchemeConfig::ExponentialFitting => FluxScheme::ExponentialFitting,
            SchemeConfig::Upwind => FluxScheme::Upwind,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            max_halvings: self.solver.max_halvings,
            ..Default::default()
        }
    }

    pub fn require_run(&self) -> Result<&TimeConfig, CliError> {
        self.run.as_ref().ok_or_else(|| invalid("this command needs a [run] section"))
    }

    pub fn require_initial(&self) -> Result<&InitialConfig, CliError> {
        self.initial.as_ref().ok_or_else(|| invalid("this command needs an [initial] section"))
    }
}

impl PotentialConfig {
    pub fn dimension(&self) -> usize {
        match self {
            Self::Confining { dimension, .. } | Self::Quadratic { dimension, .. } | Self::Constant { dimension, .. } => *dimension,
        }
    }
}

impl ParticleConfig {
    pub fn bandwidth_rule(&self) -> Bandwidth {
        match self.bandwidth {
            Some(BandwidthConfig::Fixed(h)) => Bandwidth::Fixed(h),
            Some(BandwidthConfig::Named(BandwidthName::Silverman)) | None => Bandwidth::Silverman,
        }
    }
}
