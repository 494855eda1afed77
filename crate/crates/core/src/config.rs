//! The `massrd/1` run configuration and its validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checks::{certify, AssumptionSuite, MassControlCertificate, Strategy};
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::model::{ModelFile, NoiseCoefficients, Preset, ReactionSystem};
use crate::noise::{check_kernel_assumptions, factorize, CovarianceKernel, KernelReport, KernelVariant};
use crate::solver::SimulationConfig;
use crate::spectral::{BoundaryCondition, Domain, EigenBasis};
use crate::truncation::TruncationLevel;

pub const SCHEMA: &str = "massrd/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    /// `{"preset": {"name": "brusselator", "alpha": 1, "beta": 2}}`
    Preset(Preset),
    /// Path to a model file, relative to the config file.
    File(PathBuf),
    Inline(ModelFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// `[L]` or `[Lx, Ly]`.
    pub extents: Vec<f64>,
    pub grid: Vec<usize>,
    pub bc: BoundaryCondition,
    /// Retained modes; defaults to the largest admissible count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

fn default_p() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: ModelSpec,
    /// Amplitude `s` of the default diagonal noise `s a_i`; ignored when the
    /// model file defines its own noise.
    #[serde(default)]
    pub noise_amplitude: f64,
    /// Overrides the model's diffusion coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<f64>>,
    pub domain: DomainSpec,
    pub kernel: KernelVariant,
    pub truncation: f64,
    /// One expression per species in `x` (and `y`).
    pub initial: Vec<String>,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_stride: Option<usize>,
    #[serde(default = "default_p")]
    pub moment_p: f64,
}

/// A validated, ready-to-run configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub run: RunConfig,
    pub kernel: CovarianceKernel,
    pub simulation: SimulationConfig,
    pub certificate: Option<MassControlCertificate>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA {
            return Err(Error::Config(format!("unsupported schema `{}` (expected `{SCHEMA}`)", cfg.schema)));
        }
        Ok(cfg)
    }

    /// Read a config file; a model file path is resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::from_json(&std::fs::read_to_string(path)?)?;
        if let ModelSpec::File(p) = &cfg.model {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.model = ModelSpec::File(base.join(p));
            }
        }
        Ok(cfg)
    }

    /// Replace a file model by its contents so the config is self-contained.
    pub fn inlined(&self) -> Result<Self> {
        let mut cfg = self.clone();
        if let ModelSpec::File(p) = &self.model {
            let text = std::fs::read_to_string(p)?;
            cfg.model = ModelSpec::Inline(serde_json::from_str(&text)?);
        }
        Ok(cfg)
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.domain.extents.clone(), self.domain.bc, self.domain.grid.clone())
    }

    /// System, noise and optional supplied certificate.
    pub fn model(&self) -> Result<(ReactionSystem, NoiseCoefficients, Option<MassControlCertificate>)> {
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(Error::Config(format!("noise amplitude must be nonnegative, got {}", self.noise_amplitude)));
        }
        let (sys, noise, cert) = match &self.model {
            ModelSpec::Preset(p) => {
                let (s, n) = p.build(self.noise_amplitude)?;
                (s, n, None)
            }
            ModelSpec::File(path) => {
                let text = std::fs::read_to_string(path)?;
                let file: ModelFile = serde_json::from_str(&text)?;
                self.model_from_file(&file)?
            }
            ModelSpec::Inline(file) => self.model_from_file(file)?,
        };
        let sys = match &self.diffusion {
            Some(d) => sys.with_diffusion(d.clone())?,
            None => sys,
        };
        Ok((sys, noise, cert))
    }

    fn model_from_file(
        &self,
        file: &ModelFile,
    ) -> Result<(ReactionSystem, NoiseCoefficients, Option<MassControlCertificate>)> {
        let (sys, noise) = file.build()?;
        let noise = if file.noise.is_none() {
            NoiseCoefficients::diagonal(sys.species(), self.noise_amplitude)
        } else {
            noise
        };
        let cert = match &file.certificate {
            None => None,
            Some(c) => Some(match &c.order {
                Some(o) => MassControlCertificate::with_order(c.p.clone(), c.c.clone(), o.clone())?,
                None => MassControlCertificate::new(c.p.clone(), c.c.clone())?,
            }),
        };
        Ok((sys, noise, cert))
    }

    /// Build the basis, factorization and initial data. Does not run the
    /// assumption checks (see [`validate`]).
    pub fn prepare(&self) -> Result<Prepared> {
        let (sys, noise, certificate) = self.model()?;
        let domain = self.domain()?;
        let modes = self.domain.modes.unwrap_or_else(|| domain.default_modes());
        let basis = EigenBasis::new(&domain, modes)?;
        let kernel = CovarianceKernel::new(self.kernel, domain.dim())?;
        let factorization = factorize(&kernel, &basis)?;
        if self.initial.len() != sys.species() {
            return Err(Error::Config(format!(
                "{} initial expressions for {} species",
                self.initial.len(),
                sys.species()
            )));
        }
        let initial = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, src)| initial_field(src, &domain, &format!("initial[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let simulation = SimulationConfig {
            basis: Arc::new(basis),
            system: Arc::new(sys),
            noise: Arc::new(noise),
            factorization: Arc::new(factorization),
            truncation: TruncationLevel::new(self.truncation).map_err(|e| Error::Config(e.to_string()))?,
            initial,
            horizon: self.horizon,
            dt: self.dt,
            seed: self.seed,
            dump_stride: self.dump_stride,
            moment_p: self.moment_p,
        };
        simulation.validate()?;
        Ok(Prepared { run: self.clone(), kernel, simulation, certificate })
    }
}

/// Evaluate an initial-data expression in `x` (and `y`) at the cell centers.
pub fn initial_field(src: &str, domain: &Domain, context: &str) -> Result<Vec<f64>> {
    let names: Vec<String> = ["x", "y"][..domain.dim()].iter().map(|s| s.to_string()).collect();
    let e: Expr = expr::parse(src, &names).map_err(|source| Error::Parse { context: context.into(), source })?;
    (0..domain.points()).map(|j| e.eval(&domain.point(j)).map_err(Error::from)).collect()
}

/// Six geometric times over one decade for the convolution-exponent fit,
/// starting when the top retained mode is damped by `e^-10`, so the
/// truncated series still resolves the kernel at every fitted time.
pub fn kernel_check_times(basis: &EigenBasis, diffusivity: f64) -> Vec<f64> {
    let alpha_max = basis.modes().iter().map(|m| m.alpha).fold(0.0, f64::max);
    let t0 = (10.0 / (diffusivity * alpha_max)).min(0.1);
    (0..6).map(|i| t0 * 10f64.powf(i as f64 / 5.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub assumptions: AssumptionSuite,
    pub kernel: KernelReport,
    /// Warnings that do not fail validation.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.assumptions.passed() && self.kernel.positivity.passed() && self.kernel.eta_conservative
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .assumptions
            .failures()
            .map(|r| {
                let mut s = format!("{:?}", r.assumption);
                if !r.note.is_empty() {
                    s.push_str(&format!(": {}", r.note));
                }
                s
            })
            .collect();
        if !self.kernel.positivity.passed() {
            out.push(format!("kernel positivity (min relative value {:.3e})", self.kernel.min_relative));
        }
        if !self.kernel.eta_conservative {
            out.push(format!(
                "kernel exponent: measured {:.3} exceeds declared {:.3} + 0.1",
                self.kernel.eta_hat, self.kernel.eta_declared
            ));
        }
        out
    }
}

/// Run every structural and kernel check for a prepared configuration.
pub fn validate(prep: &Prepared) -> Result<ValidationReport> {
    let sim = &prep.simulation;
    let assumptions = certify(&sim.system, &sim.noise, prep.certificate.as_ref(), &Strategy::auto())?;
    let dmin = sim.system.diffusion().iter().cloned().fold(f64::INFINITY, f64::min);
    let kernel = check_kernel_assumptions(&prep.kernel, &sim.basis, &sim.factorization, dmin, &kernel_check_times(&sim.basis, dmin))?;
    let mut warnings = Vec::new();
    if sim.noise.is_zero() {
        warnings.push("noise amplitude is zero: runs are deterministic".into());
    }
    let d = sim.basis.domain().dim();
    let record = crate::montecarlo::ExponentRecord::new(prep.run.moment_p, kernel.eta_declared.max(kernel.eta_hat), d);
    if !record.hypothesis_ok {
        warnings.push(format!(
            "moment exponent p = {} violates (d+2)/p + d/(p-2) < 1 - eta: {:.3} >= {:.3}",
            record.p, record.hypothesis_lhs, record.hypothesis_rhs
        ));
    }
    Ok(ValidationReport { assumptions, kernel, warnings })
}
