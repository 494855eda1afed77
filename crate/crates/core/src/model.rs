//! Reaction systems, noise coefficients, and the preset catalog.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, EvalError, Expr};
use crate::poly::Poly;

/// A scalar function of the `m` species concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFunction {
    expr: Expr,
    arity: usize,
    polynomial: bool,
    expansion: Poly,
}

impl ScalarFunction {
    pub fn new(expr: Expr, arity: usize) -> Result<Self> {
        if let Some(v) = expr.max_var() {
            if v >= arity {
                return Err(Error::Contract(format!(
                    "expression `{expr}` references variable {} but arity is {arity}",
                    v + 1
                )));
            }
        }
        let expansion = Poly::expand(&expr, arity);
        let polynomial = expr.is_polynomial() && expansion.is_polynomial();
        Ok(ScalarFunction { expr, arity, polynomial, expansion })
    }

    pub fn parse(src: &str, labels: &[String], context: &str) -> Result<Self> {
        let expr = expr::parse(src, labels)
            .map_err(|source| Error::Parse { context: context.to_string(), source })?;
        ScalarFunction::new(expr, labels.len())
    }

    pub fn zero(arity: usize) -> Self {
        ScalarFunction::new(Expr::Const(0.0), arity).expect("constant has no variables")
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }

    pub fn expansion(&self) -> &Poly {
        &self.expansion
    }

    /// Identically zero after expansion.
    pub fn is_zero(&self) -> bool {
        self.expansion.is_zero()
    }

    #[inline]
    pub fn eval(&self, a: &[f64]) -> Result<f64, EvalError> {
        if a.len() != self.arity {
            return Err(EvalError::Arity { expected: self.arity, got: a.len() });
        }
        self.expr.eval(a)
    }

    pub fn render(&self, labels: &[String]) -> String {
        self.expr.render(labels)
    }
}

/// Marks presets whose reactions are known to fall outside triangular mass control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassControlFlag {
    NoneTriangular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionSystem {
    labels: Vec<String>,
    diffusion: Vec<f64>,
    reactions: Vec<ScalarFunction>,
    pub mass_control: Option<MassControlFlag>,
}

impl ReactionSystem {
    pub fn new(labels: Vec<String>, diffusion: Vec<f64>, reactions: Vec<ScalarFunction>) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(Error::Contract("a reaction system needs at least one species".into()));
        }
        if diffusion.len() != m || reactions.len() != m {
            return Err(Error::Contract(format!(
                "{m} species but {} diffusion coefficients and {} reactions",
                diffusion.len(),
                reactions.len()
            )));
        }
        if let Some(d) = diffusion.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::Contract(format!("diffusion coefficients must be positive, got {d}")));
        }
        if let Some(f) = reactions.iter().find(|f| f.arity() != m) {
            return Err(Error::Contract(format!("reaction arity {} != {m}", f.arity())));
        }
        Ok(ReactionSystem { labels, diffusion, reactions, mass_control: None })
    }

    pub fn species(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn reactions(&self) -> &[ScalarFunction] {
        &self.reactions
    }

    pub fn is_polynomial(&self) -> bool {
        self.reactions.iter().all(ScalarFunction::is_polynomial)
    }

    pub fn with_diffusion(mut self, diffusion: Vec<f64>) -> Result<Self> {
        let flag = self.mass_control;
        self = ReactionSystem::new(self.labels, diffusion, self.reactions)?;
        self.mass_control = flag;
        Ok(self)
    }

    /// `(f_1(a), ..., f_m(a))`.
    pub fn eval(&self, a: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.species()];
        self.eval_into(a, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, a: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, f) in out.iter_mut().zip(&self.reactions) {
            *o = f.eval(a)?;
        }
        Ok(())
    }
}

/// The `m x r` matrix of noise coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCoefficients {
    channels: usize,
    sigma: Vec<Vec<ScalarFunction>>,
}

impl NoiseCoefficients {
    pub fn new(channels: usize, sigma: Vec<Vec<ScalarFunction>>) -> Result<Self> {
        let m = sigma.len();
        for (i, row) in sigma.iter().enumerate() {
            if row.len() != channels {
                return Err(Error::Contract(format!("sigma row {i} has {} entries, expected {channels}", row.len())));
            }
            if let Some(f) = row.iter().find(|f| f.arity() != m) {
                return Err(Error::Contract(format!("sigma arity {} != {m}", f.arity())));
            }
        }
        Ok(NoiseCoefficients { channels, sigma })
    }

    /// `sigma_ik(a) = s * a_i`, one channel per species.
    pub fn diagonal(m: usize, amplitude: f64) -> Self {
        let sigma = (0..m)
            .map(|i| {
                (0..m)
                    .map(|k| {
                        if i == k && amplitude != 0.0 {
                            ScalarFunction::new(Expr::Const(amplitude) * Expr::Var(i), m).expect("valid arity")
                        } else {
                            ScalarFunction::zero(m)
                        }
                    })
                    .collect()
            })
            .collect();
        NoiseCoefficients { channels: m, sigma }
    }

    pub fn zero(m: usize, channels: usize) -> Self {
        NoiseCoefficients { channels, sigma: vec![vec![ScalarFunction::zero(m); channels]; m] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn species(&self) -> usize {
        self.sigma.len()
    }

    pub fn entry(&self, i: usize, k: usize) -> &ScalarFunction {
        &self.sigma[i][k]
    }

    pub fn rows(&self) -> &[Vec<ScalarFunction>] {
        &self.sigma
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().flatten().all(ScalarFunction::is_zero)
    }

    /// Row-major `m x r` evaluation into `out`.
    pub fn eval_into(&self, a: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let r = self.channels;
        for (i, row) in self.sigma.iter().enumerate() {
            for (k, s) in row.iter().enumerate() {
                out[i * r + k] = if s.is_zero() { 0.0 } else { s.eval(a)? };
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Preset {
    Brusselator {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "two")]
        beta: f64,
    },
    AbcReversible {
        #[serde(default = "two")]
        m1: f64,
        #[serde(default = "one")]
        m2: f64,
    },
    AbcdReversible {
        #[serde(default = "one")]
        k1: f64,
        #[serde(default = "one")]
        k2: f64,
    },
    Calcium,
    Prototype,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Preset> {
        Some(match name {
            "brusselator" => Preset::Brusselator { alpha: 1.0, beta: 2.0 },
            "abc_reversible" => Preset::AbcReversible { m1: 2.0, m2: 1.0 },
            "abcd_reversible" => Preset::AbcdReversible { k1: 1.0, k2: 1.0 },
            "calcium" => Preset::Calcium,
            "prototype" => Preset::Prototype,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Brusselator { .. } => "brusselator",
            Preset::AbcReversible { .. } => "abc_reversible",
            Preset::AbcdReversible { .. } => "abcd_reversible",
            Preset::Calcium => "calcium",
            Preset::Prototype => "prototype",
        }
    }

    /// Reaction terms and labels, as source strings.
    fn sources(&self) -> (Vec<&'static str>, Vec<String>) {
        match *self {
            Preset::Brusselator { alpha, beta } => (
                vec!["u1", "u2"],
                vec![format!("-u1*u2^2 + {beta}*u2"), format!("u1*u2^2 - ({beta} + 1)*u2 + {alpha}")],
            ),
            Preset::AbcReversible { m1, m2 } => {
                let fwd = format!("-{m1}*a*b + {m2}*c");
                (vec!["a", "b", "c"], vec![fwd.clone(), fwd, format!("{m1}*a*b - {m2}*c")])
            }
            Preset::AbcdReversible { k1, k2 } => {
                let fwd = format!("-{k1}*a*b + {k2}*c*d");
                let bwd = format!("{k1}*a*b - {k2}*c*d");
                (vec!["a", "b", "c", "d"], vec![fwd.clone(), fwd, bwd.clone(), bwd])
            }
            // u1^4/(1 + u1^4) lies in [0, 1) on the orthant; the checks treat
            // it as an opaque bounded factor and confirm the bound by sampling.
            Preset::Calcium => (
                vec!["u1", "u2", "u3", "u4", "u5"],
                vec![
                    "(1 + u4)*(1 - u1) - u1^4/(1 + u1^4)".into(),
                    "-u2 + u3".into(),
                    "-(1 + u1)*u3 + u2 + u4".into(),
                    "u1*u3 + u5 - (1 + u1)*u4".into(),
                    "u1*u4 - u5".into(),
                ],
            ),
            Preset::Prototype => (vec!["u1", "u2"], vec!["-u1*u2".into(), "u1*u2".into()]),
        }
    }

    fn validate(&self) -> Result<()> {
        let params: Vec<f64> = match *self {
            Preset::Brusselator { alpha, beta } => vec![alpha, beta],
            Preset::AbcReversible { m1, m2 } => vec![m1, m2],
            Preset::AbcdReversible { k1, k2 } => vec![k1, k2],
            Preset::Calcium | Preset::Prototype => vec![],
        };
        if params.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Contract(format!("preset {} needs positive parameters", self.name())));
        }
        Ok(())
    }

    /// Build the system (unit diffusion) with diagonal noise `s * a_i`.
    pub fn build(&self, amplitude: f64) -> Result<(ReactionSystem, NoiseCoefficients)> {
        self.validate()?;
        let (labels, sources) = self.sources();
        let labels: Vec<String> = labels.into_iter().map(String::from).collect();
        let m = labels.len();
        let reactions = sources
            .iter()
            .enumerate()
            .map(|(i, src)| ScalarFunction::parse(src, &labels, &format!("{} reaction {}", self.name(), i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let mut sys = ReactionSystem::new(labels, vec![1.0; m], reactions)?;
        if matches!(self, Preset::AbcdReversible { .. }) {
            sys.mass_control = Some(MassControlFlag::NoneTriangular);
        }
        Ok((sys, NoiseCoefficients::diagonal(m, amplitude)))
    }
}

/// Look up a preset by name with default parameters.
pub fn preset(name: &str, amplitude: f64) -> Result<(ReactionSystem, NoiseCoefficients)> {
    Preset::from_name(name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?
        .build(amplitude)
}

/// On-disk model definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub species: Vec<String>,
    pub diffusion: Vec<f64>,
    pub reactions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub r: usize,
    pub sigma: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl ModelFile {
    pub fn build(&self) -> Result<(ReactionSystem, NoiseCoefficients)> {
        let labels = &self.species;
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate species `{l}`")));
            }
            if expr::parse(l, std::slice::from_ref(l)) != Ok(Expr::Var(0)) {
                return Err(Error::Config(format!("species label `{l}` is not a valid identifier")));
            }
        }
        let m = labels.len();
        let reactions = self
            .reactions
            .iter()
            .enumerate()
            .map(|(i, src)| ScalarFunction::parse(src, labels, &format!("reactions[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let sys = ReactionSystem::new(labels.clone(), self.diffusion.clone(), reactions)?;
        let noise = match &self.noise {
            None => NoiseCoefficients::zero(m, m),
            Some(n) => {
                if n.sigma.len() != m {
                    return Err(Error::Config(format!("noise.sigma has {} rows, expected {m}", n.sigma.len())));
                }
                let sigma = n
                    .sigma
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(k, src)| ScalarFunction::parse(src, labels, &format!("noise.sigma[{i}][{k}]")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                NoiseCoefficients::new(n.r, sigma)?
            }
        };
        Ok((sys, noise))
    }
}
