#![allow(dead_code)]

use std::sync::Arc;

use massrd::model::{NoiseCoefficients, ReactionSystem, ScalarFunction};
use massrd::noise::{factorize, CovarianceKernel, KernelVariant};
use massrd::solver::SimulationConfig;
use massrd::spectral::{BoundaryCondition, Domain, EigenBasis};
use massrd::truncation::TruncationLevel;

pub fn labels(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("u{i}")).collect()
}

pub fn system(reactions: &[&str]) -> ReactionSystem {
    let l = labels(reactions.len());
    let fs = reactions.iter().map(|s| ScalarFunction::parse(s, &l, "reaction").unwrap()).collect();
    ReactionSystem::new(l.clone(), vec![1.0; l.len()], fs).unwrap()
}

/// Diagonal noise, one channel per species.
pub fn diagonal_noise(entries: &[&str]) -> NoiseCoefficients {
    let m = entries.len();
    let l = labels(m);
    let rows = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    if i == k {
                        ScalarFunction::parse(entries[i], &l, "sigma").unwrap()
                    } else {
                        ScalarFunction::zero(m)
                    }
                })
                .collect()
        })
        .collect();
    NoiseCoefficients::new(m, rows).unwrap()
}

pub struct Builder {
    pub bc: BoundaryCondition,
    pub n: usize,
    pub k: usize,
    pub kernel: KernelVariant,
    pub truncation: f64,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub stride: Option<usize>,
    pub p: f64,
}

impl Default for Builder {
    fn default() -> Self {
        Builder {
            bc: BoundaryCondition::Neumann,
            n: 64,
            k: 32,
            kernel: KernelVariant::White,
            truncation: 1e9,
            horizon: 0.1,
            dt: 1e-3,
            seed: 7,
            stride: None,
            p: 8.0,
        }
    }
}

impl Builder {
    pub fn domain(&self) -> Domain {
        Domain::interval(1.0, self.bc, self.n).unwrap()
    }

    pub fn build(&self, sys: ReactionSystem, noise: NoiseCoefficients, initial: Vec<Vec<f64>>) -> SimulationConfig {
        let domain = self.domain();
        let basis = EigenBasis::new(&domain, self.k).unwrap();
        let kernel = CovarianceKernel::new(self.kernel, 1).unwrap();
        let fact = factorize(&kernel, &basis).unwrap();
        SimulationConfig {
            basis: Arc::new(basis),
            system: Arc::new(sys),
            noise: Arc::new(noise),
            factorization: Arc::new(fact),
            truncation: TruncationLevel::new(self.truncation).unwrap(),
            initial,
            horizon: self.horizon,
            dt: self.dt,
            seed: self.seed,
            dump_stride: self.stride,
            moment_p: self.p,
        }
    }

    /// Grid samples of `g` at the cell centers.
    pub fn field(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let d = self.domain();
        (0..d.points()).map(|j| g(d.point(j)[0])).collect()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
