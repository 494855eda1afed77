use std::f64::consts::PI;

use massrd::noise::{
    check_kernel_assumptions, convolution_singularity, factorize, kernel_eval, sample_increment, CovarianceKernel,
    KernelVariant,
};
use massrd::rng::{channel_stream, path_streams};
use massrd::spectral::{BoundaryCondition, Domain, EigenBasis};

const SAMPLES: usize = 10_000;

fn basis(bc: BoundaryCondition, n: usize, k: usize) -> EigenBasis {
    EigenBasis::new(&Domain::interval(1.0, bc, n).unwrap(), k).unwrap()
}

fn draws(kernel: KernelVariant, b: &EigenBasis, dt: f64, seed: u64) -> Vec<Vec<f64>> {
    let fact = factorize(&CovarianceKernel::new(kernel, 1).unwrap(), b).unwrap();
    let mut rng = channel_stream(seed, 0, 0);
    (0..SAMPLES)
        .map(|_| {
            let mut out = vec![0.0; b.len()];
            sample_increment(&fact, dt, &mut rng, &mut out);
            out
        })
        .collect()
}

#[test]
fn white_increments_have_variance_dt() {
    let b = basis(BoundaryCondition::Neumann, 64, 32);
    let dt = 0.01;
    let xs = draws(KernelVariant::White, &b, dt, 1);
    for k in 0..b.len() {
        let var = xs.iter().map(|x| x[k] * x[k]).sum::<f64>() / SAMPLES as f64;
        assert!((var / dt - 1.0).abs() < 0.05, "mode {k}: {}", var / dt);
    }
}

#[test]
fn increment_means_vanish_at_clt_rate() {
    let b = basis(BoundaryCondition::Dirichlet, 64, 32);
    let dt = 0.01;
    for kernel in [KernelVariant::White, KernelVariant::Riesz { beta: 0.5 }, KernelVariant::Spectral { gamma: 0.3, theta: 1.0 }] {
        let xs = draws(kernel, &b, dt, 2);
        for k in 0..b.len() {
            let mean = xs.iter().map(|x| x[k]).sum::<f64>() / SAMPLES as f64;
            let sd = (xs.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (SAMPLES - 1) as f64).sqrt();
            assert!(mean.abs() <= 4.0 * sd / (SAMPLES as f64).sqrt(), "{kernel:?} mode {k}");
        }
    }
}

/// Empirical covariance of the increment field at two points against the
/// kernel itself.
#[test]
fn spectral_field_covariance_matches_kernel() {
    let b = basis(BoundaryCondition::Neumann, 64, 16);
    let kernel = CovarianceKernel::new(KernelVariant::Spectral { gamma: 0.4, theta: 1.0 }, 1).unwrap();
    let dt = 0.5;
    let xs = draws(kernel.variant, &b, dt, 3);
    let field = |c: &[f64], y: f64| (0..b.len()).map(|k| c[k] * b.phi_at(k, &[y])).sum::<f64>();
    for (y1, y2) in [(0.3, 0.3), (0.3, 0.35), (0.1, 0.8)] {
        let prods: Vec<f64> = xs.iter().map(|c| field(c, y1) * field(c, y2) / dt).collect();
        let mean = prods.iter().sum::<f64>() / SAMPLES as f64;
        let sd = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (SAMPLES - 1) as f64).sqrt();
        let exact = kernel_eval(&kernel, &b, &[y1], &[y2]);
        assert!((mean - exact).abs() <= 4.0 * sd / (SAMPLES as f64).sqrt(), "({y1}, {y2}): {mean} vs {exact}");
    }
}

#[test]
fn channels_are_uncorrelated() {
    let mut s = path_streams(5, 0, 2);
    let b = basis(BoundaryCondition::Neumann, 16, 8);
    let fact = factorize(&CovarianceKernel::new(KernelVariant::White, 1).unwrap(), &b).unwrap();
    let (mut a, mut c) = (vec![0.0; 8], vec![0.0; 8]);
    let mut cross = vec![0.0; 8];
    for _ in 0..SAMPLES {
        sample_increment(&fact, 1.0, &mut s[0], &mut a);
        sample_increment(&fact, 1.0, &mut s[1], &mut c);
        for k in 0..8 {
            cross[k] += a[k] * c[k] / SAMPLES as f64;
        }
    }
    assert!(cross.iter().all(|r| r.abs() < 4.0 / (SAMPLES as f64).sqrt()), "{cross:?}");
}

#[test]
fn factorizations_reproduce_their_gram_matrices() {
    for (kernel, dim) in [
        (KernelVariant::Riesz { beta: 0.5 }, 1),
        (KernelVariant::Riesz { beta: 0.9 }, 1),
        (KernelVariant::Spectral { gamma: 0.2, theta: 2.0 }, 1),
        (KernelVariant::Riesz { beta: 1.2 }, 2),
    ] {
        let domain = if dim == 1 {
            Domain::interval(1.0, BoundaryCondition::Dirichlet, 128).unwrap()
        } else {
            Domain::rectangle(1.0, 1.0, BoundaryCondition::Neumann, 12, 12).unwrap()
        };
        let b = EigenBasis::new(&domain, domain.default_modes().min(64)).unwrap();
        let fact = factorize(&CovarianceKernel::new(kernel, dim).unwrap(), &b).unwrap();
        let (implied, gram) = (fact.implied_covariance(), fact.gram());
        let scale = gram.iter().fold(0f64, |m, v| m.max(v.abs()));
        let err = implied.iter().zip(&gram).fold(0f64, |m, (a, g)| m.max((a - g).abs())) / scale;
        assert!(err < 1e-6, "{kernel:?}: {err:e}");
    }
}

#[test]
fn kernel_values() {
    let b = basis(BoundaryCondition::Neumann, 64, 32);
    let riesz = CovarianceKernel::new(KernelVariant::Riesz { beta: 0.7 }, 1).unwrap();
    assert!((kernel_eval(&riesz, &b, &[0.2], &[0.7]) - 2f64.powf(0.7)).abs() < 1e-12);
    assert!(kernel_eval(&riesz, &b, &[0.2], &[0.2]).is_infinite());
    let white = CovarianceKernel::new(KernelVariant::White, 1).unwrap();
    assert_eq!(kernel_eval(&white, &b, &[0.5 / 64.0], &[0.5 / 64.0]), 64.0);
    assert_eq!(kernel_eval(&white, &b, &[0.5 / 64.0], &[1.5 / 64.0]), 0.0);
    let spectral = CovarianceKernel::new(KernelVariant::Spectral { gamma: 0.3, theta: 0.5 }, 1).unwrap();
    assert_eq!(kernel_eval(&spectral, &b, &[0.1], &[0.6]), kernel_eval(&spectral, &b, &[0.6], &[0.1]));
}

/// Away from the boundary, `int int G G L` at small `t` is the free-space
/// Gaussian integral: `(8 pi t)^(-1/2)` for white noise and
/// `(4t)^(-beta/2) 2^(-beta/2) Gamma((1-beta)/2) / sqrt(pi)` for Riesz.
#[test]
fn convolution_singularity_matches_gaussian_integrals() {
    let b = basis(BoundaryCondition::Dirichlet, 256, 64);
    let t = 2e-3;
    let white = factorize(&CovarianceKernel::new(KernelVariant::White, 1).unwrap(), &b).unwrap();
    let exact = (8.0 * PI * t).powf(-0.5);
    let got = convolution_singularity(&b, &white, 1.0, t);
    assert!((got / exact - 1.0).abs() < 0.01, "white {got} vs {exact}");
    for beta in [0.5, 0.8] {
        let riesz = factorize(&CovarianceKernel::new(KernelVariant::Riesz { beta }, 1).unwrap(), &b).unwrap();
        let exact = (4.0 * t).powf(-beta / 2.0) * 2f64.powf(-beta / 2.0) * libm::tgamma((1.0 - beta) / 2.0) / PI.sqrt();
        let got = convolution_singularity(&b, &riesz, 1.0, t);
        assert!((got / exact - 1.0).abs() < 0.03, "riesz {beta}: {got} vs {exact}");
    }
}

#[test]
fn measured_exponents_match_declared() {
    for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
        let b = basis(bc, 256, 64);
        let times: Vec<f64> = (0..6).map(|i| 2e-3 * 10f64.powf(i as f64 / 5.0)).collect();
        for (variant, eta) in [
            (KernelVariant::White, 0.5),
            (KernelVariant::Riesz { beta: 0.5 }, 0.25),
            (KernelVariant::Riesz { beta: 0.8 }, 0.4),
        ] {
            let kernel = CovarianceKernel::new(variant, 1).unwrap();
            let fact = factorize(&kernel, &b).unwrap();
            let r = check_kernel_assumptions(&kernel, &b, &fact, 1.0, &times).unwrap();
            assert_eq!(r.eta_declared, eta);
            assert!((r.eta_hat - eta).abs() < 0.1, "{bc:?} {variant:?}: {}", r.eta_hat);
            assert!(r.positivity.passed());
            assert!(r.eta_conservative);
        }
    }
}

#[test]
fn riesz_integrability_matches_closed_form() {
    let b = basis(BoundaryCondition::Neumann, 256, 64);
    let beta = 0.5;
    let kernel = CovarianceKernel::new(KernelVariant::Riesz { beta }, 1).unwrap();
    let fact = factorize(&kernel, &b).unwrap();
    let r = check_kernel_assumptions(&kernel, &b, &fact, 1.0, &[1e-2, 2e-2, 4e-2]).unwrap();
    // sup over y of int_0^1 |y - z|^-beta dz, attained at y = 1/2
    let exact = 2.0 * 0.5f64.powf(1.0 - beta) / (1.0 - beta);
    assert!((r.integrability_sup / exact - 1.0).abs() < 0.01, "{}", r.integrability_sup);
}
