//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Heavy ensembles; run with `cargo test --test acceptance` (optimized test profile).

use std::error::Error as StdError;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use massrd::checks::{certify, Assumption, AssumptionSuite, Strategy, Verdict};
use massrd::config::{kernel_check_times, RunConfig};
use massrd::model::{preset, NoiseCoefficients, ReactionSystem, ScalarFunction};
use massrd::montecarlo::{estimate_moments, holder_ensemble, run_paths, EnsembleOptions};
use massrd::noise::{check_kernel_assumptions, factorize, CovarianceKernel, KernelVariant};
use massrd::solver::{continue_path, initial_state, simulate_path, step, PathState, SimulationConfig};
use massrd::spectral::{verify_kernel_power_bound, verify_kernel_singularity, BoundaryCondition, Domain, EigenBasis};
use massrd::truncation::TruncationLevel;
use serde_json::Value;

type Outcome = Result<(bool, String), Box<dyn StdError>>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Result<RunConfig, Box<dyn StdError>> {
    let mut run = RunConfig::load(&configs().join(name))?;
    run.dump_stride = None;
    Ok(run)
}

fn simulation(run: &RunConfig) -> Result<SimulationConfig, Box<dyn StdError>> {
    Ok(run.prepare()?.simulation)
}

fn level(n: f64) -> TruncationLevel {
    TruncationLevel::new(n).unwrap()
}

// 1. Assumption certification

fn suite(sys: &ReactionSystem, noise: &NoiseCoefficients) -> Result<AssumptionSuite, Box<dyn StdError>> {
    Ok(certify(sys, noise, None, &Strategy::auto())?)
}

fn diagonal_model(reactions: &[&str], sigma: &[&str]) -> Result<(ReactionSystem, NoiseCoefficients), Box<dyn StdError>> {
    let labels: Vec<String> = (1..=reactions.len()).map(|i| format!("u{i}")).collect();
    let m = labels.len();
    let fs = reactions.iter().map(|s| ScalarFunction::parse(s, &labels, "f")).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for i in 0..m {
        let mut row = Vec::new();
        for k in 0..m {
            row.push(if i == k { ScalarFunction::parse(sigma[i], &labels, "sigma")? } else { ScalarFunction::zero(m) });
        }
        rows.push(row);
    }
    Ok((ReactionSystem::new(labels.clone(), vec![1.0; m], fs)?, NoiseCoefficients::new(m, rows)?))
}

fn certification() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["brusselator", "prototype", "abc_reversible"] {
        let (sys, noise) = preset(name, 0.1)?;
        let s = suite(&sys, &noise)?;
        ok &= s.verdict() == Verdict::PassExact && s.reports.len() == 5;
        notes.push(format!("{name} {:?}", s.verdict()));
    }
    let (sys, noise) = preset("abcd_reversible", 0.1)?;
    let s = suite(&sys, &noise)?;
    let failed: Vec<_> = s.failures().collect();
    let abcd = failed.len() == 1
        && failed[0].assumption == Assumption::TriangularMassControl
        && failed[0].note.contains("no triangular certificate found");
    ok &= abcd;
    notes.push(format!("abcd_reversible rejected: {abcd}"));
    let controls = [
        (diagonal_model(&["u2 - 1", "u1"], &["u1", "u2"])?, Assumption::Quasipositivity),
        (diagonal_model(&["u1^2"], &["u1"])?, Assumption::TriangularMassControl),
        (diagonal_model(&["-u1"], &["1"])?, Assumption::SigmaVanishing),
        (diagonal_model(&["-u1"], &["u1^2"])?, Assumption::SigmaLinearGrowth),
    ];
    let mut caught = 0;
    for ((sys, noise), broken) in &controls {
        caught += suite(sys, noise)?.failures().any(|r| r.assumption == *broken) as usize;
    }
    ok &= caught == controls.len();
    notes.push(format!("negative controls caught {caught}/{}", controls.len()));
    Ok((ok, notes.join(", ")))
}

// 2. Heat-kernel identities

fn heat_kernel() -> Outcome {
    let n = 256;
    let b = EigenBasis::new(&Domain::interval(1.0, BoundaryCondition::Neumann, n)?, 64)?;
    let w = 1.0 / n as f64;

    let mut mass_err = 0f64;
    for t in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let g = b.heat_kernel_matrix(1.0, t)?;
        for row in g.chunks(n) {
            mass_err = mass_err.max((w * row.iter().sum::<f64>() - 1.0).abs());
        }
    }

    // G(s + t) against the quadrature composition int G(s, x, z) G(t, z, y) dz
    let (s, t) = (2e-3, 5e-3);
    let (gs, gt, gst) = (b.heat_kernel_matrix(1.0, s)?, b.heat_kernel_matrix(1.0, t)?, b.heat_kernel_matrix(1.0, s + t)?);
    let scale = gst.iter().fold(0f64, |m, v| m.max(v.abs()));
    let mut semigroup_err = 0f64;
    for i in 0..n {
        for j in 0..n {
            let composed: f64 = (0..n).map(|z| gs[i * n + z] * gt[z * n + j]).sum::<f64>() * w;
            semigroup_err = semigroup_err.max((composed - gst[i * n + j]).abs() / scale);
        }
    }
    let f: Vec<f64> = (0..n).map(|j| 1.0 + (PI * (j as f64 + 0.5) * w).cos() + 0.3 * (7.0 * PI * (j as f64 + 0.5) * w).cos()).collect();
    let twice = b.semigroup_apply(1.0, t, &b.semigroup_apply(1.0, s, &f)?)?;
    let once = b.semigroup_apply(1.0, s + t, &f)?;
    let field_err = twice.iter().zip(&once).fold(0f64, |m, (a, c)| m.max((a - c).abs()));
    semigroup_err = semigroup_err.max(field_err);

    let times = kernel_check_times(&b, 1.0);
    let sing = verify_kernel_singularity(&b, 1.0, &times)?;
    let power = verify_kernel_power_bound(&b, 1.0, &times, 6.0)?;
    let target = -1.0 / (2.0 * 5.0);
    let ok = mass_err < 1e-8
        && semigroup_err < 1e-6
        && (sing.slope + 0.5).abs() <= 0.1
        && (power.slope - target).abs() <= 0.05;
    Ok((
        ok,
        format!(
            "|int G - 1| = {mass_err:.1e}, semigroup error {semigroup_err:.1e}, singularity slope {:.4}, power-bound slope {:.4} (target {target})",
            sing.slope, power.slope
        ),
    ))
}

// 3. Noise kernel exponents

/// Free-space Gaussian value of `int int G G L` at an interior point.
fn gaussian_oracle(variant: KernelVariant, t: f64) -> f64 {
    match variant {
        KernelVariant::White => (8.0 * PI * t).powf(-0.5),
        KernelVariant::Riesz { beta } => {
            (4.0 * t).powf(-beta / 2.0) * 2f64.powf(-beta / 2.0) * libm::tgamma((1.0 - beta) / 2.0) / PI.sqrt()
        }
        KernelVariant::Spectral { .. } => f64::NAN,
    }
}

fn kernel_exponents() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let cases = [
        (KernelVariant::White, 0.5),
        (KernelVariant::Riesz { beta: 0.5 }, 0.25),
        (KernelVariant::Riesz { beta: 0.8 }, 0.4),
    ];
    for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
        let b = EigenBasis::new(&Domain::interval(1.0, bc, 256)?, 64)?;
        let times = kernel_check_times(&b, 1.0);
        for (variant, eta) in cases {
            let kernel = CovarianceKernel::new(variant, 1)?;
            let fact = factorize(&kernel, &b)?;
            let r = check_kernel_assumptions(&kernel, &b, &fact, 1.0, &times)?;
            ok &= (r.eta_hat - eta).abs() <= 0.1;
            let mut note = format!("{bc:?} {} eta {:.3}/{eta}", r.kernel, r.eta_hat);
            // Dirichlet walls only lower the kernel, so the supremum is interior.
            if bc == BoundaryCondition::Dirichlet {
                let dev = times
                    .iter()
                    .zip(&r.convolution)
                    .fold(0f64, |m, (&t, &c)| m.max((c / gaussian_oracle(variant, t) - 1.0).abs()));
                ok &= dev < 0.05;
                note += &format!(" (oracle dev {dev:.1e})");
            }
            notes.push(note);
        }
    }
    let b = EigenBasis::new(&Domain::interval(1.0, BoundaryCondition::Dirichlet, 256)?, 64)?;
    let mut round_trip = 0f64;
    for variant in [KernelVariant::Riesz { beta: 0.5 }, KernelVariant::Riesz { beta: 0.8 }, KernelVariant::Spectral { gamma: 0.3, theta: 1.0 }] {
        let fact = factorize(&CovarianceKernel::new(variant, 1)?, &b)?;
        let (implied, gram) = (fact.implied_covariance(), fact.gram());
        let scale = gram.iter().fold(0f64, |m, v| m.max(v.abs()));
        round_trip = round_trip.max(implied.iter().zip(&gram).fold(0f64, |m, (a, g)| m.max((a - g).abs())) / scale);
    }
    ok &= round_trip < 1e-6;
    notes.push(format!("round trip {round_trip:.1e}"));
    Ok((ok, notes.join("; ")))
}

// 4. Nonnegativity

fn nonnegativity() -> Outcome {
    let run = load("brusselator.json")?;
    let cfg = simulation(&run)?;
    let u0_max = cfg.initial.iter().flatten().fold(0f64, |m, v| m.max(*v));
    let tol = 1e-3 * u0_max;
    let mins = run_paths(&EnsembleOptions::new(100), |id| simulate_path(&cfg, id).map(|o| o.state.running_min))?.results;
    let good = mins.iter().filter(|&&m| m >= -tol).count();
    let lowest = mins.iter().cloned().fold(f64::INFINITY, f64::min);

    let violation = |c: &SimulationConfig| -> Result<f64, Box<dyn StdError>> {
        let mins = run_paths(&EnsembleOptions::new(10), |id| simulate_path(c, id).map(|o| o.state.running_min))?.results;
        Ok(mins.iter().fold(0f64, |m, v| m.max(-v)))
    };
    let coarse = violation(&cfg)?;
    let fine = violation(&cfg.with_dt(cfg.dt / 2.0))?;
    let halves = fine <= 0.5 * coarse;
    let ok = good >= 95 && halves;
    let refinement = if coarse == 0.0 && fine == 0.0 {
        "no negative values at dt or dt/2 on the subsample".to_string()
    } else {
        format!("violation {coarse:.2e} -> {fine:.2e} at dt/2")
    };
    Ok((ok, format!("{good}/100 paths with min >= -{tol:.1e} (lowest min {lowest:.4}); {refinement}")))
}

// 5. Truncation coupling

fn bits(a: &[Vec<f64>]) -> Vec<u64> {
    a.iter().flatten().map(|v| v.to_bits()).collect()
}

fn same_state(a: &PathState, c: &PathState) -> bool {
    bits(&a.u_coeffs) == bits(&c.u_coeffs)
        && bits(&a.u_grid) == bits(&c.u_grid)
        && bits(&a.z_coeffs) == bits(&c.z_coeffs)
        && bits(&a.z_grid) == bits(&c.z_grid)
}

fn coupling() -> Outcome {
    let mut run = load("brusselator.json")?;
    run.noise_amplitude = 0.5;
    let cfg = simulation(&run)?;
    let (low, high) = (cfg.with_truncation(level(4.0)), cfg.with_truncation(level(8.0)));
    let seeds = 50;
    let per_path = run_paths(&EnsembleOptions::new(seeds), |id| {
        let (mut a, mut c) = (initial_state(&low, id)?, initial_state(&high, id)?);
        let mut identical = true;
        loop {
            identical &= same_state(&a, &c);
            if !identical || a.stop.is_some() || a.step == low.steps() {
                break;
            }
            step(&mut a, &low)?;
            step(&mut c, &high)?;
        }
        let (a, c) = (continue_path(&low, a)?.state, continue_path(&high, c)?.state);
        let violation = match (a.tau(), c.tau()) {
            (None, Some(_)) => true,
            (Some(t4), Some(t8)) => t8 < t4,
            _ => false,
        };
        Ok((identical, violation, a.tau().is_some(), c.tau().is_some()))
    })?
    .results;
    let mismatched = per_path.iter().filter(|r| !r.0).count();
    let violations = per_path.iter().filter(|r| r.1).count();
    let (hit4, hit8) = (per_path.iter().filter(|r| r.2).count(), per_path.iter().filter(|r| r.3).count());
    Ok((
        mismatched == 0 && violations == 0,
        format!("s = 0.5: {mismatched} mismatches before tau_4, {violations} order violations; tau_4 <= T on {hit4}/{seeds}, tau_8 <= T on {hit8}/{seeds}"),
    ))
}

// 6. Uniform-in-n moments

fn moments() -> Outcome {
    let cfg = simulation(&load("brusselator.json")?)?;
    let levels = [level(4.0), level(8.0), level(16.0), level(32.0)];
    let table = estimate_moments(&cfg, &levels, 8.0, &EnsembleOptions::new(200))?;
    let last = table.rows.last().unwrap();
    let ok = table.flatness <= 3.0 && table.markov_ok() && last.blowup == 0.0;
    let moments: Vec<String> = table.rows.iter().map(|r| format!("{:.4e}", r.moment)).collect();
    let blowups: Vec<String> = table.rows.iter().map(|r| format!("{}", r.blowup)).collect();
    Ok((
        ok,
        format!(
            "flatness {:.3}, Markov check {}, moments [{}], P(tau_n <= T) [{}]",
            table.flatness,
            table.markov_ok(),
            moments.join(", "),
            blowups.join(", ")
        ),
    ))
}

// 7. Hölder regularity

fn regularity() -> Outcome {
    let cfg = simulation(&load("regularity_white.json")?)?;
    let h = holder_ensemble(&cfg, &EnsembleOptions::new(50), 0)?;
    let band = |x: f64| (0.35..=0.55).contains(&x);
    Ok((
        band(h.mean_theta_z) && band(h.mean_theta_u),
        format!(
            "theta_Z {:.4}, theta_u {:.4} over 50 paths, lags {}..{}, damping {:.2}",
            h.mean_theta_z, h.mean_theta_u, h.lags.0, h.lags.1, h.damping
        ),
    ))
}

// 8. Mass control

fn mass_control() -> Outcome {
    let mut proto: Value = serde_json::to_value(load("brusselator.json")?)?;
    proto["model"] = serde_json::json!({ "preset": { "name": "prototype" } });
    proto["initial"] = serde_json::json!(["1 + sin(pi*x)", "sin(pi*x)"]);
    proto["noise_amplitude"] = 0.0.into();
    proto["truncation"] = 1e6.into();
    let cfg = simulation(&RunConfig::from_json(&proto.to_string())?)?;
    let h = simulate_path(&cfg, 0)?.state.history;
    let drift = h.iter().fold(0f64, |m, r| m.max((r.mass - h[0].mass).abs()));

    let mut run = load("brusselator.json")?;
    run.noise_amplitude = 0.0;
    let cfg = simulation(&run)?;
    let h = simulate_path(&cfg, 0)?.state.history;
    let (alpha, volume) = (1.0, cfg.basis.domain().volume());
    let rate = h.windows(2).map(|p| (p[1].mass - p[0].mass) / (p[1].time - p[0].time)).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        drift < 1e-6 && rate <= alpha * volume + 1e-6,
        format!("prototype max |M(t) - M(0)| = {drift:.1e}; Brusselator max dM/dt = {rate:.3e} (bound {})", alpha * volume),
    ))
}

// 9. Reproducibility

fn massrd(args: &[&str]) -> Result<(), Box<dyn StdError>> {
    let o = Command::new(env!("CARGO_BIN_EXE_massrd")).args(args).env_remove("MASSRD_THREADS").output()?;
    if !o.status.success() {
        return Err(format!("massrd {args:?}: {}", String::from_utf8_lossy(&o.stderr)).into());
    }
    Ok(())
}

/// Every output file byte-identical; manifests compared without the wall clock.
fn same_outputs(a: &Path, b: &Path) -> Result<bool, Box<dyn StdError>> {
    let mut names: Vec<_> = fs::read_dir(a)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    let mut other: Vec<_> = fs::read_dir(b)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    other.sort();
    if names != other {
        return Ok(false);
    }
    for name in names {
        let (x, y) = (fs::read(a.join(&name))?, fs::read(b.join(&name))?);
        let same = if name == "manifest.json" {
            let strip = |bytes: &[u8]| -> Result<Value, serde_json::Error> {
                let mut v: Value = serde_json::from_slice(bytes)?;
                v["wall_clock_seconds"] = Value::Null;
                Ok(v)
            };
            strip(&x)? == strip(&y)?
        } else {
            x == y
        };
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::TempDir::new()?;
    let dir = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let brusselator = configs().join("brusselator.json").to_str().unwrap().to_string();
    let regularity = configs().join("regularity_white.json").to_str().unwrap().to_string();
    // simulate and check are single-threaded and take no --threads flag
    let runs: [(&str, Vec<&str>, bool); 4] = [
        ("simulate", vec!["simulate", "-c", &brusselator, "--path-id", "5"], false),
        ("check", vec!["check", "-c", &brusselator], false),
        ("moments", vec!["moments", "-c", &brusselator, "--levels", "4,8,16,32", "--paths", "8"], true),
        ("regularity", vec!["regularity", "-c", &regularity, "--paths", "2"], true),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, args, threaded) in &runs {
        let (one, four, rerun) = (dir(&format!("{name}_1")), dir(&format!("{name}_4")), dir(&format!("{name}_m")));
        let threads = |n: &'static str| if *threaded { vec!["--threads", n] } else { vec![] };
        massrd(&[args.as_slice(), &["-o", &one], &threads("1")].concat())?;
        massrd(&[args.as_slice(), &["-o", &four], &threads("4")].concat())?;
        let manifest = Path::new(&one).join("manifest.json");
        massrd(&[&[*name, "-c", manifest.to_str().unwrap(), "-o", &rerun][..], &threads("3")].concat())?;
        let same = same_outputs(Path::new(&one), Path::new(&four))? && same_outputs(Path::new(&one), Path::new(&rerun))?;
        ok &= same;
        notes.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    Ok((ok, format!("--threads 1/4 and manifest rerun: {}", notes.join(", "))))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("assumption certification", Duration::from_secs(5), certification),
        ("heat-kernel identities", Duration::from_secs(30), heat_kernel),
        ("noise kernel exponents", Duration::from_secs(60), kernel_exponents),
        ("nonnegativity", Duration::from_secs(600), nonnegativity),
        ("truncation coupling", Duration::from_secs(300), coupling),
        ("uniform-in-n moments", Duration::from_secs(1800), moments),
        ("Hölder regularity", Duration::from_secs(600), regularity),
        ("mass control", Duration::from_secs(60), mass_control),
        ("reproducibility", Duration::from_secs(600), reproducibility),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if filter.as_ref().is_some_and(|f| *f != id && !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= *budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "{} {id}. {name} [{:.1} s, limit {} s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
