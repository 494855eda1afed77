//! Structural checks on reaction systems and noise coefficients.
//!
//! Polynomial functions are decided symbolically on the nonnegative orthant
//! where monomial sign analysis is conclusive. Everything else is sampled on
//! a grid, a batch of uniform points, and a set of rays reaching far into the
//! orthant; such verdicts are reported as [`Verdict::PassSampled`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NoiseCoefficients, ReactionSystem, ScalarFunction};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PassExact,
    PassSampled,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Fail
    }

    /// Weakest of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (PassSampled, _) | (_, PassSampled) => PassSampled,
            _ => PassExact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    Quasipositivity,
    TriangularMassControl,
    PolynomialGrowth,
    SigmaVanishing,
    SigmaLinearGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    /// Positive amount by which the inequality is violated.
    pub violation: f64,
    /// Species, row, or flattened `(i, k)` index the witness belongs to.
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub assumption: Assumption,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckReport {
    fn new(assumption: Assumption) -> Self {
        CheckReport { assumption, verdict: Verdict::PassExact, witnesses: Vec::new(), note: String::new() }
    }

    fn absorb(&mut self, verdict: Verdict, witnesses: Vec<Witness>) {
        self.verdict = self.verdict.and(verdict);
        self.witnesses.extend(witnesses);
    }

    fn append_note(&mut self, note: impl AsRef<str>) {
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(note.as_ref());
    }
}

/// Grid and random sampling of `[0, radius]^dim` plus far-field rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub points_per_axis: usize,
    pub radius: f64,
    pub random_points: usize,
    pub seed: u64,
    /// Absolute tolerance for equality and inequality checks.
    pub tolerance: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { points_per_axis: 11, radius: 10.0, random_points: 1000, seed: 0, tolerance: 1e-9 }
    }
}

/// Cap on the full tensor grid; larger dimensions fall back to random points.
const MAX_GRID_POINTS: usize = 500_000;
const RAY_RADII: [f64; 6] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
const RANDOM_RAYS: usize = 16;

impl SamplingPlan {
    /// Grid points followed by uniform random points in `[0, radius]^dim`.
    pub fn bulk(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut points = Vec::new();
        let per_axis = self.points_per_axis.max(2);
        let total = per_axis.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if dim == 0 {
            points.push(Vec::new());
            return points;
        }
        if total <= MAX_GRID_POINTS {
            let step = self.radius / (per_axis - 1) as f64;
            let mut idx = vec![0usize; dim];
            loop {
                points.push(idx.iter().map(|&k| k as f64 * step).collect());
                let mut carry = 0;
                while carry < dim {
                    idx[carry] += 1;
                    if idx[carry] < per_axis {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                }
                if carry == dim {
                    break;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_points {
            points.push((0..dim).map(|_| rng.gen::<f64>() * self.radius).collect());
        }
        points
    }

    /// Points `t * e` for `t` in [`RAY_RADII`] and directions `e` covering the
    /// diagonal, the coordinate axes, coordinate pairs, and random directions.
    pub fn rays(&self, dim: usize) -> Vec<Vec<f64>> {
        if dim == 0 {
            return Vec::new();
        }
        let mut dirs: Vec<Vec<f64>> = vec![vec![1.0; dim]];
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            dirs.push(e);
            for j in i + 1..dim {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e[j] = 1.0;
                dirs.push(e);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_7a75);
        for _ in 0..RANDOM_RAYS {
            dirs.push((0..dim).map(|_| rng.gen::<f64>()).collect());
        }
        let mut points = Vec::new();
        for t in RAY_RADII {
            for e in &dirs {
                points.push(e.iter().map(|x| x * t).collect());
            }
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Symbolic decisions; errors on non-polynomial input.
    ExactPolynomial,
    GridSample(SamplingPlan),
    /// Exact where polynomial, sampled otherwise.
    Auto(SamplingPlan),
}

impl Strategy {
    pub fn auto() -> Self {
        Strategy::Auto(SamplingPlan::default())
    }

    fn plan(&self) -> SamplingPlan {
        match self {
            Strategy::ExactPolynomial => SamplingPlan::default(),
            Strategy::GridSample(p) | Strategy::Auto(p) => p.clone(),
        }
    }

    fn symbolic(&self) -> bool {
        !matches!(self, Strategy::GridSample(_))
    }
}

const MAX_WITNESSES: usize = 8;

fn keep_worst(mut witnesses: Vec<Witness>) -> Vec<Witness> {
    witnesses.sort_by(|a, b| b.violation.total_cmp(&a.violation));
    witnesses.truncate(MAX_WITNESSES);
    witnesses
}

/// Insert a zero at position `i`.
fn lift(point: &[f64], i: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(point.len() + 1);
    a.extend_from_slice(&point[..i]);
    a.push(0.0);
    a.extend_from_slice(&point[i..]);
    a
}

fn orthant_points(plan: &SamplingPlan, dim: usize, fixed_zero: Option<usize>) -> Vec<Vec<f64>> {
    let free = if fixed_zero.is_some() { dim - 1 } else { dim };
    let mut pts = plan.bulk(free);
    pts.extend(plan.rays(free));
    match fixed_zero {
        Some(i) => pts.into_iter().map(|p| lift(&p, i)).collect(),
        None => pts,
    }
}

/// Sampled check of `g(a) >= -tol` over points, returning witnesses.
fn sample_nonnegative(
    g: impl Fn(&[f64]) -> Result<f64>,
    points: &[Vec<f64>],
    tol: f64,
    component: usize,
) -> Result<Vec<Witness>> {
    let mut witnesses = Vec::new();
    for a in points {
        let v = g(a)?;
        if v.is_nan() || v < -tol * (1.0 + v.abs()) {
            witnesses.push(Witness { point: a.clone(), violation: if v.is_nan() { f64::INFINITY } else { -v }, component });
        }
    }
    Ok(keep_worst(witnesses))
}

/// Assumption: `f_i(a) >= 0` whenever `a_i = 0` and `a` lies in the orthant.
pub fn check_quasipositivity(sys: &ReactionSystem, strategy: &Strategy) -> Result<CheckReport> {
    let m = sys.species();
    let plan = strategy.plan();
    if matches!(strategy, Strategy::ExactPolynomial) && !sys.is_polynomial() {
        return Err(Error::Unsupported("exact quasipositivity check needs polynomial reactions".into()));
    }
    let mut report = CheckReport::new(Assumption::Quasipositivity);
    for (i, f) in sys.reactions().iter().enumerate() {
        if strategy.symbolic() && f.is_polynomial() {
            let restricted = f.expansion().restrict_zero(i).expect("polynomial restriction");
            if restricted.terms.values().all(|c| *c >= 0.0) {
                continue;
            }
            report.append_note(format!("f{} restricted to a{}=0 has negative coefficients; sampled", i + 1, i + 1));
        }
        let pts = orthant_points(&plan, m, Some(i));
        let w = sample_nonnegative(|a| Ok(f.eval(a)?), &pts, plan.tolerance, i)?;
        let verdict = if w.is_empty() { Verdict::PassSampled } else { Verdict::Fail };
        report.absorb(verdict, w);
    }
    Ok(report)
}

/// A lower-triangular weighting of (permuted) reactions with row constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassControlCertificate {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    /// Species order; row `i` combines `f_{order[0]} .. f_{order[i]}`.
    pub order: Vec<usize>,
}

impl MassControlCertificate {
    pub fn new(p: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self> {
        let order = (0..c.len()).collect();
        MassControlCertificate::with_order(p, c, order)
    }

    pub fn with_order(p: Vec<Vec<f64>>, c: Vec<f64>, order: Vec<usize>) -> Result<Self> {
        let m = c.len();
        if p.len() != m || p.iter().any(|row| row.len() != m) || order.len() != m {
            return Err(Error::Contract(format!("certificate must be {m}x{m} with {m} constants and order")));
        }
        let mut seen = vec![false; m];
        for &o in &order {
            if o >= m || std::mem::replace(&mut seen[o], true) {
                return Err(Error::Contract("certificate order is not a permutation".into()));
            }
        }
        for (i, row) in p.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if j > i && v != 0.0 {
                    return Err(Error::Contract("certificate matrix must be lower triangular".into()));
                }
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Contract("certificate entries must be nonnegative".into()));
                }
            }
            if row[i] <= 0.0 {
                return Err(Error::Contract("certificate diagonal must be positive".into()));
            }
        }
        Ok(MassControlCertificate { p, c, order })
    }

    pub fn identity(m: usize) -> Self {
        let p = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        MassControlCertificate { p, c: vec![0.0; m], order: (0..m).collect() }
    }

    /// All-ones lower triangle: the cumulative row sums.
    pub fn cumulative(m: usize) -> Self {
        let p = (0..m).map(|i| (0..m).map(|j| if j <= i { 1.0 } else { 0.0 }).collect()).collect();
        MassControlCertificate { p, c: vec![0.0; m], order: (0..m).collect() }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn row_poly(&self, sys: &ReactionSystem, i: usize) -> Poly {
        let m = sys.species();
        let mut row = Poly::zero(m);
        for j in 0..=i {
            let w = self.p[i][j];
            if w != 0.0 {
                row = row.plus(&sys.reactions()[self.order[j]].expansion().clone().scale(w));
            }
        }
        row
    }

    /// `(P f)_i(a)` and the magnitude `sum_j |P_ij f_j(a)|` used for tolerances.
    fn row_eval(&self, f: &[f64], i: usize) -> (f64, f64) {
        let mut v = 0.0;
        let mut mag = 0.0;
        for j in 0..=i {
            let t = self.p[i][j] * f[self.order[j]];
            v += t;
            mag += t.abs();
        }
        (v, mag)
    }
}

/// Exact upper bound `(c0, max lin)` for a polynomial row on the orthant:
/// present when every term of degree >= 2 has a nonpositive coefficient.
fn affine_majorant(row: &Poly) -> Option<(f64, f64)> {
    if !row.is_polynomial() {
        return None;
    }
    if row.terms.iter().any(|(m, c)| m.degree() >= 2 && *c > 0.0) {
        return None;
    }
    let (c0, lin) = row.affine_part();
    let lmax = lin.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Some((c0, lmax))
}

/// Assumption: `(P f)(a) <= C (1 + a_1 + ... + a_m)` row-wise on the orthant.
pub fn check_mass_control(
    sys: &ReactionSystem,
    cert: &MassControlCertificate,
    strategy: &Strategy,
) -> Result<CheckReport> {
    let m = sys.species();
    if cert.dim() != m {
        return Err(Error::Contract(format!("certificate has dimension {} but system has {m} species", cert.dim())));
    }
    if matches!(strategy, Strategy::ExactPolynomial) && !sys.is_polynomial() {
        return Err(Error::Unsupported("exact mass-control check needs polynomial reactions".into()));
    }
    let plan = strategy.plan();
    let mut report = CheckReport::new(Assumption::TriangularMassControl);
    let mut sampled_rows = Vec::new();
    for i in 0..m {
        if strategy.symbolic() {
            let row = cert.row_poly(sys, i);
            if let Some((c0, lmax)) = affine_majorant(&row) {
                let tol = plan.tolerance;
                if c0 <= cert.c[i] + tol && (m == 0 || lmax <= cert.c[i] + tol) {
                    continue;
                }
            }
        }
        sampled_rows.push(i);
    }
    if sampled_rows.is_empty() {
        return Ok(report);
    }
    let pts = orthant_points(&plan, m, None);
    let mut f = vec![0.0; m];
    for &i in &sampled_rows {
        let mut witnesses = Vec::new();
        for a in &pts {
            sys.eval_into(a, &mut f)?;
            let (v, mag) = cert.row_eval(&f, i);
            let bound = cert.c[i] * (1.0 + a.iter().sum::<f64>());
            let excess = v - bound;
            if !excess.is_finite() || excess > plan.tolerance * (1.0 + mag + bound.abs()) {
                witnesses.push(Witness { point: a.clone(), violation: excess, component: i });
            }
        }
        if witnesses.is_empty() {
            report.absorb(Verdict::PassSampled, Vec::new());
        } else {
            report.append_note(format!("row {} violated", i + 1));
            report.absorb(Verdict::Fail, keep_worst(witnesses));
            // first violated row only
            break;
        }
    }
    Ok(report)
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Permutations are only searched up to this many species.
const MAX_PERMUTED_SEARCH: usize = 6;

/// Candidate `{0,1}` unit-diagonal lower-triangular matrices: identity,
/// cumulative, then the remaining strict-lower masks in increasing order.
fn candidate_masks(m: usize) -> Vec<Vec<Vec<f64>>> {
    let slots: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let full: u64 = if slots.is_empty() { 0 } else { (1u64 << slots.len()) - 1 };
    let build = |mask: u64| -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; m]; m];
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (b, &(i, j)) in slots.iter().enumerate() {
            if mask >> b & 1 == 1 {
                p[i][j] = 1.0;
            }
        }
        p
    };
    let limit = if slots.len() > 20 { 0 } else { full };
    let mut out = vec![build(0)];
    if full != 0 {
        out.push(build(full));
    }
    for mask in 1..limit {
        out.push(build(mask));
    }
    out
}

/// Search `{0,1}` triangular certificates over species orders.
///
/// Polynomial systems are searched exactly: a candidate is accepted when every
/// row has an affine majorant, and `C_i` is the largest degree-<=1 coefficient
/// of row `i` (at least zero). Other systems are searched by sampling, with
/// `C_i` the largest sampled ratio `(P f)_i(a) / (1 + sum a)`, accepted only if
/// that ratio does not grow along far-field rays.
pub fn search_mass_control(sys: &ReactionSystem) -> Option<MassControlCertificate> {
    let m = sys.species();
    let masks = candidate_masks(m);
    let mut order: Vec<usize> = (0..m).collect();
    let plan = SamplingPlan { random_points: 300, points_per_axis: 5, ..SamplingPlan::default() };
    let (bulk, rays) = if sys.is_polynomial() { (Vec::new(), Vec::new()) } else { (plan.bulk(m), plan.rays(m)) };
    loop {
        for p in &masks {
            let mut cert = MassControlCertificate { p: p.clone(), c: vec![0.0; m], order: order.clone() };
            let found = if sys.is_polynomial() {
                exact_constants(sys, &mut cert)
            } else {
                // screen on the coarse plan, then fix constants on the full one
                sampled_constants(sys, &mut cert, &bulk, &rays) && {
                    let full = SamplingPlan::default();
                    sampled_constants(sys, &mut cert, &full.bulk(m), &full.rays(m))
                }
            };
            if found {
                let verify = check_mass_control(sys, &cert, &Strategy::auto()).ok()?;
                if verify.verdict.passed() {
                    return Some(cert);
                }
            }
        }
        if m > MAX_PERMUTED_SEARCH || !next_permutation(&mut order) {
            return None;
        }
    }
}

fn exact_constants(sys: &ReactionSystem, cert: &mut MassControlCertificate) -> bool {
    for i in 0..sys.species() {
        match affine_majorant(&cert.row_poly(sys, i)) {
            Some((c0, lmax)) => cert.c[i] = 0f64.max(c0).max(lmax),
            None => return false,
        }
    }
    true
}

fn sampled_constants(
    sys: &ReactionSystem,
    cert: &mut MassControlCertificate,
    bulk: &[Vec<f64>],
    rays: &[Vec<f64>],
) -> bool {
    let m = sys.species();
    let mut f = vec![0.0; m];
    let mut near = vec![0f64; m];
    let mut far = vec![0f64; m];
    for (pts, acc) in [(bulk, &mut near), (rays, &mut far)] {
        for a in pts {
            if sys.eval_into(a, &mut f).is_err() {
                return false;
            }
            let s = 1.0 + a.iter().sum::<f64>();
            for (i, slot) in acc.iter_mut().enumerate() {
                let ratio = cert.row_eval(&f, i).0 / s;
                if !ratio.is_finite() {
                    return false;
                }
                *slot = slot.max(ratio);
            }
        }
    }
    for i in 0..m {
        if far[i] > 2.0 * near[i] + 1.0 {
            return false;
        }
        cert.c[i] = near[i].max(far[i]) * (1.0 + 1e-9) + 1e-12;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthKind {
    PolynomialExact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub mu: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub kind: GrowthKind,
    pub justification: String,
}

impl GrowthCertificate {
    /// `C (1 + a_1^mu + ... + a_m^mu)`.
    pub fn bound(&self, a: &[f64]) -> f64 {
        self.c * (1.0 + a.iter().map(|x| x.powf(self.mu)).sum::<f64>())
    }
}

const MONOMIAL_BOUND: &str = "each monomial a^k with |k| <= mu satisfies a^k <= max_j a_j^|k| <= 1 + a_1^mu + ... + a_m^mu on the orthant, so |f_i| <= (sum of |coefficients|) (1 + sum_j a_j^mu)";

/// Growth exponent and constant: `mu` is the largest total degree and `C` the
/// largest coefficient l1-norm. Opaque factors must be bounded (by sampling);
/// their sampled sup multiplies the coefficient.
pub fn check_polynomial_growth(sys: &ReactionSystem) -> Result<GrowthCertificate> {
    let m = sys.species();
    let mut mu = 1u32;
    let mut c = 0f64;
    let mut sampled = false;
    let plan = SamplingPlan::default();
    let mut bulk_rays: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    for (i, f) in sys.reactions().iter().enumerate() {
        let poly = f.expansion();
        mu = mu.max(poly.degree());
        let mut norm = 0.0;
        for (mono, coef) in &poly.terms {
            let mut factor_bound = 1.0;
            for key in &mono.opaque {
                sampled = true;
                let (bulk, rays) = bulk_rays.get_or_insert_with(|| (plan.bulk(m), plan.rays(m)));
                let expr = &poly.factors[key];
                let sup = |pts: &[Vec<f64>]| -> Result<f64> {
                    let mut s = 0f64;
                    for a in pts {
                        s = s.max(expr.eval(a)?.abs());
                    }
                    Ok(s)
                };
                let near = sup(bulk)?;
                let far = sup(rays)?;
                if !(far.is_finite() && far <= 2.0 * near + 1.0) {
                    return Err(Error::Unsupported(format!(
                        "factor `{}` of f{} is not bounded on the orthant",
                        expr.render(sys.labels()),
                        i + 1
                    )));
                }
                factor_bound *= near.max(far);
            }
            norm += coef.abs() * factor_bound;
        }
        c = c.max(norm);
    }
    let (kind, justification) = if sampled {
        (GrowthKind::Sampled, format!("{MONOMIAL_BOUND}; non-polynomial factors bounded by their sampled supremum"))
    } else {
        (GrowthKind::PolynomialExact, MONOMIAL_BOUND.to_string())
    };
    Ok(GrowthCertificate { mu: f64::from(mu), c: c.max(f64::MIN_POSITIVE), kind, justification })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub vanishing: CheckReport,
    pub linear_growth: CheckReport,
}

impl SigmaReport {
    pub fn verdict(&self) -> Verdict {
        self.vanishing.verdict.and(self.linear_growth.verdict)
    }
}

/// Noise coefficient assumptions: `sigma_ik = 0` on `{a_i = 0}` and
/// `|sigma_ik(a)| <= C (1 + sum a)`.
pub fn check_sigma(noise: &NoiseCoefficients, strategy: &Strategy) -> Result<SigmaReport> {
    let m = noise.species();
    let r = noise.channels();
    let plan = strategy.plan();
    let exact_only = matches!(strategy, Strategy::ExactPolynomial);
    if exact_only && noise.rows().iter().flatten().any(|s| !s.is_polynomial()) {
        return Err(Error::Unsupported("exact sigma check needs polynomial coefficients".into()));
    }
    let mut vanishing = CheckReport::new(Assumption::SigmaVanishing);
    let mut growth = CheckReport::new(Assumption::SigmaLinearGrowth);
    let mut all_points: Option<Vec<Vec<f64>>> = None;
    for i in 0..m {
        for k in 0..r {
            let s: &ScalarFunction = noise.entry(i, k);
            let component = i * r + k;
            // vanishing on the i-th coordinate hyperplane
            let exact_zero = strategy.symbolic()
                && s.is_polynomial()
                && s.expansion().restrict_zero(i).is_some_and(|p| p.is_zero());
            if !exact_zero {
                let pts = orthant_points(&plan, m, Some(i));
                let mut w = Vec::new();
                for a in &pts {
                    let v = s.eval(a)?;
                    if !(v.abs() <= plan.tolerance) {
                        w.push(Witness { point: a.clone(), violation: v.abs(), component });
                    }
                }
                let verdict = if w.is_empty() { Verdict::PassSampled } else { Verdict::Fail };
                vanishing.absorb(verdict, keep_worst(w));
            }
            // linear growth
            if strategy.symbolic() && s.is_polynomial() && s.expansion().degree() <= 1 {
                continue;
            }
            let plan_pts = all_points.get_or_insert_with(|| {
                let mut p = plan.bulk(m);
                p.extend(plan.rays(m));
                p
            });
            let split = plan_pts.len() - plan.rays(m).len();
            let (bulk, rays) = plan_pts.split_at(split);
            let ratio = |a: &[f64]| -> Result<f64> { Ok(s.eval(a)?.abs() / (1.0 + a.iter().sum::<f64>())) };
            let mut near = 0f64;
            for a in bulk {
                near = near.max(ratio(a)?);
            }
            let mut w = Vec::new();
            for a in rays {
                let q = ratio(a)?;
                if !q.is_finite() || q > 2.0 * near + 1.0 {
                    w.push(Witness { point: a.clone(), violation: q - near, component });
                }
            }
            let verdict = if w.is_empty() { Verdict::PassSampled } else { Verdict::Fail };
            growth.absorb(verdict, keep_worst(w));
        }
    }
    Ok(SigmaReport { vanishing, linear_growth: growth })
}

/// Every structural assumption for one system and its noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSuite {
    pub reports: Vec<CheckReport>,
    pub certificate: Option<MassControlCertificate>,
    pub growth: Option<GrowthCertificate>,
}

impl AssumptionSuite {
    pub fn verdict(&self) -> Verdict {
        self.reports.iter().fold(Verdict::PassExact, |v, r| v.and(r.verdict))
    }

    pub fn passed(&self) -> bool {
        self.verdict().passed()
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.reports.iter().filter(|r| r.verdict == Verdict::Fail)
    }
}

/// Run quasipositivity, mass control (with the supplied certificate, or a
/// search), polynomial growth and both noise conditions.
pub fn certify(
    sys: &ReactionSystem,
    noise: &NoiseCoefficients,
    supplied: Option<&MassControlCertificate>,
    strategy: &Strategy,
) -> Result<AssumptionSuite> {
    let m = sys.species();
    let mut reports = vec![check_quasipositivity(sys, strategy)?];

    let certificate = match supplied {
        Some(c) => Some(c.clone()),
        None => search_mass_control(sys),
    };
    let mass = match &certificate {
        Some(cert) => {
            let mut r = check_mass_control(sys, cert, strategy)?;
            if supplied.is_none() {
                r.append_note("certificate found by search");
            }
            r
        }
        None => {
            // report the cumulative rows' violations as witnesses
            let mut r = check_mass_control(sys, &MassControlCertificate::cumulative(m), strategy)?;
            r.verdict = Verdict::Fail;
            if r.witnesses.is_empty() {
                r.witnesses = check_mass_control(sys, &MassControlCertificate::identity(m), strategy)?.witnesses;
            }
            r.note = "no triangular certificate found".into();
            r
        }
    };
    let mut mass = mass;
    if sys.mass_control.is_some() {
        mass.append_note("system is flagged as lacking a triangular structure");
    }
    reports.push(mass);

    let growth = match check_polynomial_growth(sys) {
        Ok(g) => {
            let mut r = CheckReport::new(Assumption::PolynomialGrowth);
            r.verdict = match g.kind {
                GrowthKind::PolynomialExact => Verdict::PassExact,
                GrowthKind::Sampled => Verdict::PassSampled,
            };
            r.note = format!("mu = {}, C = {}", g.mu, g.c);
            reports.push(r);
            Some(g)
        }
        Err(Error::Unsupported(why)) => {
            let mut r = CheckReport::new(Assumption::PolynomialGrowth);
            r.verdict = Verdict::Fail;
            r.note = why;
            reports.push(r);
            None
        }
        Err(e) => return Err(e),
    };

    let sigma = check_sigma(noise, strategy)?;
    reports.push(sigma.vanishing);
    reports.push(sigma.linear_growth);
    Ok(AssumptionSuite { reports, certificate, growth })
}
