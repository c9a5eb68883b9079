//! Classification criteria: admissibility, subcriticality, the strong
//! subcriticality sufficient condition, the accumulated-absorption function
//! psi, the psi-blow-up singularity criterion, the singular set scan, and
//! the two capacity computations.
//!
//! Universal quantifiers over R^n or over Borel sets are realized on finite
//! probe sets (plus a seeded random-cell spot check); every report records
//! the probes it used together with the quadrature evidence.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd::thomas;
use crate::grid::BoxDomain;
use crate::kernel::{heat_kernel_r2, heat_potential};
use crate::measure::Measure;
use crate::potential::Potential;
use crate::quad::{spacetime_integral, QuadOptions, QuadratureTrail, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportVerdict {
    Pass,
    Fail,
    Divergent,
    Inconclusive,
}

impl ReportVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            ReportVerdict::Pass => "pass",
            ReportVerdict::Fail => "fail",
            ReportVerdict::Divergent => "divergent",
            ReportVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// One probe point with its integral value and evidence trail.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub probe: Vec<f64>,
    /// Converged value; +inf for a divergent trail; NaN if inconclusive.
    pub value: f64,
    pub trail: QuadratureTrail,
}

impl ProbeResult {
    fn from_trail(probe: Vec<f64>, trail: QuadratureTrail) -> Self {
        let value = match trail.verdict {
            Verdict::Converged { value, .. } => value,
            Verdict::Divergent => f64::INFINITY,
            Verdict::Inconclusive => f64::NAN,
        };
        ProbeResult { probe, value, trail }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub criterion: String,
    pub verdict: ReportVerdict,
    pub probes: Vec<ProbeResult>,
    /// Which derived constant the report carries: "M_R", "m_R", "capacity".
    pub constant_name: &'static str,
    pub constant: Option<f64>,
    /// First probe witnessing a failure/divergence, if any.
    pub witness: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl ClassificationReport {
    /// CSV rows: probe, value, verdict, constant (constant on the summary row).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe,value,verdict,constant\n");
        for p in &self.probes {
            out.push_str(&format!(
                "{},{:e},{},\n",
                fmt_point(&p.probe),
                p.value,
                p.trail.verdict.label()
            ));
        }
        let c = match self.constant {
            Some(v) => format!("{}={:e}", self.constant_name, v),
            None => String::new(),
        };
        out.push_str(&format!("summary,,{},{}\n", self.verdict.label(), c));
        out
    }
}

pub(crate) fn fmt_point(x: &[f64]) -> String {
    x.iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cell-midpoint probe grid over a box, `per_dim` points per dimension.
pub fn probe_grid(domain: &BoxDomain, per_dim: usize) -> Vec<Vec<f64>> {
    let dim = domain.dim();
    let total = per_dim.pow(dim as u32);
    (0..total)
        .map(|flat| {
            let mut idx = flat;
            (0..dim)
                .map(|d| {
                    let i = idx % per_dim;
                    idx /= per_dim;
                    let (a, b) = domain.bounds[d];
                    let h = (b - a) / per_dim as f64;
                    a + (i as f64 + 0.5) * h
                })
                .collect()
        })
        .collect()
}

/// ∬_{(box ∩ mask-ball) × (0,T)} H(x−y,t) V(x,t) dx dt, frame centered at y.
/// `ball` optionally restricts integration to |x − ball.0| ≤ ball.1.
fn kernel_weight_trail(
    v: &Potential,
    y: &[f64],
    domain: &BoxDomain,
    ball: Option<(&[f64], f64)>,
    t_hi: f64,
    opts: &QuadOptions,
) -> QuadratureTrail {
    let dim = y.len();
    let f = move |x: &[f64], t: f64| {
        if let Some((c, r)) = ball {
            if dist2(x, c) > r * r {
                return 0.0;
            }
        }
        let vv = v.eval(x, t).unwrap_or(f64::INFINITY);
        if !vv.is_finite() {
            return f64::INFINITY;
        }
        if vv == 0.0 {
            return 0.0;
        }
        heat_kernel_r2(dist2(x, y), t, dim).unwrap() * vv
    };
    let o = QuadOptions {
        gaussian_center: Some(y.to_vec()),
        ..opts.clone()
    };
    spacetime_integral(&f, domain, t_hi, &o)
}

/// Default integration box for kernel-centered integrals over R^n: the hull
/// of the centers padded so the discarded Gaussian tail is negligible.
pub fn kernel_box(dim: usize, t_hi: f64, centers: &[Vec<f64>]) -> BoxDomain {
    let pad = 16.0 * t_hi.sqrt();
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for c in centers {
        for d in 0..dim {
            bounds[d].0 = bounds[d].0.min(c[d]);
            bounds[d].1 = bounds[d].1.max(c[d]);
        }
    }
    if centers.is_empty() {
        bounds = vec![(0.0, 0.0); dim];
    }
    BoxDomain::new(bounds.into_iter().map(|(a, b)| (a - pad, b + pad)).collect()).unwrap()
}

/// Admissibility of μ for V on the cylinder B_R × (0,T): convergence of
/// ∬ H[|μ|](x,t) V(x,t) dx dt. Pass ⇔ converged; divergent ⇔ not admissible.
pub fn admissibility(
    v: &Potential,
    mu: &Measure,
    r: f64,
    t_hi: f64,
    opts: &QuadOptions,
) -> Result<ClassificationReport> {
    if !mu.mt_norm(t_hi).is_finite() {
        return Err(Error::MeasureNotInMt(format!("at horizon T={t_hi}")));
    }
    let dim = mu.dim;
    let domain = BoxDomain::centered_cube(dim, r);
    let origin = vec![0.0; dim];
    let center = mu
        .atoms
        .first()
        .map(|a| a.location.clone())
        .unwrap_or_else(|| origin.clone());
    let f = |x: &[f64], t: f64| {
        if dist2(x, &origin) > r * r {
            return 0.0;
        }
        let vv = v.eval(x, t).unwrap_or(f64::INFINITY);
        if !vv.is_finite() {
            return f64::INFINITY;
        }
        if vv == 0.0 {
            return 0.0;
        }
        heat_potential(mu, x, t, f64::INFINITY).unwrap() * vv
    };
    let o = QuadOptions {
        gaussian_center: if mu.is_zero() { None } else { Some(center.clone()) },
        ..opts.clone()
    };
    let trail = spacetime_integral(&f, &domain, t_hi, &o);
    let verdict = match trail.verdict {
        Verdict::Converged { .. } => ReportVerdict::Pass,
        Verdict::Divergent => ReportVerdict::Divergent,
        Verdict::Inconclusive => ReportVerdict::Inconclusive,
    };
    let value = trail.verdict.value();
    Ok(ClassificationReport {
        criterion: "admissibility".into(),
        verdict,
        probes: vec![ProbeResult::from_trail(center, trail)],
        constant_name: "M_R",
        constant: value,
        witness: None,
        notes: vec![format!("R={r}, T={t_hi}")],
    })
}

/// Subcriticality on probes: for each y, ∬_{B_R×(0,T)} H(x−y,t)V ≤ m_R e^{−|y|²/4T}
/// with m_R the maximum weighted ratio over the probe set.
pub fn subcritical_check(
    v: &Potential,
    r: f64,
    t_hi: f64,
    probes: &[Vec<f64>],
    opts: &QuadOptions,
) -> ClassificationReport {
    let dim = probes.first().map(|p| p.len()).unwrap_or(v.dim);
    let domain = BoxDomain::centered_cube(dim, r);
    let origin = vec![0.0; dim];
    let results: Vec<ProbeResult> = probes
        .par_iter()
        .map(|y| {
            let trail = kernel_weight_trail(v, y, &domain, Some((&origin, r)), t_hi, opts);
            ProbeResult::from_trail(y.clone(), trail)
        })
        .collect();
    let mut m_r = 0.0f64;
    let mut witness = None;
    let mut verdict = ReportVerdict::Pass;
    for p in &results {
        match p.trail.verdict {
            Verdict::Converged { value, .. } => {
                let w = (dist2(&p.probe, &origin) / (4.0 * t_hi)).exp();
                m_r = m_r.max(value * w);
            }
            Verdict::Divergent => {
                verdict = ReportVerdict::Fail;
                if witness.is_none() {
                    witness = Some(p.probe.clone());
                }
            }
            Verdict::Inconclusive => {
                if verdict == ReportVerdict::Pass {
                    verdict = ReportVerdict::Inconclusive;
                }
            }
        }
    }
    ClassificationReport {
        criterion: "subcritical".into(),
        verdict,
        probes: results,
        constant_name: "m_R",
        constant: if verdict == ReportVerdict::Pass { Some(m_r) } else { None },
        witness,
        notes: vec![format!("R={r}, T={t_hi}, probes={}", probes.len())],
    }
}

/// Sufficient condition for strong subcriticality: per probe y,
/// e^{|y|²/4T} λ^{−n} ∬_{B_{λ²}(y) × (0,λ)} V → 0 as λ → 0.
/// Pass ⇔ the value sequence decreases below `tol`; divergence ⇒ fail.
pub fn strong_subcritical_sufficient(
    v: &Potential,
    t_hi: f64,
    probes: &[Vec<f64>],
    lambda_levels: &[f64],
    tol: f64,
    opts: &QuadOptions,
) -> ClassificationReport {
    let mut lambdas = lambda_levels.to_vec();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let dim = probes.first().map(|p| p.len()).unwrap_or(v.dim);
    let tasks: Vec<(usize, usize)> = (0..probes.len())
        .flat_map(|i| (0..lambdas.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<ProbeResult> = tasks
        .par_iter()
        .map(|&(i, j)| {
            let y = &probes[i];
            let lam = lambdas[j];
            let r = lam * lam;
            let domain = BoxDomain::new(y.iter().map(|&c| (c - r, c + r)).collect()).unwrap();
            let f = |x: &[f64], t: f64| {
                if dist2(x, y) > r * r {
                    return 0.0;
                }
                let vv = v.eval(x, t).unwrap_or(f64::INFINITY);
                if vv.is_finite() {
                    vv
                } else {
                    f64::INFINITY
                }
            };
            let o = QuadOptions { gaussian_center: None, ..opts.clone() };
            let trail = spacetime_integral(&f, &domain, lam, &o);
            let weight = (dist2(y, &vec![0.0; dim]) / (4.0 * t_hi)).exp() / lam.powi(dim as i32);
            let mut pr = ProbeResult::from_trail(
                y.iter().copied().chain(std::iter::once(lam)).collect(),
                trail,
            );
            pr.value *= weight;
            pr
        })
        .collect();

    let mut verdict = ReportVerdict::Pass;
    let mut witness = None;
    let mut notes = vec![format!("T={t_hi}, lambda levels={lambdas:?}, tol={tol}")];
    for (i, y) in probes.iter().enumerate() {
        let seq: Vec<f64> = (0..lambdas.len())
            .map(|j| results[i * lambdas.len() + j].value)
            .collect();
        if seq.iter().any(|s| s.is_infinite()) {
            verdict = ReportVerdict::Fail;
            witness.get_or_insert_with(|| y.clone());
            notes.push(format!("probe {}: local integral divergent", fmt_point(y)));
            continue;
        }
        if seq.iter().any(|s| s.is_nan()) {
            if verdict == ReportVerdict::Pass {
                verdict = ReportVerdict::Inconclusive;
            }
            continue;
        }
        let n = seq.len();
        let tail_monotone = n >= 3 && seq[n - 1] <= seq[n - 2] + 1e-12 && seq[n - 2] <= seq[n - 3] + 1e-12;
        let last = seq[n - 1];
        if tail_monotone && last < tol {
            continue; // this probe passes
        }
        // not vanishing: plateau or growth over the tail
        let plateau = n >= 2 && seq[n - 2] > 0.0 && last / seq[n - 2] >= 0.9;
        if last >= tol && plateau {
            verdict = ReportVerdict::Fail;
            witness.get_or_insert_with(|| y.clone());
            notes.push(format!("probe {}: scaled integral does not vanish ({last:e})", fmt_point(y)));
        } else if verdict == ReportVerdict::Pass {
            verdict = ReportVerdict::Inconclusive;
            notes.push(format!("probe {}: non-monotone tail", fmt_point(y)));
        }
    }
    ClassificationReport {
        criterion: "strong_subcritical_sufficient".into(),
        verdict,
        probes: results,
        constant_name: "",
        constant: None,
        witness,
        notes,
    }
}

/// Seeded random-cell spot check backing the strong-subcriticality claim on
/// Borel sets: returns the scaled local integrals over `n_cells` randomly
/// placed cells of size λ², deterministic in `seed`.
pub fn random_cell_spot_check(
    v: &Potential,
    t_hi: f64,
    domain: &BoxDomain,
    lambda: f64,
    n_cells: usize,
    seed: u64,
    opts: &QuadOptions,
) -> Vec<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n_cells)
        .map(|_| {
            domain
                .bounds
                .iter()
                .map(|&(a, b)| rng.gen_range(a..b))
                .collect()
        })
        .collect();
    let report = strong_subcritical_sufficient(v, t_hi, &centers, &[lambda], f64::INFINITY, opts);
    report.probes.iter().map(|p| p.value).collect()
}

/// ψ(x,t) = ∫_t^T ∫ H(x−y, s−t) V(y,s) dy ds. Closed form for
/// space-independent catalog kinds; quadrature otherwise. Divergence of the
/// quadrature yields +inf; an inconclusive trail is a scheme error.
pub fn psi(v: &Potential, x: &[f64], t: f64, t_hi: f64, opts: &QuadOptions) -> Result<f64> {
    if !(t > 0.0 && t < t_hi) {
        return Err(Error::Domain(format!("psi needs 0 < t < T, got t={t}, T={t_hi}")));
    }
    if v.is_space_independent() {
        // the kernel integrates to 1 in space, leaving ∫_t^T V(s) ds
        if let Some(val) = v.time_integral(t, t_hi) {
            return Ok(val);
        }
    }
    let dim = x.len();
    let domain = kernel_box(dim, t_hi - t, &[x.to_vec()]);
    let f = |y: &[f64], sigma: f64| {
        let vv = v.eval(y, sigma + t).unwrap_or(f64::INFINITY);
        if !vv.is_finite() {
            return f64::INFINITY;
        }
        if vv == 0.0 {
            return 0.0;
        }
        heat_kernel_r2(dist2(x, y), sigma, dim).unwrap() * vv
    };
    let o = QuadOptions {
        gaussian_center: Some(x.to_vec()),
        ..opts.clone()
    };
    let trail = spacetime_integral(&f, &domain, t_hi - t, &o);
    match trail.verdict {
        Verdict::Converged { value, .. } => Ok(value),
        Verdict::Divergent => Ok(f64::INFINITY),
        Verdict::Inconclusive => Err(Error::Scheme("psi quadrature inconclusive".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularVerdict {
    Singular,
    NotSingular,
    Inconclusive,
}

impl SingularVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SingularVerdict::Singular => "singular",
            SingularVerdict::NotSingular => "not_singular",
            SingularVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThmFReport {
    pub xi: Vec<f64>,
    /// (t, psi(xi,t)) along the geometric probe ladder.
    pub samples: Vec<(f64, f64)>,
    pub verdict: SingularVerdict,
    pub notes: Vec<String>,
}

/// Probes limsup_{t→0} ψ(ξ,t) along t_j = T·2^{−j}. Unbounded growth
/// (non-decaying increments) ⇒ singular, recording the implication that the
/// kernel H_V(·,ξ,·) vanishes identically.
pub fn thm_f_criterion(v: &Potential, xi: &[f64], t_hi: f64, opts: &QuadOptions) -> ThmFReport {
    let mut samples = Vec::new();
    let mut verdict = None;
    for j in 1..=16 {
        let t = t_hi * 0.5f64.powi(j);
        match psi(v, xi, t, t_hi, opts) {
            Ok(p) if p.is_infinite() => {
                samples.push((t, p));
                verdict = Some(SingularVerdict::Singular);
                break;
            }
            Ok(p) => samples.push((t, p)),
            Err(_) => {
                verdict = Some(SingularVerdict::Inconclusive);
                break;
            }
        }
    }
    let verdict = verdict.unwrap_or_else(|| {
        // psi(t_j) is nondecreasing as t_j decreases; examine the increments
        let vals: Vec<f64> = samples.iter().map(|&(_, p)| p).collect();
        let n = vals.len();
        let scale = vals[n - 1].abs().max(1.0);
        let d_last = vals[n - 1] - vals[n - 2];
        let d_prev = vals[n - 2] - vals[n - 3];
        if d_last <= 1e-9 * scale {
            SingularVerdict::NotSingular
        } else if d_prev > 0.0 && d_last / d_prev >= 0.95 {
            SingularVerdict::Singular
        } else if d_prev > 0.0 && d_last / d_prev < 0.9 {
            SingularVerdict::NotSingular
        } else {
            SingularVerdict::Inconclusive
        }
    });
    let notes = if verdict == SingularVerdict::Singular {
        vec!["implication: H_V(., xi, .) vanishes identically".into()]
    } else {
        vec![]
    };
    ThmFReport { xi: xi.to_vec(), samples, verdict, notes }
}

/// Per-probe membership in the singular set Z_V: divergence of
/// f(x) = ∬ H(x−y,t) V(y,t) dy dt. For each divergent probe, divergence of
/// the integral restricted to B_r(x), r ∈ {1, 0.1}, is asserted as well.
pub fn singular_scan(
    v: &Potential,
    t_hi: f64,
    probes: &[Vec<f64>],
    opts: &QuadOptions,
) -> ClassificationReport {
    let results: Vec<ProbeResult> = probes
        .par_iter()
        .map(|x| {
            let domain = kernel_box(x.len(), t_hi, &[x.clone()]);
            let trail = kernel_weight_trail(v, x, &domain, None, t_hi, opts);
            ProbeResult::from_trail(x.clone(), trail)
        })
        .collect();
    let mut verdict = ReportVerdict::Pass;
    let mut witness = None;
    let mut notes = vec![format!("T={t_hi}, probes={}", probes.len())];
    for p in &results {
        match p.trail.verdict {
            Verdict::Divergent => {
                if witness.is_none() {
                    witness = Some(p.probe.clone());
                }
                verdict = ReportVerdict::Divergent;
                // locality of membership: restriction to small balls diverges too
                for r in [1.0, 0.1] {
                    let domain = BoxDomain::new(
                        p.probe.iter().map(|&c| (c - r, c + r)).collect(),
                    )
                    .unwrap();
                    let sub = kernel_weight_trail(v, &p.probe, &domain, Some((&p.probe, r)), t_hi, opts);
                    if sub.verdict != Verdict::Divergent {
                        notes.push(format!(
                            "warning: probe {} divergent globally but {} on B_{r}",
                            fmt_point(&p.probe),
                            sub.verdict.label()
                        ));
                    } else {
                        notes.push(format!(
                            "probe {}: restriction to B_{r} still divergent",
                            fmt_point(&p.probe)
                        ));
                    }
                }
            }
            Verdict::Inconclusive => {
                if verdict == ReportVerdict::Pass {
                    verdict = ReportVerdict::Inconclusive;
                }
            }
            Verdict::Converged { .. } => {}
        }
    }
    ClassificationReport {
        criterion: "singular_scan".into(),
        verdict,
        probes: results,
        constant_name: "",
        constant: None,
        witness,
        notes,
    }
}

/// Capacity of a compact probe set: C_V(E) = [sup_{y∈E} ∬ H(x−y,t)V dxdt]^{−1};
/// zero when E meets the singular set.
pub fn capacity_compact(
    v: &Potential,
    t_hi: f64,
    points: &[Vec<f64>],
    opts: &QuadOptions,
) -> ClassificationReport {
    let results: Vec<ProbeResult> = points
        .par_iter()
        .map(|y| {
            let domain = kernel_box(y.len(), t_hi, &[y.clone()]);
            let trail = kernel_weight_trail(v, y, &domain, None, t_hi, opts);
            ProbeResult::from_trail(y.clone(), trail)
        })
        .collect();
    let any_inconclusive = results
        .iter()
        .any(|p| p.trail.verdict == Verdict::Inconclusive);
    let any_divergent = results.iter().any(|p| p.value.is_infinite());
    let (verdict, capacity) = if any_inconclusive && !any_divergent {
        (ReportVerdict::Inconclusive, None)
    } else if any_divergent {
        (ReportVerdict::Divergent, Some(0.0))
    } else {
        let sup = results.iter().fold(0.0f64, |m, p| m.max(p.value));
        (ReportVerdict::Pass, Some(if sup > 0.0 { 1.0 / sup } else { f64::INFINITY }))
    };
    let mut notes = vec![format!("T={t_hi}, |E|={}", points.len())];
    if points.len() >= 2 && capacity.is_some() {
        // max-composition consistency: C(E1 ∪ E2) = max on the sup scale means
        // min on the capacity scale across any split
        let mid = points.len() / 2;
        let cap_of = |slice: &[ProbeResult]| -> f64 {
            if slice.iter().any(|p| p.value.is_infinite()) {
                return 0.0;
            }
            let sup = slice.iter().fold(0.0f64, |m, p| m.max(p.value));
            if sup > 0.0 { 1.0 / sup } else { f64::INFINITY }
        };
        let c1 = cap_of(&results[..mid]);
        let c2 = cap_of(&results[mid..]);
        notes.push(format!(
            "union rule: C(E)={:e}, min(C(E1),C(E2))={:e}",
            capacity.unwrap(),
            c1.min(c2)
        ));
    }
    ClassificationReport {
        criterion: "capacity_compact".into(),
        verdict,
        probes: results,
        constant_name: "capacity",
        constant: capacity,
        witness: None,
        notes,
    }
}

/// A bounded nonnegative test function for the dual capacity: constant
/// amplitude on a box support (the family the compact-set certificates use).
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub amplitude: f64,
    pub support: BoxDomain,
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub amplitude: f64,
    /// min over E of the dual transform (\check H)[f]; +inf when divergent.
    pub min_transform: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct DualReport {
    pub certificates: Vec<DualCertificate>,
    /// Best feasible sup-norm: an upper bound for the capacity of E.
    pub best_bound: Option<f64>,
    pub notes: Vec<String>,
}

/// One-sided dual capacity check: each f with Ȟ[f] ≥ 1 on E certifies
/// C_V(E) ≤ ‖f‖_∞. Reports the best certificate in the supplied family.
pub fn capacity_dual_check(
    v: &Potential,
    t_hi: f64,
    points: &[Vec<f64>],
    family: &[TestFunction],
    opts: &QuadOptions,
) -> DualReport {
    let certificates: Vec<DualCertificate> = family
        .iter()
        .map(|f| {
            if f.amplitude <= 0.0 {
                return DualCertificate {
                    amplitude: f.amplitude,
                    min_transform: 0.0,
                    feasible: false,
                };
            }
            let transforms: Vec<f64> = points
                .par_iter()
                .map(|y| {
                    let trail = kernel_weight_trail(v, y, &f.support, None, t_hi, opts);
                    match trail.verdict {
                        Verdict::Converged { value, .. } => value * f.amplitude,
                        Verdict::Divergent => f64::INFINITY,
                        Verdict::Inconclusive => f64::NAN,
                    }
                })
                .collect();
            let min_transform = transforms.iter().copied().fold(f64::INFINITY, f64::min);
            DualCertificate {
                amplitude: f.amplitude,
                min_transform,
                // slack matches the quadrature tolerance so a borderline
                // certificate is not lost to the tail truncation
                feasible: min_transform >= 1.0 - 1e-4,
            }
        })
        .collect();
    let best_bound = certificates
        .iter()
        .filter(|c| c.feasible)
        .map(|c| c.amplitude)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.min(a))));
    let notes = if best_bound.is_none() {
        vec!["no certificate found".into()]
    } else {
        vec![]
    };
    DualReport { certificates, best_bound, notes }
}

/// Grid function on box nodes (boundary included), uniform step h.
#[derive(Debug, Clone)]
pub struct GridFn {
    pub domain: BoxDomain,
    pub nodes_per_dim: Vec<usize>,
    pub h: f64,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn node_coord(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut out = Vec::with_capacity(self.domain.dim());
        for d in 0..self.domain.dim() {
            let i = idx % self.nodes_per_dim[d];
            idx /= self.nodes_per_dim[d];
            out.push(self.domain.bounds[d].0 + i as f64 * self.h);
        }
        out
    }
}

/// Solves −Δψ = 1 on the box with zero Dirichlet boundary (the weight of the
/// bounded-domain estimates), by the standard second-order stencil:
/// tridiagonal solve in n=1, SOR iteration in n=2.
pub fn omega_weight(domain: &BoxDomain, h: f64) -> Result<GridFn> {
    let dim = domain.dim();
    let nodes_per_dim: Vec<usize> = domain
        .bounds
        .iter()
        .map(|&(a, b)| ((b - a) / h).round() as usize + 1)
        .collect();
    if nodes_per_dim.iter().any(|&n| n < 3) {
        return Err(Error::Invalid("omega_weight needs at least one interior node".into()));
    }
    match dim {
        1 => {
            let n = nodes_per_dim[0];
            let m = n - 2;
            let sub = vec![-1.0; m - 1];
            let sup = vec![-1.0; m - 1];
            let diag = vec![2.0; m];
            let mut rhs = vec![h * h; m];
            thomas(&sub, &diag, &sup, &mut rhs);
            let mut values = vec![0.0; n];
            values[1..n - 1].copy_from_slice(&rhs);
            Ok(GridFn { domain: domain.clone(), nodes_per_dim, h, values })
        }
        2 => {
            let (nx, ny) = (nodes_per_dim[0], nodes_per_dim[1]);
            let mut psi = vec![0.0; nx * ny];
            let omega = 1.9;
            let h2 = h * h;
            let mut max_update = f64::INFINITY;
            let mut iter = 0usize;
            while max_update > 1e-13 && iter < 200_000 {
                max_update = 0.0;
                for j in 1..ny - 1 {
                    for i in 1..nx - 1 {
                        let idx = j * nx + i;
                        let gs = 0.25
                            * (psi[idx - 1] + psi[idx + 1] + psi[idx - nx] + psi[idx + nx] + h2);
                        let new = (1.0 - omega) * psi[idx] + omega * gs;
                        max_update = max_update.max((new - psi[idx]).abs());
                        psi[idx] = new;
                    }
                }
                iter += 1;
            }
            if max_update > 1e-13 {
                return Err(Error::Scheme("omega_weight SOR did not converge".into()));
            }
            Ok(GridFn { domain: domain.clone(), nodes_per_dim, h, values: psi })
        }
        _ => Err(Error::Invalid("omega_weight supports n in {1,2}".into())),
    }
}
