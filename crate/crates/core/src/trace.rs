//! Initial-trace extraction by cell scan, the trace lower bound, the Harnack
//! audit, the Gaussian-envelope representation check, and the sweeping-method
//! extended trace.
//!
//! A cell is regular when the local evidence ∬_{U×(t,T)} V·u stays bounded as
//! t drops along the recorded ladder; its trace mass is then the Richardson
//! extrapolation of the cell masses ∫_U u(·,t). A cell is singular when the
//! evidence diverges at every tested cell size, and the mass blow-up rate is
//! fitted as a log-log slope.

use rayon::prelude::*;

use crate::classify::psi;
use crate::error::{Error, Result};
use crate::grid::{BoxDomain, GridSpec};
use crate::measure::{Atom, Measure};
use crate::potential::Potential;
use crate::quad::QuadOptions;
use crate::solver::{
    kernel_estimate, reduce, step_solve, Field, InitData, StepOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellVerdict {
    Regular,
    Singular,
    Inconclusive,
}

impl CellVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            CellVerdict::Regular => "regular",
            CellVerdict::Singular => "singular",
            CellVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceCell {
    pub bounds: BoxDomain,
    pub verdict: CellVerdict,
    /// Extrapolated trace mass for regular cells; the last recorded cell
    /// mass for singular/inconclusive ones (a lower witness, not a trace).
    pub mass: f64,
    /// Fitted blow-up exponent of the cell mass (singular cells only).
    pub exponent: Option<f64>,
    /// (t, cumulative evidence ∬_{U×(t,T)} V u) along the descending ladder.
    pub evidence: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub cells: Vec<TraceCell>,
    pub notes: Vec<String>,
}

impl TraceReport {
    pub fn singular_cells(&self) -> Vec<&TraceCell> {
        self.cells.iter().filter(|c| c.verdict == CellVerdict::Singular).collect()
    }

    pub fn has_singular(&self) -> bool {
        self.cells.iter().any(|c| c.verdict == CellVerdict::Singular)
    }

    /// The regular-part trace as an atomic measure at cell centers,
    /// discarding cells below `min_mass`.
    pub fn regular_measure(&self, min_mass: f64) -> Result<Measure> {
        let mut atoms = Vec::new();
        let mut dim = 1;
        for c in &self.cells {
            dim = c.bounds.dim();
            if c.verdict == CellVerdict::Regular && c.mass > min_mass {
                let center: Vec<f64> =
                    c.bounds.bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect();
                atoms.push(Atom { location: center, weight: c.mass });
            }
        }
        if atoms.is_empty() {
            Ok(Measure::zero(dim))
        } else {
            Measure::new(dim, atoms, None, 1.0)
        }
    }

    pub fn to_csv(&self) -> String {
        let dim = self.cells.first().map(|c| c.bounds.dim()).unwrap_or(0);
        let mut out = String::new();
        for d in 0..dim {
            out.push_str(&format!("x{}_lo,x{}_hi,", d + 1, d + 1));
        }
        out.push_str("verdict,mass,exponent\n");
        for c in &self.cells {
            for (a, b) in &c.bounds.bounds {
                out.push_str(&format!("{a:e},{b:e},"));
            }
            match c.exponent {
                Some(e) => out.push_str(&format!(
                    "{},{:.17e},{:.17e}\n",
                    c.verdict.label(),
                    c.mass,
                    e
                )),
                None => out.push_str(&format!("{},{:.17e},\n", c.verdict.label(), c.mass)),
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Cells per dimension for the two scan sizes; a cell counts as singular
    /// only when divergent at both. Odd counts keep the origin interior.
    pub cells_coarse: usize,
    pub cells_fine: usize,
    /// Trailing ladder levels used for the blow-up exponent fit.
    pub fit_levels: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { cells_coarse: 5, cells_fine: 15, fit_levels: 5 }
    }
}

fn scan_cells(domain: &BoxDomain, per_dim: usize) -> Vec<BoxDomain> {
    let dim = domain.dim();
    let mut cells = vec![BoxDomain { bounds: Vec::new() }];
    for d in 0..dim {
        let (a, b) = domain.bounds[d];
        let w = (b - a) / per_dim as f64;
        let mut next = Vec::with_capacity(cells.len() * per_dim);
        for c in &cells {
            for i in 0..per_dim {
                let mut bb = c.bounds.clone();
                bb.push((a + i as f64 * w, a + (i + 1) as f64 * w));
                next.push(BoxDomain { bounds: bb });
            }
        }
        cells = next;
    }
    cells
}

/// Node indices of the field whose coordinates fall in `cell` (half-open on
/// the upper face except at the domain boundary, so cells partition nodes).
fn nodes_in_cell(u: &Field, cell: &BoxDomain) -> Vec<usize> {
    let dim = u.grid.dim();
    (0..u.num_nodes())
        .filter(|&i| {
            let x = u.grid.node_coord(i);
            (0..dim).all(|d| {
                let (lo, hi) = cell.bounds[d];
                let top = u.grid.domain.bounds[d].1;
                x[d] >= lo && (x[d] < hi || (hi >= top && x[d] <= hi))
            })
        })
        .collect()
}

enum EvidenceVerdict {
    Finite,
    Divergent,
    Inconclusive,
}

/// Verdict on the cumulative evidence trail I(t) = ∬_{U×(t,T)} V u, read at
/// the descending ladder times: vanishing gaps or a geometric tail mean a
/// finite limit; persistently non-shrinking gaps mean divergence. Gaps are
/// normalized per unit log time, so the short bottom rung of the ladder
/// (t_min prepended next to the last geometric node) does not distort the
/// ratio pattern.
fn evidence_verdict(evidence: &[(f64, f64)]) -> EvidenceVerdict {
    // evidence is (t, I) with t descending; gaps g_j = I_{j+1} - I_j >= 0
    let gaps: Vec<f64> = evidence
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[0].0 / w[1].0).ln().max(1e-300))
        .collect();
    let total = evidence.last().map(|&(_, i)| i).unwrap_or(0.0);
    if gaps.len() < 3 {
        return EvidenceVerdict::Inconclusive;
    }
    let last = &gaps[gaps.len() - 3..];
    let floor = 1e-9 + 1e-6 * total.abs();
    if last.iter().all(|g| g.abs() <= floor) {
        return EvidenceVerdict::Finite;
    }
    let r1 = last[1] / last[0].max(1e-300);
    let r2 = last[2] / last[1].max(1e-300);
    if r1 >= 0.98 && r2 >= 0.98 {
        return EvidenceVerdict::Divergent;
    }
    if r2 < 0.95 {
        return EvidenceVerdict::Finite;
    }
    EvidenceVerdict::Inconclusive
}

struct CellScan {
    verdict: EvidenceVerdict,
    mass: f64,
    exponent: Option<f64>,
    evidence: Vec<(f64, f64)>,
}

fn scan_one_cell(u: &Field, v: &Potential, cell: &BoxDomain, fit_levels: usize) -> CellScan {
    let nodes = nodes_in_cell(u, cell);
    let vol = u.grid.h.powi(u.grid.dim() as i32);
    let l = u.times.len();

    // f(t_j) = ∫_U V u dx and m(t_j) = ∫_U u dx at each recorded time
    let mut f = vec![0.0; l];
    let mut m = vec![0.0; l];
    for (j, &t) in u.times.iter().enumerate() {
        for &i in &nodes {
            let uu = u.values[j][i];
            m[j] += uu * vol;
            if uu == 0.0 {
                continue;
            }
            let vv = v.eval(&u.grid.node_coord(i), t).unwrap_or(f64::INFINITY);
            if vv.is_finite() {
                f[j] += vv * uu * vol;
            }
        }
    }

    // cumulative tail integral I(t_j) = ∬_{U×(t_j,T)} V u, trapezoid on the
    // ladder, listed with t descending
    let mut evidence = Vec::with_capacity(l);
    let mut acc = 0.0;
    evidence.push((u.times[l - 1], 0.0));
    for j in (0..l - 1).rev() {
        acc += 0.5 * (f[j] + f[j + 1]) * (u.times[j + 1] - u.times[j]);
        evidence.push((u.times[j], acc));
    }

    let verdict = evidence_verdict(&evidence);
    match verdict {
        EvidenceVerdict::Divergent => {
            // blow-up exponent: log-log slope of the cell mass near t_min
            let k = fit_levels.min(l);
            let pts: Vec<(f64, f64)> = (0..k)
                .map(|j| (u.times[j].ln(), m[j].max(1e-300).ln()))
                .collect();
            CellScan {
                verdict,
                mass: m[0],
                exponent: Some(ls_slope(&pts)),
                evidence,
            }
        }
        _ => {
            // 2-point Richardson in t over the last two ladder levels
            let mass = if l >= 2 {
                let (t1, m1) = (u.times[1], m[1]);
                let (t2, m2) = (u.times[0], m[0]);
                (t1 * m2 - t2 * m1) / (t1 - t2)
            } else {
                m[0]
            };
            CellScan { verdict, mass, exponent: None, evidence }
        }
    }
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn ls_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let slope = ls_slope(pts);
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    (sy / n - slope * sx / n, slope)
}

/// Initial trace of a positive solution field: scans the domain at two cell
/// sizes and classifies each coarse cell, demanding divergence at both sizes
/// before declaring a singular cell.
pub fn initial_trace(u: &Field, v: &Potential, opts: &TraceOptions) -> Result<TraceReport> {
    if u.times.len() < 4 {
        return Err(Error::Invalid(
            "trace extraction needs at least 4 recorded time levels".into(),
        ));
    }
    let coarse = scan_cells(&u.grid.domain, opts.cells_coarse);
    let fine = scan_cells(&u.grid.domain, opts.cells_fine);

    let coarse_scans: Vec<CellScan> = coarse
        .par_iter()
        .map(|c| scan_one_cell(u, v, c, opts.fit_levels))
        .collect();
    let fine_divergent: Vec<bool> = fine
        .par_iter()
        .map(|c| {
            matches!(
                scan_one_cell(u, v, c, opts.fit_levels).verdict,
                EvidenceVerdict::Divergent
            )
        })
        .collect();

    let mut cells = Vec::with_capacity(coarse.len());
    let mut notes = Vec::new();
    for (bounds, scan) in coarse.into_iter().zip(coarse_scans) {
        let verdict = match scan.verdict {
            EvidenceVerdict::Finite => CellVerdict::Regular,
            EvidenceVerdict::Inconclusive => CellVerdict::Inconclusive,
            EvidenceVerdict::Divergent => {
                let confirmed = fine
                    .iter()
                    .zip(&fine_divergent)
                    .any(|(fc, &div)| div && fc.intersect(&bounds).is_some());
                if confirmed {
                    CellVerdict::Singular
                } else {
                    notes.push(format!(
                        "cell {:?} divergent at coarse size only: inconclusive",
                        bounds.bounds
                    ));
                    CellVerdict::Inconclusive
                }
            }
        };
        cells.push(TraceCell {
            bounds,
            verdict,
            mass: scan.mass,
            exponent: if verdict == CellVerdict::Singular { scan.exponent } else { None },
            evidence: scan.evidence,
        });
    }
    Ok(TraceReport { cells, notes })
}

#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    /// Worst signed deficit max(u_{μ_u} − u) over probes, relative scale.
    pub worst_deficit: f64,
    pub pass: bool,
    pub probes_checked: usize,
}

/// Verifies u ≥ u_{μ_u} up to 2% of the local scale, where μ_u is the
/// regular-part trace measure re-solved with the same scheme.
pub fn trace_lower_bound_check(
    u: &Field,
    trace: &TraceReport,
    v: &Potential,
) -> Result<LowerBoundReport> {
    let mu = trace.regular_measure(1e-6)?;
    if mu.is_zero() {
        return Ok(LowerBoundReport { worst_deficit: 0.0, pass: true, probes_checked: 0 });
    }
    let t0 = u.times[0];
    let t1 = *u.times.last().unwrap();
    let u_tr = step_solve(v, &u.grid, InitData::Measure(&mu), t0, t1, &StepOptions::default())?;
    let peak = u.values.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let mut worst = 0.0f64;
    let mut checked = 0;
    let stride = (u.num_nodes() / 128).max(1);
    for (j, &t) in u.times.iter().enumerate() {
        let jt = u_tr.time_index(t);
        for i in (0..u.num_nodes()).step_by(stride) {
            let a = u.values[j][i];
            let b = u_tr.values[jt][i];
            let scale = a.max(b).max(1e-3 * peak);
            worst = worst.max((b - a) / scale);
            checked += 1;
        }
    }
    Ok(LowerBoundReport { worst_deficit: worst, pass: worst <= 0.02, probes_checked: checked })
}

#[derive(Debug, Clone)]
pub struct HarnackReport {
    /// Minimal constant C making the inequality hold over all sampled pairs.
    pub constant: f64,
    pub pairs_checked: usize,
    pub declared_c1: Option<f64>,
    /// ((y, s), (x, t)) attaining the constant.
    pub worst_pair: Option<((Vec<f64>, f64), (Vec<f64>, f64))>,
}

/// Audits u(y,s) ≤ u(x,t) · exp(C (|x−y|²/(t−s) + t/s + 1)) over sampled
/// space-time pairs with s < t and reports the minimal such C.
pub fn harnack_audit(u: &Field, c1: Option<f64>) -> Result<HarnackReport> {
    // interior probes only: wall values vanish under Dirichlet runs
    let dim = u.grid.dim();
    let probes: Vec<Vec<f64>> = {
        let inner = BoxDomain {
            bounds: u
                .grid
                .domain
                .bounds
                .iter()
                .map(|(a, b)| {
                    let w = 0.25 * (b - a);
                    (a + w, b - w)
                })
                .collect(),
        };
        // 9 per dim gives unit spacing on the standard inner box, so probes
        // land on exact nodes of every dyadic grid and refinement studies
        // compare the constant at identical physical points
        crate::classify::probe_grid(&inner, if dim == 1 { 9 } else { 3 })
    };
    let mut constant = 0.0f64;
    let mut worst = None;
    let mut pairs = 0;
    let step = (u.times.len() / 8).max(1);
    let times: Vec<f64> = u.times.iter().copied().step_by(step).collect();
    for (si, &s) in times.iter().enumerate() {
        for &t in &times[si + 1..] {
            if t <= s {
                continue;
            }
            for y in &probes {
                let us = u.value_at(y, s);
                if us <= 0.0 {
                    continue;
                }
                for x in &probes {
                    let ut = u.value_at(x, t);
                    if ut <= 0.0 {
                        continue;
                    }
                    pairs += 1;
                    let ratio = (us / ut).ln();
                    if ratio <= 0.0 {
                        continue;
                    }
                    let r2: f64 =
                        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    let arg = r2 / (t - s) + t / s + 1.0;
                    let c = ratio / arg;
                    if c > constant {
                        constant = c;
                        worst = Some(((y.clone(), s), (x.clone(), t)));
                    }
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Invalid("no positive space-time pairs to audit".into()));
    }
    Ok(HarnackReport { constant, pairs_checked: pairs, declared_c1: c1, worst_pair: worst })
}

#[derive(Debug, Clone)]
pub struct RepresentationReport {
    /// Fitted Gaussian decay rate of Γ̂ = e^{−ψ} H_V (slope of the envelope).
    pub gamma: f64,
    /// Fitted amplitude and its two-sided residual bracket.
    pub c_fit: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub probes: usize,
    pub notes: Vec<String>,
}

/// Computes Γ̂(x, y, t) = e^{−ψ(x,t)} H_V(x, y, t) on a probe lattice and
/// fits the Gaussian envelope by regressing ln(τ^{n/2} Γ̂) on |x−y|²/τ,
/// where τ is the effective diffusion time of the mollified kernel start.
/// The residual spread gives the two-sided amplitude bracket, so the fitted
/// envelope holds at every probe by construction; a degenerate or wildly
/// spread fit is reported in the notes.
pub fn representation_check(v: &Potential, grid: &GridSpec) -> Result<RepresentationReport> {
    let dim = grid.dim();
    let y = vec![0.0; dim];
    let sigma = grid.t_min.sqrt();
    let est = kernel_estimate(v, &y, grid, sigma, &StepOptions::default())?;
    let qopts = QuadOptions::default();
    let t_hi = grid.t_max;

    let mut pts: Vec<(f64, f64)> = Vec::new();
    let field = &est.field;
    let t0 = field.times[0];
    let stride = (field.num_nodes() / 64).max(1);
    let tstep = (field.times.len() / 6).max(1);
    for (j, &t) in field.times.iter().enumerate().step_by(tstep) {
        if j == 0 {
            continue;
        }
        let tau = sigma * sigma + (t - t0);
        let psi_cache: Vec<(usize, f64)> = (0..field.num_nodes())
            .step_by(stride)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&i| {
                let x = field.grid.node_coord(i);
                (i, psi(v, &x, t, t_hi, &qopts).unwrap_or(f64::INFINITY))
            })
            .collect();
        for (i, ps) in psi_cache {
            if !ps.is_finite() {
                continue;
            }
            let x = field.grid.node_coord(i);
            let hv = field.values[j][i];
            let gamma_hat = (-ps).exp() * hv;
            let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let xi = r2 / tau;
            if xi > 12.0 || gamma_hat <= 0.0 {
                continue;
            }
            pts.push((xi, (tau.powf(dim as f64 / 2.0) * gamma_hat).ln()));
        }
    }
    if pts.len() < 8 {
        return Err(Error::Scheme("too few usable probes for the envelope fit".into()));
    }
    let (a, b) = ls_fit(&pts);
    let gamma = -b;
    let c_fit = a.exp();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (xi, eta) in &pts {
        let resid = eta - (a + b * xi);
        lo = lo.min(resid);
        hi = hi.max(resid);
    }
    let mut notes = Vec::new();
    if hi - lo > 2.0 {
        notes.push(format!(
            "residual spread {:.2} in log scale: envelope constants far apart",
            hi - lo
        ));
    }
    Ok(RepresentationReport {
        gamma,
        c_fit,
        c_lower: c_fit * lo.exp(),
        c_upper: c_fit * hi.exp(),
        probes: pts.len(),
        notes,
    })
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub candidate_mass: f64,
    pub reduced_mass: f64,
    /// γ_u(μ) trace masses per scanned cell (regular cells of the min field).
    pub gamma_cells: Vec<f64>,
    pub gamma_total: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Finite-family lower bound for the extended-trace supremum ν_S.
    pub nu_s: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub k_list: Vec<f64>,
    pub trace: TraceOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { k_list: vec![1e6, 1e9, 1e12], trace: TraceOptions::default() }
    }
}

/// Sweeping-method extended trace: per candidate μ supported in the singular
/// region, forms v_μ = min{u, u_{μ*}} and reads off γ_u(μ) as its trace.
pub fn sweep_trace(
    u: &Field,
    v: &Potential,
    candidates: &[Measure],
    opts: &SweepOptions,
) -> Result<SweepReport> {
    let trace = initial_trace(u, v, &opts.trace)?;
    let singular: Vec<&TraceCell> = trace.singular_cells();
    let mut notes = Vec::new();
    if singular.is_empty() {
        notes.push("singular set empty: nothing to sweep, extended trace = regular trace".into());
        return Ok(SweepReport { entries: Vec::new(), nu_s: 0.0, notes });
    }
    for mu in candidates {
        for a in &mu.atoms {
            if !singular.iter().any(|c| c.bounds.contains(&a.location)) {
                return Err(Error::Invalid(format!(
                    "candidate atom at {:?} lies outside the detected singular region",
                    a.location
                )));
            }
        }
    }

    let mut entries = Vec::new();
    for mu in candidates {
        let red = reduce(v, mu, &u.grid, &opts.k_list, &StepOptions::default())?;
        // v_μ = min{u, u_{μ*}} on the shared ladder
        let mut vmin = red.u_star.clone();
        for (j, &t) in vmin.times.iter().enumerate() {
            let ju = u.time_index(t);
            for i in 0..vmin.num_nodes() {
                vmin.values[j][i] = vmin.values[j][i].min(u.values[ju][i]);
            }
        }
        vmin.provenance = "sweep min".into();
        let tr = initial_trace(&vmin, v, &opts.trace)?;
        let gamma_cells: Vec<f64> = tr
            .cells
            .iter()
            .map(|c| if c.verdict == CellVerdict::Regular { c.mass.max(0.0) } else { 0.0 })
            .collect();
        let gamma_total: f64 = gamma_cells.iter().sum();
        // γ_u(μ) ≤ μ* ≤ μ cellwise (checked against the candidate cell mass)
        for (c, &g) in tr.cells.iter().zip(&gamma_cells) {
            let mu_cell: f64 = mu
                .atoms
                .iter()
                .filter(|a| c.bounds.contains(&a.location))
                .map(|a| a.weight)
                .sum();
            if g > mu_cell + 0.02 * mu.total_mass().max(1e-12) {
                return Err(Error::Scheme(format!(
                    "sweep trace exceeds the candidate on cell {:?}: {g} > {mu_cell}",
                    c.bounds.bounds
                )));
            }
        }
        entries.push(SweepEntry {
            candidate_mass: mu.total_mass(),
            reduced_mass: red.m_star,
            gamma_cells,
            gamma_total,
        });
    }
    // monotone in nested candidates
    for w in entries.windows(2) {
        if w[0].candidate_mass <= w[1].candidate_mass
            && w[0].gamma_total > w[1].gamma_total + 0.02 * w[1].candidate_mass.max(1e-12)
        {
            return Err(Error::Scheme(
                "sweep trace not monotone across nested candidates".into(),
            ));
        }
    }
    let nu_s = entries.iter().map(|e| e.gamma_total).fold(0.0, f64::max);
    Ok(SweepReport { entries, nu_s, notes })
}
