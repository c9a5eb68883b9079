//! Finite-difference parabolic solver on boxes and the monotone
//! approximation schemes built on it: ball exhaustion, level truncation
//! V^k = min{V,k}, time truncation V_δ, kernel estimation, reduced-measure
//! mass, and the Duhamel-identity residual.
//!
//! Scheme: Crank–Nicolson diffusion (tridiagonal solve in n=1,
//! Peaceman–Rachford splitting in n=2) with the reaction handled by implicit
//! pointwise division u ← u/(1 + Δt·V), which preserves positivity and is
//! monotone in V. Time steps follow a geometric ladder Δt = ε·t so the
//! singular region near t = 0 is resolved at fixed relative cost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd::thomas;
use crate::grid::GridSpec;
use crate::kernel::{heat_kernel_r2, heat_potential};
use crate::measure::Measure;
use crate::potential::Potential;

/// Space-time solution values on a GridSpec, recorded on the grid's
/// geometric time ladder.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: GridSpec,
    /// Recorded times, ascending, starting at the solve's start time.
    pub times: Vec<f64>,
    /// values[j] is the flat node slice at times[j].
    pub values: Vec<Vec<f64>>,
    /// Cumulative reaction mass loss ∬ V u since times[0], per recorded time.
    pub absorbed: Vec<f64>,
    /// Which scheme produced the field, with parameters.
    pub provenance: String,
}

impl Field {
    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    /// Index of the recorded time nearest t.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut err = f64::INFINITY;
        for (j, &s) in self.times.iter().enumerate() {
            let e = (s - t).abs();
            if e < err {
                err = e;
                best = j;
            }
        }
        best
    }

    /// Flat node index nearest x.
    pub fn node_index(&self, x: &[f64]) -> usize {
        let npd = self.grid.nodes_per_dim();
        let mut flat = 0usize;
        let mut stride = 1usize;
        for d in 0..self.grid.dim() {
            let (a, _) = self.grid.domain.bounds[d];
            let i = (((x[d] - a) / self.grid.h).round() as isize)
                .clamp(0, npd[d] as isize - 1) as usize;
            flat += i * stride;
            stride *= npd[d];
        }
        flat
    }

    /// Value at the node and recorded time nearest (x, t).
    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        self.values[self.time_index(t)][self.node_index(x)]
    }

    /// Grid mass ∫ u(·, t_j) dx by the node-sum rule.
    pub fn grid_mass(&self, j: usize) -> f64 {
        let cell = self.grid.h.powi(self.grid.dim() as i32);
        self.values[j].iter().sum::<f64>() * cell
    }

    /// CSV dump of one t-slice: coordinates then value.
    pub fn slice_csv(&self, j: usize) -> String {
        let dim = self.grid.dim();
        let mut out = String::new();
        for d in 0..dim {
            out.push_str(&format!("x{},", d + 1));
        }
        out.push_str("value\n");
        for i in 0..self.num_nodes() {
            let x = self.grid.node_coord(i);
            for v in &x {
                out.push_str(&format!("{v:e},"));
            }
            out.push_str(&format!("{:.17e}\n", self.values[j][i]));
        }
        out
    }
}

/// Initial data for a solve: an explicit node slice or a measure realized as
/// its exact free heat profile at the start time.
pub enum InitData<'a> {
    Slice(Vec<f64>),
    Measure(&'a Measure),
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    /// Relative geometric step: Δt = epsilon · t.
    pub epsilon: f64,
    /// Zero Dirichlet walls; reflecting (Neumann) walls otherwise.
    pub dirichlet: bool,
    /// Extra times to record exactly, besides the grid ladder.
    pub extra_record: Vec<f64>,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { epsilon: 2e-3, dirichlet: true, extra_record: vec![] }
    }
}

/// Free heat profile ℍ[μ](·, t) realized on the grid nodes with exact
/// discrete mass. Atom contributions are cell-averaged in closed form
/// (Gaussian mass per node cell over cell volume), which stays correct even
/// when the Gaussian width √(4t) is below the mesh width; the density part
/// is smooth and sampled pointwise.
pub fn heat_profile(mu: &Measure, grid: &GridSpec, t: f64) -> Vec<f64> {
    let dim = grid.dim();
    let h = grid.h;
    let s = (4.0 * t).sqrt();
    let mut out = vec![0.0; grid.num_nodes()];
    for i in 0..out.len() {
        let x = grid.node_coord(i);
        for a in &mu.atoms {
            let mut cell_mass = a.weight;
            for d in 0..dim {
                let lo = (x[d] - 0.5 * h - a.location[d]) / s;
                let hi = (x[d] + 0.5 * h - a.location[d]) / s;
                cell_mass *= 0.5 * (libm::erf(hi) - libm::erf(lo));
            }
            out[i] += cell_mass / h.powi(dim as i32);
        }
    }
    if let Some(d) = &mu.density {
        let dens_only = Measure {
            dim: mu.dim,
            atoms: Vec::new(),
            density: Some(d.clone()),
        };
        for (i, v) in out.iter_mut().enumerate() {
            *v += heat_potential(&dens_only, &grid.node_coord(i), t, f64::INFINITY).unwrap();
        }
    }
    out
}

/// One Crank–Nicolson diffusion substep of size dt along dimension `d`
/// (full strength in n=1, the Peaceman–Rachford half in n=2 passes dt/2
/// twice with alternating implicit direction).
fn cn_line_sweep(
    u: &mut [f64],
    npd: &[usize],
    d_implicit: usize,
    r_impl: f64,
    r_expl: f64,
    dirichlet: bool,
) {
    let dim = npd.len();
    let n_impl = npd[d_implicit];
    let stride: usize = npd[..d_implicit].iter().product();
    let total: usize = npd.iter().product();
    let n_lines = total / n_impl;

    // explicit part: rhs = (I + r_expl δ²_other) u  — only used in n=2 where
    // "other" is the complementary dimension
    let rhs_base: Vec<f64> = if dim == 2 {
        let d_other = 1 - d_implicit;
        let stride_o: usize = npd[..d_other].iter().product();
        let n_other = npd[d_other];
        (0..total)
            .map(|idx| {
                let io = (idx / stride_o) % n_other;
                let center = u[idx];
                let left = if io > 0 { u[idx - stride_o] } else if dirichlet { 0.0 } else { u[idx + stride_o] };
                let right = if io + 1 < n_other { u[idx + stride_o] } else if dirichlet { 0.0 } else { u[idx - stride_o] };
                center + r_expl * (left - 2.0 * center + right)
            })
            .collect()
    } else {
        // n=1: rhs = (I + r_expl δ²) u along the implicit dimension itself
        (0..total)
            .map(|idx| {
                let i = (idx / stride) % n_impl;
                let center = u[idx];
                let left = if i > 0 { u[idx - stride] } else if dirichlet { 0.0 } else { u[idx + stride] };
                let right = if i + 1 < n_impl { u[idx + stride] } else if dirichlet { 0.0 } else { u[idx - stride] };
                center + r_expl * (left - 2.0 * center + right)
            })
            .collect()
    };

    let mut line = vec![0.0; n_impl];
    for l in 0..n_lines {
        // flat index of line start: decompose l over the non-implicit dims
        let mut base = 0usize;
        let mut rem = l;
        let mut stride_acc = 1usize;
        for d in 0..dim {
            if d == d_implicit {
                stride_acc *= npd[d];
                continue;
            }
            let i = rem % npd[d];
            rem /= npd[d];
            base += i * stride_acc;
            stride_acc *= npd[d];
        }
        for i in 0..n_impl {
            line[i] = rhs_base[base + i * stride];
        }
        if dirichlet {
            // boundary nodes pinned to zero; solve the interior
            let m = n_impl - 2;
            let sub = vec![-r_impl; m - 1];
            let sup = vec![-r_impl; m - 1];
            let diag = vec![1.0 + 2.0 * r_impl; m];
            let mut rhs: Vec<f64> = line[1..n_impl - 1].to_vec();
            thomas(&sub, &diag, &sup, &mut rhs);
            u[base] = 0.0;
            u[base + (n_impl - 1) * stride] = 0.0;
            for i in 0..m {
                u[base + (i + 1) * stride] = rhs[i].max(0.0);
            }
        } else {
            // reflecting ends: δ² at the wall uses the mirrored neighbor
            let mut sub = vec![-r_impl; n_impl - 1];
            let mut sup = vec![-r_impl; n_impl - 1];
            let diag = vec![1.0 + 2.0 * r_impl; n_impl];
            sup[0] = -2.0 * r_impl;
            sub[n_impl - 2] = -2.0 * r_impl;
            let mut rhs = line.clone();
            thomas(&sub, &diag, &sup, &mut rhs);
            for i in 0..n_impl {
                u[base + i * stride] = rhs[i].max(0.0);
            }
        }
    }
}

fn diffusion_step(u: &mut [f64], grid: &GridSpec, dt: f64, dirichlet: bool) {
    let npd = grid.nodes_per_dim();
    let h2 = grid.h * grid.h;
    match grid.dim() {
        1 => {
            let r = dt / (2.0 * h2);
            cn_line_sweep(u, &npd, 0, r, r, dirichlet);
        }
        2 => {
            // Peaceman–Rachford: x-implicit/y-explicit, then y-implicit/x-explicit
            let r = dt / (2.0 * h2);
            cn_line_sweep(u, &npd, 0, r, r, dirichlet);
            cn_line_sweep(u, &npd, 1, r, r, dirichlet);
        }
        d => panic!("PDE solves support n in {{1,2}}, got {d}"),
    }
}

/// Advances init from t0 to t1, recording slices on the grid time ladder
/// (plus `extra_record`). The reaction division is exact bookkeeping: the
/// absorbed-mass accumulator carries Σ Δt·V·u_new per node per step.
pub fn step_solve(
    v: &Potential,
    grid: &GridSpec,
    init: InitData,
    t0: f64,
    t1: f64,
    opts: &StepOptions,
) -> Result<Field> {
    if !(t0 > 0.0 && t0 < t1) {
        return Err(Error::Domain(format!("need 0 < t0 < t1, got {t0}, {t1}")));
    }
    let mut u = match init {
        InitData::Slice(s) => {
            if s.len() != grid.num_nodes() {
                return Err(Error::Invalid("init slice does not match grid".into()));
            }
            if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Invalid("init must be finite and nonnegative".into()));
            }
            s
        }
        InitData::Measure(mu) => heat_profile(mu, grid, t0),
    };
    if opts.dirichlet {
        zero_walls(&mut u, grid);
    }

    // record times: ladder nodes and extras inside (t0, t1], plus endpoints
    let mut rec: Vec<f64> = grid
        .time_nodes()
        .into_iter()
        .chain(opts.extra_record.iter().copied())
        .filter(|&t| t > t0 * (1.0 + 1e-12) && t < t1 * (1.0 - 1e-12))
        .chain(std::iter::once(t1))
        .collect();
    rec.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rec.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());

    let nodes: Vec<Vec<f64>> = (0..grid.num_nodes()).map(|i| grid.node_coord(i)).collect();
    let cell = grid.h.powi(grid.dim() as i32);

    let mut times = vec![t0];
    let mut values = vec![u.clone()];
    let mut absorbed = vec![0.0];
    let mut lost = 0.0;

    let mut t = t0;
    for &target in &rec {
        while t < target * (1.0 - 1e-14) {
            let mut dt = opts.epsilon * t;
            if t + dt >= target * (1.0 - 1e-12) {
                dt = target - t;
            }
            // resolve V: subdivide when Δt·max V is too stiff
            let t_new = t + dt;
            let vmax = nodes
                .iter()
                .map(|x| v.eval(x, t_new).unwrap_or(f64::INFINITY))
                .filter(|val| val.is_finite())
                .fold(0.0f64, f64::max);
            let subdiv = if dt * vmax > 1e3 {
                (dt * vmax / 1e3).ceil() as usize
            } else {
                1
            };
            if subdiv > 100_000 {
                return Err(Error::Scheme(format!(
                    "step at t={t} cannot resolve the potential (needs {subdiv} substeps)"
                )));
            }
            let sdt = dt / subdiv as f64;
            for s in 0..subdiv {
                let ts = t + sdt * (s as f64 + 1.0);
                diffusion_step(&mut u, grid, sdt, opts.dirichlet);
                for (i, x) in nodes.iter().enumerate() {
                    let vv = v.eval(x, ts)?;
                    if vv == 0.0 {
                        continue;
                    }
                    let old = u[i];
                    let new = if vv.is_finite() { old / (1.0 + sdt * vv) } else { 0.0 };
                    u[i] = new;
                    lost += (old - new) * cell;
                }
            }
            t = t_new;
        }
        t = target;
        times.push(t);
        values.push(u.clone());
        absorbed.push(lost);
    }

    Ok(Field {
        grid: grid.clone(),
        times,
        values,
        absorbed,
        provenance: String::new(),
    })
}

fn zero_walls(u: &mut [f64], grid: &GridSpec) {
    let npd = grid.nodes_per_dim();
    let total = grid.num_nodes();
    for idx in 0..total {
        let mut rem = idx;
        for d in 0..grid.dim() {
            let i = rem % npd[d];
            rem /= npd[d];
            if i == 0 || i + 1 == npd[d] {
                u[idx] = 0.0;
                break;
            }
        }
    }
}

/// Pointwise monotonicity between two fields on the same time ladder, at the
/// nodes of the spatially smaller field. `lo` must not exceed `hi` beyond
/// the discretization tolerance 1e−6 + 1% relative.
fn assert_pointwise_le(lo: &Field, hi: &Field, label: &str) -> Result<()> {
    for (j, &t) in lo.times.iter().enumerate() {
        let jh = hi.time_index(t);
        for i in 0..lo.num_nodes() {
            let x = lo.grid.node_coord(i);
            let a = lo.values[j][i];
            let b = hi.values[jh][hi.node_index(&x)];
            if a > b + 1e-6 + 0.01 * b.abs() {
                return Err(Error::Scheme(format!(
                    "monotonicity violation ({label}) at x={x:?}, t={t}: {a} > {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Ball-exhaustion sweep: Dirichlet solves on B_R with initial data χ_{B_R}μ,
/// increasing in R. Radii should be grid-aligned multiples of h.
pub fn solve_exhaustion(
    v: &Potential,
    mu: &Measure,
    r_list: &[f64],
    grid: &GridSpec,
    opts: &StepOptions,
) -> Result<Vec<Field>> {
    if r_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("R_list must be increasing".into()));
    }
    let fields: Vec<Result<Field>> = r_list
        .par_iter()
        .map(|&r| {
            let domain = crate::grid::BoxDomain::centered_cube(mu.dim, r);
            let g = GridSpec::new(domain.clone(), grid.h, grid.t_min, grid.t_max, grid.ratio)?;
            let mu_r = mu.restrict(&domain);
            let mut f = step_solve(
                v,
                &g,
                InitData::Measure(&mu_r),
                grid.t_min,
                grid.t_max,
                &StepOptions { dirichlet: true, ..opts.clone() },
            )?;
            f.provenance = format!("exhaustion R={r}");
            Ok(f)
        })
        .collect();
    let fields: Vec<Field> = fields.into_iter().collect::<Result<_>>()?;
    for w in fields.windows(2) {
        assert_pointwise_le(&w[0], &w[1], "u_R increasing in R")?;
    }
    Ok(fields)
}

/// Level-truncation sweep: solves with V^k = min{V,k}, nonincreasing in k.
/// Starts at the grid's t_min with ℍ[μ] damped by the exact accumulated
/// absorption of V^k when V is space-independent.
pub fn solve_level_truncation(
    v: &Potential,
    mu: &Measure,
    k_list: &[f64],
    grid: &GridSpec,
    opts: &StepOptions,
) -> Result<Vec<Field>> {
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("k_list must be increasing".into()));
    }
    let base = heat_profile(mu, grid, grid.t_min);
    let fields: Vec<Result<Field>> = k_list
        .par_iter()
        .map(|&k| {
            let vk = v.level_truncate(k);
            let damping = if vk.is_space_independent() {
                vk.accumulated_absorption(grid.t_min)
                    .map(|a| (-a).exp())
                    .unwrap_or(1.0)
            } else {
                1.0
            };
            let init: Vec<f64> = base.iter().map(|&x| x * damping).collect();
            let mut f = step_solve(
                &vk,
                grid,
                InitData::Slice(init),
                grid.t_min,
                grid.t_max,
                opts,
            )?;
            f.provenance = format!("level k={k}");
            Ok(f)
        })
        .collect();
    let fields: Vec<Field> = fields.into_iter().collect::<Result<_>>()?;
    for w in fields.windows(2) {
        assert_pointwise_le(&w[1], &w[0], "u_k nonincreasing in k")?;
    }
    Ok(fields)
}

/// Time-truncation sweep: V_δ vanishes before δ (free flow there); the
/// solutions are nonincreasing as δ decreases.
pub fn solve_time_truncation(
    v: &Potential,
    mu: &Measure,
    delta_list: &[f64],
    grid: &GridSpec,
    opts: &StepOptions,
) -> Result<Vec<Field>> {
    if delta_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Invalid("delta_list must be decreasing".into()));
    }
    let fields: Vec<Result<Field>> = delta_list
        .par_iter()
        .map(|&delta| {
            let vd = v.time_truncate(delta);
            let mut f = step_solve(
                &vd,
                grid,
                InitData::Measure(mu),
                grid.t_min,
                grid.t_max,
                opts,
            )?;
            f.provenance = format!("time-truncation delta={delta}");
            Ok(f)
        })
        .collect();
    let fields: Vec<Field> = fields.into_iter().collect::<Result<_>>()?;
    for w in fields.windows(2) {
        assert_pointwise_le(&w[1], &w[0], "u_delta nonincreasing as delta decreases")?;
    }
    Ok(fields)
}

/// Comparison principle 0 ≤ u ≤ ℍ[μ] at all recorded slices (sampled nodes).
pub fn comparison_check(field: &Field, mu: &Measure) -> Result<()> {
    let n = field.num_nodes();
    let stride = (n / 64).max(1);
    // below ~4h² the discrete profile of a near-delta is a cell average, not
    // a pointwise kernel sample, so the comparison only binds once resolved
    let t_resolved = 4.0 * field.grid.h * field.grid.h;
    for (j, &t) in field.times.iter().enumerate() {
        if t < t_resolved {
            continue;
        }
        let peak = field.values[j].iter().fold(0.0f64, |m, &x| m.max(x));
        for i in (0..n).step_by(stride) {
            let u = field.values[j][i];
            if u < 0.0 {
                return Err(Error::Scheme(format!("negative value at t={t}")));
            }
            let x = field.grid.node_coord(i);
            let cap = heat_potential(mu, &x, t, f64::INFINITY)?;
            if u > cap + 0.01 * cap + 1e-3 * peak {
                return Err(Error::Scheme(format!(
                    "comparison violation at x={x:?}, t={t}: u={u} > H[mu]={cap}"
                )));
            }
        }
    }
    Ok(())
}

/// Numerical kernel H_V(·, y, ·): the solve started from the mollified Dirac
/// H(· − y, σ²) at t_min with the exact head damping when available.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub y: Vec<f64>,
    pub sigma: f64,
    pub exhaustion_radius: f64,
    pub field: Field,
}

impl KernelEstimate {
    /// Free-kernel value the estimate is compared against (mollified match).
    pub fn free_kernel(&self, x: &[f64], t: f64) -> f64 {
        let r2: f64 = x.iter().zip(&self.y).map(|(a, b)| (a - b) * (a - b)).sum();
        let t_eff = self.sigma * self.sigma + (t - self.field.times[0]);
        heat_kernel_r2(r2, t_eff, self.y.len()).unwrap()
    }
}

pub fn kernel_estimate(
    v: &Potential,
    y: &[f64],
    grid: &GridSpec,
    sigma: f64,
    opts: &StepOptions,
) -> Result<KernelEstimate> {
    if sigma < 2.0 * grid.h {
        return Err(Error::Invalid(format!(
            "mollification sigma={sigma} not resolvable at h={}",
            grid.h
        )));
    }
    let damping = if v.is_space_independent() {
        v.accumulated_absorption(grid.t_min)
            .map(|a| (-a).exp())
            .unwrap_or(1.0)
    } else {
        1.0
    };
    let mollified = Measure::dirac(y.to_vec(), 1.0)?;
    let init: Vec<f64> = heat_profile(&mollified, grid, sigma * sigma)
        .into_iter()
        .map(|x| x * damping)
        .collect();
    let mut field = step_solve(v, grid, InitData::Slice(init), grid.t_min, grid.t_max, opts)?;
    field.provenance = format!("kernel estimate y={y:?}, sigma={sigma}");
    let est = KernelEstimate {
        y: y.to_vec(),
        sigma,
        exhaustion_radius: grid.domain.bounds[0].1,
        field,
    };
    // two-sided sanity: 0 ≤ H_V ≤ H pointwise (free kernel dominates); the
    // far Gaussian tail is excused up to 1e-3 of the peak, where the discrete
    // scheme's algebraic tails sit above the continuum kernel
    let n = est.field.num_nodes();
    let stride = (n / 128).max(1);
    for (j, &t) in est.field.times.iter().enumerate() {
        let peak = est.free_kernel(&est.y.clone(), t);
        for i in (0..n).step_by(stride) {
            let u = est.field.values[j][i];
            let x = est.field.grid.node_coord(i);
            let cap = est.free_kernel(&x, t);
            if u > cap + 0.01 * cap + 1e-3 * peak {
                return Err(Error::Scheme(format!(
                    "kernel estimate exceeds the free kernel at x={x:?}, t={t}"
                )));
            }
        }
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceVerdict {
    Converged,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub u_star: Field,
    /// Estimated total mass of the reduced measure μ*.
    pub m_star: f64,
    /// (t, m*(t)) at the three probe times.
    pub masses: Vec<(f64, f64)>,
    /// Mass-balance drift across probes, relative to max(m*, μ total mass).
    pub drift: f64,
    pub sweep_converged: bool,
    pub verdict: ReduceVerdict,
    pub notes: Vec<String>,
}

/// Reduced-measure mass via the k-sweep limit and the mass-balance identity
/// m*(t) = ∫ u*(·,t) dx + ∬_{(0,t)} V u*. The reaction losses are tracked
/// exactly per step; the head (0, t_min) contributes nothing in the limit
/// (u* vanishes there for non-admissible data, and the admissible head mass
/// is below the grid tolerance at t_min = 1e−5·T).
pub fn reduce(
    v: &Potential,
    mu: &Measure,
    grid: &GridSpec,
    k_list: &[f64],
    opts: &StepOptions,
) -> Result<ReduceOutcome> {
    let fields = solve_level_truncation(v, mu, k_list, grid, opts)?;
    let last = fields.last().unwrap().clone();
    let mut notes = Vec::new();

    // Cauchy check in the mass scale of μ: pointwise relative gaps are
    // meaningless when the limit vanishes, but the balance masses m_k(t)
    // converge at the rate of the head absorption
    let sweep_converged = if fields.len() >= 2 {
        let a = &fields[fields.len() - 2];
        let b = &fields[fields.len() - 1];
        let scale = mu.total_mass().max(1e-12);
        (0..b.times.len()).all(|j| {
            let ma = a.grid_mass(j) + a.absorbed[j];
            let mb = b.grid_mass(j) + b.absorbed[j];
            (ma - mb).abs() <= 0.01 * scale
        })
    } else {
        false
    };
    if !sweep_converged {
        notes.push("k-sweep not yet converged: last two members differ by more than 1%".into());
    }

    let t_hi = grid.t_max;
    let probes = [0.25 * t_hi, 0.5 * t_hi, t_hi];
    let masses: Vec<(f64, f64)> = probes
        .iter()
        .map(|&t| {
            let j = last.time_index(t);
            (last.times[j], last.grid_mass(j) + last.absorbed[j])
        })
        .collect();
    let mut sorted: Vec<f64> = masses.iter().map(|&(_, m)| m).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m_star = sorted[1];
    let scale = m_star.abs().max(mu.total_mass()).max(1e-12);
    let drift = (sorted[2] - sorted[0]) / scale;
    let verdict = if drift > 0.05 || !sweep_converged {
        ReduceVerdict::Inconclusive
    } else {
        ReduceVerdict::Converged
    };
    if drift > 0.05 {
        notes.push(format!("mass-balance drift {drift:.3} exceeds 5%: grid too coarse"));
    }
    Ok(ReduceOutcome {
        u_star: last,
        m_star,
        masses,
        drift,
        sweep_converged,
        verdict,
        notes,
    })
}

/// Max relative residual of the Duhamel identity
/// u(x,t) + ∬_{(t0,t)} H(x−z, t−s) V z u dz ds = ℍ[μ*](x,t)
/// over the probe points and times, with the s→t endpoint handled by the
/// delta limit H(·, t−s) → δ (the integrand tends to V·u at x).
pub fn duhamel_residual(
    u: &Field,
    v: &Potential,
    mu_star_candidate: &Measure,
    probes_x: &[Vec<f64>],
    probe_times: &[f64],
) -> f64 {
    let dim = u.grid.dim();
    let cell = u.grid.h.powi(dim as i32);
    let nodes: Vec<Vec<f64>> = (0..u.num_nodes()).map(|i| u.grid.node_coord(i)).collect();
    let peak = u.values.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let floor = 1e-3 * peak.max(1e-12);
    let mut worst = 0.0f64;
    for x in probes_x {
        for &t in probe_times {
            let jt = u.time_index(t);
            let t = u.times[jt];
            // g(s_j) = ∫ H(x−z, t−s_j) V(z,s_j) u(z,s_j) dz; g(t) = (Vu)(x,t)
            let g: Vec<f64> = (0..=jt)
                .map(|j| {
                    let s = u.times[j];
                    if j == jt {
                        let vv = v.eval(x, s).unwrap_or(f64::INFINITY);
                        let ux = u.values[j][u.node_index(x)];
                        return if vv.is_finite() { vv * ux } else { 0.0 };
                    }
                    let mut sum = 0.0;
                    for (i, z) in nodes.iter().enumerate() {
                        let uz = u.values[j][i];
                        if uz == 0.0 {
                            continue;
                        }
                        let vv = v.eval(z, s).unwrap_or(f64::INFINITY);
                        if !vv.is_finite() || vv == 0.0 {
                            continue;
                        }
                        let r2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                        sum += heat_kernel_r2(r2, t - s, dim).unwrap() * vv * uz;
                    }
                    sum * cell
                })
                .collect();
            let mut duhamel = 0.0;
            for j in 0..jt {
                duhamel += 0.5 * (g[j] + g[j + 1]) * (u.times[j + 1] - u.times[j]);
            }
            let lhs = u.values[jt][u.node_index(x)] + duhamel;
            let rhs = if mu_star_candidate.is_zero() {
                0.0
            } else {
                heat_potential(mu_star_candidate, x, t, f64::INFINITY).unwrap()
            };
            worst = worst.max((lhs - rhs).abs() / (rhs.abs() + floor));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;
    use crate::kernel::heat_kernel;

    fn default_grid_1d() -> GridSpec {
        GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 0.05, 1.0, 0.75).unwrap()
    }

    #[test]
    fn free_heat_flow_reproduces_kernel() {
        let grid = default_grid_1d();
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let f = step_solve(
            &Potential::zero(1),
            &grid,
            InitData::Measure(&mu),
            0.05,
            1.0,
            &StepOptions::default(),
        )
        .unwrap();
        let j = f.times.len() - 1;
        assert!((f.times[j] - 1.0).abs() < 1e-12);
        let peak = heat_kernel(&[0.0], 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..f.num_nodes() {
            let x = f.grid.node_coord(i);
            let exact = heat_kernel(&x, 1.0).unwrap();
            worst = worst.max((f.values[j][i] - exact).abs() / peak);
        }
        assert!(worst < 0.01, "free-kernel error {worst}");
    }

    #[test]
    fn closed_form_singular_solution() {
        // V = c/t: u(x,t) = t^{-c} H[delta_0](x,t)
        let c = 0.5;
        let grid = default_grid_1d();
        let v = Potential::time_power(1, c, 1.0);
        let t0: f64 = 0.05;
        let init: Vec<f64> = (0..grid.num_nodes())
            .map(|i| t0.powf(-c) * heat_kernel(&grid.node_coord(i), t0).unwrap())
            .collect();
        let f = step_solve(&v, &grid, InitData::Slice(init), t0, 1.0, &StepOptions::default())
            .unwrap();
        let j = f.times.len() - 1;
        let peak = heat_kernel(&[0.0], 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..f.num_nodes() {
            let x = f.grid.node_coord(i);
            let exact = heat_kernel(&x, 1.0).unwrap(); // t^{-c} = 1 at t = 1
            worst = worst.max((f.values[j][i] - exact).abs() / peak);
        }
        assert!(worst < 0.01, "closed-form error {worst}");
    }

    #[test]
    fn zero_init_stays_zero() {
        let grid = default_grid_1d();
        let f = step_solve(
            &Potential::time_power(1, 1.0, 0.5),
            &grid,
            InitData::Measure(&Measure::zero(1)),
            0.05,
            1.0,
            &StepOptions::default(),
        )
        .unwrap();
        assert!(f.values.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn absorption_factor_matches_analytic_law() {
        // u_k(0, t) = e^{-c} (c/(kt))^c H(0,t) for V = c/t truncated at k
        let c = 0.5;
        let k = 100.0;
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-4, 1.0, 0.75)
            .unwrap();
        let v = Potential::time_power(1, c, 1.0);
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let opts = StepOptions { extra_record: vec![0.2], ..StepOptions::default() };
        let fields = solve_level_truncation(&v, &mu, &[k], &grid, &opts).unwrap();
        let t = 0.2;
        let got = fields[0].value_at(&[0.0], t);
        let expect = (-c as f64).exp() * (c / (k * t)).powf(c) * heat_kernel(&[0.0], t).unwrap();
        let rel = (got - expect).abs() / expect;
        assert!(rel < 0.02, "absorption factor error {rel}: {got} vs {expect}");
    }

    #[test]
    fn level_sweep_monotone_and_rate() {
        let c = 0.5;
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-4, 1.0, 0.75)
            .unwrap();
        let v = Potential::time_power(1, c, 1.0);
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let opts = StepOptions { extra_record: vec![0.2], ..StepOptions::default() };
        let ks = [100.0, 1000.0, 10_000.0];
        let fields = solve_level_truncation(&v, &mu, &ks, &grid, &opts).unwrap();
        let us: Vec<f64> = fields.iter().map(|f| f.value_at(&[0.0], 0.2)).collect();
        assert!(us[0] > us[1] && us[1] > us[2]);
        // decay exponent in k
        let slope = (us[2] / us[0]).ln() / (ks[2] / ks[0]).ln();
        assert!((slope + c).abs() < 0.1 * c, "fitted exponent {slope}");
    }

    #[test]
    fn bounded_v_insensitive_to_inactive_cap() {
        let grid = default_grid_1d();
        let v = Potential::bounded_bump(1, 2.0, BoxDomain::centered_cube(1, 1.0));
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let fields =
            solve_level_truncation(&v, &mu, &[5.0, 50.0], &grid, &StepOptions::default()).unwrap();
        let j = fields[0].times.len() - 1;
        for i in 0..fields[0].num_nodes() {
            assert!((fields[0].values[j][i] - fields[1].values[j][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustion_monotone_and_converged_at_large_r() {
        let v = Potential::time_power(1, 1.0, 0.5);
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let grid = default_grid_1d();
        let fields = solve_exhaustion(&v, &mu, &[2.0, 4.0, 8.0], &grid, &StepOptions::default())
            .unwrap();
        // far walls: N=0 case gap below 1e-6 is checked in the acceptance
        // suite; here monotone increase already passed inside the sweep
        assert_eq!(fields.len(), 3);
        let probe = fields[2].value_at(&[0.0], 1.0);
        assert!(probe > 0.0);
        for f in &fields {
            comparison_check(f, &mu).unwrap();
        }
    }

    #[test]
    fn exhaustion_of_outside_support_is_zero() {
        let v = Potential::zero(1);
        let mu = Measure::dirac(vec![5.0], 1.0).unwrap();
        let grid = default_grid_1d();
        let fields = solve_exhaustion(&v, &mu, &[2.0, 8.0], &grid, &StepOptions::default())
            .unwrap();
        assert!(fields[0].values.iter().flatten().all(|&x| x == 0.0));
        assert!(fields[1].values.iter().flatten().any(|&x| x > 0.0));
    }

    #[test]
    fn time_truncation_free_above_horizon_and_monotone() {
        let v = Potential::time_power(1, 0.5, 1.0);
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-3, 1.0, 0.75)
            .unwrap();
        let fields = solve_time_truncation(&v, &mu, &[2.0, 0.1, 0.01], &grid, &StepOptions::default())
            .unwrap();
        // delta >= T: V_delta = 0, free flow
        let f = &fields[0];
        let j = f.times.len() - 1;
        let peak = heat_kernel(&[0.0], 1.0).unwrap();
        for i in 0..f.num_nodes() {
            let exact = heat_kernel(&f.grid.node_coord(i), 1.0).unwrap();
            assert!((f.values[j][i] - exact).abs() / peak < 0.01);
        }
        // smaller delta absorbs more
        assert!(fields[2].value_at(&[0.0], 1.0) < fields[1].value_at(&[0.0], 1.0));
    }

    #[test]
    fn kernel_estimate_free_case() {
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 0.04, 1.0, 0.75)
            .unwrap();
        let est = kernel_estimate(&Potential::zero(1), &[0.0], &grid, 0.2, &StepOptions::default())
            .unwrap();
        // init H(x, sigma^2=0.04) at t_min=0.04 evolves as H(x, t)
        let j = est.field.times.len() - 1;
        let t = est.field.times[j];
        let peak = heat_kernel(&[0.0], t).unwrap();
        for i in (0..est.field.num_nodes()).step_by(4) {
            let x = est.field.grid.node_coord(i);
            let exact = est.free_kernel(&x, t);
            assert!((est.field.values[j][i] - exact).abs() / peak < 0.01);
        }
    }

    #[test]
    fn kernel_estimate_requires_resolvable_sigma() {
        let grid = default_grid_1d();
        assert!(kernel_estimate(&Potential::zero(1), &[0.0], &grid, 0.01, &StepOptions::default())
            .is_err());
    }

    #[test]
    fn reduce_dichotomy_singular_case() {
        // V = c/t kills the Dirac: m* = 0
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-5, 1.0, 0.75)
            .unwrap();
        let v = Potential::time_power(1, 0.5, 1.0);
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let out = reduce(&v, &mu, &grid, &[1e6, 1e9, 1e12], &StepOptions::default()).unwrap();
        assert!(out.m_star.abs() < 0.02, "m_star = {}", out.m_star);
        assert!(out.drift < 0.02, "drift = {}", out.drift);
        assert!(out.sweep_converged);
    }

    #[test]
    fn reduce_zero_measure() {
        let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-4, 1.0, 0.75)
            .unwrap();
        let v = Potential::time_power(1, 0.5, 1.0);
        let out = reduce(&v, &Measure::zero(1), &grid, &[10.0, 100.0], &StepOptions::default())
            .unwrap();
        assert_eq!(out.m_star, 0.0);
    }

    #[test]
    fn duhamel_identity_free_case_and_mass_detection() {
        let grid = default_grid_1d();
        let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
        let f = step_solve(
            &Potential::zero(1),
            &grid,
            InitData::Measure(&mu),
            0.05,
            1.0,
            &StepOptions::default(),
        )
        .unwrap();
        let probes = vec![vec![0.0], vec![0.5], vec![1.0]];
        let r = duhamel_residual(&f, &Potential::zero(1), &mu, &probes, &[0.5, 1.0]);
        assert!(r < 1e-3, "free residual {r}");

        let mu2 = Measure::dirac(vec![0.0], 2.0).unwrap();
        let r2 = duhamel_residual(&f, &Potential::zero(1), &mu2, &probes, &[1.0]);
        assert!(r2 > 0.3, "wrong-mass residual {r2}");
    }

    #[test]
    fn two_dimensional_free_flow() {
        let grid = GridSpec::new(BoxDomain::centered_cube(2, 6.0), 1.0 / 8.0, 0.05, 0.5, 0.75)
            .unwrap();
        let mu = Measure::dirac(vec![0.0, 0.0], 1.0).unwrap();
        let f = step_solve(
            &Potential::zero(2),
            &grid,
            InitData::Measure(&mu),
            0.05,
            0.5,
            &StepOptions::default(),
        )
        .unwrap();
        let j = f.times.len() - 1;
        let peak = heat_kernel(&[0.0, 0.0], 0.5).unwrap();
        let mut worst = 0.0f64;
        for i in 0..f.num_nodes() {
            let x = f.grid.node_coord(i);
            let exact = heat_kernel(&x, 0.5).unwrap();
            worst = worst.max((f.values[j][i] - exact).abs() / peak);
        }
        assert!(worst < 0.01, "2-d free-flow error {worst}");
    }
}
