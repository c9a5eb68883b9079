//! Subcommand implementations. Every command computes in memory and returns
//! the full set of output files; the caller writes them in one pass so a
//! failing run leaves no partial artifacts.

use heatlab_core::classify::{
    admissibility, capacity_compact, capacity_dual_check, psi, singular_scan,
    strong_subcritical_sufficient, subcritical_check, thm_f_criterion, ClassificationReport,
    ReportVerdict, SingularVerdict, TestFunction,
};
use heatlab_core::solver::{
    comparison_check, duhamel_residual, kernel_estimate, reduce, solve_exhaustion,
    solve_level_truncation, solve_time_truncation, step_solve, InitData, ReduceVerdict,
    StepOptions,
};
use heatlab_core::trace::{
    harnack_audit, initial_trace, representation_check, trace_lower_bound_check, CellVerdict,
    TraceOptions,
};
use heatlab_core::{
    heat_kernel, BoxDomain, GridSpec, Measure, Potential, QuadOptions, Result, Verdict,
};

use crate::config::ExperimentConfig;

pub struct Outcome {
    /// (relative file name, contents); written by the single-writer caller.
    pub files: Vec<(String, String)>,
    pub inconclusive: usize,
    pub failures: usize,
    pub summary: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { files: Vec::new(), inconclusive: 0, failures: 0, summary: Vec::new() }
    }

    fn push_report(&mut self, stem: &str, report: &ClassificationReport) {
        self.files.push((format!("{stem}.csv"), report.to_csv()));
        let mut index = String::from("probe_index,trail_file\n");
        for (i, p) in report.probes.iter().enumerate() {
            let name = format!("trail_{stem}_p{i:03}.csv");
            index.push_str(&format!("{i},{name}\n"));
            self.files.push((name, p.trail.to_csv()));
        }
        self.files.push((format!("{stem}_trails.csv"), index));
        if report.verdict == ReportVerdict::Inconclusive {
            self.inconclusive += 1;
        }
        self.inconclusive += report
            .probes
            .iter()
            .filter(|p| p.trail.verdict == Verdict::Inconclusive)
            .count();
        self.summary
            .push(format!("{stem}: {}", report.verdict.label()));
    }
}

fn quad_opts(cfg: &ExperimentConfig) -> QuadOptions {
    QuadOptions { rel_tol: cfg.rel_tol, ..QuadOptions::default() }
}

pub fn classify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = quad_opts(cfg);
    let mut out = Outcome::new();
    let adm = admissibility(&cfg.potential, &cfg.measure, cfg.radius, cfg.horizon, &opts)?;
    out.push_report("classify_admissibility", &adm);
    let sub = subcritical_check(&cfg.potential, cfg.radius, cfg.horizon, &cfg.probes, &opts);
    out.push_report("classify_subcritical", &sub);
    let strong = strong_subcritical_sufficient(
        &cfg.potential,
        cfg.horizon,
        &cfg.probes,
        &cfg.lambda_levels,
        cfg.strong_tol,
        &opts,
    );
    out.push_report("classify_strong_subcritical", &strong);
    Ok(out)
}

pub fn scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = quad_opts(cfg);
    let mut out = Outcome::new();
    let report = singular_scan(&cfg.potential, cfg.horizon, &cfg.probes, &opts);
    out.push_report("scan", &report);
    Ok(out)
}

pub fn capacity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = quad_opts(cfg);
    let mut out = Outcome::new();
    let report = capacity_compact(&cfg.potential, cfg.horizon, &cfg.probes, &opts);
    out.push_report("capacity", &report);

    // constant test functions on the padded probe hull
    let dim = cfg.dim();
    let hull: Vec<(f64, f64)> = (0..dim)
        .map(|d| {
            let lo = cfg.probes.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = cfg.probes.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            (lo - 8.0, hi + 8.0)
        })
        .collect();
    let support = BoxDomain::new(hull)?;
    let family: Vec<TestFunction> = (1..=20)
        .map(|i| TestFunction { amplitude: 0.05 * i as f64, support: support.clone() })
        .collect();
    let dual = capacity_dual_check(&cfg.potential, cfg.horizon, &cfg.probes, &family, &opts);
    let mut csv = String::from("amplitude,min_transform,feasible\n");
    for c in &dual.certificates {
        csv.push_str(&format!(
            "{:e},{:.17e},{}\n",
            c.amplitude, c.min_transform, c.feasible
        ));
    }
    match dual.best_bound {
        Some(b) => csv.push_str(&format!("best_bound,{b:.17e},\n")),
        None => {
            csv.push_str("best_bound,,\n");
            out.inconclusive += 1;
        }
    }
    out.files.push(("capacity_dual.csv".into(), csv));
    out.summary.push(format!(
        "capacity dual bound: {:?}",
        dual.best_bound
    ));
    Ok(out)
}

pub fn psi_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = quad_opts(cfg);
    let mut out = Outcome::new();
    let mut csv = String::new();
    for d in 0..cfg.dim() {
        csv.push_str(&format!("x{},", d + 1));
    }
    csv.push_str("t,psi\n");
    for p in &cfg.probes {
        let value = psi(&cfg.potential, p, cfg.psi_t, cfg.horizon, &opts)?;
        for x in p {
            csv.push_str(&format!("{x:e},"));
        }
        csv.push_str(&format!("{:e},{:.17e}\n", cfg.psi_t, value));
    }
    out.files.push(("psi.csv".into(), csv));

    let mut tf = String::from("probe_index,verdict,samples_file\n");
    for (i, p) in cfg.probes.iter().enumerate() {
        let rep = thm_f_criterion(&cfg.potential, p, cfg.horizon, &opts);
        let name = format!("trail_thmf_p{i:03}.csv");
        tf.push_str(&format!("{i},{},{name}\n", rep.verdict.label()));
        let mut samples = String::from("t,psi\n");
        for (t, v) in &rep.samples {
            samples.push_str(&format!("{t:e},{v:.17e}\n"));
        }
        out.files.push((name, samples));
        if rep.verdict == SingularVerdict::Inconclusive {
            out.inconclusive += 1;
        }
        out.summary
            .push(format!("thmF probe {i}: {}", rep.verdict.label()));
    }
    out.files.push(("thmf.csv".into(), tf));
    Ok(out)
}

fn field_outputs(
    out: &mut Outcome,
    stem: &str,
    field: &heatlab_core::Field,
) {
    let mut summary = String::from("t,mass,absorbed,peak\n");
    let n = field.times.len();
    let step = (n / 8).max(1);
    for j in 0..n {
        let peak = field.values[j].iter().fold(0.0f64, |m, &x| m.max(x));
        summary.push_str(&format!(
            "{:e},{:.17e},{:.17e},{:.17e}\n",
            field.times[j],
            field.grid_mass(j),
            field.absorbed[j],
            peak
        ));
        if j % step == 0 || j == n - 1 {
            out.files
                .push((format!("{stem}_slice_{j:03}.csv"), field.slice_csv(j)));
        }
    }
    out.files.push((format!("{stem}_summary.csv"), summary));
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    let field = step_solve(
        &cfg.potential,
        &cfg.grid,
        InitData::Measure(&cfg.measure),
        cfg.grid.t_min,
        cfg.horizon,
        &StepOptions::default(),
    )?;
    comparison_check(&field, &cfg.measure)?;
    field_outputs(&mut out, "solve", &field);

    // Duhamel residual against the data measure itself
    let probes: Vec<Vec<f64>> = cfg.probes.clone();
    let r = duhamel_residual(
        &field,
        &cfg.potential,
        &cfg.measure,
        &probes,
        &[0.5 * cfg.horizon, cfg.horizon],
    );
    out.summary.push(format!("duhamel residual vs data: {r:.3e}"));
    out.files.push((
        "solve_duhamel.csv".into(),
        format!("residual\n{r:.17e}\n"),
    ));

    // monotone approximation sweeps: terminal mass per stage
    let mut sweeps = String::from("sweep,parameter,terminal_mass\n");
    let exh = solve_exhaustion(
        &cfg.potential,
        &cfg.measure,
        &cfg.r_list,
        &cfg.grid,
        &StepOptions::default(),
    )?;
    for (r, f) in cfg.r_list.iter().zip(&exh) {
        sweeps.push_str(&format!(
            "exhaustion,{r:e},{:.17e}\n",
            f.grid_mass(f.times.len() - 1)
        ));
    }
    let tt = solve_time_truncation(
        &cfg.potential,
        &cfg.measure,
        &cfg.delta_list,
        &cfg.grid,
        &StepOptions::default(),
    )?;
    for (d, f) in cfg.delta_list.iter().zip(&tt) {
        sweeps.push_str(&format!(
            "time_truncation,{d:e},{:.17e}\n",
            f.grid_mass(f.times.len() - 1)
        ));
    }
    out.files.push(("solve_sweeps.csv".into(), sweeps));
    Ok(out)
}

pub fn reduce_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    let red = reduce(
        &cfg.potential,
        &cfg.measure,
        &cfg.grid,
        &cfg.k_list,
        &StepOptions::default(),
    )?;
    let mut csv = String::from("t,mass_balance\n");
    for (t, m) in &red.masses {
        csv.push_str(&format!("{t:e},{m:.17e}\n"));
    }
    csv.push_str(&format!("m_star,{:.17e}\n", red.m_star));
    csv.push_str(&format!("drift,{:.17e}\n", red.drift));
    csv.push_str(&format!("sweep_converged,{}\n", red.sweep_converged));
    csv.push_str(&format!(
        "verdict,{}\n",
        match red.verdict {
            ReduceVerdict::Converged => "converged",
            ReduceVerdict::Inconclusive => "inconclusive",
        }
    ));
    out.files.push(("reduce.csv".into(), csv));
    field_outputs(&mut out, "reduce_ustar", &red.u_star);
    if red.verdict == ReduceVerdict::Inconclusive {
        out.inconclusive += 1;
    }
    out.summary.push(format!(
        "reduced mass m* = {:.6} (drift {:.3e})",
        red.m_star, red.drift
    ));
    for n in &red.notes {
        out.summary.push(n.clone());
    }
    Ok(out)
}

pub fn kernel(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    let y = cfg.probes[0].clone();
    let est = kernel_estimate(
        &cfg.potential,
        &y,
        &cfg.grid,
        cfg.sigma,
        &StepOptions::default(),
    )?;
    let mut csv = String::from("t,value_at_y,free_kernel,ratio\n");
    for (j, &t) in est.field.times.iter().enumerate() {
        let v = est.field.values[j][est.field.node_index(&y)];
        let free = est.free_kernel(&y, t);
        csv.push_str(&format!(
            "{:e},{:.17e},{:.17e},{:.17e}\n",
            t,
            v,
            free,
            v / free
        ));
    }
    out.files.push(("kernel_summary.csv".into(), csv));
    field_outputs(&mut out, "kernel", &est.field);
    Ok(out)
}

pub fn trace(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    let field = step_solve(
        &cfg.potential,
        &cfg.grid,
        InitData::Measure(&cfg.measure),
        cfg.grid.t_min,
        cfg.horizon,
        &StepOptions::default(),
    )?;
    let report = initial_trace(&field, &cfg.potential, &TraceOptions::default())?;
    out.files.push(("trace.csv".into(), report.to_csv()));
    out.inconclusive += report
        .cells
        .iter()
        .filter(|c| c.verdict == CellVerdict::Inconclusive)
        .count();
    let lb = trace_lower_bound_check(&field, &report, &cfg.potential)?;
    out.files.push((
        "trace_lower_bound.csv".into(),
        format!(
            "worst_deficit,pass,probes\n{:.17e},{},{}\n",
            lb.worst_deficit, lb.pass, lb.probes_checked
        ),
    ));
    if !lb.pass {
        out.failures += 1;
    }
    let singular = report.singular_cells().len();
    out.summary.push(format!(
        "trace: {} cells, {} singular, lower bound {}",
        report.cells.len(),
        singular,
        if lb.pass { "holds" } else { "violated" }
    ));
    Ok(out)
}

/// Built-in oracle suite: fast analytic cross-checks of every layer, run on
/// fixed parameters independent of the experiment config.
pub fn validate(_cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut rows = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| {
        rows.push(format!("{name},{},{detail}", if pass { "pass" } else { "fail" }));
        if !pass {
            out.failures += 1;
        }
    };
    let opts = QuadOptions::default();
    let t_hi = 1.0;

    // kernel mass: integral of H(·, 0.3) over a wide frame is 1
    {
        let domain = BoxDomain::centered_cube(1, 12.0);
        let f = |x: &[f64]| heat_kernel(x, 0.3).unwrap();
        let wide = QuadOptions { panels: 8, ..QuadOptions::default() };
        let mass = heatlab_core::quad::gaussian_frame_space_integral(
            1,
            &domain,
            &[0.0],
            0.3,
            &f,
            &wide,
        );
        check("kernel_mass", (mass - 1.0).abs() < 1e-6, format!("{mass:.12}"));
    }

    // space-time engine vs antiderivative: ∬ H(x,t) t^{-1/2} = 2 √T
    let engine = QuadOptions { gaussian_center: Some(vec![0.0]), ..QuadOptions::default() };
    {
        let domain = BoxDomain::centered_cube(1, 16.0);
        let f = |x: &[f64], t: f64| heat_kernel(x, t).unwrap() / t.sqrt();
        let trail = heatlab_core::quad::spacetime_integral(&f, &domain, t_hi, &engine);
        let v = trail.last_value();
        check(
            "engine_antiderivative",
            trail.verdict.is_converged() && (v - 2.0).abs() < 1e-3,
            format!("{v:.8}"),
        );
    }

    // divergence detection: ∬ H(x,t)/t blows up
    {
        let domain = BoxDomain::centered_cube(1, 16.0);
        let f = |x: &[f64], t: f64| heat_kernel(x, t).unwrap() / t;
        let trail = heatlab_core::quad::spacetime_integral(&f, &domain, t_hi, &engine);
        check(
            "engine_divergence",
            trail.verdict == Verdict::Divergent,
            trail.verdict.label().into(),
        );
    }

    // psi closed form: V = c/t gives psi(x, 0.1) = c ln 10
    {
        let v = Potential::time_power(1, 0.5, 1.0);
        let got = psi(&v, &[0.0], 0.1, t_hi, &opts)?;
        let expect = 0.5 * (10.0f64).ln();
        check("psi_closed_form", (got - expect).abs() < 1e-6, format!("{got:.12}"));
    }

    // capacity of compact sets under V = t^{-1/2}
    {
        let v = Potential::time_power(1, 1.0, 0.5);
        let rep = capacity_compact(&v, t_hi, &[vec![0.0], vec![0.5]], &opts);
        let cap = rep.constant.unwrap_or(f64::NAN);
        check("capacity_value", (cap - 0.5).abs() < 1e-4, format!("{cap:.8}"));
        let support = BoxDomain::centered_cube(1, 20.0);
        let family: Vec<TestFunction> = (1..=20)
            .map(|i| TestFunction { amplitude: 0.05 * i as f64, support: support.clone() })
            .collect();
        let dual = capacity_dual_check(&v, t_hi, &[vec![0.0], vec![0.5]], &family, &opts);
        let bound = dual.best_bound.unwrap_or(f64::NAN);
        check("capacity_dual", bound <= 0.51, format!("{bound:.8}"));
    }

    // psi blow-up verdicts
    {
        let singular = thm_f_criterion(&Potential::time_power(1, 0.5, 1.0), &[0.0], t_hi, &opts);
        let regular = thm_f_criterion(&Potential::time_power(1, 1.0, 0.5), &[0.0], t_hi, &opts);
        check(
            "thmf_verdicts",
            singular.verdict == SingularVerdict::Singular
                && regular.verdict == SingularVerdict::NotSingular,
            format!("{}/{}", singular.verdict.label(), regular.verdict.label()),
        );
    }

    // Hardy singular scan in n = 3
    {
        let v = Potential::hardy(3, 1.0, 2.0);
        let coarse = QuadOptions { panels: 2, gl_order: 6, ..QuadOptions::default() };
        let rep = singular_scan(
            &v,
            t_hi,
            &[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            &coarse,
        );
        let origin_div = rep.probes[0].value.is_infinite();
        let offset_fin = rep.probes[1].trail.verdict.is_converged();
        check(
            "hardy_scan",
            origin_div && offset_fin,
            format!("{}/{}", rep.probes[0].trail.verdict.label(), rep.probes[1].trail.verdict.label()),
        );
    }

    let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 0.05, 1.0, 0.75)?;
    let mu = Measure::dirac(vec![0.0], 1.0)?;

    // free flow reproduces the kernel at T = 1
    let free = step_solve(
        &Potential::zero(1),
        &grid,
        InitData::Measure(&mu),
        0.05,
        1.0,
        &StepOptions::default(),
    )?;
    {
        let j = free.times.len() - 1;
        let peak = heat_kernel(&[0.0], 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..free.num_nodes() {
            let exact = heat_kernel(&free.grid.node_coord(i), 1.0).unwrap();
            worst = worst.max((free.values[j][i] - exact).abs() / peak);
        }
        check("solver_free_kernel", worst < 0.01, format!("{worst:.5}"));
    }

    // closed-form singular solution u = t^{-c} H
    {
        let c = 0.5;
        let v = Potential::time_power(1, c, 1.0);
        let init: Vec<f64> = (0..grid.num_nodes())
            .map(|i| 0.05f64.powf(-c) * heat_kernel(&grid.node_coord(i), 0.05).unwrap())
            .collect();
        let f = step_solve(&v, &grid, InitData::Slice(init), 0.05, 1.0, &StepOptions::default())?;
        let j = f.times.len() - 1;
        let peak = heat_kernel(&[0.0], 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..f.num_nodes() {
            let exact = heat_kernel(&f.grid.node_coord(i), 1.0).unwrap();
            worst = worst.max((f.values[j][i] - exact).abs() / peak);
        }
        check("solver_closed_form", worst < 0.01, format!("{worst:.5}"));
    }

    // absorption law for the truncated potential
    {
        let c = 0.5;
        let k = 100.0;
        let g = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-4, 1.0, 0.75)?;
        let v = Potential::time_power(1, c, 1.0);
        let sweep = solve_level_truncation(
            &v,
            &mu,
            &[k],
            &g,
            &StepOptions { extra_record: vec![0.2], ..StepOptions::default() },
        )?;
        let got = sweep[0].value_at(&[0.0], 0.2);
        let expect = (-c as f64).exp() * (c / (k * 0.2)).powf(c) * heat_kernel(&[0.0], 0.2).unwrap();
        let rel = (got - expect).abs() / expect;
        check("absorption_law", rel < 0.02, format!("{rel:.5}"));
    }

    // Harnack constant of the Gaussian
    {
        let rep = harnack_audit(&free, None)?;
        check(
            "harnack_gaussian",
            rep.constant.is_finite() && rep.constant <= 1.0,
            format!("{:.5}", rep.constant),
        );
    }

    // Duhamel identity for the free solution
    {
        let r = duhamel_residual(
            &free,
            &Potential::zero(1),
            &mu,
            &[vec![0.0], vec![0.5]],
            &[0.5, 1.0],
        );
        check("duhamel_free", r < 1e-3, format!("{r:.3e}"));
    }

    // trace recovers a unit atom under a mild potential
    {
        let g = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-4, 1.0, 0.75)?;
        let v = Potential::time_power(1, 1.0, 0.5);
        let u = step_solve(&v, &g, InitData::Measure(&mu), g.t_min, 1.0, &StepOptions::default())?;
        let rep = initial_trace(&u, &v, &TraceOptions::default())?;
        let center = rep.cells.iter().find(|c| c.bounds.contains(&[0.0])).unwrap();
        let ok = !rep.has_singular() && (center.mass - 1.0).abs() < 0.02;
        check("trace_unit_atom", ok, format!("{:.5}", center.mass));
    }

    // reduced-measure dichotomy
    {
        let g = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-5, 1.0, 0.75)?;
        let singular = reduce(
            &Potential::time_power(1, 0.5, 1.0),
            &mu,
            &g,
            &[1e6, 1e9, 1e12],
            &StepOptions::default(),
        )?;
        check(
            "reduce_singular",
            singular.m_star.abs() < 0.02 && singular.drift < 0.02,
            format!("{:.5}", singular.m_star),
        );
        let admissible = reduce(
            &Potential::time_power(1, 1.0, 0.5),
            &mu,
            &g,
            &[1e6, 1e9],
            &StepOptions::default(),
        )?;
        check(
            "reduce_admissible",
            (admissible.m_star - 1.0).abs() < 0.02 && admissible.drift < 0.02,
            format!("{:.5}", admissible.m_star),
        );
    }

    // representation envelope of the free kernel
    {
        let g = GridSpec::new(BoxDomain::centered_cube(1, 6.0), 1.0 / 8.0, 1.0 / 16.0, 1.0, 0.75)?;
        let rep = representation_check(&Potential::zero(1), &g)?;
        let c_exact = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        let ok = (rep.gamma - 0.25).abs() < 0.05 * 0.25
            && (rep.c_fit - c_exact).abs() < 0.05 * c_exact;
        check(
            "representation_free",
            ok,
            format!("gamma={:.5};c={:.5}", rep.gamma, rep.c_fit),
        );
    }

    // admissibility verdict for the critical power (divergent)
    {
        let rep = admissibility(&Potential::time_power(1, 0.5, 1.0), &mu, 2.0, t_hi, &opts)?;
        check(
            "admissibility_critical_power",
            rep.verdict == ReportVerdict::Divergent,
            rep.verdict.label().into(),
        );
    }

    let passed = rows.iter().filter(|r| r.contains(",pass,")).count();
    let failed = rows.len() - passed;
    let mut csv = String::from("check,verdict,detail\n");
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    out.files.push(("validate.csv".into(), csv));
    out.summary
        .push(format!("validate: {passed} passed, {failed} failed"));
    Ok(out)
}
