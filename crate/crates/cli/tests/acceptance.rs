//! End-to-end acceptance suite: thirteen analytic-oracle properties, one test
//! each, printing a single pass/fail line per criterion.

use std::path::PathBuf;
use std::process::Command;

use heatlab_core::classify::{
    capacity_compact, capacity_dual_check, psi, singular_scan, thm_f_criterion, ReportVerdict,
    SingularVerdict, TestFunction,
};
use heatlab_core::solver::{
    comparison_check, reduce, solve_exhaustion, solve_level_truncation, solve_time_truncation,
    step_solve,
};
use heatlab_core::trace::{harnack_audit, initial_trace, representation_check};
use heatlab_core::{
    heat_kernel, BoxDomain, GridSpec, InitData, Measure, Potential, QuadOptions, StepOptions,
    TraceOptions,
};

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if ok { "pass" } else { "FAIL" }
    );
    assert!(ok, "{criterion}: {detail}");
}

fn grid_1d(t_min: f64) -> GridSpec {
    GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, t_min, 1.0, 0.75).unwrap()
}

fn dirac0() -> Measure {
    Measure::dirac(vec![0.0], 1.0).unwrap()
}

/// Max deviation from the exact kernel at the final time, relative to its peak.
fn terminal_kernel_error(field: &heatlab_core::Field) -> f64 {
    let j = field.times.len() - 1;
    let t = field.times[j];
    let peak = heat_kernel(&vec![0.0; field.grid.dim()], t).unwrap();
    (0..field.num_nodes())
        .map(|i| {
            let exact = heat_kernel(&field.grid.node_coord(i), t).unwrap();
            (field.values[j][i] - exact).abs() / peak
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_free_kernel_fidelity() {
    let grid = grid_1d(0.05);
    let init: Vec<f64> = (0..grid.num_nodes())
        .map(|i| heat_kernel(&grid.node_coord(i), 0.05).unwrap())
        .collect();
    let field = step_solve(
        &Potential::zero(1),
        &grid,
        InitData::Slice(init),
        0.05,
        1.0,
        &StepOptions::default(),
    )
    .unwrap();
    let err = terminal_kernel_error(&field);
    report("01 free-kernel fidelity", err <= 0.01, &format!("max rel err {err:.4}"));
}

#[test]
fn criterion_02_closed_form_singular_solution() {
    let c = 0.5;
    let grid = grid_1d(0.05);
    let init: Vec<f64> = (0..grid.num_nodes())
        .map(|i| 0.05f64.powf(-c) * heat_kernel(&grid.node_coord(i), 0.05).unwrap())
        .collect();
    let field = step_solve(
        &Potential::time_power(1, c, 1.0),
        &grid,
        InitData::Slice(init),
        0.05,
        1.0,
        &StepOptions::default(),
    )
    .unwrap();
    // u(·,1) = 1^{-c} H(·,1), so the kernel comparison applies unchanged
    let err = terminal_kernel_error(&field);
    report("02 closed-form singular solution", err <= 0.01, &format!("max rel err {err:.4}"));
}

#[test]
fn criterion_03_level_truncation_law() {
    let c = 0.5;
    let grid = grid_1d(1e-4);
    let ks = [10.0, 100.0, 1000.0];
    let sweep = solve_level_truncation(
        &Potential::time_power(1, c, 1.0),
        &dirac0(),
        &ks,
        &grid,
        &StepOptions { extra_record: vec![0.2], ..StepOptions::default() },
    )
    .unwrap();
    let h02 = heat_kernel(&[0.0], 0.2).unwrap();
    let mut worst = 0.0f64;
    let mut pts = Vec::new();
    for (k, f) in ks.iter().zip(&sweep) {
        let got = f.value_at(&[0.0], 0.2);
        let expect = (-c as f64).exp() * (c / (k * 0.2)).powf(c) * h02;
        worst = worst.max((got - expect).abs() / expect);
        pts.push((k.ln(), got.ln()));
    }
    // fitted decay exponent in k
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let ok = worst <= 0.02 && (slope + c).abs() <= 0.1 * c;
    report(
        "03 level-truncation law",
        ok,
        &format!("worst factor err {worst:.4}, slope {slope:.4}"),
    );
}

#[test]
fn criterion_04_reduced_measure_dichotomy() {
    let grid = GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 1e-5, 1.0, 0.75).unwrap();
    let singular = reduce(
        &Potential::time_power(1, 0.5, 1.0),
        &dirac0(),
        &grid,
        &[1e6, 1e9, 1e12],
        &StepOptions::default(),
    )
    .unwrap();
    let admissible = reduce(
        &Potential::time_power(1, 1.0, 0.5),
        &dirac0(),
        &grid,
        &[1e6, 1e9],
        &StepOptions::default(),
    )
    .unwrap();
    let ok = singular.m_star.abs() <= 0.02
        && singular.drift <= 0.02
        && (admissible.m_star - 1.0).abs() <= 0.02
        && admissible.drift <= 0.02;
    report(
        "04 reduced-measure dichotomy",
        ok,
        &format!(
            "m*(c/t) = {:.4} drift {:.4}; m*(t^-1/2) = {:.4} drift {:.4}",
            singular.m_star, singular.drift, admissible.m_star, admissible.drift
        ),
    );
}

#[test]
fn criterion_05_singular_set_scan() {
    let opts = QuadOptions { panels: 2, gl_order: 6, ..QuadOptions::default() };
    let hardy = singular_scan(
        &Potential::hardy(3, 1.0, 2.0),
        1.0,
        &[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
        &opts,
    );
    let origin_divergent = hardy.probes[0].value.is_infinite();
    let offset_finite = hardy.probes[1].trail.verdict.is_converged();
    let power = singular_scan(
        &Potential::time_power(1, 1.0, 0.5),
        1.0,
        &[vec![0.0], vec![1.0]],
        &QuadOptions::default(),
    );
    let ok = origin_divergent && offset_finite && power.verdict == ReportVerdict::Pass;
    report(
        "05 singular-set scan",
        ok,
        &format!(
            "hardy origin {}, |x|=1 {}, t^-1/2 {}",
            hardy.probes[0].trail.verdict.label(),
            hardy.probes[1].trail.verdict.label(),
            power.verdict.label()
        ),
    );
}

#[test]
fn criterion_06_capacity() {
    let v = Potential::time_power(1, 1.0, 0.5);
    let opts = QuadOptions::default();
    let sets: Vec<Vec<Vec<f64>>> = vec![
        vec![vec![0.0]],
        vec![vec![0.0], vec![0.5]],
        vec![vec![-1.0], vec![0.0], vec![1.0]],
    ];
    let mut worst = 0.0f64;
    for set in &sets {
        let cap = capacity_compact(&v, 1.0, set, &opts).constant.unwrap();
        worst = worst.max((cap - 0.5).abs());
    }
    let family: Vec<TestFunction> = (1..=20)
        .map(|i| TestFunction {
            amplitude: 0.05 * i as f64,
            support: BoxDomain::centered_cube(1, 20.0),
        })
        .collect();
    let dual = capacity_dual_check(&v, 1.0, &sets[2], &family, &opts);
    let bound = dual.best_bound.unwrap_or(f64::INFINITY);
    let ok = worst <= 1e-4 && bound <= 0.51;
    report(
        "06 capacity",
        ok,
        &format!("worst |C-0.5| = {worst:.2e}, dual bound {bound:.4}"),
    );
}

#[test]
fn criterion_07_psi_and_thm_f() {
    let opts = QuadOptions::default();
    let c = 0.5;
    let got = psi(&Potential::time_power(1, c, 1.0), &[0.0], 0.1, 1.0, &opts).unwrap();
    let expect = c * (10.0f64).ln();
    let singular = thm_f_criterion(&Potential::time_power(1, c, 1.0), &[0.0], 1.0, &opts);
    let regular = thm_f_criterion(&Potential::time_power(1, 1.0, 0.5), &[0.0], 1.0, &opts);
    let ok = (got - expect).abs() <= 1e-6
        && singular.verdict == SingularVerdict::Singular
        && regular.verdict == SingularVerdict::NotSingular;
    report(
        "07 psi and blow-up criterion",
        ok,
        &format!(
            "psi err {:.2e}, verdicts {}/{}",
            (got - expect).abs(),
            singular.verdict.label(),
            regular.verdict.label()
        ),
    );
}

#[test]
fn criterion_08_weighted_norm_estimate() {
    let mu = dirac0();
    let rhs = mu.mt_norm(1.0);
    let grid = grid_1d(1e-4);
    let potentials = [
        Potential::time_power(1, 1.0, 0.5),
        Potential::bounded_bump(1, 3.0, BoxDomain::centered_cube(1, 1.0)),
    ];
    let mut worst = 0.0f64;
    for v in &potentials {
        let u = step_solve(v, &grid, InitData::Measure(&mu), grid.t_min, 1.0, &StepOptions::default())
            .unwrap();
        for (j, _) in u.times.iter().enumerate() {
            let weighted: f64 = (0..u.num_nodes())
                .map(|i| {
                    let x = u.grid.node_coord(i);
                    let r2: f64 = x.iter().map(|c| c * c).sum();
                    u.values[j][i] * (-r2 / 4.0).exp() * u.grid.h
                })
                .sum();
            worst = worst.max(weighted / rhs);
        }
    }
    report(
        "08 weighted-norm estimate",
        worst <= 1.02,
        &format!("max weighted norm / bound = {worst:.4}"),
    );
}

#[test]
fn criterion_09_monotone_scheme_suite() {
    let mu = dirac0();
    let grid = grid_1d(0.01);
    let opts = StepOptions::default();
    // catalog potentials reachable by the 1-d/2-d solver; the Hardy member
    // needs n = 3 and is covered by the quadrature-side scan (criterion 05)
    let catalog = [
        Potential::time_power(1, 0.5, 1.0),
        Potential::time_power(1, 1.0, 0.5),
        Potential::bounded_bump(1, 3.0, BoxDomain::centered_cube(1, 1.0)),
    ];
    let mut notes = Vec::new();
    for v in &catalog {
        // each sweep asserts pointwise monotonicity internally
        let exh = solve_exhaustion(v, &mu, &[2.0, 4.0, 6.0], &grid, &opts).unwrap();
        solve_level_truncation(v, &mu, &[10.0, 100.0, 1000.0], &grid, &opts).unwrap();
        solve_time_truncation(v, &mu, &[0.01, 0.001], &grid, &opts).unwrap();
        comparison_check(exh.last().unwrap(), &mu).unwrap();
        notes.push("ok");
    }
    // one higher-dimensional instance through the ADI path
    let mu2 = Measure::dirac(vec![0.0, 0.0], 1.0).unwrap();
    let grid2 =
        GridSpec::new(BoxDomain::centered_cube(2, 4.0), 1.0 / 8.0, 0.01, 1.0, 0.75).unwrap();
    let exh2 =
        solve_exhaustion(&Potential::time_power(2, 1.0, 0.5), &mu2, &[2.0, 4.0], &grid2, &opts)
            .unwrap();
    comparison_check(exh2.last().unwrap(), &mu2).unwrap();
    report(
        "09 monotone-scheme suite",
        true,
        &format!("{} 1-d potentials + 2-d instance", notes.len()),
    );
}

#[test]
fn criterion_10_harnack_stability() {
    let c = 0.5;
    let mut drifts = Vec::new();
    for v in [Potential::zero(1), Potential::time_power(1, c, 1.0)] {
        let mut constants = Vec::new();
        for h in [1.0 / 8.0, 1.0 / 16.0] {
            let grid =
                GridSpec::new(BoxDomain::centered_cube(1, 8.0), h, 0.05, 1.0, 0.75).unwrap();
            let init: Vec<f64> = (0..grid.num_nodes())
                .map(|i| {
                    let scale = if matches!(v.kind, heatlab_core::PotentialKind::TimePower { c, .. } if c > 0.0)
                    {
                        0.05f64.powf(-c)
                    } else {
                        1.0
                    };
                    scale * heat_kernel(&grid.node_coord(i), 0.05).unwrap()
                })
                .collect();
            let u = step_solve(&v, &grid, InitData::Slice(init), 0.05, 1.0, &StepOptions::default())
                .unwrap();
            let audit = harnack_audit(&u, None).unwrap();
            assert!(audit.constant.is_finite());
            constants.push(audit.constant);
        }
        let drift = (constants[1] - constants[0]).abs() / constants[1];
        drifts.push(drift);
    }
    let worst = drifts.iter().copied().fold(0.0, f64::max);
    report(
        "10 Harnack audit stability",
        worst <= 0.10,
        &format!("max drift under refinement {worst:.4}"),
    );
}

#[test]
fn criterion_11_representation_envelope() {
    let grid =
        GridSpec::new(BoxDomain::centered_cube(1, 6.0), 1.0 / 8.0, 1.0 / 16.0, 1.0, 0.75).unwrap();
    let free = representation_check(&Potential::zero(1), &grid).unwrap();
    let c_exact = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    let free_ok = (free.gamma - 0.25).abs() <= 0.05 * 0.25
        && (free.c_fit - c_exact).abs() <= 0.05 * c_exact;
    let bump = representation_check(
        &Potential::bounded_bump(1, 3.0, BoxDomain::centered_cube(1, 1.0)),
        &grid,
    )
    .unwrap();
    let bump_ok = bump.c_lower > 0.0 && bump.c_lower <= bump.c_upper && bump.c_upper.is_finite();
    report(
        "11 representation envelope",
        free_ok && bump_ok,
        &format!(
            "free gamma {:.4} c {:.4}; bump envelope [{:.3e}, {:.3e}]",
            free.gamma, free.c_fit, bump.c_lower, bump.c_upper
        ),
    );
}

#[test]
fn criterion_12_trace_extraction() {
    let mu = dirac0();
    let grid = grid_1d(1e-4);
    let opts = TraceOptions::default();

    let mild = Potential::time_power(1, 1.0, 0.5);
    let u = step_solve(&mild, &grid, InitData::Measure(&mu), grid.t_min, 1.0, &StepOptions::default())
        .unwrap();
    let regular_trace = initial_trace(&u, &mild, &opts).unwrap();
    let center = regular_trace
        .cells
        .iter()
        .find(|c| c.bounds.contains(&[0.0]))
        .unwrap();
    let regular_ok = !regular_trace.has_singular() && (center.mass - 1.0).abs() <= 0.02;

    let c = 0.5;
    let hard = Potential::time_power(1, c, 1.0);
    let w = step_solve(&hard, &grid, InitData::Measure(&mu), grid.t_min, 1.0, &StepOptions::default())
        .unwrap();
    let singular_trace = initial_trace(&w, &hard, &opts).unwrap();
    let origin = singular_trace
        .cells
        .iter()
        .find(|cell| cell.bounds.contains(&[0.0]))
        .unwrap();
    let exponent = origin.exponent.unwrap_or(f64::NAN);
    let singular_ok = origin.verdict == heatlab_core::CellVerdict::Singular
        && (exponent + c).abs() <= 0.1 * c;
    report(
        "12 trace extraction",
        regular_ok && singular_ok,
        &format!(
            "atom mass {:.4}; origin {} exponent {:.4}",
            center.mass,
            origin.verdict.label(),
            exponent
        ),
    );
}

#[test]
fn criterion_13_determinism() {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.cfg");
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let dirs = [tmp.join("det_a"), tmp.join("det_b")];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_heatlab"))
            .args(["validate", "--config"])
            .arg(&config)
            .arg("--output-dir")
            .arg(d)
            .status()
            .unwrap();
        assert!(status.success(), "validate exited with {status}");
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    let mut identical = true;
    for n in &names {
        let a = std::fs::read(dirs[0].join(n)).unwrap();
        let b = std::fs::read(dirs[1].join(n)).unwrap();
        if a != b {
            identical = false;
        }
    }
    report(
        "13 determinism",
        identical,
        &format!("{} files byte-compared", names.len()),
    );
}
