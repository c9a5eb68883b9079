//! Sectioned `key = value` experiment config.
//!
//! ```text
//! [experiment]
//! horizon = 1.0
//! output_dir = "out"
//!
//! [potential]
//! potential = "time_power(c=0.5, beta=1.0)"
//!
//! [measure]
//! atom = [0.0, 1.0]            # x1..xn, weight; repeatable
//! density_file = "rho.csv"     # optional gridded density
//!
//! [grid]
//! box = [-8.0, 8.0]            # lo,hi per dimension
//! h = 0.0625
//! t_min = 1e-4
//! ratio = 0.75
//! r = 2.0                      # classification ball radius
//!
//! [probes]
//! probe = [0.0]                # repeatable
//! psi_t = 0.1
//! sigma = 0.25
//!
//! [sweeps]
//! r_list = [2.0, 4.0, 8.0]
//! k_list = [1e2, 1e3, 1e4]
//! delta_list = [0.5, 0.1, 0.02]
//! lambda_levels = [0.1, 0.03, 0.01, 0.003, 0.001]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use heatlab_core::grid::SpatialGrid;
use heatlab_core::{Atom, BoxDomain, DensityGrid, GridSpec, Measure, Potential};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub output_dir: PathBuf,
    pub potential: Potential,
    pub measure: Measure,
    pub grid: GridSpec,
    /// Classification ball radius.
    pub radius: f64,
    pub probes: Vec<Vec<f64>>,
    pub psi_t: f64,
    pub sigma: f64,
    pub r_list: Vec<f64>,
    pub k_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    pub lambda_levels: Vec<f64>,
    pub rel_tol: f64,
    pub strong_tol: f64,
    /// Raw entries, kept for the reproducibility manifest.
    pub entries: Vec<(String, String, String)>,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_entries(text: &str) -> CResult<Vec<(String, String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return err(format!("line {}: malformed section header", ln + 1));
            }
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {}: expected key = value", ln + 1));
        };
        out.push((
            section.clone(),
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }
    Ok(out)
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn parse_num(v: &str, ctx: &str) -> CResult<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| ConfigError(format!("{ctx}: not a number: {v:?}")))
}

fn parse_list(v: &str, ctx: &str) -> CResult<Vec<f64>> {
    let v = v.trim();
    if !(v.starts_with('[') && v.ends_with(']')) {
        return err(format!("{ctx}: expected [a, b, ...], got {v:?}"));
    }
    let inner = &v[1..v.len() - 1];
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| parse_num(s, ctx))
        .collect()
}

/// `name(key=value, ...)` potential syntax.
fn parse_potential(spec: &str, dim: usize) -> CResult<Potential> {
    let spec = unquote(spec);
    let (name, rest) = match spec.find('(') {
        Some(i) => {
            if !spec.ends_with(')') {
                return err(format!("potential {spec:?}: missing )"));
            }
            (&spec[..i], &spec[i + 1..spec.len() - 1])
        }
        None => (spec, ""),
    };
    let mut args: BTreeMap<String, f64> = BTreeMap::new();
    for part in rest.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((k, v)) = part.split_once('=') else {
            return err(format!("potential argument {part:?}: expected key=value"));
        };
        args.insert(k.trim().to_string(), parse_num(v, "potential argument")?);
    }
    let need = |k: &str| -> CResult<f64> {
        args.get(k)
            .copied()
            .ok_or_else(|| ConfigError(format!("potential {name:?}: missing argument {k}")))
    };
    let base = match name.trim() {
        "zero" => Potential::zero(dim),
        "time_power" => Potential::time_power(dim, need("c")?, need("beta")?),
        "hardy" => Potential::hardy(dim, need("c")?, need("gamma")?),
        "product" => {
            let v = heatlab_core::potential::PotentialKind::Product {
                c: need("c")?,
                beta: need("beta")?,
                gamma: need("gamma")?,
            };
            Potential::new(dim, v).map_err(|e| ConfigError(e.to_string()))?
        }
        "bounded_bump" => {
            let hw = need("halfwidth")?;
            Potential::bounded_bump(dim, need("c")?, BoxDomain::centered_cube(dim, hw))
        }
        other => return err(format!("unknown potential kind {other:?}")),
    };
    let mut v = base;
    if let Some(&k) = args.get("level_cap") {
        v = v.level_truncate(k);
    }
    if let Some(&d) = args.get("time_cut") {
        v = v.time_truncate(d);
    }
    Ok(v)
}

/// Density CSV: header row of coordinates plus a final `value` column; rows
/// are cell-midpoint samples of a regular grid.
fn load_density(path: &Path, dim: usize) -> CResult<DensityGrid> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("density file {path:?}: {e}")))?;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != dim + 1 {
            return err(format!(
                "density file row {}: expected {} columns",
                i + 1,
                dim + 1
            ));
        }
        let coords: Vec<f64> = cols[..dim]
            .iter()
            .map(|s| parse_num(s, "density coordinate"))
            .collect::<CResult<_>>()?;
        rows.push((coords, parse_num(cols[dim], "density value")?));
    }
    if rows.is_empty() {
        return err("density file has no data rows");
    }
    // reconstruct the regular midpoint grid from the unique coordinates
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for d in 0..dim {
        let mut vals: Vec<f64> = rows.iter().map(|(c, _)| c[d]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        axes.push(vals);
    }
    let cells: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    if cells.iter().product::<usize>() != rows.len() {
        return err("density file rows do not form a full regular grid");
    }
    let bounds: Vec<(f64, f64)> = axes
        .iter()
        .map(|a| {
            let step = if a.len() > 1 { a[1] - a[0] } else { 1.0 };
            (a[0] - 0.5 * step, a[a.len() - 1] + 0.5 * step)
        })
        .collect();
    let grid = SpatialGrid::new(
        BoxDomain::new(bounds).map_err(|e| ConfigError(e.to_string()))?,
        cells.clone(),
    )
    .map_err(|e| ConfigError(e.to_string()))?;
    let mut values = vec![0.0; rows.len()];
    for (coords, v) in rows {
        let mut flat = 0usize;
        let mut stride = 1usize;
        for d in 0..dim {
            let idx = axes[d]
                .iter()
                .position(|&a| (a - coords[d]).abs() < 1e-12)
                .unwrap();
            flat += idx * stride;
            stride *= cells[d];
        }
        values[flat] = v;
    }
    DensityGrid::new(grid, values).map_err(|e| ConfigError(e.to_string()))
}

pub fn load(path: &Path) -> CResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {path:?}: {e}")))?;
    let entries = parse_entries(&text)?;
    let get = |section: &str, key: &str| -> Option<&str> {
        entries
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    };
    let get_all = |section: &str, key: &str| -> Vec<&str> {
        entries
            .iter()
            .filter(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
            .collect()
    };
    let num = |section: &str, key: &str, default: Option<f64>| -> CResult<f64> {
        match get(section, key) {
            Some(v) => parse_num(v, &format!("[{section}] {key}")),
            None => default.ok_or_else(|| {
                ConfigError(format!("missing required key [{section}] {key}"))
            }),
        }
    };
    let list = |section: &str, key: &str, default: &[f64]| -> CResult<Vec<f64>> {
        match get(section, key) {
            Some(v) => parse_list(v, &format!("[{section}] {key}")),
            None => Ok(default.to_vec()),
        }
    };

    let horizon = num("experiment", "horizon", Some(1.0))?;
    if !(horizon > 0.0) {
        return err("horizon must be positive");
    }
    let output_dir = PathBuf::from(unquote(get("experiment", "output_dir").unwrap_or("out")));

    let box_list = list("grid", "box", &[-8.0, 8.0])?;
    if box_list.is_empty() || box_list.len() % 2 != 0 || box_list.len() > 6 {
        return err("[grid] box must hold lo,hi pairs for 1..=3 dimensions");
    }
    let dim = box_list.len() / 2;
    let bounds: Vec<(f64, f64)> = box_list.chunks(2).map(|c| (c[0], c[1])).collect();
    let domain = BoxDomain::new(bounds).map_err(|e| ConfigError(e.to_string()))?;
    let h = num("grid", "h", Some(1.0 / 16.0))?;
    let t_min = num("grid", "t_min", Some(1e-4))?;
    let ratio = num("grid", "ratio", Some(0.75))?;
    let radius = num("grid", "r", Some(2.0))?;
    let grid =
        GridSpec::new(domain, h, t_min, horizon, ratio).map_err(|e| ConfigError(e.to_string()))?;

    let potential_spec = get("potential", "potential")
        .ok_or_else(|| ConfigError("missing [potential] potential".into()))?;
    let potential = parse_potential(potential_spec, dim)?;

    let mut atoms = Vec::new();
    for spec in get_all("measure", "atom") {
        let vals = parse_list(spec, "[measure] atom")?;
        if vals.len() != dim + 1 {
            return err(format!(
                "[measure] atom needs {} coordinates then a weight",
                dim
            ));
        }
        atoms.push(Atom {
            location: vals[..dim].to_vec(),
            weight: vals[dim],
        });
    }
    let density = match get("measure", "density_file") {
        Some(f) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(unquote(f));
            Some(load_density(&p, dim)?)
        }
        None => None,
    };
    let measure = if atoms.is_empty() && density.is_none() {
        Measure::zero(dim)
    } else {
        Measure::new(dim, atoms, density, horizon).map_err(|e| ConfigError(e.to_string()))?
    };

    let mut probes: Vec<Vec<f64>> = Vec::new();
    for spec in get_all("probes", "probe") {
        let vals = parse_list(spec, "[probes] probe")?;
        if vals.len() != dim {
            return err(format!("[probes] probe needs {dim} coordinates"));
        }
        probes.push(vals);
    }
    if probes.is_empty() {
        probes.push(vec![0.0; dim]);
    }

    let rel_tol = num("tolerances", "rel_tol", Some(1e-6))?;
    let strong_tol = num("tolerances", "strong_tol", Some(1e-2))?;
    if !(rel_tol > 0.0) || !(strong_tol > 0.0) {
        return err("tolerances must be positive");
    }

    Ok(ExperimentConfig {
        horizon,
        output_dir,
        potential,
        measure,
        grid,
        radius,
        probes,
        psi_t: num("probes", "psi_t", Some(0.1))?,
        sigma: num("probes", "sigma", Some(4.0 * h))?,
        r_list: list("sweeps", "r_list", &[2.0, 4.0, 8.0])?,
        k_list: list("sweeps", "k_list", &[1e2, 1e3, 1e4])?,
        delta_list: list("sweeps", "delta_list", &[0.5, 0.1, 0.02])?,
        lambda_levels: list(
            "sweeps",
            "lambda_levels",
            &[0.1, 0.03, 0.01, 0.003, 0.001],
        )?,
        rel_tol,
        strong_tol,
        entries,
    })
}
