//! The Gaussian heat kernel and heat potentials of measures.

use crate::error::{Error, Result};
use crate::measure::Measure;

/// H(x,t) = (4 pi t)^{-n/2} exp(-|x|^2 / 4t).
pub fn heat_kernel(x: &[f64], t: f64) -> Result<f64> {
    let r2 = x.iter().map(|v| v * v).sum();
    heat_kernel_r2(r2, t, x.len())
}

/// Same, from the squared distance.
pub fn heat_kernel_r2(r2: f64, t: f64, dim: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let norm = (4.0 * std::f64::consts::PI * t).powf(-(dim as f64) / 2.0);
    Ok(norm * (-r2 / (4.0 * t)).exp())
}

/// The heat potential of a measure: H[mu](x,t), atoms in closed form, the
/// density part by the midpoint rule on its own grid.
///
/// Flags t >= horizon: the expression only has a meaning for t < T when mu
/// is merely in M_T.
pub fn heat_potential(mu: &Measure, x: &[f64], t: f64, horizon: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat potential needs t > 0, got {t}")));
    }
    if t >= horizon {
        return Err(Error::Domain(format!(
            "heat potential of an M_T measure is only defined for t < T = {horizon}, got t = {t}"
        )));
    }
    let mut total = 0.0;
    for a in &mu.atoms {
        let r2: f64 = x
            .iter()
            .zip(&a.location)
            .map(|(xi, yi)| (xi - yi) * (xi - yi))
            .sum();
        total += a.weight * heat_kernel_r2(r2, t, mu.dim)?;
    }
    if let Some(d) = &mu.density {
        let vol = d.grid.cell_volume();
        for (i, &v) in d.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let y = d.grid.cell_center(i);
            let r2: f64 = x
                .iter()
                .zip(&y)
                .map(|(xi, yi)| (xi - yi) * (xi - yi))
                .sum();
            total += v * heat_kernel_r2(r2, t, mu.dim)? * vol;
        }
    }
    Ok(total)
}
