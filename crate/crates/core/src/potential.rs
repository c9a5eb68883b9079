//! Catalog of nonnegative potentials V(x,t) with closed-form structure and
//! the two truncation views V^k = min{V,k} and V_delta = V * chi_{t > delta}.

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, SpatialGrid};

/// Space-time table for tabulated potentials: multilinear in space, linear in t.
#[derive(Debug, Clone)]
pub struct SpaceTimeTable {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    /// values[time_idx][cell_idx]
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// c * t^{-beta}
    TimePower { c: f64, beta: f64 },
    /// c * |x|^{-gamma}
    Hardy { c: f64, gamma: f64 },
    /// c * t^{-beta} * |x|^{-gamma}
    Product { c: f64, beta: f64, gamma: f64 },
    /// c * chi_box(x)
    BoundedBump { c: f64, domain: BoxDomain },
    /// tabulated grid field, assumed regular
    Custom(SpaceTimeTable),
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub dim: usize,
    pub kind: PotentialKind,
    /// Declared constant for the bound V(x,t) <= C1/t, when it holds.
    pub c1_bound: Option<f64>,
    /// Level truncation: V^k = min{V, k}.
    pub level_cap: Option<f64>,
    /// Time truncation: V_delta = V * chi_{t > delta}.
    pub time_cut: Option<f64>,
}

impl Potential {
    pub fn new(dim: usize, kind: PotentialKind) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!("dim must be 1..=3, got {dim}")));
        }
        match &kind {
            PotentialKind::TimePower { c, beta } => {
                if *c < 0.0 || !beta.is_finite() {
                    return Err(Error::Invalid("time_power needs c >= 0, finite beta".into()));
                }
            }
            PotentialKind::Hardy { c, gamma } | PotentialKind::Product { c, gamma, .. } => {
                if *c < 0.0 || *gamma < 0.0 {
                    return Err(Error::Invalid("hardy/product need c, gamma >= 0".into()));
                }
            }
            PotentialKind::BoundedBump { c, .. } => {
                if *c < 0.0 {
                    return Err(Error::Invalid("bump amplitude must be >= 0".into()));
                }
            }
            PotentialKind::Custom(tab) => {
                if tab.values.len() != tab.times.len()
                    || tab.values.iter().any(|v| v.len() != tab.grid.num_cells())
                    || tab.values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0)
                {
                    return Err(Error::Invalid("custom table malformed or negative".into()));
                }
            }
        }
        let c1_bound = match &kind {
            PotentialKind::TimePower { c, beta } if (*beta - 1.0).abs() < 1e-14 => Some(*c),
            _ => None,
        };
        Ok(Self {
            dim,
            kind,
            c1_bound,
            level_cap: None,
            time_cut: None,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, PotentialKind::TimePower { c: 0.0, beta: 0.0 }).unwrap()
    }

    pub fn time_power(dim: usize, c: f64, beta: f64) -> Self {
        Self::new(dim, PotentialKind::TimePower { c, beta }).unwrap()
    }

    pub fn hardy(dim: usize, c: f64, gamma: f64) -> Self {
        Self::new(dim, PotentialKind::Hardy { c, gamma }).unwrap()
    }

    pub fn bounded_bump(dim: usize, c: f64, domain: BoxDomain) -> Self {
        Self::new(dim, PotentialKind::BoundedBump { c, domain }).unwrap()
    }

    /// V^k = min{V, k}; composes with an existing cap by taking the minimum.
    pub fn level_truncate(&self, k: f64) -> Potential {
        assert!(k > 0.0, "level truncation needs k > 0");
        let mut v = self.clone();
        v.level_cap = Some(match self.level_cap {
            Some(old) => old.min(k),
            None => k,
        });
        v
    }

    /// V_delta = V * chi_{t > delta}; nested cuts keep the larger delta.
    pub fn time_truncate(&self, delta: f64) -> Potential {
        assert!(delta > 0.0, "time truncation needs delta > 0");
        let mut v = self.clone();
        v.time_cut = Some(match self.time_cut {
            Some(old) => old.max(delta),
            None => delta,
        });
        v
    }

    /// Whether (x, t) lies on the declared singular locus of the base kind.
    fn on_locus(&self, x: &[f64], _t: f64) -> bool {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match &self.kind {
            PotentialKind::Hardy { gamma, .. } | PotentialKind::Product { gamma, .. } => {
                *gamma > 0.0 && r2 == 0.0
            }
            _ => false,
        }
    }

    /// Evaluate V(x,t). Returns +inf at the singular locus so quadrature can
    /// skip singular nodes uniformly; t <= 0 is a domain error.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("potential evaluated at t={t} <= 0")));
        }
        if let Some(delta) = self.time_cut {
            if t <= delta {
                return Ok(0.0);
            }
        }
        if self.on_locus(x, t) {
            // a level cap bounds the sentinel too: min(+inf, k) = k
            return Ok(self.level_cap.unwrap_or(f64::INFINITY));
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let base = match &self.kind {
            PotentialKind::TimePower { c, beta } => c * t.powf(-beta),
            PotentialKind::Hardy { c, gamma } => c * r2.powf(-gamma / 2.0),
            PotentialKind::Product { c, beta, gamma } => {
                c * t.powf(-beta) * r2.powf(-gamma / 2.0)
            }
            PotentialKind::BoundedBump { c, domain } => {
                if domain.contains(x) {
                    *c
                } else {
                    0.0
                }
            }
            PotentialKind::Custom(tab) => interp_table(tab, x, t),
        };
        Ok(match self.level_cap {
            Some(k) => base.min(k),
            None => base,
        })
    }

    /// True when V(x,t) does not depend on x.
    pub fn is_space_independent(&self) -> bool {
        matches!(self.kind, PotentialKind::TimePower { .. })
    }

    /// For space-independent catalog kinds: closed-form A(t) = int_0^t V(s) ds
    /// with the level cap and time cut applied. None when no closed form
    /// exists or when the integral diverges at 0 without a cap.
    pub fn accumulated_absorption(&self, t: f64) -> Option<f64> {
        self.time_integral(0.0, t)
    }

    /// Closed-form int_a^b V(s) ds for space-independent catalog kinds, with
    /// the level cap and time cut applied; None for space-dependent kinds or
    /// a divergent lower endpoint.
    pub fn time_integral(&self, a: f64, b: f64) -> Option<f64> {
        let PotentialKind::TimePower { c, beta } = self.kind else {
            return None;
        };
        if !(b >= a && a >= 0.0) {
            return None;
        }
        let t = b;
        let lower = self.time_cut.unwrap_or(0.0).max(a).min(t);
        if c == 0.0 {
            return Some(0.0);
        }
        let power_primitive = |a: f64, b: f64| -> Option<f64> {
            // int_a^b c s^{-beta} ds, a >= 0
            if (beta - 1.0).abs() < 1e-14 {
                if a <= 0.0 {
                    None
                } else {
                    Some(c * (b / a).ln())
                }
            } else if beta > 1.0 && a <= 0.0 {
                None
            } else {
                Some(c * (b.powf(1.0 - beta) - a.powf(1.0 - beta)) / (1.0 - beta))
            }
        };
        match self.level_cap {
            None => power_primitive(lower, t),
            Some(k) => {
                // switch point: c s^{-beta} = k
                let s_star = if beta <= 0.0 {
                    if c <= k {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (c / k).powf(1.0 / beta)
                };
                let s0 = lower;
                if s_star <= s0 {
                    power_primitive(s0, t)
                } else if s_star >= t {
                    Some(k * (t - s0))
                } else {
                    Some(k * (s_star - s0) + power_primitive(s_star, t)?)
                }
            }
        }
    }
}

fn interp_table(tab: &SpaceTimeTable, x: &[f64], t: f64) -> f64 {
    // clamp outside the table
    let ti = match tab.times.iter().position(|&s| s >= t) {
        None => tab.times.len() - 1,
        Some(0) => 0,
        Some(j) => j - 1,
    };
    let tj = (ti + 1).min(tab.times.len() - 1);
    let w = if tj == ti {
        0.0
    } else {
        ((t - tab.times[ti]) / (tab.times[tj] - tab.times[ti])).clamp(0.0, 1.0)
    };
    let a = interp_space(&tab.grid, &tab.values[ti], x);
    let b = interp_space(&tab.grid, &tab.values[tj], x);
    (1.0 - w) * a + w * b
}

/// Multilinear interpolation on cell-midpoint values, clamped at the edges.
pub(crate) fn interp_space(grid: &SpatialGrid, values: &[f64], x: &[f64]) -> f64 {
    let dim = grid.dim();
    let mut lo = vec![0usize; dim];
    let mut frac = vec![0f64; dim];
    for d in 0..dim {
        let (a, b) = grid.domain.bounds[d];
        let c = grid.cells[d];
        let h = (b - a) / c as f64;
        let s = (x[d] - a) / h - 0.5;
        let s = s.clamp(0.0, (c - 1) as f64);
        let i = (s.floor() as usize).min(c.saturating_sub(2).max(0));
        lo[d] = i;
        frac[d] = (s - i as f64).clamp(0.0, 1.0);
    }
    let mut out = 0.0;
    for corner in 0..(1usize << dim) {
        let mut flat = 0usize;
        let mut stride = 1usize;
        let mut w = 1.0;
        for d in 0..dim {
            let up = (corner >> d) & 1;
            let idx = (lo[d] + up).min(grid.cells[d] - 1);
            flat += idx * stride;
            stride *= grid.cells[d];
            w *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
        }
        out += w * values[flat];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_power_eval() {
        let v = Potential::time_power(1, 1.0, 1.0);
        assert_eq!(v.eval(&[3.0], 0.5).unwrap(), 2.0);
        assert!(v.eval(&[0.0], 0.0).is_err());
        assert_eq!(v.c1_bound, Some(1.0));
    }

    #[test]
    fn hardy_eval_and_locus_sentinel() {
        let v = Potential::hardy(3, 1.0, 2.0);
        assert_eq!(v.eval(&[2.0, 0.0, 0.0], 0.3).unwrap(), 0.25);
        assert_eq!(v.eval(&[0.0, 0.0, 0.0], 0.3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn bump_indicator() {
        let v = Potential::bounded_bump(1, 3.0, BoxDomain::centered_cube(1, 1.0));
        assert_eq!(v.eval(&[0.5], 0.1).unwrap(), 3.0);
        assert_eq!(v.eval(&[1.5], 0.1).unwrap(), 0.0);
    }

    #[test]
    fn level_truncation_caps() {
        let v = Potential::time_power(1, 1.0, 1.0).level_truncate(10.0);
        assert_eq!(v.eval(&[0.0], 0.05).unwrap(), 10.0);
        assert_eq!(v.eval(&[0.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn time_truncation_and_nesting() {
        let v = Potential::time_power(1, 1.0, 1.0);
        let vd = v.time_truncate(0.1);
        assert_eq!(vd.eval(&[0.0], 0.05).unwrap(), 0.0);
        assert_eq!(vd.eval(&[0.0], 0.2).unwrap(), 5.0);

        let nested = v.time_truncate(0.05).time_truncate(0.1);
        assert_eq!(nested.time_cut, Some(0.1));
        let nested2 = v.time_truncate(0.1).time_truncate(0.05);
        assert_eq!(nested2.time_cut, Some(0.1));
    }

    #[test]
    fn truncations_bounded_by_original() {
        let cases = [
            Potential::time_power(2, 0.7, 0.8),
            Potential::hardy(2, 1.3, 1.5),
            Potential::bounded_bump(2, 2.0, BoxDomain::centered_cube(2, 1.0)),
        ];
        // fixed sample set, no randomness needed for determinism
        let samples: Vec<(Vec<f64>, f64)> = (0..50)
            .map(|i| {
                let a = (i as f64) * 0.137 - 3.0;
                let b = (i as f64) * 0.071 - 1.5;
                (vec![a, b], 0.01 + 0.02 * i as f64)
            })
            .collect();
        for v in &cases {
            let vk = v.level_truncate(1.0);
            let vk2 = v.level_truncate(2.0);
            let vd = v.time_truncate(0.3);
            for (x, t) in &samples {
                let base = v.eval(x, *t).unwrap();
                let a = vk.eval(x, *t).unwrap();
                let b = vk2.eval(x, *t).unwrap();
                let d = vd.eval(x, *t).unwrap();
                assert!(a <= b + 1e-15 && b <= base + 1e-15);
                assert!((0.0..=base).contains(&d));
            }
        }
    }

    #[test]
    fn declared_c1_bound_holds_on_samples() {
        let v = Potential::time_power(1, 0.5, 1.0);
        let c1 = v.c1_bound.unwrap();
        for i in 1..100 {
            let t = i as f64 * 0.01;
            assert!(v.eval(&[0.3], t).unwrap() * t <= c1 + 1e-12);
        }
    }

    #[test]
    fn absorption_closed_form() {
        // int_0^t min(c/s, k) ds = c + c ln(kt/c) for t >= c/k
        let c = 0.5;
        let k = 100.0;
        let v = Potential::time_power(1, c, 1.0).level_truncate(k);
        let t = 0.2;
        let expect = c + c * (k * t / c).ln();
        assert!((v.accumulated_absorption(t).unwrap() - expect).abs() < 1e-12);

        // uncapped c/t diverges at 0
        assert!(Potential::time_power(1, c, 1.0).accumulated_absorption(t).is_none());

        // beta < 1: c t^{1-beta}/(1-beta)
        let v = Potential::time_power(1, 1.0, 0.5);
        assert!((v.accumulated_absorption(0.25).unwrap() - 1.0).abs() < 1e-12);

        // time cut shifts the lower limit
        let v = Potential::time_power(1, 1.0, 1.0).time_truncate(0.1);
        assert!((v.accumulated_absorption(1.0).unwrap() - (10.0f64).ln()).abs() < 1e-12);
    }
}
