//! Small shared finite-difference plumbing: the tridiagonal (Thomas) solve
//! used by the 1-d Poisson weight and the Crank–Nicolson stepper.

/// Solves a tridiagonal system in place. `sub` and `sup` have length n−1,
/// `diag` and `rhs` length n; the solution overwrites `rhs`.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    assert!(n >= 1 && sub.len() == n - 1 && sup.len() == n - 1 && rhs.len() == n);
    let mut c = vec![0.0; n - 1];
    let mut d = diag[0];
    rhs[0] /= d;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / d;
        d = diag[i] - sub[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_poisson_stencil() {
        // -u'' = 1 on (0,1), u(0)=u(1)=0, u(x)=x(1-x)/2
        let n = 99;
        let h = 1.0 / (n as f64 + 1.0);
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let diag = vec![2.0; n];
        let mut rhs = vec![h * h; n];
        thomas(&sub, &diag, &sup, &mut rhs);
        for i in 0..n {
            let x = (i + 1) as f64 * h;
            let exact = 0.5 * x * (1.0 - x);
            assert!((rhs[i] - exact).abs() < 1e-12);
        }
    }
}
