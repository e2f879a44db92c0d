//! Optimal model size under the expected `C_p` and the expected C_p-type
//! Random-X criterion when `sigma_S^2(p) = alpha (1 - p/d)^eta`, `d = n`,
//! `sigma_eps^2 = 1`, indexed by `gamma = p / n`.

use crate::error::{Error, Result};

/// Expected Fixed-X error `1 + gamma + alpha (1 - gamma)^(eta + 1)`.
pub fn err_f_curve(alpha: f64, eta: f64, gamma: f64) -> f64 {
    1.0 + gamma + alpha * (1.0 - gamma).powf(eta + 1.0)
}

/// Expected Random-X error at `gamma < 1 - 1/n`.
pub fn err_r_curve(alpha: f64, eta: f64, n: usize, gamma: f64) -> f64 {
    let g = 1.0 - gamma;
    let tail = g - 1.0 / n as f64;
    let shrink = alpha * gamma * g.powf(eta);
    1.0 + alpha * g.powf(eta + 1.0) + shrink + shrink / tail + gamma / tail
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Minimiser over `[0, hi]`: grid scan, then golden section around the best cell.
fn minimise(f: &dyn Fn(f64) -> f64, hi: f64) -> f64 {
    const GRID: usize = 4000;
    let step = hi / GRID as f64;
    let best = (0..=GRID)
        .min_by(|&i, &j| f(i as f64 * step).total_cmp(&f(j as f64 * step)))
        .unwrap_or(0);
    let a = best.saturating_sub(1) as f64 * step;
    let b = ((best + 1).min(GRID)) as f64 * step;
    let g = golden_section(f, a, b, 1e-8);
    let candidates = [g, 0.0, best as f64 * step];
    candidates
        .into_iter()
        .min_by(|&u, &v| f(u).total_cmp(&f(v)).then(u.total_cmp(&v)))
        .unwrap_or(g)
}

/// `(gamma_F*, gamma_R*)`: the closed-form `max(0, 1 - c^(-1/eta))` with
/// `c = alpha (eta + 1)`, and the numerical minimiser of [`err_r_curve`] on
/// `[0, 1 - 1/n - 1e-6]`.
pub fn analytic_optimal_size(alpha: f64, eta: f64, n: usize) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !(eta >= 1.0) || n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need alpha > 0, eta >= 1, n >= 3; got alpha = {alpha}, eta = {eta}, n = {n}"
        )));
    }
    let c = alpha * (eta + 1.0);
    let gamma_f = (1.0 - c.powf(-1.0 / eta)).max(0.0);
    let hi = 1.0 - 1.0 / n as f64 - 1e-6;
    let gamma_r = minimise(&|g| err_r_curve(alpha, eta, n, g), hi);
    Ok((gamma_f, gamma_r))
}
