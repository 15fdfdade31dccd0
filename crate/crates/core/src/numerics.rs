//! Small numerical building blocks shared by the physics and analysis
//! modules: adaptive quadrature, interpolation, Savitzky-Golay smoothing,
//! finite differences, peak prominence and a damped Gauss-Newton solver.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of a vector-valued integrand.
///
/// The interval is first split into `initial_panels` equal panels; each is
/// refined until the Richardson error estimate of every component falls
/// below its share of `abs_tol`.
pub fn integrate<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    abs_tol: f64,
    initial_panels: usize,
) -> [f64; K] {
    let mut total = [0.0; K];
    if a == b {
        return total;
    }
    let panels = initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let tol = abs_tol / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let fa = f(lo);
        let fm = f(0.5 * (lo + hi));
        let fb = f(hi);
        let whole = simpson(lo, hi, &fa, &fm, &fb);
        let part = simpson_recurse(&f, lo, hi, fa, fm, fb, whole, tol, 48);
        for k in 0..K {
            total[k] += part[k];
        }
    }
    total
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate(|x| [f(x)], a, b, abs_tol, 8)[0]
}

fn simpson<const K: usize>(a: f64, b: f64, fa: &[f64; K], fm: &[f64; K], fb: &[f64; K]) -> [f64; K] {
    let h = (b - a) / 6.0;
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = h * (fa[k] + 4.0 * fm[k] + fb[k]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<const K: usize>(
    f: &impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    fa: [f64; K],
    fm: [f64; K],
    fb: [f64; K],
    whole: [f64; K],
    tol: f64,
    depth: u32,
) -> [f64; K] {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let mut err: f64 = 0.0;
    for k in 0..K {
        err = err.max((left[k] + right[k] - whole[k]).abs());
    }
    if depth == 0 || err <= 15.0 * tol {
        let mut out = [0.0; K];
        for k in 0..K {
            let sum = left[k] + right[k];
            out[k] = sum + (sum - whole[k]) / 15.0;
        }
        return out;
    }
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = l[k] + r[k];
    }
    out
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre quadrature of a vector-valued integrand over
/// `panels` equal panels.
pub fn integrate_gauss<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> [f64; K] {
    let (nodes, weights) = rule;
    let width = (b - a) / panels as f64;
    let mut total = [0.0; K];
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (x, w) in nodes.iter().zip(weights) {
            let v = f(mid + 0.5 * width * x);
            for k in 0..K {
                total[k] += 0.5 * width * w * v[k];
            }
        }
    }
    total
}

/// Linear interpolation on an ascending abscissa, clamped at the ends.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x).max(1) - 1;
    let (x0, x1) = (xs[i], xs[i + 1]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        if i > 0 {
            acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        }
        out.push(acc);
    }
    out
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    cumulative_trapezoid(xs, ys).last().copied().unwrap_or(0.0)
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Weights that evaluate, at offset `at` (in samples, relative to the window
/// centre), the least-squares polynomial of degree `order` through a
/// window of `window` samples.
fn polyfit_weights(window: usize, order: usize, at: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let offsets: Vec<f64> = (0..window).map(|i| i as f64 - half).collect();
    let m = order + 1;
    // normal matrix of the Vandermonde basis
    let mut ata = vec![vec![0.0; m]; m];
    for &t in &offsets {
        for r in 0..m {
            for c in 0..m {
                ata[r][c] += t.powi((r + c) as i32);
            }
        }
    }
    let basis: Vec<f64> = (0..m).map(|p| at.powi(p as i32)).collect();
    // weights w_i = basis^T (A^T A)^{-1} a_i, so solve (A^T A) z = basis
    let z = solve_dense(ata, basis).expect("Savitzky-Golay normal matrix is nonsingular");
    offsets
        .iter()
        .map(|&t| (0..m).map(|p| z[p] * t.powi(p as i32)).sum())
        .collect()
}

/// Savitzky-Golay smoothing with polynomial edge handling: the first and last
/// `window/2` samples are taken from the fit over the first/last full window.
pub fn savgol_smooth(y: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window < 3 {
        return Err(Error::Argument(format!(
            "Savitzky-Golay window must be odd and >= 3, got {window}"
        )));
    }
    if order >= window {
        return Err(Error::Argument(format!(
            "polynomial order {order} must be below window {window}"
        )));
    }
    if window > y.len() {
        return Err(Error::Argument(format!(
            "Savitzky-Golay window {window} exceeds trace length {}",
            y.len()
        )));
    }
    let n = y.len();
    let half = window / 2;
    let centre = polyfit_weights(window, order, 0.0);
    let mut out = vec![0.0; n];
    for i in half..n - half {
        out[i] = centre
            .iter()
            .zip(&y[i - half..=i + half])
            .map(|(w, v)| w * v)
            .sum();
    }
    for i in 0..half {
        let w = polyfit_weights(window, order, i as f64 - half as f64);
        out[i] = w.iter().zip(&y[..window]).map(|(w, v)| w * v).sum();
        let w = polyfit_weights(window, order, half as f64 - i as f64);
        out[n - 1 - i] = w.iter().zip(&y[n - window..]).map(|(w, v)| w * v).sum();
    }
    Ok(out)
}

/// Second-order finite differences on a uniform grid: central in the
/// interior, one-sided three-point stencils at both ends.
pub fn gradient_uniform(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => {
            let d = (y[1] - y[0]) / h;
            vec![d, d]
        }
        _ => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
            for i in 1..n - 1 {
                d[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
            }
            d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
            d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima with their topographic prominence.
///
/// Plateaus of equal samples count as one maximum located at their left
/// edge. Prominence is the height above the higher of the two minima that
/// separate the peak from taller terrain (or the signal end) on each side.
pub fn find_peaks(y: &[f64]) -> Vec<Peak> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
        .into_iter()
        .map(|p| {
            let h = y[p];
            let mut left_min = h;
            let mut k = p;
            while k > 0 {
                k -= 1;
                if y[k] > h {
                    break;
                }
                left_min = left_min.min(y[k]);
            }
            let mut right_min = h;
            let mut k = p;
            while k + 1 < n {
                k += 1;
                if y[k] > h {
                    break;
                }
                right_min = right_min.min(y[k]);
            }
            Peak {
                index: p,
                height: h,
                prominence: h - left_min.max(right_min),
            }
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone)]
pub struct LeastSquaresOptions {
    pub max_iterations: usize,
    /// Relative step-size threshold for convergence.
    pub x_tol: f64,
    /// Relative cost-decrease threshold for convergence.
    pub f_tol: f64,
    pub initial_damping: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            x_tol: 1e-12,
            f_tol: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt minimisation of `Σ r_i(x)²` with a forward-difference
/// Jacobian. Intended for the handful of parameters used in curve fits.
pub fn levenberg_marquardt(
    residuals: impl Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: &LeastSquaresOptions,
) -> LeastSquaresSolution {
    let p = x0.len();
    let mut x = x0.to_vec();
    let mut r = residuals(&x);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let m = r.len();
        let mut jac = vec![vec![0.0; p]; m];
        for k in 0..p {
            let step = 1e-7 * x[k].abs().max(1e-7);
            let mut xp = x.clone();
            xp[k] += step;
            let rp = residuals(&xp);
            for i in 0..m {
                jac[i][k] = (rp[i] - r[i]) / step;
            }
        }
        let mut jtj = vec![vec![0.0; p]; p];
        let mut jtr = vec![0.0; p];
        for i in 0..m {
            for a in 0..p {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..p {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for a in 0..p {
                lhs[a][a] += lambda * jtj[a][a].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(delta) = solve_dense(lhs, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let r_trial = residuals(&trial);
            let cost_trial: f64 = r_trial.iter().map(|v| v * v).sum();
            if cost_trial.is_finite() && cost_trial <= cost {
                let step_small = delta
                    .iter()
                    .zip(&x)
                    .all(|(d, v)| d.abs() <= opts.x_tol * (v.abs() + opts.x_tol));
                let cost_small = cost - cost_trial <= opts.f_tol * cost.max(1e-300);
                x = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if step_small || cost_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: at a (local) minimum
            converged = true;
        }
        if converged {
            break;
        }
    }

    LeastSquaresSolution {
        x,
        residuals: r,
        cost,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian() {
        let v = integrate_scalar(|x| (-x * x).exp(), -10.0, 10.0, 1e-13);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_is_exact_for_high_degree() {
        let rule = gauss_legendre(20);
        let sum: f64 = rule.1.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        // degree 38 monomial
        let v = integrate_gauss(|x| [x.powi(38)], -1.0, 1.0, 1, &rule)[0];
        assert!((v - 2.0 / 39.0).abs() < 1e-14);
        let v = integrate_gauss(|x| [x.cos()], 0.0, 3.0, 4, &rule)[0];
        assert!((v - 3f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn interp_clamps_and_interpolates() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 30.0];
        assert_eq!(interp_linear(&xs, &ys, -1.0), 0.0);
        assert_eq!(interp_linear(&xs, &ys, 1.5), 20.0);
        assert_eq!(interp_linear(&xs, &ys, 5.0), 30.0);
    }

    #[test]
    fn savgol_preserves_cubics() {
        let y: Vec<f64> = (0..40).map(|i| {
            let x = i as f64 * 0.1;
            1.0 - 2.0 * x + 0.5 * x * x - 0.1 * x * x * x
        }).collect();
        let s = savgol_smooth(&y, 11, 3).unwrap();
        for (a, b) in y.iter().zip(&s) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn savgol_rejects_bad_windows() {
        let y = vec![0.0; 5];
        assert!(savgol_smooth(&y, 11, 3).is_err());
        assert!(savgol_smooth(&y, 4, 1).is_err());
    }

    #[test]
    fn gradient_exact_for_quadratics() {
        let h = 0.25;
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * h).powi(2)).collect();
        let d = gradient_uniform(&y, h);
        for (i, v) in d.iter().enumerate() {
            assert!((v - 2.0 * i as f64 * h).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_prominence_matches_hand_count() {
        let y = [0.0, 2.0, 1.0, 3.0, 0.5, 0.0];
        let p = find_peaks(&y);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].index, 1);
        assert!((p[0].prominence - 1.0).abs() < 1e-12);
        assert_eq!(p[1].index, 3);
        assert!((p[1].prominence - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lm_fits_exponential() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let sol = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * (-p[1] * x).exp() - y).collect(),
            &[1.0, 0.5],
            &LeastSquaresOptions::default(),
        );
        assert!(sol.converged);
        assert!((sol.x[0] - 2.5).abs() < 1e-8);
        assert!((sol.x[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 95.0), Some(4.8));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }
}
