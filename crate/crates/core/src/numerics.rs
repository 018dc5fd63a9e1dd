//! Small numerical kernels shared by the profile, regime and embedding code:
//! adaptive Simpson quadrature, monotone cubic interpolation, logarithmic
//! sample grids, least-squares slopes and a scalar Dormand–Prince integrator.

/// Absolute floor of the adaptive quadrature tolerance.
pub const QUAD_ABS_FLOOR: f64 = 1e-14;
/// Relative target of the adaptive quadrature.
pub const QUAD_REL_TARGET: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;
const MIN_DEPTH: u32 = 6;

/// Adaptive composite Simpson rule on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    adaptive_simpson_tol(&f, a, b, QUAD_REL_TARGET, QUAD_ABS_FLOOR)
}

pub fn adaptive_simpson_tol<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    if b == a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // a coarse pre-pass gives a scale for the relative target
    let scale = {
        let n = 16;
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x0 = a + i as f64 * h;
            s += (f(x0).abs() + 4.0 * f(x0 + 0.5 * h).abs() + f(x0 + h).abs()) * h / 6.0;
        }
        s.max(whole.abs())
    };
    let eps = (rel * scale).max(abs);
    simpson_rec(f, a, b, fa, fm, fb, whole, eps, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (depth + MIN_DEPTH <= MAX_DEPTH && delta.abs() <= 15.0 * eps) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// `n_per_decade` logarithmically spaced points covering `[lo, hi]`, endpoints
/// included.
pub fn log_grid(lo: f64, hi: f64, n_per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo, "log_grid needs 0 < lo < hi");
    let decades = (hi / lo).log10();
    let n = ((decades * n_per_decade as f64).ceil() as usize).max(1);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..=n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n {
                hi
            } else {
                (llo + (lhi - llo) * i as f64 / n as f64).exp()
            }
        })
        .collect()
}

/// Ordinary least-squares line through `(x, y)`: returns `(slope, intercept, r²)`.
///
/// `r²` is reported as 1 when the residuals vanish, including the degenerate
/// constant-`y` case.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if ss_res <= 1e-28 * (1.0 + syy) || syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Log-log slope of `values` against `radii` over the last decade of the
/// sample range. Returns `(slope, rms)` with `rms` the root-mean-square
/// residual of the fit in log space.
pub fn tail_slope(radii: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let r_end = *radii.last()?;
    let lo = r_end / 10.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(values)
        .filter(|(&r, &v)| r >= lo * (1.0 - 1e-12) && r > 0.0 && v > 0.0 && v.is_finite())
        .map(|(&r, &v)| (r.ln(), v.ln()))
        .unzip();
    if xs.len() < 4 {
        return None;
    }
    let (slope, intercept, _) = linear_fit(&xs, &ys);
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some((slope, (ss / xs.len() as f64).sqrt()))
}

/// Cumulative integrals `∫₀^{grid[j]} h(r) dr` along an increasing grid of
/// positive radii.
///
/// The head `[0, grid[0]]` is integrated exactly for the power law
/// `h(r) ≈ c r^k` fitted through the first two grid points; a head exponent
/// `k ≤ -1` makes the integral divergent and yields `None`.
pub fn cumulative_from_origin<F: Fn(f64) -> f64>(h: F, grid: &[f64]) -> Option<Vec<f64>> {
    let r0 = grid[0];
    let r1 = grid[1];
    let (h0, h1) = (h(r0), h(r1));
    let head = if h0 == 0.0 {
        0.0
    } else {
        let k = (h1 / h0).ln() / (r1 / r0).ln();
        if !(k > -1.0) {
            return None;
        }
        r0 * h0 / (k + 1.0)
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = head;
    out.push(acc);
    for w in grid.windows(2) {
        acc += adaptive_simpson(&h, w[0], w[1]);
        out.push(acc);
    }
    Some(out)
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` must be strictly increasing with at least two points.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = delta[0];
            ds[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            ds[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            ds[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { xs, ys, ds }
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    /// Evaluates inside the knot range; callers handle extrapolation.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.ds[i] + d01 * self.ys[i + 1] + d11 * self.ds[i + 1]
    }

    /// Exact integral of the interpolant over knot segment `i` (Simpson is
    /// exact on cubics).
    pub fn segment_integral(&self, i: usize) -> f64 {
        let (a, b) = (self.xs[i], self.xs[i + 1]);
        (b - a) / 6.0 * (self.ys[i] + 4.0 * self.eval(0.5 * (a + b)) + self.ys[i + 1])
    }

    /// Exact integral of the interpolant over `[a, b]`, both inside the knot range.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let simpson =
            |lo: f64, hi: f64| (hi - lo) / 6.0 * (self.eval(lo) + 4.0 * self.eval(0.5 * (lo + hi)) + self.eval(hi));
        let ia = self.segment(a);
        let ib = self.segment(b);
        if ia == ib {
            return simpson(a, b);
        }
        let mut s = simpson(a, self.xs[ia + 1]);
        for i in ia + 1..ib {
            s += self.segment_integral(i);
        }
        s + simpson(self.xs[ib], b)
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Unit-ball volume in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // ω_0 = 1, ω_1 = 2, ω_n = 2π/n · ω_{n-2}
    let mut w = if n.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        w *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    w
}

/// Integrates the scalar ODE `y' = f(x, y)` from `(x0, y0)` with adaptive
/// Dormand–Prince 5(4) steps, returning `y` at each of the increasing
/// `outputs` (all `>= x0`). `None` if the step size collapses or `y` leaves
/// the finite range.
pub fn dopri45<F: Fn(f64, f64) -> f64>(
    f: F,
    x0: f64,
    y0: f64,
    outputs: &[f64],
    rtol: f64,
    atol: f64,
) -> Option<Vec<f64>> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // fifth-order weights minus embedded fourth-order weights
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
    let mut out = Vec::with_capacity(outputs.len());
    let (mut x, mut y) = (x0, y0);
    let mut k1 = f(x, y);
    let span = outputs.last().map_or(0.0, |&e| e - x0).abs().max(1e-300);
    let mut h = 1e-3 * span;
    for &target in outputs {
        while x < target {
            let step = h.min(target - x);
            if step <= 1e-14 * x.abs().max(span) {
                return None;
            }
            let mut k = [k1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            for s in 0..6 {
                let yi = y + step * (0..=s).map(|j| A[s][j] * k[j]).sum::<f64>();
                k[s + 1] = f(x + C[s] * step, yi);
            }
            let y_new = y + step * (0..6).map(|j| A[5][j] * k[j]).sum::<f64>();
            let err = step * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
            let scale = atol + rtol * y.abs().max(y_new.abs());
            let ratio = (err / scale).abs();
            if !y_new.is_finite() || !ratio.is_finite() {
                h = 0.25 * step;
                continue;
            }
            if ratio <= 1.0 {
                x = if step == target - x { target } else { x + step };
                y = y_new;
                k1 = k[6];
            }
            let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * factor;
        }
        out.push(y);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn simpson_polynomial_and_singular() {
        assert_relative_eq!(adaptive_simpson(|x| x * x, 0.0, 3.0), 9.0, max_relative = 1e-14);
        // integrable endpoint singularity
        let v = adaptive_simpson(|x: f64| x.powf(-0.5), 1e-12, 1.0);
        assert_relative_eq!(v, 2.0 * (1.0 - 1e-6), max_relative = 1e-7);
        assert_relative_eq!(adaptive_simpson(f64::sin, 0.0, PI), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn unit_balls() {
        assert_relative_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), PI);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-15);
        assert_relative_eq!(unit_ball_volume(4), PI * PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn log_grid_density() {
        let g = log_grid(1e-2, 1e2, 256);
        assert_eq!(g.len(), 4 * 256 + 1);
        assert_eq!(g[0], 1e-2);
        assert_eq!(*g.last().unwrap(), 1e2);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fit_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (s, c, r2) = linear_fit(&xs, &ys);
        assert_relative_eq!(s, -0.5, epsilon = 1e-14);
        assert_relative_eq!(c, 2.0, epsilon = 1e-13);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn monotone_cubic_preserves_monotonicity() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = vec![0.0, 0.1, 0.1, 2.0, 2.1, 10.0];
        let p = MonotoneCubic::new(xs, ys);
        let mut prev = p.eval(0.0);
        for i in 1..=500 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert_relative_eq!(
            p.integral(0.0, 5.0),
            (0..5).map(|i| p.segment_integral(i)).sum::<f64>(),
            max_relative = 1e-14
        );
    }
    #[test]
    fn dopri_matches_exponential_and_logistic() {
        let ys = dopri45(|_, y| y, 0.0, 1.0, &[0.5, 1.0, 3.0], 1e-10, 1e-12).unwrap();
        for (y, x) in ys.iter().zip([0.5f64, 1.0, 3.0]) {
            assert!((y - x.exp()).abs() < 1e-8 * x.exp());
        }
        let ys = dopri45(|_, y| y * (1.0 - y), 0.0, 0.1, &[5.0], 1e-10, 1e-12).unwrap();
        let exact = 1.0 / (1.0 + 9.0 * (-5.0f64).exp());
        assert!((ys[0] - exact).abs() < 1e-8);
    }
}
