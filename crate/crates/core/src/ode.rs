//! Fixed-step classic Runge–Kutta integration.

/// One classic fourth-order Runge–Kutta step of `dx/dt = f(t, x)`.
///
/// A negative `h` steps backward in time, which is the same as integrating the
/// reversal-time system `dx̃/ds = −f(t_q − s, x̃)` forward in `s`.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, x: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(x, h, &k3));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}

/// Number of equal substeps needed to cover `span` with steps no longer than `max_step`.
pub fn substep_count(span: f64, max_step: f64) -> usize {
    let n = (span.abs() / max_step * (1.0 - 1e-12)).ceil();
    (n as usize).max(1)
}

/// Integrates through an ordered list of knot times (ascending or descending)
/// and returns the state at every knot. Each knot interval is split into
/// equal substeps no longer than `max_step`, so knots are hit exactly.
pub fn march_knots<const N: usize, F>(knots: &[f64], x0: [f64; N], max_step: f64, mut f: F) -> Vec<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut out = Vec::with_capacity(knots.len());
    if knots.is_empty() {
        return out;
    }
    let mut x = x0;
    out.push(x);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = substep_count(b - a, max_step);
        let h = (b - a) / n as f64;
        for k in 0..n {
            x = rk4_step(&mut f, a + k as f64 * h, &x, h);
        }
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let mut f = |_t: f64, x: &[f64; 1]| [-x[0]];
        let mut err = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let mut x = [1.0];
            for k in 0..n {
                x = rk4_step(&mut f, k as f64 * h, &x, h);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn knots_are_hit_and_reversible() {
        let knots: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let f = |t: f64, x: &[f64; 2]| [x[1], -x[0] + t.sin()];
        let fwd = march_knots(&knots, [0.3, -0.2], 0.01, f);
        assert_eq!(fwd.len(), 11);
        let rev: Vec<f64> = knots.iter().rev().copied().collect();
        let back = march_knots(&rev, fwd[10], 0.01, f);
        assert!((back[10][0] - 0.3).abs() < 1e-10);
        assert!((back[10][1] + 0.2).abs() < 1e-10);
    }

    #[test]
    fn substeps_never_exceed_max() {
        assert_eq!(substep_count(0.01, 0.001), 10);
        assert_eq!(substep_count(0.0105, 0.001), 11);
        assert_eq!(substep_count(0.0, 0.001), 1);
    }
}
