//! Central finite differences for verifying analytic gradients.

/// Default step for double-precision checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Numerical gradient of `f` at `x` by central differences.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&probe);
        probe[i] = orig - step;
        let fm = f(&probe);
        probe[i] = orig;
        grad.push((fp - fm) / (2.0 * step));
    }
    grad
}

/// Worst-case disagreement between two gradient vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradComparison {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl GradComparison {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Relative error `|a - n| / max(|a|, |n|, floor)` maximized over entries.
///
/// `floor` keeps entries whose true gradient is (numerically) zero from
/// dominating through division by round-off.
pub fn compare(analytic: &[f64], numeric: &[f64], floor: f64) -> GradComparison {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut out = GradComparison {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(floor);
        out.max_abs_err = out.max_abs_err.max(abs);
        if rel > out.max_rel_err || !rel.is_finite() {
            out.max_rel_err = if rel.is_finite() { rel } else { f64::INFINITY };
            out.worst_index = i;
            out.analytic_at_worst = a;
            out.numeric_at_worst = n;
        }
    }
    out
}
