//! Scalar bisection and golden-section search on bracketing intervals.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Largest `x` in `[lo, hi]` with `f(x) <= target`, for nondecreasing `f`.
///
/// Requires `f(lo) <= target < f(hi)`. Returns the feasible end of the final
/// bracket once it is narrower than `x_tol` and the residual `target - f(x)`
/// is at most `f_tol`, or once the bracket cannot shrink further.
pub fn bisect_level<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64, x_tol: f64, f_tol: f64) -> f64 {
    let mut f_lo = f(lo);
    loop {
        if hi - lo <= x_tol && target - f_lo <= f_tol {
            return lo;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        let f_mid = f(mid);
        if f_mid <= target {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
}

/// Sign change of a nondecreasing `g` on `[lo, hi]`, with `g(lo) < 0 < g(hi)`.
///
/// Returns `None` if `g` produces a NaN inside the bracket.
pub fn bisect_sign<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, x_tol: f64) -> Option<f64> {
    while hi - lo > x_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = g(mid);
        if value.is_nan() {
            return None;
        }
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, x_tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > x_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the bracket ends may beat the midpoint when the minimum sits on the boundary
    [(x, fx), (a, f(a)), (b, f(b))]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_crossing_of_a_line() {
        let x = bisect_level(|x| 2.0 * x, 0.0, 1.0, 1.0, 1e-12, 1e-12);
        assert!((x - 0.5).abs() < 1e-12 && 2.0 * x <= 1.0);
    }

    #[test]
    fn sign_change_of_a_cubic() {
        let x = bisect_sign(|x| x * x * x - 0.125, 0.0, 1.0, 1e-12).unwrap();
        assert!((x - 0.5).abs() < 1e-11);
        assert_eq!(bisect_sign(|_| f64::NAN, 0.0, 1.0, 1e-12), None);
    }

    #[test]
    fn golden_section_interior_and_boundary() {
        let (x, _) = golden_section_min(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let (x, _) = golden_section_min(|x| -x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 1.0);
    }
}
