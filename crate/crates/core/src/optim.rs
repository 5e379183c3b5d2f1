//! One-dimensional search helpers shared by the solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
///
/// Both endpoints are evaluated as well, and the best of the endpoints and
/// the interior estimate is returned, so the result is never worse than
/// `f(lo)`. Ties resolve towards the smaller abscissa.
pub(crate) fn golden_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if hi - lo <= tol {
        return if f_hi > f_lo { (hi, f_hi) } else { (lo, f_lo) };
    }

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        // NaN compares false, which moves towards the lower end.
        if fc >= fd || fd.is_nan() {
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
    let (mut best_x, mut best_f) = if fd > fc { (d, fd) } else { (c, fc) };

    if f_lo >= best_f || best_f.is_nan() {
        best_x = lo;
        best_f = f_lo;
    }
    if f_hi > best_f {
        best_x = hi;
        best_f = f_hi;
    }
    (best_x, best_f)
}
