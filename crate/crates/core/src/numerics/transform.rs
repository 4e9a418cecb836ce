//! Maps between bounded parameters and the unconstrained search space.

/// Transformed coordinates beyond this magnitude are reported as sitting on
/// the parameter bound.
pub const BOUNDARY_THRESHOLD: f64 = 12.0;

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`], clamped to `±40` at the endpoints.
#[inline]
pub fn logit(x: f64) -> f64 {
    (x.ln() - (-x).ln_1p()).clamp(-40.0, 40.0)
}

/// `ln(1 + e^t)`.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn inv_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp_m1().ln()
    }
}
