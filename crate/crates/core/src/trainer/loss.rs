//! Scalar losses and their derivatives.

/// `max(0, d_pos − d_neg + margin)`
pub fn hinge_term(d_pos: f64, d_neg: f64, margin: f64) -> f64 {
    (d_pos - d_neg + margin).max(0.0)
}

/// Contrastive loss on a squared distance `d`: `d` for positives,
/// `max(0, m − √d)²` for negatives. Returns `(loss, ∂loss/∂d)`.
///
/// The negative branch is not differentiable at `d = 0`; the derivative is
/// taken as zero there.
pub fn contrastive_loss(d: f64, is_positive: bool, margin: f64) -> (f64, f64) {
    if is_positive {
        return (d, 1.0);
    }
    let s = d.max(0.0).sqrt();
    if s >= margin {
        return (0.0, 0.0);
    }
    let gap = margin - s;
    let grad = if s > 0.0 { -gap / s } else { 0.0 };
    (gap * gap, grad)
}

/// `ln(1 + e^{−(s_pos − s_neg)})` and its derivative with respect to
/// `s_pos` (the derivative with respect to `s_neg` is the negation).
pub fn bpr_loss(s_pos: f64, s_neg: f64) -> (f64, f64) {
    let z = s_pos - s_neg;
    let (loss, sig_neg) = if z >= 0.0 {
        let e = (-z).exp();
        (e.ln_1p(), e / (1.0 + e))
    } else {
        let e = z.exp();
        (-z + e.ln_1p(), 1.0 / (1.0 + e))
    };
    (loss, -sig_neg)
}
