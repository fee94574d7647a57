pub fn sigmoid(score: f64) -> f64 {
    if score >= 0.0 {
        1.0 / (1.0 + (-score).exp())
    } else {
        let e = score.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a log-odds score, `ln(1 + e^s) - y·s`.
pub fn logistic_loss(score: f64, label: f64) -> f64 {
    let softplus = if score > 0.0 { score + (-score).exp().ln_1p() } else { score.exp().ln_1p() };
    softplus - label * score
}

/// First and second derivative of [`logistic_loss`] with respect to the score.
pub fn logistic_grad_hess(score: f64, label: f64) -> (f64, f64) {
    let p = sigmoid(score);
    (p - label, p * (1.0 - p))
}
