/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh(softplus(x)) = n / (n + 2)` with `n = eˣ(eˣ + 2)`.
fn tanh_softplus(x: f64) -> f64 {
    if x > 20.0 {
        return 1.0;
    }
    let e = x.exp();
    let n = e * (e + 2.0);
    n / (n + 2.0)
}

/// `x · tanh(softplus(x))`
pub fn mish(x: f64) -> f64 {
    x * tanh_softplus(x)
}

pub fn mish_grad(x: f64) -> f64 {
    let t = tanh_softplus(x);
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// Binary cross-entropy of `sigmoid(logit)` against target `y ∈ [0, 1]`.
pub fn bce_with_logits(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Standardize a row in place to zero mean and unit variance; returns `1/σ`.
pub(crate) fn standardize_row(row: &mut [f64], eps: f64) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + eps).sqrt();
    for v in row.iter_mut() {
        *v = (*v - mean) * rstd;
    }
    rstd
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mish_reference_values() {
        assert_eq!(mish(0.0), 0.0);
        assert!((mish(20.0) - 20.0).abs() < 1e-6);
        // 40-digit evaluation of x·tanh(ln(1+eˣ))
        assert!((mish(1.0) - 0.865_098_388_267_310_3).abs() < 1e-15);
        assert!((mish(-1.0) + 0.303_401_461_374_108_9).abs() < 1e-15);
    }

    #[test]
    fn mish_grad_matches_central_difference() {
        for i in -60..=60 {
            let x = i as f64 * 0.25;
            let h = 1e-6;
            let fd = (mish(x + h) - mish(x - h)) / (2.0 * h);
            assert!((fd - mish_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn bce_limits() {
        assert!((bce_with_logits(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logits(40.0, 1.0) < 1e-15);
        assert!(bce_with_logits(-40.0, 0.0) < 1e-15);
        assert!((bce_with_logits(-40.0, 1.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn standardized_row_moments() {
        let mut row = vec![3.0, -1.0, 4.0, 1.5, 9.0, 2.6];
        standardize_row(&mut row, 0.0);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
