//! Small statistics helpers shared by the runners, the plotting code and the
//! test suites. Everything here works on finite `f64` data.

/// Linear-interpolation quantile (the "type 7" estimator). `q` in [0, 1].
///
/// Panics on an empty slice or non-finite entries.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    assert!(!data.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile fraction out of range");
    let mut sorted: Vec<f64> = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite data in quantile"));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

pub fn mean(data: &[f64]) -> f64 {
    assert!(!data.is_empty(), "mean of empty slice");
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 points.
pub fn sample_std(data: &[f64]) -> f64 {
    if data.len() < 2 {
        return 0.0;
    }
    let m = mean(data);
    let var = data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (data.len() - 1) as f64;
    var.sqrt()
}

/// Gradient-check error: relative above unit magnitude, absolute below, so
/// vanishing gradients are not drowned by finite-difference noise while any
/// formula error of visible size still registers.
pub fn rel_err(analytic: f64, reference: f64) -> f64 {
    let denom = analytic.abs().max(reference.abs()).max(1.0);
    (analytic - reference).abs() / denom
}
