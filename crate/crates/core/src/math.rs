//! Scalar helpers backed by `libm` so results do not depend on the
//! platform math library.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `1 - normal_cdf(z)`, accurate for large positive `z`.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Mass of the standard normal on `[za, zb]`.
pub fn normal_interval(za: f64, zb: f64) -> f64 {
    if zb <= za {
        return 0.0;
    }
    // Subtract in whichever tail keeps both terms small.
    if za >= 0.0 {
        normal_sf(za) - normal_sf(zb)
    } else {
        normal_cdf(zb) - normal_cdf(za)
    }
}

/// `ln(sum(exp(xs)))`; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum)
}
