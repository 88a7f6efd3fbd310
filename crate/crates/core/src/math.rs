//! Float helpers routed through `libm` so the crate stays `no_std`.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn powf(x: f64, e: f64) -> f64 {
    libm::pow(x, e)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// Cosine and sine of an angle in degrees, exact at multiples of 90.
pub fn cos_sin_deg(theta: f64) -> (f64, f64) {
    let t = wrap_deg(theta);
    if t == 0.0 {
        (1.0, 0.0)
    } else if t == 90.0 {
        (0.0, 1.0)
    } else if t == 180.0 {
        (-1.0, 0.0)
    } else if t == 270.0 {
        (0.0, -1.0)
    } else {
        let r = t * core::f64::consts::PI / 180.0;
        (cos(r), sin(r))
    }
}

/// Nearest integer with halves rounded up, used by every raster resampler.
#[inline]
pub fn nearest(x: f64) -> i64 {
    floor(x + 0.5) as i64
}

/// Normalizes an angle in degrees into `[0, 360)`.
pub fn wrap_deg(theta: f64) -> f64 {
    let r = theta % 360.0;
    let r = if r < 0.0 { r + 360.0 } else { r };
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
