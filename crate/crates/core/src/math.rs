//! Thin wrappers over `libm` so the core stays `no_std` and bit-reproducible
//! across targets.

pub(crate) fn log10(x: f64) -> f64 {
    libm::log10(x)
}

pub(crate) fn log2(x: f64) -> f64 {
    libm::log2(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub(crate) fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

pub(crate) fn linear_to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// `atan2` in degrees.
pub(crate) fn atan2_deg(y: f64, x: f64) -> f64 {
    libm::atan2(y, x).to_degrees()
}

pub(crate) fn cos_deg(a: f64) -> f64 {
    libm::cos(a.to_radians())
}

pub(crate) fn sin_deg(a: f64) -> f64 {
    libm::sin(a.to_radians())
}

/// Wraps an angle in degrees into (-180, 180].
pub(crate) fn wrap_deg(a: f64) -> f64 {
    let mut w = a - 360.0 * floor(a / 360.0);
    if w > 180.0 {
        w -= 360.0;
    }
    w
}
