//! Float math usable without `std`.

#[inline]
pub fn exp(x: f32) -> f32 {
    libm::expf(x)
}

#[inline]
pub fn ln(x: f32) -> f32 {
    libm::logf(x)
}

#[inline]
pub fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline]
pub fn powi(x: f32, n: i32) -> f32 {
    libm::powf(x, n as f32)
}

#[inline]
pub fn exp64(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln64(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10_64(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin64(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos64(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn pow64(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn round64(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn floor64(x: f64) -> f64 {
    libm::floor(x)
}
