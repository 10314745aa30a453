//! Angle conversions. Everything outside the hysteresis model is in radians;
//! torsion inside the hysteresis model is in degrees.

pub const DEG_PER_RAD: f64 = 180.0 / std::f64::consts::PI;

#[inline]
pub fn rad_to_deg(rad: f64) -> f64 {
    rad * DEG_PER_RAD
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg / DEG_PER_RAD
}
