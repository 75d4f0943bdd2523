//! Conversions between file units (km, km/h, s) and internal SI.

pub const KMH_PER_MS: f64 = 3.6;
pub const M_PER_KM: f64 = 1000.0;
pub const S_PER_H: f64 = 3600.0;

#[inline]
pub fn kmh_to_ms(v: f64) -> f64 {
    v / KMH_PER_MS
}

#[inline]
pub fn ms_to_kmh(v: f64) -> f64 {
    v * KMH_PER_MS
}

#[inline]
pub fn km_to_m(d: f64) -> f64 {
    d * M_PER_KM
}

/// kW·s accumulated by the integrator to kWh.
#[inline]
pub fn kws_to_kwh(e: f64) -> f64 {
    e / S_PER_H
}
