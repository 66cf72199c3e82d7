use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid carbon intensity used when none is configured, kg CO₂ per kWh.
pub const DEFAULT_INTENSITY_KG_PER_KWH: f64 = 0.366;
/// Energy charged per per-sample gradient evaluation by the proxy, joules.
pub const DEFAULT_JOULES_PER_EVAL: f64 = 1e-3;

const JOULES_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionsEstimate {
    pub power_kw: f64,
    pub duration_h: f64,
    pub intensity_kg_per_kwh: f64,
    pub kg_co2: f64,
    pub proxy_gradient_evals: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmissionsError {
    #[error("{0} must be a non-negative finite number")]
    Negative(&'static str),
}

fn check(v: f64, name: &'static str) -> Result<f64, EmissionsError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(EmissionsError::Negative(name))
    }
}

/// `kg = P · t · I`
pub fn emissions(power_kw: f64, duration_h: f64, intensity: f64) -> Result<EmissionsEstimate, EmissionsError> {
    check(power_kw, "power")?;
    check(duration_h, "duration")?;
    check(intensity, "intensity")?;
    Ok(EmissionsEstimate {
        power_kw,
        duration_h,
        intensity_kg_per_kwh: intensity,
        kg_co2: power_kw * duration_h * intensity,
        proxy_gradient_evals: 0,
    })
}

/// Energy from `(power in W, interval in s)` samples, converted from
/// watt-seconds to kWh, times `intensity`. The reported power is the mean
/// over the covered time.
pub fn emissions_integrated(samples: &[(f64, f64)], intensity: f64) -> Result<EmissionsEstimate, EmissionsError> {
    check(intensity, "intensity")?;
    let mut joules = 0.0;
    let mut seconds = 0.0;
    for &(p, dt) in samples {
        joules += check(p, "power")? * check(dt, "interval")?;
        seconds += dt;
    }
    let energy_kwh = joules / JOULES_PER_KWH;
    let duration_h = seconds / 3600.0;
    let power_kw = if seconds > 0.0 { joules / seconds / 1000.0 } else { 0.0 };
    Ok(EmissionsEstimate {
        power_kw,
        duration_h,
        intensity_kg_per_kwh: intensity,
        kg_co2: energy_kwh * intensity,
        proxy_gradient_evals: 0,
    })
}

/// Machine-independent estimate: each gradient evaluation costs
/// `joules_per_eval`. Reported over a nominal one-hour window.
pub fn emissions_from_evals(
    evals: u64,
    joules_per_eval: f64,
    intensity: f64,
) -> Result<EmissionsEstimate, EmissionsError> {
    check(joules_per_eval, "joules per evaluation")?;
    check(intensity, "intensity")?;
    let energy_kwh = evals as f64 * joules_per_eval / JOULES_PER_KWH;
    Ok(EmissionsEstimate {
        power_kw: energy_kwh,
        duration_h: 1.0,
        intensity_kg_per_kwh: intensity,
        kg_co2: energy_kwh * intensity,
        proxy_gradient_evals: evals,
    })
}
