use crate::fields::DrivingField;
use crate::{Error, Result};

/// Step durations `τ_m = ∫_{t0+(m−1)dt}^{t0+m·dt} B(t) dt / B0`, `m = 1..=n_steps`,
/// where `t0` is the field's first sample time. A run at constant coupling
/// `B0` over these durations reproduces the time-dependent coupling `B(t)` on
/// the uniform grid when the Hamiltonian commutes with itself at all times.
pub fn warp_time_grid(field: &DrivingField, b0: f64, dt: f64, n_steps: usize) -> Result<Vec<f64>> {
    if b0 == 0.0 || !b0.is_finite() {
        return Err(Error::InvalidArgument(format!("reference coupling B0 = {b0}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step {dt}")));
    }
    let t0 = field.t_start();
    let end = t0 + n_steps as f64 * dt;
    if end > field.t_end() + 1e-9 * dt {
        return Err(Error::FieldDomain(end));
    }
    (1..=n_steps)
        .map(|m| {
            let a = t0 + (m - 1) as f64 * dt;
            let b = (t0 + m as f64 * dt).min(field.t_end());
            Ok(field.integral(a, b)? / b0)
        })
        .collect()
}
