//! Driving-field trajectories: Gaussian random processes, quenches and
//! periodic drives on a uniform time grid.

mod gp;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::format_f64;
use crate::{Error, Result};

pub use gp::{gp_correlation_matrix, sample_gp, sample_gp_mixture, GpMixture, GpParams, GpSampler};

/// Relative slack when comparing grid times.
const GRID_EPS: f64 = 1e-9;

/// Uniform time grid `t_start + k·dt`, `k = 0..n_points`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_points: usize,
}

impl FieldGrid {
    pub fn new(t_start: f64, dt: f64, n_points: usize) -> Result<Self> {
        if dt.is_nan() || dt <= 0.0 || !dt.is_finite() || !t_start.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid grid t_start={t_start}, dt={dt}")));
        }
        if n_points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(Self { t_start, dt, n_points })
    }

    /// Grid covering `[t_start, t_start + horizon]` inclusive.
    pub fn with_horizon(t_start: f64, dt: f64, horizon: f64) -> Result<Self> {
        if horizon.is_nan() || horizon < 0.0 {
            return Err(Error::InvalidArgument(format!("negative horizon {horizon}")));
        }
        Self::new(t_start, dt, (horizon / dt).round() as usize + 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_points - 1)
    }

    pub fn horizon(&self) -> f64 {
        self.t_end() - self.t_start
    }
}

/// How a field was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldGenerator {
    GaussianProcess { c0: f64, sigma: f64 },
    Quench { steps: Vec<(f64, f64)> },
    Periodic { amplitude: f64, omega: f64 },
    Constant { value: f64 },
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub generator: FieldGenerator,
    pub seed: Option<u64>,
}

impl FieldMeta {
    pub fn explicit() -> Self {
        Self { generator: FieldGenerator::Explicit, seed: None }
    }
}

/// A scalar control signal sampled on a uniform grid.
///
/// Between grid points the field is linearly interpolated; outside the grid
/// it is held constant for up to one grid spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr")]
pub struct DrivingField {
    times: Vec<f64>,
    values: Vec<f64>,
    meta: FieldMeta,
}

#[derive(Deserialize)]
struct FieldRepr {
    times: Vec<f64>,
    values: Vec<f64>,
    meta: FieldMeta,
}

impl TryFrom<FieldRepr> for DrivingField {
    type Error = Error;
    fn try_from(r: FieldRepr) -> Result<Self> {
        DrivingField::from_samples(r.times, r.values, r.meta)
    }
}

impl DrivingField {
    pub fn new(grid: &FieldGrid, values: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::Shape(format!("{} values for a grid of {} points", values.len(), grid.n_points)));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("field value {k} is not finite")));
        }
        Ok(Self { times: grid.times(), values, meta })
    }

    /// Builds a field from explicit sample times, which must be uniformly
    /// spaced within 1e-12 (relative to their magnitude).
    pub fn from_samples(times: Vec<f64>, values: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Shape("times and values must be non-empty and equal length".into()));
        }
        if times.len() > 1 {
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            if dt.is_nan() || dt <= 0.0 {
                return Err(Error::InvalidArgument("times must be strictly increasing".into()));
            }
            for (k, &t) in times.iter().enumerate() {
                let expect = times[0] + k as f64 * dt;
                if (t - expect).abs() > 1e-12 * expect.abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!("time {k} breaks uniform spacing")));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { times, values, meta })
    }

    pub fn constant(grid: &FieldGrid, value: f64) -> Result<Self> {
        Self::new(
            grid,
            vec![value; grid.n_points],
            FieldMeta { generator: FieldGenerator::Constant { value }, seed: None },
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Grid spacing; for a single-point field this is `+∞`.
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            f64::INFINITY
        } else {
            (self.t_end() - self.t_start()) / (self.times.len() - 1) as f64
        }
    }

    pub fn grid(&self) -> FieldGrid {
        let dt = if self.times.len() < 2 { 1.0 } else { self.dt() };
        FieldGrid { t_start: self.t_start(), dt, n_points: self.len() }
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::FieldDomain(t));
        }
        let n = self.values.len();
        if n == 1 {
            return Ok(self.values[0]);
        }
        let dt = self.dt();
        let slack = dt * (1.0 + GRID_EPS);
        if t < self.t_start() - slack || t > self.t_end() + slack {
            return Err(Error::FieldDomain(t));
        }
        let u = (t - self.t_start()) / dt;
        if u <= 0.0 {
            return Ok(self.values[0]);
        }
        if u >= (n - 1) as f64 {
            return Ok(self.values[n - 1]);
        }
        let k = u.floor() as usize;
        let w = u - k as f64;
        Ok(self.values[k] * (1.0 - w) + self.values[k + 1] * w)
    }

    /// Exact integral of the interpolant over `[a, b]` (`a ≤ b`), i.e. the
    /// trapezoid rule on the native grid with partial end cells.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        let tol = GRID_EPS * self.dt().clamp(1e-300, 1.0) + 1e-12 * b.abs().max(1.0);
        if a < self.t_start() - tol || b > self.t_end() + tol {
            return Err(Error::FieldDomain(if a < self.t_start() { a } else { b }));
        }
        let a = a.max(self.t_start());
        let b = b.min(self.t_end());
        if self.values.len() == 1 || b <= a {
            return Ok(self.values[0] * (b - a).max(0.0));
        }
        let dt = self.dt();
        let mut nodes = vec![a];
        let first = ((a - self.t_start()) / dt).floor() as usize + 1;
        let mut k = first;
        while k < self.values.len() {
            let tk = self.times[k];
            if tk >= b - 1e-14 * b.abs().max(1.0) {
                break;
            }
            if tk > a {
                nodes.push(tk);
            }
            k += 1;
        }
        nodes.push(b);
        let mut total = 0.0;
        for w in nodes.windows(2) {
            let (fa, fb) = (self.value_at(w[0])?, self.value_at(w[1])?);
            total += 0.5 * (fa + fb) * (w[1] - w[0]);
        }
        Ok(total)
    }

    /// Field with times multiplied by `time_scale` and values by `value_scale`.
    pub fn rescaled(&self, time_scale: f64, value_scale: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t * time_scale).collect(),
            values: self.values.iter().map(|v| v * value_scale).collect(),
            meta: self.meta.clone(),
        }
    }

    /// First `n_points` samples.
    pub fn truncated(&self, n_points: usize) -> Result<Self> {
        if n_points == 0 || n_points > self.len() {
            return Err(Error::InvalidArgument(format!("cannot truncate a {}-point field to {n_points}", self.len())));
        }
        Ok(Self {
            times: self.times[..n_points].to_vec(),
            values: self.values[..n_points].to_vec(),
            meta: self.meta.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "B"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            wr.write_record([format_f64(*t), format_f64(*v)])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad field CSV row {rec:?}")))
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::from_samples(times, values, FieldMeta::explicit())
    }
}

/// Piecewise-constant field. Each step's height applies from its time onward
/// (left-closed intervals); the first height also covers any time before the
/// first step.
pub fn make_quench(steps: &[(f64, f64)], grid: &FieldGrid) -> Result<DrivingField> {
    if steps.is_empty() {
        return Err(Error::InvalidArgument("quench needs at least one step".into()));
    }
    let eps = GRID_EPS * grid.dt;
    for w in steps.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(Error::InvalidArgument("quench steps must be sorted by time".into()));
        }
    }
    for &(t, h) in steps {
        if t < grid.t_start - eps || t > grid.t_end() + eps || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("quench step ({t}, {h}) outside the horizon")));
        }
    }
    let values = grid
        .times()
        .into_iter()
        .map(|t| steps.iter().rev().find(|&&(ts, _)| ts <= t + eps).unwrap_or(&steps[0]).1)
        .collect();
    DrivingField::new(
        grid,
        values,
        FieldMeta { generator: FieldGenerator::Quench { steps: steps.to_vec() }, seed: None },
    )
}

/// `A·cos(ω t)` on the grid.
pub fn make_periodic(amplitude: f64, omega: f64, grid: &FieldGrid) -> Result<DrivingField> {
    let values = grid.times().into_iter().map(|t| amplitude * (omega * t).cos()).collect();
    DrivingField::new(grid, values, FieldMeta { generator: FieldGenerator::Periodic { amplitude, omega }, seed: None })
}

/// Family of random fields with parameter ranges, used by dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FieldFamily {
    GpMixture {
        #[serde(default = "default_c0_range")]
        c0_range: (f64, f64),
        #[serde(default = "default_sigma_range")]
        sigma_range: (f64, f64),
    },
    Quench {
        #[serde(default = "default_height_range")]
        height_range: (f64, f64),
        #[serde(default = "default_switch_range")]
        switch_count: (usize, usize),
    },
    Periodic {
        #[serde(default = "default_height_range")]
        amplitude_range: (f64, f64),
        #[serde(default = "default_omega_range")]
        omega_range: (f64, f64),
    },
    Constant {
        range: (f64, f64),
    },
}

fn default_c0_range() -> (f64, f64) {
    (0.0, 4.0)
}
fn default_sigma_range() -> (f64, f64) {
    (1.0, 9.0)
}
fn default_height_range() -> (f64, f64) {
    (-3.0, 3.0)
}
fn default_switch_range() -> (usize, usize) {
    (1, 3)
}
fn default_omega_range() -> (f64, f64) {
    (0.1, 4.0)
}

impl FieldFamily {
    pub fn gp_mixture() -> Self {
        FieldFamily::GpMixture { c0_range: default_c0_range(), sigma_range: default_sigma_range() }
    }

    pub fn quench() -> Self {
        FieldFamily::Quench { height_range: default_height_range(), switch_count: default_switch_range() }
    }

    pub fn periodic() -> Self {
        FieldFamily::Periodic { amplitude_range: default_height_range(), omega_range: default_omega_range() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldFamily::GpMixture { .. } => "gp_mixture",
            FieldFamily::Quench { .. } => "quench",
            FieldFamily::Periodic { .. } => "periodic",
            FieldFamily::Constant { .. } => "constant",
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, grid: &FieldGrid, rng: &mut R) -> Result<DrivingField> {
        match self {
            FieldFamily::GpMixture { c0_range, sigma_range } => {
                let mix =
                    GpMixture { c0_range: *c0_range, sigma_range: *sigma_range, dt: grid.dt, horizon: grid.horizon() };
                Ok(sample_gp_mixture(&mix, rng)?.shifted(grid.t_start))
            }
            FieldFamily::Quench { height_range, switch_count } => {
                random_quench(grid, *height_range, *switch_count, rng)
            }
            FieldFamily::Periodic { amplitude_range, omega_range } => {
                let a = uniform(rng, *amplitude_range);
                let w = uniform(rng, *omega_range);
                make_periodic(a, w, grid)
            }
            FieldFamily::Constant { range } => DrivingField::constant(grid, uniform(rng, *range)),
        }
    }
}

impl DrivingField {
    fn shifted(mut self, t0: f64) -> Self {
        if t0 != 0.0 {
            for t in &mut self.times {
                *t += t0;
            }
        }
        self
    }

    pub(crate) fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = Some(seed);
        self
    }
}

/// Random quench: `switch_count` switch times drawn uniformly over the open
/// horizon, heights uniform in `height_range`.
pub fn random_quench<R: Rng + ?Sized>(
    grid: &FieldGrid,
    height_range: (f64, f64),
    switch_count: (usize, usize),
    rng: &mut R,
) -> Result<DrivingField> {
    let n_switch = rng.random_range(switch_count.0..=switch_count.1);
    let mut times: Vec<f64> = (0..n_switch).map(|_| grid.t_start + rng.random::<f64>() * grid.horizon()).collect();
    times.sort_by(f64::total_cmp);
    let mut steps = vec![(grid.t_start, uniform(rng, height_range))];
    for t in times {
        steps.push((t, uniform(rng, height_range)));
    }
    make_quench(&steps, grid)
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn grid(dt: f64, horizon: f64) -> FieldGrid {
        FieldGrid::with_horizon(0.0, dt, horizon).unwrap()
    }

    #[test]
    fn single_step_quench_is_constant() {
        let f = make_quench(&[(0.0, 2.0)], &grid(0.1, 5.0)).unwrap();
        assert!(f.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn quench_boundaries_are_left_closed() {
        let f = make_quench(&[(0.0, 1.0), (5.0, -1.0)], &grid(0.1, 10.0)).unwrap();
        assert_eq!(f.values()[49], 1.0);
        assert_eq!(f.values()[50], -1.0);
        assert!((f.times()[50] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quench_rejects_bad_schedules() {
        let g = grid(0.1, 5.0);
        assert!(make_quench(&[], &g).is_err());
        assert!(make_quench(&[(0.0, 1.0), (6.0, 2.0)], &g).is_err());
        assert!(make_quench(&[(2.0, 1.0), (1.0, 2.0)], &g).is_err());
    }

    #[test]
    fn random_quench_respects_ranges() {
        let mut rng = rng_from_seed(3);
        let g = grid(0.1, 15.0);
        for _ in 0..50 {
            let f = random_quench(&g, (-3.0, 3.0), (1, 3), &mut rng).unwrap();
            assert!(f.values().iter().all(|v| (-3.0..=3.0).contains(v)));
            let FieldGenerator::Quench { steps } = &f.meta().generator else { panic!() };
            assert!((2..=4).contains(&steps.len()));
        }
    }

    #[test]
    fn periodic_edge_cases() {
        let g = grid(0.5, 3.0);
        assert!(make_periodic(0.0, 1.3, &g).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(make_periodic(2.0, 0.0, &g).unwrap().values().iter().all(|&v| v == 2.0));
        let f = make_periodic(1.0, std::f64::consts::PI, &g).unwrap();
        let expect = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0];
        for (v, e) in f.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_and_extension() {
        let f = DrivingField::new(&grid(1.0, 2.0), vec![0.0, 2.0, 4.0], FieldMeta::explicit()).unwrap();
        assert_eq!(f.value_at(0.5).unwrap(), 1.0);
        assert_eq!(f.value_at(2.5).unwrap(), 4.0);
        assert_eq!(f.value_at(-0.5).unwrap(), 0.0);
        assert!(f.value_at(3.5).is_err());
        assert!(f.value_at(f64::NAN).is_err());
    }

    #[test]
    fn integral_is_exact_for_piecewise_linear() {
        let f = DrivingField::new(&grid(1.0, 3.0), vec![0.0, 2.0, 0.0, 4.0], FieldMeta::explicit()).unwrap();
        assert!((f.integral(0.0, 3.0).unwrap() - (1.0 + 1.0 + 2.0)).abs() < 1e-14);
        // ∫_{0.5}^{1.5}: 0.75 + 0.75
        assert!((f.integral(0.5, 1.5).unwrap() - 1.5).abs() < 1e-14);
        assert!(f.integral(0.0, 4.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = rng_from_seed(11);
        let f = FieldFamily::gp_mixture().sample(&grid(0.1, 2.0), &mut rng).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,B\n"));
        let back = DrivingField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.times(), f.times());
    }

    #[test]
    fn rejects_non_uniform_times() {
        assert!(DrivingField::from_samples(vec![0.0, 0.1, 0.3], vec![0.0; 3], FieldMeta::explicit()).is_err());
        assert!(DrivingField::from_samples(vec![0.0, 0.1], vec![0.0, f64::NAN], FieldMeta::explicit()).is_err());
    }

    #[test]
    fn families_emit_the_requested_grid() {
        let g = FieldGrid::with_horizon(0.0, 0.1, 15.0).unwrap();
        let mut rng = rng_from_seed(5);
        for fam in [FieldFamily::gp_mixture(), FieldFamily::quench(), FieldFamily::periodic()] {
            let f = fam.sample(&g, &mut rng).unwrap();
            assert_eq!(f.len(), 151);
            for (k, t) in f.times().iter().enumerate() {
                assert!((t - g.time(k)).abs() < 1e-12);
            }
        }
    }
}
