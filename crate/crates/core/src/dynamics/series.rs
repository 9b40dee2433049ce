use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::pauli::ObservableSet;
use crate::io::format_f64;
use crate::{Error, Result};

/// Slack allowed above |1| for recorded Pauli expectations.
pub const RANGE_SLACK: f64 = 1e-9;

/// Expectation values of an observable set on a sequence of times.
/// `values[k][j]` is observable `j` at `times[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    observable_set: ObservableSet,
}

impl ObservableSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, observable_set: ObservableSet) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Shape(format!("{} times but {} rows", times.len(), values.len())));
        }
        for row in &values {
            if row.len() != observable_set.len() {
                return Err(Error::Shape(format!(
                    "row of width {} for {} observables",
                    row.len(),
                    observable_set.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || v.abs() > 1.0 + RANGE_SLACK) {
                return Err(Error::InvalidArgument(format!("expectation {v} outside [-1, 1]")));
            }
        }
        Ok(Self { times, values, observable_set })
    }

    /// Builds a series from unconstrained values (e.g. network outputs),
    /// clamping each entry into [-1, 1].
    pub fn clamped(times: Vec<f64>, mut values: Vec<Vec<f64>>, observable_set: ObservableSet) -> Result<Self> {
        for v in values.iter_mut().flatten() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite prediction".into()));
            }
            *v = v.clamp(-1.0, 1.0);
        }
        Self::new(times, values, observable_set)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn observable_set(&self) -> &ObservableSet {
        &self.observable_set
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.observable_set.position(name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    pub fn max_abs_difference(&self, other: &ObservableSeries) -> Result<f64> {
        if self.len() != other.len() || self.observable_set != other.observable_set {
            return Err(Error::Shape("series differ in shape or observables".into()));
        }
        Ok(self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.observable_set.names());
        wtr.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            let rec: Vec<String> = std::iter::once(*t).chain(row.iter().copied()).map(format_f64).collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, n_qubits: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Dataset("observable CSV must start with a `t` column".into()));
        }
        let names: Vec<&str> = header.iter().skip(1).collect();
        let set = ObservableSet::from_names(&names, n_qubits)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parsed: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Dataset(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            times.push(parsed[0]);
            values.push(parsed[1..].to_vec());
        }
        Self::new(times, values, set)
    }
}
