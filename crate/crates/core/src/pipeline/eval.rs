use std::io::Write;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use super::dataset::TrajectoryRecord;
use super::train::{batch_outputs, encode_records, ModelArtifact, FIELD_SCALE};
use crate::io::format_f64;
use crate::neural::Direction;
use crate::{Error, Result};

/// Relative slack when assigning grid times to the train window.
const WINDOW_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMse {
    pub record_index: usize,
    pub train_window: f64,
    pub extrapolation_window: Option<f64>,
}

/// Squared-error statistics of a model over a set of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub direction: Direction,
    pub instance_count: usize,
    /// Last time (physical units) inside the train window.
    pub boundary: f64,
    pub times: Vec<f64>,
    pub output_names: Vec<String>,
    /// Field errors are measured on values divided by this factor; 1 for
    /// observables.
    pub rescale: f64,
    /// `mse_vs_time[k][j]`: error of output `j` at `times[k]`, averaged over
    /// instances.
    pub mse_vs_time: Vec<Vec<f64>>,
    pub train_window_mse: f64,
    pub extrapolation_window_mse: Option<f64>,
    /// Error over every time and output, averaged over instances.
    pub overall_mse: f64,
    pub per_instance: Vec<InstanceMse>,
}

impl EvalReport {
    /// Builds the report from predictions and truths of shape `(T, B, O)`
    /// that are already on the error scale.
    pub fn from_arrays(
        direction: Direction,
        times: Vec<f64>,
        output_names: Vec<String>,
        record_indices: &[usize],
        pred: &Array3<f64>,
        truth: &Array3<f64>,
        boundary: f64,
    ) -> Result<Self> {
        let (t_len, b, o) = pred.dim();
        if truth.dim() != pred.dim() || times.len() != t_len || output_names.len() != o || record_indices.len() != b {
            return Err(Error::Shape("evaluation arrays disagree".into()));
        }
        let sq = (pred - truth).mapv(|d| d * d);
        let in_train: Vec<bool> =
            times.iter().map(|&t| t <= boundary + WINDOW_EPS * boundary.abs().max(1e-300)).collect();
        let n_train = in_train.iter().filter(|&&x| x).count();
        let n_extra = t_len - n_train;
        let per_instance: Vec<InstanceMse> = (0..b)
            .map(|i| {
                let inst = sq.index_axis(Axis(1), i);
                let (mut a, mut e) = (0.0, 0.0);
                for (k, row) in inst.outer_iter().enumerate() {
                    let s: f64 = row.sum();
                    if in_train[k] {
                        a += s;
                    } else {
                        e += s;
                    }
                }
                InstanceMse {
                    record_index: record_indices[i],
                    train_window: if n_train == 0 { 0.0 } else { a / (n_train * o) as f64 },
                    extrapolation_window: (n_extra > 0).then(|| e / (n_extra * o) as f64),
                }
            })
            .collect();
        let mean = |v: &mut dyn Iterator<Item = f64>| {
            let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        };
        let train_window_mse = mean(&mut per_instance.iter().map(|p| p.train_window));
        let extrapolation_window_mse =
            (n_extra > 0).then(|| mean(&mut per_instance.iter().filter_map(|p| p.extrapolation_window)));
        let mse_vs_time = if b == 0 {
            vec![vec![0.0; o]; t_len]
        } else {
            sq.mean_axis(Axis(1)).expect("non-empty batch").outer_iter().map(|r| r.to_vec()).collect()
        };
        let cells = t_len * o;
        let overall_mse = if b == 0 || cells == 0 { 0.0 } else { sq.sum() / (b * cells) as f64 };
        Ok(Self {
            direction,
            instance_count: b,
            boundary,
            times,
            output_names,
            rescale: match direction {
                Direction::Dynamics => 1.0,
                Direction::Hamiltonian => FIELD_SCALE,
            },
            mse_vs_time,
            train_window_mse,
            extrapolation_window_mse,
            overall_mse,
            per_instance,
        })
    }

    /// `t, <output>..., mean` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.output_names.iter().cloned());
        header.push("mean".into());
        wr.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.mse_vs_time) {
            let mean = if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 };
            let mut rec = vec![format_f64(*t)];
            rec.extend(row.iter().map(|v| format_f64(*v)));
            rec.push(format_f64(mean));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Scores a model on records sharing one grid. Observable predictions are
/// clamped to [-1, 1] before scoring; field predictions are compared in
/// network units, i.e. reference-unit fields divided by [`FIELD_SCALE`].
/// `boundary` is the end of the train window in physical time.
pub fn evaluate(artifact: &ModelArtifact, records: &[&TrajectoryRecord], boundary: f64) -> Result<EvalReport> {
    let system = &artifact.system;
    let direction = artifact.direction();
    let tensors = encode_records(system, direction, records)?;
    let mut pred = batch_outputs(artifact.model(), tensors.inputs.view(), tensors.o0.view())?;
    if direction == Direction::Dynamics {
        pred.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    }
    let times = records.first().map_or_else(Vec::new, |r| r.observables.times().to_vec());
    let names = match direction {
        Direction::Dynamics => artifact.observables.clone(),
        Direction::Hamiltonian => system.field_names(),
    };
    let indices: Vec<usize> = records.iter().map(|r| r.index).collect();
    EvalReport::from_arrays(direction, times, names, &indices, &pred, &tensors.targets, boundary)
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;

    use super::*;

    fn report(pred: &Array3<f64>, truth: &Array3<f64>) -> EvalReport {
        let t = pred.dim().0;
        let times = (0..t).map(|k| k as f64 * 0.1).collect();
        let idx: Vec<usize> = (0..pred.dim().1).collect();
        EvalReport::from_arrays(Direction::Dynamics, times, vec!["a".into(), "b".into()], &idx, pred, truth, 0.2)
            .unwrap()
    }

    #[test]
    fn perfect_predictor_gives_zero_report() {
        let y = Array3::from_shape_fn((5, 3, 2), |(k, b, o)| (k + b + o) as f64 * 0.1);
        let r = report(&y, &y);
        assert_eq!(r.train_window_mse, 0.0);
        assert_eq!(r.extrapolation_window_mse, Some(0.0));
        assert!(r.mse_vs_time.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn windows_and_aggregates() {
        let truth = Array3::zeros((5, 2, 2));
        // Instance 0 errs by 1 everywhere, instance 1 by 2 after the boundary.
        let pred = Array3::from_shape_fn((5, 2, 2), |(k, b, _)| {
            if b == 0 {
                1.0
            } else if k > 2 {
                2.0
            } else {
                0.0
            }
        });
        let r = report(&pred, &truth);
        assert_eq!(r.per_instance[0].train_window, 1.0);
        assert_eq!(r.per_instance[1].train_window, 0.0);
        assert_eq!(r.per_instance[1].extrapolation_window, Some(4.0));
        assert_eq!(r.train_window_mse, 0.5);
        assert_eq!(r.extrapolation_window_mse, Some(2.5));
        assert_eq!(r.mse_vs_time[4], vec![2.5, 2.5]);
        assert_eq!(r.overall_mse, (10.0 + 16.0) / 20.0);
        let mean_inst = r.per_instance.iter().map(|p| p.train_window).sum::<f64>() / 2.0;
        assert!((mean_inst - r.train_window_mse).abs() <= 1e-12);
    }

    #[test]
    fn boundary_time_belongs_to_train_window() {
        let truth = Array3::zeros((3, 1, 2));
        let pred = Array3::from_shape_fn((3, 1, 2), |(k, _, _)| k as f64);
        let r = report(&pred, &truth);
        assert_eq!(r.train_window_mse, (0.0 + 1.0 + 4.0) / 3.0);
        assert_eq!(r.extrapolation_window_mse, None);
    }

    #[test]
    fn csv_has_mean_column() {
        let y = Array3::from_elem((2, 1, 2), 0.5);
        let r = report(&Array3::zeros((2, 1, 2)), &y);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,a,b,mean\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
