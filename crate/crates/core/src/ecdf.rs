//! Empirical cumulative distribution functions as explicit step tables.

use serde::Serialize;

/// Right-continuous step function: `F(x) = points[i].1` for
/// `points[i].0 <= x < points[i+1].0`. The last value is exactly 1.0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ecdf<T> {
    pub points: Vec<(T, f64)>,
    pub n: usize,
}

impl<T: PartialOrd + Copy> Ecdf<T> {
    /// Builds the ECDF of `values`. Returns `None` for an empty sample.
    pub fn from_values(mut values: Vec<T>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("ECDF values must be ordered"));
        let n = values.len();
        let mut points: Vec<(T, f64)> = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let is_last_of_run = i + 1 == n || values[i + 1] != v;
            if is_last_of_run {
                points.push((v, (i + 1) as f64 / n as f64));
            }
        }
        Some(Ecdf { points, n })
    }

    /// F(x); 0 below the smallest observation.
    pub fn eval(&self, x: T) -> f64 {
        let idx = self.points.partition_point(|(v, _)| *v <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }
}
