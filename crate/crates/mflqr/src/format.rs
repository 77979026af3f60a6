//! Rounding to significant digits, applied to every emitted number.

use mflqr_core::Matrix;

use crate::problem::{from_matrix, Rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision(pub usize);

impl Default for Precision {
    fn default() -> Self {
        Self(6)
    }
}

impl Precision {
    pub fn round(self, v: f64) -> f64 {
        if !v.is_finite() || v == 0.0 {
            return v;
        }
        format!("{:.*e}", self.0.saturating_sub(1), v)
            .parse()
            .unwrap_or(v)
    }

    pub fn matrix(self, m: &Matrix) -> Rows {
        from_matrix(&m.map(|v| self.round(v)))
    }

    /// Text form: positional for moderate magnitudes, scientific otherwise.
    pub fn show(self, v: f64) -> String {
        let r = self.round(v);
        let a = r.abs();
        if r == 0.0 || (1e-4..1e7).contains(&a) {
            format!("{r}")
        } else if r.is_finite() {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    }

    pub fn show_matrix(self, m: &Matrix) -> String {
        let rows: Vec<String> = (0..m.nrows())
            .map(|i| {
                let row: Vec<String> = (0..m.ncols()).map(|j| self.show(m[(i, j)])).collect();
                format!("[{}]", row.join(", "))
            })
            .collect();
        format!("[{}]", rows.join(", "))
    }
}
