//! Parameter boxes and uniform evaluation grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("empty parameter box".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidInput(format!("bad box side [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn value(&self, j: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * j as f64 / (self.count - 1) as f64
        }
    }
}

/// Uniform tensor grid. Point order is row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("grid has no axes".into()));
        }
        for a in &axes {
            if a.count == 0 || !(a.min.is_finite() && a.max.is_finite()) || a.min > a.max {
                return Err(Error::InvalidInput(format!("bad grid axis {a:?}")));
            }
        }
        Ok(Self { axes })
    }

    /// Grid over a box with `counts[i]` points on axis `i`.
    pub fn over_box(b: &ParamBox, counts: &[usize]) -> Result<Self> {
        if counts.len() != b.dim() {
            return Err(Error::DimensionMismatch {
                what: "grid counts",
                expected: b.dim(),
                got: counts.len(),
            });
        }
        Self::new(
            b.lower
                .iter()
                .zip(&b.upper)
                .zip(counts)
                .map(|((&min, &max), &count)| Axis { min, max, count })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            out[d] = a.value(index % a.count);
            index /= a.count;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn bounding_box(&self) -> ParamBox {
        ParamBox {
            lower: self.axes.iter().map(|a| a.min).collect(),
            upper: self.axes.iter().map(|a| a.max).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_is_last_axis_fastest() {
        let g = GridSpec::new(vec![
            Axis { min: 0.0, max: 1.0, count: 2 },
            Axis { min: 10.0, max: 12.0, count: 3 },
        ])
        .unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(0), vec![0.0, 10.0]);
        assert_eq!(g.point(1), vec![0.0, 11.0]);
        assert_eq!(g.point(5), vec![1.0, 12.0]);
    }

    #[test]
    fn rejects_empty_axis_and_inverted_box() {
        assert!(GridSpec::new(vec![Axis { min: 0.0, max: 1.0, count: 0 }]).is_err());
        assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn box_membership_is_closed() {
        let b = ParamBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(b.contains(&[0.0, 1.0]));
        assert!(!b.contains(&[1.0 + 1e-12, 0.0]));
    }
}
