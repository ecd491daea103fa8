use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::EvalError;
use crate::geometry::Pose;
use crate::Scalar;

/// Timestamped camera-to-world poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    entries: Vec<(f64, Pose<T>)>,
}

impl<T: Scalar> Default for Trajectory<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(entries: Vec<(f64, Pose<T>)>) -> Result<Self, EvalError> {
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(EvalError::NonMonotonic { index: i + 1 });
            }
        }
        if let Some(i) = entries.iter().position(|e| !e.0.is_finite()) {
            return Err(EvalError::NonMonotonic { index: i });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, Pose<T>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn positions(&self) -> Vec<Vector3<T>> {
        self.entries.iter().map(|e| e.1.translation).collect()
    }

    /// Copy with every timestamp shifted by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(t, p)| (t + offset, *p)).collect(),
        }
    }

    /// Copy with every pose mapped through `scale * transform` on the left.
    pub fn transformed(&self, transform: &Pose<T>, scale: T) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(t, p)| {
                    let moved = Pose::from_parts_unchecked(
                        transform.rotation * p.rotation,
                        transform.rotation * p.translation * scale + transform.translation,
                    );
                    (*t, moved)
                })
                .collect(),
        }
    }

    /// Subsequence at the given indices, which must be increasing.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            entries: indices.into_iter().map(|i| self.entries[i]).collect(),
        }
    }

    /// Plain-text form, one `timestamp tx ty tz qx qy qz qw` line per pose.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, p) in &self.entries {
            let q = p.quaternion();
            let tr = p.translation;
            let v = [tr.x, tr.y, tr.z, q[0], q[1], q[2], q[3]].map(|x| x.to_f64_lossy());
            let _ = writeln!(s, "{t} {} {} {} {} {} {} {}", v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
        }
        s
    }

    /// Parses the plain-text form. Blank lines and lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self, EvalError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| EvalError::Parse { line: i + 1, reason };
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, found {}", vals.len())));
            }
            let c = |x: f64| T::lit(x);
            let pose = Pose::from_quaternion(
                Vector3::new(c(vals[1]), c(vals[2]), c(vals[3])),
                [c(vals[4]), c(vals[5]), c(vals[6]), c(vals[7])],
            );
            entries.push((vals[0], pose));
        }
        Self::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_text()).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
    }
}
