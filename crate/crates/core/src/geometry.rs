//! Array and scene geometry for row-column-addressed (RCA) arrays.
//!
//! An RCA array is two orthogonal 1-D arrays of long line elements. Rows
//! extend along x and are stacked in y; columns extend along y and are
//! stacked in x. Because a line element is not a point, an echo reaches it
//! along three distinct paths: through the point on the element nearest the
//! scatterer and through each of its two ends. A transmit/receive pair
//! therefore sees nine arrivals, indexed by [`PathIndex`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in meters. `x` lateral, `y` elevation, `z` axial (depth).
/// Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

/// Axis along which a line element extends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A line element lying in the plane `z = plane_z`.
///
/// A row (`orientation == Axis::X`) spans `x ∈ [-half_length, half_length]`
/// at `y = lateral_offset`; a column (`Axis::Y`) spans y at `x = lateral_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineElement {
    pub orientation: Axis,
    pub lateral_offset: f64,
    pub half_length: f64,
    pub plane_z: f64,
}

/// Which of the three points of a line element an echo path goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubPath {
    /// Point on the element nearest the scatterer.
    Nearest,
    /// Negative-end endpoint.
    NegativeEnd,
    /// Positive-end endpoint.
    PositiveEnd,
}

impl SubPath {
    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(SubPath::Nearest),
            2 => Ok(SubPath::NegativeEnd),
            3 => Ok(SubPath::PositiveEnd),
            _ => Err(Error::InvalidArgument(format!(
                "sub-path index must be 1, 2 or 3, got {k}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            SubPath::Nearest => 1,
            SubPath::NegativeEnd => 2,
            SubPath::PositiveEnd => 3,
        }
    }
}

impl LineElement {
    pub fn new(orientation: Axis, lateral_offset: f64, half_length: f64) -> Result<Self> {
        if orientation == Axis::Z {
            return Err(Error::InvalidArgument(
                "line elements lie in the array plane (x or y)".into(),
            ));
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "half_length must be positive, got {half_length}"
            )));
        }
        Ok(Self {
            orientation,
            lateral_offset,
            half_length,
            plane_z: 0.0,
        })
    }

    /// Point on the element at coordinate `along` on its own axis.
    fn at(&self, along: f64) -> Point3 {
        match self.orientation {
            Axis::Y => Point3::new(self.lateral_offset, along, self.plane_z),
            _ => Point3::new(along, self.lateral_offset, self.plane_z),
        }
    }

    /// The point of the element through which sub-path `k` passes for a
    /// scatterer at `p`.
    pub fn path_point(&self, p: &Point3, k: SubPath) -> Point3 {
        let along = match k {
            SubPath::Nearest => {
                let coord = match self.orientation {
                    Axis::Y => p.y,
                    _ => p.x,
                };
                coord.clamp(-self.half_length, self.half_length)
            }
            SubPath::NegativeEnd => -self.half_length,
            SubPath::PositiveEnd => self.half_length,
        };
        self.at(along)
    }

    /// One-way distance from `p` to the element along sub-path `k`.
    #[inline]
    pub fn path_length(&self, p: &Point3, k: SubPath) -> f64 {
        p.distance(&self.path_point(p, k))
    }
}

/// One of the nine echo paths: `n` is the transmit sub-path, `i` the receive
/// sub-path. `(1, 1)` is the main path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathIndex {
    n: u8,
    i: u8,
}

impl PathIndex {
    pub const MAIN: PathIndex = PathIndex { n: 1, i: 1 };

    /// All nine paths, main path first, then row-major in `(n, i)`.
    pub const ALL: [PathIndex; 9] = [
        PathIndex { n: 1, i: 1 },
        PathIndex { n: 1, i: 2 },
        PathIndex { n: 1, i: 3 },
        PathIndex { n: 2, i: 1 },
        PathIndex { n: 2, i: 2 },
        PathIndex { n: 2, i: 3 },
        PathIndex { n: 3, i: 1 },
        PathIndex { n: 3, i: 2 },
        PathIndex { n: 3, i: 3 },
    ];

    pub fn new(n: u8, i: u8) -> Result<Self> {
        if !(1..=3).contains(&n) || !(1..=3).contains(&i) {
            return Err(Error::InvalidArgument(format!(
                "path indices must lie in 1..=3, got ({n}, {i})"
            )));
        }
        Ok(Self { n, i })
    }

    pub fn n(self) -> u8 {
        self.n
    }

    pub fn i(self) -> u8 {
        self.i
    }

    pub fn tx(self) -> SubPath {
        SubPath::from_index(self.n).expect("validated on construction")
    }

    pub fn rx(self) -> SubPath {
        SubPath::from_index(self.i).expect("validated on construction")
    }

    pub fn is_main(self) -> bool {
        self == Self::MAIN
    }

    /// Position of this path in [`PathIndex::ALL`].
    pub fn ordinal(self) -> usize {
        (self.n as usize - 1) * 3 + (self.i as usize - 1)
    }

    /// Stable short label, e.g. `"n1i1"`.
    pub fn label(self) -> String {
        format!("n{}i{}", self.n, self.i)
    }
}

impl std::fmt::Display for PathIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.n, self.i)
    }
}

/// Propagation medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    /// Speed of sound in m/s.
    pub c: f64,
}

impl Medium {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "speed of sound must be positive, got {c}"
            )));
        }
        Ok(Self { c })
    }
}

/// Time of flight along path `path` from transmit element `tx` to the
/// scatterer at `p` and back to receive element `rx`.
#[inline]
pub fn tof(p: &Point3, tx: &LineElement, rx: &LineElement, path: PathIndex, medium: Medium) -> f64 {
    (tx.path_length(p, path.tx()) + rx.path_length(p, path.rx())) / medium.c
}

/// Geometry of a row-column-addressed array centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RcaArray {
    pub n_rows: usize,
    pub n_cols: usize,
    pub pitch_x: f64,
    pub pitch_y: f64,
    /// When set, columns transmit and rows receive.
    pub columns_transmit: bool,
    rows: Vec<LineElement>,
    cols: Vec<LineElement>,
}

impl RcaArray {
    pub fn new(n_rows: usize, n_cols: usize, pitch_x: f64, pitch_y: f64) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidArgument(
                "element counts must be positive".into(),
            ));
        }
        if !(pitch_x > 0.0) || !(pitch_y > 0.0) {
            return Err(Error::InvalidArgument("pitches must be positive".into()));
        }
        // Every row spans the whole column aperture and vice versa.
        let row_half = n_cols as f64 * pitch_x / 2.0;
        let col_half = n_rows as f64 * pitch_y / 2.0;
        let rows = (0..n_rows)
            .map(|r| {
                let offset = (r as f64 - (n_rows as f64 - 1.0) / 2.0) * pitch_y;
                LineElement::new(Axis::X, offset, row_half)
            })
            .collect::<Result<Vec<_>>>()?;
        let cols = (0..n_cols)
            .map(|c| {
                let offset = (c as f64 - (n_cols as f64 - 1.0) / 2.0) * pitch_x;
                LineElement::new(Axis::Y, offset, col_half)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_rows,
            n_cols,
            pitch_x,
            pitch_y,
            columns_transmit: false,
            rows,
            cols,
        })
    }

    pub fn with_columns_transmit(mut self, columns_transmit: bool) -> Self {
        self.columns_transmit = columns_transmit;
        self
    }

    pub fn rows(&self) -> &[LineElement] {
        &self.rows
    }

    pub fn columns(&self) -> &[LineElement] {
        &self.cols
    }

    pub fn tx_elements(&self) -> &[LineElement] {
        if self.columns_transmit {
            &self.cols
        } else {
            &self.rows
        }
    }

    pub fn rx_elements(&self) -> &[LineElement] {
        if self.columns_transmit {
            &self.rows
        } else {
            &self.cols
        }
    }
}
