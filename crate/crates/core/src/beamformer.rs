//! Synthetic-aperture delay-and-sum beamforming along each of the nine echo
//! paths.
//!
//! RF traces are first mixed to complex baseband. A voxel is then the
//! apodized sum, over every transmit/receive pair, of the baseband sample at
//! the path's time of flight, phase-rotated back onto the carrier.

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_model::ChannelData;
use crate::geometry::{Medium, PathIndex, Point3, RcaArray};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Rectilinear voxel lattice; voxel centers at `start + index·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrid {
    pub start: [f64; 3],
    pub step: [f64; 3],
    pub counts: [usize; 3],
}

impl VolumeGrid {
    pub fn new(start: [f64; 3], step: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        if step.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("grid steps must be positive".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "grid counts must be at least 1".into(),
            ));
        }
        Ok(Self {
            start,
            step,
            counts,
        })
    }

    /// Grid with a voxel exactly at `center` and `2·round(half/step)+1`
    /// voxels per axis.
    pub fn centered(center: Point3, half_extent: [f64; 3], step: [f64; 3]) -> Result<Self> {
        let c = center.to_array();
        let mut start = [0.0; 3];
        let mut counts = [0; 3];
        for a in 0..3 {
            if !(step[a] > 0.0) || !(half_extent[a] >= 0.0) {
                return Err(Error::InvalidArgument(
                    "grid steps must be positive and extents non-negative".into(),
                ));
            }
            let half = (half_extent[a] / step[a]).round() as usize;
            counts[a] = 2 * half + 1;
            start[a] = c[a] - half as f64 * step[a];
        }
        Self::new(start, step, counts)
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        (self.counts[0], self.counts[1], self.counts[2])
    }

    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        self.start[axis] + index as f64 * self.step[axis]
    }

    pub fn voxel(&self, ix: usize, iy: usize, iz: usize) -> Point3 {
        Point3::new(self.coord(0, ix), self.coord(1, iy), self.coord(2, iz))
    }

    /// Row-major `[x][y][z]` flat index to voxel indices.
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let nz = self.counts[2];
        let ny = self.counts[1];
        [flat / (ny * nz), (flat / nz) % ny, flat % nz]
    }

    /// Indices of the voxel nearest to `p`, clamped to the grid.
    pub fn nearest(&self, p: &Point3) -> [usize; 3] {
        let c = p.to_array();
        let mut out = [0; 3];
        for a in 0..3 {
            let f = ((c[a] - self.start[a]) / self.step[a]).round();
            out[a] = f.clamp(0.0, (self.counts[a] - 1) as f64) as usize;
        }
        out
    }

    pub fn min_z(&self) -> f64 {
        self.start[2]
    }
}

/// Complex volume on a grid, `[x][y][z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    pub data: Array3<Complex64>,
    pub grid: VolumeGrid,
    pub path: PathIndex,
    pub f0: f64,
}

impl ComplexVolume {
    pub fn zeros(grid: VolumeGrid, path: PathIndex, f0: f64) -> Self {
        Self {
            data: Array3::zeros(grid.dim()),
            grid,
            path,
            f0,
        }
    }

    /// Indices of the largest-magnitude voxel (first one in memory order on ties).
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, v) in self.data.iter().enumerate() {
            let m = v.norm();
            if m > best.1 {
                best = (k, m);
            }
        }
        self.grid.unflatten(best.0)
    }

    pub fn magnitude_at(&self, idx: [usize; 3]) -> f64 {
        self.data[idx].norm()
    }
}

/// All nine path frames on one grid, stored in [`PathIndex::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    frames: Vec<ComplexVolume>,
}

impl FrameSet {
    pub fn new(frames: Vec<ComplexVolume>) -> Result<Self> {
        if frames.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "a frame set holds 9 frames, got {}",
                frames.len()
            )));
        }
        let grid = frames[0].grid;
        for (f, expected) in frames.iter().zip(PathIndex::ALL) {
            if f.path != expected {
                return Err(Error::InvalidArgument(format!(
                    "frame for {} found where {expected} belongs",
                    f.path
                )));
            }
            if f.grid != grid {
                return Err(Error::InvalidArgument("frames must share one grid".into()));
            }
        }
        Ok(Self { frames })
    }

    pub fn get(&self, path: PathIndex) -> &ComplexVolume {
        &self.frames[path.ordinal()]
    }

    pub fn main(&self) -> &ComplexVolume {
        self.get(PathIndex::MAIN)
    }

    pub fn ghosts(&self) -> impl Iterator<Item = &ComplexVolume> {
        self.frames.iter().filter(|f| !f.path.is_main())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ComplexVolume> {
        self.frames.iter()
    }

    pub fn grid(&self) -> VolumeGrid {
        self.frames[0].grid
    }
}

/// Complex baseband channel data, `[tx][rx][t]`, on the RF time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandData {
    pub samples: Array3<Complex64>,
    pub fs: f64,
    pub t0: f64,
    pub lag: f64,
    pub f0: f64,
}

/// Quadrature mixing by `exp(-j2π f0 t)` followed by a centered moving
/// average one carrier period long.
///
/// For an even period length `L` the average spans `L+1` taps with
/// half-weight end taps, which keeps the filter symmetric.
pub fn to_baseband(channels: &ChannelData, f0: f64) -> Result<BasebandData> {
    if !(channels.fs > 2.0 * f0) || !(f0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fs must exceed 2·f0 (fs = {}, f0 = {f0})",
            channels.fs
        )));
    }
    let (n_tx, n_rx, n_t) = channels.samples.dim();
    let period = (channels.fs / f0).round().max(1.0) as usize;
    let mut out = vec![Complex64::new(0.0, 0.0); n_tx * n_rx * n_t];
    let rf = channels
        .samples
        .as_slice()
        .expect("channel data is contiguous");

    let mixer: Vec<Complex64> = (0..n_t)
        .map(|k| Complex64::from_polar(1.0, -TAU * f0 * channels.time_of(k)))
        .collect();

    if n_t > 0 {
        out.par_chunks_mut(n_t)
            .zip(rf.par_chunks(n_t))
            .for_each_init(
                || {
                    (
                        vec![Complex64::new(0.0, 0.0); n_t],
                        vec![Complex64::new(0.0, 0.0); n_t + 1],
                    )
                },
                |(mixed, prefix), (dst, src)| {
                    for k in 0..n_t {
                        mixed[k] = mixer[k] * f64::from(src[k]);
                    }
                    prefix[0] = Complex64::new(0.0, 0.0);
                    for k in 0..n_t {
                        prefix[k + 1] = prefix[k] + mixed[k];
                    }
                    let at = |k: isize| -> Complex64 {
                        if k < 0 || k as usize >= n_t {
                            Complex64::new(0.0, 0.0)
                        } else {
                            mixed[k as usize]
                        }
                    };
                    // sum over [lo, hi] inclusive, clipped to the trace
                    let span = |lo: isize, hi: isize| -> Complex64 {
                        let lo = lo.max(0) as usize;
                        let hi = (hi + 1).min(n_t as isize).max(0) as usize;
                        if hi <= lo {
                            Complex64::new(0.0, 0.0)
                        } else {
                            prefix[hi] - prefix[lo]
                        }
                    };
                    let scale = 1.0 / period as f64;
                    let half = (period / 2) as isize;
                    for (k, d) in dst.iter_mut().enumerate() {
                        let k = k as isize;
                        *d = if period % 2 == 1 {
                            span(k - half, k + half) * scale
                        } else {
                            (span(k - half + 1, k + half - 1) + (at(k - half) + at(k + half)) * 0.5)
                                * scale
                        };
                    }
                },
            );
    }

    Ok(BasebandData {
        samples: Array3::from_shape_vec((n_tx, n_rx, n_t), out).expect("sized from dims"),
        fs: channels.fs,
        t0: channels.t0,
        lag: channels.lag,
        f0,
    })
}

/// Receive apodization across the receive aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Apodization {
    /// `w(r) = 0.5·(1 − cos(2π(r+1)/(n+1)))`, strictly positive on every element.
    #[default]
    Hanning,
    Rect,
}

impl Apodization {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Apodization::Rect => vec![1.0; n],
            Apodization::Hanning => (0..n)
                .map(|r| 0.5 * (1.0 - (TAU * (r as f64 + 1.0) / (n as f64 + 1.0)).cos()))
                .collect(),
        }
    }
}

/// Delay-and-sum along one echo path.
///
/// Each voxel sums `w(rx) · b(τ + lag) · exp(j2π f0 (τ + lag))` over all
/// transmit/receive pairs, transmit-major, where `τ` is the path's time of
/// flight and `lag` the pulse onset-to-center delay. Baseband samples are
/// linearly interpolated; delays outside the trace contribute zero.
pub fn das_beamform(
    data: &BasebandData,
    array: &RcaArray,
    grid: &VolumeGrid,
    path: PathIndex,
    medium: Medium,
    apodization: Apodization,
) -> Result<ComplexVolume> {
    if !(grid.min_z() > 0.0) {
        return Err(Error::InvalidArgument(
            "every voxel must lie in front of the array (z > 0)".into(),
        ));
    }
    let txs = array.tx_elements();
    let rxs = array.rx_elements();
    let (n_tx, n_rx, n_t) = data.samples.dim();
    if n_tx != txs.len() || n_rx != rxs.len() {
        return Err(Error::InvalidArgument(format!(
            "channel data is {n_tx}x{n_rx} but the array has {}x{} tx/rx elements",
            txs.len(),
            rxs.len()
        )));
    }
    let weights = apodization.weights(n_rx);
    let bb = data.samples.as_slice().expect("baseband is contiguous");
    let (fs, c, f0) = (data.fs, medium.c, data.f0);
    let offset = (data.lag - data.t0) * fs;
    let last = n_t as f64 - 1.0;

    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    out.par_iter_mut().enumerate().for_each_init(
        || {
            (
                vec![0f64; n_tx],
                vec![Complex64::new(0.0, 0.0); n_tx],
                vec![0f64; n_rx],
                vec![Complex64::new(0.0, 0.0); n_rx],
            )
        },
        |(s_tx, ph_tx, s_rx, ph_rx), (flat, voxel)| {
            let [ix, iy, iz] = grid.unflatten(flat);
            let p = grid.voxel(ix, iy, iz);
            // delays in samples, split per element so a pair costs one add
            for (t, el) in txs.iter().enumerate() {
                let d = el.path_length(&p, path.tx());
                s_tx[t] = d / c * fs + offset;
                ph_tx[t] = Complex64::from_polar(1.0, TAU * f0 * d / c);
            }
            for (r, el) in rxs.iter().enumerate() {
                let d = el.path_length(&p, path.rx());
                s_rx[r] = d / c * fs;
                ph_rx[r] = Complex64::from_polar(weights[r], TAU * f0 * d / c);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..n_tx {
                let row = &bb[t * n_rx * n_t..(t + 1) * n_rx * n_t];
                let a = s_tx[t];
                let mut row_acc = Complex64::new(0.0, 0.0);
                for ((trace, &b), &ph) in row.chunks_exact(n_t).zip(s_rx.iter()).zip(ph_rx.iter()) {
                    let s = a + b;
                    if s >= 0.0 && s < last {
                        let j = s as usize;
                        let frac = s - j as f64;
                        let (x0, x1) = (trace[j], trace[j + 1]);
                        row_acc += (x0 + (x1 - x0) * frac) * ph;
                    }
                }
                acc += row_acc * ph_tx[t];
            }
            *voxel = acc * Complex64::from_polar(1.0, TAU * f0 * data.lag);
        },
    );

    Ok(ComplexVolume {
        data: Array3::from_shape_vec(grid.dim(), out).expect("sized from grid"),
        grid: *grid,
        path,
        f0,
    })
}

/// Beamforms all nine path frames.
pub fn beamform_frames(
    data: &BasebandData,
    array: &RcaArray,
    grid: &VolumeGrid,
    medium: Medium,
    apodization: Apodization,
) -> Result<FrameSet> {
    let frames = PathIndex::ALL
        .iter()
        .map(|&path| das_beamform(data, array, grid, path, medium, apodization))
        .collect::<Result<Vec<_>>>()?;
    FrameSet::new(frames)
}
