//! Ghost-frame correlation weighting.
//!
//! The main scatterer response sits at the same place in the main frame and
//! in every ghost frame, while ghost artifacts move around from frame to
//! frame. A windowed normalized complex correlation between the main frame
//! and each ghost frame is therefore near one on true targets and small on
//! artifacts. The eight correlation magnitudes are combined into one weight
//! map that multiplies the main frame.

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::{ComplexVolume, FrameSet};
use crate::error::{Error, Result};

/// Half-widths of the correlation window in voxels; the window spans
/// `2k+1` voxels per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationKernel {
    pub kx: usize,
    pub ky: usize,
    pub kz: usize,
}

impl CorrelationKernel {
    pub fn new(kx: usize, ky: usize, kz: usize) -> Self {
        Self { kx, ky, kz }
    }

    /// Lateral half-width 1, axial half-width about one wavelength.
    pub fn for_wavelength(wavelength: f64, axial_step: f64) -> Self {
        Self::new(1, 1, (wavelength / axial_step).round() as usize)
    }

    fn half(&self) -> [usize; 3] {
        [self.kx, self.ky, self.kz]
    }
}

/// Per-voxel weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub data: Array3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    #[default]
    Min,
    Product,
    Mean,
}

/// How a complex correlation becomes a scalar weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    #[default]
    Magnitude,
    PositiveReal,
}

impl WeightKind {
    pub fn apply(self, c: Complex64) -> f64 {
        match self {
            WeightKind::Magnitude => c.norm(),
            WeightKind::PositiveReal => c.re.max(0.0),
        }
    }
}

/// `Σ x·conj(y) / (‖x‖·‖y‖)`; zero when either vector has zero norm.
pub fn complex_correlation(x: &[Complex64], y: &[Complex64]) -> Result<Complex64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "correlation needs two equal, non-empty lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut cross = Complex64::new(0.0, 0.0);
    let (mut ex, mut ey) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        cross += a * b.conj();
        ex += a.norm_sqr();
        ey += b.norm_sqr();
    }
    Ok(normalize(cross, ex, ey))
}

#[inline]
fn normalize(cross: Complex64, ex: f64, ey: f64) -> Complex64 {
    if ex == 0.0 || ey == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    cross / (ex.sqrt() * ey.sqrt())
}

fn check_same_grid(a: &ComplexVolume, b: &ComplexVolume) -> Result<()> {
    if a.grid != b.grid || a.data.dim() != b.data.dim() {
        return Err(Error::InvalidArgument("volumes must share one grid".into()));
    }
    Ok(())
}

/// Windowed correlation between `main` and `ghost` at every voxel. Windows
/// are clipped at the volume borders.
pub fn local_correlation_map(
    main: &ComplexVolume,
    ghost: &ComplexVolume,
    kernel: CorrelationKernel,
) -> Result<Array3<Complex64>> {
    check_same_grid(main, ghost)?;
    let dims = main.data.dim();
    let (nx, ny, nz) = dims;
    let half = kernel.half();
    let x = main.data.as_slice().expect("volume is contiguous");
    let y = ghost.data.as_slice().expect("volume is contiguous");
    let range = |c: usize, h: usize, n: usize| c.saturating_sub(h)..(c + h + 1).min(n);

    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny * nz];
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let (ix, iy, iz) = (flat / (ny * nz), (flat / nz) % ny, flat % nz);
        let mut cross = Complex64::new(0.0, 0.0);
        let (mut ex, mut ey) = (0.0, 0.0);
        for jx in range(ix, half[0], nx) {
            for jy in range(iy, half[1], ny) {
                let base = (jx * ny + jy) * nz;
                for k in range(iz, half[2], nz) {
                    let (a, b) = (x[base + k], y[base + k]);
                    cross += a * b.conj();
                    ex += a.norm_sqr();
                    ey += b.norm_sqr();
                }
            }
        }
        *o = normalize(cross, ex, ey);
    });
    Ok(Array3::from_shape_vec(dims, out).expect("sized from dims"))
}

/// Folds per-frame correlation maps into one weight map, clamped to `[0, 1]`.
pub fn combine_weights(
    maps: &[Array3<Complex64>],
    mode: CombineMode,
    kind: WeightKind,
) -> Result<WeightMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no correlation maps to combine".into()))?;
    if maps.iter().any(|m| m.dim() != first.dim()) {
        return Err(Error::InvalidArgument(
            "correlation maps must share one grid".into(),
        ));
    }
    let count = maps.len() as f64;
    let data = Array3::from_shape_fn(first.dim(), |idx| {
        let values = maps.iter().map(|m| kind.apply(m[idx]));
        let w = match mode {
            CombineMode::Min => values.fold(f64::INFINITY, f64::min),
            CombineMode::Product => values.product(),
            CombineMode::Mean => values.sum::<f64>() / count,
        };
        w.clamp(0.0, 1.0)
    });
    Ok(WeightMap { data })
}

/// Voxel-wise product of the main frame and the weight map.
pub fn apply_weight(main: &ComplexVolume, weights: &WeightMap) -> Result<ComplexVolume> {
    if main.data.dim() != weights.data.dim() {
        return Err(Error::InvalidArgument(
            "weight map and volume dimensions differ".into(),
        ));
    }
    let mut out = main.clone();
    out.data.zip_mut_with(&weights.data, |v, w| *v *= *w);
    Ok(out)
}

/// Full post-filter: correlate the main frame with each ghost frame, combine
/// and weight.
pub fn filter_frames(
    frames: &FrameSet,
    kernel: CorrelationKernel,
    mode: CombineMode,
    kind: WeightKind,
) -> Result<(WeightMap, ComplexVolume)> {
    let main = frames.main();
    let maps = frames
        .ghosts()
        .map(|g| local_correlation_map(main, g, kernel))
        .collect::<Result<Vec<_>>>()?;
    let weights = combine_weights(&maps, mode, kind)?;
    let filtered = apply_weight(main, &weights)?;
    Ok((weights, filtered))
}
