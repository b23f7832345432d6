//! PSF and contrast metrics on beamformed volumes.

use ndarray::{Array3, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use crate::beamformer::{ComplexVolume, VolumeGrid};
use crate::error::{Error, Result};
use crate::forward_model::{BoxBounds, Cylinder};
use crate::geometry::{Axis, Point3};

pub const DEFAULT_FLOOR_DB: f64 = -100.0;

/// Log-compressed envelope normalized to a 0 dB peak.
#[derive(Debug, Clone, PartialEq)]
pub struct DbVolume {
    pub data: Array3<f64>,
    pub grid: VolumeGrid,
}

/// A 1-D profile along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// Maximum over the two other axes.
    #[default]
    Max,
    /// Line through the global peak.
    SliceThroughPeak,
}

pub fn envelope_db(v: &ComplexVolume, floor_db: f64) -> Result<DbVolume> {
    let peak = v.data.iter().fold(0.0f64, |m, x| m.max(x.norm()));
    if peak == 0.0 {
        return Err(Error::ZeroVolume);
    }
    let data = v
        .data
        .mapv(|x| (20.0 * (x.norm() / peak).log10()).max(floor_db));
    Ok(DbVolume { data, grid: v.grid })
}

impl DbVolume {
    fn argmax(&self) -> [usize; 3] {
        let mut best = ([0; 3], f64::NEG_INFINITY);
        for ((a, b, c), v) in self.data.indexed_iter() {
            if *v > best.1 {
                best = ([a, b, c], *v);
            }
        }
        best.0
    }
}

pub fn project(v: &DbVolume, onto: Axis, mode: ProjectionMode) -> Profile {
    let a = onto.index();
    let positions = (0..v.grid.counts[a]).map(|k| v.grid.coord(a, k)).collect();
    let values = match mode {
        ProjectionMode::Max => v
            .data
            .axis_iter(NdAxis(a))
            .map(|plane| plane.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        ProjectionMode::SliceThroughPeak => {
            let peak = v.argmax();
            (0..v.grid.counts[a])
                .map(|k| {
                    let mut idx = peak;
                    idx[a] = k;
                    v.data[idx]
                })
                .collect()
        }
    };
    Profile { positions, values }
}

pub fn project_max(v: &DbVolume, onto: Axis) -> Profile {
    project(v, onto, ProjectionMode::Max)
}

impl Profile {
    pub fn peak_index(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, v) in self.values.iter().enumerate() {
            if *v > best.1 {
                best = (k, *v);
            }
        }
        best.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("position_m,value_db\n");
        for (p, v) in self.positions.iter().zip(&self.values) {
            s.push_str(&format!("{p:.9e},{v:.6}\n"));
        }
        s
    }

    /// Indices of strict local maxima (plateaus count once, at their first sample).
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        let n = v.len();
        let mut out = Vec::new();
        let mut k = 0;
        while k < n {
            let mut end = k;
            while end + 1 < n && v[end + 1] == v[k] {
                end += 1;
            }
            let left_ok = k == 0 || v[k - 1] < v[k];
            let right_ok = end + 1 == n || v[end + 1] < v[k];
            if left_ok && right_ok && n > 1 {
                out.push(k);
            }
            k = end + 1;
        }
        out
    }
}

/// Width of the lobe around the global peak at `level_db`, measured between
/// the first crossings on either side with linear interpolation.
pub fn width_at_level(p: &Profile, level_db: f64) -> Result<f64> {
    let n = p.values.len();
    let peak = p.peak_index();
    let level = p.values[peak] + level_db.min(0.0);
    let crossing = |inner: usize, outer: usize| -> f64 {
        let (vi, vo) = (p.values[inner], p.values[outer]);
        let t = if vi == vo {
            0.0
        } else {
            (vi - level) / (vi - vo)
        };
        p.positions[inner] + t * (p.positions[outer] - p.positions[inner])
    };
    let right = (peak + 1..n)
        .find(|&k| p.values[k] <= level)
        .map(|k| crossing(k - 1, k));
    let left = (0..peak)
        .rev()
        .find(|&k| p.values[k] <= level)
        .map(|k| crossing(k + 1, k));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::LobeWiderThanProfile { level_db }),
    }
}

fn strongest_outside(p: &Profile, peak_pos: f64, exclusion_radius: f64) -> Option<usize> {
    p.values
        .iter()
        .enumerate()
        .filter(|(k, _)| (p.positions[*k] - peak_pos).abs() > exclusion_radius)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
}

/// Level of the strongest sample of `before` outside the exclusion zone,
/// minus `after` at the same position. Positive values mean suppression.
pub fn ghost_suppression_db(
    before: &Profile,
    after: &Profile,
    peak_pos: f64,
    exclusion_radius: f64,
) -> Result<f64> {
    if before.positions.len() != after.positions.len() {
        return Err(Error::InvalidArgument(
            "profiles must share positions".into(),
        ));
    }
    let k = strongest_outside(before, peak_pos, exclusion_radius)
        .ok_or(Error::ExclusionCoversProfile)?;
    Ok(before.values[k] - after.values[k])
}

/// Local maxima of `p` outside the exclusion zone that rise above `level_db`.
pub fn off_lobe_peaks(
    p: &Profile,
    peak_pos: f64,
    exclusion_radius: f64,
    level_db: f64,
) -> Vec<usize> {
    p.local_maxima()
        .into_iter()
        .filter(|&k| (p.positions[k] - peak_pos).abs() > exclusion_radius && p.values[k] > level_db)
        .collect()
}

/// Contrast-to-noise ratio `|μ_out − μ_in| / sqrt((σ_out² + σ_in²)/2)`.
pub fn cnr(inside: &[f64], outside: &[f64]) -> Result<f64> {
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::InvalidArgument(
            "CNR regions must be non-empty".into(),
        ));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    };
    let (mi, vi) = stats(inside);
    let (mo, vo) = stats(outside);
    if vi == 0.0 && vo == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((mo - mi).abs() / ((vo + vi) / 2.0).sqrt())
}

/// Region used to select voxels for CNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    InsideCylinder(Cylinder),
    /// Inside `bounds` but farther than `cylinder.radius` from its axis.
    BoxOutsideCylinder {
        bounds: BoxBounds,
        cylinder: Cylinder,
    },
}

impl Region {
    pub fn contains(&self, p: &Point3) -> bool {
        match self {
            Region::InsideCylinder(c) => c.contains(p),
            Region::BoxOutsideCylinder { bounds, cylinder } => {
                bounds.contains(p) && !cylinder.contains(p)
            }
        }
    }
}

/// Linear envelope values of the voxels inside `region`.
pub fn region_envelope(v: &ComplexVolume, region: &Region) -> Vec<f64> {
    v.data
        .indexed_iter()
        .filter(|((a, b, c), _)| region.contains(&v.grid.voxel(*a, *b, *c)))
        .map(|(_, x)| x.norm())
        .collect()
}

pub fn cnr_in_regions(v: &ComplexVolume, inside: &Region, outside: &Region) -> Result<f64> {
    cnr(&region_envelope(v, inside), &region_envelope(v, outside))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PathIndex;
    use num_complex::Complex64;

    fn profile(values: &[f64], spacing: f64) -> Profile {
        Profile {
            positions: (0..values.len()).map(|k| k as f64 * spacing).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn width_examples() {
        let p = profile(&[-12.0, -6.0, 0.0, -6.0, -12.0], 0.1e-3);
        assert!((width_at_level(&p, -6.0).unwrap() - 0.2e-3).abs() < 1e-12);
        assert!((width_at_level(&p, -9.0).unwrap() - 0.3e-3).abs() < 1e-12);
        let flat = profile(&[0.0; 5], 0.1e-3);
        assert!(matches!(
            width_at_level(&flat, -6.0),
            Err(Error::LobeWiderThanProfile { .. })
        ));
    }

    #[test]
    fn suppression_examples() {
        let before = profile(&[-30.0, -20.0, 0.0, -3.0, -25.0, -18.0, -40.0], 1.0);
        assert_eq!(
            ghost_suppression_db(&before, &before, 2.0, 1.0).unwrap(),
            0.0
        );
        let after = Profile {
            positions: before.positions.clone(),
            values: before
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    if (k as f64 - 2.0).abs() > 1.0 {
                        v - 10.0
                    } else {
                        *v
                    }
                })
                .collect(),
        };
        assert!((ghost_suppression_db(&before, &after, 2.0, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(
            ghost_suppression_db(&before, &after, 2.0, 10.0),
            Err(Error::ExclusionCoversProfile)
        ));
    }

    #[test]
    fn local_maxima_and_off_lobe() {
        let p = profile(
            &[-50.0, -20.0, -30.0, 0.0, -10.0, -38.0, -35.0, -35.0, -45.0],
            1.0,
        );
        assert_eq!(p.local_maxima(), vec![1, 3, 6]);
        assert_eq!(off_lobe_peaks(&p, 3.0, 1.0, -40.0), vec![1, 6]);
        assert_eq!(off_lobe_peaks(&p, 3.0, 1.0, -25.0), vec![1]);
    }

    #[test]
    fn cnr_examples() {
        let same = [1.0, 2.0, 3.0];
        assert_eq!(cnr(&same, &same).unwrap(), 0.0);
        let inside = [0.0; 4];
        let outside = [1.0, 3.0, 1.0, 3.0];
        // μ_out = 2, σ_out = 1
        assert!((cnr(&inside, &outside).unwrap() - 2.0 / (0.5f64).sqrt()).abs() < 1e-12);
        assert!(matches!(cnr(&inside, &[1.0; 3]), Err(Error::ZeroVariance)));
        assert!(cnr(&[], &outside).is_err());
    }

    fn vol(f: impl Fn(usize, usize, usize) -> f64) -> ComplexVolume {
        let grid = VolumeGrid::new([0.0, 0.0, 1e-3], [1e-4; 3], [5, 3, 4]).unwrap();
        ComplexVolume {
            data: Array3::from_shape_fn(grid.dim(), |(a, b, c)| Complex64::new(f(a, b, c), 0.0)),
            grid,
            path: PathIndex::MAIN,
            f0: 5e6,
        }
    }

    #[test]
    fn envelope_examples() {
        let v = vol(|a, b, c| {
            if (a, b, c) == (2, 1, 1) {
                2.0
            } else if a == 0 {
                1.0
            } else {
                0.0
            }
        });
        let db = envelope_db(&v, DEFAULT_FLOOR_DB).unwrap();
        assert_eq!(db.data[[2, 1, 1]], 0.0);
        assert!((db.data[[0, 0, 0]] + 6.0206).abs() < 1e-4);
        assert_eq!(db.data[[1, 0, 0]], DEFAULT_FLOOR_DB);

        let flat = envelope_db(&vol(|_, _, _| 3.0), DEFAULT_FLOOR_DB).unwrap();
        assert!(flat.data.iter().all(|v| *v == 0.0));
        assert!(matches!(
            envelope_db(&vol(|_, _, _| 0.0), -100.0),
            Err(Error::ZeroVolume)
        ));
    }

    #[test]
    fn projections() {
        let v = vol(|a, _, _| 1.0 / (1.0 + a as f64));
        let db = envelope_db(&v, DEFAULT_FLOOR_DB).unwrap();
        let p = project_max(&db, Axis::X);
        for (k, val) in p.values.iter().enumerate() {
            assert_eq!(*val, db.data[[k, 0, 0]]);
        }
        let s = project(&db, Axis::X, ProjectionMode::SliceThroughPeak);
        assert_eq!(s.values, p.values);
        let z = project_max(&db, Axis::Z);
        assert_eq!(z.values.len(), 4);
        assert!(z.values.iter().all(|v| *v == 0.0));
    }
}
