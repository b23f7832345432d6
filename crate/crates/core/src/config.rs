//! Pipeline configuration.
//!
//! A config is a TOML document versioned by `schema_version`. Users write
//! only the keys they want to change: the file is deep-merged onto one of
//! the built-in profiles ([`Profile::Desk`] or [`Profile::Full`]). When a
//! table carries a `kind` tag that differs from the profile's, the whole
//! table is replaced instead of merged.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamformer::{Apodization, VolumeGrid};
use crate::error::{Error, Result};
use crate::forward_model::{
    make_cyst_phantom, make_pulse, BoxBounds, Cylinder, EdgeModel, Phantom, PhantomKind, Pulse,
    Scatterer, DEFAULT_MAX_CHANNEL_BYTES,
};
use crate::geometry::{Axis, Medium, Point3, RcaArray};
use crate::metrics::{ProjectionMode, Region, DEFAULT_FLOOR_DB};
use crate::postfilter::{CombineMode, CorrelationKernel, WeightKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 32+32 elements; runs in seconds.
    Desk,
    /// 128+128 elements at the full imaging depth; slow.
    Full,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::InvalidArgument(format!(
                "unknown profile `{other}` (expected desk or full)"
            ))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub columns_transmit: bool,
}

impl ArraySpec {
    pub fn build(&self) -> Result<RcaArray> {
        Ok(
            RcaArray::new(self.n_rows, self.n_cols, self.pitch_x, self.pitch_y)?
                .with_columns_transmit(self.columns_transmit),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub f0: f64,
    pub cycles: f64,
    pub fs: f64,
}

impl PulseSpec {
    pub fn build(&self) -> Result<Pulse> {
        make_pulse(self.f0, self.cycles, self.fs)
    }

    pub fn wavelength(&self, medium: Medium) -> f64 {
        medium.c / self.f0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhantomSpec {
    SinglePoint {
        position: Point3,
        amplitude: f64,
    },
    AnechoicCyst {
        cylinder: Cylinder,
        bounds: BoxBounds,
        /// Scatterers per cubic meter.
        density: f64,
    },
    Custom {
        scatterers: Vec<Scatterer>,
    },
}

impl PhantomSpec {
    pub fn build(&self, seed: u64) -> Result<Phantom> {
        match self {
            PhantomSpec::SinglePoint {
                position,
                amplitude,
            } => Phantom::single_point(*position, *amplitude),
            PhantomSpec::AnechoicCyst {
                cylinder,
                bounds,
                density,
            } => make_cyst_phantom(cylinder, bounds, *density, seed),
            PhantomSpec::Custom { scatterers } => {
                Phantom::new(scatterers.clone(), PhantomKind::Custom)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Upper bound on the in-memory channel data, bytes.
    pub max_bytes: u64,
}

/// Voxel lattice centered on `center`; see [`VolumeGrid::centered`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub center: Point3,
    pub half_extent: [f64; 3],
    pub step: [f64; 3],
}

impl GridSpec {
    pub fn build(&self) -> Result<VolumeGrid> {
        VolumeGrid::centered(self.center, self.half_extent, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamformSpec {
    pub apodization: Apodization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kernel: CorrelationKernel,
    pub mode: CombineMode,
    pub weight: WeightKind,
}

/// CNR regions: voxels inside `inside`, against voxels in `outside_bounds`
/// but outside `outside_exclude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnrSpec {
    pub inside: Cylinder,
    pub outside_bounds: BoxBounds,
    pub outside_exclude: Cylinder,
}

impl CnrSpec {
    pub fn regions(&self) -> (Region, Region) {
        (
            Region::InsideCylinder(self.inside),
            Region::BoxOutsideCylinder {
                bounds: self.outside_bounds,
                cylinder: self.outside_exclude,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    pub floor_db: f64,
    /// Level for resolution widths, dB (negative).
    pub level_db: f64,
    /// Axis for the lateral profile.
    pub lateral_axis: Axis,
    pub projection: ProjectionMode,
    /// Ghost exclusion radius in multiples of the axial main-lobe width.
    pub exclusion_widths: f64,
    /// Threshold for counting off-lobe peaks, dB.
    pub ghost_level_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnr: Option<CnrSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub array: ArraySpec,
    pub medium: Medium,
    pub pulse: PulseSpec,
    pub edge: EdgeModel,
    pub phantom: PhantomSpec,
    pub simulate: SimulateSpec,
    pub grid: GridSpec,
    pub beamform: BeamformSpec,
    pub filter: FilterSpec,
    pub metrics: MetricsSpec,
}

const MM: f64 = 1e-3;
const UM: f64 = 1e-6;

impl PipelineConfig {
    pub fn profile(profile: Profile) -> Self {
        let (n, position, half_extent, out) = match profile {
            Profile::Desk => (
                32,
                Point3::new(2.0 * MM, 1.0 * MM, 7.5 * MM),
                [1.0 * MM, 1.0 * MM, 1.6 * MM],
                "out/desk",
            ),
            Profile::Full => (
                128,
                Point3::new(8.0 * MM, 3.0 * MM, 30.0 * MM),
                [1.5 * MM, 1.5 * MM, 2.0 * MM],
                "out/full",
            ),
        };
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            output_dir: out.into(),
            array: ArraySpec {
                n_rows: n,
                n_cols: n,
                pitch_x: 148.0 * UM,
                pitch_y: 148.0 * UM,
                columns_transmit: false,
            },
            medium: Medium { c: 1480.0 },
            pulse: PulseSpec {
                f0: 5e6,
                cycles: 2.0,
                fs: 120e6,
            },
            edge: EdgeModel::default(),
            phantom: PhantomSpec::SinglePoint {
                position,
                amplitude: 1.0,
            },
            simulate: SimulateSpec {
                max_bytes: DEFAULT_MAX_CHANNEL_BYTES,
            },
            grid: GridSpec {
                center: position,
                half_extent,
                step: [74.0 * UM, 74.0 * UM, 37.0 * UM],
            },
            beamform: BeamformSpec {
                apodization: Apodization::Hanning,
            },
            filter: FilterSpec {
                kernel: CorrelationKernel::new(1, 1, 4),
                mode: CombineMode::Min,
                weight: WeightKind::Magnitude,
            },
            metrics: MetricsSpec {
                floor_db: DEFAULT_FLOOR_DB,
                level_db: -6.0,
                lateral_axis: Axis::X,
                projection: ProjectionMode::Max,
                exclusion_widths: 2.0,
                ghost_level_db: -40.0,
                cnr: None,
            },
        }
    }

    /// Parses `text` and merges it onto `profile`. The result is validated.
    pub fn from_toml_overlay(profile: Profile, text: &str) -> Result<Self> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::profile(profile))
            .map_err(|e| Error::ConfigParse(e.to_string()))?;
        merge_tables(&mut base, overlay);
        let cfg: PipelineConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (if given) over `profile`.
    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::io(format!("reading config {}", p.display()), e))?,
            None => String::new(),
        };
        Self::from_toml_overlay(profile, &text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Content hash of everything except `output_dir`, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Every violated constraint, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();

        need(
            self.schema_version == SCHEMA_VERSION,
            format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ),
        );
        let a = &self.array;
        need(a.n_rows > 0, "array.n_rows must be positive".into());
        need(a.n_cols > 0, "array.n_cols must be positive".into());
        need(pos(a.pitch_x), "array.pitch_x must be positive".into());
        need(pos(a.pitch_y), "array.pitch_y must be positive".into());
        need(pos(self.medium.c), "medium.c must be positive".into());

        let p = &self.pulse;
        need(pos(p.f0), "pulse.f0 must be positive".into());
        need(
            p.fs.is_finite() && p.fs > 2.0 * p.f0,
            format!(
                "pulse.fs: fs must exceed 2·f0 (fs = {}, f0 = {})",
                p.fs, p.f0
            ),
        );
        need(p.cycles >= 1.0, "pulse.cycles must be at least 1".into());

        let e = &self.edge;
        need(
            e.main_amp != 0.0 && e.main_amp.is_finite(),
            "edge.main_amp must be nonzero".into(),
        );
        need(
            e.edge_amp.abs() <= e.main_amp.abs(),
            format!(
                "edge.edge_amp: |edge_amp| must not exceed |main_amp| ({} vs {})",
                e.edge_amp, e.main_amp
            ),
        );

        match &self.phantom {
            PhantomSpec::SinglePoint {
                position,
                amplitude,
            } => {
                need(
                    position.is_finite() && position.z > 0.0,
                    "phantom.position must be finite with z > 0".into(),
                );
                need(
                    amplitude.is_finite(),
                    "phantom.amplitude must be finite".into(),
                );
            }
            PhantomSpec::AnechoicCyst {
                cylinder,
                bounds,
                density,
            } => {
                need(
                    pos(cylinder.radius),
                    "phantom.cylinder.radius must be positive".into(),
                );
                need(pos(*density), "phantom.density must be positive".into());
                need(
                    bounds.min.x < bounds.max.x
                        && bounds.min.y < bounds.max.y
                        && bounds.min.z < bounds.max.z,
                    "phantom.bounds: min must be below max on every axis".into(),
                );
                need(
                    bounds.min.z > 0.0,
                    "phantom.bounds must lie at z > 0".into(),
                );
            }
            PhantomSpec::Custom { scatterers } => {
                need(
                    !scatterers.is_empty(),
                    "phantom.scatterers must not be empty".into(),
                );
                need(
                    scatterers.iter().all(|s| {
                        s.position.is_finite() && s.position.z > 0.0 && s.amplitude.is_finite()
                    }),
                    "phantom.scatterers need finite positions with z > 0".into(),
                );
            }
        }

        need(
            self.simulate.max_bytes > 0,
            "simulate.max_bytes must be positive".into(),
        );

        let g = &self.grid;
        need(
            g.step.iter().all(|&s| pos(s)),
            "grid.step must be positive".into(),
        );
        need(
            g.half_extent.iter().all(|&h| h >= 0.0 && h.is_finite()),
            "grid.half_extent must be non-negative".into(),
        );
        need(g.center.is_finite(), "grid.center must be finite".into());
        if g.step[2] > 0.0 {
            let half_z = (g.half_extent[2] / g.step[2]).round() * g.step[2];
            need(
                g.center.z - half_z > 0.0,
                "grid: every voxel needs z > 0".into(),
            );
        }

        let m = &self.metrics;
        need(
            m.level_db < 0.0 && m.level_db > m.floor_db,
            "metrics.level_db must be negative and above floor_db".into(),
        );
        need(
            m.ghost_level_db > m.floor_db,
            "metrics.ghost_level_db must be above floor_db".into(),
        );
        need(
            pos(m.exclusion_widths),
            "metrics.exclusion_widths must be positive".into(),
        );
        if let Some(c) = &m.cnr {
            need(
                pos(c.inside.radius) && pos(c.outside_exclude.radius),
                "metrics.cnr radii must be positive".into(),
            );
            need(
                c.inside.axis == c.outside_exclude.axis
                    && c.inside.center == c.outside_exclude.center
                    && c.inside.radius <= c.outside_exclude.radius,
                "metrics.cnr regions must be disjoint: outside_exclude must contain inside".into(),
            );
        }
        v
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if b.get("kind").is_none()
                    || o.get("kind").is_none()
                    || b.get("kind") == o.get("kind") =>
            {
                merge_tables(b, o)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Validates a config, listing every violation.
pub fn validate_config(config: &PipelineConfig) -> Result<()> {
    config.validate()
}
