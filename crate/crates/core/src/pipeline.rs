//! File-based pipeline. Every stage reads its inputs from the output
//! directory and writes its artifacts back there, so stages can be run,
//! tested and resumed one at a time.
//!
//! Artifacts (all binary data little-endian):
//!
//! | stage    | files                                                      |
//! |----------|------------------------------------------------------------|
//! | simulate | `channels.f32` `[tx][rx][t]`, `channels.json`              |
//! | beamform | `frame_nXiY.c64` `[x][y][z]` (re, im as f32), `frames.json` |
//! | filter   | `weights.f32`, `filtered.c64`, `filter.json`               |
//! | metrics  | `profile_*.csv`, `metrics.json`                            |
//!
//! Every `.json` sidecar embeds the resolved config, a hash of the stage
//! inputs and the SHA-256 of each file it describes. Downstream stages
//! verify those hashes and refuse artifacts produced under a config whose
//! upstream sections differ from the current one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array3;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamformer::{beamform_frames, to_baseband, ComplexVolume, FrameSet, VolumeGrid};
use crate::config::{ArraySpec, PipelineConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::forward_model::{simulate_with, ChannelData, EdgeModel, SimOptions};
use crate::geometry::{Axis, PathIndex};
use crate::metrics::{
    cnr_in_regions, envelope_db, ghost_suppression_db, off_lobe_peaks, project, width_at_level,
    Profile,
};
use crate::postfilter::filter_frames;

pub const CHANNELS_BIN: &str = "channels.f32";
pub const CHANNELS_META: &str = "channels.json";
pub const FRAMES_META: &str = "frames.json";
pub const WEIGHTS_BIN: &str = "weights.f32";
pub const FILTERED_BIN: &str = "filtered.c64";
pub const FILTER_META: &str = "filter.json";
pub const METRICS_REPORT: &str = "metrics.json";

pub fn frame_file(path: PathIndex) -> String {
    format!("frame_{}.c64", path.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Beamform,
    Filter,
    Metrics,
    All,
}

impl Stage {
    const ORDER: [Stage; 4] = [
        Stage::Simulate,
        Stage::Beamform,
        Stage::Filter,
        Stage::Metrics,
    ];

    fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Beamform => "beamform",
            Stage::Filter => "filter",
            Stage::Metrics => "metrics",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ORDER
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metadata written next to every stage's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar<M> {
    pub schema_version: u32,
    pub stage: String,
    /// Hash of the config sections this stage depends on.
    pub config_key: String,
    /// Hash of the config key and all upstream artifact hashes.
    pub input_hash: String,
    /// SHA-256 of each file the sidecar describes.
    pub outputs: BTreeMap<String, String>,
    pub meta: M,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelMeta {
    /// `[n_tx, n_rx, n_t]`.
    pub dims: [usize; 3],
    pub fs: f64,
    pub t0: f64,
    pub lag: f64,
    pub f0: f64,
    pub columns_transmit: bool,
    pub array: ArraySpec,
    pub edge: EdgeModel,
    pub seed: u64,
    pub scatterers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub grid: VolumeGrid,
    pub f0: f64,
    pub paths: Vec<String>,
}

/// Scalar results of the metrics stage. Widths are in meters; fields that
/// the run does not define (no crossing, no CNR regions) are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fwhm_main: Option<f64>,
    pub fwhm_filtered: Option<f64>,
    pub axial_width_main: Option<f64>,
    pub suppression_db: Option<f64>,
    pub off_lobe_peaks_main: usize,
    pub off_lobe_peaks_filtered: usize,
    pub peak_main: [usize; 3],
    pub peak_filtered: [usize; 3],
    /// Filtered over main magnitude at the main frame's peak.
    pub peak_retention: f64,
    pub cnr_main: Option<f64>,
    pub cnr_filtered: Option<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn combine_hashes<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Hash of the config sections that the given stage's output depends on.
pub fn config_key(cfg: &PipelineConfig, stage: Stage) -> String {
    let mut parts = vec![serde_json::json!({
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "array": cfg.array,
        "medium": cfg.medium,
        "pulse": cfg.pulse,
        "edge": cfg.edge,
        "phantom": cfg.phantom,
        "simulate": cfg.simulate,
    })];
    let depth = Stage::ORDER.iter().position(|&s| s == stage).unwrap_or(3);
    if depth >= 1 {
        parts.push(serde_json::json!({ "grid": cfg.grid, "beamform": cfg.beamform }));
    }
    if depth >= 2 {
        parts.push(serde_json::json!({ "filter": cfg.filter }));
    }
    if depth >= 3 {
        parts.push(serde_json::json!({ "metrics": cfg.metrics }));
    }
    sha256_hex(&serde_json::to_vec(&parts).expect("json values serialize"))
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: BTreeMap<String, String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir,
            outputs: BTreeMap::new(),
        })
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish<M: Serialize>(
        self,
        name: &str,
        stage: Stage,
        cfg: &PipelineConfig,
        input_hash: String,
        meta: M,
    ) -> Result<()> {
        let sidecar = Sidecar {
            schema_version: SCHEMA_VERSION,
            stage: stage.to_string(),
            config_key: config_key(cfg, stage),
            input_hash,
            outputs: self.outputs,
            meta,
            config: cfg.clone(),
        };
        let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn read_file(dir: &Path, name: &str, stage: &'static str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingArtifact { path, stage })
        }
        Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
    }
}

/// Reads a sidecar and checks that it was written by `producer` under the
/// current config.
fn read_sidecar<M: DeserializeOwned>(
    dir: &Path,
    name: &str,
    producer: Stage,
    cfg: &PipelineConfig,
) -> Result<Sidecar<M>> {
    let stage = producer.name();
    let bytes = read_file(dir, name, stage)?;
    let path = dir.join(name);
    let sc: Sidecar<M> = serde_json::from_slice(&bytes).map_err(|e| Error::MalformedArtifact {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if sc.stage != stage {
        return Err(Error::MalformedArtifact {
            path,
            reason: format!("written by stage `{}`, expected `{stage}`", sc.stage),
        });
    }
    if sc.config_key != config_key(cfg, producer) {
        return Err(Error::StaleArtifact { path, stage });
    }
    Ok(sc)
}

/// Reads a file listed in a sidecar and verifies its hash.
fn read_verified<M>(
    dir: &Path,
    name: &str,
    sc: &Sidecar<M>,
    stage: &'static str,
) -> Result<Vec<u8>> {
    let bytes = read_file(dir, name, stage)?;
    let path = dir.join(name);
    match sc.outputs.get(name) {
        Some(h) if *h == sha256_hex(&bytes) => Ok(bytes),
        Some(_) => Err(Error::MalformedArtifact {
            path,
            reason: "content hash does not match its sidecar".into(),
        }),
        None => Err(Error::MalformedArtifact {
            path,
            reason: "not listed in its sidecar".into(),
        }),
    }
}

fn f32_bytes(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

fn parse_f32(bytes: &[u8], expected: usize, path: &Path) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::MalformedArtifact {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn volume_bytes(v: &ComplexVolume) -> Vec<u8> {
    f32_bytes(v.data.iter().flat_map(|c| [c.re as f32, c.im as f32]))
}

fn parse_volume(
    bytes: &[u8],
    meta: &VolumeMeta,
    path_index: PathIndex,
    file: &Path,
) -> Result<ComplexVolume> {
    let grid = meta.grid;
    let floats = parse_f32(bytes, 2 * grid.len(), file)?;
    let values = floats
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
        .collect();
    Ok(ComplexVolume {
        data: Array3::from_shape_vec(grid.dim(), values).expect("length checked"),
        grid,
        path: path_index,
        f0: meta.f0,
    })
}

pub fn run_simulate(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let array = cfg.array.build()?;
    let pulse = cfg.pulse.build()?;
    let phantom = cfg.phantom.build(cfg.seed)?;
    let opts = SimOptions {
        max_bytes: cfg.simulate.max_bytes,
        ..SimOptions::default()
    };
    let data = simulate_with(&array, &phantom, &pulse, &cfg.edge, cfg.medium, &opts)?;

    let mut w = Writer::new(&cfg.output_dir)?;
    w.file(CHANNELS_BIN, &f32_bytes(data.samples.iter().copied()))?;
    let meta = ChannelMeta {
        dims: [data.n_tx(), data.n_rx(), data.n_t()],
        fs: data.fs,
        t0: data.t0,
        lag: data.lag,
        f0: data.f0,
        columns_transmit: data.columns_transmit,
        array: cfg.array,
        edge: cfg.edge,
        seed: cfg.seed,
        scatterers: phantom.scatterers.len(),
    };
    let input = config_key(cfg, Stage::Simulate);
    w.finish(CHANNELS_META, Stage::Simulate, cfg, input, meta)
}

pub fn load_channels(cfg: &PipelineConfig) -> Result<ChannelData> {
    load_channels_with(cfg).map(|(_, data)| data)
}

fn load_channels_with(cfg: &PipelineConfig) -> Result<(Sidecar<ChannelMeta>, ChannelData)> {
    let dir = &cfg.output_dir;
    let sc: Sidecar<ChannelMeta> = read_sidecar(dir, CHANNELS_META, Stage::Simulate, cfg)?;
    let bytes = read_verified(dir, CHANNELS_BIN, &sc, "simulate")?;
    let m = &sc.meta;
    let [a, b, c] = m.dims;
    let samples = parse_f32(&bytes, a * b * c, &dir.join(CHANNELS_BIN))?;
    let data = ChannelData {
        samples: Array3::from_shape_vec((a, b, c), samples).expect("length checked"),
        fs: m.fs,
        t0: m.t0,
        lag: m.lag,
        f0: m.f0,
        columns_transmit: m.columns_transmit,
    };
    Ok((sc, data))
}

fn upstream_hash<M>(cfg: &PipelineConfig, stage: Stage, sc: &Sidecar<M>) -> String {
    let key = config_key(cfg, stage);
    combine_hashes(
        std::iter::once(key.as_str())
            .chain(std::iter::once(sc.input_hash.as_str()))
            .chain(sc.outputs.values().map(String::as_str)),
    )
}

pub fn run_beamform(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let (sc, data) = load_channels_with(cfg)?;
    let array = cfg.array.build()?;
    if data.n_tx() != array.tx_elements().len() || data.n_rx() != array.rx_elements().len() {
        return Err(Error::MalformedArtifact {
            path: cfg.output_dir.join(CHANNELS_BIN),
            reason: "channel counts do not match the array".into(),
        });
    }
    let grid = cfg.grid.build()?;
    let baseband = to_baseband(&data, cfg.pulse.f0)?;
    let frames = beamform_frames(
        &baseband,
        &array,
        &grid,
        cfg.medium,
        cfg.beamform.apodization,
    )?;
    drop(baseband);

    let mut w = Writer::new(&cfg.output_dir)?;
    for f in frames.iter() {
        w.file(&frame_file(f.path), &volume_bytes(f))?;
    }
    let meta = VolumeMeta {
        grid,
        f0: cfg.pulse.f0,
        paths: PathIndex::ALL.iter().map(|p| p.label()).collect(),
    };
    let input = upstream_hash(cfg, Stage::Beamform, &sc);
    w.finish(FRAMES_META, Stage::Beamform, cfg, input, meta)
}

pub fn load_frames(cfg: &PipelineConfig) -> Result<FrameSet> {
    FrameSet::new(load_frames_with(cfg, &PathIndex::ALL)?.1)
}

fn load_frames_with(
    cfg: &PipelineConfig,
    paths: &[PathIndex],
) -> Result<(Sidecar<VolumeMeta>, Vec<ComplexVolume>)> {
    let dir = &cfg.output_dir;
    let sc: Sidecar<VolumeMeta> = read_sidecar(dir, FRAMES_META, Stage::Beamform, cfg)?;
    let frames = paths
        .iter()
        .map(|&p| {
            let name = frame_file(p);
            let bytes = read_verified(dir, &name, &sc, "beamform")?;
            parse_volume(&bytes, &sc.meta, p, &dir.join(&name))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sc, frames))
}

pub fn run_filter(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let (sc, frames) = load_frames_with(cfg, &PathIndex::ALL)?;
    let frames = FrameSet::new(frames)?;
    let f = &cfg.filter;
    let (weights, filtered) = filter_frames(&frames, f.kernel, f.mode, f.weight)?;

    let mut w = Writer::new(&cfg.output_dir)?;
    w.file(
        WEIGHTS_BIN,
        &f32_bytes(weights.data.iter().map(|&x| x as f32)),
    )?;
    w.file(FILTERED_BIN, &volume_bytes(&filtered))?;
    let meta = VolumeMeta {
        grid: frames.grid(),
        f0: sc.meta.f0,
        paths: vec![PathIndex::MAIN.label()],
    };
    let input = upstream_hash(cfg, Stage::Filter, &sc);
    w.finish(FILTER_META, Stage::Filter, cfg, input, meta)
}

/// Main frame and filtered volume as written by the filter stage.
pub fn load_filtered(cfg: &PipelineConfig) -> Result<(ComplexVolume, ComplexVolume, Array3<f32>)> {
    let dir = &cfg.output_dir;
    let sc: Sidecar<VolumeMeta> = read_sidecar(dir, FILTER_META, Stage::Filter, cfg)?;
    let bytes = read_verified(dir, FILTERED_BIN, &sc, "filter")?;
    let filtered = parse_volume(&bytes, &sc.meta, PathIndex::MAIN, &dir.join(FILTERED_BIN))?;
    let bytes = read_verified(dir, WEIGHTS_BIN, &sc, "filter")?;
    let weights = parse_f32(&bytes, sc.meta.grid.len(), &dir.join(WEIGHTS_BIN))?;
    let weights = Array3::from_shape_vec(sc.meta.grid.dim(), weights).expect("length checked");
    let (_, mut main) = load_frames_with(cfg, &[PathIndex::MAIN])?;
    Ok((main.remove(0), filtered, weights))
}

/// Computes the metrics for a main/filtered pair and the four profiles
/// (lateral and axial, main and filtered), keyed by file name.
pub fn compute_metrics(
    cfg: &PipelineConfig,
    main: &ComplexVolume,
    filtered: &ComplexVolume,
) -> Result<(MetricsReport, Vec<(String, Profile)>)> {
    let m = &cfg.metrics;
    let mdb = envelope_db(main, m.floor_db)?;
    let fdb = envelope_db(filtered, m.floor_db)?;
    let (ml, fl) = (
        project(&mdb, m.lateral_axis, m.projection),
        project(&fdb, m.lateral_axis, m.projection),
    );
    let (mz, fz) = (
        project(&mdb, Axis::Z, m.projection),
        project(&fdb, Axis::Z, m.projection),
    );

    let axial_width = width_at_level(&mz, m.level_db).ok();
    let peak_z = mz.positions[mz.peak_index()];
    let (suppression, peaks_main, peaks_filtered) = match axial_width {
        Some(wz) => {
            let excl = m.exclusion_widths * wz;
            (
                ghost_suppression_db(&mz, &fz, peak_z, excl).ok(),
                off_lobe_peaks(&mz, peak_z, excl, m.ghost_level_db).len(),
                off_lobe_peaks(&fz, peak_z, excl, m.ghost_level_db).len(),
            )
        }
        None => (None, 0, 0),
    };

    let peak_main = main.argmax();
    let before = main.magnitude_at(peak_main);
    let (cnr_main, cnr_filtered) = match &m.cnr {
        Some(spec) => {
            let (inside, outside) = spec.regions();
            (
                Some(cnr_in_regions(main, &inside, &outside)?),
                Some(cnr_in_regions(filtered, &inside, &outside)?),
            )
        }
        None => (None, None),
    };
    let report = MetricsReport {
        fwhm_main: width_at_level(&ml, m.level_db).ok(),
        fwhm_filtered: width_at_level(&fl, m.level_db).ok(),
        axial_width_main: axial_width,
        suppression_db: suppression,
        off_lobe_peaks_main: peaks_main,
        off_lobe_peaks_filtered: peaks_filtered,
        peak_main,
        peak_filtered: filtered.argmax(),
        peak_retention: if before > 0.0 {
            filtered.magnitude_at(peak_main) / before
        } else {
            0.0
        },
        cnr_main,
        cnr_filtered,
    };
    let profiles = vec![
        ("profile_lateral_main.csv".to_string(), ml),
        ("profile_lateral_filtered.csv".to_string(), fl),
        ("profile_axial_main.csv".to_string(), mz),
        ("profile_axial_filtered.csv".to_string(), fz),
    ];
    Ok((report, profiles))
}

pub fn run_metrics(cfg: &PipelineConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    let sc: Sidecar<VolumeMeta> = read_sidecar(dir, FILTER_META, Stage::Filter, cfg)?;
    let (main, filtered, _) = load_filtered(cfg)?;
    let (report, profiles) = compute_metrics(cfg, &main, &filtered)?;

    let mut w = Writer::new(dir)?;
    for (name, p) in &profiles {
        w.file(name, p.to_csv().as_bytes())?;
    }
    let input = upstream_hash(cfg, Stage::Metrics, &sc);
    w.finish(METRICS_REPORT, Stage::Metrics, cfg, input, report.clone())?;
    Ok(report)
}

pub fn read_metrics(dir: &Path) -> Result<MetricsReport> {
    let bytes = read_file(dir, METRICS_REPORT, "metrics")?;
    let sc: Sidecar<MetricsReport> =
        serde_json::from_slice(&bytes).map_err(|e| Error::MalformedArtifact {
            path: dir.join(METRICS_REPORT),
            reason: e.to_string(),
        })?;
    Ok(sc.meta)
}

/// Runs one stage, or all four in order.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<()> {
    match stage {
        Stage::Simulate => run_simulate(cfg),
        Stage::Beamform => run_beamform(cfg),
        Stage::Filter => run_filter(cfg),
        Stage::Metrics => run_metrics(cfg).map(|_| ()),
        Stage::All => Stage::ORDER.iter().try_for_each(|&s| run_stage(s, cfg)),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `None`. Results do not depend on the thread count.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument(
            "thread count must be positive".into(),
        )),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}"))),
    }
}

/// Every file a complete run leaves in the output directory.
pub fn artifact_names() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = [
        CHANNELS_BIN,
        CHANNELS_META,
        FRAMES_META,
        WEIGHTS_BIN,
        FILTERED_BIN,
        FILTER_META,
    ]
    .iter()
    .map(PathBuf::from)
    .collect();
    v.extend(PathIndex::ALL.iter().map(|&p| PathBuf::from(frame_file(p))));
    v.push(METRICS_REPORT.into());
    v
}
