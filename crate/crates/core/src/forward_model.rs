//! Parametric echo simulation for RCA arrays.
//!
//! Every transmit/receive pair receives nine arrivals per scatterer, one per
//! [`PathIndex`]. The main path carries `main_amp²`, paths with one edge
//! sub-path carry `main_amp·edge_amp`, and double-edge paths `edge_amp²`.
//! Each arrival is a copy of the emission pulse whose onset sits at the
//! path's time of flight, placed on the sample grid by linear interpolation.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, Medium, PathIndex, Point3, RcaArray, SubPath};

/// Default upper bound on the RF tensor size (2 GiB).
pub const DEFAULT_MAX_CHANNEL_BYTES: u64 = 2 << 30;

/// Hann-weighted sinusoidal emission pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub f0: f64,
    pub cycles: f64,
    pub fs: f64,
    pub samples: Vec<f64>,
}

impl Pulse {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Delay from pulse onset to the peak of its envelope, in seconds.
    pub fn center_delay(&self) -> f64 {
        (self.samples.len() as f64 - 1.0) / 2.0 / self.fs
    }

    /// Pulse value at fractional sample position `v`, zero outside support.
    #[inline]
    fn interp(&self, v: f64) -> f64 {
        if v < 0.0 {
            return 0.0;
        }
        let j = v.floor() as usize;
        let frac = v - j as f64;
        let a = self.samples.get(j).copied().unwrap_or(0.0);
        let b = self.samples.get(j + 1).copied().unwrap_or(0.0);
        a * (1.0 - frac) + b * frac
    }
}

pub fn hann(u: f64) -> f64 {
    0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
}

pub fn make_pulse(f0: f64, cycles: f64, fs: f64) -> Result<Pulse> {
    if !(f0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "center frequency must be positive, got {f0}"
        )));
    }
    if !(fs > 2.0 * f0) {
        return Err(Error::InvalidArgument(format!(
            "fs must exceed 2·f0 (fs = {fs}, f0 = {f0})"
        )));
    }
    if !(cycles >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pulse needs at least one cycle, got {cycles}"
        )));
    }
    let len = (cycles * fs / f0).round() as usize;
    let denom = (len - 1) as f64;
    let samples = (0..len)
        .map(|k| {
            let k = k as f64;
            hann(k / denom) * (2.0 * std::f64::consts::PI * f0 * k / fs).sin()
        })
        .collect();
    Ok(Pulse {
        f0,
        cycles,
        fs,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point3,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    SinglePoint,
    AnechoicCyst,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub kind: PhantomKind,
}

impl Phantom {
    pub fn new(scatterers: Vec<Scatterer>, kind: PhantomKind) -> Result<Self> {
        if scatterers.is_empty() {
            return Err(Error::EmptyPhantom);
        }
        if let Some(s) = scatterers
            .iter()
            .find(|s| !(s.position.z > 0.0) || !s.position.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "scatterer must lie in front of the array, got {:?}",
                s.position
            )));
        }
        Ok(Self { scatterers, kind })
    }

    pub fn single_point(position: Point3, amplitude: f64) -> Result<Self> {
        Self::new(
            vec![Scatterer {
                position,
                amplitude,
            }],
            PhantomKind::SinglePoint,
        )
    }

    /// Union of two phantoms; `self`'s scatterers come first.
    pub fn union(&self, other: &Phantom) -> Phantom {
        let mut scatterers = self.scatterers.clone();
        scatterers.extend_from_slice(&other.scatterers);
        Phantom {
            scatterers,
            kind: PhantomKind::Custom,
        }
    }
}

/// Relative amplitudes of the main and edge sub-paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel {
    pub main_amp: f64,
    pub edge_amp: f64,
    /// Apply `1/(d_tx·d_rx)` spherical spreading along each path.
    pub spreading: bool,
}

impl Default for EdgeModel {
    fn default() -> Self {
        Self {
            main_amp: 1.0,
            edge_amp: -0.5,
            spreading: true,
        }
    }
}

impl EdgeModel {
    pub fn validate(&self) -> Result<()> {
        if self.main_amp == 0.0 || !self.main_amp.is_finite() {
            return Err(Error::InvalidArgument("main_amp must be nonzero".into()));
        }
        if !(self.edge_amp.abs() <= self.main_amp.abs()) {
            return Err(Error::InvalidArgument(
                "|edge_amp| must not exceed |main_amp|".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn amp(&self, k: SubPath) -> f64 {
        match k {
            SubPath::Nearest => self.main_amp,
            _ => self.edge_amp,
        }
    }
}

/// Explicit time axis: sample `k` is at `t0 + k/fs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub t0: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Paths that produce echoes; all nine by default.
    pub paths: Vec<PathIndex>,
    /// Fixed time axis; derived from the arrivals when `None`.
    pub window: Option<TimeWindow>,
    pub max_bytes: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            paths: PathIndex::ALL.to_vec(),
            window: None,
            max_bytes: DEFAULT_MAX_CHANNEL_BYTES,
        }
    }
}

/// RF channel data, `[tx][rx][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub samples: Array3<f32>,
    pub fs: f64,
    pub t0: f64,
    /// Onset-to-envelope-peak delay of the emission pulse, seconds.
    pub lag: f64,
    pub f0: f64,
    pub columns_transmit: bool,
}

impl ChannelData {
    pub fn n_tx(&self) -> usize {
        self.samples.dim().0
    }

    pub fn n_rx(&self) -> usize {
        self.samples.dim().1
    }

    pub fn n_t(&self) -> usize {
        self.samples.dim().2
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }
}

fn path_gain(s: &Scatterer, d_tx: f64, d_rx: f64, path: PathIndex, edge: &EdgeModel) -> f64 {
    let mut a = s.amplitude * edge.amp(path.tx()) * edge.amp(path.rx());
    if edge.spreading {
        a /= d_tx * d_rx;
    }
    a
}

fn auto_window(
    array: &RcaArray,
    phantom: &Phantom,
    pulse: &Pulse,
    medium: Medium,
    paths: &[PathIndex],
) -> TimeWindow {
    let (lo, hi) = phantom
        .scatterers
        .par_iter()
        .map(|s| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for tx in array.tx_elements() {
                for rx in array.rx_elements() {
                    for &path in paths {
                        let t = crate::geometry::tof(&s.position, tx, rx, path, medium);
                        lo = lo.min(t);
                        hi = hi.max(t);
                    }
                }
            }
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    const MARGIN: f64 = 4.0;
    let first = ((lo * pulse.fs).floor() - MARGIN).max(0.0);
    let last = (hi * pulse.fs).ceil() + pulse.len() as f64 + MARGIN;
    TimeWindow {
        t0: first / pulse.fs,
        n_t: (last - first) as usize + 1,
    }
}

/// Simulates all nine echo paths for every transmit/receive pair.
pub fn simulate_channel_data(
    array: &RcaArray,
    phantom: &Phantom,
    pulse: &Pulse,
    edge: &EdgeModel,
    medium: Medium,
) -> Result<ChannelData> {
    simulate_with(array, phantom, pulse, edge, medium, &SimOptions::default())
}

pub fn simulate_with(
    array: &RcaArray,
    phantom: &Phantom,
    pulse: &Pulse,
    edge: &EdgeModel,
    medium: Medium,
    opts: &SimOptions,
) -> Result<ChannelData> {
    if phantom.scatterers.is_empty() {
        return Err(Error::EmptyPhantom);
    }
    edge.validate()?;
    let window = match opts.window {
        Some(w) => w,
        None => auto_window(array, phantom, pulse, medium, &opts.paths),
    };
    let txs = array.tx_elements();
    let rxs = array.rx_elements();
    let (n_tx, n_rx, n_t) = (txs.len(), rxs.len(), window.n_t);
    let required = (n_tx * n_rx) as u64 * n_t as u64 * 4;
    if required > opts.max_bytes {
        return Err(Error::MemoryCap {
            required,
            cap: opts.max_bytes,
        });
    }

    let fs = pulse.fs;
    let last_tap = (pulse.len() - 1) as f64;
    let mut samples = vec![0f32; n_tx * n_rx * n_t];
    samples
        .par_chunks_mut(n_t.max(1))
        .enumerate()
        .for_each_init(
            || vec![0f64; n_t],
            |acc, (ch, out)| {
                let (tx, rx) = (&txs[ch / n_rx], &rxs[ch % n_rx]);
                acc.iter_mut().for_each(|v| *v = 0.0);
                for s in &phantom.scatterers {
                    for &path in &opts.paths {
                        let d_tx = tx.path_length(&s.position, path.tx());
                        let d_rx = rx.path_length(&s.position, path.rx());
                        let gain = path_gain(s, d_tx, d_rx, path, edge);
                        if gain == 0.0 {
                            continue;
                        }
                        let onset = ((d_tx + d_rx) / medium.c - window.t0) * fs;
                        let first = onset.ceil().max(0.0) as usize;
                        let last = ((onset + last_tap).floor().max(-1.0) + 1.0) as usize;
                        for (k, slot) in acc.iter_mut().enumerate().take(last.min(n_t)).skip(first)
                        {
                            *slot += gain * pulse.interp(k as f64 - onset);
                        }
                    }
                }
                for (o, a) in out.iter_mut().zip(acc.iter()) {
                    *o = *a as f32;
                }
            },
        );

    let samples =
        Array3::from_shape_vec((n_tx, n_rx, n_t), samples).expect("buffer sized from dims");
    Ok(ChannelData {
        samples,
        fs,
        t0: window.t0,
        lag: pulse.center_delay(),
        f0: pulse.f0,
        columns_transmit: array.columns_transmit,
    })
}

/// Cylindrical exclusion region of infinite length along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Point3,
    pub radius: f64,
    pub axis: Axis,
}

impl Cylinder {
    pub fn distance_to_axis(&self, p: &Point3) -> f64 {
        let d = [
            p.x - self.center.x,
            p.y - self.center.y,
            p.z - self.center.z,
        ];
        let a = self.axis.index();
        let (u, v) = (d[(a + 1) % 3], d[(a + 2) % 3]);
        (u * u + v * v).sqrt()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.distance_to_axis(p) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub min: Point3,
    pub max: Point3,
}

impl BoxBounds {
    pub fn volume(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y) * (self.max.z - self.min.z)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

/// Speckle phantom with an anechoic cylindrical vessel.
///
/// `round(density · volume)` candidate positions are drawn uniformly in the
/// box; those inside the cylinder are dropped. Amplitudes are standard
/// normal. The same seed always yields the same phantom.
pub fn make_cyst_phantom(
    cylinder: &Cylinder,
    bounds: &BoxBounds,
    density: f64,
    seed: u64,
) -> Result<Phantom> {
    if !(cylinder.radius > 0.0) {
        return Err(Error::InvalidArgument(
            "cyst radius must be positive".into(),
        ));
    }
    if !(density > 0.0) {
        return Err(Error::InvalidArgument(
            "scatterer density must be positive".into(),
        ));
    }
    if !(bounds.volume() > 0.0) || !(bounds.min.z > 0.0) {
        return Err(Error::InvalidArgument(
            "phantom box must have positive volume in front of the array".into(),
        ));
    }
    let candidates = (density * bounds.volume()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scatterers = Vec::with_capacity(candidates);
    for _ in 0..candidates {
        let position = Point3::new(
            rng.random_range(bounds.min.x..bounds.max.x),
            rng.random_range(bounds.min.y..bounds.max.y),
            rng.random_range(bounds.min.z..bounds.max.z),
        );
        let amplitude: f64 = rng.sample(StandardNormal);
        if !cylinder.contains(&position) {
            scatterers.push(Scatterer {
                position,
                amplitude,
            });
        }
    }
    Phantom::new(scatterers, PhantomKind::AnechoicCyst)
}
