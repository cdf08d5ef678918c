//! Synthetic scenes with known extrinsics.
//!
//! Each scene is a small piecewise-planar world in front of the camera: a
//! tilted background wall and a few rectangles at nearer depths, the first of
//! which is a near-field target. Lidar returns are placed on a jittered
//! angular grid, take their intensity from the surface texture and are
//! expressed in the lidar frame through the inverse of the ground truth.
//! Every return that lands in the image deposits a Poisson number of events
//! whose mean grows affinely with its intensity, on top of uniform
//! background noise; the map is then clipped and smoothed like a recorded one.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_map::{self, AccumulatedEventMap, Event, Polarity, MAX_ACTIVITY};
use crate::geometry::{ExtrinsicParams, Intrinsics, Projector};
use crate::io;
use crate::pointcloud::{LidarPoint, PointCloudScene, ScenePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextureModel {
    /// Checkerboard on the near-field target, smooth fields elsewhere.
    PlanarChecker,
    /// Independent uniform intensities; no spatial structure.
    RandomIntensity,
    /// Sums of random sinusoids over every surface.
    #[default]
    SmoothField,
}

impl std::str::FromStr for TextureModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar-checker" => Ok(TextureModel::PlanarChecker),
            "random-intensity" => Ok(TextureModel::RandomIntensity),
            "smooth-field" => Ok(TextureModel::SmoothField),
            other => Err(Error::invalid(format!("unknown texture model `{other}`"))),
        }
    }
}

/// Expected events per lidar return as a function of its intensity, before
/// scaling by `activity_per_hit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivityLink {
    /// `offset + gain · L / 255`
    Affine { offset: f64, gain: f64 },
    /// `L / 255`
    Identity,
}

impl ActivityLink {
    pub fn apply(&self, intensity: u8) -> f64 {
        let l = intensity as f64 / 255.0;
        match *self {
            ActivityLink::Affine { offset, gain } => offset + gain * l,
            ActivityLink::Identity => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub ground_truth: ExtrinsicParams,
    pub intrinsics: Intrinsics,
    pub points_per_scene: usize,
    pub scene_count: usize,
    /// Nearest and farthest surface depth in meters.
    pub depth_range: (f64, f64),
    pub texture: TextureModel,
    /// Spurious events per pixel.
    pub event_noise_rate: f64,
    /// Mean event count for a return with link value 1.
    pub activity_per_hit: f64,
    pub link: ActivityLink,
    /// Draw counts from a Poisson law; otherwise round the mean.
    pub poisson: bool,
    /// Standard deviation of additive intensity noise.
    pub intensity_noise: f64,
    /// Smoothing applied to the clipped event map.
    pub sigma: f64,
    pub rng_seed: u64,
}

/// The event camera geometry binned 4×4 (1280×720 → 320×180, 63°×38° field
/// of view) with mild lens distortion.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        k1: -0.08,
        k2: 0.02,
        k3: 0.0,
        p1: 5e-4,
        p2: -3e-4,
        ..Intrinsics::pinhole(261.0, 261.0, 160.0, 90.0, 320, 180)
    }
}

pub fn default_ground_truth() -> ExtrinsicParams {
    ExtrinsicParams::from_array([0.08, -0.06, 0.04, 0.012, -0.025, 0.018])
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            ground_truth: default_ground_truth(),
            intrinsics: default_intrinsics(),
            points_per_scene: 75_000,
            scene_count: 20,
            depth_range: (1.5, 12.0),
            texture: TextureModel::SmoothField,
            event_noise_rate: 0.05,
            activity_per_hit: 60.0,
            link: ActivityLink::Affine {
                offset: 0.1,
                gain: 0.9,
            },
            poisson: true,
            intensity_noise: 4.0,
            sigma: event_map::DEFAULT_SIGMA,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.points_per_scene == 0 {
            return Err(Error::invalid("points_per_scene must be at least 1"));
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "depth range ({lo}, {hi}) is not a positive interval"
            )));
        }
        if !(self.event_noise_rate >= 0.0 && self.activity_per_hit >= 0.0 && self.sigma >= 0.0) {
            return Err(Error::invalid("noise rate, activity and sigma must be non-negative"));
        }
        Ok(())
    }
}

/// A generated scene together with what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub pair: ScenePair,
    /// Unclipped events per pixel, row-major.
    pub raw_counts: Vec<u32>,
    pub ground_truth: ExtrinsicParams,
    /// Pixels hit by a true projection.
    pub true_pixels: Vec<(u32, u32)>,
}

impl SyntheticScene {
    /// Clipped, unsmoothed activity.
    pub fn raw_map(&self) -> AccumulatedEventMap {
        let k = &self.pair.map;
        let values = self
            .raw_counts
            .iter()
            .map(|&c| c.min(MAX_ACTIVITY as u32) as f64)
            .collect();
        AccumulatedEventMap::from_values(k.width(), k.height(), values).expect("sized")
    }

    /// An event stream whose accumulation reproduces [`Self::raw_map`]:
    /// each clipped count becomes alternating-polarity events at random
    /// times inside the default window, sorted by time.
    pub fn events(&self, seed: u64) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.pair.map.width();
        let window_us = (event_map::DEFAULT_DURATION_S * 1e6) as u64;
        let mut events = Vec::new();
        for (i, &c) in self.raw_counts.iter().enumerate() {
            let (x, y) = (i as u32 % w, i as u32 / w);
            for j in 0..c.min(MAX_ACTIVITY as u32) {
                events.push(Event {
                    t: rng.random_range(0..window_us),
                    x,
                    y,
                    polarity: if j % 2 == 0 {
                        Polarity::Positive
                    } else {
                        Polarity::Negative
                    },
                });
            }
        }
        events.sort_by_key(|e| (e.t, e.y, e.x));
        events
    }
}

/// A bounded planar patch in the camera frame.
struct Surface {
    origin: Vector3<f64>,
    normal: Vector3<f64>,
    /// In-plane orthonormal axes.
    axes: [Vector3<f64>; 2],
    /// Half extents along `axes`; infinite for the background.
    half: Vector2<f64>,
    texture: Texture,
}

enum Texture {
    Field {
        base: f64,
        waves: Vec<(Vector2<f64>, f64, f64)>,
    },
    Checker {
        square: f64,
        dark: f64,
        light: f64,
    },
    Random,
}

impl Texture {
    fn field(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..4)
            .map(|k| {
                // wavelengths from about 1.3 m to 11 m; shorter ones narrow the basin
                let wavelength = 9.0 / (1.0 + 2.0 * k as f64) * rng.random_range(0.8..1.25);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let freq = Vector2::new(angle.cos(), angle.sin()) * (std::f64::consts::TAU / wavelength);
                let amp = 45.0 / (1.0 + 0.5 * k as f64);
                (freq, rng.random_range(0.0..std::f64::consts::TAU), amp)
            })
            .collect();
        Texture::Field {
            base: rng.random_range(90.0..165.0),
            waves,
        }
    }

    fn value(&self, a: f64, b: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Texture::Field { base, waves } => {
                base + waves
                    .iter()
                    .map(|(f, phase, amp)| amp * (f.x * a + f.y * b + phase).sin())
                    .sum::<f64>()
            }
            Texture::Checker {
                square,
                dark,
                light,
            } => {
                let i = (a / square).floor() as i64 + (b / square).floor() as i64;
                if i.rem_euclid(2) == 0 {
                    *dark
                } else {
                    *light
                }
            }
            Texture::Random => rng.random_range(0.0..=255.0),
        }
    }
}

impl Surface {
    fn new(
        origin: Vector3<f64>,
        tilt: (f64, f64),
        half: Vector2<f64>,
        texture: Texture,
    ) -> Self {
        let normal = Vector3::new(tilt.0.sin(), tilt.1.sin(), -1.0).normalize();
        let a = Vector3::y().cross(&normal).normalize();
        let b = normal.cross(&a);
        Self {
            origin,
            normal,
            axes: [a, b],
            half,
            texture,
        }
    }

    /// Ray parameter and plane coordinates of the hit, if inside the patch.
    fn intersect(&self, ray: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let denom = self.normal.dot(ray);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = self.normal.dot(&self.origin) / denom;
        if s <= 0.0 {
            return None;
        }
        let rel = ray * s - self.origin;
        let (a, b) = (rel.dot(&self.axes[0]), rel.dot(&self.axes[1]));
        (a.abs() <= self.half.x && b.abs() <= self.half.y).then_some((s, a, b))
    }
}

fn build_world(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Surface> {
    let (lo, hi) = cfg.depth_range;
    let texture = |rng: &mut ChaCha8Rng| match cfg.texture {
        TextureModel::RandomIntensity => Texture::Random,
        _ => Texture::field(rng),
    };
    let mut world = Vec::new();

    // near-field target
    let z = rng.random_range(lo..lo + 0.25 * (hi - lo));
    let center = Vector3::new(rng.random_range(-0.3..0.3) * z, rng.random_range(-0.15..0.15) * z, z);
    let half = Vector2::new(rng.random_range(0.3..0.6), rng.random_range(0.25..0.45));
    let target_texture = match cfg.texture {
        TextureModel::PlanarChecker => Texture::Checker {
            square: rng.random_range(0.08..0.15),
            dark: rng.random_range(20.0..60.0),
            light: rng.random_range(190.0..240.0),
        },
        _ => texture(rng),
    };
    world.push(Surface::new(
        center,
        (rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3)),
        half,
        target_texture,
    ));

    // mid-field clutter
    for _ in 0..5 {
        let z = rng.random_range(lo + 0.15 * (hi - lo)..lo + 0.6 * (hi - lo));
        let center = Vector3::new(rng.random_range(-0.5..0.5) * z, rng.random_range(-0.3..0.3) * z, z);
        let half = Vector2::new(rng.random_range(0.104..0.325) * z, rng.random_range(0.078..0.26) * z);
        let tex = texture(rng);
        world.push(Surface::new(
            center,
            (rng.random_range(-0.6..0.6), rng.random_range(-0.4..0.4)),
            half,
            tex,
        ));
    }

    // background wall
    let z = rng.random_range(lo + 0.7 * (hi - lo)..hi);
    let tex = texture(rng);
    world.push(Surface::new(
        Vector3::new(0.0, 0.0, z),
        (rng.random_range(-0.35..0.35), rng.random_range(-0.2..0.2)),
        Vector2::new(f64::INFINITY, f64::INFINITY),
        tex,
    ));
    world
}

fn scene_rng(cfg: &SynthConfig, scene_index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(scene_index as u64 * 4 + stream);
    rng
}

/// Builds scene `scene_index` of the configured dataset.
pub fn generate_scene(cfg: &SynthConfig, scene_index: usize) -> Result<SyntheticScene> {
    cfg.validate()?;
    let k = &cfg.intrinsics;
    let mut rng = scene_rng(cfg, scene_index, 0);
    let world = build_world(cfg, &mut rng);

    // lidar field of view: the image's normalized extent plus a margin
    let margin = 0.15;
    let x_lo = -k.cx / k.fx;
    let x_hi = (k.width as f64 - k.cx) / k.fx;
    let y_lo = -k.cy / k.fy;
    let y_hi = (k.height as f64 - k.cy) / k.fy;
    let (span_x, span_y) = (x_hi - x_lo, y_hi - y_lo);
    let (x_lo, x_hi) = (x_lo - margin * span_x, x_hi + margin * span_x);
    let (y_lo, y_hi) = (y_lo - margin * span_y, y_hi + margin * span_y);
    let aspect = (x_hi - x_lo) / (y_hi - y_lo);
    let n = cfg.points_per_scene;
    let nx = ((n as f64 * aspect).sqrt().round() as usize).max(1);
    let ny = n.div_ceil(nx);
    let mut cells = sample(&mut rng, nx * ny, n).into_vec();
    // scan order
    cells.sort_unstable();

    let noise = Normal::new(0.0, cfg.intensity_noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let theta = cfg.ground_truth;
    let r_inv = theta.rotation_matrix().transpose();
    let mut points = Vec::with_capacity(n);
    for cell in cells {
        let (ix, iy) = (cell % nx, cell / nx);
        let x = x_lo + (ix as f64 + rng.random::<f64>()) * (x_hi - x_lo) / nx as f64;
        let y = y_lo + (iy as f64 + rng.random::<f64>()) * (y_hi - y_lo) / ny as f64;
        let ray = Vector3::new(x, y, 1.0);
        let hit = world
            .iter()
            .filter_map(|s| s.intersect(&ray).map(|h| (h, s)))
            .min_by(|a, b| a.0 .0.total_cmp(&b.0 .0));
        let Some(((s, a, b), surface)) = hit else {
            continue;
        };
        let camera_point = ray * s;
        let intensity = surface.texture.value(a, b, &mut rng) + noise.sample(&mut rng);
        points.push(LidarPoint {
            position: r_inv * (camera_point - theta.translation),
            intensity: intensity.round().clamp(0.0, 255.0) as u8,
        });
    }

    let (w, h) = (k.width, k.height);
    let mut raw_counts = vec![0u32; w as usize * h as usize];
    let mut true_pixels = Vec::new();
    let mut deposit_rng = scene_rng(cfg, scene_index, 1);
    let projector = Projector::new(&theta, k);
    for p in &points {
        let px = projector.project(&p.position);
        if !px.valid {
            continue;
        }
        let x = (px.u.round() as u32).min(w - 1);
        let y = (px.v.round() as u32).min(h - 1);
        let mean = cfg.activity_per_hit * cfg.link.apply(p.intensity);
        let count = if cfg.poisson {
            draw_poisson(&mut deposit_rng, mean)
        } else {
            mean.round() as u32
        };
        raw_counts[(y * w + x) as usize] += count;
        true_pixels.push((x, y));
    }
    let spurious = draw_poisson(&mut deposit_rng, cfg.event_noise_rate * (w * h) as f64);
    for _ in 0..spurious {
        let x = deposit_rng.random_range(0..w);
        let y = deposit_rng.random_range(0..h);
        raw_counts[(y * w + x) as usize] += 1;
    }

    let clipped = raw_counts
        .iter()
        .map(|&c| c.min(MAX_ACTIVITY as u32) as f64)
        .collect();
    let map = event_map::smooth(&AccumulatedEventMap::from_values(w, h, clipped)?, cfg.sigma)?;
    let cloud = PointCloudScene::new(format!("synth-{scene_index:03}"), points)?;
    Ok(SyntheticScene {
        pair: ScenePair { cloud, map },
        raw_counts,
        ground_truth: theta,
        true_pixels,
    })
}

fn draw_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u32).unwrap_or(0)
}

/// All `cfg.scene_count` scenes, in index order.
pub fn generate_scenes(cfg: &SynthConfig) -> Result<Vec<SyntheticScene>> {
    (0..cfg.scene_count)
        .into_par_iter()
        .map(|i| generate_scene(cfg, i))
        .collect()
}

/// Scene pairs only.
pub fn generate_pairs(cfg: &SynthConfig) -> Result<Vec<ScenePair>> {
    Ok(generate_scenes(cfg)?.into_iter().map(|s| s.pair).collect())
}

/// Writes every scene, the intrinsics, the ground truth and a manifest
/// into `dir`; returns the manifest path.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_intrinsics(dir.join("intrinsics.txt"), &cfg.intrinsics)?;
    let truth = cfg.ground_truth.to_array().map(io::format_f64).join(",");
    std::fs::write(dir.join("ground_truth.txt"), format!("theta = {truth}\n"))
        .map_err(|e| Error::io(dir.join("ground_truth.txt"), e))?;
    let scenes = (0..cfg.scene_count)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(cfg, i)?;
            let id = scene.pair.scene_id().to_string();
            let events = PathBuf::from(format!("{id}.events.csv"));
            let cloud = PathBuf::from(format!("{id}.cloud.csv"));
            io::write_events(dir.join(&events), &scene.events(cfg.rng_seed ^ i as u64))?;
            io::write_cloud(dir.join(&cloud), &scene.pair.cloud)?;
            Ok(io::ManifestEntry {
                scene_id: id,
                events,
                cloud,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = dir.join("manifest.txt");
    io::SceneManifest {
        intrinsics: PathBuf::from("intrinsics.txt"),
        scenes,
    }
    .write(&manifest)?;
    Ok(manifest)
}
