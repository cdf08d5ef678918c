//! Mutual-information objective between lidar intensity and event activity.
//!
//! For a candidate extrinsic, every lidar point is projected into the event
//! map; points landing inside the image contribute their intensity `L` and the
//! activity `E` found at the projected location to three histograms (`L`,
//! `E` and the joint `L×E`). The histograms are normalized by the number of
//! contributing points, blurred with a Gaussian whose width follows
//! Silverman's rule (or a fixed width), and scored as
//! `MI = H(L) + H(E) − H(L,E)` in nats.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_map::{gaussian_kernel, reflect, AccumulatedEventMap, MAX_ACTIVITY};
use crate::geometry::{ExtrinsicParams, Intrinsics, Projector};
use crate::pointcloud::ScenePair;

pub const INTENSITY_BINS: usize = 256;
pub const ACTIVITY_BINS: usize = MAX_ACTIVITY as usize + 1;

/// Fewer valid projections than this and the objective reports 0.
pub const DEFAULT_MIN_POINTS: usize = 100;

/// How activity is read from the event map at a projected coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    Bilinear,
    Nearest,
}

/// KDE bandwidth in bins.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// Silverman's rule on each axis' sample.
    #[default]
    Auto,
    Fixed { intensity: f64, activity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiConfig {
    pub bandwidth: Bandwidth,
    pub sampling: Sampling,
    pub min_points: usize,
    /// Evaluate scenes on the rayon pool.
    pub parallel: bool,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            sampling: Sampling::Bilinear,
            min_points: DEFAULT_MIN_POINTS,
            parallel: true,
        }
    }
}

/// Raw counts. `joint` is row-major with one row per intensity bin.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub intensity: Vec<u64>,
    pub activity: Vec<u64>,
    pub joint: Vec<u64>,
    pub n: u64,
}

impl JointHistogram {
    pub fn new() -> Self {
        Self::with_bins(INTENSITY_BINS, ACTIVITY_BINS)
    }

    pub fn with_bins(intensity_bins: usize, activity_bins: usize) -> Self {
        Self {
            intensity: vec![0; intensity_bins],
            activity: vec![0; activity_bins],
            joint: vec![0; intensity_bins * activity_bins],
            n: 0,
        }
    }

    pub fn intensity_bins(&self) -> usize {
        self.intensity.len()
    }

    pub fn activity_bins(&self) -> usize {
        self.activity.len()
    }

    #[inline]
    pub fn add(&mut self, intensity_bin: usize, activity_bin: usize) {
        self.intensity[intensity_bin] += 1;
        self.activity[activity_bin] += 1;
        self.joint[intensity_bin * self.activity.len() + activity_bin] += 1;
        self.n += 1;
    }

    pub fn joint_at(&self, intensity_bin: usize, activity_bin: usize) -> u64 {
        self.joint[intensity_bin * self.activity.len() + activity_bin]
    }

    /// Swaps the roles of the two variables.
    pub fn transposed(&self) -> Self {
        let (rows, cols) = (self.intensity_bins(), self.activity_bins());
        let mut joint = vec![0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                joint[c * rows + r] = self.joint[r * cols + c];
            }
        }
        Self {
            intensity: self.activity.clone(),
            activity: self.intensity.clone(),
            joint,
            n: self.n,
        }
    }
}

impl Default for JointHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Rounds sampled activity to its histogram bin.
#[inline]
pub fn activity_bin(activity: f64) -> usize {
    activity.round().clamp(0.0, MAX_ACTIVITY as f64) as usize
}

/// Algorithm of record: project, sample, bin. Only in-image projections count.
pub fn build_histograms(pair: &ScenePair, theta: &ExtrinsicParams, k: &Intrinsics) -> JointHistogram {
    build_histograms_with(pair, theta, k, Sampling::Bilinear)
}

pub fn build_histograms_with(
    pair: &ScenePair,
    theta: &ExtrinsicParams,
    k: &Intrinsics,
    sampling: Sampling,
) -> JointHistogram {
    let projector = Projector::new(theta, k);
    let map: &AccumulatedEventMap = &pair.map;
    let mut h = JointHistogram::new();
    for pt in pair.cloud.points() {
        let px = projector.project(&pt.position);
        if !px.valid {
            continue;
        }
        let e = match sampling {
            Sampling::Bilinear => map.sample(px),
            Sampling::Nearest => map.sample_nearest(px),
        };
        h.add(pt.intensity as usize, activity_bin(e));
    }
    h
}

/// Smoothed, normalized distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbEstimate {
    pub intensity: Vec<f64>,
    pub activity: Vec<f64>,
    pub joint: Vec<f64>,
}

impl ProbEstimate {
    pub fn mutual_information(&self) -> f64 {
        let mi = entropy_unchecked(&self.intensity) + entropy_unchecked(&self.activity)
            - entropy_unchecked(&self.joint);
        mi.max(0.0)
    }
}

/// Silverman's rule-of-thumb bandwidth, in bins, for a sample given as
/// per-bin counts: `0.9 · min(σ̂, IQR/1.34) · n^(-1/5)`.
///
/// `σ̂` uses the `n − 1` denominator and quartiles interpolate linearly
/// between order statistics. When the IQR is zero the spread falls back to
/// `σ̂` alone.
pub fn silverman_bandwidth(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum::<f64>()
        / nf;
    let ss: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (i as f64 - mean).powi(2))
        .sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    let iqr = quantile_from_counts(counts, n, 0.75) - quantile_from_counts(counts, n, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * nf.powf(-0.2)
}

fn quantile_from_counts(counts: &[u64], n: u64, q: f64) -> f64 {
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as u64;
    let frac = pos - lo as f64;
    let a = value_at_rank(counts, lo);
    if frac == 0.0 {
        return a;
    }
    let b = value_at_rank(counts, lo + 1);
    a + frac * (b - a)
}

fn value_at_rank(counts: &[u64], rank: u64) -> f64 {
    let mut seen = 0;
    for (i, &c) in counts.iter().enumerate() {
        seen += c;
        if rank < seen {
            return i as f64;
        }
    }
    (counts.len() - 1) as f64
}

/// Normalizes by `n`, then blurs the marginals and (separably) the joint
/// histogram with Gaussians of the requested bandwidths.
///
/// Panics if the histogram is empty.
pub fn estimate_probabilities(h: &JointHistogram, bandwidth: Bandwidth) -> ProbEstimate {
    assert!(h.n > 0, "estimate_probabilities needs at least one sample");
    let (bw_l, bw_e) = match bandwidth {
        Bandwidth::Auto => (
            silverman_bandwidth(&h.intensity),
            silverman_bandwidth(&h.activity),
        ),
        Bandwidth::Fixed {
            intensity,
            activity,
        } => (intensity, activity),
    };
    let n = h.n as f64;
    let norm = |v: &[u64]| v.iter().map(|&c| c as f64 / n).collect::<Vec<f64>>();

    let kl = gaussian_kernel(bw_l);
    let ke = gaussian_kernel(bw_e);
    let mut p_l = norm(&h.intensity);
    let mut p_e = norm(&h.activity);
    let mut p_le = norm(&h.joint);
    p_l = blur_1d(&p_l, &kl);
    p_e = blur_1d(&p_e, &ke);
    blur_joint(&mut p_le, h.intensity_bins(), h.activity_bins(), &kl, &ke);

    renormalize(&mut p_l);
    renormalize(&mut p_e);
    renormalize(&mut p_le);
    ProbEstimate {
        intensity: p_l,
        activity: p_e,
        joint: p_le,
    }
}

fn renormalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|v| *v /= s);
    }
}

fn blur_1d(p: &[f64], kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return p.to_vec();
    }
    let mut out = vec![0.0; p.len()];
    let Some((lo, hi)) = support(p) else {
        return out;
    };
    let r = kernel.len() / 2;
    blur_range(p, kernel, &mut out, lo.saturating_sub(r), (hi + r).min(p.len() - 1));
    out
}

fn support(p: &[f64]) -> Option<(usize, usize)> {
    let lo = p.iter().position(|&v| v != 0.0)?;
    let hi = p.iter().rposition(|&v| v != 0.0)?;
    Some((lo, hi))
}

/// Reflective-border convolution for outputs `lo..=hi`.
fn blur_range(src: &[f64], kernel: &[f64], dst: &mut [f64], lo: usize, hi: usize) {
    let n = src.len() as i64;
    let r = (kernel.len() / 2) as i64;
    for i in lo as i64..=hi as i64 {
        let mut acc = 0.0;
        if i >= r && i + r < n {
            let window = &src[(i - r) as usize..=(i + r) as usize];
            for (w, s) in kernel.iter().zip(window) {
                acc += w * s;
            }
        } else {
            for (k, w) in kernel.iter().enumerate() {
                acc += w * src[reflect(i + k as i64 - r, n)];
            }
        }
        dst[i as usize] = acc;
    }
}

/// Separable blur of a row-major `rows × cols` grid, confined to the
/// bounding box of the nonzero cells grown by the kernel radii.
fn blur_joint(p: &mut [f64], rows: usize, cols: usize, k_rows: &[f64], k_cols: &[f64]) {
    let mut row_lo = usize::MAX;
    let mut row_hi = 0;
    let mut col_lo = usize::MAX;
    let mut col_hi = 0;
    for r in 0..rows {
        if let Some((a, b)) = support(&p[r * cols..(r + 1) * cols]) {
            row_lo = row_lo.min(r);
            row_hi = r;
            col_lo = col_lo.min(a);
            col_hi = col_hi.max(b);
        }
    }
    if row_lo == usize::MAX {
        return;
    }
    let rc = k_cols.len() / 2;
    let rr = k_rows.len() / 2;
    let (out_col_lo, out_col_hi) = (col_lo.saturating_sub(rc), (col_hi + rc).min(cols - 1));
    let (out_row_lo, out_row_hi) = (row_lo.saturating_sub(rr), (row_hi + rr).min(rows - 1));

    if k_cols.len() > 1 {
        let mut line = vec![0.0; cols];
        for r in row_lo..=row_hi {
            let row = &mut p[r * cols..(r + 1) * cols];
            if support(row).is_none() {
                continue;
            }
            line.copy_from_slice(row);
            blur_range(&line, k_cols, row, out_col_lo, out_col_hi);
        }
    }
    if k_rows.len() > 1 {
        let mut column = vec![0.0; rows];
        let mut blurred = vec![0.0; rows];
        for c in out_col_lo..=out_col_hi {
            for r in row_lo..=row_hi {
                column[r] = p[r * cols + c];
            }
            blur_range(&column, k_rows, &mut blurred, out_row_lo, out_row_hi);
            for r in out_row_lo..=out_row_hi {
                p[r * cols + c] = blurred[r];
            }
        }
    }
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(i) = p.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(format!("probability {i} is {}", p[i])));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {s}, not 1")));
    }
    Ok(entropy_unchecked(p))
}

#[inline]
fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Per-scene outcome of an objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneScore {
    /// Valid projections.
    pub n: u64,
    pub mi: f64,
}

pub fn score_scene(
    pair: &ScenePair,
    theta: &ExtrinsicParams,
    k: &Intrinsics,
    config: &MiConfig,
) -> SceneScore {
    let h = build_histograms_with(pair, theta, k, config.sampling);
    let mi = if h.n == 0 || (h.n as usize) < config.min_points {
        0.0
    } else {
        estimate_probabilities(&h, config.bandwidth).mutual_information()
    };
    SceneScore { n: h.n, mi }
}

/// MI of one scene; 0 when fewer than `config.min_points` points project.
pub fn evaluate_mi(pair: &ScenePair, theta: &ExtrinsicParams, k: &Intrinsics, config: &MiConfig) -> f64 {
    score_scene(pair, theta, k, config).mi
}

/// Per-scene scores in input order.
pub fn score_scenes(
    pairs: &[ScenePair],
    theta: &ExtrinsicParams,
    k: &Intrinsics,
    config: &MiConfig,
) -> Vec<SceneScore> {
    if config.parallel && pairs.len() > 1 {
        pairs
            .par_iter()
            .map(|p| score_scene(p, theta, k, config))
            .collect()
    } else {
        pairs.iter().map(|p| score_scene(p, theta, k, config)).collect()
    }
}

/// Mean per-scene MI, reduced in input order.
pub fn evaluate_mi_multi(
    pairs: &[ScenePair],
    theta: &ExtrinsicParams,
    k: &Intrinsics,
    config: &MiConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("at least one scene is required"));
    }
    let scores = score_scenes(pairs, theta, k, config);
    Ok(scores.iter().map(|s| s.mi).sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_map::AccumulatedEventMap;
    use crate::pointcloud::{LidarPoint, PointCloudScene};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact() -> MiConfig {
        MiConfig {
            bandwidth: Bandwidth::Fixed {
                intensity: 0.0,
                activity: 0.0,
            },
            min_points: 1,
            ..MiConfig::default()
        }
    }

    /// Points on the optical axis plane z = 1 mapping one-to-one onto pixels
    /// of a `w × h` map under identity extrinsics with unit focal length.
    fn grid_pair(w: u32, h: u32, intensity: impl Fn(u32, u32) -> u8, activity: impl Fn(u32, u32) -> f64) -> (ScenePair, Intrinsics) {
        let k = Intrinsics::pinhole(1.0, 1.0, 0.0, 0.0, w, h);
        let mut map = AccumulatedEventMap::zeros(w, h);
        let mut pts = Vec::new();
        for y in 0..h {
            for x in 0..w {
                map.set(x, y, activity(x, y));
                pts.push(LidarPoint {
                    position: Vector3::new(x as f64, y as f64, 1.0),
                    intensity: intensity(x, y),
                });
            }
        }
        let cloud = PointCloudScene::new("grid", pts).unwrap();
        (ScenePair { cloud, map }, k)
    }

    #[test]
    fn hand_enumerated_histograms() {
        let k = Intrinsics::pinhole(1.0, 1.0, 0.0, 0.0, 10, 10);
        let pts = [(1.0, 5), (2.0, 5), (3.0, 9)]
            .iter()
            .map(|&(x, i)| LidarPoint {
                position: Vector3::new(x, 1.0, 1.0),
                intensity: i,
            })
            .collect();
        let pair = ScenePair {
            cloud: PointCloudScene::new("s", pts).unwrap(),
            map: AccumulatedEventMap::zeros(10, 10),
        };
        let h = build_histograms(&pair, &ExtrinsicParams::identity(), &k);
        assert_eq!(h.n, 3);
        assert_eq!((h.intensity[5], h.intensity[9]), (2, 1));
        assert_eq!(h.activity[0], 3);
        assert_eq!((h.joint_at(5, 0), h.joint_at(9, 0)), (2, 1));
        assert_eq!(h.intensity.iter().sum::<u64>(), 3);
    }

    #[test]
    fn behind_camera_gives_sentinel() {
        let (mut pair, k) = grid_pair(4, 4, |x, _| x as u8, |_, _| 1.0);
        let theta = ExtrinsicParams::from_array([0.0, 0.0, -5.0, 0.0, 0.0, 0.0]);
        assert_eq!(build_histograms(&pair, &theta, &k).n, 0);
        assert_eq!(evaluate_mi(&pair, &theta, &k, &exact()), 0.0);
        pair.cloud = pair.cloud.clone().with_scene_id("renamed");
        assert_eq!(evaluate_mi(&pair, &theta, &k, &MiConfig::default()), 0.0);
    }

    #[test]
    fn marginals_match_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = JointHistogram::new();
        for _ in 0..5000 {
            h.add(rng.random_range(0..256), rng.random_range(0..128));
        }
        for l in 0..256 {
            let row: u64 = (0..128).map(|e| h.joint_at(l, e)).sum();
            assert_eq!(row, h.intensity[l]);
        }
        for e in 0..128 {
            let col: u64 = (0..256).map(|l| h.joint_at(l, e)).sum();
            assert_eq!(col, h.activity[e]);
        }
    }

    #[test]
    fn delta_with_zero_bandwidth() {
        let mut h = JointHistogram::new();
        for _ in 0..10 {
            h.add(40, 7);
        }
        let p = estimate_probabilities(&h, Bandwidth::Fixed { intensity: 0.0, activity: 0.0 });
        assert_eq!(p.intensity[40], 1.0);
        assert_eq!(p.activity[7], 1.0);
        assert_eq!(p.joint[40 * 128 + 7], 1.0);
        assert_eq!(p.mutual_information(), 0.0);
    }

    #[test]
    fn uniform_histogram_stays_uniform() {
        let mut h = JointHistogram::with_bins(16, 8);
        for l in 0..16 {
            for e in 0..8 {
                h.add(l, e);
                h.add(l, e);
            }
        }
        for bw in [0.7, 2.0, 5.0] {
            let p = estimate_probabilities(&h, Bandwidth::Fixed { intensity: bw, activity: bw });
            assert!(p.intensity.iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-9));
            assert!(p.activity.iter().all(|v| (v - 1.0 / 8.0).abs() < 1e-9));
            assert!(p.joint.iter().all(|v| (v - 1.0 / 128.0).abs() < 1e-9));
        }
    }

    /// Textbook Silverman on the raw sample: sorted values, `n − 1` variance
    /// and linearly interpolated quartiles.
    fn silverman_oracle(sample: &mut [f64]) -> f64 {
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let q = |p: f64| {
            let h = (n - 1.0) * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sample.len() - 1);
            sample[lo] + (h - lo as f64) * (sample[hi] - sample[lo])
        };
        let a = var.sqrt().min((q(0.75) - q(0.25)) / 1.34);
        0.9 * a * n.powf(-0.2)
    }

    #[test]
    fn silverman_matches_formula_on_two_bin_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0u64; 256];
        let mut sample = Vec::new();
        for _ in 0..1000 {
            let v = if rng.random_bool(0.35) { 40 } else { 200 };
            counts[v] += 1;
            sample.push(v as f64);
        }
        let got = silverman_bandwidth(&counts);
        let want = silverman_oracle(&mut sample);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn silverman_degenerate_samples() {
        let mut counts = vec![0u64; 8];
        counts[3] = 50;
        assert_eq!(silverman_bandwidth(&counts), 0.0);
        counts[3] = 1;
        assert_eq!(silverman_bandwidth(&counts), 0.0);
        // zero IQR but positive spread falls back to the standard deviation
        let mut counts = vec![0u64; 8];
        counts[3] = 100;
        counts[7] = 2;
        assert!(silverman_bandwidth(&counts) > 0.0);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[1.0]).unwrap(), 0.0);
        assert!((entropy(&[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let want = -0.25 * 0.25f64.ln() - 0.75 * 0.75f64.ln();
        assert!((entropy(&[0.25, 0.75]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.562335).abs() < 1e-6);
        assert!(entropy(&[1.5, -0.5]).is_err());
        assert!(entropy(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn perfect_dependence_gives_marginal_entropy() {
        let (pair, k) = grid_pair(16, 16, |x, y| ((x + 16 * y) % 100) as u8, |x, y| ((x + 16 * y) % 100) as f64);
        let mi = evaluate_mi(&pair, &ExtrinsicParams::identity(), &k, &exact());
        let h = build_histograms(&pair, &ExtrinsicParams::identity(), &k);
        let p: Vec<f64> = h.intensity.iter().map(|&c| c as f64 / h.n as f64).collect();
        assert!((mi - entropy(&p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn independent_variables_give_small_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (w, h) = (400u32, 250u32);
        let intens: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..8)).collect();
        let act: Vec<f64> = (0..w * h).map(|_| rng.random_range(0..8) as f64).collect();
        let (pair, k) = grid_pair(w, h, |x, y| intens[(y * w + x) as usize], |x, y| act[(y * w + x) as usize]);
        let mi = evaluate_mi(&pair, &ExtrinsicParams::identity(), &k, &exact());
        assert!(mi < 0.01, "{mi}");
    }

    #[test]
    fn multi_scene_is_mean() {
        let (pair, k) = grid_pair(12, 12, |x, y| ((x * y) % 9) as u8, |x, _| (x % 5) as f64);
        let id = ExtrinsicParams::identity();
        let one = evaluate_mi(&pair, &id, &k, &exact());
        assert_eq!(evaluate_mi_multi(std::slice::from_ref(&pair), &id, &k, &exact()).unwrap(), one);
        let two = evaluate_mi_multi(&[pair.clone(), pair], &id, &k, &exact()).unwrap();
        assert!((two - one).abs() < 1e-15);
        assert!(evaluate_mi_multi(&[], &id, &k, &exact()).is_err());
    }

    #[test]
    fn below_min_points_is_sentinel() {
        let (pair, k) = grid_pair(5, 5, |x, _| x as u8, |x, _| x as f64);
        let id = ExtrinsicParams::identity();
        assert_eq!(evaluate_mi(&pair, &id, &k, &MiConfig::default()), 0.0);
        assert!(evaluate_mi(&pair, &id, &k, &exact()) > 0.0);
    }

    #[test]
    fn nearest_sampling_rounds_coordinates() {
        let (pair, k) = grid_pair(8, 8, |x, _| x as u8 * 10, |x, _| x as f64 * 3.0);
        let shifted = ExtrinsicParams::from_array([0.4, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let h = build_histograms_with(&pair, &shifted, &k, Sampling::Nearest);
        // every point still reads its own cell
        assert_eq!(h.n, 64);
        assert_eq!((h.joint_at(0, 0), h.joint_at(10, 3)), (8, 8));
    }
}
