//! Repeatability and scaling studies built on [`calibrate`](crate::calibrate::calibrate).

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibrate::{calibrate, CalibrationConfig};
use crate::error::{Error, Result};
use crate::geometry::{ExtrinsicParams, Intrinsics};
use crate::io::format_f64;
use crate::mi::evaluate_mi_multi;
use crate::optimizer::{Bounds, OptimizeResult};
use crate::pointcloud::ScenePair;

pub const AXES: [&str; 6] = ["x", "y", "z", "v1", "v2", "v3"];

/// `m` scenes drawn without replacement, kept in their original order.
pub fn subsample(pairs: &[ScenePair], m: usize, rng_seed: u64) -> Result<Vec<ScenePair>> {
    if m == 0 || m > pairs.len() {
        return Err(Error::invalid(format!(
            "cannot draw {m} of {} scenes",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = sample(&mut rng, pairs.len(), m).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Seed perturbation and search box for repeated calibrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedNoise {
    /// Half-width of the uniform seed noise, meters.
    pub translation: f64,
    /// Half-width of the uniform seed noise, radians.
    pub rotation: f64,
    /// Box half-widths around each perturbed seed.
    pub bounds_translation: f64,
    pub bounds_rotation: f64,
}

impl Default for SeedNoise {
    fn default() -> Self {
        Self {
            translation: 0.1,
            rotation: 0.1,
            bounds_translation: 0.5,
            bounds_rotation: 0.5,
        }
    }
}

impl SeedNoise {
    pub fn perturb(&self, center: &ExtrinsicParams, rng: &mut impl Rng) -> ExtrinsicParams {
        let mut x = center.to_array();
        for (i, v) in x.iter_mut().enumerate() {
            let half = if i < 3 { self.translation } else { self.rotation };
            if half > 0.0 {
                *v += rng.random_range(-half..=half);
            }
        }
        ExtrinsicParams::from_array(x)
    }

    pub fn bounds(&self, seed: &ExtrinsicParams) -> Result<Bounds> {
        Bounds::around(seed, self.bounds_translation, self.bounds_rotation)
    }
}

/// Per-axis mean and sample standard deviation (`n − 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl Dispersion {
    pub fn of(samples: &[[f64; 6]]) -> Self {
        let n = samples.len() as f64;
        let mean = std::array::from_fn(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n);
        let std = std::array::from_fn(|i: usize| {
            if samples.len() < 2 {
                return 0.0;
            }
            let ss: f64 = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub seed: ExtrinsicParams,
    pub result: OptimizeResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRobustnessReport {
    pub reference: ExtrinsicParams,
    pub runs: Vec<CalibrationRun>,
    pub dispersion: Dispersion,
}

impl NoiseRobustnessReport {
    /// Runs whose estimate is within the given distances of the reference on
    /// every axis.
    pub fn successes(&self, translation_tol: f64, rotation_tol: f64) -> usize {
        let r = self.reference.to_array();
        self.runs
            .iter()
            .filter(|run| {
                let t = run.result.theta_hat.to_array();
                (0..6).all(|i| {
                    let tol = if i < 3 { translation_tol } else { rotation_tol };
                    (t[i] - r[i]).abs() <= tol
                })
            })
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed_x,seed_y,seed_z,seed_v1,seed_v2,seed_v3,x,y,z,v1,v2,v3,mi,iterations,evaluations,converged,wall_time_s\n");
        for (i, run) in self.runs.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(run.seed.to_array().map(format_f64));
            row.extend(run.result.theta_hat.to_array().map(format_f64));
            row.push(format_f64(run.result.objective_value));
            row.push(run.result.iterations.to_string());
            row.push(run.result.objective_evaluations.to_string());
            row.push(run.result.converged.to_string());
            row.push(format_f64(run.result.wall_time));
            out += &row.join(",");
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = format!("noise robustness: {} runs\n", self.runs.len());
        s += &dispersion_table(&self.dispersion);
        s
    }
}

fn dispersion_table(d: &Dispersion) -> String {
    let mut s = String::from("axis      mean                  std\n");
    for i in 0..6 {
        let _ = writeln!(s, "{:<4}  {:>20.12}  {:>20.12}", AXES[i], d.mean[i], d.std[i]);
    }
    s
}

/// Calibrates `runs` times from seeds drawn uniformly around `reference`.
pub fn noise_robustness(
    pairs: &[ScenePair],
    k: &Intrinsics,
    reference: &ExtrinsicParams,
    runs: usize,
    noise: &SeedNoise,
    config: &CalibrationConfig,
    rng_seed: u64,
) -> Result<NoiseRobustnessReport> {
    if runs == 0 {
        return Err(Error::invalid("at least one run is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(runs);
    for _ in 0..runs {
        let seed = noise.perturb(reference, &mut rng);
        let result = calibrate(pairs, k, &seed, &noise.bounds(&seed)?, config)?;
        out.push(CalibrationRun { seed, result });
    }
    let estimates: Vec<_> = out.iter().map(|r| r.result.theta_hat.to_array()).collect();
    Ok(NoiseRobustnessReport {
        reference: *reference,
        dispersion: Dispersion::of(&estimates),
        runs: out,
    })
}

/// Least-squares line `y = slope · x + intercept` and its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    /// Needs at least two distinct `x` values.
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if !(sxx > 0.0) {
            return Err(Error::invalid("a line fit needs two distinct x values"));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Ok(Self {
            slope,
            intercept,
            r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    /// Scene count and median seconds per objective evaluation.
    pub timings: Vec<(usize, f64)>,
    pub fit: LinearFit,
}

impl ScalingReport {
    /// Time at `a` scenes over time at `b` scenes.
    pub fn ratio(&self, a: usize, b: usize) -> Option<f64> {
        let t = |m| self.timings.iter().find(|(c, _)| *c == m).map(|(_, t)| *t);
        Some(t(a)? / t(b)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenes,seconds_per_evaluation\n");
        for (m, t) in &self.timings {
            let _ = writeln!(out, "{m},{}", format_f64(*t));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "scene scaling: slope {:.6e} s/scene, intercept {:.6e} s, R^2 {:.6}\n",
            self.fit.slope, self.fit.intercept, self.fit.r_squared
        )
    }
}

/// Times one objective evaluation over the first `m` scenes for each `m`,
/// taking the median of `repetitions` runs after one warm-up.
pub fn scene_scaling(
    pairs: &[ScenePair],
    k: &Intrinsics,
    theta: &ExtrinsicParams,
    counts: &[usize],
    repetitions: usize,
    config: &CalibrationConfig,
) -> Result<ScalingReport> {
    if repetitions == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let mut timings = Vec::with_capacity(counts.len());
    for &m in counts {
        if m == 0 || m > pairs.len() {
            return Err(Error::invalid(format!(
                "scene count {m} outside 1..={}",
                pairs.len()
            )));
        }
        let subset = &pairs[..m];
        evaluate_mi_multi(subset, theta, k, &config.mi)?;
        let mut samples: Vec<f64> = (0..repetitions)
            .map(|_| {
                let start = Instant::now();
                let v = evaluate_mi_multi(subset, theta, k, &config.mi);
                let t = start.elapsed().as_secs_f64();
                std::hint::black_box(v).map(|_| t)
            })
            .collect::<Result<_>>()?;
        samples.sort_by(f64::total_cmp);
        timings.push((m, samples[samples.len() / 2]));
    }
    let points: Vec<_> = timings.iter().map(|&(m, t)| (m as f64, t)).collect();
    Ok(ScalingReport {
        fit: LinearFit::fit(&points)?,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetStudy {
    pub scene_count: usize,
    pub runs: Vec<CalibrationRun>,
    pub dispersion: Dispersion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCountReport {
    pub studies: Vec<SubsetStudy>,
}

impl SceneCountReport {
    pub fn study(&self, scene_count: usize) -> Option<&SubsetStudy> {
        self.studies.iter().find(|s| s.scene_count == scene_count)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenes");
        for a in AXES {
            let _ = write!(out, ",mean_{a}");
        }
        for a in AXES {
            let _ = write!(out, ",std_{a}");
        }
        out.push('\n');
        for s in &self.studies {
            out += &s.scene_count.to_string();
            for v in s.dispersion.mean.iter().chain(&s.dispersion.std) {
                out.push(',');
                out += &format_f64(*v);
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("scene-count variance\n");
        for study in &self.studies {
            let _ = writeln!(s, "{} scenes, {} runs", study.scene_count, study.runs.len());
            s += &dispersion_table(&study.dispersion);
        }
        s
    }
}

/// For each size, calibrates `repeats` times on scene subsets drawn without
/// replacement, each from its own perturbed seed.
pub fn scene_count_variance(
    pairs: &[ScenePair],
    k: &Intrinsics,
    reference: &ExtrinsicParams,
    sizes: &[usize],
    repeats: usize,
    noise: &SeedNoise,
    config: &CalibrationConfig,
    rng_seed: u64,
) -> Result<SceneCountReport> {
    if repeats == 0 {
        return Err(Error::invalid("at least one repeat is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut studies = Vec::with_capacity(sizes.len());
    for &m in sizes {
        if m == 0 || m > pairs.len() {
            return Err(Error::invalid(format!(
                "subset size {m} outside 1..={}",
                pairs.len()
            )));
        }
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut picked = sample(&mut rng, pairs.len(), m).into_vec();
            picked.sort_unstable();
            let subset: Vec<ScenePair> = picked.iter().map(|&i| pairs[i].clone()).collect();
            let seed = noise.perturb(reference, &mut rng);
            let result = calibrate(&subset, k, &seed, &noise.bounds(&seed)?, config)?;
            runs.push(CalibrationRun { seed, result });
        }
        let estimates: Vec<_> = runs.iter().map(|r| r.result.theta_hat.to_array()).collect();
        studies.push(SubsetStudy {
            scene_count: m,
            dispersion: Dispersion::of(&estimates),
            runs,
        });
    }
    Ok(SceneCountReport { studies })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<_> = (1..6).map(|x| (x as f64, 3.0 * x as f64 + 2.0)).collect();
        let fit = LinearFit::fit(&pts).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(LinearFit::fit(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn r_squared_matches_hand_value() {
        // Sxx = 5, Sxy = 3, SS_tot = 5, so slope 0.6, intercept 0.6, SS_res 3.2
        let pts = [(0.0, 1.0), (1.0, 0.0), (2.0, 3.0), (3.0, 2.0)];
        let fit = LinearFit::fit(&pts).unwrap();
        assert!((fit.slope - 0.6).abs() < 1e-12);
        assert!((fit.intercept - 0.6).abs() < 1e-12);
        assert!((fit.r_squared - (1.0 - 3.2 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn dispersion_uses_sample_std() {
        let d = Dispersion::of(&[[1.0; 6], [3.0; 6]]);
        assert_eq!(d.mean, [2.0; 6]);
        assert!((d.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Dispersion::of(&[[1.0; 6]]).std, [0.0; 6]);
    }

    #[test]
    fn perturbation_stays_within_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = SeedNoise {
            translation: 0.1,
            rotation: 0.05,
            ..SeedNoise::default()
        };
        let c = ExtrinsicParams::identity();
        for _ in 0..100 {
            let p = noise.perturb(&c, &mut rng).to_array();
            assert!(p[..3].iter().all(|v| v.abs() <= 0.1));
            assert!(p[3..].iter().all(|v| v.abs() <= 0.05));
        }
    }
}
