//! End-to-end calibration: maximize the mean MI over scenes.

use crate::error::{Error, Result};
use crate::geometry::{ExtrinsicParams, Intrinsics};
use crate::mi::{evaluate_mi_multi, MiConfig};
use crate::optimizer::{maximize_with_observer, Bounds, IterationReport, OptimizeOptions, OptimizeResult};
use crate::pointcloud::ScenePair;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationConfig {
    pub mi: MiConfig,
    pub optimize: OptimizeOptions,
}

pub fn calibrate(
    pairs: &[ScenePair],
    k: &Intrinsics,
    seed: &ExtrinsicParams,
    bounds: &Bounds,
    config: &CalibrationConfig,
) -> Result<OptimizeResult> {
    calibrate_with_observer(pairs, k, seed, bounds, config, |_| {})
}

/// [`calibrate`] with a callback after every optimizer iteration.
pub fn calibrate_with_observer<O>(
    pairs: &[ScenePair],
    k: &Intrinsics,
    seed: &ExtrinsicParams,
    bounds: &Bounds,
    config: &CalibrationConfig,
    observer: O,
) -> Result<OptimizeResult>
where
    O: FnMut(&IterationReport),
{
    if pairs.is_empty() {
        return Err(Error::invalid("at least one scene is required"));
    }
    let objective = |x: &[f64; 6]| {
        evaluate_mi_multi(pairs, &ExtrinsicParams::from_array(*x), k, &config.mi)
            .expect("scene list checked non-empty")
    };
    maximize_with_observer(objective, seed, bounds, &config.optimize, observer)
}
