//! Accumulated event maps.
//!
//! Events from a static scene are counted per pixel regardless of polarity
//! over a fixed window, clipped to `[0, MAX_ACTIVITY]` and then smoothed with
//! a separable Gaussian.

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;

/// Upper clip for per-pixel event counts.
pub const MAX_ACTIVITY: u8 = 127;

/// Default accumulation window in seconds.
pub const DEFAULT_DURATION_S: f64 = 3.0;

/// Default smoothing width in pixels.
pub const DEFAULT_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds since recording start.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

/// Row-major grid of event activity.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedEventMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl AccumulatedEventMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        self.values[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Bilinear activity at a sub-pixel coordinate. Pixel centers sit at
    /// integer coordinates.
    ///
    /// Panics if `p` lies outside the map; callers filter on `p.valid`.
    #[inline]
    pub fn sample(&self, p: PixelCoord) -> f64 {
        assert!(
            p.u >= 0.0 && p.v >= 0.0 && p.u < self.width as f64 && p.v < self.height as f64,
            "sample outside map: ({}, {})",
            p.u,
            p.v
        );
        let x0 = p.u.floor();
        let y0 = p.v.floor();
        let fx = p.u - x0;
        let fy = p.v - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        let w = self.width as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(self.height as usize - 1);
        let row0 = &self.values[y0 * w..];
        let row1 = &self.values[y1 * w..];
        let top = row0[x0] + fx * (row0[x1] - row0[x0]);
        let bottom = row1[x0] + fx * (row1[x1] - row1[x0]);
        top + fy * (bottom - top)
    }

    /// Value of the nearest cell.
    #[inline]
    pub fn sample_nearest(&self, p: PixelCoord) -> f64 {
        let x = (p.u.round() as u32).min(self.width - 1);
        let y = (p.v.round() as u32).min(self.height - 1);
        self.get(x, y)
    }
}

/// Streaming accumulator of clipped per-pixel event counts.
#[derive(Debug, Clone)]
pub struct EventAccumulator {
    width: u32,
    height: u32,
    limit_us: f64,
    counts: Vec<u8>,
    seen: usize,
}

impl EventAccumulator {
    pub fn new(width: u32, height: u32, duration_limit_s: f64) -> Result<Self> {
        if !(duration_limit_s > 0.0) {
            return Err(Error::invalid(format!(
                "duration limit must be positive, got {duration_limit_s}"
            )));
        }
        Ok(Self {
            width,
            height,
            limit_us: duration_limit_s * 1e6,
            counts: vec![0; width as usize * height as usize],
            seen: 0,
        })
    }

    pub fn push(&mut self, event: &Event) -> Result<()> {
        let index = self.seen;
        self.seen += 1;
        if event.x >= self.width || event.y >= self.height {
            return Err(Error::MalformedInput {
                index,
                reason: format!(
                    "event at ({}, {}) outside {}x{} sensor",
                    event.x, event.y, self.width, self.height
                ),
            });
        }
        if (event.t as f64) < self.limit_us {
            let c = &mut self.counts[event.y as usize * self.width as usize + event.x as usize];
            *c = (*c + 1).min(MAX_ACTIVITY);
        }
        Ok(())
    }

    /// Cell-wise clipped sum of two partial accumulations.
    pub fn merge(&mut self, other: &EventAccumulator) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::invalid("cannot merge accumulators of different size"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a = a.saturating_add(*b).min(MAX_ACTIVITY);
        }
        self.seen += other.seen;
        Ok(())
    }

    pub fn finish(self) -> AccumulatedEventMap {
        AccumulatedEventMap {
            width: self.width,
            height: self.height,
            values: self.counts.into_iter().map(f64::from).collect(),
        }
    }
}

/// Counts events per pixel (polarity ignored) with `t` below the duration
/// limit, clipping each cell at [`MAX_ACTIVITY`].
pub fn accumulate<'a, I>(
    events: I,
    width: u32,
    height: u32,
    duration_limit_s: f64,
) -> Result<AccumulatedEventMap>
where
    I: IntoIterator<Item = &'a Event>,
{
    let mut acc = EventAccumulator::new(width, height, duration_limit_s)?;
    for e in events {
        acc.push(e)?;
    }
    Ok(acc.finish())
}

/// Normalized samples of a Gaussian on `[-⌈3σ⌉, ⌈3σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
#[inline]
pub(crate) fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Convolves `src` (strided) into `dst` with reflective borders.
pub(crate) fn convolve_line(
    src: &[f64],
    n: usize,
    stride: usize,
    kernel: &[f64],
    dst: &mut [f64],
) {
    let r = (kernel.len() / 2) as i64;
    let n_i = n as i64;
    for i in 0..n_i {
        let mut acc = 0.0;
        if i >= r && i + r < n_i {
            let base = (i - r) as usize;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * src[(base + k) * stride];
            }
        } else {
            for (k, w) in kernel.iter().enumerate() {
                acc += w * src[reflect(i + k as i64 - r, n_i) * stride];
            }
        }
        dst[i as usize * stride] = acc;
    }
}

/// Separable Gaussian smoothing with radius `⌈3σ⌉` and reflective borders.
/// `sigma == 0` returns the input unchanged.
pub fn smooth(map: &AccumulatedEventMap, sigma: f64) -> Result<AccumulatedEventMap> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (map.width as usize, map.height as usize);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        convolve_line(
            &map.values[y * w..(y + 1) * w],
            w,
            1,
            &kernel,
            &mut tmp[y * w..(y + 1) * w],
        );
    }
    let mut out = vec![0.0; w * h];
    let mut column = vec![0.0; h];
    let mut column_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = tmp[y * w + x];
        }
        convolve_line(&column, h, 1, &kernel, &mut column_out);
        for y in 0..h {
            out[y * w + x] = column_out[y];
        }
    }
    Ok(AccumulatedEventMap {
        width: map.width,
        height: map.height,
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: u64, x: u32, y: u32, positive: bool) -> Event {
        Event {
            t,
            x,
            y,
            polarity: if positive {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        }
    }

    #[test]
    fn counts_ignore_polarity() {
        let events: Vec<_> = (0..5).map(|i| ev(i * 10, 10, 20, i % 2 == 0)).collect();
        let map = accumulate(&events, 64, 32, 3.0).unwrap();
        assert_eq!(map.get(10, 20), 5.0);
        assert_eq!(map.total(), 5.0);
    }

    #[test]
    fn clips_at_127() {
        let events: Vec<_> = (0..200).map(|i| ev(i, 3, 4, true)).collect();
        let map = accumulate(&events, 8, 8, 3.0).unwrap();
        assert_eq!(map.get(3, 4), 127.0);
    }

    #[test]
    fn empty_stream_gives_zero_map() {
        let map = accumulate(&[], 8, 8, 3.0).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn events_after_window_are_dropped() {
        let events = [ev(2_999_999, 1, 1, true), ev(3_000_000, 1, 1, true)];
        let map = accumulate(&events, 4, 4, 3.0).unwrap();
        assert_eq!(map.get(1, 1), 1.0);
    }

    #[test]
    fn out_of_bounds_names_record() {
        let events = [ev(0, 1, 1, true), ev(0, 1, 1, false), ev(0, 4, 0, true)];
        match accumulate(&events, 4, 4, 3.0) {
            Err(Error::MalformedInput { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(EventAccumulator::new(4, 4, 0.0).is_err());
    }

    #[test]
    fn merge_is_clipped_sum() {
        let mut a = EventAccumulator::new(2, 1, 3.0).unwrap();
        let mut b = EventAccumulator::new(2, 1, 3.0).unwrap();
        for i in 0..100 {
            a.push(&ev(i, 0, 0, true)).unwrap();
            b.push(&ev(i, 0, 0, true)).unwrap();
        }
        b.push(&ev(0, 1, 0, true)).unwrap();
        a.merge(&b).unwrap();
        let map = a.finish();
        assert_eq!(map.values(), &[127.0, 1.0]);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let map = AccumulatedEventMap::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap();
        assert_eq!(smooth(&map, 0.0).unwrap(), map);
        assert!(smooth(&map, -1.0).is_err());
    }

    #[test]
    fn impulse_matches_dense_convolution() {
        let n = 21u32;
        let mut map = AccumulatedEventMap::zeros(n, n);
        map.set(10, 10, 127.0);
        let s = smooth(&map, 1.0).unwrap();

        // dense 2D oracle with an independently built kernel
        let g: Vec<f64> = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).collect();
        let norm: f64 = g.iter().sum();
        let g: Vec<f64> = g.iter().map(|v| v / norm).collect();
        for y in 0..n as i32 {
            for x in 0..n as i32 {
                let mut acc = 0.0;
                for dy in -3..=3 {
                    for dx in -3..=3 {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx == 10 && sy == 10 {
                            acc += 127.0 * g[(dx + 3) as usize] * g[(dy + 3) as usize];
                        }
                    }
                }
                assert!((s.get(x as u32, y as u32) - acc).abs() < 1e-12);
            }
        }
        assert!((s.get(10, 10) - 127.0 * g[3] * g[3]).abs() < 1e-12);
    }

    #[test]
    fn uniform_is_fixed_point() {
        let map = AccumulatedEventMap::from_values(7, 5, vec![42.0; 35]).unwrap();
        for sigma in [0.5, 1.0, 2.5, 6.0] {
            let s = smooth(&map, sigma).unwrap();
            assert!(s.values().iter().all(|v| (v - 42.0).abs() < 1e-9));
        }
    }

    #[test]
    fn bilinear_sampling() {
        let mut map = AccumulatedEventMap::zeros(30, 30);
        map.set(10, 20, 7.0);
        let at = |u, v| map.sample(PixelCoord { u, v, valid: true });
        assert_eq!(at(10.0, 20.0), 7.0);

        let mut m = AccumulatedEventMap::zeros(2, 1);
        m.set(1, 0, 100.0);
        assert_eq!(m.sample(PixelCoord { u: 0.5, v: 0.0, valid: true }), 50.0);

        // hand-built 3x3, scalar bilinear at (1.25, 0.75)
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let m = AccumulatedEventMap::from_values(3, 3, vals).unwrap();
        let (c00, c10, c01, c11) = (2.0, 3.0, 5.0, 6.0);
        let expected = c00 * 0.75 * 0.25 + c10 * 0.25 * 0.25 + c01 * 0.75 * 0.75 + c11 * 0.25 * 0.75;
        assert!((m.sample(PixelCoord { u: 1.25, v: 0.75, valid: true }) - expected).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn sampling_outside_panics() {
        let map = AccumulatedEventMap::zeros(4, 4);
        map.sample(PixelCoord { u: 4.0, v: 0.0, valid: false });
    }

    fn small_map() -> impl Strategy<Value = AccumulatedEventMap> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            prop::collection::vec(0u8..=127, (w * h) as usize).prop_map(move |v| {
                AccumulatedEventMap::from_values(w, h, v.into_iter().map(f64::from).collect())
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn smoothing_preserves_mass(map in small_map(), sigma in 0.1f64..5.0) {
            let s = smooth(&map, sigma).unwrap();
            let (a, b) = (map.total(), s.total());
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0));
            prop_assert!(s.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn smoothing_commutes_with_scaling(map in small_map(), sigma in 0.1f64..3.0, c in 0.0f64..10.0) {
            let a = smooth(&map.scaled(c), sigma).unwrap();
            let b = smooth(&map, sigma).unwrap().scaled(c);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn accumulate_is_permutation_invariant(
            raw in prop::collection::vec((0u64..4_000_000, 0u32..6, 0u32..5, any::<bool>()), 0..300),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let events: Vec<_> = raw.iter().map(|&(t, x, y, p)| ev(t, x, y, p)).collect();
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                accumulate(&events, 6, 5, 3.0).unwrap(),
                accumulate(&shuffled, 6, 5, 3.0).unwrap()
            );
            // monotone under additional events
            let mut more = events.clone();
            more.push(ev(0, 2, 2, true));
            let before = accumulate(&events, 6, 5, 3.0).unwrap();
            let after = accumulate(&more, 6, 5, 3.0).unwrap();
            prop_assert!(before.values().iter().zip(after.values()).all(|(a, b)| b >= a));
        }

        #[test]
        fn sampling_is_lipschitz(map in small_map(), u in 0.0f64..1.0, v in 0.0f64..1.0, du in -1.0f64..1.0, dv in -1.0f64..1.0) {
            let (w, h) = (map.width() as f64, map.height() as f64);
            let p = PixelCoord { u: u * (w - 1e-9), v: v * (h - 1e-9), valid: true };
            let q = PixelCoord { u: p.u + du, v: p.v + dv, valid: true };
            prop_assume!(q.u >= 0.0 && q.v >= 0.0 && q.u < w && q.v < h);
            let norm = (du * du + dv * dv).sqrt();
            prop_assume!(norm <= 1.0);
            let bound = 2.0 * map.max() * norm;
            prop_assert!((map.sample(p) - map.sample(q)).abs() <= bound + 1e-9);
        }
    }
}
