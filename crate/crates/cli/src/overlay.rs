use l2e_core::event_map::MAX_ACTIVITY;
use l2e_core::geometry::Projector;
use l2e_core::{ExtrinsicParams, Intrinsics, ScenePair};

pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[u8; 3]>,
    /// Lidar points drawn.
    pub overlaid: usize,
}

impl Image {
    /// Binary portable pixmap.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Fully saturated hue from blue (0) to red (255); never gray, so overlay
/// pixels stay distinguishable from the event map.
pub fn intensity_color(intensity: u8) -> [u8; 3] {
    let h = (255 - intensity) as f64 / 255.0 * 4.0;
    let x = ((1.0 - (h % 2.0 - 1.0).abs()) * 255.0).round() as u8;
    match h as u32 {
        0 => [255, x, 0],
        1 => [x, 255, 0],
        2 => [0, 255, x],
        _ => [0, x, 255],
    }
}

/// Event activity as gray, then every in-image lidar point at its nearest
/// pixel, colored by intensity.
pub fn render(pair: &ScenePair, theta: &ExtrinsicParams, k: &Intrinsics) -> Image {
    let map = &pair.map;
    let (w, h) = (map.width(), map.height());
    let mut pixels: Vec<[u8; 3]> = map
        .values()
        .iter()
        .map(|&v| {
            let g = (v / MAX_ACTIVITY as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    let projector = Projector::new(theta, k);
    let mut overlaid = 0;
    for p in pair.cloud.points() {
        let px = projector.project(&p.position);
        if !px.valid {
            continue;
        }
        let x = (px.u.round() as u32).min(w - 1);
        let y = (px.v.round() as u32).min(h - 1);
        pixels[(y * w + x) as usize] = intensity_color(p.intensity);
        overlaid += 1;
    }
    Image {
        width: w,
        height: h,
        pixels,
        overlaid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_are_never_gray() {
        for i in 0..=255u8 {
            let [r, g, b] = intensity_color(i);
            assert!(!(r == g && g == b), "{i}");
        }
        assert_eq!(intensity_color(255), [255, 0, 0]);
        assert_eq!(intensity_color(0), [0, 0, 255]);
    }
}
