//! On-disk formats: event and point-cloud CSV, key-value intrinsics and
//! result documents, and scene manifests.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit for bit.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_map::{self, AccumulatedEventMap, Event, EventAccumulator, Polarity};
use crate::geometry::{ExtrinsicParams, Intrinsics};
use crate::optimizer::OptimizeResult;
use crate::pointcloud::{self, PointCloudScene, RawLidarPoint, ScenePair};

pub const EVENTS_HEADER: &str = "t_us,x,y,p";
pub const CLOUD_HEADER: &str = "x,y,z,intensity";

/// Formats like C's `%.17g`.
pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp) as usize;
    strip_zeros(&format!("{v:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Splits a CSV record into exactly `N` trimmed fields.
fn fields<'a, const N: usize>(path: &Path, line_no: usize, line: &'a str) -> Result<[&'a str; N]> {
    let mut out = [""; N];
    let mut parts = line.split(',');
    for slot in out.iter_mut() {
        *slot = parts
            .next()
            .ok_or_else(|| parse_error(path, line_no, format!("expected {N} fields")))?
            .trim();
    }
    if parts.next().is_some() {
        return Err(parse_error(path, line_no, format!("expected {N} fields")));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line_no: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_error(path, line_no, format!("{name}: cannot parse `{s}`")))
}

/// Lines of a CSV file with the optional header skipped and blank lines
/// dropped, numbered from 1.
struct CsvLines<R> {
    path: PathBuf,
    header: &'static str,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Iterator for CsvLines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || (self.line_no == 1 && trimmed == self.header) {
                continue;
            }
            return Some(Ok((self.line_no, line)));
        }
    }
}

/// Streaming reader over an event CSV file.
pub struct EventReader<R> {
    lines: CsvLines<R>,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(path: impl Into<PathBuf>, reader: R) -> Self {
        Self {
            lines: CsvLines {
                path: path.into(),
                header: EVENTS_HEADER,
                lines: reader.lines(),
                line_no: 0,
            },
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        Some(parse_event(&self.lines.path, line_no, &line))
    }
}

fn parse_event(path: &Path, line_no: usize, line: &str) -> Result<Event> {
    let [t, x, y, p] = fields::<4>(path, line_no, line)?;
    let polarity = match p {
        "1" => Polarity::Positive,
        "0" => Polarity::Negative,
        other => {
            return Err(parse_error(
                path,
                line_no,
                format!("polarity must be 0 or 1, got `{other}`"),
            ))
        }
    };
    Ok(Event {
        t: parse_field(path, line_no, "t_us", t)?,
        x: parse_field(path, line_no, "x", x)?,
        y: parse_field(path, line_no, "y", y)?,
        polarity,
    })
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventReader<BufReader<File>>> {
    let path = path.as_ref();
    Ok(EventReader::new(path, open(path)?))
}

pub fn write_events<'a>(path: impl AsRef<Path>, events: impl IntoIterator<Item = &'a Event>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{EVENTS_HEADER}").map_err(io)?;
    for e in events {
        let p = match e.polarity {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        };
        writeln!(w, "{},{},{},{p}", e.t, e.x, e.y).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Streams an event file into a clipped, smoothed activity map.
pub fn load_event_map(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    duration_s: f64,
    sigma: f64,
) -> Result<AccumulatedEventMap> {
    let mut acc = EventAccumulator::new(width, height, duration_s)?;
    for event in read_events(path)? {
        acc.push(&event?)?;
    }
    event_map::smooth(&acc.finish(), sigma)
}

fn read_raw_cloud(path: &Path) -> Result<Vec<RawLidarPoint>> {
    let lines = CsvLines {
        path: path.to_path_buf(),
        header: CLOUD_HEADER,
        lines: open(path)?.lines(),
        line_no: 0,
    };
    let mut points = Vec::new();
    for item in lines {
        let (line_no, line) = item?;
        let [x, y, z, i] = fields::<4>(path, line_no, &line)?;
        points.push(RawLidarPoint {
            position: [
                parse_field(path, line_no, "x", x)?,
                parse_field(path, line_no, "y", y)?,
                parse_field(path, line_no, "z", z)?,
            ],
            intensity: parse_field(path, line_no, "intensity", i)?,
        });
    }
    Ok(points)
}

/// Reads a point cloud; the scene id is the file stem.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloudScene> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloudScene::from_raw(id, &read_raw_cloud(path)?)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloudScene) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{CLOUD_HEADER}").map_err(io)?;
    for p in cloud.points() {
        writeln!(
            w,
            "{},{},{},{}",
            format_f64(p.position.x),
            format_f64(p.position.y),
            format_f64(p.position.z),
            p.intensity
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `key = value` lines; `#` starts a comment.
fn read_key_values(path: &Path) -> Result<HashMap<String, (usize, String)>> {
    let mut out = HashMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_error(path, i + 1, "expected `key = value`"))?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(parse_error(path, i + 1, format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

struct KeyValues<'a> {
    path: &'a Path,
    map: HashMap<String, (usize, String)>,
}

impl KeyValues<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => parse_field(self.path, *line, key, v).map(Some),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::MissingKey {
            path: self.path.to_path_buf(),
            key: key.to_string(),
        })
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let mut unknown: Vec<_> = self
            .map
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .collect();
        unknown.sort_by_key(|(_, (line, _))| *line);
        match unknown.first() {
            Some((k, (line, _))) => Err(parse_error(self.path, *line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

const INTRINSIC_KEYS: [&str; 11] = [
    "fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2", "k3", "width", "height",
];

/// Reads and validates intrinsics; absent distortion terms are zero.
pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<Intrinsics> {
    let path = path.as_ref();
    let kv = KeyValues {
        path,
        map: read_key_values(path)?,
    };
    kv.reject_unknown(&INTRINSIC_KEYS)?;
    let k = Intrinsics {
        fx: kv.require("fx")?,
        fy: kv.require("fy")?,
        cx: kv.require("cx")?,
        cy: kv.require("cy")?,
        k1: kv.get("k1")?.unwrap_or(0.0),
        k2: kv.get("k2")?.unwrap_or(0.0),
        p1: kv.get("p1")?.unwrap_or(0.0),
        p2: kv.get("p2")?.unwrap_or(0.0),
        k3: kv.get("k3")?.unwrap_or(0.0),
        width: kv.require("width")?,
        height: kv.require("height")?,
    };
    k.validate()?;
    Ok(k)
}

pub fn write_intrinsics(path: impl AsRef<Path>, k: &Intrinsics) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for (key, v) in [
        ("fx", k.fx),
        ("fy", k.fy),
        ("cx", k.cx),
        ("cy", k.cy),
        ("k1", k.k1),
        ("k2", k.k2),
        ("p1", k.p1),
        ("p2", k.p2),
        ("k3", k.k3),
    ] {
        writeln!(w, "{key} = {}", format_f64(v)).map_err(io)?;
    }
    writeln!(w, "width = {}", k.width).map_err(io)?;
    writeln!(w, "height = {}", k.height).map_err(io)?;
    w.flush().map_err(io)
}

/// The persisted part of a calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultDocument {
    pub theta: ExtrinsicParams,
    pub mi: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

impl From<&OptimizeResult> for ResultDocument {
    fn from(r: &OptimizeResult) -> Self {
        Self {
            theta: r.theta_hat,
            mi: r.objective_value,
            iterations: r.iterations,
            converged: r.converged,
            wall_time_s: r.wall_time,
        }
    }
}

const RESULT_KEYS: [&str; 10] = [
    "x",
    "y",
    "z",
    "v1",
    "v2",
    "v3",
    "mi",
    "iterations",
    "converged",
    "wall_time_s",
];

pub fn write_result(path: impl AsRef<Path>, doc: &ResultDocument) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for (key, v) in RESULT_KEYS[..6].iter().zip(doc.theta.to_array()) {
        writeln!(w, "{key} = {}", format_f64(v)).map_err(io)?;
    }
    writeln!(w, "mi = {}", format_f64(doc.mi)).map_err(io)?;
    writeln!(w, "iterations = {}", doc.iterations).map_err(io)?;
    writeln!(w, "converged = {}", doc.converged).map_err(io)?;
    writeln!(w, "wall_time_s = {}", format_f64(doc.wall_time_s)).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ResultDocument> {
    let path = path.as_ref();
    let kv = KeyValues {
        path,
        map: read_key_values(path)?,
    };
    kv.reject_unknown(&RESULT_KEYS)?;
    let mut theta = [0.0; 6];
    for (slot, key) in theta.iter_mut().zip(&RESULT_KEYS[..6]) {
        *slot = kv.require(key)?;
    }
    Ok(ResultDocument {
        theta: ExtrinsicParams::from_array(theta),
        mi: kv.require("mi")?,
        iterations: kv.require("iterations")?,
        converged: kv.require("converged")?,
        wall_time_s: kv.require("wall_time_s")?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub events: PathBuf,
    pub cloud: PathBuf,
}

/// Scene list plus shared intrinsics. Relative paths resolve against the
/// manifest's directory.
///
/// ```text
/// intrinsics = camera.txt
/// scene = hall-01, hall-01.events.csv, hall-01.cloud.csv
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SceneManifest {
    pub intrinsics: PathBuf,
    pub scenes: Vec<ManifestEntry>,
}

impl SceneManifest {
    /// Parses and checks that ids are unique and every file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut intrinsics = None;
        let mut scenes = Vec::new();
        let mut ids = HashSet::new();
        let check = |p: PathBuf, line: usize| {
            if p.exists() {
                Ok(p)
            } else {
                Err(parse_error(path, line, format!("{} does not exist", p.display())))
            }
        };
        for (i, line) in open(path)?.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(path, line_no, "expected `key = value`"))?;
            match key.trim() {
                "intrinsics" => {
                    if intrinsics.is_some() {
                        return Err(parse_error(path, line_no, "intrinsics given twice"));
                    }
                    intrinsics = Some(check(base.join(value.trim()), line_no)?);
                }
                "scene" => {
                    let [id, events, cloud] = fields::<3>(path, line_no, value)?;
                    if id.is_empty() {
                        return Err(parse_error(path, line_no, "empty scene id"));
                    }
                    if !ids.insert(id.to_string()) {
                        return Err(parse_error(path, line_no, format!("duplicate scene id `{id}`")));
                    }
                    scenes.push(ManifestEntry {
                        scene_id: id.to_string(),
                        events: check(base.join(events), line_no)?,
                        cloud: check(base.join(cloud), line_no)?,
                    });
                }
                other => return Err(parse_error(path, line_no, format!("unknown key `{other}`"))),
            }
        }
        Ok(Self {
            intrinsics: intrinsics.ok_or_else(|| Error::MissingKey {
                path: path.to_path_buf(),
                key: "intrinsics".into(),
            })?,
            scenes,
        })
    }

    /// Writes the manifest with paths as given.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "intrinsics = {}", self.intrinsics.display()).map_err(io)?;
        for s in &self.scenes {
            writeln!(
                w,
                "scene = {}, {}, {}",
                s.scene_id,
                s.events.display(),
                s.cloud.display()
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Loading parameters for event maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    pub duration_s: f64,
    pub sigma: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            duration_s: event_map::DEFAULT_DURATION_S,
            sigma: event_map::DEFAULT_SIGMA,
        }
    }
}

/// Loads every scene in a manifest, in manifest order.
pub fn load_scenes(manifest: &SceneManifest, options: &MapOptions) -> Result<(Intrinsics, Vec<ScenePair>)> {
    let k = read_intrinsics(&manifest.intrinsics)?;
    let pairs = manifest
        .scenes
        .par_iter()
        .map(|entry| {
            let map = load_event_map(&entry.events, k.width, k.height, options.duration_s, options.sigma)?;
            let raw = read_raw_cloud(&entry.cloud)?;
            pointcloud::validate_scene(&entry.scene_id, &raw, map, &k).map_err(Error::Validation)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((k, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn seventeen_digit_format() {
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(1.0), "1");
        assert_eq!(format_f64(-2.5), "-2.5");
        assert_eq!(format_f64(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_f64(1e20), "1e+20");
        assert_eq!(format_f64(123456.0), "123456");
        assert_eq!(format_f64(0.0), "0");
        for v in [0.1, 1.0 / 3.0, -7.25e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    fn events_from(text: &str) -> Vec<Result<Event>> {
        EventReader::new("mem.csv", Cursor::new(text.to_string())).collect()
    }

    #[test]
    fn event_line_parses() {
        let events = events_from("1000,10,20,1\n");
        assert_eq!(
            events[0].as_ref().unwrap(),
            &Event {
                t: 1000,
                x: 10,
                y: 20,
                polarity: Polarity::Positive
            }
        );
    }

    #[test]
    fn header_is_optional() {
        let with = events_from("t_us,x,y,p\n5,1,2,0\n");
        let without = events_from("5,1,2,0\n");
        assert_eq!(with.len(), 1);
        assert_eq!(with[0].as_ref().unwrap(), without[0].as_ref().unwrap());
    }

    #[test]
    fn bad_polarity_names_line() {
        let events = events_from("t_us,x,y,p\n1,1,1,1\n1000,10,20,2\n");
        let err = events[1].as_ref().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_integer_fields_rejected() {
        for line in ["1.5,1,1,1", "1,x,1,1", "-1,1,1,1", "1,1,1", "1,1,1,1,1"] {
            let events = events_from(line);
            assert!(matches!(events[0], Err(Error::Parse { line: 1, .. })), "{line}");
        }
    }
}
