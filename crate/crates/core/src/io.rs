//! SemanticKITTI-style binary scans and label streams, plus the `key = value`
//! text format used for sensor, augmentation and taxonomy configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{ClassId, ClassTaxonomy, Point, PointCloud, SensorSpec};

const SCAN_RECORD: u64 = 16;
const LABEL_RECORD: u64 = 4;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes a headerless stream of little-endian `f32` quadruples
/// `(x, y, z, intensity)`.
pub fn parse_scan(bytes: &[u8]) -> Result<PointCloud> {
    let len = bytes.len() as u64;
    if !len.is_multiple_of(SCAN_RECORD) {
        return Err(Error::Format {
            what: "scan",
            len,
            unit: SCAN_RECORD,
            residue: len % SCAN_RECORD,
        });
    }
    let points = bytes
        .chunks_exact(SCAN_RECORD as usize)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    Ok(PointCloud::new(points))
}

pub fn read_scan(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_scan(&read_bytes(path.as_ref())?)
}

pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * SCAN_RECORD as usize);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_scan(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write_bytes(path.as_ref(), &encode_scan(cloud))
}

/// Raw `u32` label words.
pub fn parse_label_words(bytes: &[u8]) -> Result<Vec<u32>> {
    let len = bytes.len() as u64;
    if !len.is_multiple_of(LABEL_RECORD) {
        return Err(Error::Format {
            what: "label stream",
            len,
            unit: LABEL_RECORD,
            residue: len % LABEL_RECORD,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| u32::from_le_bytes(w.try_into().unwrap()))
        .collect())
}

/// Splits label words into (semantic, instance): low and high 16 bits.
pub fn parse_labels(bytes: &[u8], expected_n: usize) -> Result<(Vec<ClassId>, Vec<ClassId>)> {
    let words = parse_label_words(bytes)?;
    if words.len() != expected_n {
        return Err(Error::LengthMismatch {
            what: "label stream",
            expected: expected_n,
            found: words.len(),
        });
    }
    Ok(words.iter().map(|&w| (w & 0xFFFF, w >> 16)).unzip())
}

pub fn read_labels(path: impl AsRef<Path>, expected_n: usize) -> Result<(Vec<ClassId>, Vec<ClassId>)> {
    parse_labels(&read_bytes(path.as_ref())?, expected_n)
}

/// Reads a label stream without a companion scan (e.g. stacked grid
/// predictions); returns semantic ids only.
pub fn read_label_stream(path: impl AsRef<Path>) -> Result<Vec<ClassId>> {
    Ok(parse_label_words(&read_bytes(path.as_ref())?)?
        .into_iter()
        .map(|w| w & 0xFFFF)
        .collect())
}

/// Packs semantic and instance ids into label words.
pub fn encode_labels(semantic: &[ClassId], instances: Option<&[ClassId]>) -> Result<Vec<u8>> {
    if let Some(inst) = instances {
        if inst.len() != semantic.len() {
            return Err(Error::LengthMismatch {
                what: "instance ids",
                expected: semantic.len(),
                found: inst.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(semantic.len() * 4);
    for (i, &s) in semantic.iter().enumerate() {
        if s > 0xFFFF {
            return Err(Error::out_of_range("semantic id", s, "must fit in 16 bits"));
        }
        let inst = instances.map_or(0, |v| v[i]);
        if inst > 0xFFFF {
            return Err(Error::out_of_range("instance id", inst, "must fit in 16 bits"));
        }
        out.extend_from_slice(&(s | (inst << 16)).to_le_bytes());
    }
    Ok(out)
}

pub fn write_predictions(path: impl AsRef<Path>, semantic: &[ClassId]) -> Result<()> {
    let bytes = encode_labels(semantic, None)?;
    write_bytes(path.as_ref(), &bytes)
}

pub fn write_labels(
    path: impl AsRef<Path>,
    semantic: &[ClassId],
    instances: Option<&[ClassId]>,
) -> Result<()> {
    let bytes = encode_labels(semantic, instances)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Parsed `key = value` file. Blank lines and `#` comments are skipped;
/// duplicate keys are an error.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KeyValues::parse(&text)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                message: format!("cannot parse `{v}` for `{key}`"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &'static str) -> Result<T> {
        self.get(key)?.ok_or(Error::MissingKey(key))
    }

    /// Comma-separated list; `a-b` expands to an inclusive integer range when
    /// `T` is an integer type parsed through `u32`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        let err = |item: &str| Error::Parse {
            line: *line,
            message: format!("cannot parse list item `{item}` for `{key}`"),
        };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('-').filter(|(a, _)| !a.is_empty()) {
                Some((a, b)) => {
                    let a: u32 = a.trim().parse().map_err(|_| err(item))?;
                    let b: u32 = b.trim().parse().map_err(|_| err(item))?;
                    if a > b {
                        return Err(err(item));
                    }
                    for x in a..=b {
                        out.push(x.to_string().parse().map_err(|_| err(item))?);
                    }
                }
                None => out.push(item.parse().map_err(|_| err(item))?),
            }
        }
        Ok(Some(out))
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    pub(crate) fn reject_unknown(&self, allowed: &[&str], prefixes: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !allowed.contains(&key) && !prefixes.iter().any(|p| key.starts_with(p)) {
                return Err(Error::Parse {
                    line: self.line_of(key),
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

pub fn parse_sensor_spec(text: &str) -> Result<SensorSpec> {
    let kv = KeyValues::parse(text)?;
    kv.reject_unknown(&["fov_up", "fov_down", "height", "width"], &[])?;
    SensorSpec::new(
        kv.require("fov_up")?,
        kv.require("fov_down")?,
        kv.require("height")?,
        kv.require("width")?,
    )
}

pub fn read_sensor_spec(path: impl AsRef<Path>) -> Result<SensorSpec> {
    let path = path.as_ref();
    parse_sensor_spec(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn format_sensor_spec(spec: &SensorSpec) -> String {
    format!(
        "fov_up = {}\nfov_down = {}\nheight = {}\nwidth = {}\n",
        spec.fov_up_deg(),
        spec.fov_down_deg(),
        spec.height(),
        spec.width()
    )
}

/// Taxonomy file:
///
/// ```text
/// names = unlabeled, car, road
/// ignore = 0
/// things = 1
/// stuff = 2
/// map.10 = 1      # optional raw-id remapping
/// ```
pub fn parse_taxonomy(text: &str) -> Result<ClassTaxonomy> {
    let kv = KeyValues::parse(text)?;
    kv.reject_unknown(&["names", "ignore", "things", "stuff"], &["map."])?;
    let names: Vec<String> = kv
        .raw("names")
        .ok_or(Error::MissingKey("names"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let ignore = kv.get("ignore")?.unwrap_or(crate::types::IGNORE_ID);
    let things: Vec<ClassId> = kv.get_list("things")?.unwrap_or_default();
    let stuff: Vec<ClassId> = kv.get_list("stuff")?.unwrap_or_default();
    let mut remap = Vec::new();
    for key in kv.keys().filter(|k| k.starts_with("map.")) {
        let raw: ClassId = key["map.".len()..].parse().map_err(|_| Error::Parse {
            line: kv.line_of(key),
            message: format!("bad raw id in `{key}`"),
        })?;
        remap.push((raw, kv.get(key)?.expect("key listed by keys()")));
    }
    ClassTaxonomy::new(names, things, stuff, ignore)?.with_remap(remap)
}

pub fn format_taxonomy(t: &ClassTaxonomy) -> String {
    let join = |s: &std::collections::BTreeSet<ClassId>| {
        s.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
    };
    let mut out = format!(
        "names = {}\nignore = {}\nthings = {}\nstuff = {}\n",
        t.names().join(", "),
        t.ignore(),
        join(t.things()),
        join(t.stuff())
    );
    for (raw, c) in t.remap_table() {
        out.push_str(&format!("map.{raw} = {c}\n"));
    }
    out
}

pub fn read_taxonomy(path: impl AsRef<Path>) -> Result<ClassTaxonomy> {
    let path = path.as_ref();
    parse_taxonomy(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Channel-major little-endian `f32` dump of a raster.
pub fn encode_raster(channels: &[f32]) -> Vec<u8> {
    channels.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn parse_raster(bytes: &[u8], expected_len: usize) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format {
            what: "raster",
            len: bytes.len() as u64,
            unit: 4,
            residue: bytes.len() as u64 % 4,
        });
    }
    if bytes.len() / 4 != expected_len {
        return Err(Error::LengthMismatch {
            what: "raster",
            expected: expected_len,
            found: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| f32::from_le_bytes(w.try_into().unwrap()))
        .collect())
}
