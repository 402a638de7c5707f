//! Domain types shared by every stage of the pipeline.
//!
//! A [`PointCloud`] is rasterized against a [`SensorSpec`] into a
//! [`RangeImage`], which pairs the six-channel [`RangeGrid`] with the
//! bookkeeping needed to move labels back from grids to points.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Semantic class or instance identifier.
pub type ClassId = u32;

/// Default id of the "unlabeled" class (SemanticKITTI convention).
pub const IGNORE_ID: ClassId = 0;

/// Number of feature channels in a range image.
pub const NUM_CHANNELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    /// `true` for a valid sensor return.
    pub existence: bool,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point {
            x,
            y,
            z,
            intensity,
            existence: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// First invariant violation found by [`PointCloud::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NonFiniteCoordinate { index: usize },
    LabelLength { points: usize, labels: usize },
    InstanceLength { points: usize, instances: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFiniteCoordinate { index } => {
                write!(f, "non-finite coordinate at index {index}")
            }
            Violation::LabelLength { points, labels } => {
                write!(f, "{labels} semantic labels for {points} points")
            }
            Violation::InstanceLength { points, instances } => {
                write!(f, "{instances} instance ids for {points} points")
            }
        }
    }
}

/// Ordered points with optional per-point semantic and instance labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub labels: Option<Vec<ClassId>>,
    pub instances: Option<Vec<ClassId>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud {
            points,
            labels: None,
            instances: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<ClassId>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn with_instances(mut self, instances: Vec<ClassId>) -> Self {
        self.instances = Some(instances);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Returns the first violated invariant, checking label lengths before
    /// coordinates.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        let n = self.points.len();
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Violation::LabelLength {
                    points: n,
                    labels: labels.len(),
                });
            }
        }
        if let Some(instances) = &self.instances {
            if instances.len() != n {
                return Err(Violation::InstanceLength {
                    points: n,
                    instances: instances.len(),
                });
            }
        }
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(index) => Err(Violation::NonFiniteCoordinate { index }),
            None => Ok(()),
        }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidCloud)
    }

    /// Sub-cloud made of the given point indices, labels carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick = |v: &Vec<ClassId>| indices.iter().map(|&i| v[i]).collect();
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self.labels.as_ref().map(pick),
            instances: self.instances.as_ref().map(pick),
        }
    }
}

/// Vertical field of view and raster resolution of a spinning LiDAR.
///
/// Angles are given in degrees as positive magnitudes and stored in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorSpec {
    fov_up_deg: f64,
    fov_down_deg: f64,
    fov_up: f64,
    fov_down: f64,
    height: usize,
    width: usize,
}

impl SensorSpec {
    pub fn new(fov_up_deg: f64, fov_down_deg: f64, height: usize, width: usize) -> Result<Self> {
        if !(fov_up_deg.is_finite() && fov_down_deg.is_finite()) {
            return Err(Error::InvalidConfig("field of view must be finite".into()));
        }
        if fov_up_deg + fov_down_deg <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "total vertical field of view must be positive, got {} deg",
                fov_up_deg + fov_down_deg
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig(format!(
                "raster size must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(SensorSpec {
            fov_up_deg,
            fov_down_deg,
            fov_up: fov_up_deg.to_radians(),
            fov_down: fov_down_deg.to_radians(),
            height,
            width,
        })
    }

    /// 64-beam sensor of the SemanticKITTI benchmark.
    pub fn semantic_kitti() -> Self {
        SensorSpec::new(3.0, 25.0, 64, 2048).expect("valid preset")
    }

    /// 32-beam sensor of the nuScenes benchmark.
    pub fn nuscenes() -> Self {
        SensorSpec::new(10.0, 30.0, 32, 1920).expect("valid preset")
    }

    pub fn with_width(&self, width: usize) -> Result<Self> {
        SensorSpec::new(self.fov_up_deg, self.fov_down_deg, self.height, width)
    }

    pub fn fov_up_deg(&self) -> f64 {
        self.fov_up_deg
    }

    pub fn fov_down_deg(&self) -> f64 {
        self.fov_down_deg
    }

    /// Upward field of view in radians.
    pub fn fov_up(&self) -> f64 {
        self.fov_up
    }

    /// Downward field of view in radians, as a positive magnitude.
    pub fn fov_down(&self) -> f64 {
        self.fov_down
    }

    /// Total vertical field of view in radians.
    pub fn fov_total(&self) -> f64 {
        self.fov_up + self.fov_down
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid_count(&self) -> usize {
        self.height * self.width
    }
}

/// Raster channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    X = 0,
    Y = 1,
    Z = 2,
    Depth = 3,
    Intensity = 4,
    Existence = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

/// Where a source point landed during rasterization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointSlot {
    Grid(GridIndex),
    /// Row fell outside `[0, H)`; `nearest` is the row-clamped grid used for
    /// inverse label transfer.
    OutOfFov { nearest: GridIndex },
}

impl PointSlot {
    pub fn grid(&self) -> Option<GridIndex> {
        match *self {
            PointSlot::Grid(g) => Some(g),
            PointSlot::OutOfFov { .. } => None,
        }
    }

    /// Grid used to transfer a label back to this point.
    pub fn transfer_grid(&self) -> GridIndex {
        match *self {
            PointSlot::Grid(g) => g,
            PointSlot::OutOfFov { nearest } => nearest,
        }
    }
}

/// Which source point won a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occupant {
    Empty,
    Point(usize),
}

/// Six-channel `H x W` raster with an optional label grid.
///
/// Channels are stored channel-major: `channels[c * H * W + row * W + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeGrid {
    height: usize,
    width: usize,
    channels: Vec<f32>,
    labels: Option<Vec<ClassId>>,
}

impl RangeGrid {
    pub fn zeros(height: usize, width: usize, with_labels: bool) -> Self {
        RangeGrid {
            height,
            width,
            channels: vec![0.0; NUM_CHANNELS * height * width],
            labels: with_labels.then(|| vec![IGNORE_ID; height * width]),
        }
    }

    pub fn from_parts(
        height: usize,
        width: usize,
        channels: Vec<f32>,
        labels: Option<Vec<ClassId>>,
    ) -> Result<Self> {
        let hw = height * width;
        if channels.len() != NUM_CHANNELS * hw {
            return Err(Error::LengthMismatch {
                what: "range grid channels",
                expected: NUM_CHANNELS * hw,
                found: channels.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != hw {
                return Err(Error::LengthMismatch {
                    what: "range grid labels",
                    expected: hw,
                    found: l.len(),
                });
            }
        }
        Ok(RangeGrid {
            height,
            width,
            channels,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid_count(&self) -> usize {
        self.height * self.width
    }

    pub fn channels(&self) -> &[f32] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [f32] {
        &mut self.channels
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn labels_mut(&mut self) -> Option<&mut [ClassId]> {
        self.labels.as_deref_mut()
    }

    pub fn into_parts(self) -> (Vec<f32>, Option<Vec<ClassId>>) {
        (self.channels, self.labels)
    }

    pub fn plane(&self, channel: Channel) -> &[f32] {
        let hw = self.grid_count();
        let c = channel as usize;
        &self.channels[c * hw..(c + 1) * hw]
    }

    pub fn value(&self, channel: Channel, row: usize, col: usize) -> f32 {
        self.plane(channel)[row * self.width + col]
    }

    pub fn is_occupied(&self, flat: usize) -> bool {
        self.channels[Channel::Existence as usize * self.grid_count() + flat] != 0.0
    }

    pub fn occupied_count(&self) -> usize {
        self.plane(Channel::Existence)
            .iter()
            .filter(|&&e| e != 0.0)
            .count()
    }

    /// Copies all channels and the label of grid `flat` from `other`.
    pub(crate) fn copy_grid_from(&mut self, other: &RangeGrid, flat: usize) {
        let hw = self.grid_count();
        for c in 0..NUM_CHANNELS {
            self.channels[c * hw + flat] = other.channels[c * hw + flat];
        }
        if let (Some(dst), Some(src)) = (self.labels.as_mut(), other.labels.as_ref()) {
            dst[flat] = src[flat];
        }
    }

    pub(crate) fn same_shape(&self, other: &RangeGrid) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch {
                expected_h: self.height,
                expected_w: self.width,
                found_h: other.height,
                found_w: other.width,
            });
        }
        if self.labels.is_some() != other.labels.is_some() {
            return Err(Error::MissingLabels);
        }
        Ok(())
    }
}

/// A rasterized scan: the [`RangeGrid`] plus full point/grid bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    pub(crate) grid: RangeGrid,
    pub(crate) point_slots: Vec<PointSlot>,
    pub(crate) occupants: Vec<Occupant>,
    pub(crate) displaced: Vec<usize>,
    pub(crate) out_of_fov: usize,
    pub(crate) origin_points: usize,
}

impl RangeImage {
    pub fn grid(&self) -> &RangeGrid {
        &self.grid
    }

    pub fn into_grid(self) -> RangeGrid {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.grid.labels()
    }

    pub fn point_count(&self) -> usize {
        self.point_slots.len()
    }

    pub fn point_slots(&self) -> &[PointSlot] {
        &self.point_slots
    }

    pub fn occupants(&self) -> &[Occupant] {
        &self.occupants
    }

    /// Indices of in-view points that lost their grid to a nearer point,
    /// in ascending order.
    pub fn displaced(&self) -> &[usize] {
        &self.displaced
    }

    pub fn occupied_count(&self) -> usize {
        self.occupants
            .iter()
            .filter(|o| matches!(o, Occupant::Point(_)))
            .count()
    }

    pub fn out_of_fov_count(&self) -> usize {
        self.out_of_fov
    }

    /// Points at the sensor origin; included in [`Self::out_of_fov_count`].
    pub fn origin_count(&self) -> usize {
        self.origin_points
    }
}

/// Class list with the things/stuff split used by panoptic metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTaxonomy {
    names: Vec<String>,
    things: BTreeSet<ClassId>,
    stuff: BTreeSet<ClassId>,
    ignore: ClassId,
    /// Optional raw-id to class-id remapping (e.g. SemanticKITTI learning map).
    remap: Vec<(ClassId, ClassId)>,
}

impl ClassTaxonomy {
    pub fn new(
        names: Vec<String>,
        things: impl IntoIterator<Item = ClassId>,
        stuff: impl IntoIterator<Item = ClassId>,
        ignore: ClassId,
    ) -> Result<Self> {
        let things: BTreeSet<_> = things.into_iter().collect();
        let stuff: BTreeSet<_> = stuff.into_iter().collect();
        let n = names.len() as ClassId;
        if ignore >= n {
            return Err(Error::InvalidConfig(format!(
                "ignore id {ignore} outside {n} classes"
            )));
        }
        if let Some(c) = things.intersection(&stuff).next() {
            return Err(Error::InvalidConfig(format!(
                "class {c} is both thing and stuff"
            )));
        }
        if things.contains(&ignore) || stuff.contains(&ignore) {
            return Err(Error::InvalidConfig(format!(
                "ignore id {ignore} listed as thing or stuff"
            )));
        }
        for c in 0..n {
            if c != ignore && !things.contains(&c) && !stuff.contains(&c) {
                return Err(Error::InvalidConfig(format!(
                    "class {c} is neither thing nor stuff"
                )));
            }
        }
        if let Some(&c) = things.iter().chain(stuff.iter()).find(|&&c| c >= n) {
            return Err(Error::InvalidConfig(format!(
                "class {c} outside {n} classes"
            )));
        }
        Ok(ClassTaxonomy {
            names,
            things,
            stuff,
            ignore,
            remap: Vec::new(),
        })
    }

    pub fn with_remap(mut self, remap: Vec<(ClassId, ClassId)>) -> Result<Self> {
        let n = self.num_classes() as ClassId;
        if let Some(&(raw, c)) = remap.iter().find(|&&(_, c)| c >= n) {
            return Err(Error::InvalidConfig(format!(
                "raw id {raw} maps to class {c} outside {n} classes"
            )));
        }
        self.remap = remap;
        self.remap.sort_unstable();
        Ok(self)
    }

    /// The 20-class SemanticKITTI taxonomy with its raw-label learning map.
    pub fn semantic_kitti() -> Self {
        const NAMES: [&str; 20] = [
            "unlabeled",
            "car",
            "bicycle",
            "motorcycle",
            "truck",
            "other-vehicle",
            "person",
            "bicyclist",
            "motorcyclist",
            "road",
            "parking",
            "sidewalk",
            "other-ground",
            "building",
            "fence",
            "vegetation",
            "trunk",
            "terrain",
            "pole",
            "traffic-sign",
        ];
        const LEARNING_MAP: [(ClassId, ClassId); 34] = [
            (0, 0),
            (1, 0),
            (10, 1),
            (11, 2),
            (13, 5),
            (15, 3),
            (16, 5),
            (18, 4),
            (20, 5),
            (30, 6),
            (31, 7),
            (32, 8),
            (40, 9),
            (44, 10),
            (48, 11),
            (49, 12),
            (50, 13),
            (51, 14),
            (52, 0),
            (60, 9),
            (70, 15),
            (71, 16),
            (72, 17),
            (80, 18),
            (81, 19),
            (99, 0),
            (252, 1),
            (253, 7),
            (254, 6),
            (255, 8),
            (256, 5),
            (257, 5),
            (258, 4),
            (259, 5),
        ];
        ClassTaxonomy::new(NAMES.iter().map(|s| s.to_string()).collect(), 1..=8, 9..=19, 0)
            .and_then(|t| t.with_remap(LEARNING_MAP.to_vec()))
            .expect("valid preset")
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ignore(&self) -> ClassId {
        self.ignore
    }

    pub fn things(&self) -> &BTreeSet<ClassId> {
        &self.things
    }

    pub fn stuff(&self) -> &BTreeSet<ClassId> {
        &self.stuff
    }

    pub fn is_thing(&self, class: ClassId) -> bool {
        self.things.contains(&class)
    }

    pub fn is_stuff(&self, class: ClassId) -> bool {
        self.stuff.contains(&class)
    }

    pub fn has_remap(&self) -> bool {
        !self.remap.is_empty()
    }

    /// Maps a raw id through the remap table; unmapped raw ids go to ignore.
    pub fn remap_id(&self, raw: ClassId) -> ClassId {
        if self.remap.is_empty() {
            return raw;
        }
        match self.remap.binary_search_by_key(&raw, |&(r, _)| r) {
            Ok(i) => self.remap[i].1,
            Err(_) => self.ignore,
        }
    }

    pub fn remap_table(&self) -> &[(ClassId, ClassId)] {
        &self.remap
    }
}
