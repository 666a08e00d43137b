//! Bounding boxes, detector predictions and their file formats.
//!
//! Ground truth is PASCAL VOC XML with an extra per-object `<slice>` element.
//! Predictions are CSV rows `patient,slice,x_min,y_min,x_max,y_max,confidence`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("XML parse error: {0}")]
    Xml(String),
    #[error("object #{index} ({name:?}): missing field <{field}>")]
    MissingField {
        index: usize,
        name: String,
        field: &'static str,
    },
    #[error("object #{index} ({name:?}): field <{field}> is not a number: {value:?}")]
    BadNumber {
        index: usize,
        name: String,
        field: &'static str,
        value: String,
    },
    #[error("object #{index} ({name:?}): {reason}")]
    InvalidBox {
        index: usize,
        name: String,
        reason: String,
    },
    #[error("object #{index}: unknown label {label:?}")]
    UnknownLabel { index: usize, label: String },
    #[error("invalid box: {0}")]
    Geometry(String),
    #[error("predictions line {line}: {reason}")]
    Prediction { line: usize, reason: String },
    #[error("predictions CSV: {0}")]
    Csv(String),
}

/// One of the six meniscal compartments graded per knee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compartment {
    MedialAnteriorHorn,
    MedialBody,
    MedialPosteriorHorn,
    LateralAnteriorHorn,
    LateralBody,
    LateralPosteriorHorn,
}

impl Compartment {
    pub const ALL: [Compartment; 6] = [
        Compartment::MedialAnteriorHorn,
        Compartment::MedialBody,
        Compartment::MedialPosteriorHorn,
        Compartment::LateralAnteriorHorn,
        Compartment::LateralBody,
        Compartment::LateralPosteriorHorn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Compartment::MedialAnteriorHorn => "medial anterior horn",
            Compartment::MedialBody => "medial meniscal body",
            Compartment::MedialPosteriorHorn => "medial posterior horn",
            Compartment::LateralAnteriorHorn => "lateral anterior horn",
            Compartment::LateralBody => "lateral meniscal body",
            Compartment::LateralPosteriorHorn => "lateral posterior horn",
        }
    }

    /// snake_case key used in JSON payloads.
    pub fn key(self) -> &'static str {
        match self {
            Compartment::MedialAnteriorHorn => "medial_anterior_horn",
            Compartment::MedialBody => "medial_body",
            Compartment::MedialPosteriorHorn => "medial_posterior_horn",
            Compartment::LateralAnteriorHorn => "lateral_anterior_horn",
            Compartment::LateralBody => "lateral_body",
            Compartment::LateralPosteriorHorn => "lateral_posterior_horn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxLabel {
    Compartment(Compartment),
    /// Catch-all single detection class.
    Anomaly,
}

impl fmt::Display for BoxLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxLabel::Compartment(c) => f.write_str(c.name()),
            BoxLabel::Anomaly => f.write_str("anomaly"),
        }
    }
}

impl FromStr for BoxLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .collect();
        let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
        if norm == "anomaly" {
            return Ok(BoxLabel::Anomaly);
        }
        Compartment::ALL
            .into_iter()
            .find(|c| {
                let short = c.name().replace("meniscal ", "");
                norm == c.name() || norm == short
            })
            .map(BoxLabel::Compartment)
            .ok_or_else(|| s.to_string())
    }
}

/// Axis-aligned box on one slice, in continuous pixel coordinates
/// (x along columns, y along rows).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub slice_index: usize,
    pub label: BoxLabel,
}

impl BoundingBox {
    pub fn new(
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        slice_index: usize,
        label: BoxLabel,
    ) -> Result<Self, BoxError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            slice_index,
            label,
        };
        b.check().map_err(BoxError::Geometry)?;
        Ok(b)
    }

    fn check(&self) -> Result<(), String> {
        if ![self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err("non-finite coordinate".into());
        }
        if self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(format!(
                "inverted or zero-area box ({}, {}, {}, {})",
                self.x_min, self.y_min, self.x_max, self.y_max
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Clamps into `[0, width] x [0, height]`. Returns `None` when nothing of
    /// the box remains inside the image.
    pub fn clamped(&self, width: f64, height: f64) -> Option<Self> {
        let b = Self {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
            ..*self
        };
        b.check().ok().map(|_| b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Prediction {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, BoxError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(BoxError::Geometry(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self { bbox, confidence })
    }
}

/// Identifies one 2D slice of one patient volume.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceKey {
    pub patient: String,
    pub slice: usize,
}

impl SliceKey {
    pub fn new(patient: impl Into<String>, slice: usize) -> Self {
        Self {
            patient: patient.into(),
            slice,
        }
    }
}

/// Boxes ordered as in the source document, grouped by slice index.
pub fn group_by_slice(boxes: &[BoundingBox]) -> BTreeMap<usize, Vec<BoundingBox>> {
    let mut out: BTreeMap<usize, Vec<BoundingBox>> = BTreeMap::new();
    for b in boxes {
        out.entry(b.slice_index).or_default().push(*b);
    }
    out
}

// ---------------------------------------------------------------------------
// PASCAL VOC

pub fn parse_voc_boxes(path: &Path) -> Result<Vec<BoundingBox>, BoxError> {
    let text = fs::read_to_string(path).map_err(|source| BoxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_voc_str(&text)
}

/// Parses a VOC document. When `<size>` is present, boxes reaching past the
/// image are clamped with a warning.
pub fn parse_voc_str(text: &str) -> Result<Vec<BoundingBox>, BoxError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| BoxError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let size = child(root, "size").and_then(|s| {
        let w = child_text(s, "width")?.parse::<f64>().ok()?;
        let h = child_text(s, "height")?.parse::<f64>().ok()?;
        Some((w, h))
    });

    let mut boxes = Vec::new();
    for (index, obj) in root.children().filter(|n| n.has_tag_name("object")).enumerate() {
        let name = child_text(obj, "name").unwrap_or_default().to_string();
        let missing = |field: &'static str| BoxError::MissingField {
            index,
            name: name.clone(),
            field,
        };
        let number = |node: roxmltree::Node, field: &'static str| -> Result<f64, BoxError> {
            let raw = child_text(node, field).ok_or_else(|| missing(field))?;
            raw.trim().parse::<f64>().map_err(|_| BoxError::BadNumber {
                index,
                name: name.clone(),
                field,
                value: raw.to_string(),
            })
        };
        if child(obj, "name").is_none() {
            return Err(missing("name"));
        }
        let label: BoxLabel = name
            .parse()
            .map_err(|label| BoxError::UnknownLabel { index, label })?;
        let slice_raw = child_text(obj, "slice").ok_or_else(|| missing("slice"))?;
        let slice_index = slice_raw.trim().parse::<usize>().map_err(|_| BoxError::BadNumber {
            index,
            name: name.clone(),
            field: "slice",
            value: slice_raw.to_string(),
        })?;
        let bnd = child(obj, "bndbox").ok_or_else(|| missing("bndbox"))?;
        let b = BoundingBox {
            x_min: number(bnd, "xmin")?,
            y_min: number(bnd, "ymin")?,
            x_max: number(bnd, "xmax")?,
            y_max: number(bnd, "ymax")?,
            slice_index,
            label,
        };
        b.check().map_err(|reason| BoxError::InvalidBox {
            index,
            name: name.clone(),
            reason,
        })?;
        let b = match size {
            Some((w, h)) if b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > w || b.y_max > h => {
                let clamped = b.clamped(w, h).ok_or_else(|| BoxError::InvalidBox {
                    index,
                    name: name.clone(),
                    reason: format!("box lies entirely outside the {w}x{h} image"),
                })?;
                log::warn!("object #{index} ({name}) clamped to the {w}x{h} image");
                clamped
            }
            _ => b,
        };
        boxes.push(b);
    }
    Ok(boxes)
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(tag))
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, tag: &str) -> Option<&'a str> {
    child(node, tag).map(|n| n.text().unwrap_or("").trim())
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn serialize_voc_boxes(boxes: &[BoundingBox], filename: &str, size: Option<(usize, usize)>) -> String {
    let mut out = String::from("<annotation>\n");
    out.push_str(&format!("  <filename>{}</filename>\n", escape_xml(filename)));
    if let Some((w, h)) = size {
        out.push_str(&format!(
            "  <size>\n    <width>{w}</width>\n    <height>{h}</height>\n    <depth>1</depth>\n  </size>\n"
        ));
    }
    for b in boxes {
        out.push_str("  <object>\n");
        out.push_str(&format!("    <name>{}</name>\n", escape_xml(&b.label.to_string())));
        out.push_str(&format!("    <slice>{}</slice>\n", b.slice_index));
        // `{:?}` on f64 prints the shortest representation that parses back exactly
        out.push_str(&format!(
            "    <bndbox>\n      <xmin>{:?}</xmin>\n      <ymin>{:?}</ymin>\n      <xmax>{:?}</xmax>\n      <ymax>{:?}</ymax>\n    </bndbox>\n",
            b.x_min, b.y_min, b.x_max, b.y_max
        ));
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}

// ---------------------------------------------------------------------------
// Predictions CSV

pub const PREDICTION_HEADER: [&str; 7] = ["patient", "slice", "x_min", "y_min", "x_max", "y_max", "confidence"];

/// Detector output grouped by slice; each group sorted by descending confidence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub by_slice: BTreeMap<SliceKey, Vec<Prediction>>,
}

impl PredictionSet {
    pub fn from_records(records: impl IntoIterator<Item = (String, Prediction)>) -> Self {
        let mut by_slice: BTreeMap<SliceKey, Vec<Prediction>> = BTreeMap::new();
        for (patient, p) in records {
            by_slice
                .entry(SliceKey::new(patient, p.bbox.slice_index))
                .or_default()
                .push(p);
        }
        for preds in by_slice.values_mut() {
            sort_by_confidence(preds);
        }
        Self { by_slice }
    }

    pub fn is_empty(&self) -> bool {
        self.by_slice.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_slice.values().map(Vec::len).sum()
    }

    /// All predictions for one patient, slice order then confidence order.
    pub fn for_patient(&self, patient: &str) -> Vec<Prediction> {
        self.by_slice
            .iter()
            .filter(|(k, _)| k.patient == patient)
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub fn slice(&self, key: &SliceKey) -> &[Prediction] {
        self.by_slice.get(key).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Stable sort, highest confidence first.
pub fn sort_by_confidence(preds: &mut [Prediction]) {
    preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
}

pub fn parse_predictions(path: &Path) -> Result<PredictionSet, BoxError> {
    let text = fs::read_to_string(path).map_err(|source| BoxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_predictions_str(&text)
}

pub fn parse_predictions_str(text: &str) -> Result<PredictionSet, BoxError> {
    if text.trim().is_empty() {
        return Ok(PredictionSet::default());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| BoxError::Csv(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize, BoxError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BoxError::Csv(format!("header is missing column {name:?}")))
    };
    let idx: Vec<usize> = PREDICTION_HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| BoxError::Prediction {
            line,
            reason: e.to_string(),
        })?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, BoxError> {
            field(k).parse::<f64>().map_err(|_| BoxError::Prediction {
                line,
                reason: format!("{} is not a number: {:?}", PREDICTION_HEADER[k], field(k)),
            })
        };
        let patient = field(0).to_string();
        if field(1).is_empty() {
            return Err(BoxError::Prediction {
                line,
                reason: "missing slice index".into(),
            });
        }
        let slice = field(1).parse::<usize>().map_err(|_| BoxError::Prediction {
            line,
            reason: format!("slice is not a non-negative integer: {:?}", field(1)),
        })?;
        let bbox = BoundingBox::new(num(2)?, num(3)?, num(4)?, num(5)?, slice, BoxLabel::Anomaly)
            .map_err(|e| BoxError::Prediction {
                line,
                reason: e.to_string(),
            })?;
        let confidence = num(6)?;
        let p = Prediction::new(bbox, confidence).map_err(|e| BoxError::Prediction {
            line,
            reason: e.to_string(),
        })?;
        records.push((patient, p));
    }
    Ok(PredictionSet::from_records(records))
}

pub fn serialize_predictions(records: &[(String, Prediction)]) -> String {
    let mut out = PREDICTION_HEADER.join(",");
    out.push('\n');
    for (patient, p) in records {
        let b = &p.bbox;
        out.push_str(&format!(
            "{patient},{},{:?},{:?},{:?},{:?},{:?}\n",
            b.slice_index, b.x_min, b.y_min, b.x_max, b.y_max, p.confidence
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ONE_OBJECT: &str = r#"<annotation>
  <size><width>512</width><height>512</height></size>
  <object>
    <name>medial posterior horn</name>
    <slice>12</slice>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>30</xmax><ymax>40</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn zero_objects() {
        assert!(parse_voc_str("<annotation><filename>a</filename></annotation>").unwrap().is_empty());
    }

    #[test]
    fn one_object_maps_fields() {
        let boxes = parse_voc_str(ONE_OBJECT).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (10.0, 20.0, 30.0, 40.0));
        assert_eq!(b.slice_index, 12);
        assert_eq!(b.label, BoxLabel::Compartment(Compartment::MedialPosteriorHorn));
    }

    #[test]
    fn inverted_box_rejected() {
        let text = ONE_OBJECT.replace("<xmin>10</xmin>", "<xmin>35</xmin>");
        let err = parse_voc_str(&text).unwrap_err();
        assert!(matches!(err, BoxError::InvalidBox { index: 0, .. }), "{err}");
    }

    #[test]
    fn missing_coordinate_and_unknown_label() {
        let text = ONE_OBJECT.replace("<ymax>40</ymax>", "");
        assert!(matches!(
            parse_voc_str(&text).unwrap_err(),
            BoxError::MissingField { field: "ymax", .. }
        ));
        let text = ONE_OBJECT.replace("medial posterior horn", "cartilage");
        let err = parse_voc_str(&text).unwrap_err();
        assert!(err.to_string().contains("cartilage"));
    }

    #[test]
    fn out_of_bounds_box_is_clamped() {
        let text = ONE_OBJECT.replace("<xmax>30</xmax>", "<xmax>600</xmax>");
        let b = parse_voc_str(&text).unwrap()[0];
        assert_eq!(b.x_max, 512.0);
    }

    #[test]
    fn label_aliases() {
        assert_eq!(
            "Lateral_Body".parse::<BoxLabel>().unwrap(),
            BoxLabel::Compartment(Compartment::LateralBody)
        );
        assert_eq!("ANOMALY".parse::<BoxLabel>().unwrap(), BoxLabel::Anomaly);
        assert!("meniscus".parse::<BoxLabel>().is_err());
    }

    #[test]
    fn predictions_empty_sorted_and_range_checked() {
        assert!(parse_predictions_str("").unwrap().is_empty());
        let text = "patient,slice,x_min,y_min,x_max,y_max,confidence\n\
                    p1,3,0,0,10,10,0.9\np1,3,5,5,15,15,0.95\n";
        let set = parse_predictions_str(text).unwrap();
        let confs: Vec<f64> = set.slice(&SliceKey::new("p1", 3)).iter().map(|p| p.confidence).collect();
        assert_eq!(confs, vec![0.95, 0.9]);

        let bad = "patient,slice,x_min,y_min,x_max,y_max,confidence\np1,3,0,0,10,10,1.2\n";
        assert!(matches!(parse_predictions_str(bad), Err(BoxError::Prediction { line: 2, .. })));
        let no_slice = "patient,slice,x_min,y_min,x_max,y_max,confidence\np1,,0,0,10,10,0.5\n";
        let err = parse_predictions_str(no_slice).unwrap_err();
        assert!(err.to_string().contains("missing slice"));
        assert!(parse_predictions_str("a,b\n1,2\n").is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..400.0, 0.0f64..400.0, 0.5f64..100.0, 0.5f64..100.0, 0usize..200, 0usize..7).prop_map(
            |(x, y, w, h, s, l)| BoundingBox {
                x_min: x,
                y_min: y,
                x_max: x + w,
                y_max: y + h,
                slice_index: s,
                label: if l == 6 { BoxLabel::Anomaly } else { BoxLabel::Compartment(Compartment::ALL[l]) },
            },
        )
    }

    proptest! {
        #[test]
        fn voc_round_trip(boxes in proptest::collection::vec(arb_box(), 0..8)) {
            let xml = serialize_voc_boxes(&boxes, "vol & co", None);
            prop_assert_eq!(parse_voc_str(&xml).unwrap(), boxes);
        }

        #[test]
        fn predictions_round_trip(boxes in proptest::collection::vec(arb_box(), 0..8), c in 0.0f64..=1.0) {
            let records: Vec<(String, Prediction)> = boxes.iter().map(|b| {
                let b = BoundingBox { label: BoxLabel::Anomaly, ..*b };
                ("p7".to_string(), Prediction::new(b, c).unwrap())
            }).collect();
            let set = parse_predictions_str(&serialize_predictions(&records)).unwrap();
            prop_assert_eq!(set, PredictionSet::from_records(records));
        }
    }
}
