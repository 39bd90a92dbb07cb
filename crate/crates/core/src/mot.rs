//! MOT-style CSV rows shared by detections, tracker output and ground truth:
//!
//! ```text
//! frame,id,left,top,width,height,confidence,class_id,wx,wy,wz
//! ```
//!
//! `id` is -1 on detection input and the world columns may be empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// The seven object categories, in class-id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Bicycle,
    People,
    Truck,
    Bus,
    Tricycle,
    Moto,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::Car,
        ObjectClass::Bicycle,
        ObjectClass::People,
        ObjectClass::Truck,
        ObjectClass::Bus,
        ObjectClass::Tricycle,
        ObjectClass::Moto,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::People => "people",
            ObjectClass::Truck => "truck",
            ObjectClass::Bus => "bus",
            ObjectClass::Tricycle => "tricycle",
            ObjectClass::Moto => "moto",
        }
    }
}

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.left && u <= self.right() && v >= self.top && v <= self.bottom()
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let w = (self.right().min(other.right()) - self.left.max(other.left)).max(0.0);
        let h = (self.bottom().min(other.bottom()) - self.top.max(other.top)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub frame: u64,
    pub id: i64,
    pub bbox: BBox,
    pub confidence: f64,
    pub class: ObjectClass,
    /// World-frame position in mm, when known.
    pub world: Option<Point3>,
}

impl MotRow {
    fn write_to(&self, out: &mut String) {
        let b = &self.bbox;
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.frame,
            self.id,
            b.left,
            b.top,
            b.width,
            b.height,
            self.confidence,
            self.class.id()
        )
        .expect("write to String");
        match &self.world {
            Some(p) => writeln!(out, ",{},{},{}", p.x, p.y, p.z),
            None => writeln!(out, ",,,"),
        }
        .expect("write to String");
    }
}

/// Rows as CSV text, one per line, no header.
pub fn write_mot(rows: &[MotRow]) -> String {
    let mut out = String::new();
    for row in rows {
        row.write_to(&mut out);
    }
    out
}

pub fn parse_mot(text: &str) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for record in csv_records(text) {
        let (line, fields) = record?;
        if fields.len() != 8 && fields.len() != 11 {
            return Err(Error::parse(
                line,
                format!("expected 8 or 11 columns, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad frame index {:?}", fields[0])))?;
        let id: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad id {:?}", fields[1])))?;
        let bbox = BBox::new(
            parse_f64(&fields[2], line)?,
            parse_f64(&fields[3], line)?,
            parse_f64(&fields[4], line)?,
            parse_f64(&fields[5], line)?,
        );
        if !(bbox.width > 0.0 && bbox.height > 0.0) {
            return Err(Error::parse(line, "box width and height must be positive"));
        }
        let confidence = parse_f64(&fields[6], line)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(
                line,
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        let class = fields[7]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(ObjectClass::from_id)
            .ok_or_else(|| Error::parse(line, format!("bad class id {:?}", fields[7])))?;
        let world = if fields.len() == 11 && fields[8..].iter().any(|f| !f.trim().is_empty()) {
            Some(Point3::world(
                parse_f64(&fields[8], line)?,
                parse_f64(&fields[9], line)?,
                parse_f64(&fields[10], line)?,
            ))
        } else {
            None
        };
        rows.push(MotRow {
            frame,
            id,
            bbox,
            confidence,
            class,
            world,
        });
    }
    Ok(rows)
}

/// Groups rows by frame, keeping file order inside each frame.
pub fn group_by_frame(rows: &[MotRow]) -> BTreeMap<u64, Vec<MotRow>> {
    let mut out: BTreeMap<u64, Vec<MotRow>> = BTreeMap::new();
    for row in rows {
        out.entry(row.frame).or_default().push(row.clone());
    }
    out
}

pub(crate) fn parse_f64(field: &str, line: u64) -> Result<f64> {
    let t = field.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(line, format!("not a finite number: {t:?}"))),
    }
}

/// Comma-separated records with their 1-based line numbers. Lines starting
/// with `#` and blank lines are skipped.
pub(crate) fn csv_records(text: &str) -> impl Iterator<Item = Result<(u64, Vec<String>)>> + '_ {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(line, l)| {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(l.as_bytes());
            let mut record = csv::StringRecord::new();
            reader
                .read_record(&mut record)
                .map_err(|e| Error::parse(line, e.to_string()))?;
            Ok((line, record.iter().map(str::to_string).collect()))
        })
}
