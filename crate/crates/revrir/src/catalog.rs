//! Room-class universe: dimension grids expanded into an ordered catalog of
//! shoebox rooms, each with a class id and a coarse room type.
//!
//! Dimensions are stored as integer millimetres so catalogs hash and compare
//! exactly and grid membership is an integer check, not a float tolerance.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CATALOG_MAGIC: &str = "revrir-catalog";
pub const CATALOG_VERSION: u32 = 1;

/// Millimetres per metre; all catalog geometry is mm-resolution.
const MM: f64 = 1000.0;

fn meters_to_mm(m: f64, what: &str) -> Result<i64> {
    if !m.is_finite() || m < 0.0 {
        return Err(Error::Validation(format!("{what}: non-finite or negative ({m})")));
    }
    let mm = m * MM;
    let rounded = mm.round();
    if (mm - rounded).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "{what}: {m} m is not representable at millimetre resolution"
        )));
    }
    Ok(rounded as i64)
}

pub fn mm_to_meters(mm: i64) -> f64 {
    mm as f64 / MM
}

/// Inclusive arithmetic range of room dimensions, `[min, max, hop]` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DimensionRange {
    pub min_mm: i64,
    pub max_mm: i64,
    pub hop_mm: i64,
}

impl DimensionRange {
    pub fn new(min_m: f64, max_m: f64, hop_m: f64) -> Result<Self> {
        let min_mm = meters_to_mm(min_m, "range min")?;
        let max_mm = meters_to_mm(max_m, "range max")?;
        let hop_mm = meters_to_mm(hop_m, "range hop")?;
        if hop_mm <= 0 {
            return Err(Error::Validation(format!("range hop must be > 0, got {hop_m}")));
        }
        if min_mm > max_mm {
            return Err(Error::Validation(format!(
                "range min {min_m} exceeds max {max_m}"
            )));
        }
        if (max_mm - min_mm) % hop_mm != 0 {
            return Err(Error::Validation(format!(
                "range span {}..{} is not an integer multiple of hop {}",
                min_m, max_m, hop_m
            )));
        }
        Ok(Self { min_mm, max_mm, hop_mm })
    }

    pub fn min_m(&self) -> f64 {
        mm_to_meters(self.min_mm)
    }
    pub fn max_m(&self) -> f64 {
        mm_to_meters(self.max_mm)
    }
    pub fn hop_m(&self) -> f64 {
        mm_to_meters(self.hop_mm)
    }

    pub fn contains_mm(&self, v: i64) -> bool {
        v >= self.min_mm && v <= self.max_mm && (v - self.min_mm) % self.hop_mm == 0
    }
}

/// `min, min+hop, ..., max` inclusive, ascending, in millimetres.
pub fn expand_range(r: &DimensionRange) -> Vec<i64> {
    let n = (r.max_mm - r.min_mm) / r.hop_mm + 1;
    (0..n).map(|i| r.min_mm + i * r.hop_mm).collect()
}

/// Same expansion in metres, for callers working in physical units.
pub fn expand_range_m(r: &DimensionRange) -> Vec<f64> {
    expand_range(r).into_iter().map(mm_to_meters).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoomType {
    Small,
    Large,
    Hall,
}

impl RoomType {
    pub const ALL: [RoomType; 3] = [RoomType::Small, RoomType::Large, RoomType::Hall];

    pub fn name(&self) -> &'static str {
        match self {
            RoomType::Small => "small",
            RoomType::Large => "large",
            RoomType::Hall => "hall",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            RoomType::Small => 0,
            RoomType::Large => 1,
            RoomType::Hall => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(RoomType::Small),
            "large" => Ok(RoomType::Large),
            "hall" => Ok(RoomType::Hall),
            other => Err(Error::Format(format!("unknown room type '{other}'"))),
        }
    }
}

impl std::fmt::Display for RoomType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Width/depth/height ranges for one room type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeGrid {
    pub width: DimensionRange,
    pub depth: DimensionRange,
    pub height: DimensionRange,
}

/// Per-type grids, ordered Small, Large, Hall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeGrids {
    pub grids: [TypeGrid; 3],
}

impl TypeGrids {
    /// The reference three-type grid: 18 small, 64 large and 42
    /// hall rooms (124 classes on the full grid).
    pub fn reference() -> Self {
        let g = |a: (f64, f64, f64), b: (f64, f64, f64), c: (f64, f64, f64)| TypeGrid {
            width: DimensionRange::new(a.0, a.1, a.2).unwrap(),
            depth: DimensionRange::new(b.0, b.1, b.2).unwrap(),
            height: DimensionRange::new(c.0, c.1, c.2).unwrap(),
        };
        TypeGrids {
            grids: [
                g((1.5, 3.5, 1.0), (2.5, 4.5, 1.0), (2.5, 3.0, 0.5)),
                g((6.0, 13.0, 1.0), (6.0, 12.0, 2.0), (2.5, 3.5, 1.0)),
                g((1.0, 3.0, 1.0), (7.0, 13.0, 1.0), (2.5, 3.5, 1.0)),
            ],
        }
    }

    pub fn grid(&self, t: RoomType) -> &TypeGrid {
        &self.grids[t.index()]
    }
}

/// One room geometry with its class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoomSpec {
    pub class_id: u32,
    pub room_type: RoomType,
    pub width_mm: i64,
    pub depth_mm: i64,
    pub height_mm: i64,
}

impl RoomSpec {
    pub fn width_m(&self) -> f64 {
        mm_to_meters(self.width_mm)
    }
    pub fn depth_m(&self) -> f64 {
        mm_to_meters(self.depth_mm)
    }
    pub fn height_m(&self) -> f64 {
        mm_to_meters(self.height_mm)
    }
    /// (width, depth, height) in metres.
    pub fn dims_m(&self) -> [f64; 3] {
        [self.width_m(), self.depth_m(), self.height_m()]
    }
    pub fn volume_m3(&self) -> f64 {
        self.width_m() * self.depth_m() * self.height_m()
    }
}

/// Ordered room universe. Class ids are `0..M-1` in enumeration order
/// (all Small rooms, then Large, then Hall; width-major within a type).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub rooms: Vec<RoomSpec>,
    pub type_ranges: TypeGrids,
}

/// Cartesian product of the per-type grids, concatenated Small, Large, Hall.
/// Within a type the order is width-major, then depth, then height.
pub fn enumerate_rooms(ranges: &TypeGrids) -> Result<Catalog> {
    let mut rooms = Vec::new();
    for t in RoomType::ALL {
        let g = ranges.grid(t);
        let ws = expand_range(&g.width);
        let ds = expand_range(&g.depth);
        let hs = expand_range(&g.height);
        if ws.is_empty() || ds.is_empty() || hs.is_empty() {
            return Err(Error::Validation(format!("empty grid expansion for type {t}")));
        }
        for &w in &ws {
            for &d in &ds {
                for &h in &hs {
                    rooms.push(RoomSpec {
                        class_id: rooms.len() as u32,
                        room_type: t,
                        width_mm: w,
                        depth_mm: d,
                        height_mm: h,
                    });
                }
            }
        }
    }
    let catalog = Catalog { rooms, type_ranges: *ranges };
    catalog.validate()?;
    Ok(catalog)
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rooms.is_empty()
    }

    pub fn room(&self, class_id: u32) -> Result<&RoomSpec> {
        self.rooms
            .get(class_id as usize)
            .ok_or_else(|| Error::Lookup(format!("class id {class_id} out of range (M={})", self.len())))
    }

    /// Room type of a class id; the 110-to-3 collapse uses this lookup.
    pub fn room_type_of(&self, class_id: u32) -> Result<RoomType> {
        Ok(self.room(class_id)?.room_type)
    }

    /// Remove the listed `(type, width_mm, depth_mm, height_mm)` rooms and
    /// reassign consecutive class ids. Exclusions must match existing rooms.
    pub fn with_exclusions(&self, exclusions: &[(RoomType, i64, i64, i64)]) -> Result<Catalog> {
        let excl: BTreeSet<(usize, i64, i64, i64)> = exclusions
            .iter()
            .map(|&(t, w, d, h)| (t.index(), w, d, h))
            .collect();
        for &(t, w, d, h) in &excl {
            let hit = self.rooms.iter().any(|r| {
                r.room_type.index() == t && r.width_mm == w && r.depth_mm == d && r.height_mm == h
            });
            if !hit {
                return Err(Error::Validation(format!(
                    "exclusion ({}, {}, {}, {}) matches no room",
                    RoomType::ALL[t],
                    mm_to_meters(w),
                    mm_to_meters(d),
                    mm_to_meters(h)
                )));
            }
        }
        let mut rooms = Vec::new();
        for r in &self.rooms {
            let key = (r.room_type.index(), r.width_mm, r.depth_mm, r.height_mm);
            if excl.contains(&key) {
                continue;
            }
            rooms.push(RoomSpec { class_id: rooms.len() as u32, ..*r });
        }
        let out = Catalog { rooms, type_ranges: self.type_ranges };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rooms.is_empty() {
            return Err(Error::Validation("catalog has no rooms".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, r) in self.rooms.iter().enumerate() {
            if r.class_id as usize != i {
                return Err(Error::Validation(format!(
                    "class ids must be consecutive 0..M-1; index {i} holds id {}",
                    r.class_id
                )));
            }
            if r.width_mm <= 0 || r.depth_mm <= 0 || r.height_mm <= 0 {
                return Err(Error::Validation(format!("room {i}: non-positive dimension")));
            }
            let g = self.type_ranges.grid(r.room_type);
            if !g.width.contains_mm(r.width_mm)
                || !g.depth.contains_mm(r.depth_mm)
                || !g.height.contains_mm(r.height_mm)
            {
                return Err(Error::Validation(format!(
                    "room {i}: dimensions off the {} grid",
                    r.room_type
                )));
            }
            if !seen.insert((r.room_type.index(), r.width_mm, r.depth_mm, r.height_mm)) {
                return Err(Error::Validation(format!("room {i}: duplicate geometry")));
            }
        }
        Ok(())
    }

    /// Serialize as the versioned human-readable catalog format:
    /// a header line, nine `range` lines, then one `room` line per record.
    pub fn to_text(&self, config_hash: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CATALOG_MAGIC} v{CATALOG_VERSION} config={config_hash:016x}");
        for t in RoomType::ALL {
            let g = self.type_ranges.grid(t);
            for (axis, r) in [("width", g.width), ("depth", g.depth), ("height", g.height)] {
                let _ = writeln!(
                    s,
                    "range {} {} {:.3} {:.3} {:.3}",
                    t,
                    axis,
                    r.min_m(),
                    r.max_m(),
                    r.hop_m()
                );
            }
        }
        for r in &self.rooms {
            let _ = writeln!(
                s,
                "room {} {} {:.3} {:.3} {:.3}",
                r.class_id,
                r.room_type,
                r.width_m(),
                r.depth_m(),
                r.height_m()
            );
        }
        s
    }

    /// Parse the text format produced by [`Catalog::to_text`]. Returns the
    /// catalog and the config hash recorded in the header.
    pub fn from_text(text: &str) -> Result<(Catalog, u64)> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty catalog file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(CATALOG_MAGIC) {
            return Err(Error::Format("not a catalog file (bad magic)".into()));
        }
        let version = fields
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::Format("catalog header: missing version".into()))?;
        if version != CATALOG_VERSION {
            return Err(Error::Format(format!("unsupported catalog version {version}")));
        }
        let config_hash = fields
            .next()
            .and_then(|v| v.strip_prefix("config="))
            .and_then(|v| u64::from_str_radix(v, 16).ok())
            .ok_or_else(|| Error::Format("catalog header: missing config hash".into()))?;

        let parse_m = |tok: Option<&str>, what: &str| -> Result<f64> {
            tok.and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("catalog: bad {what} field")))
        };

        let mut ranges: Vec<(RoomType, String, DimensionRange)> = Vec::new();
        let mut rooms = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split_whitespace();
            match f.next() {
                Some("range") => {
                    let t = RoomType::parse(f.next().unwrap_or(""))?;
                    let axis = f.next().unwrap_or("").to_string();
                    let min = parse_m(f.next(), "range min")?;
                    let max = parse_m(f.next(), "range max")?;
                    let hop = parse_m(f.next(), "range hop")?;
                    ranges.push((t, axis, DimensionRange::new(min, max, hop)?));
                }
                Some("room") => {
                    let id: u32 = f
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::Format("catalog: bad room id".into()))?;
                    let t = RoomType::parse(f.next().unwrap_or(""))?;
                    let w = parse_m(f.next(), "room width")?;
                    let d = parse_m(f.next(), "room depth")?;
                    let h = parse_m(f.next(), "room height")?;
                    rooms.push(RoomSpec {
                        class_id: id,
                        room_type: t,
                        width_mm: meters_to_mm(w, "room width")?,
                        depth_mm: meters_to_mm(d, "room depth")?,
                        height_mm: meters_to_mm(h, "room height")?,
                    });
                }
                Some(other) => {
                    return Err(Error::Format(format!("catalog: unknown record '{other}'")))
                }
                None => {}
            }
        }

        let find = |t: RoomType, axis: &str| -> Result<DimensionRange> {
            ranges
                .iter()
                .find(|(rt, a, _)| *rt == t && a == axis)
                .map(|(_, _, r)| *r)
                .ok_or_else(|| Error::Format(format!("catalog: missing range {t} {axis}")))
        };
        let mut grids = Vec::new();
        for t in RoomType::ALL {
            grids.push(TypeGrid {
                width: find(t, "width")?,
                depth: find(t, "depth")?,
                height: find(t, "height")?,
            });
        }
        let catalog = Catalog {
            rooms,
            type_ranges: TypeGrids { grids: [grids[0], grids[1], grids[2]] },
        };
        catalog.validate()?;
        Ok((catalog, config_hash))
    }
}

/// Exclusion list that trims the 124-room reference grid to a
/// 110-class count (16 small, 52 large, 42 halls). The reference grids alone
/// give 18/64/42, and no reduction rule accompanies them; this list simply
/// drops the last 2 small and last 12 large rooms in enumeration order, as an
/// explicit, documented choice rather than a guessed rule.
pub fn reference_110_exclusions() -> Vec<(RoomType, i64, i64, i64)> {
    let full = enumerate_rooms(&TypeGrids::reference()).expect("reference grid");
    let mut out = Vec::new();
    let smalls: Vec<&RoomSpec> = full.rooms.iter().filter(|r| r.room_type == RoomType::Small).collect();
    let larges: Vec<&RoomSpec> = full.rooms.iter().filter(|r| r.room_type == RoomType::Large).collect();
    for r in smalls.iter().rev().take(2) {
        out.push((r.room_type, r.width_mm, r.depth_mm, r.height_mm));
    }
    for r in larges.iter().rev().take(12) {
        out.push((r.room_type, r.width_mm, r.depth_mm, r.height_mm));
    }
    out
}
