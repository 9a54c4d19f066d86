//! In-memory OpenStreetMap documents: parsing, indexing, address queries,
//! building geometry, and online map updates.
//!
//! A document is immutable per revision. Updates produce a new document with
//! the revision incremented by one, so readers can hold on to a snapshot
//! while a writer publishes the next revision.

pub mod project;
pub mod xml;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::explore::DoorObservation;
use crate::geom::{self, LocalPoint};
pub use project::{project, unproject, GeoBounds, GeoPoint, ProjectionError};
pub use xml::{parse_osm, serialize_osm};

pub type Tags = BTreeMap<String, String>;

/// Tag keys that carry the semantic class of an element.
pub const SEMANTIC_KEYS: &[&str] = &[
    "amenity", "barrier", "building", "entrance", "highway", "landuse", "leisure", "natural",
    "place", "waterway",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Node,
    Way,
    Relation,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Node => "node",
            ElementKind::Way => "way",
            ElementKind::Relation => "relation",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typed reference to an element; OSM id spaces are per element kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementRef {
    pub kind: ElementKind,
    pub id: i64,
}

impl ElementRef {
    pub fn node(id: i64) -> Self {
        Self {
            kind: ElementKind::Node,
            id,
        }
    }
    pub fn way(id: i64) -> Self {
        Self {
            kind: ElementKind::Way,
            id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: i64,
    pub point: GeoPoint,
    pub tags: Tags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Way {
    pub id: i64,
    pub nodes: Vec<i64>,
    pub tags: Tags,
}

impl Way {
    pub fn is_closed(&self) -> bool {
        self.nodes.len() >= 4 && self.nodes.first() == self.nodes.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationMember {
    pub kind: ElementKind,
    pub id: i64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub id: i64,
    pub members: Vec<RelationMember>,
    pub tags: Tags,
}

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("malformed OSM XML: {0}")]
    Malformed(String),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: ElementKind, id: i64 },
    #[error("dangling reference to {kind} {id}")]
    DanglingReference { kind: ElementKind, id: i64 },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("element {0} is not a building")]
    NotABuilding(i64),
    #[error("way {0} is not a closed ring")]
    OpenRing(i64),
    #[error("building {0} has a degenerate or self-intersecting ring")]
    DegenerateRing(i64),
    #[error("address not found: {0}")]
    AddressNotFound(String),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("observation at ({lat}, {lon}) is outside the document bounds")]
    OutsideBounds { lat: f64, lon: f64 },
}

/// Normalize an address token: lowercase, trimmed, inner whitespace collapsed.
pub fn normalize_token(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Address hierarchy levels from highest (coarsest) to lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddressLevel {
    Region,
    Street,
    Building,
    Unit,
}

impl AddressLevel {
    /// All levels ordered from lowest (finest) to highest.
    pub const LOW_TO_HIGH: [AddressLevel; 4] = [
        AddressLevel::Unit,
        AddressLevel::Building,
        AddressLevel::Street,
        AddressLevel::Region,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AddressLevel::Region => "region",
            AddressLevel::Street => "street",
            AddressLevel::Building => "building",
            AddressLevel::Unit => "unit",
        }
    }
}

impl fmt::Display for AddressLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hierarchical delivery address. Values are stored normalized.
///
/// A unit is meaningless without its building, so `unit` requires `building`.
/// Region and street are optional context: real instructions frequently name
/// a building and its region while omitting the street.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Address {
    pub region: Option<String>,
    pub street: Option<String>,
    pub building: Option<String>,
    pub unit: Option<String>,
}

impl Address {
    pub fn new(
        region: Option<&str>,
        street: Option<&str>,
        building: Option<&str>,
        unit: Option<&str>,
    ) -> Result<Self, OsmError> {
        let norm = |v: Option<&str>| v.map(normalize_token).filter(|s| !s.is_empty());
        let addr = Address {
            region: norm(region),
            street: norm(street),
            building: norm(building),
            unit: norm(unit),
        };
        addr.check()?;
        Ok(addr)
    }

    pub fn check(&self) -> Result<(), OsmError> {
        if self.region.is_none()
            && self.street.is_none()
            && self.building.is_none()
            && self.unit.is_none()
        {
            return Err(OsmError::InvalidAddress("no levels present".into()));
        }
        if self.unit.is_some() && self.building.is_none() {
            return Err(OsmError::InvalidAddress(
                "unit given without a building".into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, level: AddressLevel) -> Option<&str> {
        match level {
            AddressLevel::Region => self.region.as_deref(),
            AddressLevel::Street => self.street.as_deref(),
            AddressLevel::Building => self.building.as_deref(),
            AddressLevel::Unit => self.unit.as_deref(),
        }
    }

    /// Requested levels from lowest to highest.
    pub fn levels_low_to_high(&self) -> Vec<AddressLevel> {
        AddressLevel::LOW_TO_HIGH
            .iter()
            .copied()
            .filter(|l| self.get(*l).is_some())
            .collect()
    }

    /// All present (level, value) pairs, highest first.
    pub fn entries(&self) -> Vec<(AddressLevel, &str)> {
        let mut out = Vec::new();
        for level in [
            AddressLevel::Region,
            AddressLevel::Street,
            AddressLevel::Building,
            AddressLevel::Unit,
        ] {
            if let Some(v) = self.get(level) {
                out.push((level, v));
            }
        }
        out
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries()
            .iter()
            .map(|(l, v)| format!("{l}={v}"))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// Outcome of resolving an address against the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddressResolution {
    pub resolved_level: AddressLevel,
    pub element: ElementRef,
    pub position: GeoPoint,
    /// Requested levels strictly below the resolved level that the map lacks.
    pub missing_levels: Vec<AddressLevel>,
}

/// Building footprint in local coordinates: outer ring counter-clockwise,
/// holes clockwise. Rings are open (no repeated closing vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub element: ElementRef,
    pub outer: Vec<LocalPoint>,
    pub holes: Vec<Vec<LocalPoint>>,
}

impl Footprint {
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| geom::ring_area(h)).sum();
        geom::ring_area(&self.outer) - holes
    }

    pub fn centroid(&self) -> LocalPoint {
        geom::ring_centroid(&self.outer)
    }
}

/// Uniform grid over the document extent mapping cells to element refs.
/// Rebuilt wholesale on every revision; maps here are kilobytes.
#[derive(Debug, Clone, Default)]
struct SpatialIndex {
    bounds: GeoBounds,
    dims: (usize, usize),
    cells: Vec<Vec<ElementRef>>,
    boxes: BTreeMap<ElementRef, GeoBounds>,
}

impl SpatialIndex {
    fn build(boxes: BTreeMap<ElementRef, GeoBounds>, bounds: GeoBounds) -> Self {
        if bounds.is_empty() || boxes.is_empty() {
            return Self {
                bounds,
                dims: (0, 0),
                cells: Vec::new(),
                boxes,
            };
        }
        let n = boxes.len();
        let side = ((n as f64).sqrt().ceil() as usize).clamp(1, 64);
        let dims = (side, side);
        let mut cells = vec![Vec::new(); side * side];
        for (eref, b) in &boxes {
            let (c0, r0) = Self::cell_of(&bounds, dims, b.min_lon, b.min_lat);
            let (c1, r1) = Self::cell_of(&bounds, dims, b.max_lon, b.max_lat);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * side + c].push(*eref);
                }
            }
        }
        Self {
            bounds,
            dims,
            cells,
            boxes,
        }
    }

    fn cell_of(bounds: &GeoBounds, dims: (usize, usize), lon: f64, lat: f64) -> (usize, usize) {
        let w = (bounds.max_lon - bounds.min_lon).max(1e-12);
        let h = (bounds.max_lat - bounds.min_lat).max(1e-12);
        let c = (((lon - bounds.min_lon) / w * dims.0 as f64) as isize)
            .clamp(0, dims.0 as isize - 1) as usize;
        let r = (((lat - bounds.min_lat) / h * dims.1 as f64) as isize)
            .clamp(0, dims.1 as isize - 1) as usize;
        (c, r)
    }

    fn query(&self, bbox: &GeoBounds) -> Vec<ElementRef> {
        if self.dims.0 == 0 || bbox.is_empty() || !bbox.intersects(&self.bounds) {
            return Vec::new();
        }
        let (c0, r0) = Self::cell_of(&self.bounds, self.dims, bbox.min_lon, bbox.min_lat);
        let (c1, r1) = Self::cell_of(&self.bounds, self.dims, bbox.max_lon, bbox.max_lat);
        let mut out = BTreeSet::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                for eref in &self.cells[r * self.dims.0 + c] {
                    if self.boxes[eref].intersects(bbox) {
                        out.insert(*eref);
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Address lookup tables, keyed by normalized tag values.
#[derive(Debug, Clone, Default)]
struct AddressIndex {
    /// (building value, unit value) -> entrance node.
    units: BTreeMap<(String, String), i64>,
    /// housenumber or name -> building way/relation.
    buildings: BTreeMap<String, ElementRef>,
    /// street name -> highway way.
    streets: BTreeMap<String, i64>,
    /// place name -> element.
    regions: BTreeMap<String, ElementRef>,
}

/// Versioned in-memory OSM map with spatial and address indexes.
#[derive(Debug, Clone)]
pub struct OsmDocument {
    nodes: BTreeMap<i64, Node>,
    ways: BTreeMap<i64, Way>,
    relations: BTreeMap<i64, Relation>,
    revision: u64,
    bounds: GeoBounds,
    origin: GeoPoint,
    node_locals: BTreeMap<i64, LocalPoint>,
    spatial: SpatialIndex,
    address: AddressIndex,
}

impl OsmDocument {
    /// Assemble a revision-0 document, verifying referential integrity.
    pub fn from_parts(
        nodes: BTreeMap<i64, Node>,
        ways: BTreeMap<i64, Way>,
        relations: BTreeMap<i64, Relation>,
    ) -> Result<Self, OsmError> {
        for way in ways.values() {
            for r in &way.nodes {
                if !nodes.contains_key(r) {
                    return Err(OsmError::DanglingReference {
                        kind: ElementKind::Node,
                        id: *r,
                    });
                }
            }
        }
        for rel in relations.values() {
            for m in &rel.members {
                let found = match m.kind {
                    ElementKind::Node => nodes.contains_key(&m.id),
                    ElementKind::Way => ways.contains_key(&m.id),
                    ElementKind::Relation => relations.contains_key(&m.id),
                };
                if !found {
                    return Err(OsmError::DanglingReference {
                        kind: m.kind,
                        id: m.id,
                    });
                }
            }
        }
        let mut doc = Self {
            nodes,
            ways,
            relations,
            revision: 0,
            bounds: GeoBounds::empty(),
            origin: GeoPoint::new(0.0, 0.0),
            node_locals: BTreeMap::new(),
            spatial: SpatialIndex::default(),
            address: AddressIndex::default(),
        };
        doc.rebuild()?;
        Ok(doc)
    }

    fn rebuild(&mut self) -> Result<(), OsmError> {
        let mut bounds = GeoBounds::empty();
        for node in self.nodes.values() {
            node.point.validate()?;
            bounds.expand(node.point);
        }
        self.bounds = bounds;
        self.origin = if bounds.is_empty() {
            GeoPoint::new(0.0, 0.0)
        } else {
            bounds.center()
        };

        self.node_locals.clear();
        for node in self.nodes.values() {
            self.node_locals
                .insert(node.id, project(node.point, self.origin)?);
        }

        let mut boxes = BTreeMap::new();
        for node in self.nodes.values() {
            let mut b = GeoBounds::empty();
            b.expand(node.point);
            boxes.insert(ElementRef::node(node.id), b);
        }
        for way in self.ways.values() {
            let mut b = GeoBounds::empty();
            for r in &way.nodes {
                b.expand(self.nodes[r].point);
            }
            boxes.insert(ElementRef::way(way.id), b);
        }
        for rel in self.relations.values() {
            let mut b = GeoBounds::empty();
            for m in &rel.members {
                match m.kind {
                    ElementKind::Node => b.expand(self.nodes[&m.id].point),
                    ElementKind::Way => {
                        for r in &self.ways[&m.id].nodes {
                            b.expand(self.nodes[r].point);
                        }
                    }
                    ElementKind::Relation => {}
                }
            }
            boxes.insert(
                ElementRef {
                    kind: ElementKind::Relation,
                    id: rel.id,
                },
                b,
            );
        }
        self.spatial = SpatialIndex::build(boxes, self.bounds);

        let mut index = AddressIndex::default();
        for node in self.nodes.values() {
            if let (Some(house), Some(unit)) =
                (node.tags.get("addr:housenumber"), node.tags.get("addr:unit"))
            {
                index
                    .units
                    .entry((normalize_token(house), normalize_token(unit)))
                    .or_insert(node.id);
            }
            if let (Some(place), Some(name)) = (node.tags.get("place"), node.tags.get("name")) {
                let _ = place;
                index
                    .regions
                    .entry(normalize_token(name))
                    .or_insert(ElementRef::node(node.id));
            }
        }
        for way in self.ways.values() {
            if way.tags.contains_key("building") {
                if let Some(house) = way.tags.get("addr:housenumber") {
                    index
                        .buildings
                        .entry(normalize_token(house))
                        .or_insert(ElementRef::way(way.id));
                }
                if let Some(name) = way.tags.get("name") {
                    index
                        .buildings
                        .entry(normalize_token(name))
                        .or_insert(ElementRef::way(way.id));
                }
            }
            if way.tags.contains_key("highway") {
                if let Some(name) = way.tags.get("name") {
                    index.streets.entry(normalize_token(name)).or_insert(way.id);
                }
            }
            if let (Some(_), Some(name)) = (way.tags.get("place"), way.tags.get("name")) {
                index
                    .regions
                    .entry(normalize_token(name))
                    .or_insert(ElementRef::way(way.id));
            }
        }
        for rel in self.relations.values() {
            let eref = ElementRef {
                kind: ElementKind::Relation,
                id: rel.id,
            };
            if rel.tags.contains_key("building")
                || rel.tags.get("type").map(String::as_str) == Some("multipolygon")
            {
                if let Some(house) = rel.tags.get("addr:housenumber") {
                    index.buildings.entry(normalize_token(house)).or_insert(eref);
                }
                if let Some(name) = rel.tags.get("name") {
                    index.buildings.entry(normalize_token(name)).or_insert(eref);
                }
            }
        }
        self.address = index;
        Ok(())
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn bounds(&self) -> GeoBounds {
        self.bounds
    }

    /// Projection origin for the local frame (center of the document extent).
    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + self.ways.len() + self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, id: i64) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn way(&self, id: i64) -> Option<&Way> {
        self.ways.get(&id)
    }

    pub fn relation(&self, id: i64) -> Option<&Relation> {
        self.relations.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn ways(&self) -> impl Iterator<Item = &Way> {
        self.ways.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    /// Local (projected) coordinates of a node.
    pub fn node_local(&self, id: i64) -> Option<LocalPoint> {
        self.node_locals.get(&id).copied()
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint, ProjectionError> {
        project(p, self.origin)
    }

    pub fn unproject(&self, p: LocalPoint) -> Result<GeoPoint, ProjectionError> {
        unproject(p, self.origin)
    }

    /// Elements whose bounding box intersects `bbox`.
    pub fn elements_in(&self, bbox: &GeoBounds) -> Vec<ElementRef> {
        self.spatial.query(bbox)
    }

    pub fn tags_of(&self, eref: ElementRef) -> Option<&Tags> {
        match eref.kind {
            ElementKind::Node => self.nodes.get(&eref.id).map(|n| &n.tags),
            ElementKind::Way => self.ways.get(&eref.id).map(|w| &w.tags),
            ElementKind::Relation => self.relations.get(&eref.id).map(|r| &r.tags),
        }
    }

    /// Ways carrying a given tag key.
    pub fn ways_with_key<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Way> {
        self.ways.values().filter(move |w| w.tags.contains_key(key))
    }

    /// Representative position of an element (node position, ring centroid,
    /// or bounding-box center).
    pub fn element_position(&self, eref: ElementRef) -> Option<GeoPoint> {
        match eref.kind {
            ElementKind::Node => self.nodes.get(&eref.id).map(|n| n.point),
            ElementKind::Way => {
                let way = self.ways.get(&eref.id)?;
                if way.is_closed() {
                    let ring: Vec<LocalPoint> = way
                        .nodes
                        .iter()
                        .filter_map(|r| self.node_local(*r))
                        .collect();
                    let c = geom::ring_centroid(&ring);
                    self.unproject(c).ok()
                } else {
                    let mid = way.nodes.get(way.nodes.len() / 2)?;
                    self.nodes.get(mid).map(|n| n.point)
                }
            }
            ElementKind::Relation => {
                let b = self.spatial.boxes.get(&eref)?;
                Some(b.center())
            }
        }
    }

    /// Extract a building footprint in local coordinates.
    ///
    /// The element must be tagged `building=*` and be a closed way or a
    /// multipolygon relation. The outer ring is normalized counter-clockwise,
    /// holes clockwise.
    pub fn building_footprint(&self, eref: ElementRef) -> Result<Footprint, OsmError> {
        match eref.kind {
            ElementKind::Way => {
                let way = self
                    .ways
                    .get(&eref.id)
                    .ok_or(OsmError::NotABuilding(eref.id))?;
                if !way.tags.contains_key("building") {
                    return Err(OsmError::NotABuilding(eref.id));
                }
                let outer = self.way_ring(way, true)?;
                Ok(Footprint {
                    element: eref,
                    outer,
                    holes: Vec::new(),
                })
            }
            ElementKind::Relation => {
                let rel = self
                    .relations
                    .get(&eref.id)
                    .ok_or(OsmError::NotABuilding(eref.id))?;
                let is_building = rel.tags.contains_key("building");
                let is_multipolygon =
                    rel.tags.get("type").map(String::as_str) == Some("multipolygon");
                if !is_building || !is_multipolygon {
                    return Err(OsmError::NotABuilding(eref.id));
                }
                let mut outer: Option<Vec<LocalPoint>> = None;
                let mut holes = Vec::new();
                for m in &rel.members {
                    if m.kind != ElementKind::Way {
                        continue;
                    }
                    let way = self.ways.get(&m.id).ok_or(OsmError::DanglingReference {
                        kind: ElementKind::Way,
                        id: m.id,
                    })?;
                    match m.role.as_str() {
                        "outer" => {
                            if outer.is_none() {
                                outer = Some(self.way_ring(way, true)?);
                            }
                        }
                        "inner" => holes.push(self.way_ring(way, false)?),
                        _ => {}
                    }
                }
                let outer = outer.ok_or(OsmError::OpenRing(eref.id))?;
                Ok(Footprint {
                    element: eref,
                    outer,
                    holes,
                })
            }
            ElementKind::Node => Err(OsmError::NotABuilding(eref.id)),
        }
    }

    fn way_ring(&self, way: &Way, ccw: bool) -> Result<Vec<LocalPoint>, OsmError> {
        if !way.is_closed() {
            return Err(OsmError::OpenRing(way.id));
        }
        let mut ring: Vec<LocalPoint> = way.nodes[..way.nodes.len() - 1]
            .iter()
            .filter_map(|r| self.node_local(*r))
            .collect();
        if ring.len() < 3 || !geom::ring_is_simple(&ring) {
            return Err(OsmError::DegenerateRing(way.id));
        }
        if geom::is_ccw(&ring) != ccw {
            ring.reverse();
        }
        Ok(ring)
    }

    /// All building footprints in the document.
    pub fn building_footprints(&self) -> Vec<Footprint> {
        let mut out = Vec::new();
        for way in self.ways.values() {
            if way.tags.contains_key("building") {
                if let Ok(fp) = self.building_footprint(ElementRef::way(way.id)) {
                    out.push(fp);
                }
            }
        }
        for rel in self.relations.values() {
            if rel.tags.contains_key("building") {
                let eref = ElementRef {
                    kind: ElementKind::Relation,
                    id: rel.id,
                };
                if let Ok(fp) = self.building_footprint(eref) {
                    out.push(fp);
                }
            }
        }
        out
    }

    /// Resolve an address, trying levels from lowest to highest and stopping
    /// at the first hit.
    pub fn query_address(&self, address: &Address) -> Result<AddressResolution, OsmError> {
        address.check()?;
        let requested = address.levels_low_to_high();
        for level in &requested {
            let hit: Option<ElementRef> = match level {
                AddressLevel::Unit => {
                    let building = address.building.as_deref().unwrap_or_default();
                    let unit = address.unit.as_deref().unwrap_or_default();
                    self.address
                        .units
                        .get(&(building.to_string(), unit.to_string()))
                        .map(|id| ElementRef::node(*id))
                }
                AddressLevel::Building => address
                    .building
                    .as_deref()
                    .and_then(|b| self.address.buildings.get(b))
                    .copied(),
                AddressLevel::Street => address
                    .street
                    .as_deref()
                    .and_then(|s| self.address.streets.get(s))
                    .map(|id| ElementRef::way(*id)),
                AddressLevel::Region => address
                    .region
                    .as_deref()
                    .and_then(|r| self.address.regions.get(r))
                    .copied(),
            };
            if let Some(element) = hit {
                let position = self
                    .element_position(element)
                    .ok_or_else(|| OsmError::AddressNotFound(address.to_string()))?;
                let missing_levels = requested
                    .iter()
                    .copied()
                    .filter(|l| l > level)
                    .collect::<Vec<_>>();
                return Ok(AddressResolution {
                    resolved_level: *level,
                    element,
                    position,
                    missing_levels,
                });
            }
        }
        Err(OsmError::AddressNotFound(address.to_string()))
    }

    /// Record a detected door as an entrance node, producing the next
    /// document revision. Re-applying an identical observation is a no-op
    /// that returns a document with the same revision.
    pub fn apply_map_update(
        &self,
        observation: &DoorObservation,
        address: &Address,
    ) -> Result<OsmDocument, OsmError> {
        address.check()?;
        if !self.bounds.contains(observation.position) {
            return Err(OsmError::OutsideBounds {
                lat: observation.position.lat,
                lon: observation.position.lon,
            });
        }
        let house = normalize_token(&observation.house_number);
        let unit = normalize_token(&observation.unit);

        // Idempotence: identical entrance within 1 m keeps the revision.
        let obs_local = self.project(observation.position)?;
        for node in self.nodes.values() {
            if node.tags.get("entrance").map(String::as_str) != Some("yes") {
                continue;
            }
            let same_tags = node
                .tags
                .get("addr:housenumber")
                .map(|v| normalize_token(v) == house)
                .unwrap_or(false)
                && node
                    .tags
                    .get("addr:unit")
                    .map(|v| normalize_token(v) == unit)
                    .unwrap_or(false);
            if same_tags {
                let d = self
                    .node_local(node.id)
                    .map(|p| p.dist(&obs_local))
                    .unwrap_or(f64::INFINITY);
                if d <= 1.0 {
                    return Ok(self.clone());
                }
            }
        }

        let mut next = self.clone();
        let new_id = self.nodes.keys().max().copied().unwrap_or(0) + 1;
        let mut tags = Tags::new();
        tags.insert("entrance".into(), "yes".into());
        tags.insert("addr:housenumber".into(), house);
        tags.insert("addr:unit".into(), unit);
        next.nodes.insert(
            new_id,
            Node {
                id: new_id,
                point: observation.position,
                tags,
            },
        );
        next.revision = self.revision + 1;
        next.rebuild()?;
        Ok(next)
    }

    /// Sorted, deduplicated semantic labels present in a region.
    pub fn element_vocabulary(&self, bbox: &GeoBounds) -> Vec<String> {
        let mut labels = BTreeSet::new();
        for eref in self.elements_in(bbox) {
            if let Some(tags) = self.tags_of(eref) {
                for key in SEMANTIC_KEYS {
                    if tags.contains_key(*key) {
                        labels.insert((*key).to_string());
                    }
                }
            }
        }
        labels.into_iter().collect()
    }

    pub fn serialize(&self) -> String {
        serialize_osm(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FIXTURE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6" generator="test">
  <node id="1" lat="39.0000" lon="117.0000"/>
  <node id="2" lat="39.0010" lon="117.0000"/>
  <node id="3" lat="39.0010" lon="117.0010"/>
  <node id="4" lat="39.0000" lon="117.0010"/>
  <node id="5" lat="39.0002" lon="117.0002"/>
  <node id="6" lat="39.0002" lon="117.0004"/>
  <node id="7" lat="39.0004" lon="117.0004"/>
  <node id="8" lat="39.0004" lon="117.0002"/>
  <node id="9" lat="39.0006" lon="117.0006"/>
  <node id="10" lat="39.0006" lon="117.0008"/>
  <node id="11" lat="39.0008" lon="117.0008"/>
  <node id="12" lat="39.0008" lon="117.0006"/>
  <node id="20" lat="39.0002" lon="117.0003">
    <tag k="entrance" v="yes"/>
    <tag k="addr:housenumber" v="16"/>
    <tag k="addr:unit" v="2"/>
  </node>
  <node id="30" lat="39.0005" lon="117.0005">
    <tag k="place" v="suburb"/>
    <tag k="name" v="Green Town"/>
  </node>
  <way id="100">
    <nd ref="5"/>
    <nd ref="6"/>
    <nd ref="7"/>
    <nd ref="8"/>
    <nd ref="5"/>
    <tag k="building" v="yes"/>
    <tag k="addr:housenumber" v="16"/>
  </way>
  <way id="101">
    <nd ref="9"/>
    <nd ref="10"/>
    <nd ref="11"/>
    <nd ref="12"/>
    <nd ref="9"/>
    <tag k="building" v="yes"/>
    <tag k="addr:housenumber" v="12"/>
  </way>
  <way id="102">
    <nd ref="1"/>
    <nd ref="2"/>
    <nd ref="3"/>
    <nd ref="4"/>
    <tag k="highway" v="residential"/>
    <tag k="name" v="Maple Street"/>
  </way>
</osm>
"#;

    fn fixture() -> OsmDocument {
        parse_osm(FIXTURE.as_bytes()).unwrap()
    }

    #[test]
    fn parse_minimal_file() {
        let xml = r#"<osm version="0.6"><node id="1" lat="1.0" lon="2.0"/></osm>"#;
        let doc = parse_osm(xml.as_bytes()).unwrap();
        assert_eq!(doc.len(), 1);
        assert_eq!(doc.revision(), 0);
    }

    #[test]
    fn dangling_reference_is_reported_with_id() {
        let xml = r#"<osm version="0.6">
            <node id="1" lat="1.0" lon="2.0"/>
            <way id="2"><nd ref="1"/><nd ref="99"/></way>
        </osm>"#;
        let err = parse_osm(xml.as_bytes()).unwrap_err();
        match err {
            OsmError::DanglingReference { id, .. } => assert_eq!(id, 99),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let xml = r#"<osm version="0.6">
            <node id="1" lat="1.0" lon="2.0"/>
            <node id="1" lat="1.5" lon="2.5"/>
        </osm>"#;
        assert!(matches!(
            parse_osm(xml.as_bytes()),
            Err(OsmError::DuplicateId { .. })
        ));
    }

    #[test]
    fn malformed_xml_rejected() {
        assert!(matches!(
            parse_osm(b"<osm><node id=\"1\" lat=\"x\" lon=\"2\"/></osm>"),
            Err(OsmError::Malformed(_))
        ));
        assert!(parse_osm(b"not xml at all").is_err());
    }

    #[test]
    fn fixture_buildings_by_tag_query() {
        let doc = fixture();
        let buildings: Vec<_> = doc
            .ways()
            .filter(|w| w.tags.get("building").is_some())
            .collect();
        assert_eq!(buildings.len(), 2);
        let vocab = doc.element_vocabulary(&doc.bounds());
        assert_eq!(vocab, vec!["building", "entrance", "highway", "place"]);
    }

    #[test]
    fn footprint_square_ccw_and_area() {
        let doc = fixture();
        let fp = doc.building_footprint(ElementRef::way(100)).unwrap();
        assert_eq!(fp.outer.len(), 4);
        assert!(geom::is_ccw(&fp.outer));
        // 0.0002 deg per side; the east-west side shrinks by cos(origin lat)
        let side_y = 0.0002 * std::f64::consts::PI / 180.0 * project::EARTH_RADIUS_M;
        let side_x = side_y * (39.0005_f64.to_radians().cos());
        assert_relative_eq!(fp.area(), side_x * side_y, max_relative = 1e-6);
    }

    #[test]
    fn footprint_orientation_normalized() {
        // way 100 reversed would be clockwise; build a doc where the ring is CW
        let xml = r#"<osm version="0.6">
          <node id="1" lat="0.0" lon="0.0"/>
          <node id="2" lat="0.0001" lon="0.0"/>
          <node id="3" lat="0.0001" lon="0.0001"/>
          <node id="4" lat="0.0" lon="0.0001"/>
          <way id="10">
            <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="1"/>
            <tag k="building" v="yes"/>
          </way>
        </osm>"#;
        let doc = parse_osm(xml.as_bytes()).unwrap();
        let fp = doc.building_footprint(ElementRef::way(10)).unwrap();
        assert!(geom::is_ccw(&fp.outer));
    }

    #[test]
    fn footprint_shoelace_matches_l_shape() {
        // L-shaped building: 6 vertices
        let xml = r#"<osm version="0.6">
          <node id="1" lat="0.0" lon="0.0"/>
          <node id="2" lat="0.0" lon="0.0002"/>
          <node id="3" lat="0.0001" lon="0.0002"/>
          <node id="4" lat="0.0001" lon="0.0001"/>
          <node id="5" lat="0.0002" lon="0.0001"/>
          <node id="6" lat="0.0002" lon="0.0"/>
          <way id="10">
            <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="5"/><nd ref="6"/><nd ref="1"/>
            <tag k="building" v="yes"/>
          </way>
        </osm>"#;
        let doc = parse_osm(xml.as_bytes()).unwrap();
        let fp = doc.building_footprint(ElementRef::way(10)).unwrap();
        // shoelace oracle straight over the projected input vertices
        let pts: Vec<LocalPoint> = [1, 2, 3, 4, 5, 6]
            .iter()
            .map(|id| doc.node_local(*id).unwrap())
            .collect();
        let mut oracle = 0.0;
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            oracle += a.x * b.y - b.x * a.y;
        }
        assert_relative_eq!(fp.area(), oracle.abs() * 0.5, epsilon = 1e-9);
    }

    #[test]
    fn footprint_rejects_non_building_and_open_ring() {
        let doc = fixture();
        assert!(matches!(
            doc.building_footprint(ElementRef::way(102)),
            Err(OsmError::NotABuilding(102))
        ));
        let xml = r#"<osm version="0.6">
          <node id="1" lat="0.0" lon="0.0"/>
          <node id="2" lat="0.0001" lon="0.0"/>
          <node id="3" lat="0.0001" lon="0.0001"/>
          <way id="10">
            <nd ref="1"/><nd ref="2"/><nd ref="3"/>
            <tag k="building" v="yes"/>
          </way>
        </osm>"#;
        let doc = parse_osm(xml.as_bytes()).unwrap();
        assert!(matches!(
            doc.building_footprint(ElementRef::way(10)),
            Err(OsmError::OpenRing(10))
        ));
    }

    #[test]
    fn address_resolution_levels() {
        let doc = fixture();
        // building 16 has an entrance node with addr:unit=2
        let addr = Address::new(Some("Green Town"), None, Some("16"), Some("2")).unwrap();
        let res = doc.query_address(&addr).unwrap();
        assert_eq!(res.resolved_level, AddressLevel::Unit);
        assert!(res.missing_levels.is_empty());
        assert_eq!(res.element, ElementRef::node(20));

        // building 12 exists but has no unit node
        let addr = Address::new(None, None, Some("12"), Some("2")).unwrap();
        let res = doc.query_address(&addr).unwrap();
        assert_eq!(res.resolved_level, AddressLevel::Building);
        assert_eq!(res.missing_levels, vec![AddressLevel::Unit]);

        // absent address
        let addr = Address::new(Some("nowhere"), None, Some("999"), None).unwrap();
        assert!(matches!(
            doc.query_address(&addr),
            Err(OsmError::AddressNotFound(_))
        ));
    }

    #[test]
    fn address_invariants() {
        assert!(Address::new(None, None, None, None).is_err());
        assert!(Address::new(None, None, None, Some("2")).is_err());
        let a = Address::new(None, None, Some("  Building  7 "), None).unwrap();
        assert_eq!(a.building.as_deref(), Some("building 7"));
    }

    #[test]
    fn map_update_round_trip_and_idempotence() {
        let doc = fixture();
        let addr = Address::new(None, None, Some("12"), Some("2")).unwrap();
        let before = doc.query_address(&addr).unwrap();
        assert_eq!(before.resolved_level, AddressLevel::Building);

        let obs = DoorObservation {
            house_number: "12".into(),
            unit: "2".into(),
            position: GeoPoint::new(39.0006, 117.0007),
            confidence: 1.0,
        };
        let updated = doc.apply_map_update(&obs, &addr).unwrap();
        assert_eq!(updated.revision(), doc.revision() + 1);
        let after = updated.query_address(&addr).unwrap();
        assert_eq!(after.resolved_level, AddressLevel::Unit);

        // idempotent re-apply
        let again = updated.apply_map_update(&obs, &addr).unwrap();
        assert_eq!(again.revision(), updated.revision());

        // serialize -> parse preserves the element set
        let xml = updated.serialize();
        let reparsed = parse_osm(xml.as_bytes()).unwrap();
        assert_eq!(reparsed.len(), updated.len());
        assert_eq!(xml, reparsed.serialize());
    }

    #[test]
    fn update_outside_bounds_rejected() {
        let doc = fixture();
        let addr = Address::new(None, None, Some("12"), Some("2")).unwrap();
        let obs = DoorObservation {
            house_number: "12".into(),
            unit: "2".into(),
            position: GeoPoint::new(40.0, 118.0),
            confidence: 1.0,
        };
        assert!(matches!(
            doc.apply_map_update(&obs, &addr),
            Err(OsmError::OutsideBounds { .. })
        ));
    }

    #[test]
    fn query_address_monotone_under_updates() {
        let doc = fixture();
        let addresses = vec![
            Address::new(Some("green town"), None, Some("16"), Some("2")).unwrap(),
            Address::new(None, None, Some("12"), Some("2")).unwrap(),
            Address::new(None, Some("maple street"), Some("77"), None).unwrap(),
        ];
        let before: Vec<_> = addresses
            .iter()
            .map(|a| doc.query_address(a).ok().map(|r| r.resolved_level))
            .collect();
        let obs = DoorObservation {
            house_number: "12".into(),
            unit: "2".into(),
            position: GeoPoint::new(39.0006, 117.0007),
            confidence: 1.0,
        };
        let addr = Address::new(None, None, Some("12"), Some("2")).unwrap();
        let updated = doc.apply_map_update(&obs, &addr).unwrap();
        for (a, prior) in addresses.iter().zip(before) {
            let now = updated.query_address(a).ok().map(|r| r.resolved_level);
            match (prior, now) {
                (Some(p), Some(n)) => assert!(n >= p, "resolution worsened for {a}"),
                (Some(_), None) => panic!("resolution lost for {a}"),
                _ => {}
            }
        }
    }

    #[test]
    fn serialization_is_canonical() {
        let doc = fixture();
        let a = doc.serialize();
        let b = parse_osm(a.as_bytes()).unwrap().serialize();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_bbox_vocabulary_is_empty() {
        let doc = fixture();
        let far = GeoBounds {
            min_lat: 50.0,
            min_lon: 50.0,
            max_lat: 50.1,
            max_lon: 50.1,
        };
        assert!(doc.element_vocabulary(&far).is_empty());
    }
}
