//! OSM XML v0.6 subset reader and writer.
//!
//! Supported elements: `node`, `way`, `relation` with `tag`, `nd`, and
//! `member` children. Serialization is deterministic: elements sorted by
//! (type, id), tags sorted by key, coordinates printed with the shortest
//! representation that round-trips exactly.

use quick_xml::events::attributes::Attribute;
use quick_xml::events::{BytesDecl, BytesStart, Event};
use quick_xml::{Reader, Writer};
use std::collections::BTreeMap;

use super::{ElementKind, Node, OsmDocument, OsmError, Relation, RelationMember, Tags, Way};
use crate::osm::project::GeoPoint;

fn malformed(msg: impl Into<String>) -> OsmError {
    OsmError::Malformed(msg.into())
}

fn attr_string(attr: &Attribute) -> Result<String, OsmError> {
    attr.unescape_value()
        .map(|v| v.into_owned())
        .map_err(|e| malformed(format!("bad attribute value: {e}")))
}

fn parse_i64(s: &str, what: &str) -> Result<i64, OsmError> {
    s.parse::<i64>()
        .map_err(|_| malformed(format!("invalid {what}: {s:?}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, OsmError> {
    s.parse::<f64>()
        .map_err(|_| malformed(format!("invalid {what}: {s:?}")))
}

enum Pending {
    Node(Node),
    Way(Way),
    Relation(Relation),
}

struct Parsed {
    nodes: Vec<Node>,
    ways: Vec<Way>,
    relations: Vec<Relation>,
}

fn parse_elements(xml: &[u8]) -> Result<Parsed, OsmError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut parsed = Parsed {
        nodes: Vec::new(),
        ways: Vec::new(),
        relations: Vec::new(),
    };
    let mut pending: Option<Pending> = None;
    let mut saw_osm_root = false;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| malformed(format!("{e} at byte {}", reader.buffer_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.name();
                match name.as_ref() {
                    b"osm" => {
                        saw_osm_root = true;
                    }
                    b"bounds" => {}
                    b"node" => {
                        if pending.is_some() {
                            return Err(malformed("nested element"));
                        }
                        let node = start_node(e)?;
                        if is_empty {
                            parsed.nodes.push(node);
                        } else {
                            pending = Some(Pending::Node(node));
                        }
                    }
                    b"way" => {
                        if pending.is_some() {
                            return Err(malformed("nested element"));
                        }
                        let way = Way {
                            id: required_id(e)?,
                            nodes: Vec::new(),
                            tags: Tags::new(),
                        };
                        if is_empty {
                            parsed.ways.push(way);
                        } else {
                            pending = Some(Pending::Way(way));
                        }
                    }
                    b"relation" => {
                        if pending.is_some() {
                            return Err(malformed("nested element"));
                        }
                        let rel = Relation {
                            id: required_id(e)?,
                            members: Vec::new(),
                            tags: Tags::new(),
                        };
                        if is_empty {
                            parsed.relations.push(rel);
                        } else {
                            pending = Some(Pending::Relation(rel));
                        }
                    }
                    b"tag" => {
                        let (k, v) = tag_kv(e)?;
                        match pending.as_mut() {
                            Some(Pending::Node(n)) => {
                                n.tags.insert(k, v);
                            }
                            Some(Pending::Way(w)) => {
                                w.tags.insert(k, v);
                            }
                            Some(Pending::Relation(r)) => {
                                r.tags.insert(k, v);
                            }
                            None => return Err(malformed("tag outside of element")),
                        }
                    }
                    b"nd" => {
                        let r = nd_ref(e)?;
                        match pending.as_mut() {
                            Some(Pending::Way(w)) => w.nodes.push(r),
                            _ => return Err(malformed("nd outside of way")),
                        }
                    }
                    b"member" => {
                        let m = member(e)?;
                        match pending.as_mut() {
                            Some(Pending::Relation(rel)) => rel.members.push(m),
                            _ => return Err(malformed("member outside of relation")),
                        }
                    }
                    other => {
                        return Err(malformed(format!(
                            "unsupported element <{}>",
                            String::from_utf8_lossy(other)
                        )));
                    }
                }
            }
            Event::End(ref e) => match e.name().as_ref() {
                b"node" | b"way" | b"relation" => match pending.take() {
                    Some(Pending::Node(n)) => parsed.nodes.push(n),
                    Some(Pending::Way(w)) => parsed.ways.push(w),
                    Some(Pending::Relation(r)) => parsed.relations.push(r),
                    None => return Err(malformed("unexpected closing element")),
                },
                _ => {}
            },
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::Text(_) | Event::PI(_)
            | Event::DocType(_) | Event::CData(_) | Event::GeneralRef(_) => {}
        }
        buf.clear();
    }
    if !saw_osm_root {
        return Err(malformed("missing <osm> root element"));
    }
    Ok(parsed)
}

fn required_id(e: &BytesStart) -> Result<i64, OsmError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(format!("bad attribute: {e}")))?;
        if attr.key.as_ref() == b"id" {
            return parse_i64(&attr_string(&attr)?, "id");
        }
    }
    Err(malformed("element missing id attribute"))
}

fn start_node(e: &BytesStart) -> Result<Node, OsmError> {
    let mut id = None;
    let mut lat = None;
    let mut lon = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(format!("bad attribute: {e}")))?;
        let value = attr_string(&attr)?;
        match attr.key.as_ref() {
            b"id" => id = Some(parse_i64(&value, "id")?),
            b"lat" => lat = Some(parse_f64(&value, "lat")?),
            b"lon" => lon = Some(parse_f64(&value, "lon")?),
            _ => {}
        }
    }
    let id = id.ok_or_else(|| malformed("node missing id"))?;
    let lat = lat.ok_or_else(|| malformed(format!("node {id} missing lat")))?;
    let lon = lon.ok_or_else(|| malformed(format!("node {id} missing lon")))?;
    let point = GeoPoint::new(lat, lon);
    point.validate()?;
    Ok(Node {
        id,
        point,
        tags: Tags::new(),
    })
}

fn tag_kv(e: &BytesStart) -> Result<(String, String), OsmError> {
    let mut k = None;
    let mut v = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(format!("bad attribute: {e}")))?;
        match attr.key.as_ref() {
            b"k" => k = Some(attr_string(&attr)?),
            b"v" => v = Some(attr_string(&attr)?),
            _ => {}
        }
    }
    match (k, v) {
        (Some(k), Some(v)) => Ok((k, v)),
        _ => Err(malformed("tag missing k or v")),
    }
}

fn nd_ref(e: &BytesStart) -> Result<i64, OsmError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(format!("bad attribute: {e}")))?;
        if attr.key.as_ref() == b"ref" {
            return parse_i64(&attr_string(&attr)?, "nd ref");
        }
    }
    Err(malformed("nd missing ref"))
}

fn member(e: &BytesStart) -> Result<RelationMember, OsmError> {
    let mut kind = None;
    let mut id = None;
    let mut role = String::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|e| malformed(format!("bad attribute: {e}")))?;
        let value = attr_string(&attr)?;
        match attr.key.as_ref() {
            b"type" => {
                kind = Some(match value.as_str() {
                    "node" => ElementKind::Node,
                    "way" => ElementKind::Way,
                    "relation" => ElementKind::Relation,
                    other => return Err(malformed(format!("unknown member type {other:?}"))),
                })
            }
            b"ref" => id = Some(parse_i64(&value, "member ref")?),
            b"role" => role = value,
            _ => {}
        }
    }
    match (kind, id) {
        (Some(kind), Some(id)) => Ok(RelationMember { kind, id, role }),
        _ => Err(malformed("member missing type or ref")),
    }
}

/// Parse an OSM XML document from bytes. The result has revision 0 and
/// verified referential integrity.
pub fn parse_osm(xml: &[u8]) -> Result<OsmDocument, OsmError> {
    let parsed = parse_elements(xml)?;

    let mut nodes = BTreeMap::new();
    for node in parsed.nodes {
        if nodes.insert(node.id, node.clone()).is_some() {
            return Err(OsmError::DuplicateId {
                kind: ElementKind::Node,
                id: node.id,
            });
        }
    }
    let mut ways = BTreeMap::new();
    for way in parsed.ways {
        if ways.insert(way.id, way.clone()).is_some() {
            return Err(OsmError::DuplicateId {
                kind: ElementKind::Way,
                id: way.id,
            });
        }
    }
    let mut relations = BTreeMap::new();
    for rel in parsed.relations {
        if relations.insert(rel.id, rel.clone()).is_some() {
            return Err(OsmError::DuplicateId {
                kind: ElementKind::Relation,
                id: rel.id,
            });
        }
    }

    OsmDocument::from_parts(nodes, ways, relations)
}

fn push_tags(writer: &mut Writer<Vec<u8>>, tags: &Tags) {
    for (k, v) in tags {
        let mut tag = BytesStart::new("tag");
        tag.push_attribute(("k", k.as_str()));
        tag.push_attribute(("v", v.as_str()));
        writer.write_event(Event::Empty(tag)).expect("write to vec");
    }
}

/// Serialize a document to OSM XML with canonical ordering.
pub fn serialize_osm(doc: &OsmDocument) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    writer
        .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .expect("write to vec");

    let mut osm = BytesStart::new("osm");
    osm.push_attribute(("version", "0.6"));
    osm.push_attribute(("generator", "opennav"));
    writer.write_event(Event::Start(osm)).expect("write to vec");

    for node in doc.nodes() {
        let mut e = BytesStart::new("node");
        e.push_attribute(("id", node.id.to_string().as_str()));
        e.push_attribute(("lat", node.point.lat.to_string().as_str()));
        e.push_attribute(("lon", node.point.lon.to_string().as_str()));
        if node.tags.is_empty() {
            writer.write_event(Event::Empty(e)).expect("write to vec");
        } else {
            writer.write_event(Event::Start(e)).expect("write to vec");
            push_tags(&mut writer, &node.tags);
            writer
                .write_event(Event::End(BytesStart::new("node").to_end()))
                .expect("write to vec");
        }
    }
    for way in doc.ways() {
        let mut e = BytesStart::new("way");
        e.push_attribute(("id", way.id.to_string().as_str()));
        writer.write_event(Event::Start(e)).expect("write to vec");
        for r in &way.nodes {
            let mut nd = BytesStart::new("nd");
            nd.push_attribute(("ref", r.to_string().as_str()));
            writer.write_event(Event::Empty(nd)).expect("write to vec");
        }
        push_tags(&mut writer, &way.tags);
        writer
            .write_event(Event::End(BytesStart::new("way").to_end()))
            .expect("write to vec");
    }
    for rel in doc.relations() {
        let mut e = BytesStart::new("relation");
        e.push_attribute(("id", rel.id.to_string().as_str()));
        writer.write_event(Event::Start(e)).expect("write to vec");
        for m in &rel.members {
            let mut me = BytesStart::new("member");
            me.push_attribute(("type", m.kind.as_str()));
            me.push_attribute(("ref", m.id.to_string().as_str()));
            me.push_attribute(("role", m.role.as_str()));
            writer.write_event(Event::Empty(me)).expect("write to vec");
        }
        push_tags(&mut writer, &rel.tags);
        writer
            .write_event(Event::End(BytesStart::new("relation").to_end()))
            .expect("write to vec");
    }

    writer
        .write_event(Event::End(BytesStart::new("osm").to_end()))
        .expect("write to vec");
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).expect("writer produces utf-8")
}
