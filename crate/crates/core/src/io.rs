//! Text file formats.
//!
//! All formats are UTF-8, comma separated, one record per line. Lines that
//! are blank or start with `#` are skipped. Reals are written with Rust's
//! shortest round-trip representation, so parsing a written file reproduces
//! the values bit for bit.
//!
//! | file | line layout |
//! |------|-------------|
//! | detections | `frame,left,top,width,height,confidence,class_id` |
//! | embeddings | header `dim,D`, then `frame,det_index,v1,...,vD` |
//! | tracks / ground truth | `camera_id,identity,frame,left,top,width,height` |
//! | cameras | `camera_id,fps,start_offset_seconds,adj;adj;...` |
//! | tracklet embeddings | header `dim,D`, then `local_id,v1,...,vD` |
//! | identity map | `camera_id,local_id,global_id` |

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{
    check_unique_keys, validate_cameras, CameraId, CameraMeta, Detection, DetectionSet, EmbeddingKey,
    EmbeddingStore, FrameIndex, TrackRecord,
};

/// Non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

struct Fields<'a> {
    source: &'a str,
    line: usize,
    parts: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn split(source: &'a str, line: usize, text: &'a str) -> Self {
        Self {
            source,
            line,
            parts: text.split(',').map(str::trim).collect(),
        }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.parts.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", self.parts.len())));
        }
        Ok(())
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.source, self.line, message)
    }

    fn get<T: FromStr>(&self, i: usize, what: &str) -> Result<T> {
        let raw = self.parts[i];
        raw.parse::<T>()
            .map_err(|_| self.err(format!("invalid {what} {raw:?}")))
    }

    fn real(&self, i: usize, what: &str) -> Result<f64> {
        let v: f64 = self.get(i, what)?;
        if !v.is_finite() {
            return Err(self.err(format!("{what} must be finite")));
        }
        Ok(v)
    }

    fn frame(&self, i: usize) -> Result<FrameIndex> {
        let f: FrameIndex = self.get(i, "frame")?;
        if f == 0 {
            return Err(self.err("frame indices are 1-based"));
        }
        Ok(f)
    }

    fn bbox(&self, first: usize) -> Result<BoundingBox> {
        let l = self.real(first, "left")?;
        let t = self.real(first + 1, "top")?;
        let w = self.real(first + 2, "width")?;
        let h = self.real(first + 3, "height")?;
        BoundingBox::new(l, t, w, h).map_err(|e| self.err(e.to_string()))
    }

    fn reals_from(&self, first: usize) -> Result<Vec<f64>> {
        (first..self.parts.len()).map(|i| self.real(i, "value")).collect()
    }
}

fn push_real(out: &mut String, v: f64) {
    let _ = write!(out, "{v}");
}

fn push_box(out: &mut String, b: &BoundingBox) {
    let _ = write!(out, "{},{},{},{}", b.left(), b.top(), b.width(), b.height());
}

/// Parses the `dim,D` header line of an embedding-style file.
fn parse_dim_header<'a>(
    source: &str,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Option<usize>> {
    let Some((line, text)) = lines.next() else {
        return Ok(None);
    };
    let f = Fields::split(source, line, text);
    f.expect_len(2)?;
    if f.parts[0] != "dim" {
        return Err(f.err("expected header `dim,D`"));
    }
    let dim: usize = f.get(1, "dimension")?;
    if dim == 0 {
        return Err(f.err("dimension must be positive"));
    }
    Ok(Some(dim))
}

/// Parses a detection file without embeddings.
pub fn parse_detection_lines(source: &str, text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (line, rec) in records(text) {
        let f = Fields::split(source, line, rec);
        f.expect_len(7)?;
        let frame = f.frame(0)?;
        let bbox = f.bbox(1)?;
        let confidence = f.real(5, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(f.err(format!("confidence {confidence} outside [0, 1]")));
        }
        let class_id = f.get(6, "class_id")?;
        out.push(Detection {
            frame,
            bbox,
            confidence,
            class_id,
            embedding_key: None,
        });
    }
    Ok(out)
}

/// Embedding rows keyed by `(frame, det_index)`, in file order.
pub type EmbeddingRows = Vec<(EmbeddingKey, Vec<f64>)>;

/// Parses an embedding file into its dimension and rows in file order.
pub fn parse_embedding_rows(source: &str, text: &str) -> Result<(usize, EmbeddingRows)> {
    let mut lines = records(text);
    let Some(dim) = parse_dim_header(source, &mut lines)? else {
        return Err(Error::parse(source, 1, "missing `dim,D` header"));
    };
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in lines {
        let f = Fields::split(source, line, rec);
        if f.parts.len() != dim + 2 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.parts.len().saturating_sub(2),
            });
        }
        let key = (f.frame(0)?, f.get::<usize>(1, "det_index")?);
        if !seen.insert(key) {
            return Err(f.err(format!("duplicate embedding for frame {}, index {}", key.0, key.1)));
        }
        rows.push((key, f.reals_from(2)?));
    }
    Ok((dim, rows))
}

/// Parses a camera's detections and, optionally, its embedding sidecar.
///
/// Detections come back sorted by frame with file order preserved inside a
/// frame. Each embedding row must refer to an existing detection.
pub fn parse_detections(
    source: &str,
    detections: &str,
    embeddings: Option<&str>,
    camera_id: CameraId,
) -> Result<DetectionSet> {
    let mut dets = parse_detection_lines(source, detections)?;
    dets.sort_by_key(|d| d.frame);

    let store = match embeddings {
        None => None,
        Some(text) => {
            let emb_source = format!("{source} (embeddings)");
            let (dim, rows) = parse_embedding_rows(&emb_source, text)?;
            let mut frame_start: BTreeMap<FrameIndex, (usize, usize)> = BTreeMap::new();
            for (i, d) in dets.iter().enumerate() {
                let e = frame_start.entry(d.frame).or_insert((i, 0));
                e.1 += 1;
            }
            let mut store = EmbeddingStore::new(dim);
            for ((frame, index), values) in rows {
                match frame_start.get(&frame) {
                    Some(&(start, count)) if index < count => {
                        dets[start + index].embedding_key = Some((frame, index));
                        store.insert((frame, index), values)?;
                    }
                    _ => return Err(Error::DanglingEmbedding { frame, index }),
                }
            }
            Some(store)
        }
    };
    Ok(DetectionSet {
        camera_id,
        detections: dets,
        embeddings: store,
    })
}

/// Writes the detection file and, when the set carries embeddings, the
/// embedding sidecar with `det_index` renumbered to file positions.
pub fn write_detections(set: &DetectionSet) -> (String, Option<String>) {
    let mut det = String::new();
    let mut emb = set.embeddings.as_ref().map(|s| format!("dim,{}\n", s.dim()));
    let mut dets: Vec<&Detection> = set.detections.iter().collect();
    dets.sort_by_key(|d| d.frame);
    let mut index_in_frame = 0usize;
    let mut current = None;
    for d in dets {
        if current != Some(d.frame) {
            current = Some(d.frame);
            index_in_frame = 0;
        }
        let _ = write!(det, "{},", d.frame);
        push_box(&mut det, &d.bbox);
        det.push(',');
        push_real(&mut det, d.confidence);
        let _ = writeln!(det, ",{}", d.class_id);

        if let (Some(out), Some(store), Some(key)) = (emb.as_mut(), set.embeddings.as_ref(), d.embedding_key) {
            if let Some(values) = store.get(&key) {
                let _ = write!(out, "{},{}", d.frame, index_in_frame);
                for v in values {
                    out.push(',');
                    push_real(out, *v);
                }
                out.push('\n');
            }
        }
        index_in_frame += 1;
    }
    (det, emb)
}

/// Reads `det` and optional `emb` paths.
pub fn read_detections(det: &Path, emb: Option<&Path>, camera_id: CameraId) -> Result<DetectionSet> {
    let det_text = fs::read_to_string(det)?;
    let emb_text = emb.map(fs::read_to_string).transpose()?;
    parse_detections(&det.display().to_string(), &det_text, emb_text.as_deref(), camera_id)
}

/// Parses a track or ground-truth file.
pub fn parse_tracks(source: &str, text: &str) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in records(text) {
        let f = Fields::split(source, line, rec);
        f.expect_len(7)?;
        let r = TrackRecord {
            camera_id: f.get(0, "camera_id")?,
            id: f.get(1, "identity")?,
            frame: f.frame(2)?,
            bbox: f.bbox(3)?,
        };
        if !seen.insert((r.camera_id, r.id, r.frame)) {
            return Err(f.err(format!(
                "duplicate record (camera {}, id {}, frame {})",
                r.camera_id, r.id, r.frame
            )));
        }
        out.push(r);
    }
    Ok(out)
}

/// Serializes records in the given order. Fails before producing any output
/// if a `(camera, id, frame)` key repeats.
pub fn write_tracks(records: &[TrackRecord]) -> Result<String> {
    check_unique_keys(records)?;
    let mut out = String::with_capacity(records.len() * 48);
    for r in records {
        let _ = write!(out, "{},{},{},", r.camera_id, r.id, r.frame);
        push_box(&mut out, &r.bbox);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_tracks_to(records: &[TrackRecord], path: &Path) -> Result<()> {
    let text = write_tracks(records)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks(&path.display().to_string(), &fs::read_to_string(path)?)
}

/// Parses and validates a camera metadata file.
pub fn parse_cameras(source: &str, text: &str) -> Result<Vec<CameraMeta>> {
    let mut out = Vec::new();
    for (line, rec) in records(text) {
        let f = Fields::split(source, line, rec);
        if f.parts.len() != 3 && f.parts.len() != 4 {
            return Err(f.err(format!("expected 4 fields, found {}", f.parts.len())));
        }
        let adjacent = match f.parts.get(3) {
            None | Some(&"") => Vec::new(),
            Some(s) => s
                .split(';')
                .map(|a| {
                    a.trim()
                        .parse::<CameraId>()
                        .map_err(|_| f.err(format!("invalid adjacent camera id {a:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        out.push(CameraMeta {
            camera_id: f.get(0, "camera_id")?,
            fps: f.real(1, "fps")?,
            start_offset: f.real(2, "start offset")?,
            adjacent,
        });
    }
    validate_cameras(&out).map_err(|e| Error::parse(source, 0, e.to_string()))?;
    Ok(out)
}

pub fn write_cameras(cameras: &[CameraMeta]) -> String {
    let mut out = String::new();
    for c in cameras {
        let _ = write!(out, "{},", c.camera_id);
        push_real(&mut out, c.fps);
        out.push(',');
        push_real(&mut out, c.start_offset);
        out.push(',');
        let adj: Vec<String> = c.adjacent.iter().map(u32::to_string).collect();
        out.push_str(&adj.join(";"));
        out.push('\n');
    }
    out
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraMeta>> {
    parse_cameras(&path.display().to_string(), &fs::read_to_string(path)?)
}

/// Per-tracklet embedding rows, grouped by local ID in file order.
pub type TrackletEmbeddings = BTreeMap<u64, Vec<Vec<f64>>>;

pub fn parse_tracklet_embeddings(source: &str, text: &str) -> Result<(usize, TrackletEmbeddings)> {
    let mut lines = records(text);
    let Some(dim) = parse_dim_header(source, &mut lines)? else {
        return Ok((0, BTreeMap::new()));
    };
    let mut out: TrackletEmbeddings = BTreeMap::new();
    for (line, rec) in lines {
        let f = Fields::split(source, line, rec);
        if f.parts.len() != dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.parts.len().saturating_sub(1),
            });
        }
        let id: u64 = f.get(0, "local_id")?;
        out.entry(id).or_default().push(f.reals_from(1)?);
    }
    Ok((dim, out))
}

pub fn write_tracklet_embeddings(dim: usize, embeddings: &TrackletEmbeddings) -> Result<String> {
    let mut out = format!("dim,{dim}\n");
    for (id, rows) in embeddings {
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            let _ = write!(out, "{id}");
            for v in row {
                out.push(',');
                push_real(&mut out, *v);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// `(camera_id, local_id) -> global_id` rows.
pub fn write_identity_map(rows: &[((CameraId, u64), u64)]) -> String {
    let mut out = String::new();
    for ((cam, local), global) in rows {
        let _ = writeln!(out, "{cam},{local},{global}");
    }
    out
}

pub fn parse_identity_map(source: &str, text: &str) -> Result<Vec<((CameraId, u64), u64)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in records(text) {
        let f = Fields::split(source, line, rec);
        f.expect_len(3)?;
        let key = (f.get(0, "camera_id")?, f.get(1, "local_id")?);
        if !seen.insert(key) {
            return Err(f.err("duplicate (camera_id, local_id)"));
        }
        out.push((key, f.get(2, "global_id")?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_detection_line() {
        let set = parse_detections("t", "3,10,20,30,40,0.75,2\n", None, 1).unwrap();
        assert_eq!(set.detections.len(), 1);
        let d = &set.detections[0];
        assert_eq!(d.frame, 3);
        assert_eq!(d.bbox, BoundingBox::new(10.0, 20.0, 30.0, 40.0).unwrap());
        assert_eq!(d.confidence, 0.75);
        assert_eq!(d.class_id, 2);
        assert_eq!(d.embedding_key, None);
    }

    #[test]
    fn empty_and_comment_only_files() {
        assert!(parse_detections("t", "", None, 1).unwrap().detections.is_empty());
        assert!(parse_detections("t", "# header\n\n", None, 1).unwrap().detections.is_empty());
    }

    #[test]
    fn short_line_names_line_number() {
        let err = parse_detections("dets.txt", "1,2,3\n", None, 1).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_detections("dets.txt", "# c\n1,0,0,1,1,0.5,1\n1,2,3\n", None, 1).unwrap_err();
        assert!(err.to_string().starts_with("dets.txt:3:"), "{err}");
    }

    #[test]
    fn stable_grouping_by_frame() {
        let text = "2,0,0,1,1,0.5,1\n1,5,0,1,1,0.5,1\n2,9,0,1,1,0.5,1\n";
        let set = parse_detections("t", text, None, 1).unwrap();
        let lefts: Vec<f64> = set.detections.iter().map(|d| d.bbox.left()).collect();
        assert_eq!(lefts, vec![5.0, 0.0, 9.0]);
    }

    #[test]
    fn embeddings_resolve_by_frame_position() {
        let det = "2,0,0,1,1,0.5,1\n1,5,0,1,1,0.5,1\n2,9,0,1,1,0.5,1\n";
        let emb = "dim,2\n2,1,0.5,0.25\n1,0,1,0\n";
        let set = parse_detections("t", det, Some(emb), 1).unwrap();
        let frames = set.frames();
        assert_eq!(frames[&2][1].detection.bbox.left(), 9.0);
        assert_eq!(frames[&2][1].embedding.as_deref(), Some(&[0.5, 0.25][..]));
        assert_eq!(frames[&2][0].embedding, None);
        assert_eq!(frames[&1][0].embedding.as_deref(), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn embedding_errors() {
        let det = "1,0,0,1,1,0.5,1\n";
        assert!(matches!(
            parse_detections("t", det, Some("dim,2\n1,0,1\n"), 1),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
        assert!(matches!(
            parse_detections("t", det, Some("dim,1\n1,1,0.3\n"), 1),
            Err(Error::DanglingEmbedding { frame: 1, index: 1 })
        ));
        assert!(matches!(
            parse_detections("t", det, Some("dim,1\n4,0,0.3\n"), 1),
            Err(Error::DanglingEmbedding { frame: 4, index: 0 })
        ));
        assert!(parse_detections("t", det, Some("1,0,0.3\n"), 1).is_err());
    }

    #[test]
    fn detection_writer_round_trip() {
        let det = "1,5,0,1,1,0.5,1\n2,0,0.1,1,1,0.5,3\n2,9,0,1,1,0.125,1\n";
        let emb = "dim,2\n1,0,1,0\n2,1,0.5,0.25\n";
        let set = parse_detections("t", det, Some(emb), 7).unwrap();
        let (d2, e2) = write_detections(&set);
        assert_eq!(d2, det);
        assert_eq!(e2.as_deref(), Some(emb));
    }

    #[test]
    fn tracks_write_parse() {
        assert_eq!(write_tracks(&[]).unwrap(), "");
        assert!(parse_tracks("t", "").unwrap().is_empty());
        let b = BoundingBox::new(0.1, 0.2, 3.0, 4.0).unwrap();
        let r = TrackRecord {
            camera_id: 1,
            id: 2,
            frame: 3,
            bbox: b,
        };
        let text = write_tracks(&[r]).unwrap();
        assert_eq!(parse_tracks("t", &text).unwrap(), vec![r]);
        assert!(matches!(write_tracks(&[r, r]), Err(Error::DuplicateRecord { .. })));
        assert!(parse_tracks("t", &format!("{text}{text}")).is_err());
    }

    #[test]
    fn cameras_round_trip_and_validate() {
        let text = "1,10,0,2\n2,10,1.5,1;3\n3,12.5,0,2\n4,10,0,\n";
        let cams = parse_cameras("t", text).unwrap();
        assert_eq!(cams[1].adjacent, vec![1, 3]);
        assert!(cams[3].adjacent.is_empty());
        assert_eq!(write_cameras(&cams), text);
        assert!(parse_cameras("t", "1,10,0,2\n2,10,0,\n").is_err());
        assert!(parse_cameras("t", "1,0,0,\n").is_err());
    }

    #[test]
    fn tracklet_embeddings_round_trip() {
        let mut m = TrackletEmbeddings::new();
        m.insert(4, vec![vec![0.1, 0.2], vec![-1.0, 1e-300]]);
        m.insert(9, vec![vec![3.0, 4.0]]);
        let text = write_tracklet_embeddings(2, &m).unwrap();
        assert_eq!(parse_tracklet_embeddings("t", &text).unwrap(), (2, m));
    }

    #[test]
    fn identity_map_round_trip() {
        let rows = vec![((1, 2), 1), ((2, 7), 1), ((2, 8), 2)];
        assert_eq!(parse_identity_map("t", &write_identity_map(&rows)).unwrap(), rows);
    }
}
