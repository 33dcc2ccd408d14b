//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, with their round-trip checks.

use std::path::{Path, PathBuf};

use mcmt_cli::config;
use mcmt_core::io;
use mcmt_core::reid::head::{parse_checkpoint, write_checkpoint};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter_map(|p| String::from_utf8(std::fs::read(&p).unwrap()).ok().map(|t| (p, t)))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Replays every seed, returning how many parsed.
fn replay(target: &str, check: impl Fn(&str) -> bool) -> usize {
    seeds(target).iter().filter(|(_, text)| check(text)).count()
}

#[test]
fn detection_seeds() {
    let ok = replay("detections", |text| {
        let (det, emb) = match text.split_once('\0') {
            Some((d, e)) => (d, Some(e)),
            None => (text, None),
        };
        let Ok(set) = io::parse_detections("seed", det, emb, 1) else { return false };
        let (d2, e2) = io::write_detections(&set);
        let again = io::parse_detections("seed", &d2, e2.as_deref(), 1).unwrap();
        assert_eq!(again.detections.len(), set.detections.len());
        true
    });
    assert!(ok >= 3);
}

#[test]
fn embedding_seeds() {
    let ok = replay("embeddings", |text| {
        let Ok((dim, rows)) = io::parse_embedding_rows("seed", text) else { return false };
        assert!(rows.iter().all(|(_, v)| v.len() == dim));
        true
    });
    assert!(ok >= 2);
}

#[test]
fn track_seeds() {
    let ok = replay("tracks", |text| {
        let Ok(records) = io::parse_tracks("seed", text) else { return false };
        assert_eq!(io::parse_tracks("seed", &io::write_tracks(&records).unwrap()).unwrap(), records);
        true
    });
    assert!(ok >= 2);
}

#[test]
fn camera_seeds() {
    let ok = replay("cameras", |text| {
        let Ok(cams) = io::parse_cameras("seed", text) else { return false };
        assert_eq!(io::parse_cameras("seed", &io::write_cameras(&cams)).unwrap(), cams);
        true
    });
    assert!(ok >= 2);
}

#[test]
fn tracklet_embedding_seeds() {
    let ok = replay("tracklet_embeddings", |text| {
        let Ok((dim, rows)) = io::parse_tracklet_embeddings("seed", text) else { return false };
        let written = io::write_tracklet_embeddings(dim, &rows).unwrap();
        assert_eq!(io::parse_tracklet_embeddings("seed", &written).unwrap(), (dim, rows));
        true
    });
    assert!(ok >= 2);
}

#[test]
fn identity_map_seeds() {
    let ok = replay("identity_map", |text| {
        let Ok(rows) = io::parse_identity_map("seed", text) else { return false };
        assert_eq!(io::parse_identity_map("seed", &io::write_identity_map(&rows)).unwrap(), rows);
        true
    });
    assert!(ok >= 1);
}

#[test]
fn checkpoint_seeds() {
    let ok = replay("checkpoint", |text| {
        let Ok(head) = parse_checkpoint("seed", text) else { return false };
        assert_eq!(parse_checkpoint("seed", &write_checkpoint(&head)).unwrap().parameters(), head.parameters());
        true
    });
    assert!(ok >= 2);
}

#[test]
fn config_seeds() {
    let ok = replay("config", |text| {
        let Ok(cfg) = config::parse("seed", text) else { return false };
        assert_eq!(config::parse("seed", &cfg.canonical()).unwrap(), cfg);
        true
    });
    assert!(ok >= 3);
}
