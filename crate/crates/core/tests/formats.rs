use std::path::Path;

use reconstsum::io::{
    read_aesthetic, read_checkpoint, read_features, write_aesthetic, write_checkpoint, write_features,
};
use reconstsum::model::{FeatureSequence, ModelParams};
use reconstsum::numgrad::Matrix;
use reconstsum::selection::{ScoreKind, ScoreVector};
use reconstsum::Error;

fn features() -> FeatureSequence {
    let data = (0..24).map(|k| (k as f64 * 0.37).sin() * 1e3 + 1e-9 * k as f64).collect();
    FeatureSequence::new(Matrix::from_vec(6, 4, data).unwrap(), 2.0, "clip").unwrap()
}

#[test]
fn files_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let x = features();
    let path = dir.path().join("clip.fseq");
    write_features(&x, &path).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back.source_id(), "clip");
    assert_eq!(back.fps(), 2.0);
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.features()), bits(x.features()));
    let size = std::fs::metadata(&path).unwrap().len();
    assert_eq!(size, 32 + 8 * 24);

    let q = ScoreVector::new(vec![0.0, 0.25, 1.0, 0.5, 0.125, 0.75], ScoreKind::Aesthetic).unwrap();
    let qp = dir.path().join("clip.ascr");
    write_aesthetic(&q, &qp).unwrap();
    assert_eq!(read_aesthetic(&qp, 6, false).unwrap(), q);
    assert_eq!(std::fs::metadata(&qp).unwrap().len(), 16 + 8 * 6);

    let params = ModelParams::init(4, 3, 5).unwrap();
    let cp = dir.path().join("m.rsum");
    write_checkpoint(&params, &cp).unwrap();
    assert_eq!(read_checkpoint(&cp).unwrap(), params);
}

#[test]
fn format_errors_name_file_field_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.fseq");
    write_features(&features(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    let err = read_features(&path).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let msg = err.to_string();
    assert!(msg.contains("short.fseq"), "{msg}");
    assert!(msg.contains("payload"), "{msg}");
    assert!(msg.contains("offset 32"), "{msg}");
    assert!(msg.contains("192 bytes") && msg.contains("184 bytes"), "{msg}");

    std::fs::write(&path, b"XXXX").unwrap();
    let msg = read_features(&path).unwrap_err().to_string();
    assert!(msg.contains("magic") && msg.contains("\"FSEQ\"") && msg.contains("\"XXXX\""), "{msg}");
}

#[test]
fn aesthetic_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ascr");
    let mut bytes = b"ASCR".to_vec();
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&2u64.to_le_bytes());
    bytes.extend_from_slice(&0.5f64.to_le_bytes());
    bytes.extend_from_slice(&1.2f64.to_le_bytes());
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_aesthetic(&p, 2, false), Err(Error::Input(_))));
    assert!(matches!(read_aesthetic(&p, 3, true), Err(Error::Input(_))));

    let fallback = read_aesthetic(&dir.path().join("none.ascr"), 4, true).unwrap();
    assert_eq!(fallback.values(), &[1.0; 4]);
    let missing = read_aesthetic(Path::new("/nonexistent/x.ascr"), 4, false).unwrap_err();
    assert_eq!(missing.exit_code(), 3);
    assert!(missing.to_string().contains("/nonexistent/x.ascr"));
}
