mod common;

use std::path::Path;

use transcompat::error::Error;
use transcompat::trainer::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC};
use transcompat::*;

use common::{random_corpus, random_pairs};

fn trained(kind: ModelKind, hidden: Option<usize>, untied: bool) -> (Corpus, Model) {
    let cats = [("A", 6), ("B", 6), ("C", 6)];
    let pairs = random_pairs(21, &cats, &[(0, 1), (0, 2)], 10, 8);
    let corpus = random_corpus(21, &cats, &[("visual", 7), ("textual", 5)], &pairs);
    let cfg = TrainConfig {
        model: kind,
        embed_dim: 4,
        epochs: 2,
        batch_size: 8,
        hidden_dim: hidden,
        untied_directions: untied,
        ..TrainConfig::default()
    };
    let model = train(&corpus, &cfg).unwrap().model;
    (corpus, model)
}

#[test]
fn round_trip_is_lossless_for_every_kind() {
    for kind in ModelKind::ALL {
        for (hidden, untied) in [(None, false), (Some(16), true)] {
            let (corpus, model) = trained(kind, hidden, untied);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.ckpt");
            save_checkpoint(&model, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back, model, "{kind}");
            assert_eq!(std::fs::read(&path).unwrap(), encode_checkpoint(&back).unwrap());
            let ec = EvalConfig::default();
            assert_eq!(
                evaluate(&model, &corpus, &ec).unwrap(),
                evaluate(&back, &corpus, &ec).unwrap()
            );
        }
    }
}

#[test]
fn header_layout() {
    let (_, model) = trained(ModelKind::TransNfcm, None, false);
    let bytes = encode_checkpoint(&model).unwrap();
    assert_eq!(&bytes[0..4], CHECKPOINT_MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[16..16 + meta_len]).unwrap();
    let floats: usize = meta["tensors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["len"].as_u64().unwrap() as usize)
        .sum();
    assert_eq!(bytes.len(), 16 + meta_len + 4 * floats);
    assert_eq!(meta["relations"]["categories"], serde_json::json!(["A", "B", "C"]));
    let first = &bytes[16 + meta_len..16 + meta_len + 4];
    let v = f32::from_le_bytes(first.try_into().unwrap());
    assert_eq!(f64::from(v), model.tensors()[0].1[0]);
}

#[test]
fn damaged_files_are_rejected() {
    let (_, model) = trained(ModelKind::Csn, None, false);
    let bytes = encode_checkpoint(&model).unwrap();
    let p = Path::new("m.ckpt");

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad_magic, p), Err(Error::Format { .. })));

    let mut bad_version = bytes.clone();
    bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        decode_checkpoint(&bad_version, p),
        Err(Error::UnsupportedVersion { found: 2, .. })
    ));

    for cut in [3, 12, 40, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut], p).is_err(), "cut at {cut}");
    }

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode_checkpoint(&trailing, p).is_err());

    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_checkpoint(&nan, p), Err(Error::NonFinite { .. })));
}

#[test]
fn model_refuses_a_corpus_with_other_modalities() {
    let (_, model) = trained(ModelKind::TriNet, None, false);
    let cats = [("A", 3), ("B", 3)];
    let pairs = random_pairs(1, &cats, &[(0, 1)], 3, 3);
    let other = random_corpus(1, &cats, &[("visual", 9)], &pairs);
    assert!(evaluate(&model, &other, &EvalConfig::default()).is_err());
}
