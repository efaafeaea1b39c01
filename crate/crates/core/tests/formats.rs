use attribution_space::detector::{evaluate, train, TrainConfig};
use attribution_space::features::{
    encode_features, load_checkpoint, load_features, read_checkpoint_header, read_features_header, save_checkpoint,
    save_features, Checkpoint, FeatureDataset, FeatureRecord, Label,
};
use attribution_space::synth::{generate, SynthSpec};
use attribution_space::Error;

fn records(n: usize, dim: usize) -> Vec<FeatureRecord> {
    (0..n)
        .map(|i| {
            let label = if i % 3 == 0 { Label::Generated } else { Label::Real };
            FeatureRecord::new((0..dim).map(|j| (i * dim + j) as f32 * 0.25).collect(), label, "progan")
        })
        .collect()
}

#[test]
fn nan_in_record_seven_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.afv");
    let ds = FeatureDataset::new(4, records(10, 4)).unwrap();
    let mut bytes = encode_features(&ds).unwrap();
    // Every record is label u8 + tag u16 + 4 x f32; the records end the file.
    let record_len = 1 + 2 + 4 * 4;
    let start = bytes.len() - 10 * record_len + 7 * record_len + 3 + 8;
    bytes[start..start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    match load_features(&path) {
        Err(Error::Validation(msg)) => assert!(msg.contains("record 7"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn wide_embeddings_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.afv"), dir.path().join("b.afv"));
    let ds = FeatureDataset::new(768, records(2, 768)).unwrap();
    save_features(&ds, &a).unwrap();
    save_features(&ds, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let header = read_features_header(&a).unwrap();
    assert_eq!((header.dim, header.count), (768, 2));
    assert_eq!(load_features(&a).unwrap(), ds);
}

#[test]
fn empty_file_keeps_its_width() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.afv");
    save_features(&FeatureDataset::empty(16), &path).unwrap();
    let back = load_features(&path).unwrap();
    assert_eq!((back.dim(), back.len()), (16, 0));
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_features(dir.path().join("nope.afv")), Err(Error::Io(_))));
    assert!(matches!(load_checkpoint(dir.path().join("nope.ckpt")), Err(Error::Io(_))));
}

#[test]
fn reloaded_checkpoint_evaluates_identically() {
    let spec = SynthSpec {
        dim: 32,
        latent_dim: 4,
        samples_per_class: 200,
        ..SynthSpec::reference()
    };
    let data = generate(&spec).unwrap();
    let config = TrainConfig {
        rounds: 2,
        hidden_dim: 48,
        normalize: true,
        ..TrainConfig::default()
    };
    let (model, _) = train(&data, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ckpt = Checkpoint { model, config };
    save_checkpoint(&ckpt, &path).unwrap();

    let header = read_checkpoint_header(&path).unwrap();
    assert_eq!((header.feature_dim, header.bottleneck_dim), (32, 4));
    assert!(header.normalize);

    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let before = evaluate(&ckpt.model, &data).unwrap();
    let after = evaluate(&back.model, &data).unwrap();
    assert_eq!(before.to_json(), after.to_json());
}

#[test]
fn features_file_is_not_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.afv");
    save_features(&FeatureDataset::new(4, records(3, 4)).unwrap(), &path).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
}
