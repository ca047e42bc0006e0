mod common;

use meshcrash::groundtruth::{generate_samples, DesignSpace, OracleConfig};
use meshcrash::io::{
    dataset_header, decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset, load_checkpoint,
    read_dataset, save_checkpoint, sha256_hex, sidecar_path, write_dataset, DATASET_MAGIC,
};
use meshcrash::model::{Family, HybridModel, ModelConfig};
use meshcrash::rollout::{rollout_sample, Surrogate};

fn oracle_set(n: usize) -> Vec<meshcrash::Sample> {
    let cfg = OracleConfig {
        horizon: 3,
        ..OracleConfig::default()
    };
    generate_samples(n, &DesignSpace::default(), &cfg, 21).unwrap()
}

#[test]
fn dataset_round_trip_is_exact() {
    let set = oracle_set(3);
    let bytes = encode_dataset(&set).unwrap();
    assert_eq!(&bytes[..DATASET_MAGIC.len()], DATASET_MAGIC);
    let back = decode_dataset(&bytes).unwrap();
    assert_eq!(back, set);
    assert_eq!(encode_dataset(&back).unwrap(), bytes);
    let synth = common::synthetic_set(5, 2, 4, 3, 2);
    assert_eq!(decode_dataset(&encode_dataset(&synth).unwrap()).unwrap(), synth);
}

#[test]
fn corrupt_containers_are_rejected() {
    let bytes = encode_dataset(&oracle_set(1)).unwrap();
    assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_dataset(&extra).is_err());
    let mut magic = bytes;
    magic[0] ^= 0xff;
    assert!(decode_dataset(&magic).is_err());
    assert!(encode_dataset(&[]).is_err());
}

#[test]
fn files_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.bin");
    let set = oracle_set(2);
    let (bin, side) = write_dataset(&path, &set).unwrap();
    assert_eq!(side, sidecar_path(&path));
    assert_eq!(read_dataset(&bin).unwrap(), set);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
    let h = dataset_header(&set).unwrap();
    assert_eq!(json["node_count"], h.node_count);
    assert_eq!(json["horizon"], 3);
    assert_eq!(json["trajectory_count"], 2);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let set = common::synthetic_set(6, 2, 4, 4, 3);
    for fam in [Family::MeshTransolverContact, Family::GeoFlare] {
        let (m, mut p) = HybridModel::new(ModelConfig::desk(fam, 2), 3).unwrap();
        common::randomise(&mut p, 4, 0.3);
        let sur = Surrogate::new(m, p, common::fitted_stats(&set)).unwrap();
        let bytes = encode_checkpoint(&sur).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.params, sur.params);
        assert_eq!(back.stats, sur.stats);
        assert_eq!(back.model.config, sur.model.config);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        assert_eq!(
            rollout_sample(&back, &set[0]).unwrap().predicted,
            rollout_sample(&sur, &set[0]).unwrap().predicted
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &sur).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().params, sur.params);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad.truncate(n - 3);
        assert!(decode_checkpoint(&bad).is_err());
    }
}

#[test]
fn sha256_known_vector() {
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}
