mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use umo_core::motion::{NormStats, FRAME_DIM};
use umo_nn::checkpoint::{load_matching, Checkpoint};
use umo_nn::{CondArch, ModelConfig, NnError};

use common::{micro, random_matrix, trained_like};

/// Offset of the vocabulary hash: magic, version, field count, 10 fields.
const HASH_OFFSET: usize = 4 + 4 + 4 + 10 * 4;

fn stats() -> NormStats {
    NormStats { mean: (0..FRAME_DIM).map(|i| i as f64 * 0.01).collect(), std: vec![0.5; FRAME_DIM] }
}

fn bytes_of(ckpt: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::new();
    ckpt.write(&mut buf).unwrap();
    buf
}

#[test]
fn round_trip_preserves_config_tensors_and_stats() {
    for arch in [None].into_iter().chain(CondArch::ALL.map(Some)) {
        let (model, store) = trained_like(arch, 1);
        let ckpt = Checkpoint::new(&model, &store, &stats());
        let buf = bytes_of(&ckpt);
        let back = Checkpoint::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config, model.cfg);
        let f32_stats = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        assert_eq!(back.stats.mean, f32_stats(&stats().mean));
        assert_eq!(back.stats.std, f32_stats(&stats().std));
        for id in store.ids() {
            let name = store.name(id);
            let got = back.store.get(name).unwrap();
            for (a, b) in got.iter().zip(store.value(id)) {
                assert_eq!(*a, *b as f32 as f64, "{name}");
            }
        }
        // f32 storage is a fixed point after one pass
        assert_eq!(bytes_of(&back), buf);
    }
}

#[test]
fn loaded_model_reproduces_velocities_and_freeze_pattern() {
    let (model, store) = trained_like(Some(CondArch::ControlNet), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cn.umoc");
    Checkpoint::new(&model, &store, &stats()).save(&path).unwrap();
    let (m2, s2, _) = Checkpoint::load(&path).unwrap().into_model().unwrap();
    assert_eq!(m2.cfg, model.cfg);
    for id in s2.ids() {
        let name = s2.name(id);
        let extra = ["ctx.", "metaop", "branch.", "zero."].iter().any(|p| name.starts_with(p));
        assert_eq!(s2.is_trainable(id), extra, "{name}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(&mut rng, 6, FRAME_DIM);
    let text = random_matrix(&mut rng, 2, 8);
    let ctx = random_matrix(&mut rng, 6, FRAME_DIM);
    let a = model.velocity(&store, &x, 0.5, &text, Some(&ctx)).unwrap();
    let b = m2.velocity(&s2, &x, 0.5, &text, Some(&ctx)).unwrap();
    let diff = (&a - &b).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    assert!(diff < 1e-4, "{diff:e}");
}

#[test]
fn foreign_vocabulary_is_rejected() {
    let (model, store) = trained_like(None, 4);
    let mut buf = bytes_of(&Checkpoint::new(&model, &store, &stats()));
    buf[HASH_OFFSET] ^= 0xff;
    match Checkpoint::read(&mut buf.as_slice()) {
        Err(NnError::VocabMismatch { expected, found }) => assert_ne!(expected, found),
        other => panic!("expected VocabMismatch, got {other:?}"),
    }
}

#[test]
fn corrupt_files_are_rejected() {
    let (model, store) = trained_like(Some(CondArch::AdaLn), 5);
    let buf = bytes_of(&Checkpoint::new(&model, &store, &stats()));

    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(matches!(Checkpoint::read(&mut bad_magic.as_slice()), Err(NnError::Checkpoint(_))));

    let mut bad_version = buf.clone();
    bad_version[4] = 9;
    assert!(matches!(Checkpoint::read(&mut bad_version.as_slice()), Err(NnError::Checkpoint(_))));

    let mut bad_arch = buf.clone();
    bad_arch[HASH_OFFSET - 4] = 77;
    assert!(Checkpoint::read(&mut bad_arch.as_slice()).is_err());

    let truncated = &buf[..buf.len() / 2];
    assert!(Checkpoint::read(&mut &truncated[..]).is_err());
}

#[test]
fn config_mismatch_is_rejected_on_load() {
    let (model, store) = trained_like(Some(CondArch::TemporalFusion), 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tf.umoc");
    Checkpoint::new(&model, &store, &stats()).save(&path).unwrap();

    assert!(load_matching(&path, &micro(None)).is_ok());
    let wider = ModelConfig { hidden: 16, ..micro(None) };
    assert!(matches!(load_matching(&path, &wider), Err(NnError::Checkpoint(_))));
    assert!(Checkpoint::load(&dir.path().join("missing.umoc")).is_err());
}

#[test]
fn shape_tampering_is_caught() {
    let (model, mut store) = trained_like(None, 7);
    let id = store.id("out.w").unwrap();
    *store.value_mut(id) = ndarray::Array2::zeros((3, 3));
    let buf = bytes_of(&Checkpoint::new(&model, &store, &stats()));
    assert!(matches!(Checkpoint::read(&mut buf.as_slice()), Err(NnError::Checkpoint(_))));
}
