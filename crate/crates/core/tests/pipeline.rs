use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use scenenet::audio::write_wav;
use scenenet::classes::SceneClass;
use scenenet::eval::PredictionDump;
use scenenet::features::{FeatureCache, FeatureVariant};
use scenenet::models::{decode_checkpoint, encode_checkpoint, Model, ModelKind};
use scenenet::par::Exec;
use scenenet::pipeline::{predict_dataset, DatasetManifest, FeatureStore, TrainOptions, Trainer};
use scenenet::synth::{self, Band};

fn write_set(dir: &std::path::Path, n: usize, seed: u64) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for i in 0..n {
        let clip = synth::cue_clip(&mut rng, &[Band { lo: 400.0, hi: 3000.0 }], &[i % 2 == 0], 22050);
        let name = format!("c{seed}_{i}.wav");
        write_wav(dir.join(&name), &clip, 16).unwrap();
        text.push_str(&format!("{name}\t{}\n", SceneClass::new(i % 2).unwrap().label()));
    }
    DatasetManifest::parse(&text, dir).unwrap()
}

#[test]
fn cached_features_match_fresh_extraction() {
    let tmp = TempDir::new().unwrap();
    let m = write_set(tmp.path(), 3, 1);
    let cached = FeatureStore::new(Some(FeatureCache::new(tmp.path().join("cache"))));
    let first = cached.dataset(&m, FeatureVariant::V2).unwrap();
    let uncached = FeatureStore { cache: None, exec: Exec::Sequential };
    assert_eq!(uncached.dataset(&m, FeatureVariant::V2).unwrap(), first);
    // audio gone: features must come from the cache alone
    for e in &m.entries {
        fs::remove_file(&e.path).unwrap();
        let (_, fresh) = cached.spectrogram(&e.path, FeatureVariant::V2).unwrap();
        assert!(!fresh);
    }
    assert_eq!(cached.dataset(&m, FeatureVariant::V2).unwrap(), first);
    assert_eq!(first.segment_count(), 30);
}

#[test]
fn missing_audio_without_cache_is_actionable() {
    let tmp = TempDir::new().unwrap();
    let m = DatasetManifest::parse("gone.wav\tpark\n", tmp.path()).unwrap();
    let err = FeatureStore::new(None).dataset(&m, FeatureVariant::V1).unwrap_err().to_string();
    assert!(err.contains("gone.wav") && err.contains("not found"), "{err}");
}

#[test]
fn sequential_and_parallel_training_agree() {
    let tmp = TempDir::new().unwrap();
    let m = write_set(tmp.path(), 4, 2);
    let data = FeatureStore::new(None).dataset(&m, FeatureVariant::V1).unwrap();
    let graph = ModelKind::CnnV2_2.graph().narrowed(4);
    let opts = TrainOptions { batch_size: 10, epochs: 2, seed: 4 };
    let run = |exec| {
        let mut model = Model::new(graph.clone(), 5).unwrap();
        model.network.set_exec(exec);
        let mut t = Trainer::new(model, opts);
        t.fit(&data, &data, |_, _| Ok(())).unwrap();
        (encode_checkpoint(&t.model), t.history().clone())
    };
    let (a, ha) = run(Exec::Sequential);
    let (b, hb) = run(Exec::Parallel);
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert_eq!(ha.len(), 2);
}

#[test]
fn prediction_dump_survives_disk() {
    let tmp = TempDir::new().unwrap();
    let m = write_set(tmp.path(), 2, 3);
    let data = FeatureStore::new(None).dataset(&m, FeatureVariant::V1).unwrap();
    let model = decode_checkpoint(&encode_checkpoint(&Model::new(ModelKind::Cnn1d.graph(), 6).unwrap())).unwrap();
    let dump = predict_dataset(&model, &data).unwrap();
    assert_eq!(dump.rows.len(), 2);
    let path = tmp.path().join("p.csv");
    fs::write(&path, dump.to_csv().unwrap()).unwrap();
    assert_eq!(PredictionDump::load(&path).unwrap(), dump);
}
