#![allow(dead_code)]

use std::path::{Path, PathBuf};

use stemsim_cli::settings::{DataArgs, FileSettings, Settings};
use stemsim_core::store::{write_pack, write_triplets};
use stemsim_core::{
    generate, Configuration, EmbeddingRecord, RecordKey, Source, StemConfig, StemKind, SynthConfig, TripletRecord,
    WeightVector,
};

/// Writes a noiseless synthetic pack and manifest into `dir`.
pub fn synthetic_data(dir: &Path, n: usize, seed: u64) -> SynthConfig {
    let w = WeightVector::new(StemConfig::four_stem(), vec![0.25, 0.78, 0.08, 0.86, 1.94]).unwrap();
    let mut cfg = SynthConfig::new(w, seed);
    cfg.n_triplets = n;
    cfg.dimension = 32;
    let ds = generate(&cfg).unwrap();
    let records: Vec<EmbeddingRecord> = ds.store.iter().cloned().collect();
    write_pack(&records, 32, dir.join("synthetic.pack")).unwrap();
    write_triplets(&ds.triplets, dir.join("synthetic.tsv")).unwrap();
    cfg
}

/// The four hand-built triplets whose global-cosine agreement is 3/4.
pub fn fixture_data(dir: &Path) {
    let cases: [(&str, [f32; 2], [f32; 2], u32, u32); 4] = [
        ("t1", [1.0, 0.0], [0.0, 1.0], 8, 2),
        ("t2", [0.0, 1.0], [1.0, 1.0], 2, 8),
        ("t3", [1.0, -1.0], [-1.0, 0.0], 9, 1),
        ("t4", [1.0, 2.0], [2.0, 1.0], 8, 2),
    ];
    let key = |seg: &str| RecordKey::new(seg, StemKind::Mix, "fixture", Source::GroundTruth);
    let mut records = vec![EmbeddingRecord::new(key("x"), vec![1.0, 0.0]).unwrap()];
    let mut triplets = Vec::new();
    for (id, a, b, va, vb) in cases {
        records.push(EmbeddingRecord::new(key(&format!("{id}-a")), a.to_vec()).unwrap());
        records.push(EmbeddingRecord::new(key(&format!("{id}-b")), b.to_vec()).unwrap());
        triplets.push(TripletRecord {
            triplet_id: id.into(),
            configuration: Configuration::Xab,
            instrument_class: StemKind::Mix,
            x_segment: "x".into(),
            a_segment: format!("{id}-a"),
            b_segment: format!("{id}-b"),
            votes_a: va,
            votes_b: vb,
        });
    }
    write_pack(&records, 2, dir.join("fixture.pack")).unwrap();
    write_triplets(&triplets, dir.join("fixture.tsv")).unwrap();
}

pub fn settings(dir: &Path) -> Settings {
    Settings::merge(
        DataArgs {
            data_dir: Some(dir.to_path_buf()),
            ..Default::default()
        },
        FileSettings::default(),
    )
    .unwrap()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stemsim"))
}
