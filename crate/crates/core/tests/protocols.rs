use manifold_probe::embedding::{read_embedding_file, write_embedding_file, DatasetManifest};
use manifold_probe::episodes::SamplerConfig;
use manifold_probe::harness::{
    fit_projector, run_characterization, run_dim_sweep, run_fewshot_eval, CharacterizationConfig, PipelineConfig,
    ProjectorCache, Reduction,
};
use manifold_probe::report::{generate_report, layer_curve_csv};
use manifold_probe::synth::{gaussian_classes, write_layered_dataset, GaussianSpec};

fn small_characterization(seed: u64) -> CharacterizationConfig {
    CharacterizationConfig {
        support_per_class: 10,
        k: 5,
        queries: manifold_probe::episodes::QueryBudget::Total(60),
        ..CharacterizationConfig::new(seed)
    }
}

#[test]
fn only_informative_layer_wins() {
    let dir = tempfile::tempdir().unwrap();
    let mut seps = vec![0.0; 12];
    seps[6] = 6.0;
    let spec = GaussianSpec::new(6, 30, 4, 1.0);
    let m = write_layered_dataset(dir.path(), "peak", &spec, &seps, 2).unwrap();
    let table = run_characterization(&m, &small_characterization(1)).unwrap();
    assert_eq!(table.best_layer(), Some(7));
    assert_eq!(table.layers.len(), 12);
}

#[test]
fn identical_layers_give_a_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianSpec::new(5, 30, 3, 2.5);
    let m = write_layered_dataset(dir.path(), "flat", &spec, &[2.5; 6], 4).unwrap();
    let table = run_characterization(&m, &small_characterization(3)).unwrap();
    let first = table.layers[0].accuracy;
    assert!(table.layers.iter().all(|l| l.accuracy == first));
    let csv = layer_curve_csv(&table);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("layer,accuracy,fit_value\n"));
}

#[test]
fn characterization_ignores_layer_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianSpec::new(5, 30, 3, 1.0);
    let m = write_layered_dataset(dir.path(), "order", &spec, &[0.5, 1.0, 2.0, 3.0, 4.0], 6).unwrap();
    let mut a = small_characterization(8);
    a.layers = Some(vec![1, 2, 3, 4, 5]);
    let mut b = a.clone();
    b.layers = Some(vec![5, 3, 1, 4, 2]);
    let ta = run_characterization(&m, &a).unwrap();
    let tb = run_characterization(&m, &b).unwrap();
    assert_eq!(ta.layers, tb.layers);
    assert_eq!(ta.fit, tb.fit);
}

#[test]
fn missing_layer_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianSpec::new(5, 30, 3, 1.0);
    let m = write_layered_dataset(dir.path(), "gap", &spec, &[1.0, 2.0], 6).unwrap();
    let mut c = small_characterization(1);
    c.layers = Some(vec![1, 2, 3]);
    assert!(run_characterization(&m, &c).is_err());
    std::fs::remove_file(dir.path().join("layer_02.feb")).unwrap();
    c.layers = None;
    assert!(run_characterization(&m, &c).is_err());
}

#[test]
fn full_rank_pca_matches_raw() {
    let set = gaussian_classes(&GaussianSpec::new(6, 40, 5, 1.5), 3).pooled();
    let mut sampler = SamplerConfig::new(5, 5, 12);
    sampler.episode_count = 200;
    let raw = PipelineConfig::new(1, sampler);
    let pca = PipelineConfig {
        reduction: Reduction::Pca(5),
        ..raw
    };
    let s_raw = run_fewshot_eval(&set, &fit_projector(&set, Reduction::Raw, &raw.ica).unwrap(), &raw).unwrap();
    let p = fit_projector(&set, Reduction::Pca(5), &pca.ica).unwrap();
    let s_pca = run_fewshot_eval(&set, &p, &pca).unwrap();
    assert!(
        (s_raw.mean_accuracy - s_pca.mean_accuracy).abs() <= s_raw.ci_halfwidth_95,
        "{} vs {}",
        s_raw.mean_accuracy,
        s_pca.mean_accuracy
    );
}

/// Class means spread over 100 of 160 dimensions: the signal survives 128
/// components and collapses at 8.
#[test]
fn dim_sweep_shows_a_cliff() {
    let dir = tempfile::tempdir().unwrap();
    // 120 random class means span all 100 informative dimensions
    let spec = GaussianSpec::new(120, 20, 100, 6.0);
    let set = gaussian_classes(&spec, 5);
    let mut records = set.records.clone();
    let mut state = 1u64;
    for r in &mut records {
        for _ in 0..60 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            r.tokens.push(((state >> 40) as f32 / (1u64 << 24) as f32 - 0.5) * 0.1);
        }
    }
    let mut header = set.header;
    header.feature_dim = 160;
    write_embedding_file(&header, &records, dir.path().join("layer_01.feb")).unwrap();
    let mut m = DatasetManifest::new("cliff", "test", "synthetic");
    m.base_dir = dir.path().to_path_buf();
    m.layer_files.insert(1, "layer_01.feb".into());
    read_embedding_file(dir.path().join("layer_01.feb")).unwrap();

    let mut sampler = SamplerConfig::new(5, 5, 3);
    sampler.episode_count = 60;
    let base = PipelineConfig::new(1, sampler);
    let cache = ProjectorCache::new(dir.path().join("cache"));
    let cells = run_dim_sweep(&m, &m, &[1], &[128, 8], &base, Some(&cache)).unwrap();
    assert_eq!(cells.len(), 3);
    let acc = |dim: Option<usize>| cells.iter().find(|c| c.dim == dim).unwrap().summary.mean_accuracy;
    let (raw, wide, narrow) = (acc(None), acc(Some(128)), acc(Some(8)));
    assert!(wide >= raw - 0.05, "raw {raw} pca128 {wide}");
    assert!(narrow < wide - 0.05, "pca128 {wide} pca8 {narrow}");
    assert!(std::fs::read_dir(dir.path().join("cache")).unwrap().count() == 2);

    let summaries: Vec<_> = cells.into_iter().map(|c| c.summary).collect();
    let table = generate_report(&summaries).unwrap();
    assert_eq!(table.rows.len(), 3);
}
