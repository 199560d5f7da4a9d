mod common;

use tcrex::engine::ModelSet;
use tcrex::grid::DataRange;
use tcrex::{fit, synth, CrexConfig, Execution, ModelFile, RuleModel, TargetSpec};

fn both_modes(l: &tcrex::LabeledDataset, config: &CrexConfig) -> (RuleModel, RuleModel) {
    let s = fit(l, &config.clone().execution(Execution::Sequential)).unwrap();
    let p = fit(l, &config.clone().execution(Execution::Parallel)).unwrap();
    (s, p)
}

#[test]
fn sequential_and_parallel_fits_match() {
    let l = synth::noisy_clusters(1500, 2, 7).unwrap();
    let config = CrexConfig::new(synth::cluster_target()).tau(0.8).rho(0.01).trees(4).seed(3);
    let (s, p) = both_modes(&l, &config);
    assert_eq!(s.to_json().unwrap(), p.to_json().unwrap());

    let l = synth::mixed(800, 2).unwrap();
    let (s, p) = both_modes(&l, &CrexConfig::new(TargetSpec::classes(["yes"])).rho(0.02));
    assert_eq!(s.to_json().unwrap(), p.to_json().unwrap());
    let range = DataRange::of(&l.data);
    let xs = synth::sample_inputs(l.data.schema(), &range, 500, 1.0, 1);
    let data = tcrex::Dataset::new(l.data.schema().clone(), xs).unwrap();
    assert_eq!(
        s.explain_batch(&data, Execution::Sequential).unwrap(),
        p.explain_batch(&data, Execution::Parallel).unwrap()
    );
}

#[test]
fn model_files_round_trip() {
    let l = synth::regression_signal(400, 1).unwrap();
    let set = ModelSet::fit_regression(&l, &CrexConfig::new(TargetSpec::above(0.0)).rho(0.05), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.json");
    let file = ModelFile::Set(set);
    file.save(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap(), file);

    let toy = ModelFile::Single(common::toy_model());
    toy.save(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap(), toy);
}

#[test]
fn toy_metarules_follow_the_optimal_rule() {
    let m = common::toy_model();
    assert_eq!(m.metarule_count(), 3);
    // below both thresholds the narrower rule needs one change, the wider two
    assert_eq!(m.explain(&[0.0, 0.0]).unwrap().rule_index, 1);
    // one change either way: the more feasible rule wins
    assert_eq!(m.explain(&[0.0, 9.0]).unwrap().rule_index, 0);
    assert_eq!(m.explain(&[9.0, 0.0]).unwrap().rule_index, 0);
    let e = m.explain(&[2.0, 9.0]).unwrap();
    assert_eq!(e.change_dims, vec![0]);
    assert_eq!(e.keep_dims, vec![1]);
}
