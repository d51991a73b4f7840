use prefdecomp::conditional::SchemeParams;
use prefdecomp::eval::{
    group_accuracy, heldout_accuracy, prompt_replacement_gaps, quadrant_snapshot,
    write_quadrant_csv, write_replacement_csv, Metrics,
};
use prefdecomp::reward::{FeatureLayout, LengthEncoding, RewardFunction};
use prefdecomp::synth::{
    gen_base_dataset, make_length_biased, random_reward_function, World, WorldConfig,
};
use prefdecomp::trainer::{vanilla_train, TrainConfig};
use prefdecomp::types::Group;

fn config(n_pairs: usize, seed: u64) -> WorldConfig {
    WorldConfig {
        n_prompts: 60,
        n_responses: 120,
        n_pairs,
        seed,
        ..WorldConfig::default()
    }
}

#[test]
fn zero_model_snapshot_sits_at_the_origin() {
    let d = gen_base_dataset(&config(300, 0)).unwrap();
    let m = RewardFunction::zeros(FeatureLayout::new(8, 8, LengthEncoding::default()));
    let snap = quadrant_snapshot(&m, &d, &SchemeParams::default(), d.len(), 0).unwrap();
    assert_eq!(snap.records.len(), d.len());
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(snap.records.iter().map(|r| r.dr1).collect()).abs() < 0.1);
    assert!(median(snap.records.iter().map(|r| r.dr2).collect()).abs() < 0.1);
}

#[test]
fn length_biased_training_pushes_longer_pairs_up() {
    let world = World::new(&config(4000, 1)).unwrap();
    let biased = make_length_biased(&world.base_dataset().unwrap(), 0.8, 1).unwrap();
    let cfg = TrainConfig {
        steps: 150,
        learning_rate: 0.05,
        seed: 1,
        ..TrainConfig::default()
    };
    let run = vanilla_train(&biased, &cfg).unwrap();
    let snap = &run.snapshots.last().unwrap().quadrant;
    let long = snap.group_mean_dr2(Group::ChosenLonger).unwrap();
    let short = snap.group_mean_dr2(Group::ChosenShorter).unwrap();
    assert!(long > short, "{long} vs {short}");
}

#[test]
fn replacement_gaps_are_deterministic() {
    let d = gen_base_dataset(&config(200, 2)).unwrap();
    let m = random_reward_function(&d, 0.5, 2).unwrap();
    let a = prompt_replacement_gaps(&m, &d, 8, 3).unwrap();
    let b = prompt_replacement_gaps(&m, &d, 8, 3).unwrap();
    assert_eq!(a, b);
    let none = prompt_replacement_gaps(&m, &d, 0, 3).unwrap();
    assert!(none
        .iter()
        .all(|g| g.replaced_mean.is_none() && g.n_replacements == 0));
    assert_eq!(none[0].original_gap, a[0].original_gap);
}

#[test]
fn oracle_gaps_collapse_under_replaced_prompts() {
    let world = World::new(&WorldConfig {
        oracle_scale: 6.0,
        ..config(600, 3)
    })
    .unwrap();
    let d = world.base_dataset().unwrap();
    let gaps = prompt_replacement_gaps(&world.oracle, &d, 30, 3).unwrap();
    let n = gaps.len() as f64;
    let orig = gaps.iter().map(|g| g.original_gap).sum::<f64>() / n;
    let replaced = gaps.iter().map(|g| g.replaced_mean.unwrap()).sum::<f64>() / n;
    assert!(orig > 1.0, "{orig}");
    assert!(replaced.abs() < 0.25 * orig, "{replaced} vs {orig}");
}

#[test]
fn random_model_is_at_chance() {
    let world = World::new(&config(10, 4)).unwrap();
    let held = world.heldout_fresh(50, 4000, 4).unwrap();
    let m = random_reward_function(&held, 0.5, 4).unwrap();
    let acc = heldout_accuracy(&m, &held).unwrap();
    let sd = (0.25f64 / 4000.0).sqrt();
    // a random linear model is correlated across pairs, so allow a wider band
    assert!((acc - 0.5).abs() <= 3.0 * sd + 0.05, "{acc}");
    let by_group = group_accuracy(&m, &held).unwrap();
    assert!(by_group.values().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn exports_have_the_documented_headers() {
    let d = gen_base_dataset(&config(100, 5)).unwrap();
    let m = random_reward_function(&d, 0.5, 5).unwrap();
    let snap = quadrant_snapshot(&m, &d, &SchemeParams::default(), 10, 5).unwrap();
    let mut buf = vec![];
    write_quadrant_csv(&snap, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,sample_id,dr1,dr2,group");
    assert_eq!(text.lines().count(), 11);
    let mut buf = vec![];
    write_replacement_csv(&prompt_replacement_gaps(&m, &d, 4, 5).unwrap(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "sample_id,original_gap,replaced_mean,replaced_std,n_replacements"
    );
    let metrics =
        Metrics::compute(&m, &d, &prompt_replacement_gaps(&m, &d, 4, 5).unwrap()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&metrics.to_json()).unwrap();
    for key in ["accuracy", "group_accuracy", "n_samples"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}
