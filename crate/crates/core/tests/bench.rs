use shapprop_core::bench::{
    run_stack_ablation, toy_revealcancel_study, CorrgroupsSpec, StackConfig,
};

#[test]
fn mean_threshold_wins_most_toy_draws() {
    let study = toy_revealcancel_study(11, 100).unwrap();
    let wins = study.errors.iter().filter(|e| e[2] <= e[1]).count();
    assert!(wins >= 60, "mean threshold no worse on {wins}/100 draws");
}

#[test]
fn small_stack_run_with_samplers() {
    let cfg = StackConfig {
        data: CorrgroupsSpec {
            n: 240,
            d: 9,
            ..Default::default()
        },
        n_train: 200,
        background_k: 5,
        ime_samples: Some(90),
        kernel_samples: Some(60),
        ..Default::default()
    };
    let report = run_stack_ablation(&cfg).unwrap();
    let names: Vec<&str> = report.curves.iter().map(|c| c.method.as_str()).collect();
    assert_eq!(names, ["rescale", "random", "ime", "kernel"]);
    for c in &report.curves {
        assert_eq!(c.points.len(), 10);
    }
    assert_eq!(report.attributions.len(), 40);
    assert_eq!(report.backgrounds.len(), 5);
    assert!(report.curve("rescale").unwrap().area() > report.curve("random").unwrap().area());
}

#[test]
fn stack_rejects_degenerate_split() {
    let cfg = StackConfig {
        n_train: 1000,
        ..Default::default()
    };
    assert!(run_stack_ablation(&cfg).is_err());
}
