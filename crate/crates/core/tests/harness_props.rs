use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use pemsim::geometry::Vec2;
use pemsim::harness::{
    collect, collect_to_dir, compare_dir, eval_to_file, load_model, read_dataset, read_trace, report_to_dir,
    run_to_dir, simulate, train, train_to_file, write_jsonl, DatasetRecord, HarnessConfig, Manifest, Perception,
    PlannerKind, TraceRecord, Variant, MANIFEST_FILE, TRACE_VERSION,
};
use pemsim::scene::{ActorClass, Extent, Pose2D, SalientVector, ScenarioSpec};
use pemsim::surrogates::{model_to_string, SurrogateKind, SurrogateModel, TrainingTuple};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(cases)
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0), Just(-0.0)]
}

fn tuple() -> impl Strategy<Value = TrainingTuple> {
    (
        (any::<u32>(), finite(), finite(), -PI..PI, finite(), finite(), 0.0..1.0f64, any::<bool>()),
        (any::<bool>(), finite(), finite(), prop::option::of((finite(), finite()))),
    )
        .prop_map(|((id, x, y, yaw, speed, w, occ, ped), (detected, ex, ey, v))| {
            let rel_position = Vec2::new(x, y);
            let class = if ped { ActorClass::Pedestrian } else { ActorClass::Vehicle };
            TrainingTuple {
                salient: SalientVector {
                    actor_id: id,
                    rel_position,
                    rel_yaw: yaw,
                    speed,
                    angular_velocity: w,
                    extent: Extent::new(4.5, 1.9),
                    occlusion: occ,
                    distance: rel_position.norm(),
                    class_onehot: class.one_hot(),
                },
                detected,
                position_error: detected.then(|| Vec2::new(ex, ey)),
                velocity_error: v.filter(|_| detected).map(|(a, b)| Vec2::new(a, b)),
            }
        })
}

fn trace_record() -> impl Strategy<Value = TraceRecord> {
    (finite(), finite(), finite(), -PI..PI, 0.0..1.0f64, 0.0..1.0f64, -1.0..1.0f64, prop::collection::vec(any::<u32>(), 0..3))
        .prop_map(|(t, x, y, yaw, throttle, brake, steer, collisions)| TraceRecord {
            v: TRACE_VERSION,
            t,
            ego_pose: Pose2D::new(x, y, yaw),
            ego_velocity: Vec2::new(y, x),
            ego_speed: x.abs(),
            throttle,
            brake,
            steer,
            collisions,
        })
}

fn bits(v: &impl serde::Serialize) -> String {
    serde_json::to_string(v).unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn datasets_round_trip_bitwise(tuples in prop::collection::vec(tuple(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let rows: Vec<DatasetRecord> = tuples
            .iter()
            .enumerate()
            .map(|(i, t)| DatasetRecord::new(3, 1, i as u32, t))
            .collect();
        write_jsonl(&path, &rows).unwrap();
        let back = read_dataset(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for ((b, r), t) in back.iter().zip(&rows).zip(&tuples) {
            prop_assert_eq!(bits(b), bits(r));
            prop_assert_eq!(b.salient.rel_position.x.to_bits(), t.salient.rel_position.x.to_bits());
            prop_assert_eq!(&b.tuple(), t);
        }
    }

    #[test]
    fn traces_round_trip_bitwise(records in prop::collection::vec(trace_record(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_jsonl(&path, &records).unwrap();
        let back = read_trace(&path).unwrap();
        prop_assert_eq!(bits(&back), bits(&records));
    }
}

fn small_acc() -> HarnessConfig {
    let mut cfg = HarnessConfig {
        scenario: ScenarioSpec::acc(),
        ..Default::default()
    };
    cfg.planner.kind = PlannerKind::Acc;
    cfg.scenario.acc.randomize = true;
    cfg.detector.intercept = 10.0;
    cfg.detector.distance_coef = -0.5;
    cfg.detector.occlusion_coef = -20.0;
    cfg.collect.train_scenarios = vec![0, 1];
    cfg.collect.test_scenarios = vec![10];
    cfg.train.ns.iterations = 60;
    cfg.train.ns.eval_every = 30;
    cfg.train.ns.batch_size = 64;
    cfg.train.ns.width = 16;
    cfg.train.ns.blocks = 1;
    cfg.train.lr.iterations = 50;
    cfg.run.seeds = vec![0, 1];
    cfg.compare.pkl_samples = 3;
    cfg
}

fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn every_artifact_is_in_the_manifest() {
    let cfg = small_acc();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    collect_to_dir(&cfg, 5, root).unwrap();
    train_to_file(&cfg, SurrogateKind::Ns, &root.join("train.jsonl"), 5, &root.join("ns.model.json")).unwrap();
    eval_to_file(&cfg, &root.join("ns.model.json"), &root.join("test.jsonl"), 5, &root.join("eval_ns.json")).unwrap();
    let ns = load_model(&root.join("ns.model.json")).unwrap();
    run_to_dir(&cfg, Variant::Detector, None, &cfg.run.seeds, root).unwrap();
    run_to_dir(&cfg, Variant::Surrogate(SurrogateKind::Ns), Some(&ns), &cfg.run.seeds, root).unwrap();
    run_to_dir(&cfg, Variant::Surrogate(SurrogateKind::Gt), None, &cfg.run.seeds, root).unwrap();
    let variants = [Variant::Detector, Variant::Surrogate(SurrogateKind::Ns), Variant::Surrogate(SurrogateKind::Gt)];
    compare_dir(&cfg, root, &variants, &[]).unwrap();
    report_to_dir(&cfg, Some(&root.join("compare.json")), &[root.join("eval_ns.json")], root).unwrap();

    let manifest = Manifest::load_or_default(root).unwrap();
    let mut files = files_under(root);
    files.remove(MANIFEST_FILE);
    let listed: BTreeSet<String> = manifest.artifacts.keys().cloned().collect();
    assert_eq!(files, listed);
    for (path, e) in &manifest.artifacts {
        assert_eq!(e.config_hash, cfg.hash(), "{path}");
    }
    for kind in ["dataset", "model", "eval", "trace", "timing", "run_summary", "compare", "report"] {
        assert!(manifest.artifacts.values().any(|e| e.kind == kind), "no {kind} entry");
    }
    assert_eq!(manifest.artifacts["runs/ns/seed_1/trace.jsonl"].seed, 1);
}

#[test]
fn perception_seed_leaves_scripted_actors_alone() {
    let mut cfg = HarnessConfig::default();
    cfg.scenario.duration = 12.0;
    cfg.scenario.urban.n_vehicles = 8;
    let spec = cfg.scenario_for(3);
    let data = collect(
        &HarnessConfig {
            collect: pemsim::harness::CollectConfig {
                train_scenarios: vec![0],
                test_scenarios: vec![],
                ..cfg.collect.clone()
            },
            ..cfg.clone()
        },
        0,
    )
    .unwrap();
    let gf = train(&cfg, SurrogateKind::Gf, &data.train, 0).unwrap().0;

    let others = |seed: u64, model: &SurrogateModel| {
        let mut poses = Vec::new();
        simulate(&cfg, &spec, Perception::Surrogate(model), &mut ChaCha8Rng::seed_from_u64(seed), |f| {
            poses.push(f.state.others().map(|a| (a.id, a.pose)).collect::<Vec<_>>());
            Ok(())
        })
        .unwrap();
        poses
    };
    let a = others(1, &gf);
    let b = others(2, &gf);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn training_is_bitwise_reproducible() {
    let cfg = small_acc();
    let data = collect(&cfg, 9).unwrap();
    for kind in [SurrogateKind::Ns, SurrogateKind::Lr, SurrogateKind::Gf] {
        let a = train(&cfg, kind, &data.train, 4).unwrap().0;
        let b = train(&cfg, kind, &data.train, 4).unwrap().0;
        assert_eq!(model_to_string(&a), model_to_string(&b), "{kind}");
    }
    let c = train(&cfg, SurrogateKind::Ns, &data.train, 5).unwrap().0;
    let a = train(&cfg, SurrogateKind::Ns, &data.train, 4).unwrap().0;
    assert_ne!(model_to_string(&a), model_to_string(&c), "seed must matter");
}
