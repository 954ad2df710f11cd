mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umo_core::dataset::{dataset_stats, generate_trajectory_dataset, DatagenConfig, LevelCounts};
use umo_core::motion::FRAME_DIM;
use umo_core::tasks::{FramePlan, TaskKind, TaskParams};
use umo_nn::flow::{
    euler, fm_loss, fm_loss_with, gaussian, guided_velocity, interpolate, inversion_inpaint, mse, sample_euler,
    velocity_target, Draw, ModelField, NoiseCache, SamplerConfig, TrainSample,
};
use umo_nn::pipeline::{compile_items, evaluate, Producer, TaskMixture};
use umo_nn::train::{finetune, train, TrainConfig};
use umo_nn::{CondArch, Mat, Model, ModelConfig, NnError};

use common::{micro, mixed_plan, prompt_tokens, random_matrix, trained_like};

fn max_abs(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().fold(0.0f64, |m, d| m.max(d.abs()))
}

fn bitwise_eq(a: &Mat, b: &Mat) -> bool {
    a.dim() == b.dim() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
}

#[test]
fn interpolation_endpoints_and_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = random_matrix(&mut rng, 5, FRAME_DIM);
    let x1 = random_matrix(&mut rng, 5, FRAME_DIM);
    assert_eq!(interpolate(&x0, &x1, 0.0).unwrap(), x0);
    assert_eq!(interpolate(&x0, &x1, 1.0).unwrap(), x1);
    let zero = Array2::zeros((3, FRAME_DIM));
    let two = Array2::from_elem((3, FRAME_DIM), 2.0);
    assert!(interpolate(&zero, &two, 0.5).unwrap().iter().all(|&v| v == 1.0));
    assert!(interpolate(&x0, &Array2::zeros((4, FRAME_DIM)), 0.5).is_err());
    assert!(velocity_target(&x0, &Array2::zeros((5, 3))).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_matches_elementwise_oracle(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_matrix(&mut rng, 4, FRAME_DIM);
        let x1 = random_matrix(&mut rng, 4, FRAME_DIM);
        let xt = interpolate(&x0, &x1, t).unwrap();
        let v = velocity_target(&x0, &x1).unwrap();
        for ((i, j), &got) in xt.indexed_iter() {
            prop_assert!((got - ((1.0 - t) * x0[[i, j]] + t * x1[[i, j]])).abs() < 1e-12);
            prop_assert_eq!(v[[i, j]], x1[[i, j]] - x0[[i, j]]);
        }
    }

    #[test]
    fn velocity_is_the_slope_of_the_straight_path(seed in any::<u64>(), t in 0.0f64..=0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_matrix(&mut rng, 3, FRAME_DIM);
        let x1 = random_matrix(&mut rng, 3, FRAME_DIM);
        let xt = interpolate(&x0, &x1, t).unwrap();
        let slope = (&x1 - &xt) / (1.0 - t);
        prop_assert!(max_abs(&slope, &velocity_target(&x0, &x1).unwrap()) < 1e-9);
    }

    #[test]
    fn guidance_interpolates_between_branches(seed in any::<u64>(), s in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vc = random_matrix(&mut rng, 2, FRAME_DIM);
        let vu = random_matrix(&mut rng, 2, FRAME_DIM);
        let field = |_: &Mat, _: f64, cond: bool| Ok(if cond { vc.clone() } else { vu.clone() });
        let x = Array2::zeros((2, FRAME_DIM));
        let got = guided_velocity(&field, &x, 0.3, s).unwrap();
        let want = &vu + &((&vc - &vu) * s);
        prop_assert!(max_abs(&got, &want) < 1e-12);
    }
}

#[test]
fn guidance_scale_one_and_zero_select_a_single_branch() {
    let (model, store) = trained_like(Some(CondArch::TemporalFusion), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plan = mixed_plan(&mut rng, 12);
    let tokens = prompt_tokens();
    let field = ModelField::new(&model, &store, &tokens, Some(&plan)).unwrap();
    let cond_only = |x: &Mat, t: f64, _: bool| field_velocity(&field, x, t, true);
    let uncond_only = |x: &Mat, t: f64, _: bool| field_velocity(&field, x, t, false);
    let noise = NoiseCache::new(12, 9).eps;
    for (scale, reference) in [(1.0, &cond_only as &dyn Fn(&Mat, f64, bool) -> _), (0.0, &uncond_only)] {
        let cfg = SamplerConfig { steps: 8, cfg_scale: scale, seed: 9 };
        let guided = sample_euler(&model, &store, &tokens, &plan, &cfg).unwrap();
        let single = euler(&|x: &Mat, t: f64, c: bool| reference(x, t, c), &noise, &cfg, None).unwrap();
        assert!(bitwise_eq(&guided, &single), "scale {scale}");
    }
}

fn field_velocity(field: &ModelField, x: &Mat, t: f64, cond: bool) -> umo_nn::Result<Mat> {
    use umo_nn::flow::VelocityField;
    field.velocity(x, t, cond)
}

#[test]
fn null_branch_keeps_the_context_lane() {
    let (model, store) = trained_like(Some(CondArch::TemporalFusion), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = mixed_plan(&mut rng, 6);
    let b = mixed_plan(&mut rng, 6);
    let x = random_matrix(&mut rng, 6, FRAME_DIM);
    let fa = ModelField::new(&model, &store, &prompt_tokens(), Some(&a)).unwrap();
    let fb = ModelField::new(&model, &store, &prompt_tokens(), Some(&b)).unwrap();
    assert_ne!(field_velocity(&fa, &x, 0.5, false).unwrap(), field_velocity(&fb, &x, 0.5, false).unwrap());
}

#[test]
fn euler_is_exact_for_a_constant_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x0 = random_matrix(&mut rng, 7, FRAME_DIM);
    let target = random_matrix(&mut rng, 7, FRAME_DIM);
    let v = &target - &x0;
    let field = |_: &Mat, _: f64, _: bool| Ok(v.clone());
    for steps in [1, 5, 50] {
        for scale in [0.0, 1.0, 2.0] {
            let out = euler(&field, &x0, &SamplerConfig { steps, cfg_scale: scale, seed: 0 }, None).unwrap();
            assert!(max_abs(&out, &target) < 1e-12, "steps {steps} scale {scale}");
        }
    }
}

#[test]
fn euler_uses_the_left_endpoint_grid() {
    let seen = std::sync::Mutex::new(Vec::new());
    let field = |x: &Mat, t: f64, _: bool| {
        seen.lock().unwrap().push(t);
        Ok(Array2::zeros(x.dim()))
    };
    euler(&field, &Array2::zeros((1, FRAME_DIM)), &SamplerConfig { steps: 4, cfg_scale: 1.0, seed: 0 }, None).unwrap();
    assert_eq!(*seen.lock().unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
}

#[test]
fn euler_reports_non_finite_steps() {
    let field = |x: &Mat, t: f64, _: bool| Ok(Array2::from_elem(x.dim(), if t > 0.4 { f64::NAN } else { 0.0 }));
    let err = euler(&field, &Array2::zeros((2, FRAME_DIM)), &SamplerConfig { steps: 10, cfg_scale: 1.0, seed: 0 }, None);
    assert!(matches!(err, Err(NnError::NonFinite { step: 5 })), "{err:?}");
}

#[test]
fn sampler_rejects_bad_settings() {
    let field = |x: &Mat, _: f64, _: bool| Ok(x.clone());
    let x = Array2::zeros((2, FRAME_DIM));
    assert!(euler(&field, &x, &SamplerConfig { steps: 0, ..SamplerConfig::default() }, None).is_err());
    assert!(euler(&field, &x, &SamplerConfig { cfg_scale: f64::NAN, ..SamplerConfig::default() }, None).is_err());
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let (model, store) = trained_like(Some(CondArch::SeqConcat), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let plan = mixed_plan(&mut rng, 10);
    let tokens = prompt_tokens();
    let run = |seed| sample_euler(&model, &store, &tokens, &plan, &SamplerConfig { steps: 6, cfg_scale: 2.0, seed }).unwrap();
    let a = run(1);
    assert!(bitwise_eq(&a, &run(1)));
    assert_ne!(a, run(2));
}

#[test]
fn inversion_pins_known_frames_under_random_weights() {
    let (model, store) = trained_like(Some(CondArch::TemporalFusion), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let frames = 16;
    let values = random_matrix(&mut rng, frames, FRAME_DIM);
    let tokens = prompt_tokens();
    let cfg = SamplerConfig { steps: 10, cfg_scale: 2.0, seed: 4 };
    let mut random_k: Vec<usize> = (0..frames).filter(|_| rng.random_bool(0.4)).collect();
    random_k.sort_unstable();
    let all: Vec<usize> = (0..frames).collect();
    for known in [vec![], vec![5], (0..frames / 2).collect::<Vec<_>>(), all.clone(), random_k] {
        let out = inversion_inpaint(&model, &store, &known, &values, &tokens, &cfg).unwrap();
        for &i in &known {
            let d = out.row(i).iter().zip(values.row(i)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(d < 1e-6, "|K| = {}: row {i} off by {d:e}", known.len());
        }
    }
    let full = inversion_inpaint(&model, &store, &all, &values, &tokens, &cfg).unwrap();
    assert_eq!(full, values);
}

#[test]
fn inversion_without_anchors_is_plain_sampling() {
    for arch in [None, Some(CondArch::AdaLn)] {
        let (model, store) = trained_like(arch, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let values = random_matrix(&mut rng, 9, FRAME_DIM);
        let cfg = SamplerConfig { steps: 7, cfg_scale: 2.0, seed: 5 };
        let inv = inversion_inpaint(&model, &store, &[], &values, &prompt_tokens(), &cfg).unwrap();
        let plain = sample_euler(&model, &store, &prompt_tokens(), &FramePlan::generate(9), &cfg).unwrap();
        assert!(bitwise_eq(&inv, &plain));
    }
}

#[test]
fn inversion_rejects_out_of_range_frames() {
    let (model, store) = trained_like(None, 14);
    let values = Array2::zeros((4, FRAME_DIM));
    assert!(inversion_inpaint(&model, &store, &[4], &values, &[], &SamplerConfig::default()).is_err());
}

#[test]
fn stub_predictors_give_zero_and_unit_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let samples: Vec<TrainSample> = (0..4)
        .map(|i| TrainSample { target: random_matrix(&mut rng, 3 + i, FRAME_DIM), tokens: vec![], plan: None })
        .collect();
    let batch: Vec<&TrainSample> = samples.iter().collect();
    let exact = |xt: &Mat, t: f64, s: &TrainSample, d: &Draw| {
        let _ = (xt, t);
        Ok(&s.target - &d.noise)
    };
    let offset = |xt: &Mat, t: f64, s: &TrainSample, d: &Draw| exact(xt, t, s, d).map(|v| v + 1.0);
    assert_eq!(fm_loss_with(exact, &batch, 0.1, &mut rng).unwrap(), 0.0);
    let l = fm_loss_with(offset, &batch, 0.1, &mut rng).unwrap();
    assert!((l - 1.0).abs() < 1e-12, "{l}");
    assert!(fm_loss_with(exact, &[], 0.1, &mut rng).is_err());
}

#[test]
fn tape_loss_matches_straight_line_recomputation() {
    for arch in [None, Some(CondArch::TemporalFusion), Some(CondArch::ControlNet)] {
        let (model, store) = trained_like(arch, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<TrainSample> = (0..5)
            .map(|i| TrainSample {
                target: random_matrix(&mut rng, 4 + i, FRAME_DIM),
                tokens: prompt_tokens(),
                plan: Some(mixed_plan(&mut rng, 4 + i)),
            })
            .collect();
        let batch: Vec<&TrainSample> = samples.iter().collect();
        let got = fm_loss(&model, &store, &batch, 0.5, &mut ChaCha8Rng::seed_from_u64(18)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut total = 0.0;
        for s in &samples {
            let frames = s.target.nrows();
            let t: f64 = rng.random();
            let drop = rng.random::<f64>() < 0.5;
            let x0 = gaussian(&mut rng, frames, FRAME_DIM);
            let xt = &x0 * (1.0 - t) + &s.target * t;
            let text = model.text_features(&store, if drop { &[] } else { &s.tokens }).unwrap();
            let ctx = arch.map(|_| model.context_matrix(&store, s.plan.as_ref().unwrap()).unwrap());
            let pred = model.velocity(&store, &xt, t, &text, ctx.as_ref()).unwrap();
            total += mse(&pred, &(&s.target - &x0)).unwrap();
        }
        let want = total / samples.len() as f64;
        assert!((got - want).abs() < 1e-6, "{arch:?}: {got} vs {want}");
    }
}

fn memorization_setup() -> (Model, umo_nn::ParamStore, Vec<TrainSample>) {
    let cfg = ModelConfig { hidden: 16, text_dim: 16, ..micro(None) };
    let (model, store) = Model::init(cfg, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sample = TrainSample { target: random_matrix(&mut rng, 8, FRAME_DIM), tokens: prompt_tokens(), plan: None };
    (model, store, vec![sample; 32])
}

#[test]
fn memorizes_a_repeated_sample() {
    let (model, mut store, data) = memorization_setup();
    let tc = TrainConfig { lr: 3e-3, batch: 32, steps: 200, cond_drop: 0.0, seed: 22, chunk: 8 };
    let curve = train(&model, &mut store, &data, &tc, |_, _| {}).unwrap();
    let initial = curve[0];
    let last = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(last < 0.05 * initial, "initial {initial:.4}, final {last:.4}");
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let (model, mut store, data) = memorization_setup();
    let before = store.clone();
    let tc = TrainConfig { lr: 0.0, batch: 4, steps: 5, cond_drop: 0.1, seed: 23, chunk: 0 };
    train(&model, &mut store, &data, &tc, |_, _| {}).unwrap();
    for id in store.ids() {
        assert!(bitwise_eq(store.value(id), before.value(id)), "{}", store.name(id));
    }
}

#[test]
fn training_is_reproducible_for_a_seed() {
    for chunk in [0, 3] {
        let run = || {
            let (model, mut store, data) = memorization_setup();
            let tc = TrainConfig { lr: 1e-3, batch: 6, steps: 8, cond_drop: 0.3, seed: 24, chunk };
            let curve = train(&model, &mut store, &data, &tc, |_, _| {}).unwrap();
            (curve, store)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "chunk {chunk}");
        for id in sa.ids() {
            assert!(bitwise_eq(sa.value(id), sb.value(id)));
        }
    }
}

#[test]
fn training_rejects_empty_data_and_bad_settings() {
    let (model, mut store, _) = memorization_setup();
    let empty: Vec<TrainSample> = Vec::new();
    assert!(matches!(train(&model, &mut store, &empty, &TrainConfig::default(), |_, _| {}), Err(NnError::EmptyDataset)));
    let (_, _, data) = memorization_setup();
    let bad = TrainConfig { batch: 0, ..TrainConfig::default() };
    assert!(train(&model, &mut store, &data, &bad, |_, _| {}).is_err());
}

#[test]
fn divergent_training_reports_the_step() {
    let (model, mut store, data) = memorization_setup();
    let tc = TrainConfig { lr: 1e300, batch: 2, steps: 50, cond_drop: 0.0, seed: 25, chunk: 0 };
    match train(&model, &mut store, &data, &tc, |_, _| {}) {
        Err(NnError::NonFinite { step }) => assert!(step > 0 && step < 50),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn finetune_freezes_the_controlnet_base() {
    let (mut model, mut store) = trained_like(None, 26);
    let before = store.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let data: Vec<TrainSample> = (0..4)
        .map(|_| TrainSample { target: random_matrix(&mut rng, 6, FRAME_DIM), tokens: prompt_tokens(), plan: Some(mixed_plan(&mut rng, 6)) })
        .collect();
    let tc = TrainConfig { lr: 1e-2, batch: 4, steps: 3, cond_drop: 0.1, seed: 28, chunk: 0 };
    finetune(&mut model, &mut store, CondArch::ControlNet, &data, &tc, |_, _| {}).unwrap();
    for id in before.ids() {
        assert!(bitwise_eq(store.value(id), before.value(id)), "{}", before.name(id));
    }
    assert!(store.get("zero.0.w").unwrap().iter().any(|&v| v != 0.0));
    let err = finetune(&mut model, &mut store, CondArch::AdaLn, &data, &tc, |_, _| {});
    assert!(err.is_err());
}

/// Joint multi-task fine-tuning and a single-task expert both bring
/// keyframe [P]-MPJPE below the untuned starting point.
#[test]
fn unified_and_expert_finetuning_both_improve_keyframes() {
    let dg = DatagenConfig::default();
    let records = generate_trajectory_dataset(LevelCounts { l1: 2, l2: 4, l3: 4 }, 30, &dg).unwrap();
    let stats = dataset_stats(&records).unwrap();
    let params = TaskParams::default();
    let items = compile_items(&records[..4], &[TaskKind::KeyframeInfill], &params, &stats, 31).unwrap();
    let cfg = ModelConfig { hidden: 16, text_dim: 16, ..micro(None) };
    let sampler = SamplerConfig { steps: 10, cfg_scale: 2.0, seed: 32 };
    let p_mpjpe = |model: &Model, store: &umo_nn::ParamStore| {
        let (rows, _) = evaluate(Producer::Model { model, store }, &items, &stats, &sampler, "three").unwrap();
        rows[0].p_mpjpe.unwrap()
    };
    let tc = TrainConfig { lr: 2e-3, batch: 8, steps: 150, cond_drop: 0.1, seed: 33, chunk: 4 };
    let regimes: [(&str, &[TaskKind]); 2] = [
        ("unified", &[TaskKind::KeyframeInfill, TaskKind::Prediction, TaskKind::InBetween, TaskKind::TrajFollow]),
        ("expert", &[TaskKind::KeyframeInfill]),
    ];
    for (name, kinds) in regimes {
        let (mut model, mut store) = Model::init(cfg, 34).unwrap();
        model.attach_context(&mut store, CondArch::TemporalFusion, 35).unwrap();
        let before = p_mpjpe(&model, &store);
        let data = TaskMixture::new(&records, kinds, params, &stats).unwrap();
        finetune(&mut model, &mut store, CondArch::TemporalFusion, &data, &tc, |_, _| {}).unwrap();
        let after = p_mpjpe(&model, &store);
        assert!(after < before, "{name}: {before:.3} -> {after:.3}");
    }
}
