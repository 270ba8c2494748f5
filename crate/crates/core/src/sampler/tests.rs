use super::*;
use crate::backbone::{ModelConfig, VelocityModel};
use crate::conditioning::{ConditioningDims, SegmentSpec};
use crate::lrc::{FrameRate, LrcLine, SegmentKind};
use proptest::prelude::*;
use rand::Rng;

fn dims() -> ConditioningDims {
    ConditioningDims { d_global: 3, d_segment: 3, d_text: 4, d_lyrics: 2, d_audio: 2, d_time: 2 }
}

fn conditioner() -> Conditioner {
    Conditioner::stub(dims(), FrameRate::new(10.0).unwrap()).unwrap()
}

fn spec() -> PromptSpec {
    PromptSpec::new(
        "bright pop",
        vec![
            SegmentSpec::new(0.0, 0.3, "soft piano", SegmentKind::Lyric),
            SegmentSpec::new(0.3, 0.8, "loud drums", SegmentKind::Lyric),
        ],
    )
    .unwrap()
}

fn doc() -> LrcDocument {
    LrcDocument::new(vec![LrcLine::new(0.0, "la la"), LrcLine::new(0.3, "na na na")], 1.0).unwrap()
}

fn constant(shape: &[usize], v: f64) -> Tensor {
    Tensor::full(shape, v)
}

struct Constant(f64);

impl VelocityField for Constant {
    fn velocity(&self, x: &Tensor, _: &ConditioningBundle, _: f64) -> Result<Tensor> {
        Ok(Tensor::full(x.shape(), self.0))
    }
}

/// `dx/dt = −x`.
struct Decay;

impl VelocityField for Decay {
    fn velocity(&self, x: &Tensor, _: &ConditioningBundle, _: f64) -> Result<Tensor> {
        Ok(x.scale(-1.0))
    }
}

/// A different constant per bundle, told apart by its drop flags.
struct PerBranch;

impl VelocityField for PerBranch {
    fn velocity(&self, x: &Tensor, cond: &ConditioningBundle, _: f64) -> Result<Tensor> {
        let v = match (cond.drop_global, cond.drop_lyrics) {
            (true, _) => 0.0,
            (false, true) => 0.5,
            (false, false) => 1.0,
        };
        Ok(Tensor::full(x.shape(), v))
    }
}

#[test]
fn guidance_reduces_to_each_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut r = || {
        let mut t = Tensor::zeros(&[3, 2]);
        t.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        t
    };
    let (u, c, n) = (r(), r(), r());
    assert_eq!(guided_velocity(&u, &c, &n, 1.0, 0.0).unwrap(), c);
    assert_eq!(guided_velocity(&u, &c, &n, 0.0, 0.0).unwrap(), u);
    let s = [3, 2];
    let v = guided_velocity(&constant(&s, 0.0), &constant(&s, 1.0), &constant(&s, 0.0), 3.0, 1.0).unwrap();
    assert_eq!(v, constant(&s, 3.0));
    // v_u + 3(v_c − v_u) − (v_n − v_u) with v_u = 1, v_c = 2, v_n = 4: 1 + 3 − 3 = 1
    let v = guided_velocity(&constant(&s, 1.0), &constant(&s, 2.0), &constant(&s, 4.0), 3.0, 1.0).unwrap();
    assert_eq!(v, constant(&s, 1.0));
    assert!(guided_velocity(&u, &c, &Tensor::zeros(&[2, 2]), 3.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn guidance_is_affine(seed in any::<u64>(), s in -4.0f64..4.0, w in -4.0f64..4.0, cfg in 0.0f64..5.0, cfg_n in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = || {
            let mut t = Tensor::zeros(&[4, 3]);
            t.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
            t
        };
        let (u, c, n) = (r(), r(), r());
        let base = guided_velocity(&u, &c, &n, cfg, cfg_n).unwrap();
        let scaled = guided_velocity(&u.scale(s), &c.scale(s), &n.scale(s), cfg, cfg_n).unwrap();
        let shift = |t: &Tensor| t.map(|v| v + w);
        let shifted = guided_velocity(&shift(&u), &shift(&c), &shift(&n), cfg, cfg_n).unwrap();
        for i in 0..base.len() {
            let b = base.values()[i];
            prop_assert!((scaled.values()[i] - s * b).abs() < 1e-9);
            prop_assert!((shifted.values()[i] - (b + w)).abs() < 1e-9);
        }
    }
}

#[test]
fn negative_condition_swaps_texts_and_drops_lyrics() {
    let c = conditioner();
    let mut same = spec();
    same.negative = Some(NegativePrompt { global: "bright pop".into(), segment: "soft piano".into() });
    same.segments[1].text = "soft piano".into();
    let (cond, _) = c.encode(&same, &doc(), 10).unwrap();
    let neg = build_negative_condition(&c, &same, &NegativePrompt::default(), 10).unwrap();
    assert_eq!(neg.global, cond.global);
    assert_eq!(neg.segment, cond.segment);
    assert!(neg.lyrics.values().iter().all(|&v| v == 0.0));
    assert!(cond.lyrics.values().iter().any(|&v| v != 0.0));

    let empty = PromptSpec::new("x", vec![]).unwrap();
    let neg = build_negative_condition(&c, &empty, &NegativePrompt::default(), 10).unwrap();
    assert!(neg.segment.values().iter().all(|&v| v == 0.0));
}

#[test]
fn negative_windows_match_conditional_windows() {
    let c = conditioner();
    let s = spec();
    let (cond, _) = c.encode(&s, &doc(), 10).unwrap();
    let neg = build_negative_condition(&c, &s, &NegativePrompt::default(), 10).unwrap();
    let occupied = |b: &ConditioningBundle| (0..10).map(|f| b.segment.row(f).iter().any(|&v| v != 0.0)).collect::<Vec<_>>();
    assert_eq!(occupied(&neg), occupied(&cond));
    let low = c.segment_embedder().embed("low quality");
    for f in 0..8 {
        assert_eq!(neg.segment.row(f), low.as_slice());
    }
}

#[test]
fn constant_field_integrates_exactly() {
    let triple = ConditionTriple::build(&conditioner(), &spec(), &doc(), 10).unwrap();
    let gc = GuidanceConfig { cfg: 1.0, cfg_n: 0.0, steps: 1, seed: 3 };
    let x0 = euler_sample(&Constant(0.0), &triple, &gc, 10, 2).unwrap().latent;
    for steps in [1, 4, 16] {
        let gc = GuidanceConfig { steps, ..gc };
        let out = euler_sample(&Constant(0.25), &triple, &gc, 10, 2).unwrap();
        for (a, b) in out.latent.values().iter().zip(x0.values()) {
            assert!((a - (b + 0.25)).abs() < 1e-12);
        }
        assert_eq!(out.diagnostics.len(), steps);
    }
}

fn decay_error(steps: usize) -> f64 {
    let s = PromptSpec::new("g", vec![]).unwrap();
    let triple = ConditionTriple::build(&conditioner(), &s, &LrcDocument::empty(1.0).unwrap(), 1).unwrap();
    let gc = GuidanceConfig { cfg: 1.0, cfg_n: 0.0, steps, seed: 0 };
    let out = euler_integrate(&Decay, &triple, &gc, Tensor::full(&[1, 2], 1.0)).unwrap();
    (out.latent.values()[0] - (-1f64).exp()).abs()
}

#[test]
fn euler_is_first_order_on_decay() {
    for steps in [10, 20, 40] {
        let ratio = decay_error(steps) / decay_error(2 * steps);
        assert!((1.7..=2.3).contains(&ratio), "steps {steps}: ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn euler_error_halves_with_the_step(steps in 10usize..200) {
        let ratio = decay_error(steps) / decay_error(2 * steps);
        prop_assert!((1.7..=2.3).contains(&ratio));
    }
}

#[test]
fn default_guidance_combines_three_branches() {
    let triple = ConditionTriple::build(&conditioner(), &spec(), &doc(), 10).unwrap();
    let gc = GuidanceConfig { steps: 2, ..GuidanceConfig::default() };
    let base = euler_sample(&Constant(0.0), &triple, &gc, 10, 2).unwrap().latent;
    let out = euler_sample(&PerBranch, &triple, &gc, 10, 2).unwrap().latent;
    // 0 + 3(1 − 0) − (0.5 − 0) = 2.5
    for (a, b) in out.values().iter().zip(base.values()) {
        assert!((a - b - 2.5).abs() < 1e-12);
    }
}

#[test]
fn unit_guidance_matches_conditional_only_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = ModelConfig { n_blocks: 1, model_width: 4, n_heads: 2, ffn_hidden: 4, dims: dims() };
    let mut model = VelocityModel::new(config, &mut rng).unwrap();
    for set in model.param_sets_mut() {
        for t in set.tensors_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    let triple = ConditionTriple::build(&conditioner(), &spec(), &doc(), 10).unwrap();
    let gc = GuidanceConfig { cfg: 1.0, cfg_n: 0.0, steps: 8, seed: 9 };
    let guided = euler_sample(&model, &triple, &gc, 10, 2).unwrap();

    let mut x = standard_normal(&[10, 2], &mut ChaCha8Rng::seed_from_u64(9));
    for k in 0..8 {
        let v = model.forward(&x, &triple.conditional, k as f64 / 8.0).unwrap();
        for (xi, vi) in x.values_mut().iter_mut().zip(v.values()) {
            *xi += 0.125 * vi;
        }
    }
    assert_eq!(guided.latent, x);
    assert_eq!(euler_sample(&model, &triple, &gc, 10, 2).unwrap(), guided);
}

#[test]
fn sampling_preconditions_and_aborts() {
    let triple = ConditionTriple::build(&conditioner(), &spec(), &doc(), 10).unwrap();
    let gc = GuidanceConfig { steps: 0, ..GuidanceConfig::default() };
    assert!(euler_sample(&Constant(0.0), &triple, &gc, 10, 2).is_err());
    let gc = GuidanceConfig { steps: 4, ..GuidanceConfig::default() };
    match euler_sample(&Constant(f64::MAX), &triple, &gc, 10, 2) {
        Err(Error::NumericAbort { step, .. }) => assert!(step < 4),
        other => panic!("expected abort, got {other:?}"),
    }
}
