use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_config() -> ModelConfig {
    ModelConfig {
        n_blocks: 2,
        model_width: 4,
        n_heads: 2,
        ffn_hidden: 6,
        dims: ConditioningDims { d_global: 3, d_segment: 3, d_text: 4, d_lyrics: 2, d_audio: 2, d_time: 2 },
    }
}

fn random_bundle(frames: usize, dims: &ConditioningDims, rng: &mut impl Rng) -> ConditioningBundle {
    let mut b = ConditioningBundle::zeros(frames, dims);
    for m in [&mut b.global, &mut b.segment, &mut b.lyrics] {
        for v in m.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    b
}

fn random_latent(frames: usize, width: usize, rng: &mut impl Rng) -> Tensor {
    let mut x = Tensor::zeros(&[frames, width]);
    for v in x.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    x
}

/// Replace every parameter, including the zero-initialized head, with random values.
fn randomize(model: &mut VelocityModel, rng: &mut impl Rng) {
    for set in model.param_sets_mut() {
        for t in set.tensors_mut() {
            for v in t.values_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
    }
}

#[test]
fn time_embedding_shape_and_bounds() {
    let e = time_embedding(0.0, 16).unwrap();
    for pair in e.chunks(2) {
        assert_eq!(pair, [0.0, 1.0]);
    }
    for t in [0.1, 0.5, 0.77, 1.0] {
        assert!(time_embedding(t, 16).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    let a = time_embedding(0.3, 16).unwrap();
    let b = time_embedding(0.3 + 1e-9, 16).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6));
    assert!(time_embedding(1.5, 16).is_err());
    assert!(time_embedding(-0.1, 16).is_err());
    assert!(time_embedding(0.5, 3).is_err());
}

#[test]
fn time_embedding_frequencies_span_one_to_a_thousand() {
    // sin(ω t) at tiny t is ≈ ω t, which exposes each frequency.
    let t = 1e-7;
    let e = time_embedding(t, 8).unwrap();
    let omegas: Vec<f64> = e.iter().step_by(2).map(|s| s / t).collect();
    assert!((omegas[0] - 1.0).abs() < 1e-6);
    assert!((omegas[3] - 1000.0).abs() < 1e-3);
    let ratio = omegas[1] / omegas[0];
    assert!((omegas[2] / omegas[1] - ratio).abs() < 1e-6);
}

#[test]
fn config_validation() {
    let mut c = ModelConfig::default();
    assert!(c.validate().is_ok());
    c.n_heads = 5;
    assert!(c.validate().is_err());
    c.n_heads = 4;
    c.n_blocks = 0;
    assert!(c.validate().is_err());
}

#[test]
fn param_count_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = ModelConfig::default();
    let m = VelocityModel::new(c, &mut rng).unwrap();
    assert_eq!(m.param_count(), c.param_count());
    assert_eq!(c.param_count(), 91_944);
    let t = toy_config();
    assert_eq!(VelocityModel::new(t, &mut rng).unwrap().param_count(), t.param_count());
}

#[test]
fn output_shape_and_zero_initial_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = ModelConfig::default();
    let m = VelocityModel::new(c, &mut rng).unwrap();
    for frames in [1, 7, 64] {
        let cond = random_bundle(frames, &c.dims, &mut rng);
        let x = random_latent(frames, c.dims.d_audio, &mut rng);
        let v = m.forward(&x, &cond, 0.4).unwrap();
        assert_eq!(v.shape(), &[frames, c.dims.d_audio]);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn shape_mismatch_is_a_dimension_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = toy_config();
    let m = VelocityModel::new(c, &mut rng).unwrap();
    let cond = random_bundle(5, &c.dims, &mut rng);
    let x = random_latent(4, c.dims.d_audio, &mut rng);
    assert!(matches!(m.forward(&x, &cond, 0.5), Err(Error::Tensor(TensorError::Shape(_)))));
    let other = ConditioningDims { d_lyrics: 3, ..c.dims };
    let cond = random_bundle(4, &other, &mut rng);
    assert!(matches!(m.forward(&x, &cond, 0.5), Err(Error::Tensor(TensorError::Shape(_)))));
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = toy_config();
    let mut m = VelocityModel::new(c, &mut rng).unwrap();
    randomize(&mut m, &mut rng);
    let cond = random_bundle(6, &c.dims, &mut rng);
    let x = random_latent(6, c.dims.d_audio, &mut rng);
    let a = m.forward(&x, &cond, 0.25).unwrap();
    let b = m.forward(&x, &cond, 0.25).unwrap();
    assert_eq!(a.values(), b.values());
}

fn swap_rows(t: &Tensor, i: usize, j: usize) -> Tensor {
    let mut out = t.clone();
    let (a, b) = (t.row(i).to_vec(), t.row(j).to_vec());
    out.row_mut(i).copy_from_slice(&b);
    out.row_mut(j).copy_from_slice(&a);
    out
}

#[test]
fn permuting_frames_permutes_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = toy_config();
    let mut m = VelocityModel::new(c, &mut rng).unwrap();
    randomize(&mut m, &mut rng);
    let cond = random_bundle(7, &c.dims, &mut rng);
    let x = random_latent(7, c.dims.d_audio, &mut rng);
    let base = m.forward(&x, &cond, 0.6).unwrap();
    let (i, j) = (1, 5);
    let mut swapped = cond.clone();
    swapped.global = swap_rows(&cond.global, i, j);
    swapped.segment = swap_rows(&cond.segment, i, j);
    swapped.lyrics = swap_rows(&cond.lyrics, i, j);
    let out = m.forward(&swap_rows(&x, i, j), &swapped, 0.6).unwrap();
    let expected = swap_rows(&base, i, j);
    for (a, b) in out.values().iter().zip(expected.values()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = ModelConfig::default();
    let mut m = VelocityModel::new(c, &mut rng).unwrap();
    randomize(&mut m, &mut rng);
    let cond = random_bundle(9, &c.dims, &mut rng);
    let x = random_latent(9, c.dims.d_audio, &mut rng);
    let weights = m.attention_weights(&x, &cond, 0.3).unwrap();
    assert_eq!(weights.len(), c.n_blocks);
    for block in &weights {
        assert_eq!(block.len(), c.n_heads);
        for head in block {
            for r in 0..head.rows() {
                assert!(head.row(r).iter().all(|&p| p >= 0.0));
                assert!((head.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

fn loss_of(m: &VelocityModel, cond: &ConditioningBundle, target: &Tensor) -> f64 {
    let mut g = Graph::new();
    let bound = m.bind_frozen(&mut g);
    let out = m.forward_on(&mut g, &bound, cond, None).unwrap();
    let y = g.constant(target.clone());
    let l = g.mse(out, y).unwrap();
    g.scalar(l)
}

#[test]
fn gradients_match_finite_differences_for_every_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = toy_config();
    let mut m = VelocityModel::new(c, &mut rng).unwrap();
    randomize(&mut m, &mut rng);
    let frames = 4;
    let x = random_latent(frames, c.dims.d_audio, &mut rng);
    let cond = m.prepare(&x, &random_bundle(frames, &c.dims, &mut rng), 0.35).unwrap();
    let target = random_latent(frames, c.dims.d_audio, &mut rng);

    let mut g = Graph::new();
    let bound = m.bind(&mut g);
    let out = m.forward_on(&mut g, &bound, &cond, None).unwrap();
    let y = g.constant(target.clone());
    let l = g.mse(out, y).unwrap();
    g.backward(l).unwrap();
    m.zero_grads();
    m.accumulate_grads(&g, &bound).unwrap();
    let analytic: Vec<Vec<f64>> = m
        .param_sets()
        .iter()
        .flat_map(|s| s.tensors().iter().map(|t| t.grad().map(<[f64]>::to_vec).unwrap_or_default()))
        .collect();

    let h = 1e-5;
    let mut checked = 0;
    let mut flat = 0;
    for set_idx in 0..2 {
        let n_tensors = m.param_sets()[set_idx].len();
        for ti in 0..n_tensors {
            let len = m.param_sets()[set_idx].get(ti).len();
            for k in 0..len {
                let orig = m.param_sets()[set_idx].get(ti).values()[k];
                m.param_sets_mut()[set_idx].get_mut(ti).values_mut()[k] = orig + h;
                let up = loss_of(&m, &cond, &target);
                m.param_sets_mut()[set_idx].get_mut(ti).values_mut()[k] = orig - h;
                let down = loss_of(&m, &cond, &target);
                m.param_sets_mut()[set_idx].get_mut(ti).values_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[flat].get(k).copied().unwrap_or(0.0);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                assert!(rel < 1e-3, "param {} [{k}]: analytic {a}, numeric {numeric}", m.param_sets()[set_idx].names()[ti]);
                checked += 1;
            }
            flat += 1;
        }
    }
    assert_eq!(checked, c.param_count());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = toy_config();
    let mut m = VelocityModel::new(c, &mut rng).unwrap();
    randomize(&mut m, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    let back = VelocityModel::load(&path).unwrap();
    assert_eq!(back.to_checkpoint(), m.to_checkpoint());
    let cond = random_bundle(3, &c.dims, &mut rng);
    let x = random_latent(3, c.dims.d_audio, &mut rng);
    assert_eq!(back.forward(&x, &cond, 0.5).unwrap(), m.forward(&x, &cond, 0.5).unwrap());

    let mut broken = m.to_checkpoint();
    broken.params.pop();
    assert!(VelocityModel::from_checkpoint(&broken).is_err());
}
