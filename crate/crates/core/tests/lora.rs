use hypergen::baselines::LoraMlp;
use hypergen::nn::{mlp_forward, MlpParams};
use hypergen::paramgen::{merge_lora, LoraAdapter};
use hypergen::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `W + (α/r)·B·A` in f64.
fn merge_reference(w: &Tensor, a: &Tensor, b: &Tensor, alpha: f64, r: usize) -> Vec<f64> {
    let (out, inn) = w.dims2().unwrap();
    let mut m = Vec::with_capacity(out * inn);
    for o in 0..out {
        for i in 0..inn {
            let ba: f64 = (0..r).map(|k| b.data()[o * r + k] as f64 * a.data()[k * inn + i] as f64).sum();
            m.push(w.data()[o * inn + i] as f64 + alpha / r as f64 * ba);
        }
    }
    m
}

fn close(a: f32, b: f64) -> bool {
    (a as f64 - b).abs() <= 1e-5 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn merged_forward_equals_unmerged(
        seed in any::<u64>(),
        inn in 1usize..9,
        hidden in 1usize..12,
        out in 1usize..7,
        r in 1usize..9,
        alpha in -8.0f32..16.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = MlpParams::init_uniform(&[inn, hidden, out], &mut rng).unwrap();
        let mut model = LoraMlp::init(base, r, alpha, 0.1, &mut rng).unwrap();
        for ad in &mut model.adapters {
            ad.b = random_tensor(&mut rng, ad.b.shape().to_vec());
        }
        let x = random_tensor(&mut rng, vec![5, inn]);
        let unmerged = model.forward_unmerged(&x, None).unwrap();
        let merged = mlp_forward(&model.merged().unwrap(), &x).unwrap();
        for (u, m) in unmerged.data().iter().zip(merged.data()) {
            prop_assert!(close(*m, *u as f64), "merged {m} vs unmerged {u}");
        }

        for (layer, ad) in model.base.layers().iter().zip(&model.adapters) {
            let w = merge_lora(&layer.weight, ad).unwrap();
            let reference = merge_reference(&layer.weight, &ad.a, &ad.b, alpha as f64, ad.r);
            for (got, want) in w.data().iter().zip(reference) {
                prop_assert!(close(*got, want), "merge {got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_b_and_zero_alpha_merges_are_identity(
        seed in any::<u64>(),
        out in 1usize..9,
        inn in 1usize..9,
        r in 1usize..9,
        alpha in -8.0f32..16.0,
    ) {
        let r = r.min(out).min(inn);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = random_tensor(&mut rng, vec![out, inn]);
        w.data_mut()[0] = -0.0;
        let adapter = |a: Tensor, b: Tensor, alpha: f32| LoraAdapter {
            target_name: "layer0".into(),
            a,
            b,
            alpha,
            r,
            dropout: 0.0,
        };
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();

        let zero_b = adapter(random_tensor(&mut rng, vec![r, inn]), Tensor::zeros(vec![out, r]).unwrap(), alpha);
        prop_assert_eq!(bits(&merge_lora(&w, &zero_b).unwrap()), bits(&w));

        let zero_alpha = adapter(random_tensor(&mut rng, vec![r, inn]), random_tensor(&mut rng, vec![out, r]), 0.0);
        prop_assert_eq!(bits(&merge_lora(&w, &zero_alpha).unwrap()), bits(&w));
    }
}

#[test]
fn fresh_adapters_do_not_change_the_base() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = MlpParams::init_uniform(&[4, 6, 3], &mut rng).unwrap();
    let model = LoraMlp::init(base.clone(), 4, 8.0, 0.1, &mut rng).unwrap();
    assert_eq!(model.merged().unwrap(), base);
    assert_eq!(model.adapters[1].r, 3, "rank is capped at min(in, out)");
}

#[test]
fn dropout_only_applies_with_an_rng() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = MlpParams::init_uniform(&[4, 6, 3], &mut rng).unwrap();
    let mut model = LoraMlp::init(base, 2, 8.0, 0.5, &mut rng).unwrap();
    for ad in &mut model.adapters {
        ad.b = random_tensor(&mut rng, ad.b.shape().to_vec());
    }
    let x = random_tensor(&mut rng, vec![6, 4]);
    let plain = model.forward_unmerged(&x, None).unwrap();
    assert_eq!(plain, model.forward_unmerged(&x, None).unwrap());
    let mut drop_rng = ChaCha8Rng::seed_from_u64(3);
    let dropped = model.forward_unmerged(&x, Some(&mut drop_rng)).unwrap();
    assert_ne!(plain, dropped);
}
