use curvematch_core::net::{contrastive_loss, pair_gradient, LayerSpec, Net, NetConfig};
use curvematch_core::stage2::{psi, psi_bar, AugmentationSpec};
use curvematch_core::BinaryImage;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn micro_config() -> NetConfig {
    NetConfig {
        input_size: 8,
        layers: vec![
            LayerSpec::Conv {
                channels: 2,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Gap,
        ],
        embed_tap: None,
    }
}

fn two_conv_config() -> NetConfig {
    NetConfig {
        input_size: 9,
        layers: vec![
            LayerSpec::Conv {
                channels: 3,
                kernel: 3,
                stride: 2,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { kernel: 2, stride: 1 },
            LayerSpec::Conv {
                channels: 2,
                kernel: 2,
                stride: 1,
                pad: 0,
            },
            LayerSpec::Relu,
            LayerSpec::Gap,
        ],
        embed_tap: None,
    }
}

/// Nested-loop forward pass over a `[c][y][x]` tensor.
#[allow(clippy::needless_range_loop)]
fn oracle_forward(net: &Net<f64>, input: &[f64]) -> Vec<f64> {
    let cfg = net.config();
    let n = cfg.input_size;
    let mut x: Vec<Vec<Vec<f64>>> = vec![(0..n).map(|r| input[r * n..(r + 1) * n].to_vec()).collect()];
    let mut conv = 0;
    for layer in &cfg.layers[..=cfg.tap()] {
        x = match *layer {
            LayerSpec::Conv { kernel, stride, pad, .. } => {
                let p = &net.convs()[conv];
                conv += 1;
                let (h, w) = (x[0].len(), x[0][0].len());
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (w + 2 * pad - kernel) / stride + 1;
                let mut out = vec![vec![vec![0.0; ow]; oh]; p.out_channels];
                for (m, plane) in out.iter_mut().enumerate() {
                    for (oy, row) in plane.iter_mut().enumerate() {
                        for (ox, v) in row.iter_mut().enumerate() {
                            let mut s = p.bias[m];
                            for c in 0..p.in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as i64 - pad as i64;
                                        let ix = (ox * stride + kx) as i64 - pad as i64;
                                        if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                            continue;
                                        }
                                        let wi = ((m * p.in_channels + c) * kernel + ky) * kernel + kx;
                                        s += p.weight[wi] * x[c][iy as usize][ix as usize];
                                    }
                                }
                            }
                            *v = s;
                        }
                    }
                }
                out
            }
            LayerSpec::Relu => x
                .iter()
                .map(|p| p.iter().map(|r| r.iter().map(|&v| v.max(0.0)).collect()).collect())
                .collect(),
            LayerSpec::MaxPool { kernel, stride } => x
                .iter()
                .map(|p| {
                    let (h, w) = (p.len(), p[0].len());
                    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
                    (0..oh)
                        .map(|oy| {
                            (0..ow)
                                .map(|ox| {
                                    let mut m = f64::NEG_INFINITY;
                                    for ky in 0..kernel {
                                        for kx in 0..kernel {
                                            m = m.max(p[oy * stride + ky][ox * stride + kx]);
                                        }
                                    }
                                    m
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            LayerSpec::Gap => unreachable!(),
        };
    }
    x.iter()
        .map(|p| {
            let cells = (p.len() * p[0].len()) as f64;
            p.iter().flatten().sum::<f64>() / cells
        })
        .collect()
}

fn randomize(net: &mut Net<f64>, rng: &mut ChaCha8Rng) {
    for c in net.convs_mut() {
        for w in &mut c.weight {
            *w = rng.gen_range(-1.0..1.0);
        }
        for b in &mut c.bias {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
}

fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn forward_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for cfg in [micro_config(), two_conv_config()] {
        for taps in cfg.tappable_layers() {
            let mut net = Net::<f64>::new(cfg.with_tap(taps), 3).unwrap();
            randomize(&mut net, &mut rng);
            let x = random_input(&mut rng, cfg.input_size);
            let got = net.forward_tape(x.clone()).embedding().to_vec();
            let want = oracle_forward(&net, &x);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }
}

#[test]
fn contrastive_embedding_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for trial in 0..40 {
        let dim = rng.gen_range(1..6);
        let fa: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fb: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = trial % 2 == 0;
        // Keep the hinge away from its kink.
        let d = fa.iter().zip(&fb).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let margin = if label { 1.0 } else { d + 0.5 };
        let (_, ga, gb) = contrastive_loss(&fa, &fb, label, margin).unwrap();
        for i in 0..dim {
            for (which, g) in [(0, &ga), (1, &gb)] {
                let mut p = [fa.clone(), fb.clone()];
                p[which][i] += h;
                let up = contrastive_loss(&p[0], &p[1], label, margin).unwrap().0;
                p[which][i] -= 2.0 * h;
                let down = contrastive_loss(&p[0], &p[1], label, margin).unwrap().0;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(g[i], numeric));
                probes += 1;
            }
        }
    }
    assert!(probes >= 100, "{probes} probes");
    assert!(worst < 1e-4, "max relative error {worst}");
}

fn check_param_grads(cfg: NetConfig, seed: u64, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Net::<f64>::new(cfg.clone(), seed).unwrap();
    randomize(&mut net, &mut rng);
    let n = cfg.input_size;
    let a = random_input(&mut rng, n);
    let b = random_input(&mut rng, n);
    let mut worst: f64 = 0.0;
    for (label, margin) in [(true, 0.5), (false, 1e3)] {
        let (_, grads) = pair_gradient(&net, a.clone(), b.clone(), label, margin).unwrap();
        let flat = grads.flat();
        let h = 1e-5;
        for _ in 0..probes {
            let idx = rng.gen_range(0..net.param_count());
            let orig = *net.param_mut(idx);
            *net.param_mut(idx) = orig + h;
            let up = pair_gradient(&net, a.clone(), b.clone(), label, margin).unwrap().0;
            *net.param_mut(idx) = orig - h;
            let down = pair_gradient(&net, a.clone(), b.clone(), label, margin).unwrap().0;
            *net.param_mut(idx) = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(flat[idx], numeric));
        }
    }
    worst
}

#[test]
fn micro_net_parameter_gradients_match_finite_differences() {
    let worst = check_param_grads(micro_config(), 4, 20);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn two_conv_parameter_gradients_match_finite_differences() {
    let worst = check_param_grads(two_conv_config(), 5, 60);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn zero_distance_positive_has_zero_loss_and_gradient() {
    let f = vec![0.3, -1.2, 2.0];
    let (l, ga, gb) = contrastive_loss(&f, &f, true, 0.5).unwrap();
    assert_eq!(l, 0.0);
    assert!(ga.iter().chain(&gb).all(|&g| g == 0.0));
    let (l, ..) = contrastive_loss(&[0.0, 0.0], &[3.0, 4.0], false, 5.0).unwrap();
    assert_eq!(l, 0.0);
}

fn image_strategy(n: usize) -> impl Strategy<Value = BinaryImage> {
    proptest::collection::vec(any::<bool>(), n * n)
        .prop_map(move |bits| BinaryImage::from_fn(n, n, |x, y| bits[y * n + x]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_is_a_symmetric_squared_distance(a in image_strategy(11), b in image_strategy(7), seed in 0u64..1000) {
        let net = Net::<f32>::new(micro_config(), seed).unwrap();
        prop_assert_eq!(psi(&net, &a, &a).unwrap(), 0.0);
        let ab = psi(&net, &a, &b).unwrap();
        prop_assert_eq!(ab, psi(&net, &b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        let ra = curvematch_core::stage2::to_network_input(&a, 8).unwrap();
        let rb = curvematch_core::stage2::to_network_input(&b, 8).unwrap();
        let fa = net.forward(&ra).unwrap();
        let fb = net.forward(&rb).unwrap();
        let mut explicit = 0.0f64;
        for i in 0..fa.len() {
            let d = fa[i] as f64 - fb[i] as f64;
            explicit += d * d;
        }
        prop_assert_eq!(ab, explicit);
        prop_assert_eq!(psi_bar(&net, &a, &b, &AugmentationSpec::identity()).unwrap(), ab);
    }
}
