use rand::Rng as _;
use visaid::neural::layers::{
    AvgPool2, CellBias, Conv2d, Dense, Embedding, Gru, Layer, Relu, Reshape, Residual, Sequential, Sigmoid,
};
use visaid::neural::loss::{focal_loss, power_loss, softmax_cross_entropy, station_loss};
use visaid::neural::models::{BeamEncoder, Network, UmanConfig, UmanInput, UmanModel, VranConfig, VranModel};
use visaid::neural::tasks;
use visaid::neural::Tensor;
use visaid::rng::{self, Rng};

use super::{ensure, Check};

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

fn random(r: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Scalar probe `Σ w·layer(x)`.
fn probe(layer: &mut dyn Layer, x: &Tensor, w: &[f64]) -> f64 {
    let y = layer.forward(x).unwrap();
    y.data.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn check_layer(name: &str, layer: &mut dyn Layer, x: Tensor, input_grad: bool) -> Check {
    let mut r = rng::stream(99, &[x.len() as u64]);
    let y = layer.forward(&x).unwrap();
    let w = random(&mut r, y.len());
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let gx = layer.backward(&Tensor::new(y.shape.clone(), w.clone()).unwrap()).unwrap();
    let mut worst = 0.0f64;
    if input_grad {
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.data[k] += H;
            let mut xm = x.clone();
            xm.data[k] -= H;
            let n = (probe(layer, &xp, &w) - probe(layer, &xm, &w)) / (2.0 * H);
            worst = worst.max(rel_err(gx.data[k], n));
        }
    }
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for k in 0..grads.len() {
            let orig = layer.params()[pi].value[k];
            layer.params_mut()[pi].value[k] = orig + H;
            let fp = probe(layer, &x, &w);
            layer.params_mut()[pi].value[k] = orig - H;
            let fm = probe(layer, &x, &w);
            layer.params_mut()[pi].value[k] = orig;
            worst = worst.max(rel_err(grads[k], (fp - fm) / (2.0 * H)));
        }
    }
    ensure(worst < TOL, || format!("{name}: relative error {worst:e}"))
}

pub fn dense() -> Check {
    let mut r = rng::stream(1, &[]);
    let x = Tensor::vector(random(&mut r, 5));
    check_layer("dense", &mut Dense::new(5, 4, &mut r), x, true)
}

pub fn conv2d() -> Check {
    let mut r = rng::stream(2, &[]);
    let x = Tensor::new(vec![2, 4, 5], random(&mut r, 40)).unwrap();
    check_layer("conv", &mut Conv2d::new(2, 3, &mut r).with_bias(0.3), x, true)
}

pub fn pooling_and_activations() -> Check {
    let mut r = rng::stream(3, &[]);
    let x = Tensor::new(vec![2, 4, 6], random(&mut r, 48)).unwrap();
    check_layer("pool", &mut AvgPool2::default(), x.clone(), true)?;
    check_layer("sigmoid", &mut Sigmoid::default(), x.clone(), true)?;
    // keep inputs away from the kink
    let shifted = Tensor::new(
        x.shape.clone(),
        x.data.iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { *v }).collect(),
    )
    .unwrap();
    check_layer("relu", &mut Relu::default(), shifted, true)?;
    check_layer("reshape", &mut Reshape::new(vec![48]), x, true)
}

pub fn embedding_and_gru() -> Check {
    let mut r = rng::stream(4, &[]);
    let tokens = Tensor::vector(vec![2.0, 0.0, 2.0, 5.0]);
    check_layer("embedding", &mut Embedding::new(6, 3, &mut r), tokens, false)?;
    let seq = Tensor::new(vec![4, 3], random(&mut r, 12)).unwrap();
    check_layer("gru", &mut Gru::new(3, 5, &mut r), seq, true)
}

pub fn residual_with_channel_change() -> Check {
    let mut r = rng::stream(5, &[]);
    let x = Tensor::new(vec![2, 3, 4], random(&mut r, 24)).unwrap();
    for out in [1, 2, 4] {
        let body = Sequential::new()
            .push(Conv2d::new(2, 3, &mut r))
            .push(Sigmoid::default())
            .push(Conv2d::new(3, out, &mut r));
        check_layer("residual", &mut Residual::new(body), x.clone(), true)?;
    }
    Ok(())
}

pub fn cell_bias() -> Check {
    let mut r = rng::stream(6, &[]);
    let x = Tensor::new(vec![2, 3, 4], random(&mut r, 24)).unwrap();
    let mut layer = CellBias::new([2, 3, 4]);
    layer.bias.value = random(&mut r, 24);
    check_layer("cell bias", &mut layer, x, true)
}

fn check_loss(name: &str, f: impl Fn(&[f64]) -> (f64, Vec<f64>), x: &[f64]) -> Check {
    let (_, g) = f(x);
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        xp[k] += H;
        let mut xm = x.to_vec();
        xm[k] -= H;
        let n = (f(&xp).0 - f(&xm).0) / (2.0 * H);
        let e = rel_err(g[k], n);
        ensure(e < TOL, || format!("{name}[{k}]: analytic {} numeric {n} ({e:e})", g[k]))?;
    }
    Ok(())
}

pub fn losses() -> Check {
    let pred = [0.2, 0.7, 0.45, 0.9, 0.05, 0.6];
    let target = [0.0, 1.0, 0.3, 0.8, 1.0, 0.0];
    check_loss("focal", |p| focal_loss(p, &target, 2.0, 4.0).unwrap(), &pred)?;
    let label = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
    let mask = [true, false, true];
    check_loss("station", |p| station_loss(p, &label, &mask, 2.0).unwrap(), &pred)?;
    let mask6 = [true, true, false, true, true, true];
    check_loss("power", |p| power_loss(p, &target, &mask6, 2.0).unwrap(), &pred)?;
    check_loss("power-1.5", |p| power_loss(p, &target, &mask6, 1.5).unwrap(), &pred)?;
    check_loss("xent", |p| softmax_cross_entropy(p, 2).unwrap(), &[0.3, -1.2, 0.8, 2.0])
}

/// Checks a sample of parameter entries of a whole network.
fn check_network<M: Network>(name: &str, model: &mut M, loss: &mut dyn FnMut(&mut M, bool) -> f64) -> Check {
    for p in model.params_mut() {
        p.zero_grad();
    }
    loss(model, true);
    let grads: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut r = rng::stream(7, &[]);
    // entries far below the largest gradient only measure difference noise
    let floor = 1e-3 * grads.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (pi, g) in grads.iter().enumerate() {
        for _ in 0..4 {
            let k = r.random_range(0..g.len());
            let orig = model.params()[pi].value[k];
            model.params_mut()[pi].value[k] = orig + H;
            let fp = loss(model, false);
            model.params_mut()[pi].value[k] = orig - H;
            let fm = loss(model, false);
            model.params_mut()[pi].value[k] = orig;
            let n = (fp - fm) / (2.0 * H);
            worst = worst.max((g[k] - n).abs() / (g[k].abs() + n.abs()).max(floor));
        }
    }
    ensure(worst < TOL, || format!("{name}: relative error {worst:e}"))
}

pub fn uman_end_to_end() -> Check {
    let mut r = rng::stream(8, &[]);
    let features = Tensor::new(vec![6, 4, 6], random(&mut r, 144).iter().map(|v| v.abs()).collect()).unwrap();
    let input = UmanInput {
        features,
        beams: vec![1, 4],
    };
    let mut target = vec![0.0; 6];
    target[4] = 1.0;
    target[3] = 0.5;
    for encoder in [BeamEncoder::Recurrent, BeamEncoder::Stacked] {
        let cfg = UmanConfig {
            beam_encoder: encoder,
            ..UmanConfig::desk(2, (4, 6), 5)
        };
        let mut m = UmanModel::heatmap(cfg.clone(), &mut r).unwrap();
        check_network("uman heatmap", &mut m, &mut |m, bp| {
            tasks::heatmap_loss(m, &input, &target, 2.0, 4.0, bp).unwrap()
        })?;
        let mut c = UmanModel::classifier(cfg, [6, 5], 4, &mut r).unwrap();
        check_network("uman classifier", &mut c, &mut |m, bp| tasks::class_loss(m, &input, 2, bp).unwrap())?;
    }
    Ok(())
}

pub fn vran_end_to_end() -> Check {
    let mut r = rng::stream(9, &[]);
    let cfg = VranConfig {
        trunk_channels: 3,
        head_channels: 3,
        trunk_blocks: 1,
        ..VranConfig::desk((3, 4), 2)
    };
    let mut m = VranModel::new(cfg, &mut r).unwrap();
    let usdf = Tensor::new(vec![4, 3, 4], random(&mut r, 48)).unwrap();
    let mut mask = vec![false; 12];
    mask[1] = true;
    mask[7] = true;
    let mut stations = vec![0.0; 24];
    stations[1] = 1.0;
    stations[12 + 7] = 1.0;
    let mut power = vec![0.0; 12];
    power[1] = 0.8;
    power[7] = 0.3;
    check_network("vran", &mut m, &mut |m, bp| {
        tasks::allocation_loss(m, &usdf, &stations, &power, &mask, 2.0, bp).unwrap()
    })
}

/// Every check, in order.
pub fn all() -> Check {
    dense()?;
    conv2d()?;
    pooling_and_activations()?;
    embedding_and_gru()?;
    residual_with_channel_change()?;
    cell_bias()?;
    losses()?;
    uman_end_to_end()?;
    vran_end_to_end()
}
