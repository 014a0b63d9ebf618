//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. The process exits non-zero if
//! any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use t2t_binformer::data::synth::{synthetic_pair, write_dataset};
use t2t_binformer::data::TileLayout;
use t2t_binformer::eval::{
    drd, f_measure, histogram, otsu_threshold, pseudo_f_measure, psnr, psnr_continuous, PseudoWeights,
};
use t2t_binformer::model::{forward, forward_patches, reassemble, split_patches, ModelConfig, ModelParams};
use t2t_binformer::nn::Graph;
use t2t_binformer::t2t::{token_count, tokens_to_token, T2TConfig, T2TParams};
use t2t_binformer::tensor::{grad_check, grad_check_at, Tape, Tensor, TensorError, Var};
use t2t_binformer::train::{adamw_step, mse_loss, AdamWState, TrainConfig, TrainSample, Trainer};
use t2t_binformer::nn::ParamStore;

const GRAD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-3;
const GRAD_BUDGET_S: f64 = 120.0;
const OVERFIT_MSE: f64 = 1e-3;
const OVERFIT_PSNR: f64 = 25.0;
const OVERFIT_MAX_STEPS: u64 = 3000;
const OVERFIT_BUDGET_S: f64 = 15.0 * 60.0;
/// Learning rate of the toy overfit run.
const OVERFIT_LR: f64 = 3e-3;
const METRIC_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rand_tensor(dims: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(dims.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn weighted(t: &mut Tape, y: Var) -> Result<Var, TensorError> {
    let w = rand_tensor(t.shape(y).dims(), 99);
    let w = t.constant(&w);
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

type OpCase = (&'static str, Vec<usize>, Box<dyn Fn(&mut Tape, Var) -> Result<Var, TensorError>>);

fn op_cases() -> Vec<OpCase> {
    let b4 = rand_tensor(&[4], 1);
    let m42 = rand_tensor(&[4, 2], 3);
    let m34 = rand_tensor(&[3, 4], 4);
    let g5 = rand_tensor(&[5], 5);
    let b5 = rand_tensor(&[5], 6);
    let k64 = rand_tensor(&[6, 4], 21);
    let v62 = rand_tensor(&[6, 2], 22);
    vec![
        ("add/sub/mul/scale", vec![3, 4], Box::new(move |t, x| {
            let b = t.constant(&b4);
            let y = t.add(x, b)?;
            let y = t.mul(y, x)?;
            let y = t.sub(y, b)?;
            Ok(t.scale(y, -1.5))
        })),
        ("gelu", vec![7], Box::new(|t, x| Ok(t.gelu(x)))),
        ("matmul lhs", vec![3, 4], Box::new(move |t, x| {
            let b = t.constant(&m42);
            t.matmul(x, b)
        })),
        ("matmul rhs", vec![4, 2], Box::new(move |t, x| {
            let a = t.constant(&m34);
            t.matmul(a, x)
        })),
        ("reshape/transpose", vec![2, 6], Box::new(|t, x| {
            let y = t.reshape(x, vec![3, 4])?;
            t.transpose(y)
        })),
        ("batched transpose", vec![2, 3, 4], Box::new(|t, x| t.transpose(x))),
        ("softmax axis 0", vec![2, 3, 4], Box::new(|t, x| t.softmax(x, 0))),
        ("softmax axis 2", vec![2, 3, 4], Box::new(|t, x| t.softmax(x, 2))),
        ("layer_norm", vec![3, 5], Box::new(move |t, x| {
            let g = t.constant(&g5);
            let b = t.constant(&b5);
            t.layer_norm(x, g, b, 1e-5)
        })),
        ("mean/mean_all/slice/concat", vec![3, 4], Box::new(|t, x| {
            let m = t.mean_all(x);
            let r = t.mean(x, 1)?;
            let r = t.reshape(r, vec![3, 1])?;
            let y = t.slice(x, 1, 1, 3)?;
            let z = t.concat(&[y, x, r], 1)?;
            let z = t.reshape(z, vec![21, 1])?;
            t.add(z, m)
        })),
        ("unfold", vec![2, 5, 5], Box::new(|t, x| t.unfold(x, 3, 2, 1))),
        ("fold", vec![9, 18], Box::new(|t, x| t.fold(x, 2, 5, 5, 3, 2, 1))),
        ("attention", vec![5, 4], Box::new(move |t, q| {
            let k = t.constant(&k64);
            let v = t.constant(&v62);
            t.attention(q, k, v)
        })),
        ("self-attention", vec![6, 4], Box::new(|t, x| t.attention(x, x, x))),
    ]
}

fn toy64() -> ModelConfig {
    ModelConfig::toy().with_image_size(64)
}

/// Central differences on the composed toy model: a few coordinates of
/// every parameter tensor plus the input image.
fn model_grad_check() -> Result<(f64, usize), Box<dyn std::error::Error>> {
    let cfg = toy64();
    let params = ModelParams::init(&cfg, 3)?;
    let pair = synthetic_pair(64, 11);
    let sample = TrainSample::new(pair.degraded.clone(), &pair.gt, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut probes) = (0.0f64, 0usize);
    for id in params.store.ids() {
        let x = params.store.get(id).clone();
        let coords: Vec<usize> = (0..3.min(x.numel())).map(|_| rng.gen_range(0..x.numel())).collect();
        let report = grad_check_at(
            |t: &mut Tape, v: Var| -> Result<Var, t2t_binformer::error::Error> {
                let mut g = Graph::inference(t, &params.store);
                g.bind(id, v);
                let img = g.tape.constant(&sample.image);
                let out = forward_patches(&mut g, img, &params)?;
                let target = g.tape.constant(&sample.target);
                mse_loss(g.tape, out, target)
            },
            &x,
            GRAD_H,
            GRAD_TOL,
            &coords,
        )?;
        worst = worst.max(report.max_rel_error);
        probes += report.checked;
    }
    let coords: Vec<usize> = (0..12).map(|_| rng.gen_range(0..sample.image.numel())).collect();
    let report = grad_check_at(
        |t: &mut Tape, v: Var| -> Result<Var, t2t_binformer::error::Error> {
            let mut g = Graph::inference(t, &params.store);
            let out = forward_patches(&mut g, v, &params)?;
            let target = g.tape.constant(&sample.target);
            mse_loss(g.tape, out, target)
        },
        &sample.image,
        GRAD_H,
        GRAD_TOL,
        &coords,
    )?;
    Ok((worst.max(report.max_rel_error), probes + report.checked))
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (name, dims, f) in op_cases() {
        let x = rand_tensor(&dims, 7);
        match grad_check(|t: &mut Tape, x: Var| f(t, x).and_then(|y| weighted(t, y)), &x, GRAD_H, GRAD_TOL) {
            Ok(r) => {
                worst = worst.max(r.max_rel_error);
                if !r.passed {
                    failed.push(name);
                }
            }
            Err(_) => failed.push(name),
        }
    }
    let (model_err, probes) = match model_grad_check() {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("model check errored: {e}")),
    };
    let secs = started.elapsed().as_secs_f64();
    let pass = failed.is_empty() && model_err <= GRAD_TOL && secs < GRAD_BUDGET_S;
    outcome(
        pass,
        format!(
            "ops max rel err {worst:.2e}{}; toy 64x64 model max rel err {model_err:.2e} over {probes} probes; {secs:.1}s (tol {GRAD_TOL:e}, budget {GRAD_BUDGET_S}s)",
            if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
        ),
    )
}

fn criterion_2() -> Outcome {
    let cfg = T2TConfig::default();
    let run = |side: usize| -> Result<(Vec<usize>, Vec<usize>), Box<dyn std::error::Error>> {
        let (_, sides) = token_count(side, side, &cfg)?;
        let mut store = ParamStore::new();
        let params = T2TParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(1))?;
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let img = g.tape.constant(&rand_tensor(&[3, side, side], 2).map(f64::abs));
        let seq = tokens_to_token(&mut g, img, &params)?;
        Ok((sides, g.tape.shape(seq.tokens).dims().to_vec()))
    };
    match (run(256), run(128)) {
        (Ok((s256, d256)), Ok((s128, d128))) => {
            let pass = s256 == [64, 32, 16] && d256 == [256, 768] && s128 == [32, 16, 8] && d128 == [64, 768];
            outcome(pass, format!("256: sides {s256:?} tokens {d256:?}; 128: sides {s128:?} tokens {d128:?}"))
        }
        (a, b) => outcome(false, format!("tokenizer errored: {:?} / {:?}", a.err(), b.err())),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut fold_err = 0.0f64;
    for case in 0..20 {
        let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(3..20), rng.gen_range(3..20));
        let k = rng.gen_range(1..4usize);
        let s = rng.gen_range(1..=k);
        let p = rng.gen_range(0..k);
        let x = rand_tensor(&[c, h, w], 100 + case);
        let fold_unfold = |img: &Tensor| -> Result<Tensor, TensorError> {
            let mut t = Tape::new();
            let v = t.constant(img);
            let u = t.unfold(v, k, s, p)?;
            let f = t.fold(u, c, h, w, k, s, p)?;
            Ok(t.value(f).clone())
        };
        let (Ok(num), Ok(den)) = (fold_unfold(&x), fold_unfold(&Tensor::ones(vec![c, h, w]))) else {
            continue;
        };
        for i in 0..x.numel() {
            if den.data()[i] > 0.0 {
                fold_err = fold_err.max((num.data()[i] / den.data()[i] - x.data()[i]).abs());
            }
        }
    }
    let mut patch_ok = true;
    for (side, patch) in [(16, 4), (64, 16), (48, 8), (256, 16)] {
        let img = rand_tensor(&[3, side, side], side as u64);
        let back = split_patches(&img, patch).and_then(|p| reassemble(&p, 3, side, side, patch));
        patch_ok &= back.map(|b| b == img).unwrap_or(false);
    }
    let mut tile_ok = true;
    for case in 0..30 {
        let (h, w, size) = (rng.gen_range(1..300), rng.gen_range(1..300), [16, 64, 256][case % 3]);
        let img = rand_tensor(&[3, h, w], 500 + case as u64);
        let layout = TileLayout::new(h, w, size);
        let back = layout.split(&img, 1.0).and_then(|t| layout.merge(&t));
        tile_ok &= back.map(|b| b == img).unwrap_or(false);
    }
    outcome(
        fold_err <= 1e-12 && patch_ok && tile_ok,
        format!("fold/unfold max err {fold_err:.1e} (tol 1e-12); patch split/merge exact: {patch_ok}; tile/merge/crop exact over 30 random sizes: {tile_ok}"),
    )
}

fn criterion_4() -> Outcome {
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut store = ParamStore::new();
    store.add("theta", Tensor::scalar(0.3));
    let mut state = AdamWState::new(&store);
    let (mut theta, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
    let mut adam_err = 0.0f64;
    for t in 1..=100i32 {
        let g = (t as f64 * 0.7).sin() + 0.1 * theta;
        if adamw_step(&mut store, &[Tensor::scalar(g)], &mut state, &cfg).is_err() {
            return outcome(false, "adamw_step errored");
        }
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        theta -= 1.5e-4 * m_hat / (v_hat.sqrt() + 1e-8);
        adam_err = adam_err.max((store.tensors()[0].item() - theta).abs());
    }

    let cfg = TrainConfig::default();
    let init = rand_tensor(&[4, 5], 77);
    let mut store = ParamStore::new();
    store.add("w", init.clone());
    let mut state = AdamWState::new(&store);
    let k = 25;
    for _ in 0..k {
        if adamw_step(&mut store, &[Tensor::zeros(vec![4, 5])], &mut state, &cfg).is_err() {
            return outcome(false, "adamw_step errored");
        }
    }
    let factor = 1.0 - 1.5e-4 * 0.05;
    let mut exact = true;
    let mut rel_pow = 0.0f64;
    for (&got, &x0) in store.tensors()[0].data().iter().zip(init.data()) {
        let mut want = x0;
        for _ in 0..k {
            want *= factor;
        }
        exact &= got == want;
        rel_pow = rel_pow.max(((got - x0 * factor.powi(k)) / got).abs());
    }
    outcome(
        adam_err <= 1e-15 && exact,
        format!("Adam vs scalar oracle over 100 steps: max err {adam_err:.1e} (tol 1e-15); {k} zero-grad steps equal (1-lr*wd)^k bit-exactly: {exact} (powi differs by {rel_pow:.1e} relative from rounding)"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = ModelConfig::toy();
    let pair = synthetic_pair(256, 7);
    let sample = match TrainSample::new(pair.degraded.clone(), &pair.gt, &cfg) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sample: {e}")),
    };
    let train = TrainConfig {
        lr: OVERFIT_LR,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut trainer = match Trainer::new(&cfg, train) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("trainer: {e}")),
    };
    let data = [sample];
    let started = Instant::now();
    let (mut first, mut last) = (f64::NAN, f64::NAN);
    let mut finite = true;
    while trainer.step() < OVERFIT_MAX_STEPS {
        let r = match trainer.train_step(&data) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("step {} failed: {e}", trainer.step() + 1)),
        };
        finite &= r.grad_norm.is_finite();
        if r.step == 1 {
            first = r.loss;
        }
        last = r.loss;
        if last <= OVERFIT_MSE || started.elapsed().as_secs_f64() > OVERFIT_BUDGET_S {
            break;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let out = match forward(&pair.degraded, &trainer.params) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("forward: {e}")),
    };
    let p_cont = psnr_continuous(&out.continuous, &pair.gt).unwrap_or(f64::NAN);
    let p_bin = psnr(&out.binary, &pair.gt).unwrap_or(f64::NAN);
    let pass = last <= OVERFIT_MSE && p_cont >= OVERFIT_PSNR && secs <= OVERFIT_BUDGET_S && finite;
    outcome(
        pass,
        format!(
            "toy 256x256 lr {OVERFIT_LR:e}: MSE {last:.2e} at step {} (first {first:.3}, {:.0}x lower; target <= {OVERFIT_MSE:e} within {OVERFIT_MAX_STEPS}); continuous PSNR {p_cont:.2} dB, binary PSNR {p_bin:.2} dB (target >= {OVERFIT_PSNR}); {secs:.0}s (budget {OVERFIT_BUDGET_S:.0}s)",
            trainer.step(),
            first / last
        ),
    )
}

fn psnr_oracle(p: &[bool], g: &[bool]) -> f64 {
    let wrong = p.iter().zip(g).filter(|(a, b)| a != b).count();
    if wrong == 0 {
        f64::INFINITY
    } else {
        10.0 * (p.len() as f64 / wrong as f64).log10()
    }
}

fn fm_from(tp: f64, pred_text: f64, gt_text: f64) -> f64 {
    let prec = if pred_text > 0.0 { 100.0 * tp / pred_text } else if gt_text > 0.0 { 0.0 } else { 100.0 };
    let rec = if gt_text > 0.0 { 100.0 * tp / gt_text } else if pred_text > 0.0 { 0.0 } else { 100.0 };
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

fn fm_oracle(p: &[bool], g: &[bool]) -> f64 {
    let tp = p.iter().zip(g).filter(|(a, b)| **a && **b).count() as f64;
    fm_from(tp, p.iter().filter(|a| **a).count() as f64, g.iter().filter(|b| **b).count() as f64)
}

/// Zhang–Suen over a zero-bordered copy.
fn skeleton_oracle(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let pw = w + 2;
    let mut img = vec![0u8; (h + 2) * pw];
    for y in 0..h {
        for x in 0..w {
            img[(y + 1) * pw + x + 1] = u8::from(mask[y * w + x]);
        }
    }
    loop {
        let mut changed = false;
        for step in 0..2 {
            let snapshot = img.clone();
            for y in 1..=h {
                for x in 1..=w {
                    if snapshot[y * pw + x] == 0 {
                        continue;
                    }
                    let at = |dy: isize, dx: isize| snapshot[((y as isize + dy) as usize) * pw + (x as isize + dx) as usize];
                    let p = [at(-1, 0), at(-1, 1), at(0, 1), at(1, 1), at(1, 0), at(1, -1), at(0, -1), at(-1, -1)];
                    let b: u8 = p.iter().sum();
                    let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                    let (c1, c2) = if step == 0 {
                        (p[0] * p[2] * p[4], p[2] * p[4] * p[6])
                    } else {
                        (p[0] * p[2] * p[6], p[0] * p[4] * p[6])
                    };
                    if (2..=6).contains(&b) && a == 1 && c1 == 0 && c2 == 0 {
                        img[y * pw + x] = 0;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..h * w).map(|i| img[(i / w + 1) * pw + i % w + 1] == 1).collect()
}

fn fps_oracle(p: &[bool], g: &[bool], h: usize, w: usize) -> f64 {
    let sk = skeleton_oracle(g, h, w);
    let mut ring = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if g[y * w + x] {
                continue;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if yy >= 0 && xx >= 0 && yy < h as i64 && xx < w as i64 && g[yy as usize * w + xx as usize] {
                        ring[y * w + x] = true;
                    }
                }
            }
        }
    }
    let (mut r_hit, mut r_all, mut p_hit, mut p_all) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..h * w {
        let rw = if sk[i] { 1.0 } else { 0.0 };
        let pw = if ring[i] { 0.5 } else { 1.0 };
        if g[i] {
            r_all += rw;
            if p[i] {
                r_hit += rw;
            }
        }
        if p[i] {
            p_all += pw;
            if g[i] {
                p_hit += pw;
            }
        }
    }
    let prec = if p_all > 0.0 { 100.0 * p_hit / p_all } else if r_all > 0.0 { 0.0 } else { 100.0 };
    let rec = if r_all > 0.0 { 100.0 * r_hit / r_all } else if p_all > 0.0 { 0.0 } else { 100.0 };
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

fn drd_oracle(p: &[bool], g: &[bool], h: usize, w: usize) -> f64 {
    let mut wm = [[0.0f64; 5]; 5];
    let mut total_w = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let d2 = (i as f64 - 2.0).powi(2) + (j as f64 - 2.0).powi(2);
            if d2 > 0.0 {
                wm[i][j] = 1.0 / d2.sqrt();
                total_w += wm[i][j];
            }
        }
    }
    let mut sum = 0.0;
    let mut flips = 0;
    for y in 0..h {
        for x in 0..w {
            if p[y * w + x] == g[y * w + x] {
                continue;
            }
            flips += 1;
            let b = f64::from(u8::from(p[y * w + x]));
            for i in 0..5 {
                for j in 0..5 {
                    let (yy, xx) = (y as i64 + i as i64 - 2, x as i64 + j as i64 - 2);
                    if yy >= 0 && xx >= 0 && yy < h as i64 && xx < w as i64 {
                        let gv = f64::from(u8::from(g[yy as usize * w + xx as usize]));
                        sum += wm[i][j] / total_w * (b - gv).abs();
                    }
                }
            }
        }
    }
    let mut nubn = 0;
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut count = (0, 0);
            for y in by..(by + 8).min(h) {
                for x in bx..(bx + 8).min(w) {
                    if g[y * w + x] {
                        count.0 += 1;
                    } else {
                        count.1 += 1;
                    }
                }
            }
            if count.0 > 0 && count.1 > 0 {
                nubn += 1;
            }
        }
    }
    match (nubn, flips) {
        (_, 0) => 0.0,
        (0, _) => f64::INFINITY,
        _ => sum / nubn as f64,
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= METRIC_TOL
}

fn otsu_oracle(hist: &[u64; 256]) -> u8 {
    let occupied: Vec<usize> = (0..256).filter(|&b| hist[b] > 0).collect();
    if occupied.len() == 1 {
        return occupied[0] as u8;
    }
    let n: f64 = hist.iter().map(|&c| c as f64).sum();
    let (mut best_t, mut best) = (0, -1.0);
    for t in 0..256 {
        let (mut w0, mut s0, mut w1, mut s1) = (0.0, 0.0, 0.0, 0.0);
        for (b, &c) in hist.iter().enumerate() {
            if b < t {
                w0 += c as f64;
                s0 += (b as u64 * c) as f64;
            } else {
                w1 += c as f64;
                s1 += (b as u64 * c) as f64;
            }
        }
        let var = if w0 == 0.0 || w1 == 0.0 {
            0.0
        } else {
            (w0 / n) * (w1 / n) * (s0 / w0 - s1 / w1).powi(2)
        };
        if var > best {
            best = var;
            best_t = t;
        }
    }
    best_t as u8
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (h, w) = (64, 64);
    let mut worst = [0.0f64; 4];
    let mut mismatches = 0;
    for case in 0..100 {
        let g: Vec<bool> = if case % 2 == 0 {
            (0..h * w).map(|_| rng.gen_bool(0.3)).collect()
        } else {
            let (y0, x0) = (rng.gen_range(0..40), rng.gen_range(0..40));
            (0..h * w)
                .map(|i| {
                    let (y, x) = (i / w, i % w);
                    ((y0..y0 + 20).contains(&y) && (x0..x0 + 6).contains(&x)) || ((y0 + 8..y0 + 12).contains(&y) && (x0..x0 + 24).contains(&x))
                })
                .collect()
        };
        let p: Vec<bool> = g.iter().map(|&v| if rng.gen_bool(0.1) { !v } else { v }).collect();
        let to_t = |m: &[bool]| Tensor::new(vec![h, w], m.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect()).unwrap();
        let (pt, gt) = (to_t(&p), to_t(&g));
        let got = [
            psnr(&pt, &gt).unwrap(),
            f_measure(&pt, &gt).unwrap(),
            pseudo_f_measure(&pt, &gt, &PseudoWeights::from_gt(&gt)).unwrap(),
            drd(&pt, &gt).unwrap(),
        ];
        let want = [psnr_oracle(&p, &g), fm_oracle(&p, &g), fps_oracle(&p, &g, h, w), drd_oracle(&p, &g, h, w)];
        for k in 0..4 {
            if !close(got[k], want[k]) {
                mismatches += 1;
            }
            if got[k].is_finite() {
                worst[k] = worst[k].max((got[k] - want[k]).abs());
            }
        }
    }
    let mut otsu_ok = 0;
    for case in 0..50 {
        let mut hist = [0u64; 256];
        let occupied = [1usize, 2, 5, 40, 256][case % 5];
        for _ in 0..occupied {
            hist[rng.gen_range(0..256)] += rng.gen_range(1..5000);
        }
        let t = otsu_threshold(&hist);
        let doubled = hist.map(|c| 2 * c);
        if t == otsu_oracle(&hist) && t == otsu_threshold(&doubled) {
            otsu_ok += 1;
        }
    }
    let gray = Tensor::new(vec![1, 2], vec![50.0 / 255.0, 200.0 / 255.0]).unwrap();
    let two = otsu_threshold(&histogram(&gray));
    outcome(
        mismatches == 0 && otsu_ok == 50 && (51..=200).contains(&two),
        format!(
            "100 random 64x64 pairs, max |diff| psnr {:.1e} fm {:.1e} fps {:.1e} drd {:.1e} (tol {METRIC_TOL:e}), {mismatches} mismatches; Otsu exact on {otsu_ok}/50 histograms",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = toy64();
    let samples: Vec<TrainSample> = (0..5)
        .map(|s| {
            let pair = synthetic_pair(64, 40 + s);
            TrainSample::new(pair.degraded, &pair.gt, &cfg).unwrap()
        })
        .collect();
    let train = TrainConfig {
        batch_size: 2,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let run = |steps: usize| -> Result<Vec<String>, t2t_binformer::error::Error> {
        let mut t = Trainer::new(&cfg, train.clone())?;
        (0..steps).map(|_| t.train_step(&samples).map(|r| r.csv_row())).collect()
    };
    let (Ok(a), Ok(b)) = (run(8), run(8)) else {
        return outcome(false, "training errored");
    };
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("mid.ckpt");
    let resumed = (|| -> Result<Vec<String>, t2t_binformer::error::Error> {
        let mut t = Trainer::new(&cfg, train.clone())?;
        let mut rows: Vec<String> = (0..3).map(|_| t.train_step(&samples).map(|r| r.csv_row())).collect::<Result<_, _>>()?;
        t.save(&ckpt)?;
        drop(t);
        let mut t = Trainer::load(&ckpt, Some(&cfg))?;
        for _ in 0..5 {
            rows.push(t.train_step(&samples)?.csv_row());
        }
        Ok(rows)
    })();
    let Ok(resumed) = resumed else {
        return outcome(false, "resume errored");
    };
    outcome(
        a == b && a == resumed,
        format!("two seeded runs identical over 8 steps: {}; save at step 3, reload, 5 more steps identical: {}", a == b, a == resumed),
    )
}

fn criterion_8() -> Outcome {
    match cli_smoke() {
        Ok(detail) => outcome(true, detail),
        Err(e) => outcome(false, e),
    }
}

fn cli_smoke() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_binformer");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let manifest = write_dataset(&root.join("data"), &["2009", "2010", "2011"], 3, 256, 9).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let exec = |args: &[String]| -> Result<String, String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("`{}` exited {}: {}", args[0], out.status, String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let args = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    let out = root.join("run");
    exec(&[
        args(&["train", "--manifest"]),
        vec![s(&manifest)],
        args(&["--hold-year", "2011", "--preset", "toy", "--steps", "20", "--batch-size", "2", "--seed", "42", "--out-dir"]),
        vec![s(&out)],
    ]
    .concat())?;
    let log = std::fs::read_to_string(out.join("loss.csv")).map_err(|e| e.to_string())?;
    let rows = log.lines().count() - 1;
    if rows != 20 {
        return Err(format!("loss log has {rows} rows"));
    }

    let page = root.join("data/2011/page0.png");
    let gt = root.join("data/2011/page0_gt.png");
    exec(&[args(&["infer", "--checkpoint"]), vec![s(&out.join("model.ckpt")), "--input".into(), s(&page), "--out-dir".into(), s(&out)]].concat())?;
    let binary = out.join("page0_binary.png");
    let img = image::open(&binary).map_err(|e| e.to_string())?.to_luma8();
    if img.dimensions() != (256, 256) || !img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255) {
        return Err("binary output is not a 256x256 {0,255} image".into());
    }

    let csv = exec(&[args(&["eval", "--pred"]), vec![s(&binary), "--gt".into(), s(&gt)]].concat())?;
    let lines: Vec<&str> = csv.lines().collect();
    if lines.len() != 2 || lines[0] != "psnr,fm,fps,drd" || lines[1].split(',').count() != 4 {
        return Err(format!("unexpected eval output {csv:?}"));
    }

    let table = exec(&[args(&["compare", "--manifest"]), vec![s(&manifest), "--year".into(), "2011".into(), "--format".into(), "md".into()]].concat())?;
    let t: Vec<&str> = table.lines().collect();
    let header_ok = t.first().is_some_and(|h| {
        let cols: Vec<&str> = h.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
        cols == ["Method", "Model", "PSNR", "FM", "Fps", "DRD"]
    });
    let names: Vec<&str> = t.iter().skip(2).filter_map(|l| l.split('|').nth(1)).map(str::trim).collect();
    if !header_ok || names != ["Otsu", "Niblack", "Sauvola", "Bradley"] {
        return Err(format!("unexpected comparison table:\n{table}"));
    }
    Ok(format!("train 20 steps -> infer 256x256 {{0,255}} -> eval `{}`; compare rows {names:?}", lines[1]))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("gradient correctness", criterion_1),
        ("tokenization arithmetic", criterion_2),
        ("roundtrips", criterion_3),
        ("optimizer oracles", criterion_4),
        ("overfit smoke train", criterion_5),
        ("metric oracles", criterion_6),
        ("determinism and resume", criterion_7),
        ("end-to-end CLI smoke", criterion_8),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = run();
        failures += usize::from(!o.pass);
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
