//! Built-in invariant suite behind `dmnet selfcheck`: transform round
//! trips, energy conservation, per-block gradient checks against an f64
//! finite-difference reference, residual identities, and determinism.

use dmnet_core::blocks;
use dmnet_core::model::{upscale, FreqDomain, ModelConfig};
use dmnet_core::params::{BoundParams, LeafSpec, ParamStore};
use dmnet_core::rng::SeededRng;
use dmnet_core::tape::{Tape, Var};
use dmnet_core::training::{
    self, train_loop, AdamState, FreqLoss, PairedData, TrainConfig, TrainLogEntry, TrainSink,
};
use dmnet_core::{fourier, wavelet, Shape, Tensor};
use dmnet_oracle as oracle;
use dmnet_oracle::fd::{central_diff, max_rel_err};
use dmnet_oracle::{Arr, ParamMap};

use crate::bridge::{rand_tensor, randomize_store, store_to_map, to_arr};

const GRAD_TOL: f64 = 1e-3;
const FD_H: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-3;

/// Deliberate corruption hook so the failure path of the suite itself can
/// be exercised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negate the diagonal-detail subband between analysis and synthesis.
    FlipHaarSign,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Fault, String> {
        match s {
            "none" => Ok(Fault::None),
            "flip-haar-sign" => Ok(Fault::FlipHaarSign),
            other => Err(format!("unknown fault {other:?} (expected none or flip-haar-sign)")),
        }
    }
}

/// One named check with its verdict and a one-line measurement summary.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, result: Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome { name: name.to_string(), passed: true, detail },
        Err(detail) => CheckOutcome { name: name.to_string(), passed: false, detail },
    }
}

/// Run every check. `fault` corrupts the named computation so the suite
/// must report a failure; `seed` drives all random inputs.
pub fn run_selfcheck(fault: Fault, seed: u64) -> Vec<CheckOutcome> {
    let mut out = vec![
        outcome("haar round trip", haar_round_trip(fault, seed)),
        outcome("fourier parseval", parseval(seed)),
        outcome("frequency loss vs direct dft", freq_loss_vs_dft(seed)),
    ];
    out.extend(gradient_checks(seed));
    out.push(outcome("residual identity", residual_identity(seed)));
    out.push(outcome("determinism", determinism(seed)));
    out
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// One line per check plus a summary line.
pub fn render(outcomes: &[CheckOutcome]) -> String {
    let mut text = String::new();
    for o in outcomes {
        let verdict = if o.passed { "pass" } else { "FAIL" };
        text.push_str(&format!("check {:<32} {verdict}  {}\n", o.name, o.detail));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    text.push_str(&format!("selfcheck: {passed}/{} checks passed\n", outcomes.len()));
    text
}

fn haar_round_trip(fault: Fault, seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::new(seed ^ 0x51E1F);
    let mut worst_abs = 0.0f64;
    let mut worst_energy = 0.0f64;
    for _ in 0..20 {
        let shape = Shape::new(
            1 + rng.below(2),
            1 + rng.below(4),
            2 * (1 + rng.below(16)),
            2 * (1 + rng.below(16)),
        );
        let x = rand_tensor(shape, &mut rng, -1.0, 1.0);
        let mut stack = wavelet::dwt_stack(&x).map_err(|e| e.to_string())?;
        if fault == Fault::FlipHaarSign {
            negate_diagonal_subband(&mut stack);
        }
        let ex: f64 = x.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let es: f64 = stack.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        worst_energy = worst_energy.max((es - ex).abs() / ex.max(1e-12));
        let back = wavelet::idwt_stack(&stack).map_err(|e| e.to_string())?;
        let diff = back
            .data()
            .iter()
            .zip(x.data())
            .map(|(&a, &b)| (a - b).abs() as f64)
            .fold(0.0f64, f64::max);
        worst_abs = worst_abs.max(diff);
    }
    let detail =
        format!("max abs err {worst_abs:.2e} (tol 1e-5), energy rel err {worst_energy:.2e} (tol 1e-4)");
    if worst_abs < 1e-5 && worst_energy < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The corruption hook: flips the sign of the last quarter of the subband
/// stack (the diagonal details) in place.
fn negate_diagonal_subband(stack: &mut Tensor) {
    let Shape { n, c, h, w } = stack.shape();
    let sub = c / 4;
    let data = stack.data_mut();
    for b in 0..n {
        let start = (b * c + 3 * sub) * h * w;
        for v in &mut data[start..start + sub * h * w] {
            *v = -*v;
        }
    }
}

fn parseval(seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::new(seed ^ 0xFA);
    let mut worst = 0.0f64;
    for &side in &[8usize, 12, 16, 24, 32] {
        let x = rand_tensor(Shape::new(1, 2, side, side), &mut rng, -1.0, 1.0);
        let f = fourier::fft2_stack(&x);
        let ex: f64 = x.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let ef: f64 = f.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let rel = (ef - (side * side) as f64 * ex).abs() / (((side * side) as f64) * ex);
        worst = worst.max(rel);
    }
    let detail = format!("max rel energy err {worst:.2e} (tol 1e-3)");
    if worst < 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn freq_loss_vs_dft(seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::new(seed ^ 0xD4);
    let sr = rand_tensor(Shape::new(1, 3, 16, 16), &mut rng, 0.0, 1.0);
    let hr = rand_tensor(Shape::new(1, 3, 16, 16), &mut rng, 0.0, 1.0);
    let got = training::frequency_loss_value(&sr, &hr).map_err(|e| e.to_string())?;
    let want = oracle::losses::frequency_loss(&to_arr(&sr), &to_arr(&hr));
    let rel = (got - want).abs() / want.abs().max(1e-12);
    let detail = format!("rel err {rel:.2e} vs direct-summation dft (tol 1e-4)");
    if rel < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Gradient of a projected block output with respect to the block input,
/// engine backward vs central finite differences of the f64 reference.
fn grad_case(
    x: &Tensor,
    store: &ParamStore,
    seed: u64,
    engine: impl Fn(&Tape, &BoundParams, &Var) -> dmnet_core::Result<Var>,
    reference: impl Fn(&ParamMap, &Arr) -> Arr,
) -> Result<String, String> {
    let map = store_to_map(store);
    let tape = Tape::training();
    let bound = BoundParams::bind(&tape, store);
    let leaf = tape.leaf(x.clone());
    let out = engine(&tape, &bound, &leaf).map_err(|e| e.to_string())?;

    let mut rng = SeededRng::new(seed ^ 0xBEEF);
    let proj = rand_tensor(out.shape(), &mut rng, -1.0, 1.0);
    let projf: Vec<f64> = proj.data().iter().map(|&v| v as f64).collect();
    let loss = tape
        .mul(&out, &Var::constant(proj))
        .map(|p| tape.sum(&p))
        .map_err(|e| e.to_string())?;
    let grads = tape.backward(&loss).map_err(|e| e.to_string())?;
    let got: Vec<f64> =
        grads.of(&leaf).map_err(|e| e.to_string())?.data().iter().map(|&v| v as f64).collect();

    let s = x.shape();
    let dims = [s.n, s.c, s.h, s.w];
    let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let mut f = |v: &[f64]| -> f64 {
        let out = reference(&map, &Arr::from_vec(dims, v.to_vec()));
        out.data.iter().zip(&projf).map(|(a, b)| a * b).sum()
    };
    let want = central_diff(&mut f, &x64, FD_H);
    let err = max_rel_err(&got, &want, REL_FLOOR);
    let detail = format!("max rel err {err:.2e} (tol {GRAD_TOL:.0e})");
    if err < GRAD_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn block_store(seed: u64, build: impl Fn(&mut Vec<LeafSpec>)) -> ParamStore {
    let mut specs = Vec::new();
    build(&mut specs);
    let mut store = ParamStore::init(&specs, seed);
    let mut rng = SeededRng::new(seed ^ 0x57);
    randomize_store(&mut store, &mut rng, 0.3);
    store
}

/// Finite-difference gradient checks for every block kind and loss term;
/// also reused directly by the verification suites.
pub fn gradient_checks(seed: u64) -> Vec<CheckOutcome> {
    let c = 8;
    let mut rng = SeededRng::new(seed ^ 0x6AD);
    let x = rand_tensor(Shape::new(1, c, 8, 8), &mut rng, -1.0, 1.0);

    let mut out = Vec::new();

    let store = block_store(seed, |s| blocks::sma_specs(s, "a", c));
    out.push(outcome(
        "gradient sma",
        grad_case(
            &x,
            &store,
            seed,
            |_, p, v| blocks::sma_forward(p, "a", v),
            |m, v| oracle::blocks::sma_forward(m, "a", v),
        ),
    ));

    for (label, dynamic, fourier_domain) in [
        ("gradient wma dynamic", true, false),
        ("gradient wma static", false, false),
        ("gradient wma fourier", true, true),
    ] {
        let store = block_store(seed, |s| blocks::wma_specs(s, "a", c, fourier_domain));
        out.push(outcome(
            label,
            grad_case(
                &x,
                &store,
                seed,
                |_, p, v| blocks::wma_forward(p, "a", v, dynamic, fourier_domain),
                |m, v| oracle::blocks::wma_forward(m, "a", v, dynamic, fourier_domain),
            ),
        ));
    }

    let store = block_store(seed, |s| blocks::ffn_specs(s, "a", c, 2));
    out.push(outcome(
        "gradient ffn",
        grad_case(
            &x,
            &store,
            seed,
            |_, p, v| blocks::ffn_forward(p, "a", v),
            |m, v| oracle::blocks::ffn_forward(m, "a", v),
        ),
    ));

    let store = block_store(seed, |s| blocks::smt_specs(s, "a", c, 2));
    out.push(outcome(
        "gradient smt",
        grad_case(
            &x,
            &store,
            seed,
            |_, p, v| blocks::smt_forward(p, "a", v),
            |m, v| oracle::blocks::smt_forward(m, "a", v),
        ),
    ));

    let store = block_store(seed, |s| blocks::wmt_specs(s, "a", c, 2, false));
    out.push(outcome(
        "gradient wmt",
        grad_case(
            &x,
            &store,
            seed,
            |_, p, v| blocks::wmt_forward(p, "a", v, true, false),
            |m, v| oracle::blocks::wmt_forward(m, "a", v, true, false),
        ),
    ));

    out.extend(loss_gradient_checks(seed));
    out
}

/// Gradients of the scalar losses with respect to the network output. The
/// pair is constructed with per-element gaps of at least 0.05 so central
/// differences never straddle the L1 kink.
fn loss_gradient_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = SeededRng::new(seed ^ 0x105);
    let shape = Shape::new(1, 3, 8, 8);
    let sr = rand_tensor(shape, &mut rng, 0.2, 0.8);
    let gaps: Vec<f32> = (0..shape.numel())
        .map(|_| {
            let mag = 0.05 + 0.1 * rng.uniform();
            if rng.flip() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let hr_data: Vec<f32> = sr.data().iter().zip(&gaps).map(|(&a, &g)| a + g).collect();
    let hr = Tensor::from_vec(shape, hr_data).expect("same length by construction");
    let hr_arr = to_arr(&hr);

    let cases: [(&str, FreqLoss, Option<f32>); 4] = [
        ("gradient pixel loss", FreqLoss::Fourier, Some(0.0)),
        ("gradient fourier loss", FreqLoss::Fourier, None),
        ("gradient wavelet loss", FreqLoss::Wavelet, None),
        ("gradient total loss", FreqLoss::Fourier, Some(0.1)),
    ];

    let mut out = Vec::new();
    for (label, freq, lambda) in cases {
        let result = loss_grad_case(&sr, &hr, &hr_arr, freq, lambda);
        out.push(outcome(label, result));
    }
    out
}

/// `lambda = Some(l)` checks the combined objective at that weight (0 means
/// the pixel term alone); `None` isolates the frequency term.
fn loss_grad_case(
    sr: &Tensor,
    hr: &Tensor,
    hr_arr: &Arr,
    freq: FreqLoss,
    lambda: Option<f32>,
) -> Result<String, String> {
    let tape = Tape::training();
    let leaf = tape.leaf(sr.clone());
    let (total, pixel, fre) =
        training::losses_on_tape(&tape, &leaf, hr, lambda.unwrap_or(1.0), freq)
            .map_err(|e| e.to_string())?;
    let target = match lambda {
        Some(l) if l == 0.0 => pixel,
        Some(_) => total,
        None => fre.ok_or_else(|| "frequency term missing from the tape".to_string())?,
    };
    let grads = tape.backward(&target).map_err(|e| e.to_string())?;
    let got: Vec<f64> =
        grads.of(&leaf).map_err(|e| e.to_string())?.data().iter().map(|&v| v as f64).collect();

    let s = sr.shape();
    let dims = [s.n, s.c, s.h, s.w];
    let x64: Vec<f64> = sr.data().iter().map(|&v| v as f64).collect();
    let mut f = |v: &[f64]| -> f64 {
        let a = Arr::from_vec(dims, v.to_vec());
        match (lambda, freq) {
            (Some(l), _) if l == 0.0 => oracle::losses::pixel_loss(&a, hr_arr),
            (Some(l), FreqLoss::Fourier) => oracle::losses::total_loss(&a, hr_arr, f64::from(l)),
            (Some(l), FreqLoss::Wavelet) => {
                oracle::losses::pixel_loss(&a, hr_arr)
                    + f64::from(l) * oracle::losses::wavelet_loss(&a, hr_arr)
            }
            (None, FreqLoss::Fourier) => oracle::losses::frequency_loss(&a, hr_arr),
            (None, FreqLoss::Wavelet) => oracle::losses::wavelet_loss(&a, hr_arr),
        }
    };
    let want = central_diff(&mut f, &x64, FD_H);
    let err = max_rel_err(&got, &want, REL_FLOOR);
    let detail = format!("max rel err {err:.2e} (tol {GRAD_TOL:.0e})");
    if err < GRAD_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// With the closing projection of each sub-layer zeroed, both transformer
/// blocks must return their input bit for bit: the residual path is the
/// only remaining route.
fn residual_identity(seed: u64) -> Result<String, String> {
    let c = 8;
    let mut store = block_store(seed, |s| {
        blocks::smt_specs(s, "b.smt", c, 2);
        blocks::wmt_specs(s, "b.wmt", c, 2, false);
    });
    for name in [
        "b.smt.attn.proj.weight",
        "b.smt.attn.proj.bias",
        "b.smt.ffn.project.weight",
        "b.smt.ffn.project.bias",
        "b.wmt.attn.expand.weight",
        "b.wmt.attn.expand.bias",
        "b.wmt.ffn.project.weight",
        "b.wmt.ffn.project.bias",
    ] {
        zero_param(&mut store, name)?;
    }
    let mut rng = SeededRng::new(seed ^ 0x1D);
    let x = rand_tensor(Shape::new(1, c, 8, 8), &mut rng, 0.1, 0.9);
    let tape = Tape::inference();
    let bound = BoundParams::bind(&tape, &store);
    let leaf = tape.leaf(x.clone());
    let smt = blocks::smt_forward(&bound, "b.smt", &leaf).map_err(|e| e.to_string())?;
    let wmt = blocks::wmt_forward(&bound, "b.wmt", &leaf, true, false).map_err(|e| e.to_string())?;
    if smt.tensor().data() != x.data() {
        return Err("spatial block with zeroed projections altered its input".to_string());
    }
    if wmt.tensor().data() != x.data() {
        return Err("wavelet block with zeroed projections altered its input".to_string());
    }
    Ok("both blocks reduce to the identity bit for bit".to_string())
}

fn zero_param(store: &mut ParamStore, name: &str) -> Result<(), String> {
    for i in 0..store.len() {
        if store.entry(i).0 == name {
            for v in store.tensor_mut(i).data_mut() {
                *v = 0.0;
            }
            return Ok(());
        }
    }
    Err(format!("parameter {name} not found"))
}

struct CollectSink(Vec<String>);

impl TrainSink for CollectSink {
    fn on_log(&mut self, entry: &TrainLogEntry) {
        self.0.push(entry.to_string());
    }
}

fn determinism(seed: u64) -> Result<String, String> {
    let cfg = ModelConfig {
        scale: 2,
        channels: 8,
        n_groups: 1,
        n_blocks: 1,
        ffn_ratio: 1,
        dynamic: true,
        freq_domain: FreqDomain::Wavelet,
    };

    let a = cfg.init_params(seed);
    let b = cfg.init_params(seed);
    for i in 0..a.len() {
        if a.entry(i).1.data() != b.entry(i).1.data() {
            return Err(format!("initialization differs at {}", a.entry(i).0));
        }
    }

    let mut rng = SeededRng::new(seed ^ 0xF0);
    let img = rand_tensor(Shape::new(1, 3, 12, 12), &mut rng, 0.0, 1.0);
    let y1 = upscale(&cfg, &a, &img).map_err(|e| e.to_string())?;
    let y2 = upscale(&cfg, &a, &img).map_err(|e| e.to_string())?;
    if y1.data() != y2.data() {
        return Err("two forward passes disagree bit for bit".to_string());
    }

    let tc = TrainConfig {
        model: cfg,
        lambda: 0.1,
        lr0: 1e-3,
        iters: 3,
        batch: 2,
        patch: 8,
        seed,
        freq_loss: FreqLoss::Fourier,
        augment: true,
        log_every: 1,
        ckpt_every: 0,
    };
    let hrs: Vec<Tensor> =
        (0..2).map(|i| rand_tensor(Shape::new(1, 3, 24, 24), &mut rng, 0.0, 1.0 - 0.1 * i as f32)).collect();
    let data = PairedData::from_hr(&hrs, 2).map_err(|e| e.to_string())?;
    let run = |data: &PairedData| -> Result<Vec<String>, String> {
        let mut store = tc.model.init_params(tc.seed);
        let mut state = AdamState::new(&store);
        let mut sink = CollectSink(Vec::new());
        train_loop(&tc, data, &mut store, &mut state, &mut sink).map_err(|e| e.to_string())?;
        Ok(sink.0)
    };
    let log1 = run(&data)?;
    let log2 = run(&data)?;
    if log1 != log2 {
        return Err("two seeded training runs logged different losses".to_string());
    }
    Ok(format!("init, forward, and a {}-step training replay all reproduce", tc.iters))
}
