//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Trained models and corpora are cached under the cargo target directory,
//! so only the first run pays for training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use scma_aud::baselines::{c_amp, exhaustive_oracle, ls_bomp, AmpConfig, BompConfig};
use scma_aud::datagen::{generate_dataset, stack_real_imag, Dataset, SnrSpec};
use scma_aud::harness::{
    build_system, emit_plot_data, evaluate_method, oracle_check, run_experiment, test_frames, Detector,
    ExperimentConfig, FigureId, RunOptions,
};
use scma_aud::metrics::{auc, Confusion, MetricRow};
use scma_aud::nn::{
    bce_loss, check_gradients, dense_forward, dropout, load_model, relu_vec, save_model, select_support, sigmoid,
    Adam, AdamConfig, Architecture, BatchNorm, Gradients, LayerGrads, Matrix, Mode, Model, ModelConfig,
    SelectionPolicy,
};
use scma_aud::rng::{derive_seed, stream, stream_rng};
use scma_aud::signal::{
    snr_to_noise_variance, sample_frame_with_variance, Codebook, FactorGraph, MeasurementMatrix,
    PilotAssignment,
};

const FRAMES: usize = 10_000;
const SEED: u64 = 2020;

// criterion tolerances
const C1_MARGIN_20DB: f64 = 0.10;
const C2_RATIO: f64 = 1.5;
const C2_BAND: f64 = 0.02;
const C3_MARGIN: f64 = 0.15;
const C3_FLOOR: f64 = 0.65;
const C4_MAX_PM: f64 = 0.05;
const C5_MAX_REL: f64 = 1e-3;
const C6_ORACLE: f64 = 0.99;
const C6_AGREEMENT: f64 = 0.95;

fn scratch() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// Paper-scale sweep shared by criteria 1 to 4.
fn paper_rows() -> &'static Vec<MetricRow> {
    static ROWS: OnceLock<Vec<MetricRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let out = scratch().join("paper");
        let text = format!(
            r#"{{
                "data": {{ "train_count": 80000, "val_count": 10000, "test_count": 10000,
                          "snr_train_range": [0, 30], "seed": {SEED} }},
                "sweep": {{ "snr_db": [10, 15, 20, 25, 30], "m": [1, 2, 3],
                           "frames_per_point": {FRAMES}, "threshold_variants": false }},
                "methods": ["DFF-AUD", "ResNet-AUD", "LS-BOMP", "C-AMP"],
                "figures": [],
                "output_dir": {:?},
                "cache_dir": {:?}
            }}"#,
            out.display().to_string(),
            scratch().join("cache").display().to_string()
        );
        let cfg = ExperimentConfig::from_json(&text).expect("paper config");
        let t = Instant::now();
        let report = run_experiment(&cfg, RunOptions::default()).expect("paper sweep");
        println!(
            "  paper sweep: {:.0} s, {} of {} models from cache",
            t.elapsed().as_secs_f64(),
            report.model_cache_hits,
            report.models.len()
        );
        report.rows
    })
}

fn pd(method: &str, m: usize, snr: f64) -> f64 {
    find(method, m, snr).pd.expect("defined P_D")
}

fn find(method: &str, m: usize, snr: f64) -> &'static MetricRow {
    paper_rows()
        .iter()
        .find(|r| r.method == method && r.m == m && r.snr_db == snr)
        .unwrap_or_else(|| panic!("no row for {method} m={m} snr={snr}"))
}

fn criterion_1() -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for snr in [10.0, 15.0, 20.0, 25.0, 30.0] {
        let (d, b) = (pd("DFF-AUD", 1, snr), pd("LS-BOMP", 1, snr));
        ok &= d >= b;
        detail.push(format!("{snr}dB {d:.4}/{b:.4}"));
    }
    let gap = pd("DFF-AUD", 1, 20.0) - pd("LS-BOMP", 1, 20.0);
    ok &= gap >= C1_MARGIN_20DB;
    (ok, format!("DFF/BOMP P_D {}; gap at 20 dB {gap:+.4} (need >= {C1_MARGIN_20DB})", detail.join(", ")))
}

fn criterion_2() -> (bool, String) {
    let (d, b) = (pd("DFF-AUD", 2, 30.0), pd("LS-BOMP", 2, 30.0));
    let need = C2_RATIO * b - C2_BAND;
    (d >= need, format!("DFF {d:.4}, BOMP {b:.4}, need DFF >= {need:.4}"))
}

fn criterion_3() -> (bool, String) {
    let dnn = pd("DFF-AUD", 3, 30.0).min(pd("ResNet-AUD", 3, 30.0));
    let base = pd("LS-BOMP", 3, 30.0).max(pd("C-AMP-soft", 3, 30.0));
    let ok = dnn - base >= C3_MARGIN && dnn >= C3_FLOOR;
    (
        ok,
        format!(
            "DFF {:.4}, ResNet {:.4}, LS-BOMP {:.4}, C-AMP {:.4}; worst DNN margin {:+.4}",
            pd("DFF-AUD", 3, 30.0),
            pd("ResNet-AUD", 3, 30.0),
            pd("LS-BOMP", 3, 30.0),
            pd("C-AMP-soft", 3, 30.0),
            dnn - base
        ),
    )
}

fn criterion_4() -> (bool, String) {
    let r = find("DFF-AUD", 1, 30.0);
    let pm = r.pm.expect("defined P_M");
    (pm <= C4_MAX_PM, format!("P_M {pm:.4} over {} frames (limit {C4_MAX_PM})", r.frames))
}

fn small(arch: Architecture) -> ModelConfig {
    ModelConfig {
        hidden_width: 4,
        depth: if arch == Architecture::Dff { 4 } else { 2 },
        ..ModelConfig::dff(4, 3).with_architecture(arch)
    }
}

fn criterion_5() -> (bool, String) {
    // L=2, N=3: stacked inputs of length 4, three outputs, one active device per row
    let mut rng = stream_rng(SEED, stream::TRAIN);
    let x = Matrix::from_vec(8, 4, (0..32).map(|_| rng.random_range(-1.5..1.5)).collect());
    let y = Matrix::from_vec(8, 3, (0..24).map(|i| (i % 3 == (i / 3) % 3) as u8 as f64).collect());
    let mut worst = 0.0f64;
    let mut count = 0;
    for arch in [Architecture::Dff, Architecture::ResNet] {
        let mut model = Model::<f64>::new(small(arch), 17).expect("model");
        // zero biases would leave dropped units exactly on the ReLU kink
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            for (k, b) in layer.dense.bias.iter_mut().enumerate() {
                *b = 0.01 * (1 + i + k) as f64;
            }
        }
        let report = check_gradients(&model, &x, &y, 23, 1e-4).expect("gradient check");
        count += report.tensors.iter().map(|t| t.len).sum::<usize>();
        worst = worst.max(report.worst());
    }
    (worst <= C5_MAX_REL, format!("{count} parameters, worst relative error {worst:.2e}"))
}

fn criterion_6() -> (bool, String) {
    let cfg = ExperimentConfig::from_json(&format!(r#"{{ "data": {{ "seed": {SEED} }} }}"#)).expect("config");
    let sys = build_system(&cfg).expect("system");
    let rows = oracle_check(&sys.phi, &[1, 2], FRAMES, derive_seed(SEED, &[stream::ORACLE])).expect("oracle check");
    let ok = rows.iter().all(|r| r.oracle_exact >= C6_ORACLE)
        && rows.iter().filter(|r| r.m == 1).all(|r| r.bomp_agreement >= C6_AGREEMENT);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("m={} oracle {:.4} bomp agreement {:.4}", r.m, r.oracle_exact, r.bomp_agreement))
        .collect();
    (ok, detail.join("; "))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn analytic_checks() -> Vec<(&'static str, bool)> {
    let mut checks: Vec<(&'static str, bool)> = Vec::new();
    let mut check = |name, ok| checks.push((name, ok));

    // factor graph and codebook
    let g = FactorGraph::lexicographic(4, 6, 2).unwrap();
    check(
        "graph (4,6,2) lexicographic",
        g.columns() == [vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]],
    );
    check("graph (4,7,2) rejected", FactorGraph::lexicographic(4, 7, 2).is_err());
    check("graph (2,2,1) degenerate", FactorGraph::lexicographic(2, 2, 1).unwrap().columns() == [vec![0], vec![1]]);
    let cb = Codebook::build(g.clone(), None).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    check(
        "codebook column 0 entries 1/sqrt2",
        close(cb.matrix()[(0, 0)].re, h, 1e-15) && close(cb.matrix()[(1, 0)].re, h, 1e-15)
            && cb.matrix()[(0, 0)].im.abs() < 1e-15 && cb.matrix()[(1, 0)].im.abs() < 1e-15,
    );
    check("codebook unit columns", (0..6).all(|n| close(cb.matrix().column(n).norm(), 1.0, 1e-12)));
    let mut table = cb.matrix().clone();
    table[(3, 0)] = c(0.5, 0.0);
    check("codebook pattern mismatch rejected", Codebook::build(g.clone(), Some(&table)).is_err());

    // pilots and measurement matrix
    let p = PilotAssignment::assign(6, 9);
    check("pilots deterministic", p == PilotAssignment::assign(6, 9));
    check("pilots unit modulus", p.symbols().iter().all(|s| close(s.norm(), 1.0, 1e-12)));
    check("single pilot is QPSK", PilotAssignment::assign(1, 4).len() == 1);
    let ones = MeasurementMatrix::with_symbols(&cb, &[c(1.0, 0.0); 6]).unwrap();
    check("unit pilots give Phi = C", ones.matrix() == cb.matrix());
    let phi = MeasurementMatrix::new(&cb, &p).unwrap();
    check(
        "|Phi| = |C| with factor graph pattern",
        (0..4).all(|l| {
            (0..6).all(|n| {
                close(phi.matrix()[(l, n)].norm(), cb.matrix()[(l, n)].norm(), 1e-12)
                    && (phi.matrix()[(l, n)].norm() > 0.0) == g.connects(l, n)
            })
        }),
    );

    // frames and SNR
    let mut r = stream_rng(1, stream::SWEEP);
    let f = sample_frame_with_variance(&phi, 1, 0.0, &mut r).unwrap();
    let n = f.activity.support()[0];
    check("noiseless single device y = phi_n h_n", (&f.y - phi.column(n) * f.channel[n]).norm() < 1e-15);
    check("m=2 frame has two nonzeros", sample_frame_with_variance(&phi, 2, 0.1, &mut r).unwrap().g.iter().filter(|v| v.norm() > 0.0).count() == 2);
    check("0 dB noise variance 0.25", close(snr_to_noise_variance(0.0, &phi, 1), 0.25, 1e-12));
    check("10 dB noise variance 0.025", close(snr_to_noise_variance(10.0, &phi, 1), 0.025, 1e-12));
    check("infinite SNR zero noise", snr_to_noise_variance(f64::INFINITY, &phi, 1) == 0.0);

    // data generation
    check("real/imag stacking", stack_real_imag(&[c(1.0, 2.0), c(3.0, -1.0)]) == [1.0, 3.0, 2.0, -1.0]);
    check("stacking zeros", stack_real_imag(&[c(0.0, 0.0); 3]) == [0.0; 6]);
    check("stacking real vector", stack_real_imag(&[c(1.5, 0.0), c(-2.0, 0.0)])[2..] == [0.0, 0.0]);
    let ds = generate_dataset(&phi, 2, SnrSpec::Fixed(10.0), 1000, 3).unwrap();
    check("corpus dimensions", ds.len() == 1000 && ds.input_dim() == 8 && ds.label_dim() == 6);
    check("m=2 labels sum to 2", ds.labels().chunks(6).all(|l| l.iter().map(|&v| v as usize).sum::<usize>() == 2));
    check("corpus deterministic", ds == generate_dataset(&phi, 2, SnrSpec::Fixed(10.0), 1000, 3).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.bin");
    ds.save(&path).unwrap();
    check("corpus round trip", Dataset::load(&path).map(|d| d == ds).unwrap_or(false));
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    check("corrupt corpus magic rejected", Dataset::load(&path).is_err());

    // layers
    let id = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    check("dense identity", dense_forward(&id, &[0.0, 0.0], &[3.0, -4.0]).unwrap() == [3.0, -4.0]);
    check("dense zero weights gives bias", dense_forward(&Matrix::zeros(2, 2), &[5.0, 6.0], &[3.0, -4.0]).unwrap() == [5.0, 6.0]);
    check(
        "dense [[1,2]] [3,4] + 1 = 12",
        dense_forward(&Matrix::from_rows(&[vec![1.0, 2.0]]), &[1.0], &[3.0, 4.0]).unwrap() == [12.0],
    );
    let bn = BatchNorm::<f64>::new(1);
    let (out, _) = bn.forward(&Matrix::from_vec(2, 1, vec![1.0, 3.0]), 0.0, Mode::Train).unwrap();
    check("batch norm standardizes {1,3}", out.as_slice() == [-1.0, 1.0]);
    let affine = BatchNorm { scale: vec![2.0], shift: vec![5.0], ..BatchNorm::<f64>::new(1) };
    let (out, _) = affine.forward(&Matrix::from_vec(2, 1, vec![-1.0, 1.0]), 0.0, Mode::Train).unwrap();
    check("batch norm affine {3,7}", out.as_slice() == [3.0, 7.0]);
    let shifted = BatchNorm { shift: vec![5.0], ..BatchNorm::<f64>::new(1) };
    let (out, _) = shifted.forward(&Matrix::from_vec(3, 1, vec![2.0; 3]), 1e-3, Mode::Train).unwrap();
    check("batch norm constant column", out.as_slice() == [5.0; 3]);
    check("relu [-1,2]", relu_vec(&[-1.0, 2.0]) == [0.0, 2.0]);
    check("relu negatives", relu_vec(&[-1.0, -0.5]) == [0.0, 0.0]);
    let v = [-2.0, 0.0, 3.5];
    check("relu idempotent", relu_vec(&relu_vec(&v)) == relu_vec(&v));
    let x = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0]);
    let mut rr = stream_rng(0, stream::TRAIN);
    check("dropout 0 is identity", dropout(&x, 0.0, Mode::Train, &mut rr).unwrap().0 == x);
    check("dropout infer is identity", dropout(&x, 0.7, Mode::Infer, &mut rr).unwrap().0 == x);
    check("sigmoid 0 = 0.5", sigmoid(0.0f64) == 0.5);
    check("sigmoid overflow safe", sigmoid(1e4f64) == 1.0 && sigmoid(-1e4f64) == 0.0);
    check("sigmoid symmetry", [-7.5, -0.3, 0.0, 2.0, 30.0].iter().all(|&z| close(sigmoid(-z), 1.0 - sigmoid(z), 1e-15)));

    // models
    for arch in [Architecture::Dff, Architecture::ResNet] {
        let mut m = Model::<f64>::new(small(arch), 3).unwrap();
        for layer in m.layers_mut() {
            layer.dense.weight.as_mut_slice().fill(0.0);
        }
        let probe = Matrix::from_vec(5, 4, (0..20).map(|i| i as f64 * 0.3 - 2.0).collect());
        let p = m.predict(&probe).unwrap();
        check("zero weights give 0.5", p.as_slice().iter().all(|&v| v == 0.5));
        check("output shape Q x N", p.rows() == 5 && p.cols() == 3);
        let same = Matrix::from_rows(&vec![vec![0.4, -1.0, 2.0, 0.1]; 3]);
        let q = Model::<f64>::new(small(arch), 4).unwrap().predict(&same).unwrap();
        check("identical rows identical outputs", q.row(0) == q.row(1) && q.row(1) == q.row(2));
    }
    let res = Model::<f64>::new(ModelConfig { depth: 0, ..small(Architecture::ResNet) }, 8).unwrap();
    let probe = Matrix::from_vec(3, 4, vec![0.5, -1.0, 2.0, 0.25, 1.0, 1.0, -3.0, 0.0, 0.1, 0.2, 0.3, 0.4]);
    let first = &res.layers()[0];
    let norm = first.norm.as_ref().unwrap();
    let z = probe.affine(&first.dense.weight, &first.dense.bias);
    let (zt, _) = norm.forward(&z, 1e-3, Mode::Infer).unwrap();
    let last = &res.layers()[1].dense;
    let manual = zt.affine(&last.weight, &last.bias).map(sigmoid);
    let got = res.predict(&probe).unwrap();
    check(
        "ResNet T=0 is sigmoid(W z + b)",
        got.as_slice().iter().zip(manual.as_slice()).all(|(a, b)| close(*a, *b, 1e-15)),
    );
    let mut deep = Model::<f64>::new(small(Architecture::ResNet), 8).unwrap();
    let n_layers = deep.layers().len();
    for layer in &mut deep.layers_mut()[1..n_layers - 1] {
        layer.dense.weight.as_mut_slice().fill(0.0);
    }
    let shallow = Model::from_layers(
        ModelConfig { depth: 0, ..small(Architecture::ResNet) },
        vec![deep.layers()[0].clone(), deep.layers()[n_layers - 1].clone()],
        false,
    )
    .unwrap();
    check("zero blocks equal T=0", deep.predict(&probe).unwrap() == shallow.predict(&probe).unwrap());

    // loss
    let labels = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    check("BCE of exact prediction ~ 0", bce_loss(&labels, &labels).unwrap() <= 1.1e-7);
    check("BCE at 0.5 = ln 2", close(bce_loss(&Matrix::from_vec(2, 2, vec![0.5; 4]), &labels).unwrap(), std::f64::consts::LN_2, 1e-12));
    check(
        "BCE 0.9 vs 1 = -ln 0.9",
        close(bce_loss(&Matrix::from_vec(1, 1, vec![0.9]), &Matrix::from_vec(1, 1, vec![1.0])).unwrap(), -(0.9f64.ln()), 1e-12),
    );

    // Adam
    let base = Model::<f64>::new(small(Architecture::Dff), 6).unwrap();
    let grads_of = |value: f64| Gradients {
        layers: base
            .layers()
            .iter()
            .map(|l| LayerGrads {
                weight: l.dense.weight.map(|_| value),
                bias: vec![value; l.dense.bias.len()],
                scale: l.norm.as_ref().map(|n| vec![value; n.width()]),
                shift: l.norm.as_ref().map(|n| vec![value; n.width()]),
            })
            .collect(),
    };
    let cfg = AdamConfig::default();
    let mut stepped = base.clone();
    Adam::new(cfg, &stepped).step(&mut stepped, &grads_of(-0.37)).unwrap();
    let moved = stepped
        .parameter_tensors()
        .iter()
        .zip(base.parameter_tensors())
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| close(x - y, cfg.learning_rate, 1e-6)));
    check("Adam first step is lr * sign", moved);
    let mut still = base.clone();
    let mut adam = Adam::new(cfg, &still);
    for _ in 0..3 {
        adam.step(&mut still, &grads_of(0.0)).unwrap();
    }
    check("Adam zero gradient no-op", still.parameter_tensors() == base.parameter_tensors());

    // selection
    let sel = |probs: &[f64], p| select_support(probs, p).unwrap().support();
    check("top-2 of example", sel(&[0.9, 0.1, 0.8, 0.2, 0.1, 0.1], SelectionPolicy::TopM(2)) == [0, 2]);
    check("threshold 0.5 of 0.3s empty", sel(&[0.3; 6], SelectionPolicy::Threshold(0.5)).is_empty());
    check("tie picks lower index", sel(&[0.1, 0.5, 0.2, 0.3, 0.5, 0.0], SelectionPolicy::TopM(1)) == [1]);

    // model file
    let m32 = Model::<f32>::new(ModelConfig { hidden_width: 8, depth: 2, ..ModelConfig::dff(8, 6) }, 2).unwrap();
    let mpath = dir.path().join("m.bin");
    save_model(&m32, &mpath).unwrap();
    let probe32 = Matrix::from_vec(2, 8, (0..16).map(|i| i as f32 * 0.1).collect());
    let back = load_model(&mpath).unwrap();
    check("model round trip", back.predict(&probe32).unwrap() == m32.predict(&probe32).unwrap());
    check("model wrong input width rejected", back.predict(&Matrix::from_vec(2, 4, vec![0.0; 8])).is_err());
    let full = std::fs::read(&mpath).unwrap();
    std::fs::write(&mpath, &full[..full.len() / 2]).unwrap();
    check("truncated model rejected", load_model(&mpath).is_err());

    // baselines
    let zero = DVector::from_element(4, c(0.0, 0.0));
    let b = ls_bomp(&phi, &zero, &BompConfig::singletons(2)).unwrap();
    check("BOMP on y=0", b.estimate.iter().all(|v| v.norm() == 0.0) && b.residual_norms.iter().all(|&r| r == 0.0));
    check("C-AMP on y=0", c_amp(&phi, &zero, &AmpConfig::default()).unwrap().support.is_empty());
    let yf = phi.apply(&DVector::from_fn(6, |i, _| c(i as f64 - 2.0, 0.5)));
    let o = exhaustive_oracle(&phi, &yf, 6).unwrap();
    check("oracle m=N full support", o.support == [0, 1, 2, 3, 4, 5] && o.residual_norm < 1e-9);

    // metrics
    let mut conf = Confusion::default();
    conf.accumulate_slots(&[true, false, true, false, false, false], &[true, true, false, false, false, false]).unwrap();
    check("confusion direct count", conf == Confusion { tp: 1, fp: 1, fn_: 1, tn: 3 });
    let truth = [true, false, true, false];
    let mut same = Confusion::default();
    same.accumulate_slots(&truth, &truth).unwrap();
    check("estimate = truth", same.fp == 0 && same.fn_ == 0);
    let mut comp = Confusion::default();
    comp.accumulate_slots(&truth, &truth.map(|t| !t)).unwrap();
    check("estimate = complement", comp.tp == 0 && comp.tn == 0);
    let c8 = Confusion { tp: 8, fn_: 2, ..Confusion::default() };
    check("P_D 0.8, P_M 0.2", c8.pd() == Some(0.8) && close(c8.pm().unwrap(), 0.2, 1e-15));
    check("empty positive class undefined", Confusion::default().pd().is_none());
    check("AUC separated = 1", auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap() == 1.0);
    check("AUC all ties = 0.5", auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap() == 0.5);

    // harness
    check(
        "m_train > N rejected",
        ExperimentConfig::from_json(r#"{ "data": { "m_train": 7 }, "sweep": { "snr_db": [10], "m": [1] } }"#)
            .and_then(|c| c.validate())
            .is_err(),
    );
    let hcfg = ExperimentConfig::from_json("{}").unwrap();
    let hsys = build_system(&hcfg).unwrap();
    let frames = test_frames(&hsys.phi, 2, 5.0, 300, 1).unwrap();
    let genie = evaluate_method(&Detector::Genie, "genie", &hsys.phi, &frames, 5.0, 2).unwrap();
    check("perfect detector P_D 1, P_M 0", genie.row.pd == Some(1.0) && genie.row.pm == Some(0.0));
    let mut rows = Vec::new();
    for (i, snr) in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0].into_iter().enumerate() {
        for method in ["LS-BOMP", "DFF-AUD"] {
            let cf = Confusion { tp: i as u64, fn_: 10 - i as u64, tn: 40, fp: 1 };
            rows.push(MetricRow::from_confusion(snr, 1, method, &cf, None, 10));
        }
    }
    let plot = emit_plot_data(&rows, FigureId::PdVsSnr).unwrap();
    let headers: Vec<&str> = plot.lines().filter(|l| l.starts_with('[')).collect();
    let points = plot.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count();
    check("plot 2 series x 7 points, name order", headers == ["[DFF-AUD m=1]", "[LS-BOMP m=1]"] && points == 14);
    check("plot m axis needs two m", emit_plot_data(&rows, FigureId::PdVsM).is_err());

    drop(check);
    checks
}

fn criterion_7() -> (bool, String) {
    let checks = analytic_checks();
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let detail = if failed.is_empty() {
        format!("{} analytic checks", checks.len())
    } else {
        format!("{} of {} failed: {}", failed.len(), checks.len(), failed.join(", "))
    };
    (failed.is_empty(), detail)
}

fn smoke_run(out: &Path) -> Vec<u8> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let mut cfg = ExperimentConfig::load(&config).expect("smoke config");
    cfg.output_dir = out.to_path_buf();
    run_experiment(&cfg, RunOptions { use_cache: false }).expect("smoke run");
    std::fs::read(out.join("results.csv")).expect("results.csv")
}

fn criterion_8() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let a = smoke_run(&dir.path().join("a"));
    let b = smoke_run(&dir.path().join("b"));
    (a == b && !a.is_empty(), format!("results.csv {} and {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> (bool, String)); 8] = [
        ("m=1 trend", criterion_1),
        ("m=2 trend", criterion_2),
        ("m=3 sparsity robustness", criterion_3),
        ("m=1 misdetection", criterion_4),
        ("gradient check", criterion_5),
        ("solver oracle", criterion_6),
        ("analytic layer suite", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = run();
        failures += usize::from(!ok);
        println!(
            "criterion {} {name}: {} ({detail}) [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
