//! Invariant suites, one per module. Each runs a proptest runner over
//! random 64-bit seeds; a seed deterministically builds the test instance.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use hatstory::data::{
    split_words, synth_generate, tokenize, Dataset, LoadOptions, Story, SynthSpec, Vocabulary, EOS,
    STORY_SENTENCES,
};
use hatstory::evaluation::{
    attention_aggregate_topk, bleu_n, cider, rank_of, recall_at_k, summary_precision_recall,
};
use hatstory::harness::{gradcheck_modules, Checkpoint, GRADCHECK_TOL};
use hatstory::model::{
    beam_decode, greedy_decode, initial_state, log_prob, prepare, Architecture, Model, ModelConfig,
    SelectionMode,
};
use hatstory::numerics::{grad_check_many, Rng, Tape, Tensor, Var};
use hatstory::recurrent::{bi_gru, bind_gru, bind_mlp, embed, gru_sequence, gru_step, mlp, EmbeddingTable, GruParams, Linear, MlpParams};
use hatstory::training::{
    generation_loss, init_model, make_negative, ranking_loss, total_loss, train, RankLossForm, TrainConfig, TrainSet,
};

pub type Suite = (&'static str, fn() -> Result<(), String>);

/// Seeds per suite.
pub const CASES: u32 = 24;

fn check(cases: u32, f: impl Fn(u64) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&any::<u64>(), |seed| f(seed)).map_err(|e| e.to_string())
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(fail(format!($($fmt)+)));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

fn tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

// numerics

pub fn numerics_primitive_gradients() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (m, p, q) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 1, 4));
        let a = tensor(&mut rng, &[m, p], 1.0);
        let b = tensor(&mut rng, &[p, q], 1.0);
        let w = tensor(&mut rng, &[m, p], 1.0);
        let pos = a.map(|x| 0.5 + x.abs());
        let away = a.map(|x| if x.abs() < 0.1 { x + 0.3 } else { x });
        let tol = 1e-5;
        let step = 1e-5;
        let weighted = move |t: &mut Tape, y: Var| -> hatstory::Result<Var> {
            let c = t.constant(w.clone());
            let prod = t.mul(y, c)?;
            t.sum(prod)
        };
        let mut reports = Vec::new();
        for (name, x, op) in [
            ("sigmoid", &a, 0),
            ("tanh", &a, 1),
            ("exp", &a, 2),
            ("log", &pos, 3),
            ("relu", &away, 4),
            ("neg", &a, 5),
            ("softmax", &a, 6),
            ("log_softmax", &a, 7),
        ] {
            let wf = weighted.clone();
            let r = ok(grad_check_many(
                move |t: &mut Tape, v: &[Var]| {
                    let y = match op {
                        0 => t.sigmoid(v[0])?,
                        1 => t.tanh(v[0])?,
                        2 => t.exp(v[0])?,
                        3 => t.log(v[0])?,
                        4 => t.relu(v[0])?,
                        5 => t.neg(v[0])?,
                        6 => t.softmax(v[0], 1)?,
                        _ => t.log_softmax(v[0], 1)?,
                    };
                    wf(t, y)
                },
                std::slice::from_ref(x),
                step,
                tol,
            ))?;
            reports.push((name, r));
        }
        for (name, op) in [("add", 0), ("sub", 1), ("mul", 2), ("div", 3)] {
            let wf = weighted.clone();
            let r = ok(grad_check_many(
                move |t: &mut Tape, v: &[Var]| {
                    let y = match op {
                        0 => t.add(v[0], v[1])?,
                        1 => t.sub(v[0], v[1])?,
                        2 => t.mul(v[0], v[1])?,
                        _ => t.div(v[0], v[1])?,
                    };
                    wf(t, y)
                },
                &[a.clone(), pos.clone()],
                step,
                tol,
            ))?;
            reports.push((name, r));
        }
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                let s = t.tanh(y)?;
                t.sum(s)
            },
            &[a.clone(), b.clone()],
            step,
            tol,
        ))?;
        reports.push(("matmul", r));
        let wf = weighted.clone();
        let r = ok(grad_check_many(
            move |t: &mut Tape, v: &[Var]| {
                let y = t.concat(&[v[0], v[1]], 1)?;
                let s = t.tanh(y)?;
                let s = t.sum(s)?;
                let z = wf(t, v[0])?;
                t.add(s, z)
            },
            &[a.clone(), a.map(|x| -x)],
            step,
            tol,
        ))?;
        reports.push(("concat", r));
        for (name, r) in reports {
            ensure!(r.pass, "{name}: {r:?}");
        }
        Ok(())
    })
}

pub fn numerics_softmax_contract() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (r, d) = (dim(&mut rng, 1, 6), dim(&mut rng, 1, 8));
        let x = tensor(&mut rng, &[r, d], 5.0);
        let c = 100.0 * rng.normal();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let s = ok(tape.softmax(xv, 1))?;
        let shifted = tape.constant(x.map(|v| v + c));
        let s2 = ok(tape.softmax(shifted, 1))?;
        let (s, s2) = (tape.value(s).clone(), tape.value(s2).clone());
        for i in 0..r {
            let row = s.row(i);
            ensure!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "row {i} sums to {}", row.iter().sum::<f64>());
            ensure!(row.iter().all(|&p| p > 0.0), "non-positive entry in {row:?}");
        }
        for (a, b) in s.data().iter().zip(s2.data()) {
            ensure!((a - b).abs() <= 1e-12, "shift by {c} changed {a} to {b}");
        }
        Ok(())
    })
}

pub fn numerics_matmul_oracle() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (m, p, q) = (dim(&mut rng, 1, 8), dim(&mut rng, 1, 8), dim(&mut rng, 1, 8));
        let a = tensor(&mut rng, &[m, p], 1.0);
        let b = tensor(&mut rng, &[p, q], 1.0);
        let mut tape = Tape::new();
        let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = ok(tape.matmul(av, bv))?;
        let c = tape.value(c);
        for i in 0..m {
            for j in 0..q {
                let mut s = 0.0;
                for k in 0..p {
                    s += a.at(i, k) * b.at(k, j);
                }
                ensure!((c.at(i, j) - s).abs() <= 1e-12, "({i},{j}): {} vs {s}", c.at(i, j));
            }
        }
        Ok(())
    })
}

pub fn numerics_relu_and_rng() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let len = dim(&mut rng, 1, 20);
        let x = tensor(&mut rng, &[len], 3.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = ok(tape.relu(xv))?;
        for (&a, &b) in x.data().iter().zip(tape.value(y).data()) {
            ensure!(b >= 0.0, "relu({a}) = {b}");
            if a >= 0.0 {
                ensure!(a == b, "relu({a}) = {b}");
            }
        }
        let draw = |s: u64| {
            let mut r = Rng::new(s);
            (0..64).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        ensure!(draw(seed) == draw(seed), "seed {seed} not reproducible");
        Ok(())
    })
}

// recurrent

pub fn recurrent_gru_bounded() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (d_in, d_h, len) = (dim(&mut rng, 1, 6), dim(&mut rng, 1, 6), dim(&mut rng, 1, 12));
        let mut p = ok(GruParams::init(&mut rng, d_in, d_h))?;
        p.visit_mut("", &mut |_, t| *t = t.map(|x| 3.0 * x));
        let mut tape = Tape::new();
        let pv = bind_gru(&mut tape, &p);
        let xs: Vec<Var> = (0..len).map(|_| tape.constant(tensor(&mut rng, &[d_in], 3.0))).collect();
        let hs = ok(gru_sequence(&mut tape, &pv, &xs))?;
        for h in hs {
            for &v in tape.value(h).data() {
                ensure!(v > -1.0 && v < 1.0, "hidden coordinate {v}");
            }
        }
        Ok(())
    })
}

pub fn recurrent_gradients() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (d_in, d_h, len) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 1, 4));
        let fwd = ok(GruParams::init(&mut rng, d_in, d_h))?;
        let bwd = ok(GruParams::init(&mut rng, d_in, d_h))?;
        let xs: Vec<Tensor> = (0..len).map(|_| tensor(&mut rng, &[d_in], 1.0)).collect();
        let h0 = tensor(&mut rng, &[d_h], 0.5);
        let leaves = |p: &GruParams| {
            let mut out = Vec::new();
            p.visit("", &mut |_, t: &Tensor| out.push(t.clone()));
            out
        };
        let rebuild = |vars: &[Var]| {
            let mut it = vars.iter().copied();
            fwd.try_map::<Var, std::convert::Infallible>("", &mut |_, _| Ok(it.next().unwrap())).unwrap()
        };

        // gru_step w.r.t. weights, input and state.
        let mut points = leaves(&fwd);
        points.push(xs[0].clone());
        points.push(h0.clone());
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let p = rebuild(&v[..9]);
                let h = gru_step(t, &p, v[9], v[10])?;
                let s = t.tanh(h)?;
                t.sum(s)
            },
            &points,
            1e-5,
            1e-5,
        ))?;
        ensure!(r.pass, "gru_step {r:?}");

        // bi_gru w.r.t. both directions and inputs.
        let mut points = leaves(&fwd);
        points.extend(leaves(&bwd));
        points.extend(xs.iter().cloned());
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let f = rebuild(&v[..9]);
                let b = rebuild(&v[9..18]);
                let outs = bi_gru(t, &f, &b, &v[18..])?;
                let sq: Vec<Var> = outs.iter().map(|&o| t.mul(o, o)).collect::<hatstory::Result<_>>()?;
                let all = t.add_all(&sq)?;
                t.sum(all)
            },
            &points,
            1e-5,
            1e-5,
        ))?;
        ensure!(r.pass, "bi_gru {r:?}");

        // mlp and embed.
        let widths = [d_in, dim(&mut rng, 1, 4), dim(&mut rng, 1, 3)];
        let net = ok(MlpParams::init(&mut rng, &widths))?;
        let mut points: Vec<Tensor> = Vec::new();
        net.visit("", &mut |_, t: &Tensor| points.push(t.clone()));
        let n_mlp = points.len();
        points.push(xs[0].clone());
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let mut it = v[..n_mlp].iter().copied();
                let p = net.try_map::<Var, std::convert::Infallible>("", &mut |_, _| Ok(it.next().unwrap())).unwrap();
                let y = mlp(t, &p, v[n_mlp])?;
                let y = t.mul(y, y)?;
                t.sum(y)
            },
            &points,
            1e-5,
            1e-5,
        ))?;
        ensure!(r.pass, "mlp {r:?}");
        let table = ok(EmbeddingTable::init(&mut rng, 5, 3))?.table;
        let id = rng.below(5);
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let e = embed(t, &EmbeddingTable { table: v[0] }, id)?;
                let e = t.tanh(e)?;
                t.sum(e)
            },
            &[table],
            1e-5,
            1e-5,
        ))?;
        ensure!(r.pass, "embed {r:?}");
        Ok(())
    })
}

pub fn recurrent_shapes_and_identity_mlp() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let (d_in, d_h, len) = (dim(&mut rng, 1, 6), dim(&mut rng, 1, 6), dim(&mut rng, 1, 10));
        let fwd = ok(GruParams::init(&mut rng, d_in, d_h))?;
        let bwd = ok(GruParams::init(&mut rng, d_in, d_h))?;
        let mut tape = Tape::new();
        let (f, b) = (bind_gru(&mut tape, &fwd), bind_gru(&mut tape, &bwd));
        let xs: Vec<Var> = (0..len).map(|_| tape.constant(tensor(&mut rng, &[d_in], 1.0))).collect();
        let outs = ok(bi_gru(&mut tape, &f, &b, &xs))?;
        ensure!(outs.len() == len, "{} outputs for {len} inputs", outs.len());
        for o in &outs {
            ensure!(tape.shape(*o) == [2 * d_h], "output shape {:?}", tape.shape(*o));
        }
        let d = dim(&mut rng, 1, 8);
        let bias = tensor(&mut rng, &[d], 1.0);
        let net = MlpParams { layers: vec![Linear { weight: Tensor::identity(d), bias: bias.clone() }] };
        let p = bind_mlp(&mut tape, &net);
        let x = tensor(&mut rng, &[d], 2.0);
        let xv = tape.constant(x.clone());
        let y = ok(mlp(&mut tape, &p, xv))?;
        for ((&yi, &xi), &bi) in tape.value(y).data().iter().zip(x.data()).zip(bias.data()) {
            ensure!(yi == xi + bi, "{yi} != {xi} + {bi}");
        }
        Ok(())
    })
}

// model

fn random_instance(seed: u64, arch: Architecture) -> (Model, Tensor, Story) {
    let mut rng = Rng::new(seed);
    let k = 2 * dim(&mut rng, 1, 3);
    let vocab = dim(&mut rng, 5, 9);
    let config = ModelConfig {
        architecture: arch,
        carry_state: rng.below(2) == 0,
        ..ModelConfig::new(k, dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), vocab)
    };
    let model = Model::new(config, &mut rng).unwrap();
    let n = dim(&mut rng, 5, 9);
    let features = tensor(&mut rng, &[n, k], 1.0);
    let sentences = (0..STORY_SENTENCES)
        .map(|_| {
            let mut s: Vec<usize> = (0..rng.below(4)).map(|_| 3 + rng.below(vocab - 3)).collect();
            s.push(EOS);
            s
        })
        .collect();
    (model, features, Story::new(sentences, vocab).unwrap())
}

pub fn model_encoder_and_selection() -> Result<(), String> {
    check(CASES, |seed| {
        let (model, f, _) = random_instance(seed, Architecture::HAttn);
        let v = ok(model.encode(&f))?;
        ensure!(v.data().iter().all(|&x| x >= 0.0), "negative photo representation");
        let n = f.rows();
        for mode in [SelectionMode::SoftTrain, SelectionMode::HardTest] {
            let sel = ok(model.select(&f, &mode))?;
            ensure!(sel.probs.shape() == [STORY_SENTENCES, n], "probs shape {:?}", sel.probs.shape());
            for t in 0..STORY_SENTENCES {
                let p = sel.probs.row(t);
                ensure!(p.iter().all(|&x| x >= 0.0), "negative attention");
                ensure!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "row {t} sums to {}", p.iter().sum::<f64>());
                for c in 0..v.cols() {
                    let hull: f64 = (0..n).map(|i| p[i] * v.at(i, c)).sum();
                    ensure!((hull - sel.summaries.at(t, c)).abs() <= 1e-9, "g_{t} differs from pᵀV");
                }
            }
            if mode == SelectionMode::HardTest {
                let distinct: BTreeSet<usize> = sel.indices.iter().copied().collect();
                ensure!(distinct.len() == STORY_SENTENCES, "repeated photo in {:?}", sel.indices);
            }
        }
        Ok(())
    })
}

pub fn model_beam_one_is_greedy() -> Result<(), String> {
    check(100, |seed| {
        let (model, _, _) = random_instance(seed, Architecture::HAttn);
        let mut rng = Rng::new(seed ^ 0x9e37);
        let g = tensor(&mut rng, &[model.config.k], 1.0);
        let mut tape = Tape::new();
        let m = model.bind(&mut tape, false);
        let gv = tape.constant(g);
        let h0 = initial_state(&mut tape, &m);
        let a = ok(beam_decode(&mut tape, &m, gv, h0, 1, 8))?;
        let b = ok(greedy_decode(&mut tape, &m, gv, h0, 8))?;
        ensure!(a.tokens == b.tokens, "{:?} vs {:?}", a.tokens, b.tokens);
        ensure!(a.log_prob.to_bits() == b.log_prob.to_bits(), "{} vs {}", a.log_prob, b.log_prob);
        Ok(())
    })
}

pub fn model_story_gradients() -> Result<(), String> {
    check(20, |seed| {
        let (config, params, features, story) =
            ok(hatstory::harness::gradcheck_instance(seed, Architecture::HAttn))?;
        let points: Vec<Tensor> = params.leaves().into_iter().map(|(_, t)| t.clone()).collect();
        let r = ok(grad_check_many(
            |t: &mut Tape, v: &[Var]| {
                let mut it = v.iter().copied();
                let p = params.map(|_, _| it.next().unwrap());
                let m = hatstory::model::Bound { config: &config, p };
                let prep = prepare(t, &m, &features, &SelectionMode::SoftTrain)?;
                log_prob(t, &m, &prep, &story)
            },
            &points,
            1e-5,
            1e-4,
        ))?;
        ensure!(r.pass, "{r:?}");
        Ok(())
    })
}

pub fn model_forward_paths_deterministic() -> Result<(), String> {
    check(CASES, |seed| {
        for arch in [Architecture::HAttn, Architecture::EncDec, Architecture::EncAttnDec] {
            let (model, f, s) = random_instance(seed, arch);
            let a = ok(model.story_log_prob(&f, &s, &SelectionMode::SoftTrain))?;
            let b = ok(model.story_log_prob(&f, &s, &SelectionMode::SoftTrain))?;
            ensure!(a.to_bits() == b.to_bits(), "{arch:?} log-prob {a} vs {b}");
            let g1 = ok(model.generate(&f, &SelectionMode::HardTest, 2, 5))?;
            let g2 = ok(model.generate(&f, &SelectionMode::HardTest, 2, 5))?;
            ensure!(g1 == g2, "{arch:?} generation differs");
        }
        Ok(())
    })
}

// training

pub fn training_ranking_loss_clauses() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let pos = -20.0 * rng.uniform();
        let neg = -20.0 * rng.uniform();
        let m = 0.1 + 3.0 * rng.uniform();
        let d = 5.0 * rng.uniform();
        let f = RankLossForm::Intended;
        let l = ranking_loss(pos, neg, m, f);
        ensure!(l >= 0.0, "negative loss {l}");
        ensure!(ranking_loss(pos + d, neg, m, f) <= l, "increasing in log p(S)");
        ensure!(ranking_loss(pos, neg + d, m, f) >= l, "decreasing in log p(S')");
        ensure!(ranking_loss(neg + m + d, neg, m, f) == 0.0, "margin met but loss > 0");
        Ok(())
    })
}

pub fn training_zero_lambda_and_negatives() -> Result<(), String> {
    check(CASES, |seed| {
        let (model, f, story) = random_instance(seed, Architecture::HAttn);
        let cfg = TrainConfig { lambda: 0.0, ..TrainConfig::default() };
        let mut tape = Tape::new();
        let m = model.bind(&mut tape, true);
        let prep = ok(prepare(&mut tape, &m, &f, &SelectionMode::SoftTrain))?;
        let parts = ok(total_loss(&mut tape, &m, &prep, &story, &cfg, &mut Rng::new(seed)))?;
        let total = tape.scalar(parts.total);
        let mut tape2 = Tape::new();
        let m2 = model.bind(&mut tape2, true);
        let prep2 = ok(prepare(&mut tape2, &m2, &f, &SelectionMode::SoftTrain))?;
        let gen = ok(generation_loss(&mut tape2, &m2, &prep2, &story))?;
        ensure!(total.to_bits() == tape2.scalar(gen).to_bits(), "{total} vs {}", tape2.scalar(gen));
        ensure!(parts.rank.is_none(), "rank term present with λ = 0");

        let mut rng = Rng::new(seed);
        let distinct = Story::new((0..STORY_SENTENCES).map(|i| vec![3 + i, EOS]).collect(), 10).unwrap();
        for s in [&story, &distinct] {
            let neg = make_negative(s, &mut rng);
            let mut a = neg.sentences().to_vec();
            let mut b = s.sentences().to_vec();
            a.sort();
            b.sort();
            ensure!(a == b, "sentence multiset changed");
        }
        let neg = make_negative(&distinct, &mut rng);
        ensure!(neg != distinct, "identity order returned");
        Ok(())
    })
}

pub fn training_full_pipeline_gradients() -> Result<(), String> {
    check(20, |seed| {
        for row in ok(gradcheck_modules(seed))? {
            ensure!(row.pass && row.max_rel_err <= GRADCHECK_TOL, "{row:?}");
        }
        Ok(())
    })
}

pub fn training_reproducible() -> Result<(), String> {
    check(20, |seed| {
        let spec = SynthSpec { albums: 2, n: 6, k: 4, classes: 3, seed, noise_sigma: 0.1 };
        let ds = ok(synth_generate(&spec))?;
        let vocab = ds.vocabulary(1);
        let set = ok(TrainSet::from_dataset(&ds, &vocab))?;
        let cfg = TrainConfig { k: 4, d_s: 3, d_g: 4, d_w: 3, epochs: 2, batch_size: 1, seed, ..TrainConfig::default() };
        let run = || -> hatstory::Result<(Vec<u64>, Vec<u64>)> {
            let mut model = init_model(&cfg, vocab.len())?;
            let curve = train(&mut model, &set, &cfg)?;
            Ok((
                curve.iter().map(|s| s.mean_loss.to_bits()).collect(),
                model.params.flat().iter().map(|x| x.to_bits()).collect(),
            ))
        };
        ensure!(ok(run())? == ok(run())?, "training not bitwise reproducible");
        Ok(())
    })
}

// data

pub fn data_generated_albums_valid() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let classes = dim(&mut rng, 1, 8);
        let spec = SynthSpec {
            albums: dim(&mut rng, 1, 5),
            n: dim(&mut rng, 5, 12),
            k: classes + dim(&mut rng, 1, 6),
            classes,
            seed,
            noise_sigma: rng.uniform() * 0.3,
        };
        let ds = ok(synth_generate(&spec))?;
        let vocab = ds.vocabulary(1);
        for a in &ds.albums {
            ok(a.validate(spec.k, &LoadOptions::default()))?;
            ensure!(a.len() == spec.n, "{} photos", a.len());
            for s in &a.stories {
                let story = ok(s.tokenize(&vocab))?;
                ensure!(story.sentences().len() == STORY_SENTENCES, "story length");
                for sent in story.sentences() {
                    ensure!(sent.last() == Some(&EOS), "sentence without EOS");
                    ensure!(sent.iter().all(|&id| id < vocab.len()), "id out of range");
                    ensure!((4..=7).contains(&sent.len()), "sentence of {} tokens", sent.len() - 1);
                }
            }
        }
        let back = ok(Dataset::from_reader(ds.to_jsonl().as_bytes(), &LoadOptions::default()))?;
        ensure!(back == ds, "round trip changed the dataset");
        Ok(())
    })
}

const ALPHABET: &[&str] = &["a", "b", "dog", "The", "ÉTÉ", "x1", ".", ",", "!", "?", " ", "  ", "\t", "'", "ß", "漢", "-"];

fn random_text(rng: &mut Rng) -> String {
    (0..rng.below(20)).map(|_| ALPHABET[rng.below(ALPHABET.len())]).collect()
}

pub fn data_vocabulary_and_tokenize() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let texts: Vec<String> = (0..dim(&mut rng, 1, 8)).map(|_| random_text(&mut rng)).collect();
        let words: Vec<String> = texts.iter().flat_map(|t| split_words(t)).collect();
        let min_count = dim(&mut rng, 1, 3);
        let v1 = Vocabulary::build(words.iter().map(String::as_str), min_count);
        let v2 = Vocabulary::build(words.iter().map(String::as_str), min_count);
        let mut shuffled = words.clone();
        rng.shuffle(&mut shuffled);
        let v3 = Vocabulary::build(shuffled.iter().map(String::as_str), min_count);
        ensure!(v1 == v2 && v1 == v3, "vocabulary ids depend on corpus order");
        for t in texts.iter().chain([random_text(&mut rng)].iter()) {
            let a = tokenize(t, &v1);
            ensure!(a == tokenize(t, &v1), "tokenize not deterministic on {t:?}");
            ensure!(a.last() == Some(&EOS), "missing EOS");
            ensure!(a.iter().all(|&id| id < v1.len()), "id out of range");
        }
        Ok(())
    })
}

// evaluation

fn random_corpus(rng: &mut Rng, items: usize) -> Vec<Vec<String>> {
    (0..items)
        .map(|_| (0..dim(rng, 1, 8)).map(|_| format!("w{}", rng.below(6))).collect())
        .collect()
}

pub fn evaluation_metric_ranges() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let items = dim(&mut rng, 1, 5);
        let hyps = random_corpus(&mut rng, items);
        let refs: Vec<Vec<Vec<String>>> = (0..items)
            .map(|_| {
                let r = dim(&mut rng, 1, 3);
                random_corpus(&mut rng, r)
            })
            .collect();
        for n in 1..=4 {
            let b = ok(bleu_n(&hyps, &refs, n))?;
            ensure!((0.0..=1.0).contains(&b), "BLEU-{n} = {b}");
            let self_refs: Vec<Vec<Vec<String>>> = hyps.iter().map(|h| vec![h.clone()]).collect();
            let id = ok(bleu_n(&hyps, &self_refs, 1))?;
            ensure!(id == 1.0, "BLEU-1(h, h) = {id}");
        }
        let self_refs: Vec<Vec<Vec<String>>> = hyps.iter().map(|h| vec![h.clone()]).collect();
        let id3 = ok(bleu_n(&hyps, &self_refs, 3))?;
        if hyps.iter().any(|h| h.len() >= 3) {
            ensure!(id3 == 1.0, "BLEU-3(h, h) = {id3}");
        }
        let c = ok(cider(&hyps, &refs))?;
        ensure!(c >= 0.0 && c.is_finite(), "CIDEr = {c}");

        let n = dim(&mut rng, 5, 12);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let pick = |rng: &mut Rng| rng.choose_distinct(n, 5).into_iter().map(|i| ids[i].clone()).collect::<Vec<_>>();
        let pred = pick(&mut rng);
        let gts = vec![pick(&mut rng), pick(&mut rng)];
        let (p, r) = ok(summary_precision_recall(&pred, &gts))?;
        ensure!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r), "precision {p} recall {r}");
        let g: BTreeSet<&String> = gts.iter().flatten().collect();
        let hits = pred.iter().filter(|x| g.contains(x)).count() as f64;
        ensure!(p == hits / 5.0 && r == hits / g.len() as f64, "set oracle disagrees");
        Ok(())
    })
}

pub fn evaluation_ranks_and_topk() -> Result<(), String> {
    check(CASES, |seed| {
        let mut rng = Rng::new(seed);
        let pool = dim(&mut rng, 1, 30);
        let mut scores: Vec<f64> = (0..pool).map(|_| -20.0 * rng.uniform()).collect();
        if pool > 2 {
            scores[pool - 1] = scores[0];
        }
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let ranks: Vec<usize> = (0..pool).map(|t| rank_of(&scores, t).unwrap()).collect();
        let ranks_exp: Vec<usize> = (0..pool).map(|t| rank_of(&exp, t).unwrap()).collect();
        ensure!(ranks == ranks_exp, "ranks change under exp");
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        ensure!(sorted == (1..=pool).collect::<Vec<_>>(), "ranks are not a permutation: {ranks:?}");
        let mut last = 0.0;
        for k in 1..=pool + 1 {
            let r = ok(recall_at_k(&ranks, k))?;
            ensure!(r >= last, "R@{k} decreased");
            last = r;
        }
        let (t, n) = (dim(&mut rng, 1, 6), dim(&mut rng, 5, 12));
        let mut attn = tensor(&mut rng, &[t, n], 1.0).map(f64::abs);
        if rng.below(2) == 0 {
            attn = attn.map(|x| (x * 2.0).round() / 2.0);
        }
        let top = ok(attention_aggregate_topk(&attn, 5))?;
        let distinct: BTreeSet<usize> = top.iter().copied().collect();
        ensure!(top.len() == 5 && distinct.len() == 5, "{top:?}");
        let mass: Vec<f64> = (0..n).map(|j| (0..t).map(|i| attn.at(i, j)).sum()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| mass[b].partial_cmp(&mass[a]).unwrap().then(a.cmp(&b)));
        ensure!(top == order[..5], "{top:?} vs sort oracle {:?}", &order[..5]);
        Ok(())
    })
}

// harness

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hatstory")
}

fn hatstory(args: &[&str]) -> Result<(String, String), TestCaseError> {
    let out = Command::new(bin()).args(args).output().map_err(|e| fail(e.to_string()))?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    ensure!(out.status.success(), "hatstory {args:?} failed: {stderr}");
    Ok((stdout, stderr))
}

fn digest(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

pub fn harness_checkpoint_round_trip() -> Result<(), String> {
    check(CASES, |seed| {
        let (model, f, _) = random_instance(seed, Architecture::HAttn);
        let words: Vec<String> = (0..model.config.vocab - 4).map(|i| format!("w{i}")).collect();
        let vocabulary = Vocabulary::build(words.iter().map(String::as_str), 1);
        ensure!(vocabulary.len() == model.config.vocab, "vocabulary size {}", vocabulary.len());
        let ckpt = Checkpoint { model, vocabulary, config: TrainConfig { seed, ..TrainConfig::default() } };
        let bytes = ckpt.to_bytes();
        let back = ok(Checkpoint::from_bytes(&bytes))?;
        ensure!(back.to_bytes() == bytes, "save→load→save changed the bytes");
        let a: Vec<u64> = ckpt.model.params.flat().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = back.model.params.flat().iter().map(|x| x.to_bits()).collect();
        ensure!(a == b, "parameters changed");
        let before = ok(ckpt.model.generate_story(&f, 3, 6))?;
        let after = ok(back.model.generate_story(&f, 3, 6))?;
        ensure!(before == after, "generation changed after reload");
        let cut = ok(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).map(|_| ()).map_err(|e| e.to_string()).err().ok_or("truncation accepted"))?;
        ensure!(cut.contains("corrupt"), "truncation gave {cut}");
        Ok(())
    })
}

/// Each seed: synthesize data, train through the CLI, re-train from the
/// logged config, and run every command, checking inputs stay untouched.
pub fn harness_cli_reproducible_and_read_only() -> Result<(), String> {
    check(20, |seed| {
        let dir = tempfile::tempdir().map_err(|e| fail(e.to_string()))?;
        let d = |p: &str| dir.path().join(p).display().to_string();
        hatstory(&["synth", "--albums", "3", "--n", "6", "--k", "6", "--classes", "5", "--seed", &seed.to_string(), "--out", &d("data.jsonl")])?;
        let cfg = TrainConfig { k: 6, d_s: 3, d_g: 4, d_w: 3, epochs: 2, seed, ..TrainConfig::default() };
        std::fs::write(d("cfg.json"), cfg.to_json()).unwrap();
        let (out, log) = hatstory(&["train", "--data", &d("data.jsonl"), "--config", &d("cfg.json"), "--out", &d("runs")])?;
        let run = Path::new(out.trim()).to_path_buf();
        ensure!(log.contains(&format!("seed {seed} ")), "seed not logged");
        let logged = ok(TrainConfig::load(run.join("config.json")))?;
        ensure!(logged == cfg, "logged config differs from the resolved one");
        let (out2, _) = hatstory(&["train", "--data", &d("data.jsonl"), "--config", &run.join("config.json").display().to_string(), "--out", &d("runs")])?;
        let run2 = Path::new(out2.trim()).to_path_buf();
        ensure!(run != run2, "second run reused the directory");
        for f in ["model.ckpt", "loss_curve.csv"] {
            ensure!(digest(&run.join(f)) == digest(&run2.join(f)), "{f} differs between runs");
        }

        let inputs = [d("data.jsonl"), d("cfg.json"), run.join("model.ckpt").display().to_string()];
        let before: Vec<Vec<u8>> = inputs.iter().map(|p| digest(Path::new(p))).collect();
        let ckpt = &inputs[2];
        let data = &inputs[0];
        hatstory(&["generate", "--ckpt", ckpt, "--data", data, "--beam", "1", "--out", &d("gen.jsonl")])?;
        hatstory(&["generate", "--ckpt", ckpt, "--data", data, "--oracle-selection"])?;
        hatstory(&["eval-gen", "--ckpt", ckpt, "--data", data, "--out", &d("reports")])?;
        hatstory(&["eval-summ", "--ckpt", ckpt, "--data", data, "--out", &d("reports")])?;
        hatstory(&["eval-retrieval", "--ckpt", ckpt, "--data", data, "--pool-size", "2"])?;
        let after: Vec<Vec<u8>> = inputs.iter().map(|p| digest(Path::new(p))).collect();
        ensure!(before == after, "a command modified its inputs");
        Ok(())
    })
}

pub fn all_suites() -> Vec<Suite> {
    vec![
        ("numerics: primitive gradients", numerics_primitive_gradients),
        ("numerics: softmax normalization and shift invariance", numerics_softmax_contract),
        ("numerics: matmul vs triple loop", numerics_matmul_oracle),
        ("numerics: relu and rng reproducibility", numerics_relu_and_rng),
        ("recurrent: GRU state bounded", recurrent_gru_bounded),
        ("recurrent: gru/bi_gru/mlp/embed gradients", recurrent_gradients),
        ("recurrent: bi_gru shapes, identity mlp", recurrent_shapes_and_identity_mlp),
        ("model: encoder ≥ 0, selection invariants", model_encoder_and_selection),
        ("model: beam 1 = greedy", model_beam_one_is_greedy),
        ("model: story log-prob gradients", model_story_gradients),
        ("model: forward paths deterministic", model_forward_paths_deterministic),
        ("training: ranking-loss clauses", training_ranking_loss_clauses),
        ("training: λ = 0 and negatives", training_zero_lambda_and_negatives),
        ("training: full-pipeline gradients", training_full_pipeline_gradients),
        ("training: bitwise reproducible", training_reproducible),
        ("data: generated albums valid", data_generated_albums_valid),
        ("data: vocabulary and tokenize", data_vocabulary_and_tokenize),
        ("evaluation: metric ranges and identities", evaluation_metric_ranges),
        ("evaluation: ranks and top-k", evaluation_ranks_and_topk),
        ("harness: checkpoint round trip", harness_checkpoint_round_trip),
        ("harness: CLI reproducible and read-only", harness_cli_reproducible_and_read_only),
    ]
}
