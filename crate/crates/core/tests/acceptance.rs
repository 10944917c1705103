//! Acceptance criteria, one PASS/FAIL line each. Pass a substring to run a
//! subset: `cargo test --test acceptance -- equivalence`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expandnet::compression::{build_conv_matrix, collapse_conv_chain, collapse_fc_chain, compress_network};
use expandnet::data::{load_cifar, parse_cifar_bytes, synthetic_split, CifarFlavor};
use expandnet::expansion::{
    expand_ck, expand_cl, expand_fc, expand_network, ExpansionPlan, ExpansionUnit, Strategies, Strategy,
};
use expandnet::graph::{Conv2d, Layer, LayerSpec, Linear, Mode, NetworkGraph, ParamRole};
use expandnet::persist::{load_model, save_model};
use expandnet::tensor::{matmul, Scalar, Tensor4};
use expandnet::train::{gradient_check, predict_dataset, train, TrainConfig};
use expandnet::zoo::{build_expandnet_variant, build_smallnet, Variant, ZooDepth, CLASS_COUNTS, KERNEL_SIZES};
use expandnet::Error;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: expandnet::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Layers for `specs` with He-normal weights and random biases.
fn random_layers(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Vec<Layer<f64>> {
    let seed = rng.gen();
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut layer = Layer::init(s, seed, i as u64);
            for (role, t) in layer.tensors_mut() {
                if role == ParamRole::Bias {
                    t.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
                }
            }
            layer
        })
        .collect()
}

fn random_input(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn run_chain<T: Scalar>(layers: &[Layer<T>], x: &Tensor4<T>) -> Tensor4<T> {
    layers
        .iter()
        .fold(x.clone(), |a, l| l.forward(&a, Mode::Eval).expect("chain forward"))
}

fn convs<T: Scalar>(layers: &[Layer<T>]) -> Vec<&Conv2d<T>> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv2d(c) => c,
            _ => panic!("expected conv"),
        })
        .collect()
}

fn linears<T: Scalar>(layers: &[Layer<T>]) -> Vec<&Linear<T>> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Linear(c) => c,
            _ => panic!("expected linear"),
        })
        .collect()
}

/// Collapses a unit and returns the max abs diff between chain and
/// collapsed layer over the given inputs.
fn unit_diff<T: Scalar>(unit: &ExpansionUnit, layers: &[Layer<T>], x: &Tensor4<T>) -> Result<f64, String> {
    let collapsed: Layer<T> = match unit.strategy {
        Strategy::Fc => Layer::Linear(lib(collapse_fc_chain(&linears(layers)))?),
        _ => Layer::Conv2d(lib(collapse_conv_chain(unit, &convs(layers)))?),
    };
    ensure(collapsed.spec() == unit.original, || {
        format!("collapsed {:?} != original {:?}", collapsed.spec(), unit.original)
    })?;
    let a = run_chain(layers, x);
    let b = lib(collapsed.forward(x, Mode::Eval))?;
    ensure(a.shape() == b.shape(), || format!("{:?} vs {:?}", a.shape(), b.shape()))?;
    lib(a.max_abs_diff(&b))
}

struct UnitCase {
    strategy: Strategy,
    original: LayerSpec,
    specs: Vec<LayerSpec>,
    input: [usize; 4],
}

fn equivalence_cases(rng: &mut ChaCha8Rng) -> Vec<UnitCase> {
    let mut cases = Vec::new();
    let mut pad_cycle = (0..5).cycle();
    let conv_case = |rng: &mut ChaCha8Rng, strategy: Strategy, k: usize, r: usize, s: usize, p: usize| {
        let m = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let original = LayerSpec::conv(m, n, k, s, p, rng.gen_bool(0.7));
        let keep = rng.gen_bool(0.3);
        let specs = match strategy {
            Strategy::Cl => expand_cl(&original, r, keep),
            _ => expand_ck(&original, r, keep),
        }
        .expect("valid expansion");
        let lo = k.saturating_sub(2 * p).max(1);
        let h = rng.gen_range(lo..=lo + 7);
        let w = rng.gen_range(lo..=lo + 7);
        UnitCase {
            strategy,
            original,
            specs,
            input: [50, m, h, w],
        }
    };
    for _round in 0..2 {
        for k in [1, 3, 5, 7, 9] {
            for r in [1, 2, 4, 8] {
                for s in [1, 2] {
                    let p = pad_cycle.next().unwrap();
                    cases.push(conv_case(rng, Strategy::Cl, k, r, s, p));
                    if k >= 5 {
                        let p = pad_cycle.next().unwrap();
                        cases.push(conv_case(rng, Strategy::Ck, k, r, s, p));
                    }
                }
            }
        }
        for r in [1, 2, 4, 8] {
            for depth in [2, 3, 4] {
                let m = rng.gen_range(1..=16);
                let n = rng.gen_range(1..=16);
                let original = LayerSpec::linear(m, n, rng.gen_bool(0.7));
                cases.push(UnitCase {
                    strategy: Strategy::Fc,
                    specs: expand_fc(&original, r, depth).expect("valid expansion"),
                    original,
                    input: [50, m, 1, 1],
                });
            }
        }
    }
    cases
}

fn equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = equivalence_cases(&mut rng);
    ensure(cases.len() >= 120, || format!("only {} units", cases.len()))?;
    let (mut worst64, mut worst32) = (0.0f64, 0.0f64);
    let mut seen_k = std::collections::BTreeSet::new();
    let mut seen_p = std::collections::BTreeSet::new();
    for (i, case) in cases.iter().enumerate() {
        if let LayerSpec::Conv2d {
            kernel_size, padding, ..
        } = case.original
        {
            seen_k.insert(kernel_size);
            seen_p.insert(padding);
        }
        let unit = ExpansionUnit {
            original: case.original.clone(),
            strategy: case.strategy,
            start: 0,
            len: case.specs.len(),
        };
        let layers = random_layers(&case.specs, &mut rng);
        let x = random_input(&mut rng, case.input);
        let d64 = unit_diff(&unit, &layers, &x).map_err(|e| format!("unit {i} {:?}: {e}", case.original))?;
        let layers32: Vec<Layer<f32>> = layers.iter().map(Layer::cast).collect();
        let d32 = unit_diff(&unit, &layers32, &x.cast()).map_err(|e| format!("unit {i} {:?}: {e}", case.original))?;
        ensure(d64 <= 1e-9, || format!("unit {i} {:?} f64 diff {d64:e}", case.original))?;
        ensure(d32 <= 1e-4, || format!("unit {i} {:?} f32 diff {d32:e}", case.original))?;
        worst64 = worst64.max(d64);
        worst32 = worst32.max(d32);
    }
    ensure(seen_k.len() == 5 && seen_p.len() == 5, || {
        format!("grid misses k {seen_k:?} or p {seen_p:?}")
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} units x 50 inputs, worst f64 {worst64:.2e}, worst f32 {worst32:.2e}, {:.1}s",
        cases.len(),
        elapsed.as_secs_f64()
    ))
}

fn conv_matrix_product() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 24 {
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let ck = count % 3 == 2;
        let k = if ck { 5 } else { k };
        let m = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=4);
        let r = if m * 2 <= 4 && n * 2 <= 4 {
            rng.gen_range(1..=2)
        } else {
            1
        };
        let s = rng.gen_range(1..=2);
        let p = rng.gen_range(0..=2);
        let original = LayerSpec::conv(m, n, k, s, p, false);
        let specs = if ck {
            expand_ck(&original, r, false)
        } else {
            expand_cl(&original, r, false)
        }
        .map_err(|e| e.to_string())?;
        let h = rng.gen_range(k.saturating_sub(2 * p).max(1)..=6);
        let w = rng.gen_range(k.saturating_sub(2 * p).max(1)..=6);
        if specs.iter().any(|s| matches!(s, LayerSpec::Conv2d { in_channels, out_channels, .. } if *in_channels > 4 || *out_channels > 4)) {
            continue;
        }
        let layers = random_layers(&specs, &mut rng);
        let unit = ExpansionUnit {
            original: original.clone(),
            strategy: if ck { Strategy::Ck } else { Strategy::Cl },
            start: 0,
            len: specs.len(),
        };
        let chain = convs(&layers);
        let collapsed = lib(collapse_conv_chain(&unit, &chain))?;
        let mut hw = (h, w);
        let mut product = None;
        for layer in &chain {
            let mat = lib(build_conv_matrix(layer, hw))?;
            let spec = Layer::Conv2d((*layer).clone()).spec();
            let [_, oh, ow] = lib(spec.output_shape([layer.kernel.in_channels(), hw.0, hw.1]))?;
            hw = (oh, ow);
            product = Some(match product {
                None => mat,
                Some(acc) => lib(matmul(&mat, &acc))?,
            });
        }
        let direct = lib(build_conv_matrix(&collapsed, (h, w)))?;
        let product = product.unwrap();
        let d = lib(direct.max_abs_diff(&product))?;
        ensure(d <= 1e-10, || format!("{original:?} at {h}x{w}: {d:e}"))?;
        // the oracle must notice perturbed taps
        let mut nudged = collapsed.clone();
        nudged.kernel.data_mut().iter_mut().for_each(|t| *t += 1e-6);
        let control = lib(lib(build_conv_matrix(&nudged, (h, w)))?.max_abs_diff(&product))?;
        ensure(control > 1e-7, || {
            format!("{original:?}: perturbed kernel still matches ({control:e})")
        })?;
        worst = worst.max(d);
        count += 1;
    }
    Ok(format!(
        "{count} instances (spatial <= 6x6, channels <= 4), worst {worst:.2e}"
    ))
}

fn kernel_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for k in [5, 7, 9] {
        for r in [1, 2, 4, 8] {
            for s in [1, 2] {
                let original = LayerSpec::conv(3, 5, k, s, (k - 1) / 2, true);
                let specs = lib(expand_ck(&original, r, false))?;
                ensure(specs.len() == (k - 1) / 2, || format!("k={k}: {} layers", specs.len()))?;
                for spec in &specs {
                    ensure(matches!(spec, LayerSpec::Conv2d { kernel_size: 3, .. }), || {
                        format!("k={k}: {spec:?}")
                    })?;
                }
                let layers = random_layers(&specs, &mut rng);
                let unit = ExpansionUnit {
                    original: original.clone(),
                    strategy: Strategy::Ck,
                    start: 0,
                    len: specs.len(),
                };
                let collapsed = lib(collapse_conv_chain(&unit, &convs(&layers)))?;
                ensure(collapsed.kernel.size() == k, || {
                    format!("k={k} collapsed to {}", collapsed.kernel.size())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} CK expansions: L = (k-1)/2 and collapse recovers k for k in 5,7,9"
    ))
}

fn round_trip_counting() -> Check {
    let mut plans = 0;
    let mut not_applicable = 0;
    for k in KERNEL_SIZES {
        for classes in CLASS_COUNTS {
            for depth in [ZooDepth::ThreeConv, ZooDepth::FourConv] {
                let net = lib(build_smallnet::<f32>(k, classes, depth, 0))?;
                for variant in Variant::ALL {
                    for rate in [1, 2, 4] {
                        for table1 in [false, true] {
                            let expanded = build_expandnet_variant(&net, variant, rate, table1, 1);
                            let ck = matches!(variant, Variant::Ck | Variant::CkFc);
                            if ck && k == 3 {
                                ensure(matches!(expanded, Err(Error::Plan(_))), || {
                                    "CK on 3x3 must be rejected".into()
                                })?;
                                not_applicable += 1;
                                continue;
                            }
                            let expanded = lib(expanded)?;
                            let compact = lib(compress_network(&expanded))?;
                            let label = format!("{} {variant:?} r={rate} table1={table1}", net.name);
                            ensure(compact.param_count() == net.param_count(), || {
                                format!("{label}: {} != {}", compact.param_count(), net.param_count())
                            })?;
                            ensure(compact.specs() == net.specs(), || {
                                format!("{label}: layer sequence differs")
                            })?;
                            plans += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{plans} architecture/plan pairs exact ({not_applicable} CK-on-3x3 combinations correctly rejected)"
    ))
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mixed = vec![
        LayerSpec::conv(2, 3, 3, 1, 1, true),
        LayerSpec::batch_norm(3),
        LayerSpec::LeakyRelu { slope: 0.1 },
        LayerSpec::conv(3, 4, 3, 2, 0, false),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2, stride: 1 },
        LayerSpec::Flatten,
        LayerSpec::linear(16, 5, true),
        LayerSpec::Relu,
        LayerSpec::linear(5, 3, false),
    ];
    let small = vec![
        LayerSpec::conv(3, 4, 5, 1, 2, true),
        LayerSpec::batch_norm(4),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2, stride: 2 },
        LayerSpec::conv(4, 6, 5, 1, 2, true),
        LayerSpec::batch_norm(6),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::linear(24, 8, true),
        LayerSpec::Relu,
        LayerSpec::linear(8, 4, true),
    ];
    let mut kinds = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    let mut coords = 0;
    let nets = [
        (NetworkGraph::<f64>::from_specs("mixed", [2, 7, 7], 3, &mixed, 1), 4),
        (NetworkGraph::<f64>::from_specs("small", [3, 8, 8], 4, &small, 2), 5),
    ];
    let mut all = Vec::new();
    for (net, batch) in nets {
        all.push((lib(net)?, batch));
    }
    let base = all[1].0.clone();
    let plan = lib(ExpansionPlan::for_network(
        &base,
        Strategies {
            fc: true,
            cl: false,
            ck: true,
        },
        2,
        3,
        false,
        3,
    ))?;
    all.push((lib(expand_network(&base, &plan))?, 5));
    for (net, batch) in &all {
        for l in &net.layers {
            kinds.insert(l.spec().kind_name());
        }
        let [c, h, w] = net.input_shape;
        let x = random_input(&mut rng, [*batch, c, h, w]);
        let labels: Vec<usize> = (0..*batch).map(|i| i % net.num_classes).collect();
        let report = lib(gradient_check(net, &x, &labels, 1e-5, 40, 5))?;
        ensure(report.max_rel_err <= 1e-4, || format!("{}: {report:?}", net.name))?;
        worst = worst.max(report.max_rel_err);
        coords += report.coords_checked;
    }
    ensure(kinds.len() == expandnet::graph::LAYER_KINDS.len(), || {
        format!("kinds covered: {kinds:?}")
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} layer kinds, {coords} coordinates, worst relative error {worst:.2e}, {:.1}s",
        kinds.len(),
        elapsed.as_secs_f64()
    ))
}

fn cifar_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("EXPANDNET_DATA_DIR")?);
    let ok = ["cifar-10-batches-bin/test_batch.bin", "test_batch.bin"]
        .iter()
        .any(|f| dir.join(f).exists());
    ok.then_some(dir)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn training_trend() -> Check {
    let dir = cifar_dir().ok_or_else(|| {
        "blocked: CIFAR-10 binary files not found (set EXPANDNET_DATA_DIR to a directory containing cifar-10-batches-bin)"
            .to_string()
    })?;
    let cfg = |seed| TrainConfig {
        epochs: 30,
        lr_milestones: vec![10, 20],
        seed,
        ..TrainConfig::default()
    };
    let (mut base_acc, mut ck_acc) = (Vec::new(), Vec::new());
    for seed in 0..3u64 {
        let (train_set, eval_set) = lib(load_cifar(&dir, CifarFlavor::Cifar10, Some(10_000), seed))?;
        let mut base = lib(build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, seed))?;
        let r = lib(train(&mut base, &train_set, Some(&eval_set), &cfg(seed)))?;
        base_acc.push(r.final_accuracy().unwrap());

        let fresh = lib(build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, seed))?;
        let mut ck = lib(build_expandnet_variant(&fresh, Variant::Ck, 4, false, seed))?;
        lib(train(&mut ck, &train_set, None, &cfg(seed)))?;
        let compact = lib(compress_network(&ck))?;
        let pe = lib(predict_dataset(&ck, &eval_set))?;
        let pc = lib(predict_dataset(&compact, &eval_set))?;
        let agree = pe.iter().zip(&pc).filter(|(a, b)| a == b).count();
        ensure(agree == pe.len(), || {
            format!("seed {seed}: predictions agree on {agree}/{}", pe.len())
        })?;
        let correct = pc.iter().zip(&eval_set.labels).filter(|(p, l)| p == l).count();
        ck_acc.push(100.0 * correct as f64 / pc.len() as f64);
        println!(
            "  seed {seed}: SmallNet {:.2}%  ExpandNet-CK compressed {:.2}%",
            base_acc[seed as usize], ck_acc[seed as usize]
        );
    }
    let (b, c) = (mean(&base_acc), mean(&ck_acc));
    ensure(c >= b - 0.5, || {
        format!("ExpandNet-CK mean {c:.2}% < SmallNet mean {b:.2}% - 0.5pp")
    })?;
    Ok(format!(
        "SmallNet-7 {b:.2}%, ExpandNet-CK (compressed) {c:.2}%, predictions agree 100%"
    ))
}

fn determinism() -> Check {
    let (train_set, eval_set) = lib(synthetic_split(10, 128, 64, 5))?;
    let base = lib(build_smallnet::<f32>(7, 10, ZooDepth::ThreeConv, 5))?;
    let ex = lib(build_expandnet_variant(&base, Variant::CkFc, 2, false, 5))?;
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        lr_milestones: vec![1],
        seed: 11,
        ..TrainConfig::default()
    };
    let (mut a, mut b, mut c) = (ex.clone(), ex.clone(), ex.clone());
    let ra = lib(train(&mut a, &train_set, Some(&eval_set), &cfg))?;
    let rb = lib(train(&mut b, &train_set, Some(&eval_set), &cfg))?;
    ensure(ra.same_trajectory(&rb), || "same seed gave different reports".into())?;
    ensure(a == b, || "same seed gave different weights".into())?;
    let rc = lib(train(
        &mut c,
        &train_set,
        Some(&eval_set),
        &TrainConfig {
            seed: 12,
            ..cfg.clone()
        },
    ))?;
    ensure(!ra.same_trajectory(&rc), || {
        "a different seed gave an identical report".into()
    })?;
    Ok(format!(
        "{} epochs, reports and weights bitwise identical for equal seeds",
        ra.epochs.len()
    ))
}

fn format_robustness() -> Check {
    let path = Path::new("data_batch_1.bin");
    for flavor in [CifarFlavor::Cifar10, CifarFlavor::Cifar100] {
        let rec = flavor.record_len();
        let mut bytes = vec![0u8; rec * 3 + rec / 2];
        for i in 0..3 {
            bytes[i * rec] = 1;
        }
        match parse_cifar_bytes(&bytes, flavor, path) {
            Err(Error::Format { offset, .. }) => ensure(offset == 3 * rec as u64, || {
                format!("{flavor:?}: offset {offset}, expected {}", 3 * rec)
            })?,
            other => return Err(format!("{flavor:?}: truncated file gave {other:?}")),
        }
    }

    let dir = std::env::temp_dir().join(format!("expandnet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let base = lib(build_smallnet::<f32>(5, 100, ZooDepth::FourConv, 3))?;
    let ex32 = lib(build_expandnet_variant(&base, Variant::ClFc, 4, true, 3))?;
    let ex64: NetworkGraph<f64> = ex32.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_input(&mut rng, [4, 3, 32, 32]);

    let file = dir.join("m32.json");
    lib(save_model(&ex32, &file))?;
    let back32: NetworkGraph<f32> = lib(load_model(&file))?;
    let d32 =
        lib(lib(ex32.forward(&x.cast(), Mode::Eval))?.max_abs_diff(&lib(back32.forward(&x.cast(), Mode::Eval))?))?;

    let file = dir.join("m64.json");
    lib(save_model(&ex64, &file))?;
    let back64: NetworkGraph<f64> = lib(load_model(&file))?;
    let d64 = lib(lib(ex64.forward(&x, Mode::Eval))?.max_abs_diff(&lib(back64.forward(&x, Mode::Eval))?))?;
    std::fs::remove_dir_all(&dir).ok();
    ensure(d32 == 0.0 && d64 == 0.0, || {
        format!("round trip diff f32 {d32:e} f64 {d64:e}")
    })?;
    ensure(back32 == ex32 && back64 == ex64, || {
        "round trip changed the model".into()
    })?;
    Ok("truncated CIFAR-10/100 files rejected at the exact byte offset; save/load output diff 0 (f32, f64)".into())
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("equivalence", equivalence),
        ("conv_matrix_product", conv_matrix_product),
        ("ck_kernel_law", kernel_law),
        ("round_trip_counting", round_trip_counting),
        ("gradient_correctness", gradient_correctness),
        ("training_trend", training_trend),
        ("determinism", determinism),
        ("format_robustness", format_robustness),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
