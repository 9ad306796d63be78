//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criterion 11 needs real IRMA manifests and only runs when
//! `ARBC_IRMA_TRAIN` and `ARBC_IRMA_TEST` point at them.

use std::collections::HashMap;
use std::time::Instant;

use arbc::autoencoder::{self, AutoencoderModel, TrainingConfig};
use arbc::barcode::{rbc_encode, BitVec, Method};
use arbc::imageio::{DatasetManifest, NormalizedImage};
use arbc::index::{BarcodeIndex, LshConfig, LshTables};
use arbc::irma::{
    build_branching, delta_vector, image_error, total_error, BranchingTable, IrmaCode,
};
use arbc::pipeline::{self, FeatureSpec};
use arbc::radon::{flatten, radon_transform, RadonConfig, RadonFeatures};
use arbc::store::{self, IndexParams, StoredIndex};
use arbc::synth::{self, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

type Check = Result<String, String>;

// Optional criteria report this prefix when their inputs are absent.
const SKIPPED: &str = "skipped";
type Criterion = (&'static str, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "radon mass conservation", radon_mass_conservation),
        ("2", "gradients match finite differences", gradient_check),
        ("3", "rbc matches naive transcription", rbc_oracle),
        ("4", "hamming metric axioms", hamming_axioms),
        (
            "5",
            "exhaustive search matches naive scan",
            exhaustive_oracle,
        ),
        ("6", "hierarchical error hand oracle", irma_oracle),
        ("7", "persistence round trips", round_trips),
        ("8", "lsh self retrieval", lsh_self_retrieval),
        ("9", "synthetic trend check", synthetic_trend),
        ("10", "timing report", timing_report),
        ("11", "irma end to end", irma_path),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) if detail.starts_with(SKIPPED) => println!("SKIP [{id}] {name}: {detail}"),
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn random_image(side: usize, rng: &mut ChaCha8Rng) -> NormalizedImage {
    let px = (0..side * side)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random()
            }
        })
        .collect();
    NormalizedImage::new(side, px).unwrap()
}

fn radon_mass_conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for n in [8, 16] {
        let cfg = RadonConfig::new(n).unwrap();
        for _ in 0..100 {
            let img = random_image(32, &mut rng);
            let total = img.intensity_sum();
            for p in radon_transform(&img, &cfg).projections() {
                let rel = (p.iter().sum::<f64>() - total).abs() / total;
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst <= 1e-9, || {
        format!("max relative deviation {worst:e}")
    })?;
    Ok(format!("200 images, max relative deviation {worst:e}"))
}

// Finite-difference oracle evaluated in double-double arithmetic so that
// rounding in the cost stays far below the 1e-6 step.
mod dd {
    use super::*;

    pub fn exp(t: TwoFloat) -> TwoFloat {
        let ln2 = TwoFloat::new_add(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
        let k = (t.hi() / std::f64::consts::LN_2).round();
        let r = t - ln2 * k;
        let mut term = TwoFloat::from(1.0);
        let mut sum = TwoFloat::from(1.0);
        for n in 1..40 {
            term = term * r / n as f64;
            sum += term;
            if term.hi().abs() < 1e-36 {
                break;
            }
        }
        sum * 2f64.powi(k as i32)
    }

    pub fn recip(b: TwoFloat) -> TwoFloat {
        let q1 = 1.0 / b.hi();
        let r = TwoFloat::from(1.0) - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        TwoFloat::new_add(q1, q2) + q3
    }

    pub fn half_cost(model: &AutoencoderModel, x: &[f64]) -> TwoFloat {
        let one = TwoFloat::from(1.0);
        let mut a: Vec<TwoFloat> = x.iter().map(|&v| TwoFloat::from(v)).collect();
        for (w, b) in model.weights().iter().zip(model.biases()) {
            a = (0..w.rows())
                .map(|r| {
                    let mut t = TwoFloat::from(b[r]);
                    for (c, &ac) in a.iter().enumerate() {
                        t += ac * w.get(r, c);
                    }
                    recip(one + exp(-t))
                })
                .collect();
        }
        let mut sum = TwoFloat::from(0.0);
        for (&xi, &zi) in x.iter().zip(&a) {
            let d = zi - xi;
            sum += d * d;
        }
        sum * 0.5
    }

    /// Central differences over every weight then every bias of each layer,
    /// in layer order.
    pub fn gradient(model: &AutoencoderModel, x: &[f64], h: f64) -> Vec<f64> {
        let mut probe = model.clone();
        let mut out = Vec::new();
        let mut central =
            |probe: &mut AutoencoderModel, get: &dyn Fn(&mut AutoencoderModel) -> &mut f64| {
                let orig = *get(probe);
                let (up, down) = (orig + h, orig - h);
                *get(probe) = up;
                let plus = half_cost(probe, x);
                *get(probe) = down;
                let minus = half_cost(probe, x);
                *get(probe) = orig;
                out.push(f64::from((plus - minus) / (TwoFloat::from(up) - down)));
            };
        for k in 0..model.num_layers() {
            for i in 0..model.weights()[k].as_slice().len() {
                central(&mut probe, &|m| &mut m.weights_mut()[k].as_mut_slice()[i]);
            }
            for i in 0..model.biases()[k].len() {
                central(&mut probe, &|m| &mut m.biases_mut()[k][i]);
            }
        }
        out
    }
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let shapes = [
        [2, 1, 2],
        [4, 2, 4],
        [4, 1, 4],
        [6, 3, 6],
        [8, 4, 8],
        [8, 2, 8],
        [10, 5, 10],
        [12, 6, 12],
        [12, 3, 12],
    ];
    for trial in 0..20 {
        let dims = shapes[rng.random_range(0..shapes.len())];
        let model = autoencoder::init_model(&dims, rng.random()).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random()).collect();
        let g = model.backprop(&x).unwrap();
        let analytic: Vec<f64> = g
            .weights
            .iter()
            .zip(&g.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b).copied())
            .collect();
        let numeric = dd::gradient(&model, &x, 1e-6);
        ensure(analytic.len() == numeric.len(), || {
            format!("trial {trial}: gradient size")
        })?;
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("20 nets, max relative error {worst:e}"))
}

// Direct transcription: per angle, collect the nonzero values, sort, take
// the middle (mean of the two middle ones for an even count), then set each
// bit when the value reaches that median. No nonzero values: all zeros.
fn naive_rbc(projections: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for p in projections {
        let mut nz = Vec::new();
        for &v in p {
            if v != 0.0 {
                nz.push(v);
            }
        }
        for i in 1..nz.len() {
            let mut j = i;
            while j > 0 && nz[j - 1] > nz[j] {
                nz.swap(j - 1, j);
                j -= 1;
            }
        }
        let median = match nz.len() {
            0 => None,
            n if n % 2 == 1 => Some(nz[(n - 1) / 2]),
            n => Some(0.5 * (nz[n / 2 - 1] + nz[n / 2])),
        };
        for &v in p {
            out.push(match median {
                Some(m) if v >= m => '1',
                _ => '0',
            });
        }
    }
    out
}

fn rbc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut zero_rows, mut even_rows) = (0, 0);
    for set in 0..50 {
        let n_angles = rng.random_range(1..=16);
        let bins = rng.random_range(1..=60);
        let projections: Vec<Vec<f64>> = (0..n_angles)
            .map(|a| {
                if (set + a) % 7 == 0 {
                    return vec![0.0; bins];
                }
                let mut row: Vec<f64> = (0..bins)
                    .map(|_| match rng.random_range(0..4) {
                        0 => 0.0,
                        // small integers make repeated values and exact ties
                        1 => rng.random_range(1..5) as f64,
                        _ => rng.random::<f64>() * 10.0,
                    })
                    .collect();
                if (set + a) % 5 == 0 {
                    // force an even nonzero count
                    let nz = row.iter().filter(|&&v| v != 0.0).count();
                    if nz % 2 == 1 {
                        if let Some(v) = row.iter_mut().find(|v| **v != 0.0) {
                            *v = 0.0;
                        }
                    }
                }
                row
            })
            .collect();
        for p in &projections {
            let nz = p.iter().filter(|&&v| v != 0.0).count();
            zero_rows += usize::from(nz == 0);
            even_rows += usize::from(nz > 0 && nz % 2 == 0);
        }
        let got = rbc_encode(&RadonFeatures::from_raw(projections.clone()));
        let expect = naive_rbc(&projections);
        ensure(got.bits().to_bitstring() == expect, || {
            format!("set {set} differs")
        })?;
    }
    ensure(zero_rows > 0 && even_rows > 0, || {
        "edge cases not exercised".into()
    })?;
    Ok(format!(
        "50 sets exact, {zero_rows} all-zero and {even_rows} even-count projections"
    ))
}

fn random_bits(len: usize, rng: &mut ChaCha8Rng) -> BitVec {
    BitVec::from_bools((0..len).map(|_| rng.random_bool(0.5)))
}

fn hamming_axioms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..1000 {
        let len = rng.random_range(1..=300);
        let a = random_bits(len, &mut rng);
        let b = random_bits(len, &mut rng);
        let c = random_bits(len, &mut rng);
        let d = |x: &BitVec, y: &BitVec| x.hamming(y).unwrap();
        let naive = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u32;
        ensure(d(&a, &b) == naive, || format!("triple {t}: distance"))?;
        ensure(d(&a, &b) == d(&b, &a), || format!("triple {t}: symmetry"))?;
        ensure(d(&a, &a) == 0, || format!("triple {t}: identity"))?;
        ensure(a == b || d(&a, &b) > 0, || {
            format!("triple {t}: separation")
        })?;
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c), || {
            format!("triple {t}: triangle")
        })?;
    }
    Ok("1000 triples".into())
}

fn exhaustive_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ties = 0;
    for t in 0..200 {
        // short codes force many equal distances
        let len = rng.random_range(1..=24);
        let n = rng.random_range(1..=200);
        let mut index = BarcodeIndex::new(Method::Rbc, len);
        let mut ids = std::collections::HashSet::new();
        while ids.len() < n {
            ids.insert(format!("img{}", rng.random_range(0..100_000)));
        }
        let mut records = Vec::new();
        for id in ids {
            let code = random_bits(len, &mut rng);
            index.insert(id.clone(), code.clone()).unwrap();
            records.push((id, code));
        }
        let q = random_bits(len, &mut rng);
        let mut best: Option<(u32, &str)> = None;
        for (id, code) in &records {
            let dist = code.iter().zip(q.iter()).filter(|(a, b)| a != b).count() as u32;
            if best.is_none_or(|(bd, bid)| dist < bd || (dist == bd && id.as_str() < bid)) {
                best = Some((dist, id));
            }
        }
        let (bd, bid) = best.unwrap();
        ties += records
            .iter()
            .filter(|(_, c)| c.hamming(&q).unwrap() == bd)
            .count()
            .saturating_sub(1)
            .min(1);
        let hit = &index.search_exhaustive(&q, 1).unwrap()[0];
        ensure(hit.distance == bd && hit.image_id == bid, || {
            format!(
                "index {t}: got {}@{}, naive {bid}@{bd}",
                hit.image_id, hit.distance
            )
        })?;
    }
    Ok(format!("200 indexes, {ties} with tied nearest neighbours"))
}

fn code(s: &str) -> IrmaCode {
    s.parse().unwrap()
}

fn uniform_table(b: u32) -> BranchingTable {
    let mut t = BranchingTable::new();
    for axis in 1..=4 {
        for pos in 1..=4 {
            t.set(axis, pos, b);
        }
    }
    t
}

const ALPHABET: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

fn random_axis(len: usize, rng: &mut ChaCha8Rng) -> String {
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..8)] as char)
        .collect()
}

fn irma_oracle() -> Check {
    let table = uniform_table(10);
    let e1 = image_error(&code("1121-127-700-500"), &code("1131-127-700-500"), &table).unwrap();
    ensure((e1 - 7.0 / 120.0).abs() < 1e-9, || {
        format!("7/120 case gave {e1}")
    })?;
    let e2 = image_error(&code("1121-127-700-500"), &code("2232-238-811-611"), &table).unwrap();
    let expect2 = 0.1 * (1.0 + 0.5 + 1.0 / 3.0 + 0.25) + 3.0 * 0.1 * (1.0 + 0.5 + 1.0 / 3.0);
    ensure(
        (e2 - expect2).abs() < 1e-9 && (e2 - 0.758_33).abs() < 1e-5,
        || format!("fully mismatched case gave {e2}"),
    )?;
    let c = code("1121-4a0-914-700");
    let e0 = image_error(&c, &c, &table).unwrap();
    ensure(e0 == 0.0, || format!("identical codes gave {e0}"))?;
    let truth = code("1121-127-700-500");
    let wrong = code("1131-127-700-500");
    let pairs = [("a", &truth, &wrong), ("b", &truth, &wrong)];
    let total = total_error(pairs, &table).unwrap().total_error;
    ensure((total - 7.0 / 60.0).abs() < 1e-9, || {
        format!("additivity gave {total}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..1000 {
        let len = rng.random_range(3..=4);
        let a = random_axis(len, &mut rng);
        let b = random_axis(len, &mut rng);
        let delta = delta_vector(&a, &b).unwrap();
        let first = a.bytes().zip(b.bytes()).position(|(x, y)| x != y);
        for (i, &d) in delta.iter().enumerate() {
            let expect = u8::from(first.is_some_and(|f| i >= f));
            ensure(d == expect, || format!("pair {t}: delta of {a} vs {b}"))?;
        }
        ensure(delta.windows(2).all(|w| w[0] <= w[1]), || {
            format!("pair {t}: delta not monotone")
        })?;

        // a mismatch starting one position deeper costs strictly less
        let base: String = random_axis(4, &mut rng);
        let axis = rng.random_range(0..4);
        let h = rng.random_range(0..3);
        let flip = |s: &str, from: usize| -> String {
            s.bytes()
                .enumerate()
                .map(|(i, c)| {
                    if i == from {
                        if c == b'z' {
                            'y'
                        } else {
                            'z'
                        }
                    } else {
                        c as char
                    }
                })
                .collect()
        };
        let mut axes = ["1121", "127", "700", "500"].map(String::from);
        let truth_axes = {
            let mut t = axes.clone();
            t[axis] = base.clone();
            t
        };
        axes[axis] = flip(&base, h);
        let shallow = code(&axes.join("-"));
        axes[axis] = flip(&base, h + 1);
        let deep = code(&axes.join("-"));
        let truth_code = code(&truth_axes.join("-"));
        let b = rng.random_range(1..20);
        let tbl = uniform_table(b);
        let es = image_error(&truth_code, &shallow, &tbl).unwrap();
        let ed = image_error(&truth_code, &deep, &tbl).unwrap();
        ensure(es > ed, || {
            format!(
                "pair {t}: mismatch at {h} costs {es}, at {} costs {ed}",
                h + 1
            )
        })?;
    }
    Ok("hand values within 1e-9, 1000 random pairs".into())
}

fn random_model(rng: &mut ChaCha8Rng) -> AutoencoderModel {
    let d = 4 * rng.random_range(1..=6);
    let dims = match rng.random_range(0..3) {
        0 => vec![d, d / 2, d],
        1 => vec![d, d / 4, d],
        _ => vec![d, d / 2, d / 4, d / 2, d],
    };
    let mut m = autoencoder::init_model(&dims, rng.random()).unwrap();
    for w in m.weights_mut() {
        for v in w.as_mut_slice() {
            *v *= 10f64.powi(rng.random_range(-12..12));
        }
    }
    m
}

fn random_table(rng: &mut ChaCha8Rng) -> BranchingTable {
    let codes: Vec<IrmaCode> = (0..rng.random_range(1..30))
        .map(|_| {
            let axes = [0, 1, 2, 3].map(|_| {
                let len = rng.random_range(3..=4);
                random_axis(len, rng)
            });
            code(&axes.join("-"))
        })
        .collect();
    let mut t = build_branching(&codes).unwrap();
    if rng.random_bool(0.5) {
        t.set(rng.random_range(1..=4), 1, rng.random_range(1..1000));
    }
    t
}

fn round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for t in 0..100 {
        let m = random_model(&mut rng);
        let p = dir.path().join(format!("m{t}.txt"));
        store::save_model(&m, &p).unwrap();
        ensure(store::load_model(&p).unwrap() == m, || format!("model {t}"))?;

        let len = rng.random_range(1..=200);
        let method = if rng.random_bool(0.5) {
            Method::Rbc
        } else {
            Method::Arbc(rng.random_range(1..4))
        };
        let mut index = BarcodeIndex::new(method, len);
        for i in 0..rng.random_range(0..50) {
            index
                .insert(format!("x-{t}.{i}"), random_bits(len, &mut rng))
                .unwrap();
        }
        let stored = StoredIndex {
            params: IndexParams {
                side: [32, 64][rng.random_range(0..2)],
                num_angles: [8, 16][rng.random_range(0..2)],
            },
            index,
        };
        let p = dir.path().join(format!("i{t}.txt"));
        store::save_index(&stored, &p).unwrap();
        ensure(store::load_index(&p).unwrap() == stored, || {
            format!("index {t}")
        })?;

        let table = random_table(&mut rng);
        let p = dir.path().join(format!("b{t}.tsv"));
        store::save_branching(&table, &p).unwrap();
        ensure(store::load_branching(&p).unwrap() == table, || {
            format!("branching table {t}")
        })?;
    }
    Ok("100 models, indexes and branching tables".into())
}

fn lsh_self_retrieval() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for len in [376, 752, 188] {
        let mut index = BarcodeIndex::new(Method::Rbc, len);
        for i in 0..300 {
            index
                .insert(format!("r{i}"), random_bits(len, &mut rng))
                .unwrap();
        }
        let tables = LshTables::build(&index, &LshConfig::for_length(len, 11)).unwrap();
        for (id, code) in index.records() {
            let hits = tables.search(&index, code, 1).unwrap();
            ensure(
                hits.first()
                    .is_some_and(|h| h.image_id == id && h.distance == 0),
                || format!("{id} (length {len}) did not retrieve itself"),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} queries returned themselves at distance 0"
    ))
}

const SYNTH_SEEDS: u64 = 5;

struct SynthRun {
    first_loss: f64,
    last_loss: f64,
    rbc_error: f64,
    arbc_error: f64,
    arbc_len: usize,
    d: usize,
}

fn synth_run(seed: u64) -> SynthRun {
    let data = synth::generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    });
    let spec = FeatureSpec {
        side: 32,
        radon: RadonConfig::new(8).unwrap(),
    };
    let d = spec.feature_len();
    let feats = |set: &[synth::SynthImage]| -> Vec<RadonFeatures> {
        set.iter()
            .map(|img| pipeline::raster_features(&img.raster, &spec).unwrap())
            .collect()
    };
    let (train_f, test_f) = (feats(&data.train), feats(&data.test));
    let ids = |set: &[synth::SynthImage]| -> Vec<String> {
        set.iter().map(|i| i.image_id.clone()).collect()
    };
    let codes = |set: &[synth::SynthImage]| -> Vec<IrmaCode> {
        set.iter().map(|i| code(&i.code)).collect()
    };
    let (train_ids, test_ids) = (ids(&data.train), ids(&data.test));
    let (train_codes, test_codes) = (codes(&data.train), codes(&data.test));
    let table = build_branching(train_codes.iter().chain(&test_codes)).unwrap();
    let labels: HashMap<String, IrmaCode> = train_ids.iter().cloned().zip(train_codes).collect();

    let vectors: Vec<Vec<f64>> = train_f.iter().map(flatten).collect();
    let model = autoencoder::init_model(&[d, d / 2, d], seed).unwrap();
    let cfg = TrainingConfig {
        epochs: 300,
        batch_size: 10,
        learning_rate: 0.5,
        seed: seed + 1000,
        shuffle_each_epoch: true,
    };
    let outcome = autoencoder::train(model, &vectors, &cfg).unwrap();

    let score = |method: Method, model: Option<&AutoencoderModel>| -> (f64, usize) {
        let len = pipeline::barcode_length(&spec, method, model);
        let train_bits = pipeline::encode_all(&train_ids, &train_f, method, model).unwrap();
        let test_bits = pipeline::encode_all(&test_ids, &test_f, method, model).unwrap();
        let index = pipeline::build_index(&train_ids, train_bits, method, len).unwrap();
        let queries: Vec<_> = test_ids
            .iter()
            .cloned()
            .zip(test_bits)
            .zip(test_codes.iter().cloned())
            .map(|((i, b), c)| (i, b, c))
            .collect();
        let report = pipeline::evaluate_top1(&index, &labels, &queries, &table).unwrap();
        (report.total_error, len)
    };
    let (rbc_error, _) = score(Method::Rbc, None);
    let (arbc_error, arbc_len) = score(Method::Arbc(1), Some(&outcome.model));
    SynthRun {
        first_loss: outcome.loss_trace[0],
        last_loss: *outcome.loss_trace.last().unwrap(),
        rbc_error,
        arbc_error,
        arbc_len,
        d,
    }
}

fn synthetic_trend() -> Check {
    let runs: Vec<SynthRun> = (0..SYNTH_SEEDS).map(synth_run).collect();
    let mut lines = Vec::new();
    let mut problems = Vec::new();
    let mut arbc_wins = 0;
    for (seed, r) in runs.iter().enumerate() {
        let ratio = r.last_loss / r.first_loss;
        lines.push(format!(
            "seed {seed}: loss {:.4} -> {:.4} ({:.1}%), E_rbc {:.4}, E_arbc {:.4}",
            r.first_loss,
            r.last_loss,
            100.0 * ratio,
            r.rbc_error,
            r.arbc_error
        ));
        if ratio >= 0.25 {
            problems.push(format!(
                "(a) seed {seed} final loss is {:.1}% of epoch 1",
                100.0 * ratio
            ));
        }
        if r.arbc_len != r.d / 2 {
            problems.push(format!(
                "(c) seed {seed} ARBC length {} != {}",
                r.arbc_len,
                r.d / 2
            ));
        }
        arbc_wins += usize::from(r.arbc_error <= r.rbc_error);
    }
    if arbc_wins < 4 {
        problems.push(format!("(b) ARBC <= RBC for only {arbc_wins}/5 seeds"));
    }
    for l in &lines {
        println!("    {l}");
    }
    if problems.is_empty() {
        Ok(format!(
            "d = {}, ARBC length {}, ARBC <= RBC for {arbc_wins}/5 seeds",
            runs[0].d, runs[0].arbc_len
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn timing_report() -> Check {
    let data = synth::generate(&SynthConfig {
        num_images: 100,
        num_train: 100,
        ..SynthConfig::default()
    });
    let spec = FeatureSpec {
        side: 32,
        radon: RadonConfig::new(8).unwrap(),
    };
    let start = Instant::now();
    let mut vectors = Vec::new();
    for img in &data.train {
        let f = pipeline::raster_features(&img.raster, &spec).unwrap();
        std::hint::black_box(rbc_encode(&f));
        vectors.push(flatten(&f));
    }
    let rbc = start.elapsed().as_secs_f64() / data.train.len() as f64;
    let d = spec.feature_len();
    let model = autoencoder::init_model(&[d, d / 2, d], 0).unwrap();
    let cfg = TrainingConfig {
        epochs: 1,
        ..TrainingConfig::default()
    };
    let start = Instant::now();
    std::hint::black_box(autoencoder::train(model, &vectors, &cfg).unwrap());
    let epoch = start.elapsed().as_secs_f64() / vectors.len() as f64;
    let order = if rbc < epoch {
        "RBC faster"
    } else {
        "RBC not faster on this machine"
    };
    Ok(format!(
        "RBC encode {:.3} ms/image, ARBC one epoch {:.3} ms/image ({order}; reported only)",
        rbc * 1e3,
        epoch * 1e3
    ))
}

fn irma_path() -> Check {
    let (Ok(train), Ok(test)) = (
        std::env::var("ARBC_IRMA_TRAIN"),
        std::env::var("ARBC_IRMA_TEST"),
    ) else {
        return Ok(format!(
            "{SKIPPED}, set ARBC_IRMA_TRAIN and ARBC_IRMA_TEST to run"
        ));
    };
    let train_m = DatasetManifest::load(&train).map_err(|e| e.to_string())?;
    let test_m = DatasetManifest::load(&test).map_err(|e| e.to_string())?;
    let spec = FeatureSpec {
        side: 64,
        radon: RadonConfig::new(16).unwrap(),
    };
    let train_codes = pipeline::manifest_codes(&train_m).map_err(|e| e.to_string())?;
    let test_codes = pipeline::manifest_codes(&test_m).map_err(|e| e.to_string())?;
    let table =
        build_branching(train_codes.iter().chain(&test_codes)).map_err(|e| e.to_string())?;
    let train_f = pipeline::manifest_features(&train_m, &spec).map_err(|e| e.to_string())?;
    let test_f = pipeline::manifest_features(&test_m, &spec).map_err(|e| e.to_string())?;
    let train_ids: Vec<String> = train_m.entries.iter().map(|e| e.image_id.clone()).collect();
    let test_ids: Vec<String> = test_m.entries.iter().map(|e| e.image_id.clone()).collect();
    let labels: HashMap<String, IrmaCode> = train_ids.iter().cloned().zip(train_codes).collect();
    let d = spec.feature_len();
    let outcome = autoencoder::train(
        autoencoder::init_model(&[d, d / 2, d], 0).unwrap(),
        &pipeline::feature_vectors(&train_f),
        &TrainingConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let score = |method: Method, model: Option<&AutoencoderModel>| -> Result<f64, String> {
        let len = pipeline::barcode_length(&spec, method, model);
        let tb =
            pipeline::encode_all(&train_ids, &train_f, method, model).map_err(|e| e.to_string())?;
        let qb =
            pipeline::encode_all(&test_ids, &test_f, method, model).map_err(|e| e.to_string())?;
        let index =
            pipeline::build_index(&train_ids, tb, method, len).map_err(|e| e.to_string())?;
        let queries: Vec<_> = test_ids
            .iter()
            .cloned()
            .zip(qb)
            .zip(test_codes.iter().cloned())
            .map(|((i, b), c)| (i, b, c))
            .collect();
        pipeline::evaluate_top1(&index, &labels, &queries, &table)
            .map(|r| r.total_error)
            .map_err(|e| e.to_string())
    };
    let rbc = score(Method::Rbc, None)?;
    let arbc = score(Method::Arbc(1), Some(&outcome.model))?;
    ensure(arbc < rbc, || {
        format!("E_arbc {arbc:.2} not below E_rbc {rbc:.2}")
    })?;
    Ok(format!("E_rbc {rbc:.2}, E_arbc {arbc:.2}"))
}
