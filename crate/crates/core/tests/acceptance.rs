//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL` line with the measured values.

use std::time::Instant;

use nnlogic::cost::{estimate_area, estimate_power_random, rank_weight_areas, CostModel};
use nnlogic::netlist::{
    check_equiv, random_netlist, simplify, simulate, to_signed, CellKind, Driver, EquivOptions,
    NetId, Netlist, RandomNetlistSpec, Verdict,
};
use nnlogic::qmodel::{
    random_model, Activation, Dataset, QLayer, QuantizedMLP, RequantParams, RequantSpec, Sample,
    Split,
};
use nnlogic::synth::{
    csd_weight, flatten_baseline, flatten_network, flatten_network_with, gen_const_mult,
    gen_generic_mult, verify_netlist, FlattenOptions, VerifyOptions,
};
use nnlogic::timing::{explore_stages, insert_pipeline_stages, retime, sta_min_period, TimingModel};
use nnlogic::train::{
    planted_teacher, profile_adder_widths, train_hat, train_qat, width_at_quantile,
    PlantedTeacherSpec, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

/// The model fleet shared by several criteria: 20 random architectures up
/// to 32-64-32-8, the largest last.
fn fleet() -> Vec<QuantizedMLP> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let bounds = [32usize, 64, 32, 8];
    let mut models: Vec<QuantizedMLP> = (0..19)
        .map(|_| {
            let layers = rng.gen_range(1..=3);
            let mut arch = vec![rng.gen_range(1..=bounds[0])];
            for l in 1..=layers {
                let cap = if l == layers { bounds[3] } else { bounds[l] };
                arch.push(rng.gen_range(1..=cap));
            }
            random_model(&arch, &mut rng)
        })
        .collect();
    models.push(random_model(&bounds, &mut rng));
    models
}

#[test]
fn criterion_01_bit_exact_equivalence() {
    let start = Instant::now();
    let mut checked = 0;
    let mut failures = Vec::new();
    for (i, m) in fleet().iter().enumerate() {
        let n = flatten_network(m).unwrap();
        let opts = VerifyOptions {
            trials: 10_000,
            seed: i as u64,
            ..Default::default()
        };
        match verify_netlist(&n, m, &opts).unwrap() {
            Verdict::Equivalent { compared } if compared >= 10_000 => checked += 1,
            v => failures.push(format!("{:?}: {v:?}", m.arch())),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        failures.is_empty() && checked >= 20 && secs < 300.0,
        format!("{checked} architectures bit-exact over 10^4 vectors each in {secs:.1}s {failures:?}"),
    );
}

#[test]
fn criterion_02_profiling_example() {
    // one neuron computing 127*a + b reaches every value in [-16384, 16256]
    let layer = QLayer {
        weights: vec![vec![127, 1]],
        acc_widths: vec![15],
        requant: RequantSpec::Shared(RequantParams::IDENTITY),
        activation: Activation::None,
        bias: None,
    };
    let model = QuantizedMLP::new("probe", vec![layer]).unwrap();
    let encode = |v: i64| -> Vec<i8> {
        let a = (v as f64 / 127.0).round() as i64;
        vec![a as i8, (v - 127 * a) as i8]
    };
    let mut values: Vec<i64> = (0..1499).map(|i| -8192 + (i * 16383) / 1498).collect();
    values.push(-8256);
    let samples = values
        .iter()
        .map(|&v| Sample {
            input: encode(v),
            target: 0.0,
            split: Split::Train,
        })
        .collect();
    let data = Dataset::new(samples, 1.0 / 128.0).unwrap();
    let at = |q: f64| {
        let mut m = model.clone();
        profile_adder_widths(&mut m, &data, q).unwrap()[0][0]
    };
    let (trimmed, full) = (at(0.999), at(1.0));
    let direct = (width_at_quantile(&values, 0.999).unwrap(), width_at_quantile(&values, 1.0).unwrap());
    report(
        2,
        trimmed == 14 && full == 15 && direct == (14, 15),
        format!("outlier excluded: {trimmed} bits, quantile 1.0: {full} bits"),
    );
}

#[test]
fn criterion_03_retiming_worked_example() {
    let t = TimingModel::default();
    let mut n = Netlist::new();
    let x = n.add_input("x", 1);
    n.set_stage(Some(0));
    let mut s = x[0];
    for i in 0..9 {
        s = n.add_cell(if i % 2 == 0 { CellKind::Inv } else { CellKind::Buf }, &[s]);
    }
    let q = n.add_flop(s);
    n.add_output("y", vec![q]);
    n.set_latency(1);
    let staged = insert_pipeline_stages(&n, 2).unwrap();
    let before = sta_min_period(&staged, &t).unwrap().period;
    let r = retime(&staged, &t).unwrap();
    let cut = 100.0 * (before - r.period) as f64 / before as f64;
    let same = check_equiv(
        &staged,
        &r.netlist,
        &EquivOptions {
            warmup: 3,
            ..Default::default()
        },
    )
    .unwrap()
    .is_equivalent();
    report(
        3,
        before == 13 && r.period == 7 && same,
        format!("period {before} -> {} ({cut:.2}% reduction)", r.period),
    );
}

#[test]
fn criterion_04_constant_multiplier_simplification() {
    let start = Instant::now();
    let cost = CostModel::default();
    let generic = estimate_area(&simplify(&gen_generic_mult(8, 8)), &cost);
    let mut worst = Vec::new();
    let mut reduction = 0.0;
    let mut wrong = 0usize;
    for w in -128i64..=127 {
        let m = gen_const_mult(w, 8);
        let area = estimate_area(&m, &cost);
        if area >= generic {
            worst.push(w);
        }
        reduction += 1.0 - area as f64 / generic as f64;
        let stream: Vec<Vec<u64>> = (0..256u64).map(|x| vec![x]).collect();
        let out = simulate(&m, &stream).unwrap();
        let width = m.outputs()[0].width();
        for (x, o) in out.iter().enumerate() {
            let xs = to_signed(x as u64, 8);
            if to_signed(o[0], width) != w * xs {
                wrong += 1;
            }
        }
    }
    let mean = 100.0 * reduction / 256.0;
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        worst.is_empty() && mean >= 40.0 && wrong == 0 && secs < 120.0,
        format!(
            "generic area {generic}, mean reduction {mean:.1}%, weights not smaller {worst:?}, \
             {wrong} wrong products of 65536 in {secs:.1}s"
        ),
    );
}

/// Ranks with ties averaged.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn criterion_05_weight_area_ordering() {
    let table = rank_weight_areas(&CostModel::default());
    let areas: Vec<f64> = (-128i64..=127).map(|w| table.area(w as i8) as f64).collect();
    let digits: Vec<f64> = (-128i64..=127).map(|w| csd_weight(w) as f64).collect();
    let rho = spearman(&areas, &digits);
    let (a16, a107, a0) = (table.area(-16), table.area(107), table.area(0));
    report(
        5,
        a16 < a107 && a0 == 0 && rho > 0.8,
        format!("area(-16) = {a16}, area(107) = {a107}, area(0) = {a0}, spearman {rho:.3}"),
    );
}

/// Retiming graph built straight from the netlist: vertex 0 is the input
/// side of the environment, vertex 1 its output side, cell `i` is `i + 2`.
struct RetimeGraph {
    delay: Vec<i64>,
    edges: Vec<(usize, usize, i64)>,
}

fn retime_graph(n: &Netlist, t: &TimingModel) -> RetimeGraph {
    let drivers = n.drivers();
    let trace = |mut net: NetId| -> Option<(usize, i64)> {
        let mut w = 0;
        loop {
            match drivers[net.index()] {
                Driver::Flop(f) => {
                    w += 1;
                    net = n.flops()[f].d;
                }
                Driver::Cell(i) => return Some((i + 2, w)),
                Driver::Input { .. } => return Some((0, w)),
                _ => return None,
            }
        }
    };
    let mut g = RetimeGraph {
        delay: [0, 0]
            .into_iter()
            .chain(n.cells().iter().map(|c| t.delay.get(c.kind) as i64))
            .collect(),
        edges: Vec::new(),
    };
    for (i, c) in n.cells().iter().enumerate() {
        for &x in &c.inputs {
            if let Some((u, w)) = trace(x) {
                g.edges.push((u, i + 2, w));
            }
        }
    }
    for b in n.outputs() {
        for &x in &b.nets {
            if let Some((u, w)) = trace(x) {
                g.edges.push((u, 1, w));
            }
        }
    }
    g
}

/// Minimum period by the W/D method: all-pairs register counts and
/// delays, then Bellman-Ford over the difference constraints for every
/// candidate period.
fn optimal_period(g: &RetimeGraph, t: &TimingModel) -> i64 {
    let v = g.delay.len();
    const INF: i64 = i64::MAX / 4;
    // lexicographic shortest paths on (w, -d(u)) give W and D
    let mut wm = vec![vec![INF; v]; v];
    let mut dm = vec![vec![i64::MIN; v]; v];
    for x in 0..v {
        wm[x][x] = 0;
        dm[x][x] = g.delay[x];
    }
    for &(a, b, w) in &g.edges {
        let d = g.delay[a] + g.delay[b];
        if w < wm[a][b] || (w == wm[a][b] && d > dm[a][b]) {
            wm[a][b] = w;
            dm[a][b] = d;
        }
    }
    for k in 0..v {
        for i in 0..v {
            if wm[i][k] == INF {
                continue;
            }
            for j in 0..v {
                if wm[k][j] == INF || i == k || k == j {
                    continue;
                }
                let w = wm[i][k] + wm[k][j];
                let d = dm[i][k] + dm[k][j] - g.delay[k];
                if w < wm[i][j] || (w == wm[i][j] && d > dm[i][j]) {
                    wm[i][j] = w;
                    dm[i][j] = d;
                }
            }
        }
    }
    let mut candidates: Vec<i64> = dm.iter().flatten().copied().filter(|&d| d >= 0).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let feasible = |c: i64| -> bool {
        // r(b) - r(a) >= -w, i.e. edge a <- b of length w in the constraint graph
        let mut cons: Vec<(usize, usize, i64)> = Vec::new();
        for &(a, b, w) in &g.edges {
            cons.push((b, a, w));
        }
        for i in 0..v {
            for j in 0..v {
                if wm[i][j] < INF && dm[i][j] > c {
                    cons.push((j, i, wm[i][j] - 1));
                }
            }
        }
        cons.push((0, 1, 0));
        cons.push((1, 0, 0));
        // x_a <= x_b + len for every (b, a, len); start all at 0
        let mut x = vec![0i64; v];
        for _ in 0..=v {
            let mut changed = false;
            for &(b, a, len) in &cons {
                if x[b] + len < x[a] {
                    x[a] = x[b] + len;
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
        }
        false
    };
    let best = candidates
        .into_iter()
        .find(|&c| feasible(c))
        .expect("the current placement is feasible");
    best + (t.clk_to_q + t.setup) as i64
}

#[test]
fn criterion_06_retiming_soundness_and_optimality() {
    let t = TimingModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut problems = Vec::new();
    let mut optimal = 0;
    let mut improved = 0;
    for i in 0..100 {
        let spec = RandomNetlistSpec {
            input_buses: rng.gen_range(1..=3),
            max_bus_width: 4,
            cells: rng.gen_range(5..=200),
            output_bits: rng.gen_range(1..=8),
            flop_prob: rng.gen_range(0.05..0.4),
            const_prob: 0.03,
            feedback: false,
        };
        let n = random_netlist(&spec, &mut rng);
        let original = sta_min_period(&n, &t).unwrap().period;
        let r = retime(&n, &t).unwrap();
        let opts = EquivOptions {
            warmup: n.flops().len() + 2,
            seed: i,
            ..Default::default()
        };
        if !check_equiv(&n, &r.netlist, &opts).unwrap().is_equivalent() {
            problems.push(format!("netlist {i}: not equivalent"));
        }
        if r.period > original || r.netlist.latency() != n.latency() {
            problems.push(format!("netlist {i}: period {original} -> {}", r.period));
        }
        let best = optimal_period(&retime_graph(&n, &t), &t);
        if r.period as i64 == best {
            optimal += 1;
        } else {
            problems.push(format!("netlist {i}: period {} but optimum {best}", r.period));
        }
        improved += (r.period < original) as usize;
    }
    let mut models = 0;
    for m in fleet().iter().take(8) {
        let staged = insert_pipeline_stages(&flatten_network(m).unwrap(), 1).unwrap();
        let before = sta_min_period(&staged, &t).unwrap().period;
        let r = retime(&staged, &t).unwrap();
        let opts = EquivOptions {
            warmup: 2 * staged.latency() as usize + 2,
            ..Default::default()
        };
        if r.period > before || !check_equiv(&staged, &r.netlist, &opts).unwrap().is_equivalent() {
            problems.push(format!("model {:?}: period {before} -> {}", m.arch(), r.period));
        }
        models += 1;
    }
    report(
        6,
        problems.is_empty(),
        format!(
            "100 random netlists ({improved} improved, {optimal} at the W/D optimum) and \
             {models} compiled models equivalent {problems:?}"
        ),
    );
}

#[test]
fn criterion_07_stage_exploration_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = random_model(&[6, 6, 6, 6, 3], &mut rng);
    let n = flatten_network(&m).unwrap();
    assert!(n.flops().iter().any(|f| f.stage == Some(3)), "every layer keeps its registers");
    let rows = explore_stages(&n, &TimingModel::default(), 40).unwrap();
    let periods: Vec<u32> = rows.iter().map(|r| r.period).collect();
    let monotone = periods.windows(2).all(|w| w[1] <= w[0]);
    let k = periods.len();
    let saturated = periods[k - 1] == periods[k - 2];
    report(
        7,
        monotone && saturated,
        format!("periods {periods:?}"),
    );
}

fn planted_runs() -> (QuantizedMLP, QuantizedMLP, nnlogic::train::HatOutcome) {
    let (data, _) = planted_teacher(&PlantedTeacherSpec::default());
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 0.01,
        ..Default::default()
    };
    let qat = train_qat(&data, &[8, 16, 4], &cfg).unwrap();
    let table = rank_weight_areas(&CostModel::default());
    let hat = train_hat(&qat.latent, &data, &table, &cfg).unwrap();
    (qat.model, hat.model.clone(), hat)
}

#[test]
fn criterion_08_hardware_aware_training() {
    let start = Instant::now();
    let (qat, hat_model, hat) = planted_runs();
    let s = &hat.state;
    let metric = *s.history.last().unwrap();
    let in_set = hat_model
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().flatten())
        .all(|&w| s.set.contains(w));
    let cost = CostModel::default();
    let qat_area = estimate_area(&flatten_network(&qat).unwrap(), &cost);
    let hat_area = estimate_area(&flatten_network(&hat_model).unwrap(), &cost);
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        s.set.len() == 40 && metric >= s.baseline - 0.01 && in_set && hat_area < qat_area && secs < 600.0,
        format!(
            "|set| = {}, validation {metric:.4} vs baseline {:.4}, area {hat_area} vs {qat_area}, {secs:.1}s",
            s.set.len(),
            s.baseline
        ),
    );
}

#[test]
fn criterion_09_simplification_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fleet_netlists: Vec<Netlist> = fleet()
        .iter()
        .take(10)
        .map(|m| flatten_network_with(m, &FlattenOptions { simplify: false }).unwrap().0)
        .collect();
    for i in 0..40 {
        let spec = RandomNetlistSpec {
            cells: rng.gen_range(5..=150),
            feedback: i % 2 == 1,
            const_prob: 0.1,
            ..Default::default()
        };
        fleet_netlists.push(random_netlist(&spec, &mut rng));
    }
    let mut problems = Vec::new();
    for (i, n) in fleet_netlists.iter().enumerate() {
        let s = simplify(n);
        if !check_equiv(n, &s, &EquivOptions { seed: i as u64, ..Default::default() })
            .unwrap()
            .is_equivalent()
        {
            problems.push(format!("{i}: not equivalent"));
        }
        if simplify(&s) != s {
            problems.push(format!("{i}: not idempotent"));
        }
        if s.cells().len() > n.cells().len() {
            problems.push(format!("{i}: {} -> {} cells", n.cells().len(), s.cells().len()));
        }
    }
    report(
        9,
        problems.is_empty(),
        format!("{} netlists equivalent, idempotent, never larger {problems:?}", fleet_netlists.len()),
    );
}

#[test]
fn criterion_10_power_direction() {
    let cost = CostModel::default();
    let power = |n: &Netlist| {
        estimate_power_random(n, &cost, 300, 4, 10).unwrap().total
    };
    let mut problems = Vec::new();
    let mut ratios = Vec::new();
    for m in fleet() {
        let (base, emb) = (power(&flatten_baseline(&m).unwrap()), power(&flatten_network(&m).unwrap()));
        ratios.push(emb / base);
        if emb >= base {
            problems.push(format!("{:?}: embedded {emb:.0} >= baseline {base:.0}", m.arch()));
        }
    }
    let (qat, hat, _) = planted_runs();
    let (pq, ph) = (power(&flatten_network(&qat).unwrap()), power(&flatten_network(&hat).unwrap()));
    if ph > pq {
        problems.push(format!("planted task: hat {ph:.0} > embedded {pq:.0}"));
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    report(
        10,
        problems.is_empty(),
        format!(
            "embedded/baseline power at most {worst:.3} over {} models; planted task hat {ph:.0} vs embedded {pq:.0} {problems:?}",
            ratios.len()
        ),
    );
}
