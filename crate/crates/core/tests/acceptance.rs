//! Acceptance criteria AC1–AC8. One PASS/FAIL line per criterion; nonzero exit on any failure.
//! `cargo test --test acceptance -- AC5` runs a subset.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;
use std::time::{Duration, Instant};

use nclass::alcla::{
    self, decoder_term_count, parameter_bound, AlClaConfig, AlClaParams, DecisionRule,
    DecoderBasis, MomentTensors, Schedule,
};
use nclass::baselines::{accuracy_report, lambda_sweep, moment_features, svm_fit, TradeoffCurve};
use nclass::dataset::{plan, preset, simulate, witness_reports, Dataset};
use nclass::detectors::{click_distribution_from, respond, sample, SampleSet};
use nclass::fockstats::{
    moments, photon_distribution, photon_distribution_auto, poisson_pmf, Label, MomentVector, StateSpec,
};
use nclass::interferometer::{
    coherent_shortcut, decompose, evolve, output_distribution, MeshElement, MeshPlan, MultimodeState, UnitarySpec,
};
use nclass::witnesses::{
    evaluate_empirical, evaluate_exact, generalized_klyshko_pnr, klyshko, mandel_q, q3_pnr, qb, qb3, sweep_bias,
    IndexKind, WitnessContext, WitnessKind, WitnessReport,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT_TOL: f64 = 1e-9;
const PSD_FLOOR: f64 = -1e-8;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_H: f64 = 1e-5;
const GRAD_DRAWS: usize = 100;
const MESH_TOL: f64 = 1e-10;
const HOM_TOL: f64 = 1e-12;
const SHORTCUT_TV_TOL: f64 = 1e-9;
const SEEDS: u64 = 5;
const TABLE_M: usize = 1000;
const LARGE_LAMBDA: f64 = 12.8;
const L3_CLASSICAL_MIN: f64 = 0.96;
const L2_NONCLASSICAL_MAX: f64 = 0.80;
const DOMINANCE_SLACK: f64 = 0.05;
const MATCHED_CLASSICAL: [f64; 3] = [0.70, 0.75, 0.80];
const SVM_BAND: (f64, f64) = (0.70, 0.90);
const SVM_SLACK: f64 = 0.02;
const LAMBDA_K_GRID: [f64; 4] = [0.0, 1.0, 10.0, 100.0];
const LAMBDA_K_STABLE: f64 = 0.05;
const CONVERGENCE_SIGMAS: f64 = 6.0;
const CONVERGENCE_M: usize = 100_000;
const CLICK_M: usize = 1_000_000;
const CLICK_TV_TOL: f64 = 5e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> nclass::Result<Verdict>;

fn verdict(failures: Vec<String>, ok: String) -> Verdict {
    if failures.is_empty() {
        Verdict { pass: true, detail: ok }
    } else {
        Verdict { pass: false, detail: failures.join("; ") }
    }
}

fn main() {
    let criteria: [(&str, &str, u64, Check); 8] = [
        ("AC1", "analytic witness equalities", 5, ac1),
        ("AC2", "gradient vs finite differences", 30, ac2),
        ("AC3", "decoder combinatorics", 5, ac3),
        ("AC4", "interferometer", 60, ac4),
        ("AC5", "table1 experiment", 600, ac5),
        ("AC6", "table2 experiment", 600, ac6),
        ("AC7", "table4 experiment", 1800, ac7),
        ("AC8", "statistical convergence", 600, ac8),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, budget, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = check();
        let elapsed = t0.elapsed();
        let v = match result {
            Ok(mut v) => {
                if elapsed > Duration::from_secs(budget) {
                    v.pass = false;
                    v.detail = format!("over runtime budget; {}", v.detail);
                }
                v
            }
            Err(e) => Verdict { pass: false, detail: format!("error: {e}") },
        };
        if !v.pass {
            failed += 1;
        }
        println!(
            "{id} {} {title} [{:.1}s / {budget}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- AC1

fn ac1() -> nclass::Result<Verdict> {
    let mut fails = Vec::new();
    let mut check = |what: &str, got: f64, want: f64| {
        if !((got - want).abs() <= EXACT_TOL) {
            fails.push(format!("{what}: {got} vs {want}"));
        }
    };
    let mom = |spec: StateSpec| -> nclass::Result<MomentVector> { moments(&photon_distribution(&spec, 120)?, 3) };
    for alpha in [0.3, 1.0, 2.0, 3.5] {
        let m = mom(StateSpec::Coherent { alpha })?;
        check(&format!("Q coherent α={alpha}"), mandel_q(&m)?.value, 0.0);
        check(&format!("Q3 coherent α={alpha}"), q3_pnr(&m)?.value, 0.0);
    }
    for n in 1..=5 {
        check(&format!("Q Fock {n}"), mandel_q(&MomentVector::fock(n, 3))?.value, -1.0);
    }
    for nbar in [0.2, 0.7, 1.5] {
        check(&format!("Q thermal {nbar}"), mandel_q(&mom(StateSpec::Thermal { nbar })?)?.value, nbar);
    }
    for mu in [0.5, 2.0, 6.0] {
        let p: Vec<f64> = (0..=40).map(|m| poisson_pmf(mu, m)).collect();
        for k in 1..p.len() - 1 {
            check(&format!("Klyshko Poisson μ={mu} k={k}"), klyshko(&p, k)?.value, 1.0);
        }
    }
    for alpha in [0.2, 1.0, 2.5, 5.0] {
        let c = click_distribution_from(&StateSpec::Coherent { alpha }, 8, 1.0, 0.0)?.raw_moments(3);
        check(&format!("Q_B coherent α={alpha}"), qb(&c, 8)?.value, 0.0);
        check(&format!("Q_B3 coherent α={alpha}"), qb3(&c, 8)?.value, 0.0);
    }
    let min_eig = |p: &[f64], kind| -> nclass::Result<f64> { Ok(generalized_klyshko_pnr(p, kind)?.1.value) };
    let classical = [
        StateSpec::Coherent { alpha: 0.8 },
        StateSpec::Coherent { alpha: 1.7 },
        StateSpec::Thermal { nbar: 0.5 },
        StateSpec::Thermal { nbar: 1.2 },
        StateSpec::MixedCoherent { alpha1: 1.5, alpha2: 0.75 },
    ];
    for spec in classical {
        let p = photon_distribution(&spec, 20)?.probs;
        for kind in [IndexKind::Integer, IndexKind::HalfInteger] {
            let e = min_eig(&p, kind)?;
            if e < PSD_FLOOR {
                fails.push(format!("{spec:?} {kind:?} min eig {e:e}"));
            }
        }
    }
    for r in [0.3, 0.6, 1.0] {
        let p = photon_distribution(&StateSpec::SqueezedVacuum { r }, 20)?.probs;
        let e = min_eig(&p, IndexKind::HalfInteger)?;
        if !(e < 0.0) {
            fails.push(format!("squeezed r={r} half-integer min eig {e:e}"));
        }
    }
    for n in 1..=5usize {
        let mut p = vec![0.0; n + 4];
        p[n] = 1.0;
        let e = min_eig(&p, IndexKind::Integer)?.min(min_eig(&p, IndexKind::HalfInteger)?);
        if !(e < 0.0) {
            fails.push(format!("Fock {n} min eig {e:e}"));
        }
    }
    Ok(verdict(fails, format!("all equalities within {EXACT_TOL:e}, PSD floor {PSD_FLOOR:e}")))
}

// ---------------------------------------------------------------- AC2

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn ac2() -> nclass::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 3];
    let mut draws = 0;
    while draws < GRAD_DRAWS {
        let d = rng.random_range(1..=3usize);
        let l = rng.random_range(1..=3usize);
        let cfg = AlClaConfig {
            lambda: rng.random_range(0.0..2.0),
            lambda_k: if l > 1 { rng.random_range(0.0..1.0) } else { 0.0 },
            ..AlClaConfig::new(d, l)
        };
        let basis = DecoderBasis::new(d, l);
        let mut p = AlClaParams::zeros(d, l);
        p.k.iter_mut().flatten().for_each(|v| *v = rng.random_range(-0.8..0.8));
        p.theta.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        p.theta_amplify = rng.random_range(1.0..3.0);
        let n_states = rng.random_range(2..6);
        let tensors: Vec<MomentTensors> = (0..n_states)
            .map(|i| {
                let rows: Vec<Vec<u32>> =
                    (0..rng.random_range(3..12)).map(|_| (0..d).map(|_| rng.random_range(0..4)).collect()).collect();
                let label = if i % 2 == 0 { Label::Classical } else { Label::Nonclassical };
                MomentTensors::from_samples(&SampleSet::from_rows(&rows, label)?, l, true)
            })
            .collect::<nclass::Result<_>>()?;
        let refs: Vec<&MomentTensors> = tensors.iter().collect();
        // keep y inside the clamp range and away from |ỹ − y| kinks
        let inside = refs.iter().all(|t| {
            let y = alcla::forward_tensors(t, &p, &basis).y;
            (1e-6..1.0 - 1e-6).contains(&y)
        });
        let near_zero_k = p.k.iter().flatten().any(|v| v.abs() < 10.0 * GRAD_H);
        if !inside || near_zero_k {
            continue;
        }
        draws += 1;
        let (_, g) = alcla::loss_and_gradient(&refs, &p, &basis, &cfg);
        let flat = p.flatten();
        let f = |x: &[f64]| {
            let mut q = p.clone();
            q.assign(x);
            alcla::loss_and_gradient(&refs, &q, &basis, &cfg).0
        };
        let numeric: Vec<f64> = (0..flat.len())
            .map(|i| {
                let mut a = flat.clone();
                let mut b = flat.clone();
                a[i] += GRAD_H;
                b[i] -= GRAD_H;
                (f(&a) - f(&b)) / (2.0 * GRAD_H)
            })
            .collect();
        let analytic = g.flatten();
        let nk = p.k.iter().map(Vec::len).sum::<usize>();
        let nt = p.theta.len();
        let parts = [(0, nk), (nk, nk + nt), (nk + nt, flat.len())];
        for (w, (lo, hi)) in worst.iter_mut().zip(parts) {
            if hi > lo {
                *w = w.max(rel_err(&analytic[lo..hi], &numeric[lo..hi]));
            }
        }
    }
    let fails = ["K", "theta", "theta_amplify"]
        .iter()
        .zip(worst)
        .filter(|(_, w)| !(*w < GRAD_REL_TOL))
        .map(|(n, w)| format!("{n} relative error {w:e}"))
        .collect();
    Ok(verdict(
        fails,
        format!(
            "{GRAD_DRAWS} draws; worst relative error K {:.1e}, theta {:.1e}, theta_amplify {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    ))
}

// ---------------------------------------------------------------- AC3

/// Exponent vectors over (mode, order) variables with Σ e·order ≤ L and 1..=3 nonzero entries.
fn enumerate_terms(d: usize, l: usize) -> usize {
    let vars: Vec<usize> = (0..d).flat_map(|_| 1..=l).collect();
    fn go(vars: &[usize], i: usize, budget: usize, used: usize) -> usize {
        if i == vars.len() {
            return usize::from(used >= 1);
        }
        let mut n = go(vars, i + 1, budget, used);
        if used < 3 {
            let mut e = 1;
            while e * vars[i] <= budget {
                n += go(vars, i + 1, budget - e * vars[i], used + 1);
                e += 1;
            }
        }
        n
    }
    go(&vars, 0, l, 0) + 1
}

fn ac3() -> nclass::Result<Verdict> {
    let mut fails = Vec::new();
    let b = DecoderBasis::new(1, 3);
    let got: BTreeSet<Vec<(usize, u32)>> =
        b.terms.iter().map(|t| t.factors.iter().map(|(v, j)| (v.order, *j)).collect()).collect();
    let want: BTreeSet<Vec<(usize, u32)>> =
        [vec![(1, 1)], vec![(1, 2)], vec![(1, 3)], vec![(2, 1)], vec![(3, 1)], vec![(1, 1), (2, 1)], vec![]]
            .into_iter()
            .collect();
    if decoder_term_count(1, 3) != 7 || got != want {
        fails.push(format!("d_x=1, L=3 basis {got:?}"));
    }
    let mut above = Vec::new();
    for d in 1..=6 {
        for l in 1..=4 {
            let (count, oracle) = (decoder_term_count(d, l), enumerate_terms(d, l));
            if count != oracle {
                fails.push(format!("count({d},{l}) = {count}, oracle {oracle}"));
            }
            // the bound formula is inapplicable for L = 1
            if l >= 2 && count as f64 >= parameter_bound(d, l) {
                above.push(format!("({d},{l}): {count} ≥ {:.3}", parameter_bound(d, l)));
            }
        }
    }
    if !above.is_empty() {
        fails.push(format!("bound violated at {}", above.join(", ")));
    }
    Ok(verdict(fails, "d_x=1, L=3 has 7 terms; enumeration oracle matches; bound holds for L ≥ 2".into()))
}

// ---------------------------------------------------------------- AC4

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

fn ac4() -> nclass::Result<Verdict> {
    let mut fails = Vec::new();
    let mut worst = 0.0f64;
    let mut unitaries = vec![UnitarySpec::dataset_unitary()];
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for i in 0..20 {
        unitaries.push(UnitarySpec::from_real(&random_orthogonal(&mut rng, 2 + i % 6))?);
    }
    for u in &unitaries {
        let err = decompose(u)?.reconstruct().max_abs_diff(u.matrix());
        worst = worst.max(err);
    }
    if !(worst < MESH_TOL) {
        fails.push(format!("reconstruction error {worst:e}"));
    }
    let bs = MeshPlan {
        d: 2,
        elements: vec![MeshElement::BeamSplitter { mode_a: 0, mode_b: 1, theta: FRAC_PI_4, phi: 0.0 }],
    };
    let hom = output_distribution(&evolve(&MultimodeState::fock_product(&[1, 1]), &bs)?).probability(&[1, 1]);
    if !(hom < HOM_TOL) {
        fails.push(format!("HOM P(1,1) = {hom:e}"));
    }
    let u = UnitarySpec::dataset_unitary();
    let alphas: Vec<Complex64> =
        [0.4, 0.0, 0.3, 0.5, 0.0, 0.2].iter().enumerate().map(|(i, &a)| Complex64::from_polar(a, 0.3 * i as f64)).collect();
    let n_max = 8;
    let fock = output_distribution(&evolve(&MultimodeState::coherent_product(&alphas, n_max), &decompose(&u)?)?);
    let tv = fock.total_variation(&coherent_shortcut(&alphas, &u)?.joint(n_max));
    if !(tv < SHORTCUT_TV_TOL) {
        fails.push(format!("coherent shortcut TV {tv:e}"));
    }
    Ok(verdict(
        fails,
        format!("21 unitaries, worst reconstruction {worst:.1e}; HOM {hom:.1e}; shortcut TV {tv:.1e}"),
    ))
}

// ---------------------------------------------------------------- AC5

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn table_sets(name: &str, seed: u64) -> nclass::Result<(Dataset, Vec<SampleSet>)> {
    let d = simulate(&preset(name, TABLE_M, seed)?)?;
    let s = d.sample_sets()?;
    Ok((d, s))
}

fn ac5() -> nclass::Result<Verdict> {
    let (_, sets) = table_sets("table1", 1)?;
    let mut fails = Vec::new();
    let (n2, n1sq, n1, one) = (vec![vec![0, 0]], vec![vec![0], vec![0]], vec![vec![0]], vec![]);
    let mut sign_hits = 0;
    let mut patterns = Vec::new();
    let mut large = Vec::new();
    let mut l3 = Vec::new();
    let mut l2_ncl_max = 0.0f64;
    for seed in 0..SEEDS {
        let cfg = AlClaConfig { seed, schedule: Schedule::BestEpoch, ..AlClaConfig::new(1, 2) };
        let (curve, runs) = lambda_sweep(&sets, &cfg, &[0.0, 0.8, LARGE_LAMBDA])?;
        let rule = DecisionRule::extract(&runs[1].params, &runs[1].basis);
        let c = [&n2, &n1sq, &n1, &one].map(|p| rule.coefficient(p));
        if c[0] > 0.0 && c[1] < 0.0 && c[2] < 0.0 && c[3] < 0.0 {
            sign_hits += 1;
        }
        patterns.push(c.iter().map(|v| if *v > 0.0 { '+' } else { '-' }).collect::<String>());
        large.push(curve.points[2].acc_classical);
        l2_ncl_max = curve.points.iter().fold(l2_ncl_max, |m, p| m.max(p.acc_nonclassical));
        let cfg3 = AlClaConfig { seed, schedule: Schedule::BestEpoch, ..AlClaConfig::new(1, 3) };
        l3.push(lambda_sweep(&sets, &cfg3, &[0.0])?.0.points[0].acc_classical);
    }
    if sign_hits < 3 {
        fails.push(format!("λ=0.8 Mandel sign structure in {sign_hits}/{SEEDS} seeds (patterns {})", patterns.join(" ")));
    }
    let large_med = median(large);
    if large_med < 1.0 {
        fails.push(format!("λ={LARGE_LAMBDA} median classical accuracy {large_med:.3}"));
    }
    let l3_med = median(l3.clone());
    if l3_med < L3_CLASSICAL_MIN {
        fails.push(format!("L=3 λ=0 median classical accuracy {l3_med:.3} (per seed {l3:.2?})"));
    }
    if l2_ncl_max > L2_NONCLASSICAL_MAX {
        fails.push(format!("L=2 nonclassical accuracy reached {l2_ncl_max:.3}"));
    }
    Ok(verdict(
        fails,
        format!(
            "sign structure {sign_hits}/{SEEDS}; λ={LARGE_LAMBDA} classical {large_med:.2}; L=3 classical {l3_med:.2}; L=2 ncl max {l2_ncl_max:.2}"
        ),
    ))
}

// ---------------------------------------------------------------- AC6

/// Every distinct operating point of a bias sweep.
fn exact_biases(reports: &[(WitnessReport, Label)]) -> Vec<f64> {
    let mut b: Vec<f64> =
        reports.iter().filter(|r| r.0.applicable).map(|(r, _)| r.threshold - r.margin - r.value).collect();
    let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
    b.push(lo - 1.0);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn ac6() -> nclass::Result<Verdict> {
    let config = preset("table2", TABLE_M, 2)?;
    let data = simulate(&config)?;
    let sets = data.sample_sets()?;
    let det = config.detector.clone();
    let mut fails = Vec::new();
    let q = witness_reports(&data, &det, WitnessKind::MandelQ)?;
    let bright_missed = q
        .iter()
        .zip(&data.records)
        .filter(|((r, l), rec)| *l == Label::Classical && rec.family == "coherent" && r.is_nonclassical())
        .count();
    if bright_missed == 0 {
        fails.push("Mandel Q at bias 0 flags no coherent state".into());
    }
    let mut witness_curves: Vec<TradeoffCurve> = Vec::new();
    for w in [WitnessKind::MandelQ, WitnessKind::Q3] {
        let r = witness_reports(&data, &det, w)?;
        witness_curves.push(sweep_bias(w.name(), &r, &exact_biases(&r))?);
    }
    let mut pooled = TradeoffCurve { method: "alcla_L3".into(), points: Vec::new() };
    for seed in 0..3 {
        let cfg = AlClaConfig { seed, ..AlClaConfig::new(1, 3) };
        pooled.points.extend(lambda_sweep(&sets, &cfg, &nclass::baselines::DEFAULT_LAMBDA_GRID)?.0.points);
    }
    let mut shown = Vec::new();
    for t in MATCHED_CLASSICAL {
        let a = pooled.best_nonclassical_at(t);
        for c in &witness_curves {
            let w = c.best_nonclassical_at(t).unwrap_or(0.0);
            match a {
                Some(a) if a + DOMINANCE_SLACK >= w => {}
                _ => fails.push(format!("at classical ≥ {t}: alcla {a:?} vs {} {w:.3}", c.method)),
            }
            shown.push(format!("{t}: {:.2} vs {} {w:.2}", a.unwrap_or(f64::NAN), c.method));
        }
    }
    Ok(verdict(fails, format!("{bright_missed} coherent states flagged at bias 0; {}", shown.join(", "))))
}

// ---------------------------------------------------------------- AC7

fn ac7() -> nclass::Result<Verdict> {
    let (data, sets) = table_sets("table4", 4)?;
    let labels = data.labels()?;
    let mut fails = Vec::new();
    let feats: Vec<Vec<f64>> = sets.iter().map(moment_features).collect();
    let cfg = AlClaConfig::new(6, 2);
    let (train_idx, _) = alcla::train::stratified_split(&labels, cfg.train_fraction, cfg.seed);
    let svm = svm_fit(
        &train_idx.iter().map(|&i| feats[i].clone()).collect::<Vec<_>>(),
        &train_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        1.0,
    )?;
    let svm_total = accuracy_report(&feats.iter().map(|f| svm.predict(f)).collect::<Vec<_>>(), &labels)?.total;
    if !(SVM_BAND.0..=SVM_BAND.1).contains(&svm_total) {
        fails.push(format!("SVM total accuracy {svm_total:.3}"));
    }
    let mut best = 0.0f64;
    for seed in 0..3 {
        let c = AlClaConfig { seed, ..cfg.clone() };
        best = best.max(lambda_sweep(&sets, &c, &[0.0])?.0.points[0].total);
    }
    if best < svm_total - SVM_SLACK {
        fails.push(format!("AlCla best total {best:.3} below SVM {svm_total:.3}"));
    }
    let per_k: Vec<(f64, f64)> = LAMBDA_K_GRID
        .iter()
        .map(|&lk| {
            let c = AlClaConfig { lambda_k: lk, ..cfg.clone() };
            lambda_sweep(&sets, &c, &[0.0]).map(|(curve, _)| (curve.points[0].acc_classical, curve.points[0].acc_nonclassical))
        })
        .collect::<nclass::Result<_>>()?;
    let (cl0, ncl0) = per_k[0];
    let drop = per_k[1..].iter().any(|&(c, n)| c < cl0 || n < ncl0);
    if !drop {
        fails.push(format!("no per-class drop from λ_K = 0 ({per_k:.3?})"));
    }
    for i in 1..per_k.len() {
        for j in i + 1..per_k.len() {
            let (a, b) = (per_k[i], per_k[j]);
            if (a.0 - b.0).abs() > LAMBDA_K_STABLE || (a.1 - b.1).abs() > LAMBDA_K_STABLE {
                fails.push(format!("λ_K {} vs {}: {a:.3?} vs {b:.3?}", LAMBDA_K_GRID[i], LAMBDA_K_GRID[j]));
            }
        }
    }
    Ok(verdict(
        fails,
        format!("SVM total {svm_total:.3}; AlCla best of 3 {best:.3}; per-class by λ_K {per_k:.3?}"),
    ))
}

// ---------------------------------------------------------------- AC8

fn ac8() -> nclass::Result<Verdict> {
    let config = preset("table1", CONVERGENCE_M, 8)?;
    let det = config.detector.clone();
    let ctx = WitnessContext::new(1, &det);
    let mut fails = Vec::new();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for st in plan(&config) {
        let spec = st.species.single_mode(st.amplitude)?;
        let outcomes = respond(&photon_distribution_auto(&spec)?, &det)?;
        let samples = sample(&outcomes, CONVERGENCE_M, 1000 + st.state_id as u64);
        for w in [WitnessKind::MandelQ, WitnessKind::Q3] {
            let exact = evaluate_exact(w, &ctx, &outcomes.probs)?;
            let emp = evaluate_empirical(w, &ctx, &samples)?;
            let Some(se) = emp.stderr else { continue };
            if !(exact.applicable && emp.applicable) {
                continue;
            }
            compared += 1;
            let z = (emp.value - exact.value).abs() / se.max(f64::MIN_POSITIVE);
            worst = worst.max(z);
            if !(z <= CONVERGENCE_SIGMAS) {
                fails.push(format!("state {} {}: {:.3e} vs {:.3e} (se {se:.1e})", st.state_id, w.name(), emp.value, exact.value));
            }
        }
    }
    let mut tv_worst = 0.0f64;
    let specs = [
        StateSpec::Coherent { alpha: 1.0 },
        StateSpec::Thermal { nbar: 0.8 },
        StateSpec::SqueezedVacuum { r: 0.7 },
        StateSpec::Spats { nbar: 0.5 },
    ];
    for (i, spec) in specs.iter().enumerate() {
        for (eta, nu) in [(1.0, 0.0), (0.8, 0.01)] {
            let c = click_distribution_from(spec, 8, eta, nu)?;
            let s = sample(&c, CLICK_M, 77 + i as u64);
            let f = s.frequencies(0, c.len());
            let tv = 0.5 * f.iter().zip(&c.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
            tv_worst = tv_worst.max(tv);
        }
    }
    if !(tv_worst < CLICK_TV_TOL) {
        fails.push(format!("click TV {tv_worst:e}"));
    }
    Ok(verdict(
        fails,
        format!("{compared} witness comparisons, worst |z| {worst:.2}; click TV worst {tv_worst:.1e}"),
    ))
}
