use nclass::alcla::{AlClaConfig, Schedule};
use nclass::baselines::{lambda_sweep, DEFAULT_LAMBDA_GRID};
use nclass::dataset::{preset, simulate, witness_curve};
use nclass::witnesses::WitnessKind;

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
fn spearman_oracle() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
}

#[test]
fn classical_accuracy_rises_with_lambda() {
    let data = simulate(&preset("table1", 1000, 1).unwrap()).unwrap();
    let sets = data.sample_sets().unwrap();
    let mut per_lambda = vec![Vec::new(); DEFAULT_LAMBDA_GRID.len()];
    for seed in 0..5 {
        let cfg = AlClaConfig { seed, schedule: Schedule::BestEpoch, ..AlClaConfig::new(1, 2) };
        let (curve, _) = lambda_sweep(&sets, &cfg, &DEFAULT_LAMBDA_GRID).unwrap();
        for (v, p) in per_lambda.iter_mut().zip(&curve.points) {
            v.push(p.acc_classical);
        }
    }
    let medians: Vec<f64> = per_lambda
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    let rho = spearman(&DEFAULT_LAMBDA_GRID, &medians);
    assert!(rho >= 0.6, "spearman {rho} for medians {medians:?}");
}

#[test]
fn mandel_bias_sweep_limits() {
    let config = preset("table1", 1000, 3).unwrap();
    let data = simulate(&config).unwrap();
    let curve = witness_curve(&data, &config.detector, WitnessKind::MandelQ, &[-0.5, 0.5]).unwrap();
    let (lo, hi) = (curve.points[0], curve.points[1]);
    assert!(lo.acc_classical < 0.5 && lo.acc_nonclassical > 0.5, "{lo:?}");
    assert!(hi.acc_classical > 0.9 && hi.acc_nonclassical < 0.3, "{hi:?}");
}

#[test]
fn table2_mandel_misclassifies_bright_coherent() {
    let config = preset("table2", 1000, 2).unwrap();
    let data = simulate(&config).unwrap();
    let curve = witness_curve(&data, &config.detector, WitnessKind::MandelQ, &[0.0]).unwrap();
    assert!(curve.points[0].acc_classical < 0.9);
}
