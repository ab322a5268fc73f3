use loadcast::evaluator::{mae, mape, mse, tolerance_accuracy, MAPE_FLOOR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_mae(p: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - y[i]).abs();
    }
    s / p.len() as f64
}

fn naive_mse(p: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let d = p[i] - y[i];
        s += d * d;
    }
    s / p.len() as f64
}

fn naive_mape(p: &[f64], y: &[f64]) -> Option<f64> {
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..p.len() {
        if y[i].abs() >= MAPE_FLOOR {
            s += (p[i] - y[i]).abs() / y[i].abs();
            n += 1;
        }
    }
    (n > 0).then(|| 100.0 * s / n as f64)
}

fn naive_tol(p: &[f64], y: &[f64], tol: f64) -> Option<f64> {
    let mut hit = 0usize;
    let mut n = 0usize;
    for i in 0..p.len() {
        if y[i].abs() >= MAPE_FLOOR {
            n += 1;
            if (p[i] - y[i]).abs() <= tol * y[i].abs() {
                hit += 1;
            }
        }
    }
    (n > 0).then(|| 100.0 * hit as f64 / n as f64)
}

fn arrays(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=10_000);
    let y: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => rng.random_range(-1e-7..1e-7),
            _ => rng.random_range(-50.0..200.0),
        })
        .collect();
    let p = y.iter().map(|v| v + rng.random_range(-30.0..30.0) * rng.random::<f64>()).collect();
    (p, y)
}

#[test]
fn metrics_equal_naive_loops_on_random_arrays() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (p, y) = arrays(&mut rng);
        assert_eq!(mae(&p, &y).unwrap(), naive_mae(&p, &y));
        assert_eq!(mse(&p, &y).unwrap(), naive_mse(&p, &y));
        assert_eq!(mape(&p, &y).ok(), naive_mape(&p, &y));
        let mut last = -1.0;
        for tol in [0.10, 0.15, 0.20] {
            let acc = tolerance_accuracy(&p, &y, tol).ok();
            assert_eq!(acc, naive_tol(&p, &y, tol));
            let acc = acc.unwrap();
            assert!(acc >= last);
            last = acc;
        }
    }
}

#[test]
fn hand_computed_values() {
    assert_eq!(mae(&[0.0, 2.0], &[1.0, 4.0]).unwrap(), 1.5);
    assert_eq!(mse(&[0.0, 2.0], &[1.0, 4.0]).unwrap(), 2.5);
    assert!((mape(&[110.0], &[100.0]).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(tolerance_accuracy(&[105.0, 130.0], &[100.0, 100.0], 0.10).unwrap(), 50.0);
    let y = [3.0, -2.0, 7.5];
    assert_eq!(mae(&y, &y).unwrap(), 0.0);
    assert_eq!(mse(&y, &y).unwrap(), 0.0);
    assert_eq!(mape(&y, &y).unwrap(), 0.0);
    assert_eq!(tolerance_accuracy(&y, &y, 0.1).unwrap(), 100.0);
}

#[test]
fn error_cases() {
    assert!(mape(&[5.0], &[0.0]).is_err());
    assert!(tolerance_accuracy(&[5.0], &[0.0], 0.1).is_err());
    assert!(tolerance_accuracy(&[5.0], &[5.0], 0.0).is_err());
    assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    assert!(mse(&[], &[]).is_err());
}

#[test]
fn invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(1..500);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let p: Vec<f64> = y.iter().map(|v| v * rng.random_range(0.7..1.3)).collect();
        let c = 17.25;
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        assert!((mae(&shift(&p), &shift(&y)).unwrap() - mae(&p, &y).unwrap()).abs() < 1e-9);
        assert!((mse(&shift(&p), &shift(&y)).unwrap() - mse(&p, &y).unwrap()).abs() < 1e-9);
        // Scaling by a power of two is exact, so the comparisons are too.
        let k = 4.0;
        let scale = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let (ps, ys) = (scale(&p), scale(&y));
        assert_eq!(mape(&ps, &ys).unwrap(), mape(&p, &y).unwrap());
        assert_eq!(mae(&ps, &ys).unwrap(), k * mae(&p, &y).unwrap());
        assert_eq!(mse(&ps, &ys).unwrap(), k * k * mse(&p, &y).unwrap());
        for tol in [0.1, 0.15, 0.2] {
            assert_eq!(tolerance_accuracy(&ps, &ys, tol).unwrap(), tolerance_accuracy(&p, &y, tol).unwrap());
        }
        let k = 3.7;
        let (ps, ys): (Vec<f64>, Vec<f64>) = (p.iter().map(|x| x * k).collect(), y.iter().map(|x| x * k).collect());
        assert!((mape(&ps, &ys).unwrap() - mape(&p, &y).unwrap()).abs() < 1e-9);
    }
}
