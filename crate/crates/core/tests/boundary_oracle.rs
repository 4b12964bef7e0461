use pcawalk_core::boundary::fit_linear_boundary;
use pcawalk_core::rng::DetRng;
use pcawalk_core::{LatentSet, LatentVector};

/// Hard margin of the best offset for a unit normal: half the gap between the
/// classes' projections (negative when they overlap).
fn margin(points: &[(f64, f64, bool)], nx: f64, ny: f64) -> f64 {
    let mut min_pos = f64::INFINITY;
    let mut max_neg = f64::NEG_INFINITY;
    for &(x, y, label) in points {
        let p = nx * x + ny * y;
        if label {
            min_pos = min_pos.min(p);
        } else {
            max_neg = max_neg.max(p);
        }
    }
    0.5 * (min_pos - max_neg)
}

fn grid_oracle(points: &[(f64, f64, bool)]) -> (f64, f64) {
    let steps = 200_000;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..steps {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
        let (ny, nx) = theta.sin_cos();
        let m = margin(points, nx, ny);
        if m > best.0 {
            best = (m, nx, ny);
        }
    }
    (best.1, best.2)
}

#[test]
fn classes_split_by_the_x_axis() {
    let mut rng = DetRng::seed_from_u64(21);
    // Support points pin the widest gap to the x axis; the rest sit further out.
    let mut points = vec![(-5.0, 1.0, true), (5.0, 1.0, true), (-5.0, -1.0, false), (5.0, -1.0, false)];
    for _ in 0..60 {
        let x = 10.0 * rng.uniform() - 5.0;
        let y = 1.2 + 2.0 * rng.uniform();
        let label = rng.uniform() < 0.5;
        points.push((x, if label { y } else { -y }, label));
    }
    let (ox, oy) = grid_oracle(&points);
    assert!(oy >= 1.0 - 1e-6, "oracle normal ({ox}, {oy})");

    let rows = points
        .iter()
        .map(|&(x, y, _)| LatentVector::new(vec![x, y]).unwrap())
        .collect();
    let labels: Vec<bool> = points.iter().map(|p| p.2).collect();
    let fit = fit_linear_boundary(&LatentSet::new(rows, 0).unwrap(), &labels).unwrap();
    let n = fit.hyperplane.normal().as_slice();
    assert_eq!(fit.misclassified, 0);
    assert!(n[1].abs() >= 1.0 - 1e-3, "trained normal {n:?}");
    assert!(n[0] * ox + n[1] * oy >= 1.0 - 1e-3);
}
