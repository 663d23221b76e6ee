//! Shared helpers for unit tests.

use rand::Rng;

use crate::geom::{RigidTransform, Rotation, Vec3};

pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            return Rotation::from_quaternion(q[0], q[1], q[2], q[3]).unwrap();
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, half_range: f64) -> Vec3 {
    if half_range == 0.0 {
        return Vec3::ZERO;
    }
    Vec3::new(
        rng.random_range(-half_range..half_range),
        rng.random_range(-half_range..half_range),
        rng.random_range(-half_range..half_range),
    )
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_vec(rng, 1.0);
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.try_normalize().unwrap();
        }
    }
}

pub fn random_rigid(rng: &mut impl Rng, translation_range: f64) -> RigidTransform {
    RigidTransform::new(random_rotation(rng), random_vec(rng, translation_range))
}

pub fn random_points(rng: &mut impl Rng, n: usize, half_range: f64) -> Vec<Vec3> {
    (0..n).map(|_| random_vec(rng, half_range)).collect()
}

/// Plain Nelder–Mead simplex minimizer. Returns `(argmin, min)`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i].abs() > 1e-3 {
            0.1 * x[i].abs().max(0.5)
        } else {
            0.5
        };
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < 1e-16 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(if fr < simplex[n].1 { -0.5 } else { 0.5 });
            let fc = f(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = (0..n).map(|j| best[j] + 0.5 * (p.0[j] - best[j])).collect();
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx)
}
