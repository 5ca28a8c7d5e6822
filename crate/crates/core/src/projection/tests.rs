use super::*;
use crate::estimation::{build_conservative_set, RlsEstimate};
use crate::linalg::norm;

fn square(hw: f64) -> (TruePolytope, AmbientSet) {
    (
        TruePolytope::centered_box(2, hw).unwrap(),
        AmbientSet::symmetric(2, hw).unwrap(),
    )
}

fn triangle() -> (TruePolytope, AmbientSet) {
    let p =
        TruePolytope::from_rows(&[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], &[1.0, 0.0, 0.0]).unwrap();
    (
        p,
        AmbientSet::new(vec![-0.5, -0.5], vec![1.5, 1.5]).unwrap(),
    )
}

fn soc_set(beta: f64) -> ConservativeSafeSet {
    soc_set_with(beta, [3.0; 4])
}

fn soc_set_with(beta: f64, b: [f64; 4]) -> ConservativeSafeSet {
    let a = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
    let gram = Matrix::from_rows(&[[40.0, 5.0], [5.0, 25.0]]).unwrap();
    let est = RlsEstimate::from_parts(a, gram, 0.5).unwrap();
    build_conservative_set(est, beta, &b, AmbientSet::symmetric(2, 4.0).unwrap()).unwrap()
}

#[test]
fn box_projection_clips() {
    let (p, amb) = square(3.0);
    let r = project_polytope(&p, &amb, &[5.0, 5.0], DEFAULT_EPS_OPT).unwrap();
    assert!(dist(&r.point, &[3.0, 3.0]) < 1e-6, "{:?}", r.point);
    assert!(r.feasibility_slack <= 0.0);
    assert!(p.contains(&amb, &r.point).unwrap());
    assert!(r.objective_gap <= DEFAULT_EPS_OPT);
}

#[test]
fn triangle_projection_hits_hypotenuse() {
    let (p, amb) = triangle();
    let r = project_polytope(&p, &amb, &[1.0, 1.0], DEFAULT_EPS_OPT).unwrap();
    assert!(dist(&r.point, &[0.5, 0.5]) < 1e-6, "{:?}", r.point);
    assert!(p.contains(&amb, &r.point).unwrap());
}

#[test]
fn interior_points_are_returned_unchanged() {
    let (p, amb) = square(3.0);
    let z = [0.3, -1.7];
    let r = project_polytope(&p, &amb, &z, DEFAULT_EPS_OPT).unwrap();
    assert_eq!(r.point, z.to_vec());
    assert_eq!(r.iterations, 0);
    let set = soc_set(0.8);
    let r = project_conservative(&set, &[0.1, 0.2], DEFAULT_EPS_OPT).unwrap();
    assert_eq!(r.point, vec![0.1, 0.2]);
}

#[test]
fn half_space_projection_respects_margin() {
    let est = RlsEstimate::from_parts(
        Matrix::from_rows(&[[1.0, 0.0]]).unwrap(),
        Matrix::identity(2),
        1.0,
    )
    .unwrap();
    let set =
        build_conservative_set(est, 0.0, &[1.0], AmbientSet::symmetric(2, 10.0).unwrap()).unwrap();
    let r = project_conservative(&set, &[2.0, 0.0], DEFAULT_EPS_OPT).unwrap();
    let eps = set.feasibility_margin();
    assert!(r.point[0] <= 1.0 - eps, "{:?}", r.point);
    assert!((r.point[0] - (1.0 - eps)).abs() < 1e-7);
    assert!(r.point[1].abs() < 1e-7);
}

#[test]
fn soc_projection_satisfies_optimality_certificate() {
    let set = soc_set(0.8);
    let proj = Projector::new(&set, DEFAULT_EPS_OPT).unwrap();
    for z in [[5.0, 5.0], [-6.0, 1.0], [0.0, -9.0], [3.5, -0.2]] {
        let r = proj.project(&z, None).unwrap();
        assert!(r.feasibility_slack <= 0.0);
        let dz: Vec<f64> = z.iter().zip(&r.point).map(|(a, b)| a - b).collect();
        // Feasible points on a grid must make an obtuse angle with z − Π(z).
        for i in 0..41 {
            for j in 0..41 {
                let y = [-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64];
                if set.contains(&y).unwrap() {
                    let dy: Vec<f64> = y.iter().zip(&r.point).map(|(a, b)| a - b).collect();
                    assert!(dot(&dz, &dy) <= 1e-6 * norm(&dz), "z={z:?} y={y:?}");
                }
            }
        }
        let again = proj.project(&r.point, None).unwrap();
        assert!(dist(&again.point, &r.point) < 1e-6);
    }
}

#[test]
fn warm_start_matches_cold_start() {
    let set = soc_set(0.5);
    let proj = Projector::new(&set, DEFAULT_EPS_OPT).unwrap();
    let first = proj.project(&[4.0, 3.0], None).unwrap();
    let z = [first.point[0] + 0.02, first.point[1] + 0.03];
    let cold = proj.project(&z, None).unwrap();
    let warm = proj.project(&z, Some(&first.point)).unwrap();
    assert!(dist(&cold.point, &warm.point) < 1e-6);
}

#[test]
fn empty_set_is_reported_infeasible() {
    // x₁ ≤ −1 and −x₁ ≤ −1 cannot both hold.
    let set = soc_set_with(0.1, [-1.0, -1.0, 3.0, 3.0]);
    assert!(matches!(
        Projector::new(&set, DEFAULT_EPS_OPT),
        Err(Error::Infeasible { .. })
    ));
}

#[test]
fn linear_hindsight_picks_most_negative_vertex() {
    let (p, amb) = square(3.0);
    let mut obj = PrefixObjective::new(2);
    for c in [0.5, 1.7, 2.0] {
        obj.push_linear(&[c, c], 1.0);
    }
    let x = hindsight_optimum(&obj, &p, &amb, DEFAULT_EPS_OPT).unwrap();
    assert_eq!(x, vec![-3.0, -3.0]);
    assert!((obj.value(&x) - (3.0 - 6.0 * 4.2)).abs() < 1e-12);
}

#[test]
fn linear_hindsight_ties_break_lexicographically() {
    let (p, amb) = square(3.0);
    let mut obj = PrefixObjective::new(2);
    obj.push_linear(&[0.0, 1.0], 0.0);
    let x = hindsight_optimum(&obj, &p, &amb, DEFAULT_EPS_OPT).unwrap();
    assert_eq!(x, vec![-3.0, -3.0]);
}

#[test]
fn tracking_hindsight_interior_mean() {
    let (p, amb) = square(3.0);
    let x_bar = [1.5, -2.0];
    let cs = [0.5, 1.0, 1.5, 2.0, 0.7];
    let mut obj = PrefixObjective::new(2);
    for c in cs {
        obj.push_tracking(&[c * x_bar[0], c * x_bar[1]]);
    }
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let x = hindsight_optimum(&obj, &p, &amb, DEFAULT_EPS_OPT).unwrap();
    assert!(
        dist(&x, &[mean * x_bar[0], mean * x_bar[1]]) < 1e-6,
        "{x:?}"
    );
}

#[test]
fn service_objective_gradient_matches_differences() {
    let mut obj = PrefixObjective::new(3);
    obj.push_service(&[20.0, 35.0, 50.0], 5.772);
    obj.push_service(&[60.0, 15.0, 40.0], 5.772);
    obj.push_tracking(&[1.0, 2.0, 3.0]);
    let x = [1.3, 0.2, 7.5];
    let g = obj.gradient(&x);
    for k in 0..3 {
        let h = 1e-6;
        let mut xp = x;
        let mut xm = x;
        xp[k] += h;
        xm[k] -= h;
        let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
        assert!(
            (fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()),
            "{k}: {fd} vs {}",
            g[k]
        );
    }
    assert!((PrefixObjective::new(3).value(&x)).abs() == 0.0);
}

#[test]
fn service_hindsight_stationary_inside_box() {
    // Stationarity per coordinate: p = 32w/(1 + 4x).
    let p = TruePolytope::from_rows(&[[1.0, 1.0]], &[100.0]).unwrap();
    let amb = AmbientSet::new(vec![0.0; 2], vec![30.0; 2]).unwrap();
    let mut obj = PrefixObjective::new(2);
    obj.push_service(&[10.0, 40.0], 5.772);
    let x = hindsight_optimum(&obj, &p, &amb, 1e-10).unwrap();
    for (k, price) in [10.0, 40.0].iter().enumerate() {
        let expect = ((32.0 * 5.772 / price - 1.0) / 4.0_f64).clamp(0.0, 30.0);
        assert!((x[k] - expect).abs() < 1e-5, "{x:?}");
    }
}
