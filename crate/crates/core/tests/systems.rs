use jlm_core::systems::{
    build_conformal_field, build_contact_field, build_generalized_conformal_field,
    build_hamiltonian_field, build_lienard_field, parse_phase, PhaseLayout,
};
use jlm_core::{Expr, FieldSpec, LienardSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn expr(src: &str, layout: PhaseLayout) -> Expr {
    parse_phase(src, layout).unwrap()
}

fn fields() -> Vec<(&'static str, FieldSpec)> {
    let s1 = PhaseLayout::symplectic(1);
    let s2 = PhaseLayout::symplectic(2);
    let c1 = PhaseLayout::contact(1);
    let c2 = PhaseLayout::contact(2);
    vec![
        (
            "conservative exp(q)p²",
            build_hamiltonian_field(&expr("exp(q)*p^2", s1), 1).unwrap(),
        ),
        (
            "conservative coupled",
            build_hamiltonian_field(&expr("p1^2/2 + p2^2/2 + q1^2*q2^2 + sin(q1)*p2", s2), 2)
                .unwrap(),
        ),
        (
            "conformal n=1",
            build_conformal_field(&expr("p^2/2 + q^4/4", s1), 0.3, 1).unwrap(),
        ),
        (
            "conformal n=2",
            build_conformal_field(&expr("p1^2/2 + p2^2/2 + q1^2/2 + q2^2/2", s2), 0.3, 2).unwrap(),
        ),
        (
            "contact damped",
            build_contact_field(&expr("p^2/2 + q^2/2 + 0.3*s", c1), 1).unwrap(),
        ),
        (
            "contact nonlinear in s",
            build_contact_field(&expr("p^2/2 + cos(q) + s^2/3 + q*s", c1), 1).unwrap(),
        ),
        (
            "contact n=2",
            build_contact_field(&expr("p1^2/2 + p2^2/2 + q1*q2 + 0.2*s*p1", c2), 2).unwrap(),
        ),
        (
            "generalized conformal",
            build_generalized_conformal_field(&expr("p^2/2 + q^2", s1), &expr("1 + q^2", s1), 1)
                .unwrap(),
        ),
        (
            "generalized conformal n=2",
            build_generalized_conformal_field(
                &expr("p1^2/2 + p2^2/2 + q1^2*q2", s2),
                &expr("exp(q1) + q2", s2),
                2,
            )
            .unwrap(),
        ),
        (
            "van der Pol",
            build_lienard_field(&expr("1.5*(q^2 - 1)", s1), &expr("q", s1), 1.0).unwrap(),
        ),
        (
            "lienard K=q²",
            LienardSystem::parse("q", "q^2", 2.0).unwrap().field(),
        ),
    ]
}

#[test]
fn divergence_matches_closed_form_everywhere() {
    for (name, field) in fields() {
        for x in points(field.dim(), 1000, 11) {
            let div = field.divergence(&x).unwrap();
            let closed = field.closed_form_divergence(&x).unwrap();
            assert!(
                (div - closed).abs() < 1e-10,
                "{name} at {x:?}: {div} vs {closed}"
            );
        }
    }
}

#[test]
fn family_closed_forms() {
    let s1 = PhaseLayout::symplectic(1);
    let conformal = build_conformal_field(&expr("p^2/2 + q^2/2", s1), 0.3, 1).unwrap();
    let contact =
        build_contact_field(&expr("p^2/2 + q^2/2 + 0.3*s", PhaseLayout::contact(1)), 1).unwrap();
    let gc = build_generalized_conformal_field(&expr("p^2/2", s1), &expr("5", s1), 1).unwrap();
    let free = build_hamiltonian_field(&expr("exp(q)*p^2", s1), 1).unwrap();
    for x in points(3, 100, 5) {
        assert!((conformal.divergence(&x[..2]).unwrap() + 0.3).abs() < 1e-12);
        assert!((contact.divergence(&x).unwrap() + 0.6).abs() < 1e-12);
        assert!((gc.divergence(&x[..2]).unwrap() + 5.0).abs() < 1e-12);
        assert!(free.divergence(&x[..2]).unwrap().abs() < 1e-12);
    }
}

#[test]
fn energy_identities() {
    for (name, field) in fields() {
        let Some(h) = field.hamiltonian().cloned() else {
            continue;
        };
        let layout = field.layout();
        for x in points(field.dim(), 1000, 17) {
            let along = field.lie_derivative(&h, &x).unwrap();
            let jet = h.eval_jet2(&x).unwrap();
            let liouville: f64 = (0..layout.n)
                .map(|i| x[layout.p(i)] * jet.grad()[layout.p(i)])
                .sum();
            let expected = match field.kind() {
                jlm_core::systems::FieldKind::Conservative { .. } => 0.0,
                jlm_core::systems::FieldKind::Conformal { gamma, .. } => -gamma * liouville,
                jlm_core::systems::FieldKind::Contact { .. } => {
                    -jet.value() * jet.grad()[layout.s()]
                }
                jlm_core::systems::FieldKind::GeneralizedConformal { damping, .. } => {
                    -damping.eval(&x).unwrap() * liouville
                }
                jlm_core::systems::FieldKind::Lienard { .. } => unreachable!(),
            };
            let tol = if expected == 0.0 { 1e-12 } else { 1e-10 };
            assert!(
                (along - expected).abs() < tol * (1.0 + expected.abs()),
                "{name} at {x:?}: {along} vs {expected}"
            );
        }
    }
}

#[test]
fn cross_family_agreement() {
    let s1 = PhaseLayout::symplectic(1);
    let h = expr("p^2/2 + q^4/4 - q^2", s1);
    let conservative = build_hamiltonian_field(&h, 1).unwrap();
    let gamma0 = build_conformal_field(&h, 0.0, 1).unwrap();
    let conformal = build_conformal_field(&h, 0.7, 1).unwrap();
    let k_const = build_generalized_conformal_field(&h, &expr("0.7", s1), 1).unwrap();

    // V' = 4q, K = 5 as generalized-conformal and as Liénard
    let gc =
        build_generalized_conformal_field(&expr("p^2/2 + 2*q^2", s1), &expr("5", s1), 1).unwrap();
    let lienard = build_lienard_field(&expr("5", s1), &expr("4*q", s1), 1.0).unwrap();
    assert_eq!(lienard.eval(&[1.0, 1.0]).unwrap(), vec![1.0, -9.0]);

    for x in points(2, 100, 23) {
        assert_eq!(conservative.eval(&x).unwrap(), gamma0.eval(&x).unwrap());
        assert_eq!(conformal.eval(&x).unwrap(), k_const.eval(&x).unwrap());
        let (a, b) = (gc.eval(&x).unwrap(), lienard.eval(&x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    for (name, field) in fields() {
        for x in points(field.dim(), 20, 29) {
            let (_, jac) = field.eval_with_jacobian(&x).unwrap();
            for j in 0..field.dim() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += 1e-6;
                xm[j] -= 1e-6;
                let (vp, vm) = (field.eval(&xp).unwrap(), field.eval(&xm).unwrap());
                for i in 0..field.dim() {
                    let fd = (vp[i] - vm[i]) / 2e-6;
                    assert!(
                        (fd - jac[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "{name}: J[{i},{j}] {} vs {fd}",
                        jac[(i, j)]
                    );
                }
            }
        }
    }
}
