//! Cross-module checks through the public API only.

use frog_core::environment::Environment;
use frog_core::estimation::{replica_env, ReplicaRange};
use frog_core::lattice::l1_ball;
use frog_core::passage::{passage_time, passage_times_star, tau};
use frog_core::percolation::{chemical_distance, label_clusters, sample_bernoulli_field, ChemicalDistance};
use frog_core::truncated::{sandwich_holds, sigma_t, truncated_passage, TruncationParams};
use frog_core::{ConfigLaw, HittingTime, Point, SeedSpec};

#[test]
fn document_round_trip_preserves_passage_times() {
    let env = Environment::sample(ConfigLaw::Geometric { q: 0.5 }, 2, 40, SeedSpec::new(3, "doc")).unwrap().conditioned();
    let back = Environment::from_json(&env.to_json()).unwrap();
    for x in [Point::new(&[4, 1]), Point::new(&[-3, -3])] {
        assert_eq!(passage_time(&env, &x, 20).unwrap(), passage_time(&back, &x, 20).unwrap());
    }
}

#[test]
fn passage_is_bounded_by_single_hitting_times() {
    // T(0, x) ≤ τ(0, x): the origin's own frogs are one admissible relay chain
    let law = ConfigLaw::Poisson { lambda: 1.0 };
    let sd = SeedSpec::new(5, "bound");
    let x = Point::new(&[2, 1]);
    for r in 0..40 {
        let env = replica_env(&law, 2, 200, &sd, r, true).unwrap();
        let t = passage_time(&env, &x, 60).unwrap().value;
        if let HittingTime::Finite(direct) = tau(&env, &Point::origin(2), &x, 60) {
            assert!(t.finite().unwrap() <= direct);
        }
        if let HittingTime::Finite(k) = t {
            assert!(k >= x.l1_norm());
        }
    }
}

#[test]
fn truncated_time_dominates_l1_and_sigma_sandwich() {
    let law = ConfigLaw::Poisson { lambda: 1.0 };
    let sd = SeedSpec::new(9, "trunc");
    let p = TruncationParams::from_c4(2, 2, 4.0, 1.0).unwrap();
    let x = Point::new(&[3, 0]);
    for r in 0..10 {
        let env = replica_env(&law, 2, 400, &sd, r, false).unwrap();
        let o = env.star(&Point::origin(2), None).unwrap();
        let t = env.star(&x, None).unwrap();
        let out = truncated_passage(&env, &o, &t, &p).unwrap();
        assert!(out.value >= o.l1_dist(&t));
        assert_eq!(out.sandwich_violations, 0);
        for u in l1_ball(2, 2) {
            let s = sigma_t(&env, &o, &u, &p);
            assert!(sandwich_holds(&o, &u, s, &p));
        }
    }
}

#[test]
fn star_times_share_one_run() {
    let law = ConfigLaw::Bernoulli { p: 0.6 };
    let sd = SeedSpec::new(13, "star");
    let targets = [Point::new(&[2, 0]), Point::new(&[0, -3]), Point::new(&[4, 4])];
    let env = replica_env(&law, 2, 300, &sd, 0, false).unwrap();
    let together = passage_times_star(&env, &targets, 80).unwrap();
    for (x, t) in targets.iter().zip(&together) {
        assert_eq!(passage_times_star(&env, &[*x], 80).unwrap()[0], *t);
    }
}

#[test]
fn replica_ranges_partition() {
    let a = ReplicaRange::first(100);
    let b = a.next(50);
    assert!(a.is_disjoint(&b));
    assert_eq!(b.start, 100);
    assert!(!a.is_disjoint(&ReplicaRange::new(99, 2)));
}

#[test]
fn cluster_labels_agree_with_chemical_reachability() {
    let field = sample_bernoulli_field(0.6, 2, 5, &SeedSpec::new(17, "labels")).unwrap();
    let labels = label_clusters(&field);
    let open: Vec<Point> = l1_ball(2, 5).into_iter().filter(|p| field.get(p)).collect();
    assert!(labels.cluster_count() > 1, "fixture should have several clusters");
    for a in &open {
        for b in &open {
            let same = labels.label(a) == labels.label(b);
            assert_eq!(same, matches!(chemical_distance(&field, a, b), ChemicalDistance::Finite(_)), "{a} {b}");
        }
    }
}
