use coalition_core::dynamics::{
    apply_transition, approval_from_distances, deterministic_vote, run_process, sample_vote,
};
use coalition_core::mediator::{score_coalitions, ClosedForm};
use coalition_core::metric::{geometric_median, weighted_distance_sum, weighted_mean};
use coalition_core::textual::{select_candidate, Embedder, Sentence};
use coalition_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coord(), dim).prop_filter("nonzero", |v| {
        v.iter().map(|x| x * x).sum::<f64>() > 1e-6
    })
}

fn p(v: Vec<f64>) -> Point {
    Point::new(v).unwrap()
}

fn unit(v: &[f64]) -> Point {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    p(v.iter().map(|x| x / n).collect())
}

proptest! {
    #[test]
    fn sqrt_cosine_symmetric_and_bounded(a in nonzero_vec(5), b in nonzero_vec(5)) {
        let m = Metric::sqrt_cosine(5);
        let (a, b) = (p(a), p(b));
        let ab = m.dist(&a, &b).unwrap();
        let ba = m.dist(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((0.0..=2.0).contains(&ab));
    }

    #[test]
    fn sqrt_cosine_ignores_positive_scale(a in nonzero_vec(4), k in 0.01..100.0f64) {
        let m = Metric::sqrt_cosine(4);
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!(m.dist(&p(a), &p(scaled)).unwrap() <= 1e-6);
    }

    #[test]
    fn sqrt_cosine_triangle_on_sphere(a in nonzero_vec(3), b in nonzero_vec(3), c in nonzero_vec(3)) {
        let m = Metric::sqrt_cosine(3);
        let (a, b, c) = (unit(&a), unit(&b), unit(&c));
        let ac = m.dist(&a, &c).unwrap();
        let ab = m.dist(&a, &b).unwrap();
        let bc = m.dist(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn weighted_mean_translates(
        pts in prop::collection::vec((coord(), coord()), 1..8),
        w in prop::collection::vec(0.1..10.0f64, 8),
        t in (coord(), coord()),
    ) {
        let points: Vec<Point> = pts.iter().map(|&(x, y)| Point::xy(x, y)).collect();
        let shifted: Vec<Point> = pts.iter().map(|&(x, y)| Point::xy(x + t.0, y + t.1)).collect();
        let w = &w[..points.len()];
        let m = weighted_mean(&points, w).unwrap();
        let ms = weighted_mean(&shifted, w).unwrap();
        prop_assert!((ms.coords()[0] - m.coords()[0] - t.0).abs() < 1e-9);
        prop_assert!((ms.coords()[1] - m.coords()[1] - t.1).abs() < 1e-9);
    }

    #[test]
    fn median_objective_beats_mean(
        pts in prop::collection::vec((coord(), coord()), 1..10),
        w in prop::collection::vec(0.1..10.0f64, 10),
    ) {
        let points: Vec<Point> = pts.iter().map(|&(x, y)| Point::xy(x, y)).collect();
        let w = &w[..points.len()];
        let mean = weighted_mean(&points, w).unwrap();
        let med = geometric_median(&points, w, 1e-9, 1000).unwrap();
        let fm = weighted_distance_sum(&mean, &points, w);
        let fd = weighted_distance_sum(&med, &points, w);
        prop_assert!(fd <= fm + 1e-6 * fm.max(1.0));
    }

    #[test]
    fn sigma_zero_vote_is_deterministic(
        ideal in (coord(), coord()), prop_pt in (coord(), coord()), r in (coord(), coord()),
        seed in any::<u64>(),
    ) {
        let m = Metric::euclidean(2);
        let agent = Agent { id: 0, ideal: Point::xy(ideal.0, ideal.1), sigma: 0.0 };
        let cfg = ProcessConfig::new(Point::xy(r.0, r.1), 0);
        let proposal = Point::xy(prop_pt.0, prop_pt.1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(
            sample_vote(&agent, &proposal, &cfg, &m, &mut rng).unwrap(),
            deterministic_vote(&agent, &proposal, &cfg, &m).unwrap()
        );
    }

    #[test]
    fn approval_falls_with_proposal_distance(
        d1 in 0.0..50.0f64, extra in 0.0..50.0f64, dr in 0.0..50.0f64, sigma in 0.0..20.0f64,
    ) {
        let near = approval_from_distances(d1, dr, sigma);
        let far = approval_from_distances(d1 + extra, dr, sigma);
        prop_assert!(far <= near);
        prop_assert!((0.0..=1.0).contains(&near));
    }

    #[test]
    fn approval_rises_with_sigma_outside_cap(dp in 0.0..50.0f64, s1 in 0.01..20.0f64, ds in 0.0..20.0f64) {
        // only below the density mode is the density increasing in sigma
        prop_assume!(dp >= s1 + ds);
        let dr = dp / 2.0;
        prop_assert!(approval_from_distances(dp, dr, s1) <= approval_from_distances(dp, dr, s1 + ds) + 1e-15);
    }

    #[test]
    fn softmax_shift_invariant(
        pts in prop::collection::vec((coord(), coord()), 2..8),
        alpha in -3.0..3.0f64,
        shift in (coord(), coord()),
    ) {
        let m = Metric::euclidean(2);
        let structure = CoalitionStructure::singletons(
            pts.iter().map(|&(x, y)| (Point::xy(x, y), None)).collect(),
        );
        let moved = CoalitionStructure::singletons(
            pts.iter().map(|&(x, y)| (Point::xy(x + shift.0, y + shift.1), None)).collect(),
        );
        let cfg = MediatorConfig::new(alpha);
        let c = coalition_core::mediator::compute_centroid(&structure, &cfg).unwrap();
        let cm = coalition_core::mediator::compute_centroid(&moved, &cfg).unwrap();
        let a = score_coalitions(&structure, &c, &cfg, &m).unwrap();
        let b = score_coalitions(&moved, &cm, &cfg, &m).unwrap();
        prop_assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn transitions_keep_a_partition(
        n in 2usize..12,
        seed in any::<u64>(),
        steps in 1usize..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = CoalitionStructure::singletons(
            (0..n).map(|i| (Point::xy(i as f64, 0.0), None)).collect(),
        );
        for _ in 0..steps {
            if s.len() < 2 {
                break;
            }
            use rand::Rng;
            let i = rng.random_range(0..s.len());
            let mut j = rng.random_range(0..s.len() - 1);
            if j >= i { j += 1; }
            let (a, b) = (s.coalitions()[i].clone(), s.coalitions()[j].clone());
            let pick = |c: &Coalition, rng: &mut ChaCha8Rng| -> Vec<usize> {
                c.members.iter().copied().filter(|_| rng.random::<bool>()).collect()
            };
            let ma = pick(&a, &mut rng);
            let mb = pick(&b, &mut rng);
            let proposal = Proposal {
                first: a.id,
                second: b.id,
                point: Point::xy(0.5, 0.5),
                text: None,
                provenance: Provenance::default(),
            };
            let before = s.len();
            let next = apply_transition(&s, &proposal, &ma, &mb).unwrap();
            prop_assert!(next.validate().is_ok());
            if ma.is_empty() && mb.is_empty() {
                prop_assert_eq!(&next, &s);
            } else {
                prop_assert!(next.len() <= before + 1);
            }
            s = next;
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), n in 3usize..15, alpha in -1.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ideals = coalition_core::instance::sample_ideal_points(n, 0, &mut rng);
        let r = coalition_core::instance::sample_status_quo(&mut rng);
        let agents: Vec<Agent> = ideals.iter().cloned().enumerate()
            .map(|(id, ideal)| Agent { id, ideal, sigma: 10.0 }).collect();
        let cfg = ProcessConfig::new(r, seed);
        let m = Metric::euclidean(2);
        let run = || {
            let init = CoalitionStructure::singletons(ideals.iter().map(|p| (p.clone(), None)).collect());
            let mut med = AiMediator::new(MediatorConfig::new(alpha), ClosedForm).unwrap();
            run_process(&agents, init, &cfg, &m, &mut med, RunOptions::default()).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}

/// Maps each text to a fixed vector by its first letter.
struct ByInitial;

impl Embedder for ByInitial {
    fn dimension(&self) -> usize {
        3
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| {
                let b = t.as_bytes()[0] as f64;
                p(vec![1.0, (b * 0.37).sin(), (b * 1.3).cos()])
            })
            .collect())
    }
}

proptest! {
    #[test]
    fn permuting_candidates_keeps_the_choice(
        words in prop::collection::hash_set("[a-z]{3,6}", 2..8),
        rot in 0usize..8,
    ) {
        let words: Vec<String> = words.into_iter().collect();
        let m = Metric::sqrt_cosine(3);
        let pi = p(vec![1.0, 0.3, -0.2]);
        let pj = p(vec![0.5, -0.4, 0.9]);
        let pick = |ws: &[String]| {
            let set = select_candidate(
                String::new(),
                ws.iter().map(Sentence::new).collect(),
                None, 2, &pi, 3, &pj, &mut ByInitial, &m,
            ).unwrap();
            // brute force, with ties to the lowest index
            let best = set.distances.iter().enumerate()
                .fold(0, |b, (i, d)| if *d < set.distances[b] { i } else { b });
            assert_eq!(best, set.chosen_index);
            set.parsed[set.chosen_index].text.clone()
        };
        let mut rotated = words.clone();
        rotated.rotate_left(rot % words.len());
        let a = pick(&words);
        let b = pick(&rotated);
        // equal-distance duplicates may break ties differently, compare distances
        let d = |w: &str| {
            let e = ByInitial.embed_batch(&[w.to_string()]).unwrap().remove(0);
            let t = weighted_mean(&[pi.clone(), pj.clone()], &[2.0, 3.0]).unwrap();
            m.dist(&e, &t).unwrap()
        };
        prop_assert_eq!(d(&a), d(&b));
    }
}
