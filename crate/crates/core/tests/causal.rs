mod common;

use common::{monte_carlo, quadrature, random_case, random_net};
use migcast_core::causal::{
    decompose_total, posterior_node, posterior_province, CGNetwork, CrisisSpec, Evidence, NodeParam, ProvinceEntry,
    TotalMode,
};
use migcast_core::data::{Province, Stream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn exact_inference_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case_no in 0..100 {
        let c = random_case(&mut rng, 1);
        let q = quadrature(&c.net, &c.evidence, c.target);
        let post = posterior_province(&c.net, &c.evidence).unwrap();
        for ((p, a), (_, b)) in post.iter().zip(&q.province) {
            assert!((a - b).abs() <= 1e-8, "case {case_no} {p}: {a} vs {b}");
        }
        let mix = posterior_node(&c.net, c.target, &c.evidence).unwrap();
        assert!(close(mix.mean(), q.mean, 1e-8), "case {case_no} mean {} vs {}", mix.mean(), q.mean);
        assert!(close(mix.variance(), q.var, 1e-8), "case {case_no} var {} vs {}", mix.variance(), q.var);
    }
}

const SAMPLES: usize = 200_000;

#[test]
fn exact_inference_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut sampler = ChaCha8Rng::seed_from_u64(303);
    for case_no in 0..20 {
        let c = random_case(&mut rng, 2);
        let mix = posterior_node(&c.net, c.target, &c.evidence).unwrap();
        let mc = monte_carlo(&c.net, &c.evidence, c.target, mix.mean(), SAMPLES, &mut sampler);
        let post = posterior_province(&c.net, &c.evidence).unwrap();
        for ((p, exact), (_, est, se)) in post.iter().zip(&mc.province) {
            assert!((exact - est).abs() <= 3.0 * se + 1.0 / SAMPLES as f64, "case {case_no} {p}: {exact} vs {est} ± {se}");
        }
        let (m, se) = mc.mean;
        assert!((mix.mean() - m).abs() <= 3.0 * se, "case {case_no}: mean {} vs {m} ± {se}", mix.mean());
        let (v, se) = mc.spread;
        assert!((mix.variance() - v).abs() <= 3.0 * se, "case {case_no}: var {} vs {v} ± {se}", mix.variance());
    }
}

#[test]
fn decomposition_sums_to_posterior_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 200 {
        let c = random_case(&mut rng, 2);
        if c.net.total_mode != TotalMode::Structural {
            assert!(decompose_total(&c.net, &c.evidence).is_err());
            continue;
        }
        let d = decompose_total(&c.net, &c.evidence).unwrap();
        let t = posterior_node(&c.net, Stream::Total, &c.evidence).unwrap().mean();
        assert!((d.sponsor + d.refugee + d.economic - t).abs() <= 1e-9 * t.abs().max(1.0));
        assert!((d.total - t).abs() <= 1e-9 * t.abs().max(1.0));
        checked += 1;
    }
}

#[test]
fn decomposition_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut sampler = ChaCha8Rng::seed_from_u64(910);
    let mut checked = 0;
    while checked < 10 {
        let c = random_case(&mut rng, 2);
        if c.net.total_mode != TotalMode::Structural {
            continue;
        }
        let d = decompose_total(&c.net, &c.evidence).unwrap();
        for (node, exact) in [(Stream::Sponsor, d.sponsor), (Stream::Refugee, d.refugee), (Stream::Economic, d.economic)] {
            let mc = monte_carlo(&c.net, &c.evidence, node, exact, SAMPLES, &mut sampler);
            let (m, se) = mc.mean;
            assert!((exact - m).abs() <= 3.0 * se, "{node}: {exact} vs {m} ± {se}");
        }
        checked += 1;
    }
}

#[test]
fn decomposition_lies_between_prior_and_full_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let mut net = random_net(&mut rng);
        if net.total_mode == TotalMode::Fitted {
            continue;
        }
        net.crisis = None;
        let p = net.provinces[0].province;
        let prior_total = net.province_conditional(p, Stream::Total).unwrap();
        let m = prior_total.mean + 3.0 * prior_total.std;
        let ev = Evidence::province(p).with(migcast_core::causal::Finding::Soft(
            Stream::Total,
            migcast_core::causal::Gaussian::new(m, 1.5).unwrap(),
        )).unwrap();
        let d = decompose_total(&net, &ev).unwrap();
        let shift = m - prior_total.mean;
        for (got, node) in [(d.sponsor, Stream::Sponsor), (d.refugee, Stream::Refugee), (d.economic, Stream::Economic)] {
            let prior = net.province_conditional(p, node).unwrap().mean;
            assert!(got >= prior && got <= prior + shift, "{node}: {got} not in [{prior}, {}]", prior + shift);
        }
    }
}

fn two_province(sigma: f64) -> CGNetwork {
    let entry = |p, r| ProvinceEntry {
        province: p,
        prior: 0.5,
        sponsor: NodeParam::new(5.0, 1.0),
        refugee: NodeParam::new(r, sigma),
        economic: NodeParam::new(20.0, 2.0),
        total: None,
        published_total: None,
    };
    CGNetwork::new(TotalMode::Structural, None, vec![entry(Province::ON, 10.0), entry(Province::QC, 20.0)]).unwrap()
}

#[test]
fn two_province_toy_matches_quadrature() {
    let net = two_province(1.0);
    let ev = Evidence::soft(Stream::Refugee, 10.0, 0.5).unwrap();
    let post = posterior_province(&net, &ev).unwrap();
    let q = quadrature(&net, &ev, Stream::Refugee);
    assert!((post[0].1 - q.province[0].1).abs() <= 1e-9);
    assert!(post[0].1 > 0.999_999);
}

#[test]
fn crisis_marginal_refugee_mean() {
    let mut net = CGNetwork::published_snapshot();
    let base = posterior_node(&net, Stream::Refugee, &Evidence::none()).unwrap().mean();
    net.crisis = Some(CrisisSpec {
        probability: 0.5,
        k_refugee: 2.0,
        k_economic: 1.0,
    });
    let with = posterior_node(&net, Stream::Refugee, &Evidence::none()).unwrap();
    assert_eq!(with.components.len(), 20);
    assert!((with.mean() - 1.5 * base).abs() < 1e-12);
}

#[test]
fn no_evidence_mixture_has_prior_weights() {
    let net = CGNetwork::published_snapshot();
    for node in [Stream::Sponsor, Stream::Refugee, Stream::Economic, Stream::Total] {
        let mix = posterior_node(&net, node, &Evidence::none()).unwrap();
        assert_eq!(mix.components.len(), 10);
        assert!(mix.components.iter().all(|c| c.weight == 0.1));
    }
}

#[test]
fn case_one_regression() {
    let net = CGNetwork::published_snapshot();
    let ev = Evidence::province(Province::ON);
    let total = posterior_node(&net, Stream::Total, &ev).unwrap();
    assert!((total.mean() - 114.15).abs() < 1e-9 && (total.std() - 31.80).abs() < 1e-9);
    let refugee = posterior_node(&net, Stream::Refugee, &ev).unwrap();
    assert!((refugee.mean() - 21.89).abs() < 1e-12 && (refugee.std() - 10.18).abs() < 1e-12);
}

#[test]
fn approaching_from_the_far_side_can_hurt() {
    // log-odds are linear in m, so only the direction relative to the other mean matters
    let net = two_province(0.5);
    let p = |m: f64| posterior_province(&net, &Evidence::soft(Stream::Refugee, m, 3.8).unwrap()).unwrap()[0].1;
    assert!(p(8.5) < p(0.0));
}

proptest! {
    #[test]
    fn province_posterior_sums_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_case(&mut rng, 2);
        let post = posterior_province(&c.net, &c.evidence).unwrap();
        prop_assert!((post.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn vague_finding_leaves_prior(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let ev = Evidence::soft(Stream::Refugee, 10.0, 1e6).unwrap();
        let post = posterior_province(&net, &ev).unwrap();
        for (e, (_, w)) in net.provinces.iter().zip(post) {
            prop_assert!((w - e.prior).abs() <= 1e-6);
        }
    }

    #[test]
    fn moving_finding_toward_province_helps_it(sigma in 0.5f64..5.0, s in 0.5f64..5.0, a in 10.0f64..60.0, step in 0.0f64..1.0) {
        let net = two_province(sigma);
        // ON refugee mean is 10, QC is 20; start on the QC side and move toward ON
        let b = a + (10.0 - a) * step;
        let p = |m: f64| posterior_province(&net, &Evidence::soft(Stream::Refugee, m, s).unwrap()).unwrap()[0].1;
        prop_assert!(p(b) >= p(a) - 1e-12);
    }
}
