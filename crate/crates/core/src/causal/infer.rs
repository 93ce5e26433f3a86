//! Exact inference. Given a province (and crisis branch) the streams are
//! jointly Gaussian, soft findings are noisy linear observations of them,
//! so each branch is conditioned in closed form and the branches are
//! reweighted by their marginal likelihoods.

use nalgebra::{DMatrix, DVector};

use crate::causal::{CGNetwork, Evidence, Gaussian, GaussianMixture, MixtureComponent, TotalMode};
use crate::data::{Province, Stream};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

struct Branch {
    province: Province,
    crisis: Option<bool>,
    log_weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn latent_dim(mode: TotalMode) -> usize {
    match mode {
        TotalMode::Structural => 3,
        TotalMode::Fitted => 4,
    }
}

/// Row selecting `node` from the latent vector.
fn selector(mode: TotalMode, node: Stream) -> DVector<f64> {
    let n = latent_dim(mode);
    let mut a = DVector::zeros(n);
    match (node, mode) {
        (Stream::Sponsor, _) => a[0] = 1.0,
        (Stream::Refugee, _) => a[1] = 1.0,
        (Stream::Economic, _) => a[2] = 1.0,
        (Stream::Total, TotalMode::Structural) => a.fill(1.0),
        (Stream::Total, TotalMode::Fitted) => a[3] = 1.0,
    }
    a
}

/// Prior latent mean and covariance for one province and crisis branch.
fn prior_moments(net: &CGNetwork, idx: usize, crisis_on: bool) -> (DVector<f64>, DMatrix<f64>) {
    let e = &net.provinces[idx];
    let (kr, ke) = match (net.crisis, crisis_on) {
        (Some(c), true) => (c.k_refugee, c.k_economic),
        _ => (1.0, 1.0),
    };
    let mut mean = vec![e.sponsor.mean, e.refugee.mean * kr, e.economic.mean * ke];
    let mut var = vec![e.sponsor.std.powi(2), e.refugee.std.powi(2), e.economic.std.powi(2)];
    if net.total_mode == TotalMode::Fitted {
        let t = e.total.expect("validated");
        let shift = e.refugee.mean * (kr - 1.0) + e.economic.mean * (ke - 1.0);
        mean.push(t.mean + shift);
        var.push(t.std.powi(2));
    }
    (DVector::from_vec(mean), DMatrix::from_diagonal(&DVector::from_vec(var)))
}

fn crisis_branches(net: &CGNetwork) -> Vec<(Option<bool>, f64)> {
    match net.crisis {
        None => vec![(None, 1.0)],
        Some(c) => vec![(Some(false), 1.0 - c.probability), (Some(true), c.probability)],
    }
}

/// Condition `(mean, cov)` on findings `z = H x + noise`; returns the
/// posterior and the log marginal likelihood of the findings.
fn condition(
    mode: TotalMode,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    evidence: &Evidence,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let k = evidence.soft.len();
    if k == 0 {
        return Ok((mean.clone(), cov.clone(), 0.0));
    }
    let n = mean.len();
    let mut h = DMatrix::zeros(k, n);
    let mut z = DVector::zeros(k);
    let mut noise = DVector::zeros(k);
    for (i, (node, g)) in evidence.soft.iter().enumerate() {
        h.set_row(i, &selector(mode, *node).transpose());
        z[i] = g.mean;
        noise[i] = g.variance();
    }
    let s = &h * cov * h.transpose() + DMatrix::from_diagonal(&noise);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InconsistentEvidence("finding covariance is not positive definite".into()))?;
    let innov = &z - &h * mean;
    let s_inv_innov = chol.solve(&innov);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_lik = -0.5 * (innov.dot(&s_inv_innov) + log_det + k as f64 * LN_2PI);
    let gain = cov * h.transpose() * chol.inverse();
    let post_mean = mean + &gain * innov;
    let post_cov = cov - &gain * &h * cov;
    let post_cov = (&post_cov + post_cov.transpose()) * 0.5;
    Ok((post_mean, post_cov, log_lik))
}

fn branches(net: &CGNetwork, evidence: &Evidence) -> Result<Vec<Branch>> {
    if let Some(p) = evidence.province {
        let e = net.entry(p).map_err(|_| {
            Error::InconsistentEvidence(format!("province {p} is not a state of this network"))
        })?;
        if e.prior <= 0.0 {
            return Err(Error::InconsistentEvidence(format!("province {p} has zero prior probability")));
        }
    }
    let mut out = Vec::new();
    for (idx, e) in net.provinces.iter().enumerate() {
        if evidence.province.is_some_and(|p| p != e.province) {
            continue;
        }
        for (crisis, pc) in crisis_branches(net) {
            if pc <= 0.0 {
                continue;
            }
            let (m, c) = prior_moments(net, idx, crisis == Some(true));
            let (pm, pcov, ll) = condition(net.total_mode, &m, &c, evidence)?;
            let prior = if evidence.province.is_some() { 1.0 } else { e.prior };
            out.push(Branch {
                province: e.province,
                crisis,
                log_weight: prior.ln() + pc.ln() + ll,
                mean: pm,
                cov: pcov,
            });
        }
    }
    let max = out.iter().map(|b| b.log_weight).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InconsistentEvidence(format!(
            "evidence '{evidence}' has zero probability under every province"
        )));
    }
    let lse = max + out.iter().map(|b| (b.log_weight - max).exp()).sum::<f64>().ln();
    for b in &mut out {
        b.log_weight -= lse;
    }
    Ok(out)
}

/// Posterior probability of every province state, in network order.
pub fn posterior_province(net: &CGNetwork, evidence: &Evidence) -> Result<Vec<(Province, f64)>> {
    if evidence.soft.is_empty() {
        if let Some(p) = evidence.province {
            branches(net, evidence)?;
            return Ok(net
                .provinces
                .iter()
                .map(|e| (e.province, if e.province == p { 1.0 } else { 0.0 }))
                .collect());
        }
        return Ok(net.provinces.iter().map(|e| (e.province, e.prior)).collect());
    }
    let bs = branches(net, evidence)?;
    Ok(net
        .provinces
        .iter()
        .map(|e| {
            let w = bs
                .iter()
                .filter(|b| b.province == e.province)
                .map(|b| b.log_weight.exp())
                .sum();
            (e.province, w)
        })
        .collect())
}

/// Posterior of `target` as a mixture over provinces (and crisis branches).
pub fn posterior_node(net: &CGNetwork, target: Stream, evidence: &Evidence) -> Result<GaussianMixture> {
    let prior = posterior_province(net, evidence)?;
    let bs = branches(net, evidence)?;
    let a = selector(net.total_mode, target);
    let components = bs
        .iter()
        .map(|b| {
            let var = (&a.transpose() * &b.cov * &a)[(0, 0)].max(f64::MIN_POSITIVE);
            let weight = if evidence.soft.is_empty() {
                let (_, pw) = prior.iter().find(|(p, _)| *p == b.province).expect("province");
                let pc = crisis_branches(net)
                    .into_iter()
                    .find(|(c, _)| *c == b.crisis)
                    .map_or(1.0, |(_, w)| w);
                pw * pc
            } else {
                b.log_weight.exp()
            };
            MixtureComponent {
                province: b.province,
                crisis: b.crisis,
                weight,
                gaussian: Gaussian {
                    mean: a.dot(&b.mean),
                    std: var.sqrt(),
                },
            }
        })
        .collect();
    Ok(GaussianMixture { components })
}

/// Marginal likelihood `∫ N(m; x, s) p(x | province) dx` of one soft
/// finding, averaged over crisis branches.
pub fn soft_evidence_likelihood(net: &CGNetwork, province: Province, node: Stream, finding: Gaussian) -> Result<f64> {
    let idx = net
        .provinces
        .iter()
        .position(|e| e.province == province)
        .ok_or_else(|| Error::Config(format!("province {province} is not in the network")))?;
    let a = selector(net.total_mode, node);
    Ok(crisis_branches(net)
        .into_iter()
        .map(|(c, pc)| {
            let (m, cov) = prior_moments(net, idx, c == Some(true));
            let var = (&a.transpose() * &cov * &a)[(0, 0)] + finding.variance();
            pc * Gaussian {
                mean: a.dot(&m),
                std: var.sqrt(),
            }
            .pdf(finding.mean)
        })
        .sum())
}

/// Posterior stream means, overall and per province.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeans {
    pub sponsor: f64,
    pub refugee: f64,
    pub economic: f64,
    pub total: f64,
    /// `(province, weight, [sponsor, refugee, economic, total])`.
    pub by_province: Vec<(Province, f64, [f64; 4])>,
}

/// Split the (posterior) Total into its three streams. Requires the
/// structural sum.
pub fn decompose_total(net: &CGNetwork, evidence: &Evidence) -> Result<StreamMeans> {
    if net.total_mode != TotalMode::Structural {
        return Err(Error::Mode(
            "Total decomposition needs a structural network (total_mode = \"structural\")".into(),
        ));
    }
    let bs = branches(net, evidence)?;
    let mut by_province: Vec<(Province, f64, [f64; 4])> = Vec::new();
    for b in &bs {
        let w = b.log_weight.exp();
        let m = [b.mean[0], b.mean[1], b.mean[2], b.mean.sum()];
        match by_province.iter_mut().find(|(p, _, _)| *p == b.province) {
            Some((_, pw, acc)) => {
                for i in 0..4 {
                    acc[i] = (acc[i] * *pw + m[i] * w) / (*pw + w).max(f64::MIN_POSITIVE);
                }
                *pw += w;
            }
            None => by_province.push((b.province, w, m)),
        }
    }
    let mix = |i: usize| bs.iter().map(|b| b.log_weight.exp() * b.mean[i]).sum::<f64>();
    let (sponsor, refugee, economic) = (mix(0), mix(1), mix(2));
    Ok(StreamMeans {
        sponsor,
        refugee,
        economic,
        total: bs.iter().map(|b| b.log_weight.exp() * b.mean.sum()).sum(),
        by_province,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{NodeParam, ProvinceEntry};

    fn entry(p: Province, prior: f64, s: (f64, f64), r: (f64, f64), e: (f64, f64)) -> ProvinceEntry {
        ProvinceEntry {
            province: p,
            prior,
            sponsor: NodeParam::new(s.0, s.1),
            refugee: NodeParam::new(r.0, r.1),
            economic: NodeParam::new(e.0, e.1),
            total: None,
            published_total: None,
        }
    }

    fn two_province() -> CGNetwork {
        CGNetwork::new(
            TotalMode::Structural,
            None,
            vec![
                entry(Province::ON, 0.5, (5.0, 1.0), (10.0, 1.0), (20.0, 2.0)),
                entry(Province::QC, 0.5, (5.0, 1.0), (20.0, 1.0), (20.0, 2.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn likelihood_hand_value() {
        let net = CGNetwork::new(
            TotalMode::Structural,
            None,
            vec![entry(Province::ON, 1.0, (1.0, 1.0), (15.0, 2.0), (1.0, 1.0))],
        )
        .unwrap();
        let v = soft_evidence_likelihood(&net, Province::ON, Stream::Refugee, Gaussian::new(15.0, 2.0).unwrap()).unwrap();
        let expected = 1.0 / (8f64.sqrt() * (2.0 * std::f64::consts::PI).sqrt());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.1410).abs() < 5e-5);
        let sharp =
            soft_evidence_likelihood(&net, Province::ON, Stream::Refugee, Gaussian::new(15.0, 1e-9).unwrap()).unwrap();
        assert!((sharp - 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn no_evidence_returns_prior_exactly() {
        let net = CGNetwork::published_snapshot();
        let post = posterior_province(&net, &Evidence::none()).unwrap();
        assert!(post.iter().all(|(_, w)| *w == 0.1));
    }

    #[test]
    fn hard_province_is_point_mass() {
        let net = CGNetwork::published_snapshot();
        let post = posterior_province(&net, &Evidence::province(Province::ON)).unwrap();
        for (p, w) in post {
            assert_eq!(w, if p == Province::ON { 1.0 } else { 0.0 });
        }
        let mix = posterior_node(&net, Stream::Total, &Evidence::province(Province::ON)).unwrap();
        assert_eq!(mix.components.len(), 1);
        assert!((mix.mean() - 114.15).abs() < 1e-9);
        assert!((mix.std() - 31.80).abs() < 1e-9);
    }

    #[test]
    fn sharp_finding_picks_province() {
        let net = two_province();
        let post = posterior_province(&net, &Evidence::soft(Stream::Refugee, 10.0, 0.5).unwrap()).unwrap();
        assert!(post[0].1 > 1.0 - 1e-12);
    }

    #[test]
    fn uninformative_finding_keeps_prior() {
        let net = two_province();
        let post = posterior_province(&net, &Evidence::soft(Stream::Refugee, 12.0, 1e7).unwrap()).unwrap();
        assert!((post[0].1 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn total_given_component_finding() {
        let net = CGNetwork::new(
            TotalMode::Structural,
            None,
            vec![entry(Province::ON, 1.0, (5.0, 1.0), (10.0, 2.0), (20.0, 2.0))],
        )
        .unwrap();
        let mix = posterior_node(&net, Stream::Total, &Evidence::soft(Stream::Refugee, 14.0, 2.0).unwrap()).unwrap();
        // refugee posterior N(12, √2); others N(25, √5)
        let g = mix.components[0].gaussian;
        assert!((g.mean - 37.0).abs() < 1e-12);
        assert!((g.std - 7f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn decomposition_sums_and_mode_check() {
        let net = CGNetwork::published_snapshot();
        let ev = Evidence::soft(Stream::Total, 150.0, 2.0).unwrap();
        let d = decompose_total(&net, &ev).unwrap();
        assert!((d.sponsor + d.refugee + d.economic - d.total).abs() < 1e-9);
        let t = posterior_node(&net, Stream::Total, &ev).unwrap().mean();
        assert!((t - d.total).abs() < 1e-9);
        let mut fitted = net.clone();
        fitted.total_mode = TotalMode::Fitted;
        for e in &mut fitted.provinces {
            e.total = Some(NodeParam::new(1.0, 1.0));
            e.published_total = None;
        }
        assert!(matches!(decompose_total(&fitted, &ev), Err(Error::Mode(_))));
    }

    #[test]
    fn evidence_at_prior_mean_does_not_shift_streams() {
        let net = CGNetwork::new(
            TotalMode::Structural,
            None,
            vec![entry(Province::NS, 1.0, (5.0, 1.0), (10.0, 2.0), (20.0, 2.0))],
        )
        .unwrap();
        let d = decompose_total(&net, &Evidence::soft(Stream::Total, 35.0, 3.0).unwrap()).unwrap();
        assert!((d.sponsor - 5.0).abs() < 1e-12);
        assert!((d.refugee - 10.0).abs() < 1e-12);
        assert!((d.economic - 20.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_province_is_inconsistent() {
        let net = two_province();
        let err = posterior_province(&net, &Evidence::province(Province::PE)).unwrap_err();
        assert!(matches!(err, Error::InconsistentEvidence(_)));
    }
}
