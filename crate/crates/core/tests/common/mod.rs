//! Independent inference oracles: trapezoid quadrature over the latent
//! streams and likelihood-weighted forward sampling of the generative model.
#![allow(dead_code)]

use migcast_core::causal::{CGNetwork, CrisisSpec, Evidence, Gaussian, NodeParam, ProvinceEntry, TotalMode};
use migcast_core::data::{Province, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub struct Case {
    pub net: CGNetwork,
    pub evidence: Evidence,
    pub target: Stream,
}

fn node_param(rng: &mut impl Rng) -> NodeParam {
    NodeParam::new(rng.gen_range(0.0..30.0), rng.gen_range(1.0..4.0))
}

/// Network over 1 to 3 provinces with random priors, mode and crisis.
pub fn random_net(rng: &mut impl Rng) -> CGNetwork {
    let k = rng.gen_range(1..=3);
    let provinces: Vec<Province> = Province::ALL.choose_multiple(rng, k).copied().collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mode = if rng.gen_bool(0.5) { TotalMode::Structural } else { TotalMode::Fitted };
    let mut entries: Vec<ProvinceEntry> = provinces
        .iter()
        .zip(&raw)
        .map(|(&p, w)| ProvinceEntry {
            province: p,
            prior: w / sum,
            sponsor: node_param(rng),
            refugee: node_param(rng),
            economic: node_param(rng),
            total: (mode == TotalMode::Fitted).then(|| NodeParam::new(rng.gen_range(0.0..90.0), rng.gen_range(1.0..4.0))),
            published_total: None,
        })
        .collect();
    // exact renormalization so the prior sums to 1 within rounding
    let s: f64 = entries.iter().map(|e| e.prior).sum();
    entries[0].prior += 1.0 - s;
    let crisis = rng.gen_bool(0.3).then(|| CrisisSpec {
        probability: rng.gen_range(0.0..1.0),
        k_refugee: rng.gen_range(0.5..2.0),
        k_economic: rng.gen_range(0.5..2.0),
    });
    CGNetwork::new(mode, crisis, entries).expect("random network is valid")
}

const NODES: [Stream; 4] = [Stream::Sponsor, Stream::Refugee, Stream::Economic, Stream::Total];

/// Random net with up to `max_soft` soft findings, an optional hard
/// province and a random target node.
pub fn random_case(rng: &mut impl Rng, max_soft: usize) -> Case {
    let net = random_net(rng);
    let mut evidence = Evidence::none();
    if rng.gen_bool(0.15) {
        evidence.province = Some(net.provinces.choose(rng).unwrap().province);
    }
    let n_soft = rng.gen_range(0..=max_soft);
    let mut nodes = NODES.to_vec();
    nodes.shuffle(rng);
    for &node in nodes.iter().take(n_soft) {
        // centre the finding near a random province's prior for that node
        let p = net.provinces.choose(rng).unwrap().province;
        let g = net.province_conditional(p, node).unwrap();
        let m = g.mean + rng.gen_range(-1.5..1.5) * g.std;
        let s = rng.gen_range(1.0..4.0);
        evidence.soft.insert(node, Gaussian::new(m, s).unwrap());
    }
    let target = *NODES.choose(rng).unwrap();
    Case { net, evidence, target }
}

/// Latent component moments `(mean, var)` for one province and crisis
/// branch; index 3 is the fitted Total when present.
fn components(net: &CGNetwork, e: &ProvinceEntry, crisis_on: bool) -> Vec<(f64, f64)> {
    let (kr, ke) = match (net.crisis, crisis_on) {
        (Some(c), true) => (c.k_refugee, c.k_economic),
        _ => (1.0, 1.0),
    };
    let mut v = vec![
        (e.sponsor.mean, e.sponsor.std.powi(2)),
        (e.refugee.mean * kr, e.refugee.std.powi(2)),
        (e.economic.mean * ke, e.economic.std.powi(2)),
    ];
    if let Some(t) = e.total {
        let shift = e.refugee.mean * (kr - 1.0) + e.economic.mean * (ke - 1.0);
        v.push((t.mean + shift, t.std.powi(2)));
    }
    v
}

/// Which latent components make up `node`.
fn members(mode: TotalMode, node: Stream) -> Vec<usize> {
    match (node, mode) {
        (Stream::Sponsor, _) => vec![0],
        (Stream::Refugee, _) => vec![1],
        (Stream::Economic, _) => vec![2],
        (Stream::Total, TotalMode::Structural) => vec![0, 1, 2],
        (Stream::Total, TotalMode::Fitted) => vec![3],
    }
}

fn branches(net: &CGNetwork, ev: &Evidence) -> Vec<(f64, Vec<(f64, f64)>, Province)> {
    let mut out = Vec::new();
    for e in &net.provinces {
        let prior = match ev.province {
            Some(p) if p != e.province => continue,
            Some(_) => 1.0,
            None => e.prior,
        };
        let cs: Vec<(bool, f64)> = match net.crisis {
            None => vec![(false, 1.0)],
            Some(c) => vec![(false, 1.0 - c.probability), (true, c.probability)],
        };
        for (on, pc) in cs {
            out.push((prior * pc, components(net, e, on), e.province));
        }
    }
    out
}

fn gauss(x: f64, m: f64, var: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Trapezoid nodes covering `mean ± 10 sd` widened by `shift`.
fn grid(mean: f64, sd: f64, shift: f64, h: f64) -> Vec<f64> {
    let lo = mean.min(mean + shift) - 10.0 * sd;
    let hi = mean.max(mean + shift) + 10.0 * sd;
    let n = ((hi - lo) / h).ceil() as usize + 1;
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

pub struct Moments {
    pub province: Vec<(Province, f64)>,
    pub mean: f64,
    pub var: f64,
}

/// Quadrature oracle for evidence with at most one soft finding. Latent
/// components are grouped by whether they feed the finding node, the
/// target node or both, so at most two dimensions are integrated.
pub fn quadrature(net: &CGNetwork, ev: &Evidence, target: Stream) -> Moments {
    assert!(ev.soft.len() <= 1, "quadrature oracle handles one soft finding");
    let finding = ev.soft.iter().next().map(|(n, g)| (members(net.total_mode, *n), *g));
    let tgt = members(net.total_mode, target);
    let h = 0.1;
    let mut z_by_prov: Vec<(Province, f64)> = net.provinces.iter().map(|e| (e.province, 0.0)).collect();
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (w, comps, prov) in branches(net, ev) {
        // groups: (in finding, in target)
        let mut groups: Vec<((bool, bool), f64, f64)> = Vec::new();
        for (i, &(m, v)) in comps.iter().enumerate() {
            let key = (
                finding.as_ref().is_some_and(|(f, _)| f.contains(&i)),
                tgt.contains(&i),
            );
            if key == (false, false) {
                continue;
            }
            match groups.iter_mut().find(|(k, _, _)| *k == key) {
                Some((_, gm, gv)) => {
                    *gm += m;
                    *gv += v;
                }
                None => groups.push((key, m, v)),
            }
        }
        let f_mean: f64 = groups.iter().filter(|g| g.0 .0).map(|g| g.1).sum();
        let shift = finding.as_ref().map_or(0.0, |(_, g)| g.mean - f_mean);
        let grids: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| grid(g.1, g.2.sqrt(), if g.0 .0 { shift } else { 0.0 }, h))
            .collect();
        let weight_of = |idx: &[usize]| -> (f64, f64) {
            // density, target value
            let mut dens = 1.0;
            let mut fval = 0.0;
            let mut tval = 0.0;
            for (j, g) in groups.iter().enumerate() {
                let x = grids[j][idx[j]];
                dens *= gauss(x, g.1, g.2);
                if g.0 .0 {
                    fval += x;
                }
                if g.0 .1 {
                    tval += x;
                }
            }
            if let Some((_, fg)) = &finding {
                dens *= gauss(fg.mean, fval, fg.variance());
            }
            (dens, tval)
        };
        let trap = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let (mut bz, mut b1, mut b2) = (0.0, 0.0, 0.0);
        match groups.len() {
            1 => {
                let n = grids[0].len();
                let step = grids[0][1] - grids[0][0];
                for i in 0..n {
                    let (d, t) = weight_of(&[i]);
                    let c = trap(i, n) * step * d;
                    bz += c;
                    b1 += c * t;
                    b2 += c * t * t;
                }
            }
            2 => {
                let (n0, n1) = (grids[0].len(), grids[1].len());
                let area = (grids[0][1] - grids[0][0]) * (grids[1][1] - grids[1][0]);
                for i in 0..n0 {
                    for j in 0..n1 {
                        let (d, t) = weight_of(&[i, j]);
                        let c = trap(i, n0) * trap(j, n1) * area * d;
                        bz += c;
                        b1 += c * t;
                        b2 += c * t * t;
                    }
                }
            }
            n => panic!("unexpected {n} latent groups"),
        }
        z += w * bz;
        m1 += w * b1;
        m2 += w * b2;
        z_by_prov.iter_mut().find(|(p, _)| *p == prov).unwrap().1 += w * bz;
    }
    let mean = m1 / z;
    Moments {
        province: z_by_prov.into_iter().map(|(p, v)| (p, v / z)).collect(),
        mean,
        var: m2 / z - mean * mean,
    }
}

/// Likelihood-weighted sampling estimate with standard errors.
pub struct McEstimate {
    pub province: Vec<(Province, f64, f64)>,
    pub mean: (f64, f64),
    /// Second central moment about `center`, with its standard error.
    pub spread: (f64, f64),
}

pub fn monte_carlo(net: &CGNetwork, ev: &Evidence, target: Stream, center: f64, n: usize, rng: &mut impl Rng) -> McEstimate {
    let bs = branches(net, ev);
    let total_w: f64 = bs.iter().map(|b| b.0).sum();
    let cumulative: Vec<f64> = bs
        .iter()
        .scan(0.0, |acc, b| {
            *acc += b.0 / total_w;
            Some(*acc)
        })
        .collect();
    let mut ws = Vec::with_capacity(n);
    let mut provs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let bi = cumulative.iter().position(|c| u < *c).unwrap_or(bs.len() - 1);
        let (_, comps, prov) = &bs[bi];
        let x: Vec<f64> = comps
            .iter()
            .map(|&(m, v)| m + v.sqrt() * { let z: f64 = StandardNormal.sample(rng); z })
            .collect();
        let value = |node: Stream| members(net.total_mode, node).iter().map(|&i| x[i]).sum::<f64>();
        let w: f64 = ev.soft.iter().map(|(node, g)| gauss(g.mean, value(*node), g.variance())).product();
        ws.push(w);
        provs.push(*prov);
        ts.push(value(target));
    }
    let sw: f64 = ws.iter().sum();
    let est = |f: &dyn Fn(usize) -> f64| {
        let theta = (0..n).map(|i| ws[i] * f(i)).sum::<f64>() / sw;
        let se = (0..n).map(|i| (ws[i] * (f(i) - theta)).powi(2)).sum::<f64>().sqrt() / sw;
        (theta, se)
    };
    let province = net
        .provinces
        .iter()
        .map(|e| {
            let (p, se) = est(&|i| if provs[i] == e.province { 1.0 } else { 0.0 });
            (e.province, p, se)
        })
        .collect();
    McEstimate {
        province,
        mean: est(&|i| ts[i]),
        spread: est(&|i| (ts[i] - center).powi(2)),
    }
}

/// Sampler for the crisis-marginal Refugee mean check.
pub fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).unwrap()
}
