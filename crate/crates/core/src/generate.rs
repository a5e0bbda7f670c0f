//! Instance generators: the two-point tightness family, the adversarial ring
//! schedule, and seeded random instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{AnyInstance, Instance, InstanceError, Polarity, Variant};
use crate::metric::{Metric, MetricKind, Point};
use crate::scalar::{Exact, Float, Scalar};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Release times of the two-point family: `0` followed by
/// `1 + (2j - 3)/m` for `j = 2..=m`.
pub fn tightness_release_times(m: usize) -> Vec<Exact> {
    let mi = m as i64;
    (1..=mi)
        .map(|j| {
            if j == 1 {
                Exact::from_int(0)
            } else {
                Exact::from_int(1) + Exact::from_ratio(2 * j - 3, mi)
            }
        })
        .collect()
}

/// Two points `p`, `q` at distance 2 with one request at each point per
/// release time (`p` first). In the bipartite variant requests at `p`
/// alternate `+, -, +, ...` and requests at `q` carry the opposite sign.
pub fn gen_tightness_instance(m: usize, variant: Variant) -> Result<Instance<Exact>, GenError> {
    if m < 2 || m % 2 != 0 {
        return Err(GenError::BadParam(format!(
            "tightness instance needs an even m >= 2, got {m}"
        )));
    }
    let zero = Exact::from_int(0);
    let two = Exact::from_int(2);
    let metric = Metric::Matrix(vec![vec![zero.clone(), two.clone()], vec![two, zero]]);
    let mut requests = Vec::with_capacity(2 * m);
    for (j, t) in tightness_release_times(m).into_iter().enumerate() {
        let (at_p, at_q) = match variant {
            Variant::Mpmd => (Polarity::Neutral, Polarity::Neutral),
            Variant::Mbpmd if j % 2 == 0 => (Polarity::Positive, Polarity::Negative),
            Variant::Mbpmd => (Polarity::Negative, Polarity::Positive),
        };
        requests.push((Point::Index(0), t.clone(), at_p));
        requests.push((Point::Index(1), t, at_q));
    }
    Ok(Instance::new(variant, metric, requests)?)
}

/// Which half of the ring the first two requests are joined through.
/// `Counterclockwise` is the mirror image of `Clockwise`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RingHalf {
    #[default]
    Clockwise,
    Counterclockwise,
}

/// Positions of the first `m/2` requests on a ring of circumference 1,
/// before mirroring: `0`, `1/2`, then repeatedly the midpoint of the
/// uncovered arc, with the covered arc extending clockwise.
pub fn ring_phase_one_positions(m: usize) -> Vec<Exact> {
    let h = Exact::from_int(1);
    let start = Exact::from_int(0);
    let mut end = Exact::from_ratio(1, 2);
    let mut out = vec![start.clone(), end.clone()];
    while out.len() < m / 2 {
        let mid = (end.clone() + start.clone() + h.clone()) / Exact::from_int(2);
        out.push(mid.clone());
        end = mid;
    }
    out
}

/// `ε = h / (m · 2^(m-1))` for the ring schedule with `h = 1`.
pub fn ring_epsilon(m: usize) -> Exact {
    let denom = num_bigint::BigInt::from(m) << (m - 1);
    Exact::new(1.into(), denom)
}

/// Adversarial ring schedule (non-bipartite), circumference 1.
///
/// Phase 1 places `m/2` requests (two antipodal ones at time 0, the rest at
/// the midpoint of the uncovered arc at times `2(j-1)/m · ε`); phase 2
/// repeats those positions at time `ε`; phase 3 releases `m/2` pairs at the
/// two ends `p`, `q` of the covered arc, pair `k` at time `ε · (1 + k)`.
pub fn gen_ring_instance(m: usize, half: RingHalf) -> Result<Instance<Exact>, GenError> {
    if m < 6 || m % 2 != 0 {
        return Err(GenError::BadParam(format!(
            "ring instance needs an even m >= 6, got {m}"
        )));
    }
    let metric = Metric::ring(Exact::from_int(1));
    let eps = ring_epsilon(m);
    let mi = m as i64;
    let place = |x: Exact| {
        let x = match half {
            RingHalf::Clockwise => x,
            RingHalf::Counterclockwise => -x,
        };
        metric.ring_point(x).expect("ring metric")
    };
    let phase_one = ring_phase_one_positions(m);
    let p = phase_one[0].clone();
    let q = phase_one.last().cloned().expect("m/2 >= 3 positions");

    let mut requests = Vec::with_capacity(2 * m);
    for (j, x) in phase_one.iter().enumerate() {
        let t = if j < 2 {
            Exact::from_int(0)
        } else {
            // j is 0-based; the 1-based index is j + 1.
            Exact::from_ratio(2 * j as i64, mi) * eps.clone()
        };
        requests.push((place(x.clone()), t, Polarity::Neutral));
    }
    for x in &phase_one {
        requests.push((place(x.clone()), eps.clone(), Polarity::Neutral));
    }
    for k in 1..=mi / 2 {
        let t = eps.clone() * Exact::from_int(1 + k);
        requests.push((place(p.clone()), t.clone(), Polarity::Neutral));
        requests.push((place(q.clone()), t, Polarity::Neutral));
    }
    Ok(Instance::new(Variant::Mpmd, metric, requests)?)
}

/// Parameters of a seeded random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub seed: u64,
    pub m: usize,
    pub variant: Variant,
    pub metric: MetricKind,
    /// Arrival times are drawn from `[0, horizon]`.
    pub horizon: u32,
    /// Positions are drawn from `[0, spread]` (ring circumference, matrix
    /// edge weights, line and plane extent).
    pub spread: u32,
}

impl RandomSpec {
    pub fn new(seed: u64, m: usize, variant: Variant, metric: MetricKind) -> Self {
        RandomSpec {
            seed,
            m,
            variant,
            metric,
            horizon: 8,
            spread: 8,
        }
    }
}

/// Deterministic function of `spec`. Exact mode for every metric except
/// euclidean, which is generated in float mode.
pub fn gen_random_instance(spec: &RandomSpec) -> Result<AnyInstance, GenError> {
    if spec.m == 0 {
        return Err(GenError::BadParam("random instance needs m >= 1".into()));
    }
    if spec.spread == 0 {
        return Err(GenError::BadParam("spread must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = 2 * spec.m;
    let signs = random_signs(&mut rng, spec.variant, spec.m);
    if spec.metric == MetricKind::Euclidean {
        let mut times: Vec<Float> = (0..n)
            .map(|_| rng.gen_range(0.0..=spec.horizon as f64))
            .collect();
        times.sort_by(f64::total_cmp);
        let s = spec.spread as f64;
        let requests = times
            .into_iter()
            .zip(signs)
            .map(|(t, sgn)| (Point::Plane(rng.gen_range(0.0..s), rng.gen_range(0.0..s)), t, sgn))
            .collect();
        return Ok(Instance::new(spec.variant, Metric::Euclidean, requests)?.into());
    }

    let mut ticks: Vec<i64> = (0..n)
        .map(|_| rng.gen_range(0..=2 * spec.horizon as i64))
        .collect();
    ticks.sort_unstable();
    let times = ticks.into_iter().map(|k| Exact::from_ratio(k, 2));
    let spread = spec.spread as i64;
    let (metric, positions): (Metric<Exact>, Vec<Point<Exact>>) = match spec.metric {
        MetricKind::Line => (
            Metric::Line,
            (0..n)
                .map(|_| Point::Line(Exact::from_ratio(rng.gen_range(0..=2 * spread), 2)))
                .collect(),
        ),
        MetricKind::Ring => {
            let metric = Metric::ring(Exact::from_int(spread));
            let positions = (0..n)
                .map(|_| {
                    let x = Exact::from_ratio(rng.gen_range(0..4 * spread), 4);
                    metric.ring_point(x).expect("ring metric")
                })
                .collect();
            (metric, positions)
        }
        MetricKind::Matrix => {
            let points = rng.gen_range(2..=n.clamp(2, 6));
            let metric = Metric::Matrix(random_closure(&mut rng, points, spread));
            let positions = (0..n).map(|_| Point::Index(rng.gen_range(0..points))).collect();
            (metric, positions)
        }
        MetricKind::Euclidean => unreachable!("handled above"),
    };
    let requests = positions
        .into_iter()
        .zip(times)
        .zip(signs)
        .map(|((p, t), s)| (p, t, s))
        .collect();
    Ok(Instance::new(spec.variant, metric, requests)?.into())
}

fn random_signs(rng: &mut ChaCha8Rng, variant: Variant, m: usize) -> Vec<Polarity> {
    match variant {
        Variant::Mpmd => vec![Polarity::Neutral; 2 * m],
        Variant::Mbpmd => {
            let mut s: Vec<Polarity> = std::iter::repeat(Polarity::Positive)
                .take(m)
                .chain(std::iter::repeat(Polarity::Negative).take(m))
                .collect();
            s.shuffle(rng);
            s
        }
    }
}

/// Shortest-path closure of random integer weights in `1..=max_weight`.
fn random_closure(rng: &mut ChaCha8Rng, n: usize, max_weight: i64) -> Vec<Vec<Exact>> {
    let mut d = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = rng.gen_range(1..=max_weight);
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(Exact::from_int).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    #[test]
    fn tightness_m2() {
        let inst = gen_tightness_instance(2, Variant::Mpmd).unwrap();
        let times: Vec<_> = inst.requests().iter().map(|r| r.atime.clone()).collect();
        assert_eq!(times, vec![q(0, 1), q(0, 1), q(3, 2), q(3, 2)]);
        assert_eq!(inst.distance(0, 1), q(2, 1));
    }

    #[test]
    fn tightness_m4_release_times() {
        assert_eq!(
            tightness_release_times(4),
            vec![q(0, 1), q(5, 4), q(7, 4), q(9, 4)]
        );
        let inst = gen_tightness_instance(4, Variant::Mpmd).unwrap();
        assert_eq!(inst.len(), 8);
    }

    #[test]
    fn tightness_bipartite_signs() {
        let inst = gen_tightness_instance(2, Variant::Mbpmd).unwrap();
        let signs: Vec<i64> = inst.requests().iter().map(|r| r.sgn.sign()).collect();
        // p, q, p, q
        assert_eq!(signs, vec![1, -1, -1, 1]);
    }

    #[test]
    fn tightness_rejects_odd_or_small() {
        assert!(gen_tightness_instance(3, Variant::Mpmd).is_err());
        assert!(gen_tightness_instance(0, Variant::Mpmd).is_err());
    }

    #[test]
    fn tightness_size_and_last_time() {
        for m in [2usize, 4, 10, 20] {
            let inst = gen_tightness_instance(m, Variant::Mbpmd).unwrap();
            assert_eq!(inst.len(), 2 * m);
            let last = inst.requests().last().unwrap().atime.clone();
            assert_eq!(last, q(1, 1) + q(2 * m as i64 - 3, m as i64));
        }
    }

    #[test]
    fn ring_m6() {
        assert_eq!(ring_epsilon(6), q(1, 192));
        let inst = gen_ring_instance(6, RingHalf::Clockwise).unwrap();
        assert_eq!(inst.len(), 12);
        let pos: Vec<_> = inst.requests()[..3].iter().map(|r| r.pos.clone()).collect();
        assert_eq!(
            pos,
            vec![Point::Ring(q(0, 1)), Point::Ring(q(1, 2)), Point::Ring(q(3, 4))]
        );
        let eps = q(1, 192);
        assert_eq!(inst.request(2).atime, q(2 * 2, 6) * eps.clone());
        assert!(inst.requests()[3..6].iter().all(|r| r.atime == eps));
        // p = 0 and q = 3/4 are 1/4 apart on the ring.
        assert_eq!(inst.distance(6, 7), q(1, 4));
        assert_eq!(inst.request(11).atime, eps * q(4, 1));
    }

    #[test]
    fn ring_uncovered_arc_halves() {
        let m = 12;
        let pos = ring_phase_one_positions(m);
        assert_eq!(pos.len(), m / 2);
        let last = pos.last().unwrap().clone();
        let gap = q(1, 1) - last;
        assert_eq!(gap, q(1, 1 << (m / 2 - 1)));
    }

    #[test]
    fn ring_counterclockwise_mirrors() {
        let inst = gen_ring_instance(6, RingHalf::Counterclockwise).unwrap();
        assert_eq!(inst.request(2).pos, Point::Ring(q(1, 4)));
    }

    #[test]
    fn ring_rejects_small() {
        assert!(gen_ring_instance(4, RingHalf::Clockwise).is_err());
        assert!(gen_ring_instance(7, RingHalf::Clockwise).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let spec = RandomSpec::new(1, 3, Variant::Mpmd, MetricKind::Line);
        let a = gen_random_instance(&spec).unwrap().to_json_string();
        let b = gen_random_instance(&spec).unwrap().to_json_string();
        assert_eq!(a, b);
        let c = gen_random_instance(&RandomSpec { seed: 2, ..spec }).unwrap().to_json_string();
        assert_ne!(a, c);
    }

    #[test]
    fn random_covers_all_metrics() {
        for metric in [MetricKind::Line, MetricKind::Matrix, MetricKind::Ring, MetricKind::Euclidean] {
            for variant in [Variant::Mpmd, Variant::Mbpmd] {
                for seed in 0..20 {
                    let inst = gen_random_instance(&RandomSpec::new(seed, 4, variant, metric)).unwrap();
                    assert_eq!(inst.m(), 4);
                    assert_eq!(inst.variant(), variant);
                }
            }
        }
    }
}
