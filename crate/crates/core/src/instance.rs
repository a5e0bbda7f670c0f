//! Request sequences, the eligible-edge structure and the instance JSON format.

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::metric::{Metric, MetricError, MetricKind, Point};
use crate::scalar::{Exact, Float, NumericMode, Scalar, ScalarError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Any two requests may be matched.
    Mpmd,
    /// Only requests of opposite polarity may be matched.
    Mbpmd,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mpmd => "mpmd",
            Variant::Mbpmd => "mbpmd",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpmd" => Ok(Variant::Mpmd),
            "mbpmd" => Ok(Variant::Mbpmd),
            other => Err(InstanceError::Schema(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i64 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            -1 => Some(Polarity::Negative),
            0 => Some(Polarity::Neutral),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Neutral => Polarity::Neutral,
            Polarity::Positive => Polarity::Negative,
        }
    }

    /// `sgn(u) = -sgn(v)`.
    pub fn can_match(self, other: Polarity) -> bool {
        self == other.opposite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request<S> {
    pub index: usize,
    pub pos: Point<S>,
    pub atime: S,
    pub sgn: Polarity,
}

/// An eligible pair and its dual-constraint budget `dist + |Δ atime|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<S> {
    pub u: usize,
    pub v: usize,
    pub cost: S,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed instance: {0}")]
    Schema(String),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("request {index} arrives before its predecessor")]
    NonMonotoneTimes { index: usize },
    #[error("request {index} has a negative arrival time")]
    NegativeTime { index: usize },
    #[error("odd number of requests ({0})")]
    OddCount(usize),
    #[error("unbalanced polarities: {positive} positive vs {negative} negative")]
    UnbalancedPolarity { positive: usize, negative: usize },
    #[error("request {index} has polarity {sign}, not allowed in a {variant} instance")]
    PolarityMismatch {
        index: usize,
        sign: i64,
        variant: Variant,
    },
    #[error("request {index} carries index {given}; indices must follow list order")]
    IndexMismatch { index: usize, given: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S> {
    variant: Variant,
    metric: Metric<S>,
    requests: Vec<Request<S>>,
}

impl<S: Scalar> Instance<S> {
    /// Builds and validates an instance. Indices are assigned in list order.
    pub fn new(
        variant: Variant,
        metric: Metric<S>,
        requests: Vec<(Point<S>, S, Polarity)>,
    ) -> Result<Self, InstanceError> {
        metric.check_mode()?;
        metric.validate().map_err(MetricError::from)?;
        let requests: Vec<Request<S>> = requests
            .into_iter()
            .enumerate()
            .map(|(index, (pos, atime, sgn))| Request {
                index,
                pos,
                atime,
                sgn,
            })
            .collect();
        if requests.len() % 2 != 0 {
            return Err(InstanceError::OddCount(requests.len()));
        }
        let (mut positive, mut negative) = (0, 0);
        for (i, r) in requests.iter().enumerate() {
            metric.check_point(&r.pos)?;
            if r.atime.is_negative() {
                return Err(InstanceError::NegativeTime { index: i });
            }
            if i > 0 && r.atime < requests[i - 1].atime {
                return Err(InstanceError::NonMonotoneTimes { index: i });
            }
            let allowed = match variant {
                Variant::Mpmd => r.sgn == Polarity::Neutral,
                Variant::Mbpmd => r.sgn != Polarity::Neutral,
            };
            if !allowed {
                return Err(InstanceError::PolarityMismatch {
                    index: i,
                    sign: r.sgn.sign(),
                    variant,
                });
            }
            match r.sgn {
                Polarity::Positive => positive += 1,
                Polarity::Negative => negative += 1,
                Polarity::Neutral => {}
            }
        }
        if positive != negative {
            return Err(InstanceError::UnbalancedPolarity { positive, negative });
        }
        Ok(Instance {
            variant,
            metric,
            requests,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn metric(&self) -> &Metric<S> {
        &self.metric
    }

    pub fn requests(&self) -> &[Request<S>] {
        &self.requests
    }

    pub fn request(&self, index: usize) -> &Request<S> {
        &self.requests[index]
    }

    /// Number of requests (`2m`).
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Number of pairs in any perfect matching.
    pub fn m(&self) -> usize {
        self.requests.len() / 2
    }

    pub fn atime(&self, u: usize) -> &S {
        &self.requests[u].atime
    }

    pub fn eligible(&self, u: usize, v: usize) -> bool {
        u != v && self.requests[u].sgn.can_match(self.requests[v].sgn)
    }

    /// Metric distance between the positions of two requests.
    pub fn distance(&self, u: usize, v: usize) -> S {
        self.metric
            .distance(&self.requests[u].pos, &self.requests[v].pos)
            .expect("points validated at construction")
    }

    /// `dist(pos(u), pos(v)) + |atime(u) - atime(v)|`, or `None` for an
    /// ineligible pair.
    pub fn edge_cost(&self, u: usize, v: usize) -> Option<S> {
        if !self.eligible(u, v) {
            return None;
        }
        let gap = (self.atime(u).clone() - self.atime(v).clone()).abs();
        Some(self.distance(u, v) + gap)
    }

    /// Every eligible pair `u < v` with its cost.
    pub fn edges(&self) -> Vec<Edge<S>> {
        let n = self.len();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if let Some(cost) = self.edge_cost(u, v) {
                    out.push(Edge { u, v, cost });
                }
            }
        }
        out
    }

    /// Requests left unmatched by a maximum matching inside `members`.
    pub fn surplus<I: IntoIterator<Item = usize>>(&self, members: I) -> usize {
        surplus_of(
            self.variant,
            members.into_iter().map(|u| self.requests[u].sgn),
        )
    }

    pub fn to_json(&self) -> Value {
        let requests: Vec<Value> = self
            .requests
            .iter()
            .map(|r| {
                json!({
                    "pos": r.pos.to_json(),
                    "atime": r.atime.to_json(),
                    "sgn": r.sgn.sign(),
                })
            })
            .collect();
        json!({
            "variant": self.variant.as_str(),
            "mode": S::MODE.as_str(),
            "metric": self.metric.to_json(),
            "requests": requests,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("values are finite");
        s.push('\n');
        s
    }

    fn from_document(doc: &Document) -> Result<Self, InstanceError> {
        let metric = parse_metric::<S>(&doc.metric)?;
        metric.check_mode()?;
        let mut requests = Vec::with_capacity(doc.requests.len());
        for (i, raw) in doc.requests.iter().enumerate() {
            let obj = raw
                .as_object()
                .ok_or_else(|| InstanceError::Schema(format!("request {i} is not an object")))?;
            if let Some(given) = obj.get("index") {
                let given = given.as_u64().ok_or_else(|| {
                    InstanceError::Schema(format!("request {i}: index must be an integer"))
                })?;
                if given != i as u64 {
                    return Err(InstanceError::IndexMismatch { index: i, given });
                }
            }
            let pos = parse_point(&metric, field(obj, "pos", i)?)
                .map_err(|e| InstanceError::Schema(format!("request {i}: {e}")))?;
            let atime = S::from_json(field(obj, "atime", i)?)?;
            let sign = field(obj, "sgn", i)?
                .as_i64()
                .and_then(Polarity::from_sign)
                .ok_or_else(|| InstanceError::Schema(format!("request {i}: sgn must be -1, 0 or 1")))?;
            requests.push((pos, atime, sign));
        }
        Instance::new(doc.variant, metric, requests)
    }
}

/// Surplus of a multiset of polarities: parity for MPMD, sign discrepancy
/// for MBPMD.
pub fn surplus_of<I: IntoIterator<Item = Polarity>>(variant: Variant, signs: I) -> usize {
    match variant {
        Variant::Mpmd => signs.into_iter().count() % 2,
        Variant::Mbpmd => signs.into_iter().map(Polarity::sign).sum::<i64>().unsigned_abs() as usize,
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, i: usize) -> Result<&'a Value, InstanceError> {
    obj.get(key)
        .ok_or_else(|| InstanceError::Schema(format!("request {i}: missing `{key}`")))
}

fn parse_metric<S: Scalar>(raw: &Value) -> Result<Metric<S>, InstanceError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| InstanceError::Schema("metric must be an object".into()))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .and_then(MetricKind::parse)
        .ok_or_else(|| InstanceError::Schema("metric.kind must be matrix|line|euclidean|ring".into()))?;
    Ok(match kind {
        MetricKind::Matrix => {
            let rows = obj
                .get("dist")
                .and_then(Value::as_array)
                .ok_or_else(|| InstanceError::Schema("matrix metric needs `dist`".into()))?;
            let mut out = Vec::with_capacity(rows.len());
            for row in rows {
                let row = row
                    .as_array()
                    .ok_or_else(|| InstanceError::Schema("matrix rows must be arrays".into()))?;
                out.push(row.iter().map(S::from_json).collect::<Result<Vec<_>, _>>()?);
            }
            Metric::Matrix(out)
        }
        MetricKind::Line => Metric::Line,
        MetricKind::Euclidean => Metric::Euclidean,
        MetricKind::Ring => {
            let h = obj
                .get("h")
                .ok_or_else(|| InstanceError::Schema("ring metric needs `h`".into()))?;
            Metric::ring(S::from_json(h)?)
        }
    })
}

fn parse_point<S: Scalar>(metric: &Metric<S>, raw: &Value) -> Result<Point<S>, String> {
    match metric {
        Metric::Matrix(_) => raw
            .as_u64()
            .map(|i| Point::Index(i as usize))
            .ok_or_else(|| "matrix positions are point indices".to_string()),
        Metric::Line => S::from_json(raw).map(Point::Line).map_err(|e| e.to_string()),
        Metric::Euclidean => {
            let xy = raw
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| "plane positions are [x, y]".to_string())?;
            let x = S::from_json(&xy[0]).map_err(|e| e.to_string())?;
            let y = S::from_json(&xy[1]).map_err(|e| e.to_string())?;
            Ok(Point::Plane(x, y))
        }
        Metric::Ring { .. } => {
            let x = S::from_json(raw).map_err(|e| e.to_string())?;
            Ok(metric.ring_point(x).expect("ring metric"))
        }
    }
}

/// An instance in whichever numeric mode it was parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyInstance {
    Exact(Instance<Exact>),
    Float(Instance<Float>),
}

impl AnyInstance {
    pub fn mode(&self) -> NumericMode {
        match self {
            AnyInstance::Exact(_) => NumericMode::Exact,
            AnyInstance::Float(_) => NumericMode::Float,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            AnyInstance::Exact(i) => i.variant(),
            AnyInstance::Float(i) => i.variant(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            AnyInstance::Exact(i) => i.m(),
            AnyInstance::Float(i) => i.m(),
        }
    }

    pub fn to_json_string(&self) -> String {
        match self {
            AnyInstance::Exact(i) => i.to_json_string(),
            AnyInstance::Float(i) => i.to_json_string(),
        }
    }
}

impl From<Instance<Exact>> for AnyInstance {
    fn from(i: Instance<Exact>) -> Self {
        AnyInstance::Exact(i)
    }
}

impl From<Instance<Float>> for AnyInstance {
    fn from(i: Instance<Float>) -> Self {
        AnyInstance::Float(i)
    }
}

/// How the numeric mode of a document is chosen.
///
/// Precedence: `force`, then the document's own `mode` field, then
/// `default`, then exact for every metric except euclidean.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub force: Option<NumericMode>,
    pub default: Option<NumericMode>,
}

struct Document {
    variant: Variant,
    mode: Option<NumericMode>,
    metric: Value,
    requests: Vec<Value>,
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str, opts: ParseOptions) -> Result<AnyInstance, InstanceError> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root
        .as_object()
        .ok_or_else(|| InstanceError::Schema("top level must be an object".into()))?;
    let variant: Variant = obj
        .get("variant")
        .and_then(Value::as_str)
        .ok_or_else(|| InstanceError::Schema("missing `variant`".into()))?
        .parse()?;
    let mode = match obj.get("mode") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.parse::<NumericMode>()?),
        Some(_) => return Err(InstanceError::Schema("`mode` must be a string".into())),
    };
    let metric = obj
        .get("metric")
        .cloned()
        .ok_or_else(|| InstanceError::Schema("missing `metric`".into()))?;
    let requests = obj
        .get("requests")
        .and_then(Value::as_array)
        .cloned()
        .ok_or_else(|| InstanceError::Schema("missing `requests` array".into()))?;
    let doc = Document {
        variant,
        mode,
        metric,
        requests,
    };
    let euclidean = doc.metric.get("kind").and_then(Value::as_str) == Some("euclidean");
    let resolved = opts
        .force
        .or(doc.mode)
        .or(opts.default)
        .unwrap_or(if euclidean {
            NumericMode::Float
        } else {
            NumericMode::Exact
        });
    Ok(match resolved {
        NumericMode::Exact => AnyInstance::Exact(Instance::from_document(&doc)?),
        NumericMode::Float => AnyInstance::Float(Instance::from_document(&doc)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> Exact {
        Exact::from_int(n)
    }

    fn line(variant: Variant, reqs: &[(i64, i64, i64)]) -> Instance<Exact> {
        Instance::new(
            variant,
            Metric::Line,
            reqs.iter()
                .map(|&(x, t, s)| (Point::Line(q(x)), q(t), Polarity::from_sign(s).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<AnyInstance, InstanceError> {
        parse_instance(text, ParseOptions::default())
    }

    #[test]
    fn parse_minimal_mpmd() {
        let inst = parse(
            r#"{"variant":"mpmd","metric":{"kind":"line"},
                "requests":[{"pos":0,"atime":0,"sgn":0},{"pos":0,"atime":0,"sgn":0}]}"#,
        )
        .unwrap();
        assert_eq!(inst.mode(), NumericMode::Exact);
        assert_eq!(inst.m(), 1);
    }

    #[test]
    fn parse_rejects_unbalanced() {
        let err = parse(
            r#"{"variant":"mbpmd","metric":{"kind":"line"},"requests":[
                {"pos":0,"atime":0,"sgn":1},{"pos":0,"atime":0,"sgn":1},
                {"pos":0,"atime":0,"sgn":1},{"pos":0,"atime":0,"sgn":-1}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            InstanceError::UnbalancedPolarity {
                positive: 3,
                negative: 1
            }
        ));
    }

    #[test]
    fn parse_rejects_bad_inputs() {
        let odd = r#"{"variant":"mpmd","metric":{"kind":"line"},"requests":[{"pos":0,"atime":0,"sgn":0}]}"#;
        assert!(matches!(parse(odd), Err(InstanceError::OddCount(1))));
        let backwards = r#"{"variant":"mpmd","metric":{"kind":"line"},"requests":[
            {"pos":0,"atime":"1/2","sgn":0},{"pos":0,"atime":0,"sgn":0}]}"#;
        assert!(matches!(
            parse(backwards),
            Err(InstanceError::NonMonotoneTimes { index: 1 })
        ));
        let bad_metric = r#"{"variant":"mpmd","metric":{"kind":"matrix","dist":[[0,5],[4,0]]},"requests":[]}"#;
        assert!(matches!(parse(bad_metric), Err(InstanceError::Metric(_))));
        let signed_mpmd = r#"{"variant":"mpmd","metric":{"kind":"line"},"requests":[
            {"pos":0,"atime":0,"sgn":1},{"pos":0,"atime":0,"sgn":-1}]}"#;
        assert!(matches!(
            parse(signed_mpmd),
            Err(InstanceError::PolarityMismatch { .. })
        ));
        assert!(matches!(parse("{"), Err(InstanceError::Json(_))));
        assert!(matches!(parse("[]"), Err(InstanceError::Schema(_))));
        let float_in_exact = r#"{"variant":"mpmd","mode":"exact","metric":{"kind":"line"},"requests":[
            {"pos":0.5,"atime":0,"sgn":0},{"pos":0,"atime":0,"sgn":0}]}"#;
        assert!(matches!(parse(float_in_exact), Err(InstanceError::Schema(_))));
    }

    #[test]
    fn euclidean_mode_resolution() {
        let doc = r#"{"variant":"mpmd","metric":{"kind":"euclidean"},"requests":[
            {"pos":[0,0],"atime":0,"sgn":0},{"pos":[3,4],"atime":1.5,"sgn":0}]}"#;
        assert_eq!(parse(doc).unwrap().mode(), NumericMode::Float);
        let forced = parse_instance(
            doc,
            ParseOptions {
                force: Some(NumericMode::Exact),
                default: None,
            },
        );
        assert!(matches!(
            forced,
            Err(InstanceError::Metric(MetricError::ExactEuclidean))
        ));
    }

    #[test]
    fn edge_cost_examples() {
        let same = line(Variant::Mpmd, &[(0, 0, 0), (0, 0, 0)]);
        assert_eq!(same.edge_cost(0, 1), Some(q(0)));

        let eps = Exact::from_ratio(1, 4);
        let two_point = Instance::new(
            Variant::Mpmd,
            Metric::Matrix(vec![vec![q(0), q(2)], vec![q(2), q(0)]]),
            vec![
                (Point::Index(0), q(0), Polarity::Neutral),
                (Point::Index(1), q(1) + eps.clone(), Polarity::Neutral),
            ],
        )
        .unwrap();
        assert_eq!(two_point.edge_cost(0, 1), Some(q(3) + eps));

        let bip = line(Variant::Mbpmd, &[(0, 0, 1), (0, 0, 1), (0, 0, -1), (0, 0, -1)]);
        assert_eq!(bip.edge_cost(0, 1), None);
        assert_eq!(bip.edge_cost(0, 2), Some(q(0)));
        assert_eq!(bip.edges().len(), 4);
    }

    #[test]
    fn surplus_examples() {
        let five = line(Variant::Mpmd, &[(0, 0, 0); 6]);
        assert_eq!(five.surplus([0, 1, 2, 3, 4]), 1);
        assert_eq!(five.surplus([]), 0);
        let bip = line(Variant::Mbpmd, &[(0, 0, 1), (0, 0, 1), (0, 0, 1), (0, 0, -1), (0, 0, -1), (0, 0, -1)]);
        assert_eq!(bip.surplus([0, 1, 2, 3]), 2);
        assert_eq!(bip.surplus([]), 0);
    }

    #[test]
    fn explicit_indices_must_match_order() {
        let doc = r#"{"variant":"mpmd","metric":{"kind":"line"},"requests":[
            {"index":1,"pos":0,"atime":0,"sgn":0},{"pos":0,"atime":0,"sgn":0}]}"#;
        assert!(matches!(parse(doc), Err(InstanceError::IndexMismatch { .. })));
    }

    fn polarity_vec() -> impl Strategy<Value = Vec<Polarity>> {
        proptest::collection::vec(
            prop_oneof![Just(Polarity::Positive), Just(Polarity::Negative)],
            0..12,
        )
    }

    proptest! {
        #[test]
        fn surplus_parity_matches_size(signs in polarity_vec()) {
            let n = signs.len();
            prop_assert_eq!(surplus_of(Variant::Mbpmd, signs.iter().copied()) % 2, n % 2);
            prop_assert_eq!(surplus_of(Variant::Mpmd, signs.iter().map(|_| Polarity::Neutral)), n % 2);
        }

        #[test]
        fn surplus_subadditive(a in polarity_vec(), b in polarity_vec()) {
            for variant in [Variant::Mpmd, Variant::Mbpmd] {
                let joined = surplus_of(variant, a.iter().chain(b.iter()).copied());
                prop_assert!(joined <= surplus_of(variant, a.iter().copied()) + surplus_of(variant, b.iter().copied()));
            }
        }

        #[test]
        fn json_round_trip(
            xs in proptest::collection::vec((-20i64..20, 1i64..4), 1..5),
            mbpmd in any::<bool>(),
        ) {
            let variant = if mbpmd { Variant::Mbpmd } else { Variant::Mpmd };
            let mut reqs = Vec::new();
            let mut t = Exact::from_int(0);
            for (k, &(x, d)) in xs.iter().enumerate() {
                for side in [1i64, -1] {
                    let sgn = if mbpmd { Polarity::from_sign(side).unwrap() } else { Polarity::Neutral };
                    reqs.push((Point::Line(Exact::from_ratio(x * side, d)), t.clone(), sgn));
                }
                t = t + Exact::from_ratio(k as i64 + 1, d);
            }
            let inst = Instance::new(variant, Metric::Line, reqs).unwrap();
            let back = parse(&inst.to_json_string()).unwrap();
            prop_assert_eq!(back, AnyInstance::Exact(inst));
        }
    }
}
