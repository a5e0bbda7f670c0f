//! Bench corpora: a glob of instance files or a generator spec such as
//! `tightness:m=4,10,20;variant=mpmd,mbpmd` or
//! `random:seeds=1-100;m=1-5;variant=mpmd,mbpmd;metric=line,ring`.
//!
//! List values are comma separated; integer items may be ranges `a-b`.
//! Generated items are enumerated in nested loops following the key order
//! documented on each generator, so ids and row order are stable.

use std::path::PathBuf;

use delay_match::generate::{gen_random_instance, gen_ring_instance, gen_tightness_instance, RandomSpec, RingHalf};
use delay_match::instance::{parse_instance, AnyInstance, ParseOptions};
use delay_match::{MetricKind, NumericMode, Variant};

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Tightness { m: usize, variant: Variant },
    Ring { m: usize, half: RingHalf },
    Random(RandomSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub source: Source,
}

pub fn half_name(half: RingHalf) -> &'static str {
    match half {
        RingHalf::Clockwise => "clockwise",
        RingHalf::Counterclockwise => "counterclockwise",
    }
}

impl Item {
    /// Loads or generates the instance. `force` re-reads a generated instance
    /// in the requested numeric mode.
    pub fn load(&self, opts: ParseOptions) -> Result<AnyInstance, String> {
        let generated: AnyInstance = match &self.source {
            Source::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                return parse_instance(&text, opts).map_err(|e| format!("{}: {e}", path.display()));
            }
            Source::Tightness { m, variant } => gen_tightness_instance(*m, *variant).map_err(|e| e.to_string())?.into(),
            Source::Ring { m, half } => gen_ring_instance(*m, *half).map_err(|e| e.to_string())?.into(),
            Source::Random(spec) => gen_random_instance(spec).map_err(|e| e.to_string())?,
        };
        match opts.force {
            Some(mode) if mode != generated.mode() => {
                parse_instance(&generated.to_json_string(), ParseOptions { force: Some(mode), default: None })
                    .map_err(|e| e.to_string())
            }
            _ => Ok(generated),
        }
    }
}

fn is_generator(spec: &str) -> bool {
    matches!(spec.split_once(':'), Some((k, _)) if ["tightness", "ring", "random"].contains(&k))
}

/// Expands a corpus argument into an ordered list of items.
pub fn expand(spec: &str) -> Result<Vec<Item>, String> {
    if is_generator(spec) {
        return expand_generator(spec);
    }
    let mut paths: Vec<PathBuf> = glob::glob(spec)
        .map_err(|e| format!("bad glob `{spec}`: {e}"))?
        .collect::<Result<_, _>>()
        .map_err(|e| format!("cannot read corpus entry: {e}"))?;
    paths.sort();
    Ok(paths
        .into_iter()
        .filter(|p| p.is_file())
        .map(|p| Item {
            id: p.display().to_string(),
            source: Source::File(p),
        })
        .collect())
}

fn parse_ints(key: &str, value: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        let bad = || format!("`{key}`: cannot read `{item}` as an integer or range");
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(format!("`{key}`: empty range `{item}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn parse_names<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|s| parse(s.trim()).ok_or_else(|| format!("`{key}`: unknown value `{}`", s.trim())))
        .collect()
}

fn parse_variant(s: &str) -> Option<Variant> {
    s.parse().ok()
}

fn parse_half(s: &str) -> Option<RingHalf> {
    match s {
        "clockwise" | "cw" => Some(RingHalf::Clockwise),
        "counterclockwise" | "ccw" => Some(RingHalf::Counterclockwise),
        _ => None,
    }
}

struct Params<'a> {
    kind: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(spec: &'a str) -> Result<Self, String> {
        let (kind, rest) = spec.split_once(':').expect("checked by is_generator");
        let mut pairs = Vec::new();
        for part in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("`{part}` is not a key=value pair"))?;
            pairs.push((k.trim(), v.trim()));
        }
        Ok(Params { kind, pairs })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), String> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(format!("unknown key `{k}` for {} corpus (expected one of {})", self.kind, allowed.join(", ")));
            }
        }
        Ok(())
    }

    fn get(&self, keys: &[&str]) -> Option<(&'a str, &'a str)> {
        self.pairs.iter().rev().find(|(k, _)| keys.contains(k)).copied()
    }

    fn ints(&self, keys: &[&str], default: Option<u64>) -> Result<Vec<u64>, String> {
        match (self.get(keys), default) {
            (Some((k, v)), _) => parse_ints(k, v),
            (None, Some(d)) => Ok(vec![d]),
            (None, None) => Err(format!("{} corpus needs `{}`", self.kind, keys[0])),
        }
    }

    fn names<T: Clone>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
        match self.get(&[key]) {
            Some((k, v)) => parse_names(k, v, parse),
            None => Ok(vec![default]),
        }
    }
}

/// Key order: tightness `m, variant`; ring `m, half`; random
/// `seeds, m, variant, metric, horizon, spread`.
fn expand_generator(spec: &str) -> Result<Vec<Item>, String> {
    let p = Params::parse(spec)?;
    let mut out = Vec::new();
    match p.kind {
        "tightness" => {
            p.check_keys(&["m", "variant"])?;
            for m in p.ints(&["m"], None)? {
                for variant in p.names("variant", Variant::Mpmd, parse_variant)? {
                    out.push(Item {
                        id: format!("tightness:m={m};variant={variant}"),
                        source: Source::Tightness { m: m as usize, variant },
                    });
                }
            }
        }
        "ring" => {
            p.check_keys(&["m", "half"])?;
            for m in p.ints(&["m"], None)? {
                for half in p.names("half", RingHalf::Clockwise, parse_half)? {
                    out.push(Item {
                        id: format!("ring:m={m};half={}", half_name(half)),
                        source: Source::Ring { m: m as usize, half },
                    });
                }
            }
        }
        "random" => {
            p.check_keys(&["seeds", "seed", "m", "variant", "metric", "horizon", "spread"])?;
            let variants = p.names("variant", Variant::Mpmd, parse_variant)?;
            let metrics = p.names("metric", MetricKind::Line, MetricKind::parse)?;
            let horizons = p.ints(&["horizon"], Some(8))?;
            let spreads = p.ints(&["spread"], Some(8))?;
            for seed in p.ints(&["seeds", "seed"], None)? {
                for m in p.ints(&["m"], None)? {
                    for &variant in &variants {
                        for &metric in &metrics {
                            for &horizon in &horizons {
                                for &spread in &spreads {
                                    let to_u32 = |x: u64| u32::try_from(x).map_err(|_| format!("{x} is too large"));
                                    out.push(Item {
                                        id: format!(
                                            "random:seed={seed};m={m};variant={variant};metric={};horizon={horizon};spread={spread}",
                                            metric.as_str()
                                        ),
                                        source: Source::Random(RandomSpec {
                                            seed,
                                            m: m as usize,
                                            variant,
                                            metric,
                                            horizon: to_u32(horizon)?,
                                            spread: to_u32(spread)?,
                                        }),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!("checked by is_generator"),
    }
    Ok(out)
}

/// The mode requested through `DM_MODE`, if set.
pub fn env_mode() -> Result<Option<NumericMode>, String> {
    match std::env::var("DM_MODE") {
        Ok(v) if !v.trim().is_empty() => v.parse().map(Some).map_err(|e| format!("DM_MODE: {e}")),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tightness_spec() {
        let items = expand("tightness:m=4,10;variant=mpmd,mbpmd").unwrap();
        let ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "tightness:m=4;variant=mpmd",
                "tightness:m=4;variant=mbpmd",
                "tightness:m=10;variant=mpmd",
                "tightness:m=10;variant=mbpmd"
            ]
        );
    }

    #[test]
    fn random_ranges() {
        let items = expand("random:seeds=1-3;m=2,4;metric=line,ring").unwrap();
        assert_eq!(items.len(), 12);
        assert_eq!(items[0].id, "random:seed=1;m=2;variant=mpmd;metric=line;horizon=8;spread=8");
        assert_eq!(items[1].id, "random:seed=1;m=2;variant=mpmd;metric=ring;horizon=8;spread=8");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(expand("tightness:variant=mpmd").is_err());
        assert!(expand("random:seeds=5-1;m=2").is_err());
        assert!(expand("random:seeds=1;m=2;colour=red").is_err());
        assert!(expand("ring:m=6;half=up").is_err());
        assert!(expand("tightness:m=x").is_err());
    }

    #[test]
    fn unmatched_glob_is_empty() {
        assert!(expand("/nonexistent-dir-for-dmatch/*.json").unwrap().is_empty());
    }

    #[test]
    fn generated_items_load() {
        for item in expand("ring:m=6;half=cw,ccw").unwrap() {
            let inst = item.load(ParseOptions::default()).unwrap();
            assert_eq!(inst.m(), 6);
        }
        let item = &expand("tightness:m=4").unwrap()[0];
        let forced = item
            .load(ParseOptions { force: Some(NumericMode::Float), default: None })
            .unwrap();
        assert_eq!(forced.mode(), NumericMode::Float);
    }
}
