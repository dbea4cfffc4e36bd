//! Synthetic relation instances with controlled skew.
//!
//! Each attribute column is drawn independently from a Zipf distribution
//! over a bounded value universe (exponent 0 = uniform) by inverse-CDF
//! sampling, optionally with planted heavy values occupying an exact
//! fraction of the rows. Everything is deterministic given the seed; the
//! generator carries its own splitmix64 stream so the bytes never depend
//! on external library versions.

use crate::data::{RelationInstance, Tuple, Value};
use crate::error::{Error, Result};
use crate::query::{Attribute, RelationSchema};

/// Deterministic 64-bit PRNG (splitmix64).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n).
    pub fn next_below(&mut self, n: u64) -> u64 {
        (self.next_f64() * n as f64) as u64 % n.max(1)
    }
}

/// One planted heavy value: `value` occupies exactly
/// `floor(fraction * n)` rows of `attribute`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedValue {
    pub attribute: Attribute,
    pub value: Value,
    pub fraction: f64,
}

/// Generation request for one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub rows: u64,
    pub seed: u64,
    /// Zipf exponent per attribute; unlisted attributes are uniform.
    pub zipf: Vec<(Attribute, f64)>,
    pub planted: Vec<PlantedValue>,
    /// Distinct-value universe; default 10 * rows.
    pub universe: Option<u64>,
}

impl GenSpec {
    pub fn uniform(rows: u64, seed: u64) -> Self {
        GenSpec {
            rows,
            seed,
            zipf: Vec::new(),
            planted: Vec::new(),
            universe: None,
        }
    }

    fn exponent_of(&self, a: &Attribute) -> f64 {
        self.zipf
            .iter()
            .find(|(x, _)| x == a)
            .map(|(_, e)| *e)
            .unwrap_or(0.0)
    }
}

/// Inverse-CDF Zipf sampler over ranks 1..=universe with probability
/// proportional to 1/rank^exponent.
struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    fn new(universe: u64, exponent: f64) -> Self {
        let mut cdf = Vec::with_capacity(universe as usize);
        let mut acc = 0.0;
        for rank in 1..=universe {
            acc += (rank as f64).powf(-exponent);
            cdf.push(acc);
        }
        ZipfSampler { cdf }
    }

    fn sample(&self, rng: &mut SplitMix64) -> u64 {
        let total = *self.cdf.last().expect("universe >= 1");
        let u = rng.next_f64() * total;
        match self.cdf.binary_search_by(|x| x.partial_cmp(&u).unwrap()) {
            Ok(i) | Err(i) => (i as u64 + 1).min(self.cdf.len() as u64),
        }
    }
}

/// Generate `spec.rows` tuples for `schema`. Planted values fill a
/// prefix of their attribute's column; remaining cells draw from the
/// attribute's Zipf distribution, rejecting planted values so the
/// planted counts stay exact.
pub fn generate_skewed(schema: &RelationSchema, spec: &GenSpec) -> Result<RelationInstance> {
    let n = spec.rows;
    for p in &spec.planted {
        if !schema.contains(&p.attribute) {
            return Err(Error::Generator(format!(
                "planted attribute {} is not in {}",
                p.attribute, schema.name
            )));
        }
        if !(0.0..1.0).contains(&p.fraction) {
            return Err(Error::Generator(format!(
                "planted fraction {} out of [0, 1)",
                p.fraction
            )));
        }
    }
    for a in &schema.attributes {
        let total: f64 = spec
            .planted
            .iter()
            .filter(|p| p.attribute == *a)
            .map(|p| p.fraction)
            .sum();
        if total >= 1.0 {
            return Err(Error::Generator(format!(
                "planted fractions for {a} sum to {total}, must stay below 1"
            )));
        }
    }
    let universe = spec.universe.unwrap_or(10 * n.max(1)).max(1);

    let mut columns: Vec<Vec<Value>> = Vec::with_capacity(schema.arity());
    for (ai, a) in schema.attributes.iter().enumerate() {
        let mut rng = SplitMix64::new(spec.seed ^ (ai as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15));
        let planted: Vec<&PlantedValue> =
            spec.planted.iter().filter(|p| p.attribute == *a).collect();
        let exponent = spec.exponent_of(a);
        let sampler = if exponent == 0.0 {
            None
        } else {
            Some(ZipfSampler::new(universe, exponent))
        };

        let mut column: Vec<Value> = Vec::with_capacity(n as usize);
        for p in &planted {
            let count = (p.fraction * n as f64).floor() as u64;
            column.extend(std::iter::repeat_n(p.value.clone(), count as usize));
        }
        while (column.len() as u64) < n {
            // rejection keeps planted counts exact
            let v = loop {
                let rank = match &sampler {
                    Some(s) => s.sample(&mut rng),
                    None => rng.next_below(universe) + 1,
                };
                let v = rank.to_string();
                if !planted.iter().any(|p| p.value == v) {
                    break v;
                }
            };
            column.push(v);
        }
        columns.push(column);
    }

    let tuples = (0..n as usize)
        .map(|i| Tuple::new(columns.iter().map(|c| c[i].clone()).collect()))
        .collect();
    RelationInstance::new(schema.clone(), tuples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hh::{count_frequencies, detect_heavy_hitters};
    use crate::query::JoinQuery;

    fn schema() -> RelationSchema {
        JoinQuery::parse("R(A,B); S(B,C)").unwrap().relations()[0].clone()
    }

    #[test]
    fn planted_count_is_exact() {
        let spec = GenSpec {
            rows: 1000,
            seed: 42,
            zipf: vec![(Attribute::from("B"), 1.1)],
            planted: vec![PlantedValue {
                attribute: Attribute::from("B"),
                value: "7".to_string(),
                fraction: 0.5,
            }],
            universe: None,
        };
        let inst = generate_skewed(&schema(), &spec).unwrap();
        let counts = count_frequencies(&inst, &Attribute::from("B")).unwrap();
        assert_eq!(counts["7"], 500);
        assert_eq!(inst.size(), 1000);
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = GenSpec::uniform(500, 9);
        let a = generate_skewed(&schema(), &spec).unwrap();
        let b = generate_skewed(&schema(), &spec).unwrap();
        assert_eq!(a, b);
        let other = GenSpec::uniform(500, 10);
        assert_ne!(generate_skewed(&schema(), &other).unwrap(), a);
    }

    #[test]
    fn planted_value_detected_by_detector() {
        let q = JoinQuery::parse("R(A,B); S(B,C)").unwrap();
        let plant = |seed| GenSpec {
            rows: 800,
            seed,
            zipf: Vec::new(),
            planted: vec![PlantedValue {
                attribute: Attribute::from("B"),
                value: "7".to_string(),
                fraction: 0.5,
            }],
            universe: None,
        };
        let db = vec![
            generate_skewed(&q.relations()[0], &plant(1)).unwrap(),
            generate_skewed(&q.relations()[1], &plant(2)).unwrap(),
        ];
        let report = detect_heavy_hitters(&db, &q, 0.3).unwrap();
        let b = report.values_for(&Attribute::from("B"));
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].value, "7");
    }

    #[test]
    fn infeasible_fractions_rejected() {
        let spec = GenSpec {
            rows: 100,
            seed: 1,
            zipf: Vec::new(),
            planted: vec![
                PlantedValue {
                    attribute: Attribute::from("B"),
                    value: "1".to_string(),
                    fraction: 0.6,
                },
                PlantedValue {
                    attribute: Attribute::from("B"),
                    value: "2".to_string(),
                    fraction: 0.5,
                },
            ],
            universe: None,
        };
        assert!(generate_skewed(&schema(), &spec).is_err());
    }

    #[test]
    fn zipf_skews_toward_small_ranks() {
        let spec = GenSpec {
            rows: 2000,
            seed: 3,
            zipf: vec![(Attribute::from("A"), 1.5)],
            planted: Vec::new(),
            universe: Some(1000),
        };
        let inst = generate_skewed(&schema(), &spec).unwrap();
        let counts = count_frequencies(&inst, &Attribute::from("A")).unwrap();
        let ones = counts.get("1").copied().unwrap_or(0);
        let hundreds = counts.get("100").copied().unwrap_or(0);
        assert!(
            ones > hundreds,
            "rank 1 ({ones}) should dominate rank 100 ({hundreds})"
        );
        assert!(
            ones > 2000 / 100,
            "rank 1 should be clearly heavy, got {ones}"
        );
    }

    #[test]
    fn empty_relation() {
        let inst = generate_skewed(&schema(), &GenSpec::uniform(0, 5)).unwrap();
        assert_eq!(inst.size(), 0);
    }
}
