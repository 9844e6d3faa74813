//! Informative families of candidate prediction sets and their weights.
//!
//! A family is either *cardinality based* (every subset of the non-excluded
//! classes whose size lies in `min_card..=max_card`) or an explicit list of
//! label sets. Cardinality-based families are never materialized; membership
//! and candidate reduction work directly from the excluded classes and the
//! size bounds.
//!
//! Class indices are 1-based throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonempty set of 1-based class indices, stored sorted and deduplicated.
///
/// The derived ordering is lexicographic on the sorted member list, which is
/// the secondary tie rule between candidate sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    /// Builds a set from arbitrary members; sorts and removes duplicates.
    pub fn new(members: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut v: Vec<u32> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::InvalidSpec("label sets must be nonempty".into()));
        }
        if v[0] == 0 {
            return Err(Error::InvalidSpec("class indices are 1-based".into()));
        }
        Ok(LabelSet(v))
    }

    /// Members must already be strictly increasing, nonzero and nonempty.
    pub(crate) fn from_sorted_unchecked(v: Vec<u32>) -> Self {
        debug_assert!(!v.is_empty() && v[0] > 0 && v.windows(2).all(|w| w[0] < w[1]));
        LabelSet(v)
    }

    pub fn members(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, class: u32) -> bool {
        self.0.binary_search(&class).is_ok()
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        let mut it = other.0.iter();
        'outer: for &a in &self.0 {
            for &b in it.by_ref() {
                if b == a {
                    continue 'outer;
                }
                if b > a {
                    return false;
                }
            }
            return false;
        }
        true
    }

    /// Sum of the class probabilities of the members, added in descending
    /// order of value so that sets with the same multiset of probabilities
    /// get bit-identical totals.
    pub fn probability(&self, row: &[f64]) -> f64 {
        let mut values: Vec<f64> = self.0.iter().map(|&k| row[k as usize - 1]).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        values.into_iter().fold(0.0, |acc, v| acc + v)
    }

    pub fn max_class(&self) -> u32 {
        *self.0.last().expect("label sets are nonempty")
    }
}

impl TryFrom<Vec<u32>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<u32> {
    fn from(s: LabelSet) -> Vec<u32> {
        s.0
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str("}")
    }
}

/// How the family's members are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    /// All subsets of the non-excluded classes with `min_card <= |C| <= max_card`.
    Cardinality {
        excluded: BTreeSet<u32>,
        min_card: usize,
        max_card: usize,
    },
    /// An explicit list of sets.
    Explicit(Vec<LabelSet>),
}

impl FamilySpec {
    /// Every nonempty set except the full label set.
    pub fn nontrivial(k: usize) -> Self {
        FamilySpec::Cardinality {
            excluded: BTreeSet::new(),
            min_card: 1,
            max_card: k.saturating_sub(1),
        }
    }

    /// Every nonempty set that avoids `class`.
    pub fn excluding(class: u32, k: usize) -> Self {
        FamilySpec::Cardinality {
            excluded: BTreeSet::from([class]),
            min_card: 1,
            max_card: k.saturating_sub(1),
        }
    }

    /// The singletons `{1}, ..., {K}`.
    pub fn singletons() -> Self {
        FamilySpec::Cardinality {
            excluded: BTreeSet::new(),
            min_card: 1,
            max_card: 1,
        }
    }
}

/// Weight function `w` over family members.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    /// `w(C) = 1 / |C|`.
    InverseCardinality,
    /// `w(C) = table[|C| - 1]`.
    ByCardinality(Vec<f64>),
    /// Per-set lookup; only for explicit families.
    Table(BTreeMap<LabelSet, f64>),
}

/// Outcome of the static nestedness check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NestednessCertificate {
    Guaranteed,
    /// Nestedness must be verified row by row with
    /// [`verify_nestedness`](crate::policy::verify_nestedness).
    NotGuaranteed(String),
}

impl NestednessCertificate {
    pub fn is_guaranteed(&self) -> bool {
        matches!(self, NestednessCertificate::Guaranteed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Members {
    Cardinality {
        /// Non-excluded classes, ascending.
        allowed: Vec<u32>,
        min_card: usize,
        max_card: usize,
    },
    Explicit(Vec<LabelSet>),
}

/// A validated, immutable family of informative sets with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct InformativeFamily {
    k: usize,
    members: Members,
    weights: WeightKind,
}

/// Builds a family with the default `1/|C|` weights.
pub fn build_family(spec: FamilySpec, k: usize) -> Result<InformativeFamily> {
    build_family_weighted(spec, WeightKind::InverseCardinality, k)
}

pub fn build_family_weighted(
    spec: FamilySpec,
    weights: WeightKind,
    k: usize,
) -> Result<InformativeFamily> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 classes, got {k}")));
    }
    let members = match spec {
        FamilySpec::Cardinality {
            excluded,
            min_card,
            max_card,
        } => {
            if let Some(&bad) = excluded.iter().find(|&&c| c == 0 || c as usize > k) {
                return Err(Error::InvalidSpec(format!(
                    "excluded class {bad} outside 1..={k}"
                )));
            }
            if excluded.len() >= k {
                return Err(Error::InvalidSpec("every class is excluded".into()));
            }
            if min_card > max_card || max_card > k {
                return Err(Error::InvalidSpec(format!(
                    "cardinality bounds must satisfy min <= max <= K, got {min_card}..={max_card} with K = {k}"
                )));
            }
            let allowed: Vec<u32> = (1..=k as u32).filter(|c| !excluded.contains(c)).collect();
            let min_card = min_card.max(1);
            let max_card = max_card.min(allowed.len());
            if min_card > max_card {
                return Err(Error::EmptyFamily);
            }
            Members::Cardinality {
                allowed,
                min_card,
                max_card,
            }
        }
        FamilySpec::Explicit(mut sets) => {
            if let Some(bad) = sets.iter().find(|s| s.max_class() as usize > k) {
                return Err(Error::InvalidSpec(format!("set {bad} has a class above K = {k}")));
            }
            sets.sort();
            sets.dedup();
            if sets.is_empty() {
                return Err(Error::EmptyFamily);
            }
            Members::Explicit(sets)
        }
    };

    let family = InformativeFamily { k, members, weights };
    family.validate_weights()?;
    Ok(family)
}

fn check_weight(set: impl fmt::Display, w: f64) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidWeight {
            set: set.to_string(),
            reason: format!("weight must be finite and positive, got {w}"),
        });
    }
    Ok(())
}

impl InformativeFamily {
    fn validate_weights(&self) -> Result<()> {
        match (&self.weights, &self.members) {
            (WeightKind::InverseCardinality, _) => Ok(()),
            (WeightKind::ByCardinality(table), _) => {
                for j in self.sizes() {
                    let w = table.get(j - 1).copied().ok_or_else(|| Error::InvalidWeight {
                        set: format!("|C| = {j}"),
                        reason: "no weight given for this cardinality".into(),
                    })?;
                    check_weight(format_args!("|C| = {j}"), w)?;
                }
                Ok(())
            }
            (WeightKind::Table(table), Members::Explicit(sets)) => {
                for s in sets {
                    let w = table.get(s).copied().ok_or_else(|| Error::InvalidWeight {
                        set: s.to_string(),
                        reason: "missing from weight table".into(),
                    })?;
                    check_weight(s, w)?;
                }
                if let Some(extra) = table.keys().find(|s| sets.binary_search(s).is_err()) {
                    return Err(Error::InvalidWeight {
                        set: extra.to_string(),
                        reason: "weight given for a set outside the family".into(),
                    });
                }
                Ok(())
            }
            (WeightKind::Table(_), Members::Cardinality { .. }) => Err(Error::InvalidSpec(
                "per-set weight tables need an explicit family; use cardinality weights".into(),
            )),
        }
    }

    /// Number of classes `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &WeightKind {
        &self.weights
    }

    pub(crate) fn members_repr(&self) -> &Members {
        &self.members
    }

    pub fn is_cardinality_based(&self) -> bool {
        matches!(self.members, Members::Cardinality { .. })
    }

    /// Distinct member cardinalities, ascending.
    pub fn sizes(&self) -> Vec<usize> {
        match &self.members {
            Members::Cardinality {
                min_card, max_card, ..
            } => (*min_card..=*max_card).collect(),
            Members::Explicit(sets) => {
                let s: BTreeSet<usize> = sets.iter().map(LabelSet::len).collect();
                s.into_iter().collect()
            }
        }
    }

    pub fn contains(&self, set: &LabelSet) -> bool {
        match &self.members {
            Members::Cardinality {
                allowed,
                min_card,
                max_card,
            } => {
                (*min_card..=*max_card).contains(&set.len())
                    && set.members().iter().all(|c| allowed.binary_search(c).is_ok())
            }
            Members::Explicit(sets) => sets.binary_search(set).is_ok(),
        }
    }

    /// Number of member sets.
    pub fn len(&self) -> u128 {
        match &self.members {
            Members::Cardinality {
                allowed,
                min_card,
                max_card,
            } => (*min_card..=*max_card)
                .map(|j| binomial(allowed.len() as u128, j as u128))
                .sum(),
            Members::Explicit(sets) => sets.len() as u128,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Weight of a set known to be a member; skips the membership check.
    pub(crate) fn weight_unchecked(&self, set: &LabelSet) -> f64 {
        match &self.weights {
            WeightKind::InverseCardinality => 1.0 / set.len() as f64,
            WeightKind::ByCardinality(t) => t[set.len() - 1],
            WeightKind::Table(t) => t[set],
        }
    }

    /// Every member, in lexicographic order. Exponential in `K` for
    /// cardinality-based families; meant for small instances and tests.
    pub fn enumerate(&self) -> Vec<LabelSet> {
        match &self.members {
            Members::Explicit(sets) => sets.clone(),
            Members::Cardinality {
                allowed,
                min_card,
                max_card,
            } => {
                let mut out = Vec::new();
                let mut cur = Vec::new();
                fn rec(
                    allowed: &[u32],
                    start: usize,
                    cur: &mut Vec<u32>,
                    lo: usize,
                    hi: usize,
                    out: &mut Vec<LabelSet>,
                ) {
                    if cur.len() >= lo && cur.len() <= hi && !cur.is_empty() {
                        out.push(LabelSet::from_sorted_unchecked(cur.clone()));
                    }
                    if cur.len() == hi {
                        return;
                    }
                    for i in start..allowed.len() {
                        cur.push(allowed[i]);
                        rec(allowed, i + 1, cur, lo, hi, out);
                        cur.pop();
                    }
                }
                rec(allowed, 0, &mut cur, *min_card, *max_card, &mut out);
                out.sort();
                out
            }
        }
    }

    /// True when the weight is a function of `|C|` that never increases with it.
    fn weights_cardinality_monotone(&self) -> bool {
        match &self.weights {
            WeightKind::InverseCardinality => true,
            WeightKind::ByCardinality(t) => {
                let sizes = self.sizes();
                sizes.windows(2).all(|w| t[w[1] - 1] <= t[w[0] - 1])
            }
            WeightKind::Table(_) => false,
        }
    }
}

/// Returns `w(C)`, or [`Error::NotInFamily`] when `C` is not a member.
pub fn weight_of(family: &InformativeFamily, set: &LabelSet) -> Result<f64> {
    if !family.contains(set) {
        return Err(Error::NotInFamily(set.clone()));
    }
    Ok(family.weight_unchecked(set))
}

/// Static sufficient condition for nested selected sets: a cardinality-based
/// family whose weight depends only on `|C|` and does not increase with it.
pub fn nestedness_certificate(family: &InformativeFamily) -> NestednessCertificate {
    if family.is_cardinality_based() && family.weights_cardinality_monotone() {
        NestednessCertificate::Guaranteed
    } else if family.is_cardinality_based() {
        NestednessCertificate::NotGuaranteed(
            "cardinality weights increase with set size; verify nestedness per row".into(),
        )
    } else {
        NestednessCertificate::NotGuaranteed(
            "explicit family; verify nestedness per row".into(),
        )
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// On-disk family description (JSON).
///
/// ```json
/// {"kind":"cardinality","excluded":[2],"min_card":1,"max_card":2}
/// {"kind":"explicit","sets":[[1],[2,3]],"weights":{"[1]":2.0,"[2,3]":0.5}}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFile {
    pub kind: String,
    #[serde(default)]
    pub excluded: Vec<u32>,
    #[serde(default)]
    pub min_card: Option<usize>,
    #[serde(default)]
    pub max_card: Option<usize>,
    #[serde(default)]
    pub sets: Vec<Vec<u32>>,
    /// Per-set weights keyed by the JSON array text of the set, e.g. `"[1,2]"`.
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    /// Weights indexed by cardinality minus one.
    #[serde(default)]
    pub cardinality_weights: Option<Vec<f64>>,
}

impl FamilyFile {
    pub fn into_family(self, k: usize) -> Result<InformativeFamily> {
        let spec = match self.kind.as_str() {
            "cardinality" => FamilySpec::Cardinality {
                excluded: self.excluded.into_iter().collect(),
                min_card: self.min_card.unwrap_or(1),
                max_card: self.max_card.unwrap_or(k.saturating_sub(1)),
            },
            "explicit" => FamilySpec::Explicit(
                self.sets
                    .into_iter()
                    .map(LabelSet::new)
                    .collect::<Result<Vec<_>>>()?,
            ),
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown family kind {other:?}; expected \"cardinality\" or \"explicit\""
                )))
            }
        };
        let weights = match (self.weights, self.cardinality_weights) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidSpec(
                    "give either per-set or per-cardinality weights, not both".into(),
                ))
            }
            (Some(table), None) => {
                let mut parsed = BTreeMap::new();
                for (key, w) in table {
                    let members: Vec<u32> = serde_json::from_str(&key).map_err(|e| {
                        Error::InvalidSpec(format!("weight key {key:?} is not a class list: {e}"))
                    })?;
                    parsed.insert(LabelSet::new(members)?, w);
                }
                WeightKind::Table(parsed)
            }
            (None, Some(t)) => WeightKind::ByCardinality(t),
            (None, None) => WeightKind::InverseCardinality,
        };
        build_family_weighted(spec, weights, k)
    }
}

/// Parses a command-line family: `nontrivial`, `exclude=<k>`, `singletons`,
/// or a path to a [`FamilyFile`].
pub fn parse_family_arg(arg: &str, k: usize) -> Result<InformativeFamily> {
    if arg == "nontrivial" {
        return build_family(FamilySpec::nontrivial(k), k);
    }
    if arg == "singletons" {
        return build_family(FamilySpec::singletons(), k);
    }
    if let Some(rest) = arg.strip_prefix("exclude=") {
        let class: u32 = rest
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad excluded class {rest:?}")))?;
        return build_family(FamilySpec::excluding(class, k), k);
    }
    let text = std::fs::read_to_string(arg)
        .map_err(|e| Error::InvalidSpec(format!("cannot read family file {arg}: {e}")))?;
    let file: FamilyFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidSpec(format!("{arg}: line {}: {e}", e.line())))?;
    file.into_family(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u32]) -> LabelSet {
        LabelSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn sizes_one_and_two_of_three() {
        let f = build_family(
            FamilySpec::Cardinality {
                excluded: BTreeSet::new(),
                min_card: 1,
                max_card: 2,
            },
            3,
        )
        .unwrap();
        assert_eq!(f.len(), 6);
        let all = f.enumerate();
        assert_eq!(
            all,
            vec![set(&[1]), set(&[1, 2]), set(&[1, 3]), set(&[2]), set(&[2, 3]), set(&[3])]
        );
        assert!(!f.contains(&set(&[1, 2, 3])));
    }

    #[test]
    fn no_null_class() {
        let f = build_family(
            FamilySpec::Cardinality {
                excluded: BTreeSet::from([2]),
                min_card: 1,
                max_card: 3,
            },
            4,
        )
        .unwrap();
        // every nonempty subset of {1,3,4}
        assert_eq!(f.len(), 7);
        assert!(f.contains(&set(&[1, 3, 4])));
        assert!(!f.contains(&set(&[2])));
        assert!(!f.contains(&set(&[1, 2])));
    }

    #[test]
    fn explicit_is_sorted_and_deduplicated() {
        let f = build_family(
            FamilySpec::Explicit(vec![set(&[2, 3]), set(&[1]), set(&[3]), set(&[2]), set(&[1])]),
            3,
        )
        .unwrap();
        assert_eq!(f.enumerate(), vec![set(&[1]), set(&[2]), set(&[2, 3]), set(&[3])]);
    }

    #[test]
    fn weights() {
        let f = build_family(FamilySpec::nontrivial(3), 3).unwrap();
        assert_eq!(weight_of(&f, &set(&[1])).unwrap(), 1.0);
        assert_eq!(weight_of(&f, &set(&[1, 2])).unwrap(), 0.5);
        assert!(matches!(
            weight_of(&f, &set(&[1, 2, 3])),
            Err(Error::NotInFamily(_))
        ));

        let table = BTreeMap::from([(set(&[1]), 2.0), (set(&[2]), 1.0)]);
        let g = build_family_weighted(
            FamilySpec::Explicit(vec![set(&[1]), set(&[2])]),
            WeightKind::Table(table),
            2,
        )
        .unwrap();
        assert_eq!(weight_of(&g, &set(&[1])).unwrap(), 2.0);
    }

    #[test]
    fn rejects_bad_weights_and_specs() {
        let bad = BTreeMap::from([(set(&[1]), 0.0)]);
        assert!(matches!(
            build_family_weighted(FamilySpec::Explicit(vec![set(&[1])]), WeightKind::Table(bad), 2),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            build_family_weighted(
                FamilySpec::nontrivial(3),
                WeightKind::ByCardinality(vec![1.0, f64::INFINITY]),
                3
            ),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            build_family(FamilySpec::Explicit(vec![]), 3),
            Err(Error::EmptyFamily)
        ));
        assert!(matches!(
            build_family(
                FamilySpec::Cardinality {
                    excluded: BTreeSet::from([1, 2, 3]),
                    min_card: 1,
                    max_card: 1
                },
                3
            ),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_family(
                FamilySpec::Cardinality {
                    excluded: BTreeSet::from([1]),
                    min_card: 3,
                    max_card: 3
                },
                3
            ),
            Err(Error::EmptyFamily)
        ));
    }

    #[test]
    fn certificates() {
        let f = build_family(FamilySpec::nontrivial(3), 3).unwrap();
        assert_eq!(nestedness_certificate(&f), NestednessCertificate::Guaranteed);
        let g = build_family(
            FamilySpec::Explicit(vec![set(&[1]), set(&[2]), set(&[3]), set(&[2, 3])]),
            3,
        )
        .unwrap();
        assert!(!nestedness_certificate(&g).is_guaranteed());
        let h = build_family(FamilySpec::excluding(4, 5), 5).unwrap();
        assert!(nestedness_certificate(&h).is_guaranteed());
        let increasing = build_family_weighted(
            FamilySpec::nontrivial(3),
            WeightKind::ByCardinality(vec![1.0, 2.0]),
            3,
        )
        .unwrap();
        assert!(!nestedness_certificate(&increasing).is_guaranteed());
    }

    #[test]
    fn subset_and_display() {
        assert!(set(&[1]).is_subset(&set(&[1, 2])));
        assert!(set(&[2, 3]).is_subset(&set(&[1, 2, 3])));
        assert!(!set(&[1]).is_subset(&set(&[2, 3])));
        assert!(!set(&[1, 4]).is_subset(&set(&[1, 2, 3])));
        assert_eq!(set(&[3, 1]).to_string(), "{1,3}");
        assert!(set(&[1, 2]) < set(&[1, 3]));
        assert!(set(&[1, 2, 3]) < set(&[1, 3]));
    }

    #[test]
    fn family_file_round_trip() {
        let f: FamilyFile = serde_json::from_str(
            r#"{"kind":"explicit","sets":[[1],[2,3]],"weights":{"[1]":2.0,"[2,3]":0.5}}"#,
        )
        .unwrap();
        let fam = f.into_family(3).unwrap();
        assert_eq!(weight_of(&fam, &set(&[2, 3])).unwrap(), 0.5);

        let c: FamilyFile = serde_json::from_str(
            r#"{"kind":"cardinality","excluded":[2],"min_card":1,"max_card":2}"#,
        )
        .unwrap();
        let fam = c.into_family(4).unwrap();
        assert!(fam.contains(&set(&[1, 3])));
        assert!(!fam.contains(&set(&[1, 3, 4])));
    }

    #[test]
    fn shorthand_arguments() {
        let f = parse_family_arg("nontrivial", 4).unwrap();
        assert!(f.contains(&set(&[1, 2, 3])));
        assert!(!f.contains(&set(&[1, 2, 3, 4])));
        let g = parse_family_arg("exclude=2", 4).unwrap();
        assert!(g.contains(&set(&[1, 3, 4])));
        assert!(!g.contains(&set(&[2])));
    }
}
