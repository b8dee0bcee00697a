use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One input plane. The declaration order is the canonical stacking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaneLabel {
    MagL,
    MagR,
    PhaseL,
    PhaseR,
    Ild,
    Ipd,
}

impl PlaneLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaneLabel::MagL => "mag_L",
            PlaneLabel::MagR => "mag_R",
            PlaneLabel::PhaseL => "phase_L",
            PlaneLabel::PhaseR => "phase_R",
            PlaneLabel::Ild => "ild",
            PlaneLabel::Ipd => "ipd",
        }
    }
}

impl fmt::Display for PlaneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PlaneLabel::MagL,
            PlaneLabel::MagR,
            PlaneLabel::PhaseL,
            PlaneLabel::PhaseR,
            PlaneLabel::Ild,
            PlaneLabel::Ipd,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::Format(format!("unknown plane label {s:?}")))
    }
}

/// Which feature types feed the network. Serialized as a `+`-joined list of
/// `mag_lr`, `phase_lr`, `ild`, `ipd`, e.g. `"phase_lr+ild+ipd"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSetSpec {
    pub include_mag_lr: bool,
    pub include_phase_lr: bool,
    pub include_ild: bool,
    pub include_ipd: bool,
}

impl FeatureSetSpec {
    pub const fn new(mag_lr: bool, phase_lr: bool, ild: bool, ipd: bool) -> Self {
        Self {
            include_mag_lr: mag_lr,
            include_phase_lr: phase_lr,
            include_ild: ild,
            include_ipd: ipd,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n_types() == 0
    }

    /// Feature types selected (a binaural pair counts once).
    pub fn n_types(&self) -> usize {
        [self.include_mag_lr, self.include_phase_lr, self.include_ild, self.include_ipd]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Network input channels.
    pub fn n_planes(&self) -> usize {
        2 * self.include_mag_lr as usize
            + 2 * self.include_phase_lr as usize
            + self.include_ild as usize
            + self.include_ipd as usize
    }

    pub fn layout(&self) -> Vec<PlaneLabel> {
        let mut v = Vec::with_capacity(self.n_planes());
        if self.include_mag_lr {
            v.extend([PlaneLabel::MagL, PlaneLabel::MagR]);
        }
        if self.include_phase_lr {
            v.extend([PlaneLabel::PhaseL, PlaneLabel::PhaseR]);
        }
        if self.include_ild {
            v.push(PlaneLabel::Ild);
        }
        if self.include_ipd {
            v.push(PlaneLabel::Ipd);
        }
        v
    }

    /// Machine identifier, e.g. `mag_lr+ild`.
    pub fn fingerprint(&self) -> String {
        let mut parts = Vec::new();
        if self.include_mag_lr {
            parts.push("mag_lr");
        }
        if self.include_phase_lr {
            parts.push("phase_lr");
        }
        if self.include_ild {
            parts.push("ild");
        }
        if self.include_ipd {
            parts.push("ipd");
        }
        parts.join("+")
    }

    /// Table-style name, e.g. `Mag L/R, ILD`.
    pub fn display_name(&self) -> String {
        let mut parts = Vec::new();
        if self.include_mag_lr {
            parts.push("Mag L/R");
        }
        if self.include_phase_lr {
            parts.push("Phase L/R");
        }
        if self.include_ild {
            parts.push("ILD");
        }
        if self.include_ipd {
            parts.push("IPD");
        }
        parts.join(", ")
    }
}

impl fmt::Display for FeatureSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fingerprint())
    }
}

impl FromStr for FeatureSetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = FeatureSetSpec::default();
        for part in s.split('+').map(str::trim) {
            let slot = match part.to_ascii_lowercase().as_str() {
                "mag_lr" | "mag" => &mut spec.include_mag_lr,
                "phase_lr" | "phase" => &mut spec.include_phase_lr,
                "ild" => &mut spec.include_ild,
                "ipd" => &mut spec.include_ipd,
                other => return Err(Error::Parameter(format!("unknown feature type {other:?} in {s:?}"))),
            };
            if *slot {
                return Err(Error::Parameter(format!("feature type {part:?} repeated in {s:?}")));
            }
            *slot = true;
        }
        if spec.is_empty() {
            return Err(Error::Parameter("empty feature set".into()));
        }
        Ok(spec)
    }
}

impl TryFrom<String> for FeatureSetSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSetSpec> for String {
    fn from(s: FeatureSetSpec) -> String {
        s.fingerprint()
    }
}

/// The thirteen feature sets compared in the study, in table order:
/// four singles, six pairs, two triples and the full set.
pub fn enumerate_table1_specs() -> Vec<FeatureSetSpec> {
    const T: bool = true;
    const F: bool = false;
    vec![
        FeatureSetSpec::new(F, F, T, F),
        FeatureSetSpec::new(F, F, F, T),
        FeatureSetSpec::new(T, F, F, F),
        FeatureSetSpec::new(F, T, F, F),
        FeatureSetSpec::new(F, F, T, T),
        FeatureSetSpec::new(T, F, T, F),
        FeatureSetSpec::new(T, F, F, T),
        FeatureSetSpec::new(F, T, T, F),
        FeatureSetSpec::new(F, T, F, T),
        FeatureSetSpec::new(T, T, F, F),
        FeatureSetSpec::new(T, F, T, T),
        FeatureSetSpec::new(F, T, T, T),
        FeatureSetSpec::new(T, T, T, T),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_rows_in_order() {
        let specs = enumerate_table1_specs();
        assert_eq!(specs.len(), 13);
        assert_eq!(specs[4], "ild+ipd".parse().unwrap());
        assert_eq!(specs[11], "phase_lr+ild+ipd".parse().unwrap());
        assert_eq!(specs[4].display_name(), "ILD, IPD");
        assert_eq!(specs[11].display_name(), "Phase L/R, ILD, IPD");
        let types: Vec<usize> = specs.iter().map(|s| s.n_types()).collect();
        assert_eq!(types, vec![1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 4]);
        let unique: std::collections::HashSet<_> = specs.iter().collect();
        assert_eq!(unique.len(), 13);
    }

    #[test]
    fn plane_counts_and_layout() {
        let all = FeatureSetSpec::new(true, true, true, true);
        assert_eq!(all.n_planes(), 6);
        assert_eq!(
            all.layout(),
            vec![
                PlaneLabel::MagL,
                PlaneLabel::MagR,
                PlaneLabel::PhaseL,
                PlaneLabel::PhaseR,
                PlaneLabel::Ild,
                PlaneLabel::Ipd
            ]
        );
        let pair: FeatureSetSpec = "ild+ipd".parse().unwrap();
        assert_eq!(pair.n_planes(), 2);
        assert_eq!(pair.layout(), vec![PlaneLabel::Ild, PlaneLabel::Ipd]);
        for s in enumerate_table1_specs() {
            assert!((1..=6).contains(&s.n_planes()));
            assert_eq!(s.layout().len(), s.n_planes());
        }
    }

    #[test]
    fn parse_round_trip_and_errors() {
        for s in enumerate_table1_specs() {
            assert_eq!(s.fingerprint().parse::<FeatureSetSpec>().unwrap(), s);
        }
        assert!("".parse::<FeatureSetSpec>().is_err());
        assert!("ild+ild".parse::<FeatureSetSpec>().is_err());
        assert!("gcc".parse::<FeatureSetSpec>().is_err());
    }
}
