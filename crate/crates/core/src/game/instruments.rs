//! Policy instruments and scenario masks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::{manufacturing_sectors, table_a1, Calibration, PolicyWedges};

/// A scalar policy lever mapped onto one or more wedge entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instrument {
    /// Import tariff `t[origin][destination][sector]`, set by the destination.
    Tariff {
        origin: usize,
        destination: usize,
        sector: usize,
    },
    /// Production subsidy `s`, encoded as `e = -s` on every route out of
    /// `country` in `sector`.
    Subsidy { country: usize, sector: usize },
    /// One subsidy rate shared by a set of sectors.
    UniformSubsidy { country: usize, sectors: Vec<usize> },
    /// Export wedge on one cross-border route.
    ExportTax {
        origin: usize,
        destination: usize,
        sector: usize,
    },
}

/// Which wedge tensor an instrument touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WedgeKind {
    Tariff,
    ExportWedge,
}

/// Box limits on instrument values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstrumentLimits {
    pub tariff_max: f64,
    pub subsidy_max: f64,
    pub export_tax_max: f64,
}

impl Default for InstrumentLimits {
    fn default() -> Self {
        Self {
            tariff_max: 5.0,
            subsidy_max: 0.99,
            export_tax_max: 5.0,
        }
    }
}

impl InstrumentLimits {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.tariff_max > 0.0) || !(self.export_tax_max > 0.0) {
            return Err(ScenarioError::Limits("tariff_max and export_tax_max must be positive".into()));
        }
        if !(self.subsidy_max > 0.0 && self.subsidy_max < 1.0) {
            return Err(ScenarioError::Limits("subsidy_max must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Instrument {
    pub fn owner(&self) -> usize {
        match self {
            Instrument::Tariff { destination, .. } => *destination,
            Instrument::Subsidy { country, .. } | Instrument::UniformSubsidy { country, .. } => *country,
            Instrument::ExportTax { origin, .. } => *origin,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Instrument::Tariff { .. } => "tariff",
            Instrument::Subsidy { .. } => "subsidy",
            Instrument::UniformSubsidy { .. } => "uniform_subsidy",
            Instrument::ExportTax { .. } => "export_tax",
        }
    }

    /// Wedge entries affected, as `(tensor, origin, destination, sector, d wedge / d value)`.
    pub fn entries(&self, countries: usize) -> Vec<(WedgeKind, usize, usize, usize, f64)> {
        match self {
            Instrument::Tariff {
                origin,
                destination,
                sector,
            } => vec![(WedgeKind::Tariff, *origin, *destination, *sector, 1.0)],
            Instrument::ExportTax {
                origin,
                destination,
                sector,
            } => vec![(WedgeKind::ExportWedge, *origin, *destination, *sector, 1.0)],
            Instrument::Subsidy { country, sector } => (0..countries)
                .map(|n| (WedgeKind::ExportWedge, *country, n, *sector, -1.0))
                .collect(),
            Instrument::UniformSubsidy { country, sectors } => sectors
                .iter()
                .flat_map(|&s| (0..countries).map(move |n| (WedgeKind::ExportWedge, *country, n, s, -1.0)))
                .collect(),
        }
    }

    /// Current value read from `wedges` (first affected entry).
    pub fn get(&self, wedges: &PolicyWedges) -> f64 {
        match self {
            Instrument::Tariff {
                origin,
                destination,
                sector,
            } => wedges.tariff[[*origin, *destination, *sector]],
            Instrument::ExportTax {
                origin,
                destination,
                sector,
            } => wedges.export_wedge[[*origin, *destination, *sector]],
            Instrument::Subsidy { country, sector } => wedges.subsidy(*country, *sector),
            Instrument::UniformSubsidy { country, sectors } => {
                sectors.first().map_or(0.0, |&s| wedges.subsidy(*country, s))
            }
        }
    }

    pub fn set(&self, wedges: &mut PolicyWedges, value: f64) {
        match self {
            Instrument::Tariff {
                origin,
                destination,
                sector,
            } => wedges.tariff[[*origin, *destination, *sector]] = value,
            Instrument::ExportTax {
                origin,
                destination,
                sector,
            } => wedges.export_wedge[[*origin, *destination, *sector]] = value,
            Instrument::Subsidy { country, sector } => wedges.set_subsidy(*country, *sector, value),
            Instrument::UniformSubsidy { country, sectors } => {
                for &s in sectors {
                    wedges.set_subsidy(*country, s, value);
                }
            }
        }
    }

    pub fn bounds(&self, limits: &InstrumentLimits) -> (f64, f64) {
        match self {
            Instrument::Tariff { .. } => (0.0, limits.tariff_max),
            Instrument::Subsidy { .. } | Instrument::UniformSubsidy { .. } => (0.0, limits.subsidy_max),
            Instrument::ExportTax { .. } => (-limits.subsidy_max, limits.export_tax_max),
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instrument::Tariff {
                origin,
                destination,
                sector,
            } => write!(f, "tariff[{origin}->{destination}, sector {sector}]"),
            Instrument::ExportTax {
                origin,
                destination,
                sector,
            } => write!(f, "export_tax[{origin}->{destination}, sector {sector}]"),
            Instrument::Subsidy { country, sector } => write!(f, "subsidy[{country}, sector {sector}]"),
            Instrument::UniformSubsidy { country, sectors } => {
                write!(f, "uniform_subsidy[{country}, {} sectors]", sectors.len())
            }
        }
    }
}

/// Reads the values of `instruments` from `wedges`.
pub fn read_values(instruments: &[Instrument], wedges: &PolicyWedges) -> Vec<f64> {
    instruments.iter().map(|i| i.get(wedges)).collect()
}

/// Writes `values` into a copy of `wedges`.
pub fn apply_values(instruments: &[Instrument], wedges: &PolicyWedges, values: &[f64]) -> PolicyWedges {
    let mut out = wedges.clone();
    for (inst, &v) in instruments.iter().zip(values) {
        inst.set(&mut out, v);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    TradeWar,
    Dual,
    SubsidyOnly,
    UniformSubsidy,
    CooperativeTariff,
    CooperativeDual,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::TradeWar,
        ScenarioKind::Dual,
        ScenarioKind::SubsidyOnly,
        ScenarioKind::UniformSubsidy,
        ScenarioKind::CooperativeTariff,
        ScenarioKind::CooperativeDual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::TradeWar => "trade-war",
            ScenarioKind::Dual => "dual",
            ScenarioKind::SubsidyOnly => "subsidy-only",
            ScenarioKind::UniformSubsidy => "uniform-subsidy",
            ScenarioKind::CooperativeTariff => "cooperative-tariff",
            ScenarioKind::CooperativeDual => "cooperative-dual",
        }
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, ScenarioKind::CooperativeTariff | ScenarioKind::CooperativeDual)
    }

    fn tariffs(self) -> bool {
        matches!(
            self,
            ScenarioKind::TradeWar | ScenarioKind::Dual | ScenarioKind::CooperativeTariff | ScenarioKind::CooperativeDual
        )
    }

    fn subsidies(self) -> bool {
        matches!(self, ScenarioKind::Dual | ScenarioKind::SubsidyOnly | ScenarioKind::CooperativeDual)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("player {player} out of range for {countries} countries")]
    PlayerOutOfRange { player: usize, countries: usize },
    #[error("duplicate player {0}")]
    DuplicatePlayer(usize),
    #[error("no players selected")]
    NoPlayers,
    #[error("sector {sector} in the uniform-subsidy set is out of range or non-tradable")]
    BadSector { sector: usize },
    #[error("export-tax instruments cannot be combined with subsidy instruments in {0}")]
    ExportTaxConflict(ScenarioKind),
    #[error("instrument {0} assigned to more than one player")]
    Overlap(String),
    #[error("invalid limits: {0}")]
    Limits(String),
}

/// Options that shape the instrument sets of a scenario.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaskOptions {
    /// Players; `None` means every country.
    pub players: Option<Vec<usize>>,
    /// Sector set for the uniform subsidy; `None` selects the default
    /// manufacturing set.
    pub uniform_sectors: Option<Vec<usize>>,
    /// Add export taxes on each player's cross-border tradable routes.
    pub export_taxes: bool,
}

/// Per-player active instruments for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMask {
    pub kind: ScenarioKind,
    pub players: Vec<usize>,
    /// Instruments owned by each entry of `players`, same order.
    pub instruments: Vec<Vec<Instrument>>,
}

/// Manufacturing sectors of `cal`: the table's manufacturing rows when the
/// sector labels start with the 22 table names, otherwise every tradable sector.
pub fn default_manufacturing(cal: &Calibration) -> Vec<usize> {
    let labels = &cal.data().sectors;
    let table = table_a1();
    let matches_table = labels.len() >= table.len()
        && table
            .iter()
            .zip(labels)
            .all(|(row, label)| label == row.name || label == row.code);
    if matches_table {
        manufacturing_sectors().collect()
    } else {
        cal.tradable_sectors()
    }
}

impl ScenarioMask {
    pub fn new(cal: &Calibration, kind: ScenarioKind, opts: &MaskOptions) -> Result<Self, ScenarioError> {
        let n = cal.countries();
        let players = match &opts.players {
            None => (0..n).collect::<Vec<_>>(),
            Some(p) => p.clone(),
        };
        if players.is_empty() {
            return Err(ScenarioError::NoPlayers);
        }
        for (k, &p) in players.iter().enumerate() {
            if p >= n {
                return Err(ScenarioError::PlayerOutOfRange { player: p, countries: n });
            }
            if players[..k].contains(&p) {
                return Err(ScenarioError::DuplicatePlayer(p));
            }
        }
        let uses_subsidy = kind.subsidies() || kind == ScenarioKind::UniformSubsidy;
        if opts.export_taxes && uses_subsidy {
            return Err(ScenarioError::ExportTaxConflict(kind));
        }
        let tradable = cal.tradable_sectors();
        let uniform = match &opts.uniform_sectors {
            Some(s) => {
                if let Some(&bad) = s.iter().find(|x| !tradable.contains(x)) {
                    return Err(ScenarioError::BadSector { sector: bad });
                }
                s.clone()
            }
            None => default_manufacturing(cal)
                .into_iter()
                .filter(|s| tradable.contains(s))
                .collect(),
        };
        let mut instruments = Vec::with_capacity(players.len());
        for &i in &players {
            let mut own = Vec::new();
            if kind.tariffs() {
                for k in (0..n).filter(|&k| k != i) {
                    for &j in &tradable {
                        own.push(Instrument::Tariff {
                            origin: k,
                            destination: i,
                            sector: j,
                        });
                    }
                }
            }
            if kind.subsidies() {
                for &j in &tradable {
                    own.push(Instrument::Subsidy { country: i, sector: j });
                }
            }
            if kind == ScenarioKind::UniformSubsidy && !uniform.is_empty() {
                own.push(Instrument::UniformSubsidy {
                    country: i,
                    sectors: uniform.clone(),
                });
            }
            if opts.export_taxes {
                for d in (0..n).filter(|&d| d != i) {
                    for &j in &tradable {
                        own.push(Instrument::ExportTax {
                            origin: i,
                            destination: d,
                            sector: j,
                        });
                    }
                }
            }
            instruments.push(own);
        }
        let mask = Self {
            kind,
            players,
            instruments,
        };
        mask.check_disjoint(n)?;
        Ok(mask)
    }

    fn check_disjoint(&self, countries: usize) -> Result<(), ScenarioError> {
        let mut seen = std::collections::HashSet::new();
        for inst in self.instruments.iter().flatten() {
            for (kind, o, d, s, _) in inst.entries(countries) {
                if !seen.insert((kind == WedgeKind::Tariff, o, d, s)) {
                    return Err(ScenarioError::Overlap(inst.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn player_instruments(&self, player: usize) -> Option<&[Instrument]> {
        self.players
            .iter()
            .position(|&p| p == player)
            .map(|k| self.instruments[k].as_slice())
    }

    /// Union of all players' instruments in player order.
    pub fn all_instruments(&self) -> Vec<Instrument> {
        self.instruments.iter().flatten().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{generate_synthetic, SyntheticOptions};

    fn cal() -> Calibration {
        generate_synthetic(3, 3, 2, &SyntheticOptions::default()).unwrap()
    }

    #[test]
    fn trade_war_instruments() {
        let c = cal();
        let m = ScenarioMask::new(&c, ScenarioKind::TradeWar, &MaskOptions::default()).unwrap();
        assert_eq!(m.players, vec![0, 1, 2]);
        for (k, own) in m.instruments.iter().enumerate() {
            assert_eq!(own.len(), 2 * 2);
            assert!(own.iter().all(|i| i.owner() == m.players[k]));
            assert!(own
                .iter()
                .all(|i| matches!(i, Instrument::Tariff { origin, destination, .. } if origin != destination)));
        }
    }

    #[test]
    fn dual_adds_subsidies_and_player_subsets() {
        let c = cal();
        let opts = MaskOptions {
            players: Some(vec![2]),
            ..Default::default()
        };
        let m = ScenarioMask::new(&c, ScenarioKind::Dual, &opts).unwrap();
        assert_eq!(m.players, vec![2]);
        assert_eq!(m.instruments[0].len(), 4 + 2);
        assert!(m.player_instruments(0).is_none());
    }

    #[test]
    fn subsidy_encoding_round_trip() {
        let c = cal();
        let mut w = PolicyWedges::baseline(&c);
        let inst = Instrument::Subsidy { country: 1, sector: 0 };
        inst.set(&mut w, 0.2);
        assert_eq!(inst.get(&w), 0.2);
        for n in 0..3 {
            assert_eq!(w.export_wedge[[1, n, 0]], -0.2);
        }
        assert_eq!(inst.entries(3).len(), 3);
    }

    #[test]
    fn invalid_masks() {
        let c = cal();
        let bad = |opts: MaskOptions, kind| ScenarioMask::new(&c, kind, &opts).unwrap_err();
        assert_eq!(
            bad(
                MaskOptions {
                    players: Some(vec![5]),
                    ..Default::default()
                },
                ScenarioKind::TradeWar
            ),
            ScenarioError::PlayerOutOfRange { player: 5, countries: 3 }
        );
        assert_eq!(
            bad(
                MaskOptions {
                    players: Some(vec![1, 1]),
                    ..Default::default()
                },
                ScenarioKind::TradeWar
            ),
            ScenarioError::DuplicatePlayer(1)
        );
        assert!(matches!(
            bad(
                MaskOptions {
                    export_taxes: true,
                    ..Default::default()
                },
                ScenarioKind::Dual
            ),
            ScenarioError::ExportTaxConflict(_)
        ));
        assert!("nope".parse::<ScenarioKind>().is_err());
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
    }

    #[test]
    fn uniform_subsidy_defaults_to_tradables_without_table_labels() {
        let c = cal();
        let m = ScenarioMask::new(&c, ScenarioKind::UniformSubsidy, &MaskOptions::default()).unwrap();
        assert_eq!(
            m.instruments[0],
            vec![Instrument::UniformSubsidy {
                country: 0,
                sectors: c.tradable_sectors()
            }]
        );
    }
}
