/// Trade and scale elasticity of one tradable sector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorElasticity {
    pub code: &'static str,
    pub name: &'static str,
    pub theta: f64,
    pub psi: f64,
}

pub const NONTRADABLE_THETA: f64 = 10.0;
pub const NONTRADABLE_PSI: f64 = 0.0;

const fn row(code: &'static str, name: &'static str, theta: f64, psi: f64) -> SectorElasticity {
    SectorElasticity {
        code,
        name,
        theta,
        psi,
    }
}

/// The 22 tradable ICIO sectors with their calibrated (θ, ψ).
static TABLE: [SectorElasticity; 22] = [
    row("D01T02", "Agriculture", 6.23, 0.14),
    row("D03", "Fishing", 6.23, 0.14),
    row("D05T06", "Mining, energy", 5.28, 0.17),
    row("D07T08", "Mining, non-energy", 5.28, 0.17),
    row("D09", "Mining support", 5.28, 0.17),
    row("D10T12", "Food", 2.30, 0.35),
    row("D13T15", "Textiles", 3.36, 0.22),
    row("D16", "Wood", 3.90, 0.23),
    row("D17T18", "Paper", 2.65, 0.32),
    row("D19", "Petroleum", 0.64, 0.35),
    row("D20", "Chemical", 3.97, 0.23),
    row("D21", "Pharmaceutical", 3.97, 0.23),
    row("D22", "Rubber", 5.16, 0.14),
    row("D23", "Non-metallic", 5.28, 0.17),
    row("D24", "Basic metals", 3.00, 0.21),
    row("D25", "Fabricated metal", 3.00, 0.21),
    row("D26", "Computer", 1.24, 0.55),
    row("D27", "Electrical equipment", 1.24, 0.55),
    row("D28", "Machinery nec", 7.75, 0.12),
    row("D29", "Motor vehicles", 2.81, 0.13),
    row("D30", "Other transport equipment", 2.81, 0.13),
    row("D31T33", "Manufacturing nec", 6.17, 0.15),
];

pub fn table_a1() -> &'static [SectorElasticity] {
    &TABLE
}

/// `(theta, psi, labels)` for the 22 tradable sectors, in table order.
pub fn table_a1_elasticities() -> (Vec<f64>, Vec<f64>, Vec<&'static str>) {
    (
        TABLE.iter().map(|r| r.theta).collect(),
        TABLE.iter().map(|r| r.psi).collect(),
        TABLE.iter().map(|r| r.name).collect(),
    )
}

/// Indices (0-based, in table order) of the manufacturing sectors 6-22.
pub fn manufacturing_sectors() -> std::ops::Range<usize> {
    5..22
}
