//! Calibration and wedge file formats (JSON documents).

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{Calibration, CalibrationData, CalibrationError, PolicyWedges};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    #[serde(rename = "N")]
    pub countries: usize,
    #[serde(rename = "J")]
    pub sectors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub countries: Vec<String>,
    pub sectors: Vec<String>,
}

/// On-disk calibration document. Arrays are nested row-major:
/// `gamma[i][s][j]`, `trade_flow[origin][destination][sector]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub dimensions: Dimensions,
    pub labels: Labels,
    pub tradable_mask: Vec<bool>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<Vec<f64>>>,
    pub trade_flow: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub baseline_tariff: Vec<Vec<Vec<f64>>>,
    pub baseline_export_wedge: Vec<Vec<Vec<f64>>>,
}

/// On-disk counterfactual wedges, `[origin][destination][sector]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WedgeFile {
    pub tariff: Vec<Vec<Vec<f64>>>,
    pub export_wedge: Vec<Vec<Vec<f64>>>,
}

fn schema(msg: String) -> CalibrationError {
    CalibrationError::Schema(msg)
}

fn to_array2(name: &str, v: &[Vec<f64>], rows: usize, cols: usize) -> Result<Array2<f64>, CalibrationError> {
    if v.len() != rows || v.iter().any(|r| r.len() != cols) {
        return Err(schema(format!("{name} must be {rows}x{cols}")));
    }
    Ok(Array2::from_shape_fn((rows, cols), |(a, b)| v[a][b]))
}

fn to_array3(
    name: &str,
    v: &[Vec<Vec<f64>>],
    dims: (usize, usize, usize),
) -> Result<Array3<f64>, CalibrationError> {
    let (a, b, c) = dims;
    if v.len() != a || v.iter().any(|m| m.len() != b || m.iter().any(|r| r.len() != c)) {
        return Err(schema(format!("{name} must be {a}x{b}x{c}")));
    }
    Ok(Array3::from_shape_fn(dims, |(x, y, z)| v[x][y][z]))
}

fn from_array2(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn from_array3(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    a.outer_iter().map(|m| from_array2(&m.to_owned())).collect()
}

impl CalibrationFile {
    pub fn from_calibration(cal: &Calibration) -> Self {
        let d = cal.data();
        Self {
            dimensions: Dimensions {
                countries: cal.countries(),
                sectors: cal.sectors(),
            },
            labels: Labels {
                countries: d.countries.clone(),
                sectors: d.sectors.clone(),
            },
            tradable_mask: d.tradable.clone(),
            alpha: from_array2(&d.alpha),
            beta: from_array2(&d.beta),
            gamma: from_array3(&d.gamma),
            trade_flow: from_array3(&d.trade_flow),
            theta: d.theta.clone(),
            psi: d.psi.clone(),
            baseline_tariff: from_array3(&d.baseline_tariff),
            baseline_export_wedge: from_array3(&d.baseline_export_wedge),
        }
    }

    pub fn into_calibration(self) -> Result<Calibration, CalibrationError> {
        let n = self.dimensions.countries;
        let j = self.dimensions.sectors;
        if self.labels.countries.len() != n || self.labels.sectors.len() != j {
            return Err(schema(format!("labels must list {n} countries and {j} sectors")));
        }
        if self.tradable_mask.len() != j || self.theta.len() != j || self.psi.len() != j {
            return Err(schema(format!("tradable_mask, theta and psi must have length {j}")));
        }
        let data = CalibrationData {
            countries: self.labels.countries,
            sectors: self.labels.sectors,
            tradable: self.tradable_mask,
            alpha: to_array2("alpha", &self.alpha, n, j)?,
            beta: to_array2("beta", &self.beta, n, j)?,
            gamma: to_array3("gamma", &self.gamma, (n, j, j))?,
            trade_flow: to_array3("trade_flow", &self.trade_flow, (n, n, j))?,
            theta: self.theta,
            psi: self.psi,
            baseline_tariff: to_array3("baseline_tariff", &self.baseline_tariff, (n, n, j))?,
            baseline_export_wedge: to_array3(
                "baseline_export_wedge",
                &self.baseline_export_wedge,
                (n, n, j),
            )?,
        };
        Calibration::new(data)
    }
}

pub fn calibration_to_json(cal: &Calibration) -> String {
    serde_json::to_string_pretty(&CalibrationFile::from_calibration(cal))
        .expect("calibration serializes")
}

pub fn calibration_from_json(text: &str) -> Result<Calibration, CalibrationError> {
    let file: CalibrationFile =
        serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    file.into_calibration()
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Calibration, CalibrationError> {
    calibration_from_json(&fs::read_to_string(path)?)
}

pub fn write_calibration(cal: &Calibration, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
    fs::write(path, calibration_to_json(cal))?;
    Ok(())
}

pub fn wedges_to_json(w: &PolicyWedges) -> String {
    let file = WedgeFile {
        tariff: from_array3(&w.tariff),
        export_wedge: from_array3(&w.export_wedge),
    };
    serde_json::to_string_pretty(&file).expect("wedges serialize")
}

pub fn wedges_from_json(text: &str, cal: &Calibration) -> Result<PolicyWedges, CalibrationError> {
    let file: WedgeFile = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    let dims = (cal.countries(), cal.countries(), cal.sectors());
    let w = PolicyWedges {
        tariff: to_array3("tariff", &file.tariff, dims)?,
        export_wedge: to_array3("export_wedge", &file.export_wedge, dims)?,
    };
    w.validate(cal).map_err(|e| schema(e.to_string()))?;
    Ok(w)
}

pub fn load_wedges(path: impl AsRef<Path>, cal: &Calibration) -> Result<PolicyWedges, CalibrationError> {
    wedges_from_json(&fs::read_to_string(path)?, cal)
}

pub fn write_wedges(w: &PolicyWedges, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
    fs::write(path, wedges_to_json(w))?;
    Ok(())
}
