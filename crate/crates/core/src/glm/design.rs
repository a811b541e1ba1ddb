use std::str::FromStr;

use crate::error::GlmError;
use crate::model::{AnalysisRow, RoadType};

/// Floor ε of the `log1p_scaled` transform: `ln(1 + r / ε)`.
pub const HBE_LOG_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predictor {
    HbeRate,
    /// Expands to Type1/Type2/Type3 indicators against Type4.
    RoadType,
    NumLanes,
    HasRamp,
    LaneChanges,
    CumTurnAngle,
}

impl Predictor {
    pub const ALL: [Predictor; 6] = [
        Predictor::HbeRate,
        Predictor::RoadType,
        Predictor::NumLanes,
        Predictor::HasRamp,
        Predictor::LaneChanges,
        Predictor::CumTurnAngle,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Predictor::HbeRate => "hbe_rate",
            Predictor::RoadType => "road_type",
            Predictor::NumLanes => "num_lanes",
            Predictor::HasRamp => "has_ramp",
            Predictor::LaneChanges => "lane_changes",
            Predictor::CumTurnAngle => "cum_turn_angle",
        }
    }

    fn column_names(self) -> Vec<String> {
        match self {
            Predictor::RoadType => vec!["road_type1".into(), "road_type2".into(), "road_type3".into()],
            p => vec![p.key().to_string()],
        }
    }
}

impl FromStr for Predictor {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predictor::ALL
            .into_iter()
            .find(|p| p.key() == s.trim())
            .ok_or_else(|| GlmError::UnknownPredictor(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbeTransform {
    Identity,
    Log1pScaled,
}

impl HbeTransform {
    pub fn apply(self, rate: f64) -> f64 {
        match self {
            HbeTransform::Identity => rate,
            HbeTransform::Log1pScaled => (rate / HBE_LOG_FLOOR).ln_1p(),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            HbeTransform::Identity => "identity",
            HbeTransform::Log1pScaled => "log1p_scaled",
        }
    }
}

impl FromStr for HbeTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "identity" => Ok(HbeTransform::Identity),
            "log1p_scaled" => Ok(HbeTransform::Log1pScaled),
            other => Err(format!("unknown hbe transform {other:?}")),
        }
    }
}

/// Predictors (in column order) and the HBE-rate transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    predictors: Vec<Predictor>,
    pub hbe_transform: HbeTransform,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            predictors: Predictor::ALL.to_vec(),
            hbe_transform: HbeTransform::Log1pScaled,
        }
    }
}

impl ModelSpec {
    pub fn new(predictors: Vec<Predictor>, hbe_transform: HbeTransform) -> Result<Self, GlmError> {
        for (i, p) in predictors.iter().enumerate() {
            if predictors[..i].contains(p) {
                return Err(GlmError::DuplicatePredictor(p.key().to_string()));
            }
        }
        Ok(Self {
            predictors,
            hbe_transform,
        })
    }

    pub fn predictors(&self) -> &[Predictor] {
        &self.predictors
    }

    /// Column names, intercept first.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_string())
            .chain(self.predictors.iter().flat_map(|p| p.column_names()))
            .collect()
    }

    /// Covariate row (intercept first) for one segment.
    pub fn encode(&self, row: &AnalysisRow) -> Vec<f64> {
        let mut x = vec![1.0];
        for p in &self.predictors {
            match p {
                Predictor::HbeRate => x.push(self.hbe_transform.apply(row.hbe_rate)),
                Predictor::RoadType => {
                    for t in [RoadType::Type1, RoadType::Type2, RoadType::Type3] {
                        x.push(f64::from(u8::from(row.road_type == t)));
                    }
                }
                Predictor::NumLanes => x.push(f64::from(row.num_lanes)),
                Predictor::HasRamp => x.push(f64::from(u8::from(row.has_ramp))),
                Predictor::LaneChanges => x.push(f64::from(row.lane_changes)),
                Predictor::CumTurnAngle => x.push(row.cum_turn_angle_deg),
            }
        }
        x
    }
}

/// Row-major design matrix with response and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub n: usize,
    pub p: usize,
    x: Vec<f64>,
    pub y: Vec<f64>,
    pub offset: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Design {
    /// Build from explicit rows. `rows[i]` must include the intercept column.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], y: Vec<f64>, offset: Vec<f64>) -> Result<Self, GlmError> {
        let n = rows.len();
        if n == 0 {
            return Err(GlmError::Empty);
        }
        let p = names.len();
        if y.len() != n || offset.len() != n || rows.iter().any(|r| r.len() != p) {
            return Err(GlmError::NonFinite("inconsistent dimensions".into()));
        }
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        if x.iter().chain(&y).chain(&offset).any(|v| !v.is_finite()) {
            return Err(GlmError::NonFinite("design, response or offset".into()));
        }
        if y.iter().any(|&v| v < 0.0) {
            return Err(GlmError::NonFinite("negative count".into()));
        }
        let mut d = Design {
            names,
            n,
            p,
            x,
            y,
            offset,
            warnings: Vec::new(),
        };
        for j in 1..p {
            let first = d.x[j];
            if (0..n).all(|i| d.x[i * p + j] == first) {
                d.warnings.push(format!("column {} is constant", d.names[j]));
            }
        }
        Ok(d)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn linear_predictor(&self, i: usize, beta: &[f64]) -> f64 {
        self.offset[i] + self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn mean(&self, i: usize, beta: &[f64]) -> f64 {
        self.linear_predictor(i, beta).min(700.0).exp()
    }

    pub fn means(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.mean(i, beta)).collect()
    }

    /// Same design with every exposure multiplied by `factor`.
    pub fn scale_exposure(&self, factor: f64) -> Design {
        let shift = factor.ln();
        let mut d = self.clone();
        d.offset.iter_mut().for_each(|o| *o += shift);
        d
    }

    /// Same design with columns reordered; `order[k]` is the source column of new column `k`.
    pub fn permute_columns(&self, order: &[usize]) -> Design {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| order.iter().map(|&j| self.row(i)[j]).collect())
            .collect();
        let names = order.iter().map(|&j| self.names[j].clone()).collect();
        Design::from_rows(names, &rows, self.y.clone(), self.offset.clone()).expect("permutation of a valid design")
    }
}

/// Design matrix, counts and `ln(exposure in vehicle-miles)` offsets.
pub fn build_design(rows: &[AnalysisRow], spec: &ModelSpec) -> Result<Design, GlmError> {
    if rows.is_empty() {
        return Err(GlmError::Empty);
    }
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    let mut offset = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if !(r.exposure_mvmt > 0.0) {
            return Err(GlmError::NonPositiveExposure(i));
        }
        x.push(spec.encode(r));
        y.push(r.crash_count as f64);
        offset.push((r.exposure_mvmt * 1e6).ln());
    }
    Design::from_rows(spec.column_names(), &x, y, offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rt: RoadType, exposure: f64) -> AnalysisRow {
        AnalysisRow {
            segment_id: "s".into(),
            exposure_mvmt: exposure,
            crash_count: 3,
            crash_rate: 3.0 / exposure,
            hbe_count: 1,
            hbe_distance_miles: 100.0,
            hbe_rate: 0.01,
            road_type: rt,
            num_lanes: 2,
            has_ramp: true,
            lane_changes: 1,
            cum_turn_angle_deg: 15.0,
            length_miles: None,
        }
    }

    #[test]
    fn reference_coding() {
        let spec = ModelSpec::default();
        let names = spec.column_names();
        assert_eq!(
            names,
            [
                "(Intercept)",
                "hbe_rate",
                "road_type1",
                "road_type2",
                "road_type3",
                "num_lanes",
                "has_ramp",
                "lane_changes",
                "cum_turn_angle"
            ]
        );
        let t4 = spec.encode(&row(RoadType::Type4, 1.0));
        assert_eq!(&t4[2..5], &[0.0, 0.0, 0.0]);
        let t2 = spec.encode(&row(RoadType::Type2, 1.0));
        assert_eq!(&t2[2..5], &[0.0, 1.0, 0.0]);
        assert_eq!(t2[0], 1.0);
        assert!((t2[1] - 11f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn offsets_are_log_vehicle_miles() {
        let rows = [row(RoadType::Type1, 36.5), row(RoadType::Type2, 36.5)];
        let d = build_design(&rows, &ModelSpec::default()).unwrap();
        assert_eq!(d.offset, vec![(3.65e7f64).ln(); 2]);
        assert_eq!(d.n, 2);
        assert_eq!(d.p, 9);
    }

    #[test]
    fn empty_rows_and_constant_columns() {
        assert_eq!(build_design(&[], &ModelSpec::default()), Err(GlmError::Empty));
        let d = build_design(&[row(RoadType::Type1, 1.0), row(RoadType::Type1, 2.0)], &ModelSpec::default()).unwrap();
        assert!(d.warnings.iter().any(|w| w.contains("road_type1")));
    }

    #[test]
    fn spec_rejects_duplicates_and_unknown_names() {
        assert!(ModelSpec::new(vec![Predictor::NumLanes, Predictor::NumLanes], HbeTransform::Identity).is_err());
        assert!("speed".parse::<Predictor>().is_err());
        assert_eq!("has_ramp".parse::<Predictor>().unwrap(), Predictor::HasRamp);
    }
}
