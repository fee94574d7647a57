use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use vistacast_gbdt::Matrix;

use super::{DayExample, DayFeatures, DayKey, FusionError, SnapshotKind};
use crate::model::{VisibilityClass, WeatherVariable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Vision,
    WeatherNow,
    Forecast,
    Meta,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Self::Vision, Self::WeatherNow, Self::Forecast, Self::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vision => "VISION",
            Self::WeatherNow => "WEATHER_NOW",
            Self::Forecast => "FORECAST",
            Self::Meta => "META",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Encoding {
    Numeric,
    Sin,
    Cos,
    OneHot { category: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub modality: Modality,
    pub encoding: Encoding,
    /// Written for missing values; the learner routes it to its missing bin.
    pub missing: String,
}

impl ColumnSpec {
    fn new(name: impl Into<String>, modality: Modality, encoding: Encoding) -> Self {
        Self { name: name.into(), modality, encoding, missing: "NaN".into() }
    }
}

/// `(sin, cos)` of a direction in degrees; NaN pair when missing.
pub fn circular_encode(deg: Option<f64>) -> (f64, f64) {
    match deg {
        Some(d) => {
            let r = d.rem_euclid(360.0).to_radians();
            (r.sin(), r.cos())
        }
        None => (f64::NAN, f64::NAN),
    }
}

fn lead_prefix(lead: usize) -> String {
    if lead == 0 {
        "now".to_string()
    } else {
        format!("fc{lead}d")
    }
}

/// Category vocabularies fixed when the encoder is fitted. Categories not in
/// the vocabulary encode as an all-zero block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub cameras: Vec<String>,
    pub weather_codes: Vec<i32>,
}

impl FeatureEncoder {
    pub fn fit(examples: &[DayExample]) -> Self {
        let cameras: BTreeSet<&str> = examples.iter().map(|e| e.key.camera_id.as_str()).collect();
        let codes: BTreeSet<i32> = examples
            .iter()
            .filter_map(|e| e.features.weather[0].get(WeatherVariable::WeatherCode))
            .map(|c| c.round() as i32)
            .collect();
        Self { cameras: cameras.into_iter().map(str::to_string).collect(), weather_codes: codes.into_iter().collect() }
    }

    pub fn schema(&self) -> Vec<ColumnSpec> {
        let mut cols = Vec::new();
        for class in VisibilityClass::VISION {
            cols.push(ColumnSpec::new(
                format!("vision_p_{}", class.name().to_lowercase()),
                Modality::Vision,
                Encoding::Numeric,
            ));
        }
        for lead in 0..4 {
            let modality = if lead == 0 { Modality::WeatherNow } else { Modality::Forecast };
            let prefix = lead_prefix(lead);
            for var in WeatherVariable::ALL {
                if var == WeatherVariable::WindDirection {
                    cols.push(ColumnSpec::new(format!("{prefix}_wind_dir_sin"), modality, Encoding::Sin));
                    cols.push(ColumnSpec::new(format!("{prefix}_wind_dir_cos"), modality, Encoding::Cos));
                } else {
                    cols.push(ColumnSpec::new(format!("{prefix}_{}", var.field()), modality, Encoding::Numeric));
                }
            }
        }
        for code in &self.weather_codes {
            cols.push(ColumnSpec::new(
                format!("now_weather_code={code}"),
                Modality::WeatherNow,
                Encoding::OneHot { category: code.to_string() },
            ));
        }
        cols.push(ColumnSpec::new("latitude", Modality::Meta, Encoding::Numeric));
        cols.push(ColumnSpec::new("longitude", Modality::Meta, Encoding::Numeric));
        cols.push(ColumnSpec::new("snapshot_local_minutes", Modality::Meta, Encoding::Numeric));
        for cam in &self.cameras {
            cols.push(ColumnSpec::new(
                format!("camera={cam}"),
                Modality::Meta,
                Encoding::OneHot { category: cam.clone() },
            ));
        }
        cols
    }

    pub fn encode_row(&self, example: &DayExample) -> Vec<f64> {
        self.encode_parts(&example.key, &example.features, example.latitude, example.longitude)
    }

    /// Encodes a snapshot that has no label yet, e.g. for live prediction.
    pub fn encode_parts(
        &self,
        key: &DayKey,
        f: &DayFeatures,
        latitude: Option<f64>,
        longitude: Option<f64>,
    ) -> Vec<f64> {
        let mut row = Vec::with_capacity(64);
        match f.vision {
            Some(p) => row.extend(p.as_array()),
            None => row.extend([f64::NAN; 4]),
        }
        for summary in &f.weather {
            for var in WeatherVariable::ALL {
                let v = summary.get(var);
                if var == WeatherVariable::WindDirection {
                    let (s, c) = circular_encode(v);
                    row.push(s);
                    row.push(c);
                } else {
                    row.push(v.unwrap_or(f64::NAN));
                }
            }
        }
        let code = f.weather[0].get(WeatherVariable::WeatherCode).map(|c| c.round() as i32);
        for known in &self.weather_codes {
            row.push(match code {
                Some(c) => f64::from(u8::from(c == *known)),
                None => f64::NAN,
            });
        }
        row.push(latitude.unwrap_or(f64::NAN));
        row.push(longitude.unwrap_or(f64::NAN));
        row.push(f.local_minutes);
        for cam in &self.cameras {
            row.push(f64::from(u8::from(*cam == key.camera_id)));
        }
        row
    }

    pub fn encode(&self, examples: &[DayExample]) -> Result<FeatureMatrix, FusionError> {
        let kind = examples.first().map(|e| e.snapshot_kind);
        if examples.iter().any(|e| Some(e.snapshot_kind) != kind) {
            return Err(FusionError::MixedSnapshotKinds);
        }
        let schema = self.schema();
        let mut data = Vec::with_capacity(examples.len() * schema.len());
        for e in examples {
            let row = self.encode_row(e);
            debug_assert_eq!(row.len(), schema.len());
            data.extend(row);
        }
        let values = Matrix::new(data, examples.len(), schema.len()).expect("rows match schema width");
        Ok(FeatureMatrix {
            snapshot_kind: kind.unwrap_or(SnapshotKind::FirstFrame),
            schema,
            keys: examples.iter().map(|e| e.key.clone()).collect(),
            group_ids: examples.iter().map(|e| e.key.date.to_string()).collect(),
            values,
        })
    }
}

/// Encoded rows with their column schema. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub snapshot_kind: SnapshotKind,
    pub schema: Vec<ColumnSpec>,
    pub keys: Vec<DayKey>,
    /// Cross-validation group of each row: its calendar date.
    pub group_ids: Vec<String>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|c| c.name.clone()).collect()
    }

    /// Indices of the columns whose modality is in `modalities`.
    pub fn columns_for(&self, modalities: &[Modality]) -> Vec<usize> {
        (0..self.width()).filter(|&i| modalities.contains(&self.schema[i].modality)).collect()
    }

    pub fn modality_of(&self, name: &str) -> Option<Modality> {
        self.schema.iter().find(|c| c.name == name).map(|c| c.modality)
    }
}
