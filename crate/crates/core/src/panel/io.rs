use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{compare_ids, Panel, PanelError, TimePoint, Trajectory, VariableSchema};
use crate::scalar::Scalar;

/// Field separator of long-format panel files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }

    /// Guesses from a file extension: `.tsv`/`.tab` are tab separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv" | "tab") => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }
}

impl FromStr for Delimiter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comma" | "," => Ok(Delimiter::Comma),
            "tab" | "\t" | "\\t" => Ok(Delimiter::Tab),
            other => Err(format!("unknown delimiter `{other}` (expected comma or tab)")),
        }
    }
}

struct Columns {
    id: usize,
    time: usize,
    covariates: Vec<usize>,
    dose: usize,
    treatment: usize,
    censor: Option<usize>,
    compete: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, schema: &VariableSchema) -> Result<Self, PanelError> {
        let find = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| PanelError::MissingColumn(name.to_string()))
        };
        Ok(Self {
            id: find("id")?,
            time: find("time")?,
            covariates: schema.covariates().iter().map(|c| find(c)).collect::<Result<_, _>>()?,
            dose: find(schema.dose_name())?,
            treatment: find(schema.treatment_name())?,
            censor: schema.censor_name().map(find).transpose()?,
            compete: schema.compete_name().map(find).transpose()?,
        })
    }

    /// Analysis fields (everything but id, time and the censoring flag).
    fn analysis(&self) -> impl Iterator<Item = usize> + '_ {
        self.covariates.iter().copied().chain([self.dose, self.treatment]).chain(self.compete)
    }
}

/// Reads a long-format panel (one row per subject and time) with a mandatory header.
///
/// Every subject needs a row for each time until its first censoring; rows at and
/// after censoring may leave the analysis fields empty or be omitted.
pub fn load_panel<T: Scalar, R: Read>(
    source: R,
    schema: &VariableSchema,
    delimiter: Delimiter,
) -> Result<Panel<T>, PanelError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let cols = Columns::locate(reader.headers()?, schema)?;
    let horizon = schema.horizon();

    let mut rows: HashMap<String, Vec<Option<TimePoint<T>>>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[cols.id].to_string();
        if id.is_empty() {
            return Err(PanelError::MissingValue { id, time: 0, column: "id".into() });
        }
        let time: usize = record[cols.time].parse().map_err(|_| PanelError::Parse {
            line,
            column: "time".into(),
            value: record[cols.time].to_string(),
        })?;
        if time > horizon {
            return Err(PanelError::TimeOutOfRange { id, time, horizon });
        }
        let point = parse_point(&record, &cols, schema, &id, time, line)?;
        let slots = rows.entry(id.clone()).or_insert_with(|| vec![None; horizon + 1]);
        if slots[time].is_some() {
            return Err(PanelError::DuplicateRow { id, time });
        }
        slots[time] = Some(point);
    }

    let mut ids: Vec<String> = rows.keys().cloned().collect();
    ids.sort_by(|a, b| compare_ids(a, b));
    let mut trajectories = Vec::with_capacity(ids.len());
    for id in ids {
        let slots = rows.remove(&id).expect("id collected from map");
        let mut points = Vec::with_capacity(horizon + 1);
        let mut censored = false;
        for (time, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(p) => {
                    censored |= p.censored;
                    points.push(p);
                }
                None if censored => points.push(TimePoint::missing(schema.n_covariates())),
                None => return Err(PanelError::Gap { id, time }),
            }
        }
        trajectories.push(Trajectory { id, points });
    }
    Panel::new(schema.clone(), trajectories)
}

fn parse_point<T: Scalar>(
    record: &csv::StringRecord,
    cols: &Columns,
    schema: &VariableSchema,
    id: &str,
    time: usize,
    line: u64,
) -> Result<TimePoint<T>, PanelError> {
    let binary = |idx: usize, column: &str, empty_default: Option<bool>| -> Result<bool, PanelError> {
        match &record[idx] {
            "0" => Ok(false),
            "1" => Ok(true),
            "" => empty_default.ok_or_else(|| PanelError::MissingValue {
                id: id.to_string(),
                time,
                column: column.to_string(),
            }),
            other => Err(PanelError::NonBinary {
                id: id.to_string(),
                time,
                column: column.to_string(),
                value: other.to_string(),
            }),
        }
    };
    let real = |idx: usize, column: &str| -> Result<f64, PanelError> {
        let raw = &record[idx];
        if raw.is_empty() {
            return Err(PanelError::MissingValue { id: id.to_string(), time, column: column.to_string() });
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(PanelError::Parse { line, column: column.to_string(), value: raw.to_string() }),
        }
    };

    let censored = match (cols.censor, schema.censor_name()) {
        (Some(idx), Some(name)) => binary(idx, name, Some(false))?,
        _ => false,
    };
    if censored && cols.analysis().all(|idx| record[idx].is_empty()) {
        return Ok(TimePoint::missing(schema.n_covariates()));
    }

    let covariates = cols
        .covariates
        .iter()
        .zip(schema.covariates())
        .map(|(&idx, name)| real(idx, name).map(T::of))
        .collect::<Result<Vec<T>, _>>()?;
    let dose = real(cols.dose, schema.dose_name())?;
    if dose < 0.0 {
        return Err(PanelError::NegativeDose { id: id.to_string(), time, value: dose });
    }
    let treatment = binary(cols.treatment, schema.treatment_name(), None)?;
    let competing = match (cols.compete, schema.compete_name()) {
        (Some(idx), Some(name)) => binary(idx, name, Some(false))?,
        _ => false,
    };
    Ok(TimePoint { censored, competing, covariates, dose: T::of(dose), treatment, observed: true })
}

pub fn read_panel_file<T: Scalar>(
    path: impl AsRef<Path>,
    schema: &VariableSchema,
    delimiter: Option<Delimiter>,
) -> Result<Panel<T>, PanelError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    load_panel(file, schema, delimiter.unwrap_or_else(|| Delimiter::from_path(path)))
}

/// Writes the panel in the format [`load_panel`] reads, one row per subject and
/// time. Missing fields are written empty.
pub fn write_panel<T: Scalar, W: Write>(panel: &Panel<T>, sink: W, delimiter: Delimiter) -> Result<(), PanelError> {
    let schema = panel.schema();
    let mut w = csv::WriterBuilder::new().delimiter(delimiter.byte()).from_writer(sink);
    let mut header = vec!["id".to_string(), "time".to_string()];
    header.extend(schema.covariates().iter().cloned());
    header.push(schema.dose_name().to_string());
    header.push(schema.treatment_name().to_string());
    header.extend(schema.censor_name().map(str::to_string));
    header.extend(schema.compete_name().map(str::to_string));
    w.write_record(&header)?;

    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for tr in panel.trajectories() {
        for (k, p) in tr.points.iter().enumerate() {
            row.clear();
            row.push(tr.id.clone());
            row.push(k.to_string());
            if p.observed {
                row.extend(p.covariates.iter().map(|c| c.to_string()));
                row.push(p.dose.to_string());
                row.push(bit(p.treatment));
            } else {
                row.extend(std::iter::repeat_n(String::new(), schema.n_covariates() + 2));
            }
            if schema.has_censoring() {
                row.push(bit(p.censored));
            }
            if schema.has_competing() {
                row.push(if p.observed { bit(p.competing) } else { String::new() });
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel_file<T: Scalar>(
    panel: &Panel<T>,
    path: impl AsRef<Path>,
    delimiter: Delimiter,
) -> Result<(), PanelError> {
    let file = File::create(path)?;
    write_panel(panel, std::io::BufWriter::new(file), delimiter)
}
