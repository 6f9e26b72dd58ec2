//! CSV input and output for datasets.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, EntityLabels, Features};

/// Column roles of an input file.
///
/// Exactly one of `features` (numeric columns) or `text` (string columns,
/// joined with a space) must be non-empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: Option<String>,
    pub features: Vec<String>,
    pub text: Vec<String>,
    pub entity: Option<String>,
    pub value: Option<String>,
    #[serde(with = "delimiter_serde")]
    pub delimiter: u8,
}

mod delimiter_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&(*d as char).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_bytes() {
            [b] => Ok(*b),
            _ if s == "\\t" => Ok(b'\t'),
            _ => Err(serde::de::Error::custom("delimiter must be a single byte")),
        }
    }
}

impl Schema {
    pub fn vectors<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Self {
        Schema {
            features: features.into_iter().map(Into::into).collect(),
            delimiter: b',',
            ..Schema::default()
        }
    }

    pub fn text<S: Into<String>>(text: impl IntoIterator<Item = S>) -> Self {
        Schema {
            text: text.into_iter().map(Into::into).collect(),
            delimiter: b',',
            ..Schema::default()
        }
    }

    pub fn with_id(mut self, col: impl Into<String>) -> Self {
        self.id = Some(col.into());
        self
    }

    pub fn with_entity(mut self, col: impl Into<String>) -> Self {
        self.entity = Some(col.into());
        self
    }

    pub fn with_value(mut self, col: impl Into<String>) -> Self {
        self.value = Some(col.into());
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut schema: Schema = serde_json::from_str(&text)?;
        if schema.delimiter == 0 {
            schema.delimiter = b',';
        }
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        match (self.features.is_empty(), self.text.is_empty()) {
            (true, true) => Err(Error::Config("no feature or text columns declared".into())),
            (false, false) => Err(Error::Config(
                "declare either numeric feature columns or text columns, not both".into(),
            )),
            _ => Ok(()),
        }
    }
}

pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let delimiter = if schema.delimiter == 0 { b',' } else { schema.delimiter };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("declared column `{name}` not found")))
    };
    let id_col = schema.id.as_deref().map(column).transpose()?;
    let entity_col = schema.entity.as_deref().map(column).transpose()?;
    let value_col = schema.value.as_deref().map(column).transpose()?;
    let feature_cols = schema
        .features
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let text_cols = schema
        .text
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut data = Vec::new();
    let mut texts = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::MalformedRow {
                row,
                message: format!("missing field {col}"),
            })
        };
        let number = |col: usize| -> Result<f64> {
            let raw = field(col)?.trim();
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::MalformedRow {
                    row,
                    message: format!("`{raw}` in column {} is not a finite number", &headers[col]),
                })
        };
        if let Some(c) = id_col {
            ids.push(field(c)?.to_string());
        }
        if let Some(c) = entity_col {
            labels.push(field(c)?.to_string());
        }
        values.push(match value_col {
            Some(c) => number(c)?,
            None => 0.0,
        });
        for &c in &feature_cols {
            data.push(number(c)?);
        }
        if !text_cols.is_empty() {
            let parts = text_cols
                .iter()
                .map(|&c| field(c).map(str::trim))
                .collect::<Result<Vec<_>>>()?;
            texts.push(parts.join(" "));
        }
    }

    let features = if feature_cols.is_empty() {
        Features::text(texts)
    } else {
        Features::vectors(feature_cols.len(), data)
    };
    let labels = entity_col.map(|_| EntityLabels::from_names(&labels));
    Dataset::new(features, values, id_col.map(|_| ids), labels)
}

/// Writes `data` with columns `id`, the feature columns (`f0..` or `text`),
/// `entity` when labeled, and `value`.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    match data.dim() {
        Some(dim) => header.extend((0..dim).map(|j| format!("f{j}"))),
        None => header.push("text".into()),
    }
    if data.has_labels() {
        header.push("entity".into());
    }
    header.push("value".into());
    w.write_record(&header)?;
    let names = data.has_labels().then(|| data.entity_names());
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        row.clear();
        row.push(data.record_id(i).into_owned());
        match data.vector(i) {
            Some(v) => row.extend(v.iter().map(|x| x.to_string())),
            None => row.push(data.text(i).unwrap_or_default().to_string()),
        }
        if let Some(names) = &names {
            row.push(names[data.entities()[i] as usize].clone());
        }
        row.push(data.values()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Schema matching the layout produced by [`write_csv`] for `data`.
pub fn schema_for(data: &Dataset) -> Schema {
    let mut schema = match data.dim() {
        Some(dim) => Schema::vectors((0..dim).map(|j| format!("f{j}"))),
        None => Schema::text(["text"]),
    };
    schema = schema.with_id("id").with_value("value");
    if data.has_labels() {
        schema = schema.with_entity("entity");
    }
    schema
}
