//! Schemas for the public evaluation datasets. The files themselves are not
//! shipped; point [`RealDataset::load`] at a local copy with a header row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{ingest_csv, Schema};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealDataset {
    /// TPC-H `lineitem`, `|`-separated:
    /// `l_orderkey|l_partkey|l_suppkey|l_linenumber|l_quantity|l_extendedprice|...`.
    /// No ground truth; inject duplicates before use.
    TpchLineitem,
    /// Intel lab sensor log, space-separated:
    /// `date time epoch moteid temperature humidity light voltage`.
    Sensor,
    /// Publication records with a duplicate-cluster column:
    /// `id,title,authors,venue,year,entity`.
    Publications,
    /// Amazon/Google product pairs merged into one file:
    /// `id,title,manufacturer,price,entity`.
    ProductsAmazonGoogle,
    /// Abt/Buy product pairs merged into one file:
    /// `id,name,description,price,entity`.
    ProductsAbtBuy,
    /// Fodor's/Zagat's restaurant guide: `id,name,addr,city,phone,type,entity`.
    Restaurants,
}

impl RealDataset {
    pub const ALL: [RealDataset; 6] = [
        RealDataset::TpchLineitem,
        RealDataset::Sensor,
        RealDataset::Publications,
        RealDataset::ProductsAmazonGoogle,
        RealDataset::ProductsAbtBuy,
        RealDataset::Restaurants,
    ];

    pub fn schema(&self) -> Schema {
        match self {
            RealDataset::TpchLineitem => {
                let mut s = Schema::vectors(["l_orderkey", "l_linenumber", "l_quantity"])
                    .with_value("l_extendedprice");
                s.delimiter = b'|';
                s
            }
            RealDataset::Sensor => {
                let mut s = Schema::vectors(["temperature", "humidity"]).with_value("light");
                s.delimiter = b' ';
                s
            }
            RealDataset::Publications => Schema::text(["title", "authors", "venue"])
                .with_id("id")
                .with_entity("entity")
                .with_value("year"),
            RealDataset::ProductsAmazonGoogle => Schema::text(["title", "manufacturer"])
                .with_id("id")
                .with_entity("entity")
                .with_value("price"),
            RealDataset::ProductsAbtBuy => Schema::text(["name", "description"])
                .with_id("id")
                .with_entity("entity")
                .with_value("price"),
            RealDataset::Restaurants => Schema::text(["name", "addr", "city", "type"])
                .with_id("id")
                .with_entity("entity"),
        }
    }

    pub fn load(&self, path: &Path) -> Result<Dataset> {
        ingest_csv(path, &self.schema())
    }
}
