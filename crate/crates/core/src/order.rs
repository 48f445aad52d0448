//! Prioritized test orders.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A permutation of test indices together with the strategy that produced
/// it and, when randomness was involved, the seed it ran under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrioritizedOrder {
    permutation: Vec<usize>,
    strategy_name: String,
    seed: Option<u64>,
}

impl PrioritizedOrder {
    /// Validates that `permutation` is a bijection on `0..n`.
    pub fn new(permutation: Vec<usize>, strategy_name: &str, seed: Option<u64>) -> Result<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &idx in &permutation {
            if idx >= n {
                return Err(Error::Index {
                    what: "test",
                    index: idx,
                    len: n,
                });
            }
            if seen[idx] {
                return Err(Error::Domain(format!(
                    "test index {idx} appears twice in the order"
                )));
            }
            seen[idx] = true;
        }
        Ok(Self {
            permutation,
            strategy_name: strategy_name.to_owned(),
            seed,
        })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn strategy_name(&self) -> &str {
        &self.strategy_name
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Maps the permutation through a test-id list.
    pub fn to_ids(&self, test_ids: &[String]) -> Result<Vec<String>> {
        if test_ids.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} test ids for an order of length {}",
                test_ids.len(),
                self.len()
            )));
        }
        Ok(self
            .permutation
            .iter()
            .map(|&i| test_ids[i].clone())
            .collect())
    }

    /// Writes the `rank,test_id` CSV, ranks starting at 1.
    pub fn write_csv<W: Write>(&self, test_ids: &[String], writer: W) -> Result<()> {
        let ids = self.to_ids(test_ids)?;
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["rank", "test_id"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (rank, id) in ids.iter().enumerate() {
            csv.write_record([&(rank + 1).to_string(), id])
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Reads a `rank,test_id` CSV back into the ordered id list, checking that
/// ranks are exactly 1..n in file order.
pub fn read_order_csv<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = csv.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Parse(e.to_string()))?,
        None => return Err(Error::Parse("empty order CSV".into())),
    };
    if header.len() != 2 || &header[0] != "rank" || &header[1] != "test_id" {
        return Err(Error::Parse("order CSV header must be `rank,test_id`".into()));
    }

    let mut ids = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::Parse("order CSV rows must have 2 fields".into()));
        }
        let rank: usize = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad rank `{}`", &rec[0])))?;
        if rank != ids.len() + 1 {
            return Err(Error::Parse(format!(
                "rank {rank} out of sequence at row {}",
                ids.len() + 1
            )));
        }
        ids.push(rec[1].to_owned());
    }
    if ids.is_empty() {
        return Err(Error::Parse("order CSV has no rows".into()));
    }
    Ok(ids)
}
