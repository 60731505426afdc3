//! Directory bundle format.
//!
//! ```text
//! <dir>/manifest.json     n_months, feature_width, feature_names, label_mode
//! <dir>/nodes_<m>.csv     node_id,f_0,..,f_{F-1},label
//! <dir>/edges_<m>.csv     src,dst,credit_card,geohash,contacts
//! <dir>/referrals.csv     referrer,referred,month
//! ```
//!
//! Rows are sorted by id, floats use the shortest round-trip decimal form, so
//! saving the same network twice gives byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DynamicNetwork, Edge, EdgeColor, LabelMode, NodeId, NodeRecord, ReferralEvent, Snapshot};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_months: usize,
    pub feature_width: usize,
    pub feature_names: Vec<String>,
    pub label_mode: LabelMode,
}

fn nodes_file(dir: &Path, m: usize) -> PathBuf {
    dir.join(format!("nodes_{m}.csv"))
}

fn edges_file(dir: &Path, m: usize) -> PathBuf {
    dir.join(format!("edges_{m}.csv"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub fn save_network(net: &DynamicNetwork, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n_months: net.n_months(),
        feature_width: net.feature_width(),
        feature_names: net.feature_names().to_vec(),
        label_mode: net.label_mode(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

    let f = net.feature_width();
    let mut node_header = vec!["node_id".to_string()];
    node_header.extend((0..f).map(|k| format!("f_{k}")));
    node_header.push("label".into());
    let edge_header: Vec<String> = ["src", "dst", "credit_card", "geohash", "contacts"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    for s in net.snapshots() {
        let rows = (0..s.len()).map(|i| {
            let mut row = vec![s.nodes()[i].to_string()];
            row.extend(s.features(i).iter().map(|v| format!("{v}")));
            row.push(s.labels()[i].to_string());
            row
        });
        write_rows(&nodes_file(dir, s.month()), &node_header, rows)?;
        let rows = s.edges().iter().map(|e| {
            vec![
                e.a.to_string(),
                e.b.to_string(),
                flag(e.color.credit_card),
                flag(e.color.geohash),
                flag(e.color.contacts),
            ]
        });
        write_rows(&edges_file(dir, s.month()), &edge_header, rows)?;
    }
    let header: Vec<String> = ["referrer", "referred", "month"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = net
        .referrals()
        .iter()
        .map(|e| vec![e.referrer.to_string(), e.referred.to_string(), e.month.to_string()]);
    write_rows(&dir.join("referrals.csv"), &header, rows)
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str, path: &Path, line: usize) -> Result<T> {
    raw.trim().parse().map_err(|_| {
        Error::Data(format!(
            "{}: line {line}: cannot parse {what} from {raw:?}",
            path.display()
        ))
    })
}

fn parse_flag(raw: &str, what: &str, path: &Path, line: usize) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Data(format!(
            "{}: line {line}: {what} must be 0 or 1, got {raw:?}",
            path.display()
        ))),
    }
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = open_csv(path)?;
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header = r.headers().map_err(wrap)?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(wrap)?;
    Ok((header, rows))
}

fn load_nodes(path: &Path, month: usize, width: usize) -> Result<Vec<NodeRecord>> {
    let (header, rows) = records(path)?;
    let found = header.len().saturating_sub(2);
    if found != width {
        return Err(Error::RaggedWidth {
            month,
            expected: width,
            found,
            node: "<header>".into(),
        });
    }
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            let line = k + 2;
            let id = NodeId(parse(&row[0], "node_id", path, line)?);
            if row.len() != width + 2 {
                return Err(Error::RaggedWidth {
                    month,
                    expected: width,
                    found: row.len().saturating_sub(2),
                    node: id.to_string(),
                });
            }
            let features = (1..=width)
                .map(|c| parse::<f64>(&row[c], "feature", path, line))
                .collect::<Result<Vec<_>>>()?;
            let label = u8::from(parse_flag(&row[width + 1], "label", path, line)?);
            Ok(NodeRecord { id, features, label })
        })
        .collect()
}

fn load_edges(path: &Path) -> Result<Vec<Edge>> {
    let (_, rows) = records(path)?;
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            let line = k + 2;
            if row.len() != 5 {
                return Err(Error::Data(format!(
                    "{}: line {line}: expected 5 columns, found {}",
                    path.display(),
                    row.len()
                )));
            }
            Ok(Edge {
                a: NodeId(parse(&row[0], "src", path, line)?),
                b: NodeId(parse(&row[1], "dst", path, line)?),
                color: EdgeColor::new(
                    parse_flag(&row[2], "credit_card", path, line)?,
                    parse_flag(&row[3], "geohash", path, line)?,
                    parse_flag(&row[4], "contacts", path, line)?,
                ),
            })
        })
        .collect()
}

fn load_referrals(path: &Path) -> Result<Vec<ReferralEvent>> {
    let (_, rows) = records(path)?;
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            let line = k + 2;
            if row.len() != 3 {
                return Err(Error::Data(format!(
                    "{}: line {line}: expected 3 columns, found {}",
                    path.display(),
                    row.len()
                )));
            }
            Ok(ReferralEvent {
                referrer: NodeId(parse(&row[0], "referrer", path, line)?),
                referred: NodeId(parse(&row[1], "referred", path, line)?),
                month: parse(&row[2], "month", path, line)?,
            })
        })
        .collect()
}

/// Reads and fully validates a bundle, including monotonicity.
pub fn load_network(dir: &Path) -> Result<DynamicNetwork> {
    let path = dir.join("manifest.json");
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    if manifest.feature_names.len() != manifest.feature_width {
        return Err(Error::Invalid(format!(
            "manifest lists {} feature names for width {}",
            manifest.feature_names.len(),
            manifest.feature_width
        )));
    }
    let mut snapshots = Vec::with_capacity(manifest.n_months);
    for m in 0..manifest.n_months {
        let nodes = load_nodes(&nodes_file(dir, m), m, manifest.feature_width)?;
        let edges = load_edges(&edges_file(dir, m))?;
        snapshots.push(Snapshot::new(m, nodes, edges)?);
    }
    let referrals = load_referrals(&dir.join("referrals.csv"))?;
    let net = DynamicNetwork::new(snapshots, referrals, manifest.feature_names, manifest.label_mode)?;
    net.validate()?;
    Ok(net)
}
