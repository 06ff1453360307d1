//! CSV formats: trades, labels, plot data, training logs and result rows.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use orderfusion_core::market::{Side, TradeRecord};
use orderfusion_core::synth::LabelRow;
use orderfusion_core::train::EpochLog;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TRADE_HEADER: [&str; 5] = ["delivery_start", "side", "price", "volume", "transaction_time"];

pub fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Reads a trade CSV; `name` labels parse errors.
pub fn read_trades_from(reader: impl Read, name: &Path) -> Result<Vec<TradeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(name, e))?.clone();
    let mut cols = [0usize; 5];
    for (slot, want) in cols.iter_mut().zip(TRADE_HEADER) {
        *slot = header.iter().position(|h| h == want).ok_or_else(|| CliError::Parse {
            path: name.to_path_buf(),
            line: 1,
            msg: format!("missing column {want:?}"),
        })?;
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| CliError::Parse {
            path: name.to_path_buf(),
            line,
            msg,
        };
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let number = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| err(format!("bad {} {:?}", TRADE_HEADER[i], field(i))))
        };
        let delivery = parse_time(field(0)).map_err(&err)?;
        let side = Side::from_symbol(field(1)).ok_or_else(|| err(format!("bad side {:?}", field(1))))?;
        let price = number(2)?;
        let volume = number(3)?;
        let at = parse_time(field(4)).map_err(&err)?;
        let trade = TradeRecord::new(delivery, side, price, volume, at).map_err(|e| err(e.to_string()))?;
        out.push(trade);
    }
    Ok(out)
}

pub fn parse_trades(path: &Path) -> Result<Vec<TradeRecord>> {
    read_trades_from(open(path)?, path)
}

pub fn write_trades_to(w: impl Write, trades: &[TradeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CliError::Data(e.to_string());
    wtr.write_record(TRADE_HEADER).map_err(io)?;
    for t in trades {
        wtr.write_record([
            format_time(t.delivery_start),
            t.side.symbol().to_string(),
            t.price.to_string(),
            t.volume.to_string(),
            format_time(t.transaction_time),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_trades(path: &Path, trades: &[TradeRecord]) -> Result<()> {
    write_trades_to(create(path)?, trades)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelCsv {
    delivery_start: String,
    index_x: u8,
    label: f64,
}

pub fn write_labels(path: &Path, labels: &[LabelRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for l in labels {
        wtr.serialize(LabelCsv {
            delivery_start: format_time(l.delivery_start),
            index_x: l.index_x,
            label: l.label,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<LabelCsv>() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        out.push(LabelRow {
            delivery_start: parse_time(&rec.delivery_start).map_err(CliError::Data)?,
            index_x: rec.index_x,
            label: rec.label,
        });
    }
    Ok(out)
}

/// Column name of a quantile level, e.g. `q10` for 0.10.
pub fn quantile_column(tau: f64) -> String {
    format!("q{}", (tau * 100.0).round() as i64)
}

/// Plot data: `delivery_start,y_true,q..`, one row per sample.
pub fn write_plot_csv(
    path: &Path,
    deliveries: &[DateTime<Utc>],
    y: &[f64],
    forecasts: &[Vec<f64>],
    taus: &[f64],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["delivery_start".to_string(), "y_true".to_string()];
    header.extend(taus.iter().map(|&t| quantile_column(t)));
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for ((d, yi), f) in deliveries.iter().zip(y).zip(forecasts) {
        let mut row = vec![format_time(*d), yi.to_string()];
        row.extend(f.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_training_log(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["epoch", "train_aql", "val_aql", "lr"])
        .map_err(|e| csv_err(path, e))?;
    for e in history {
        wtr.write_record([
            e.epoch.to_string(),
            e.train_aql.to_string(),
            e.val_aql.to_string(),
            e.lr.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// One row of a results table: a model evaluated on one fold and index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub fold: u32,
    pub index: u8,
    pub seed: u64,
    pub aql: f64,
    pub aqcr: f64,
    pub aiw: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub n_samples: usize,
    pub note: String,
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for r in rows {
        wtr.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const SAMPLE: &str = "delivery_start,side,price,volume,transaction_time
2024-07-23T18:00:00Z,+,42.5,1.2,2024-07-23T15:00:00Z
2024-07-23T18:00:00Z,-,41.75,0.3,2024-07-23T15:01:30Z
";

    #[test]
    fn parses_the_trade_contract() {
        let t = read_trades_from(SAMPLE.as_bytes(), Path::new("t.csv")).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].side, Side::Buy);
        assert_eq!(t[1].price, 41.75);
        assert_eq!(t[0].delivery_start, Utc.with_ymd_and_hms(2024, 7, 23, 18, 0, 0).unwrap());
    }

    #[test]
    fn round_trip_is_lossless() {
        let t = read_trades_from(SAMPLE.as_bytes(), Path::new("t.csv")).unwrap();
        let mut buf = Vec::new();
        write_trades_to(&mut buf, &t).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), SAMPLE);
        assert_eq!(read_trades_from(buf.as_slice(), Path::new("t.csv")).unwrap(), t);
    }

    fn line_of(text: &str) -> u64 {
        match read_trades_from(text.as_bytes(), Path::new("t.csv")) {
            Err(CliError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("delivery_start,side,price,volume\n"), 1);
        let bad_time = SAMPLE.replace("2024-07-23T15:01:30Z", "yesterday");
        assert_eq!(line_of(&bad_time), 3);
        let bad_volume = SAMPLE.replace(",1.2,", ",-1,");
        assert_eq!(line_of(&bad_volume), 2);
        let bad_side = SAMPLE.replace(",+,", ",b,");
        assert_eq!(line_of(&bad_side), 2);
    }

    #[test]
    fn quantile_columns() {
        let cols: Vec<String> = orderfusion_core::model::DEFAULT_QUANTILES
            .iter()
            .map(|&t| quantile_column(t))
            .collect();
        assert_eq!(cols, ["q10", "q25", "q45", "q50", "q55", "q75", "q90"]);
    }
}
