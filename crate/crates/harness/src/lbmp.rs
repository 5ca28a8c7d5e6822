//! Zonal electricity prices in long format: one `timestamp,zone,lbmp_usd_per_mwh`
//! row per zone and hour.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use safe_oco_core::environment::{PriceTable, ZONES};

/// Environment variable naming the default directory for price files.
pub const DATA_DIR_VAR: &str = "SAFE_OCO_DATA_DIR";
/// File looked up in the data directory when no path is configured.
pub const DEFAULT_FILE: &str = "lbmp.csv";

const HEADER: [&str; 3] = ["timestamp", "zone", "lbmp_usd_per_mwh"];

#[derive(Debug, thiserror::Error)]
pub enum LbmpError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{0}")]
    Data(String),
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn zone_index(s: &str) -> Option<usize> {
    ZONES.iter().position(|z| z.eq_ignore_ascii_case(s.trim()))
}

/// Parses price rows, ordered by timestamp with columns in [`ZONES`] order.
pub fn read_lbmp<R: Read>(reader: R) -> Result<PriceTable, LbmpError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| LbmpError::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.len() != HEADER.len()
        || header
            .iter()
            .zip(HEADER)
            .any(|(h, want)| !h.eq_ignore_ascii_case(want))
    {
        return Err(LbmpError::Parse {
            line: 1,
            msg: format!("expected header `{}`", HEADER.join(",")),
        });
    }

    // Per timestamp: price per zone plus the line it came from.
    let mut hours: BTreeMap<NaiveDateTime, [Option<(f64, u64)>; 5]> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LbmpError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| LbmpError::Parse { line, msg };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| bad(format!("invalid ISO-8601 timestamp `{}`", &rec[0])))?;
        if rec[1].is_empty() {
            return Err(bad("missing zone".into()));
        }
        let zone = zone_index(&rec[1]).ok_or_else(|| bad(format!("unknown zone `{}`", &rec[1])))?;
        let price: f64 = rec[2]
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite())
            .ok_or_else(|| bad(format!("invalid price `{}`", &rec[2])))?;
        let slot = &mut hours.entry(ts).or_default()[zone];
        if let Some((_, first)) = slot {
            return Err(LbmpError::Data(format!(
                "duplicate price for {ts} zone {} on lines {first} and {line}",
                ZONES[zone]
            )));
        }
        *slot = Some((price, line));
    }
    if hours.is_empty() {
        return Err(LbmpError::Data("price file has no rows".into()));
    }

    let mut flat = Vec::with_capacity(hours.len() * ZONES.len());
    for (ts, zones) in &hours {
        for (k, z) in zones.iter().enumerate() {
            match z {
                Some((p, _)) => flat.push(*p),
                None => {
                    let line = zones.iter().flatten().map(|(_, l)| *l).min().unwrap_or(0);
                    return Err(LbmpError::Parse {
                        line,
                        msg: format!("hour {ts} has no price for zone {}", ZONES[k]),
                    });
                }
            }
        }
    }
    PriceTable::new(flat).map_err(|e| LbmpError::Data(e.to_string()))
}

pub fn load_lbmp_csv(path: &Path) -> Result<PriceTable, LbmpError> {
    let file = std::fs::File::open(path).map_err(|source| LbmpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_lbmp(std::io::BufReader::new(file))
}

/// Resolves a configured price path: relative paths are looked up in the data
/// directory when it is set, and with no path the directory's default file is
/// used if present. `None` means synthetic prices.
pub fn resolve_price_path(configured: Option<&Path>, data_dir: Option<&Path>) -> Option<PathBuf> {
    match (configured, data_dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(dir)) => Some(dir.join(DEFAULT_FILE)).filter(|p| p.is_file()),
        (None, None) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOUR: &str = "timestamp,zone,lbmp_usd_per_mwh\n\
        2020-01-01T00:00:00,Genesee,10\n\
        2020-01-01T00:00:00,Central,11\n\
        2020-01-01T00:00:00,North,12\n\
        2020-01-01T00:00:00,Mohawk Valley,13\n\
        2020-01-01T00:00:00,West,14\n";

    #[test]
    fn one_hour_gives_one_row() {
        let t = read_lbmp(HOUR.as_bytes()).unwrap();
        assert_eq!(t.hours(), 1);
        assert_eq!(t.row(1), &[10.0, 11.0, 12.0, 13.0, 14.0]);
        assert!(!t.is_synthetic());
    }

    #[test]
    fn case_and_order_do_not_matter() {
        let mut lines: Vec<String> = Vec::new();
        for h in 0..3 {
            for (k, z) in ZONES.iter().enumerate() {
                lines.push(format!(
                    "2020-01-01T0{h}:00:00Z,{},{}",
                    z.to_uppercase(),
                    10 * h + k
                ));
            }
        }
        let sorted = format!("timestamp,zone,lbmp_usd_per_mwh\n{}\n", lines.join("\n"));
        lines.reverse();
        lines.swap(1, 7);
        let shuffled = format!("timestamp,zone,lbmp_usd_per_mwh\n{}\n", lines.join("\n"));
        let a = read_lbmp(sorted.as_bytes()).unwrap();
        let b = read_lbmp(shuffled.as_bytes()).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(a.row(3), &[20.0, 21.0, 22.0, 23.0, 24.0]);
    }

    #[test]
    fn duplicates_are_data_errors() {
        let text = format!("{HOUR}2020-01-01T00:00:00,west,15\n");
        assert!(matches!(
            read_lbmp(text.as_bytes()),
            Err(LbmpError::Data(_))
        ));
    }

    #[test]
    fn line_numbers_in_parse_errors() {
        let text = HOUR.replace("Central,11", "Central,abc");
        match read_lbmp(text.as_bytes()) {
            Err(LbmpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = HOUR.replace("2020-01-01T00:00:00,North", "yesterday,North");
        assert!(matches!(
            read_lbmp(text.as_bytes()),
            Err(LbmpError::Parse { line: 4, .. })
        ));
        let text = HOUR.replace("Mohawk Valley", "");
        assert!(matches!(
            read_lbmp(text.as_bytes()),
            Err(LbmpError::Parse { line: 5, .. })
        ));
        let text = HOUR.replace("Genesee", "Brooklyn");
        assert!(matches!(
            read_lbmp(text.as_bytes()),
            Err(LbmpError::Parse { line: 2, .. })
        ));
        assert!(read_lbmp("time,zone,price\n".as_bytes()).is_err());
    }

    #[test]
    fn hour_missing_a_zone_is_rejected() {
        let text = HOUR.replace("2020-01-01T00:00:00,West,14\n", "");
        let text = format!("{text}2020-01-01T01:00:00,West,14\n");
        match read_lbmp(text.as_bytes()) {
            Err(LbmpError::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("West"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn price_path_resolution() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(resolve_price_path(None, None), None);
        assert_eq!(resolve_price_path(None, Some(dir.path())), None);
        std::fs::write(dir.path().join(DEFAULT_FILE), HOUR).unwrap();
        assert_eq!(
            resolve_price_path(None, Some(dir.path())),
            Some(dir.path().join(DEFAULT_FILE))
        );
        assert_eq!(
            resolve_price_path(Some(Path::new("x.csv")), Some(dir.path())),
            Some(dir.path().join("x.csv"))
        );
        assert_eq!(
            resolve_price_path(Some(Path::new("/abs/x.csv")), Some(dir.path())),
            Some(PathBuf::from("/abs/x.csv"))
        );
        let t = load_lbmp_csv(&dir.path().join(DEFAULT_FILE)).unwrap();
        assert_eq!(t.hours(), 1);
    }
}
