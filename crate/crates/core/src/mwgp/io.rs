//! CSV files for fitted mean fields and local GP parameters.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{GridCell, LocalGp, MeanGrid, MwgpVariant, RgCoefficients, RG_TERMS};
use crate::data::PressureLevel;
use crate::error::{Error, Result};

const MEAN_HEAD: [&str; 6] = ["resolution", "level", "month", "lat", "lon", "n_used"];
const LOCAL_HEAD: [&str; 11] = [
    "lat", "lon", "variant", "sigma2", "r_lat", "r_lon", "r_time", "tau2", "n_local", "loglik", "converged",
];

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Format(format!("missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad value `{raw}` in column `{name}`")))
}

fn check_header(rec: &csv::StringRecord, expected: &[String]) -> Result<()> {
    if rec.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

fn mean_header() -> Vec<String> {
    MEAN_HEAD
        .iter()
        .map(|s| s.to_string())
        .chain((0..RG_TERMS).map(|k| format!("c{k}")))
        .collect()
}

pub fn write_mean_grid<W: Write>(w: W, grid: &MeanGrid) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(mean_header())?;
    for ((level, month, _), c) in &grid.fields {
        let mut row = vec![
            grid.resolution.to_string(),
            level.name().to_string(),
            month.to_string(),
            c.lat.to_string(),
            c.lon.to_string(),
            c.n_used.to_string(),
        ];
        row.extend(c.to_vec().iter().map(|v| format!("{v:e}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mean_grid<R: Read>(r: R) -> Result<MeanGrid> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(r);
    let mut records = rdr.records();
    let head = records.next().ok_or_else(|| Error::Format("empty mean grid file".into()))??;
    let names = mean_header();
    check_header(&head, &names)?;
    let mut grid = MeanGrid {
        resolution: f64::NAN,
        fields: BTreeMap::new(),
        failed: Vec::new(),
    };
    for rec in records {
        let rec = rec?;
        let res: f64 = field(&rec, 0, "resolution")?;
        if grid.resolution.is_nan() {
            grid.resolution = res;
        } else if res != grid.resolution {
            return Err(Error::Format("mixed resolutions in one mean grid".into()));
        }
        let level: PressureLevel = field::<String>(&rec, 1, "level")?.parse()?;
        let month: u32 = field(&rec, 2, "month")?;
        let lat: f64 = field(&rec, 3, "lat")?;
        let lon: f64 = field(&rec, 4, "lon")?;
        let n_used: usize = field(&rec, 5, "n_used")?;
        let coef = (0..RG_TERMS)
            .map(|k| field(&rec, 6 + k, &names[6 + k]))
            .collect::<Result<Vec<f64>>>()?;
        let cell = GridCell::nearest(lat, lon, res);
        grid.fields.insert(
            (level, month, cell),
            RgCoefficients::from_vec(&coef, lat, lon, level, month, n_used),
        );
    }
    if grid.resolution.is_nan() {
        grid.resolution = 1.0;
    }
    Ok(grid)
}

pub fn write_local_grid<'a, W: Write>(w: W, gps: impl IntoIterator<Item = &'a LocalGp>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LOCAL_HEAD)?;
    for gp in gps {
        let variant = match gp.variant {
            MwgpVariant::S => "s",
            MwgpVariant::ST => "st",
        };
        out.write_record([
            gp.lat.to_string(),
            gp.lon.to_string(),
            variant.to_string(),
            format!("{:e}", gp.sigma2),
            format!("{:e}", gp.r_lat),
            format!("{:e}", gp.r_lon),
            gp.r_time.map(|v| format!("{v:e}")).unwrap_or_default(),
            format!("{:e}", gp.tau2),
            gp.n_local.to_string(),
            format!("{:e}", gp.loglik),
            gp.converged.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_local_grid<R: Read>(r: R) -> Result<Vec<LocalGp>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(r);
    let mut records = rdr.records();
    let head = records.next().ok_or_else(|| Error::Format("empty local grid file".into()))??;
    check_header(&head, &LOCAL_HEAD.map(String::from))?;
    records
        .map(|rec| {
            let rec = rec?;
            let variant = match rec.get(2).map(str::trim) {
                Some("s") => MwgpVariant::S,
                Some("st") => MwgpVariant::ST,
                other => return Err(Error::Format(format!("unknown variant {other:?}"))),
            };
            let r_time = match rec.get(6).map(str::trim) {
                Some("") | None => None,
                Some(_) => Some(field(&rec, 6, "r_time")?),
            };
            Ok(LocalGp {
                lat: field(&rec, 0, "lat")?,
                lon: field(&rec, 1, "lon")?,
                variant,
                sigma2: field(&rec, 3, "sigma2")?,
                r_lat: field(&rec, 4, "r_lat")?,
                r_lon: field(&rec, 5, "r_lon")?,
                r_time,
                tau2: field(&rec, 7, "tau2")?,
                n_local: field(&rec, 8, "n_local")?,
                loglik: field(&rec, 9, "loglik")?,
                converged: field(&rec, 10, "converged")?,
            })
        })
        .collect()
}
