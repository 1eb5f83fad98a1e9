//! CSV and JSON readers/writers. Long-format CSV (`i,j,t,value`) is the
//! canonical panel format; values are serialized with 17 significant
//! digits so files round-trip bit-exactly. All writes are atomic
//! (temp file + rename).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{interp_linear, SampledFunction, TimeGrid};
use crate::registration::MvSample;
use crate::spatial::{EmpiricalVariogram, SpatialLayout, VariogramModel};
use crate::warp::Warp;

/// Decimal serialization with 17 significant digits: round-trips any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write via a temporary file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Long-format panel: header `i,j,t,value`, rows ordered by (i, j, t).
pub fn write_panel_csv(path: &Path, grid: &TimeGrid, values: &[Vec<Vec<f64>>]) -> Result<()> {
    let mut out = String::from("i,j,t,value\n");
    for (i, row) in values.iter().enumerate() {
        for (j, vals) in row.iter().enumerate() {
            for (t, v) in grid.points().iter().zip(vals) {
                out.push_str(&format!("{i},{j},{},{}\n", fmt_f64(*t), fmt_f64(*v)));
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_sample_csv(path: &Path, sample: &MvSample) -> Result<()> {
    let values: Vec<Vec<Vec<f64>>> = sample
        .funcs
        .iter()
        .map(|row| row.iter().map(|f| f.values.clone()).collect())
        .collect();
    write_panel_csv(path, sample.grid(), &values)
}

/// Per-component curves: header `j,t,value`.
pub fn write_component_csv(path: &Path, funcs: &[SampledFunction]) -> Result<()> {
    let mut out = String::from("j,t,value\n");
    for (j, f) in funcs.iter().enumerate() {
        for (t, v) in f.grid.points().iter().zip(&f.values) {
            out.push_str(&format!("{j},{},{}\n", fmt_f64(*t), fmt_f64(*v)));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Per-observation curves: header `i,t,value`.
pub fn write_observation_csv(path: &Path, grid: &TimeGrid, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from("i,t,value\n");
    for (i, vals) in rows.iter().enumerate() {
        for (t, v) in grid.points().iter().zip(vals) {
            out.push_str(&format!("{i},{},{}\n", fmt_f64(*t), fmt_f64(*v)));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Warps on the full panel: `i,j,t,value`.
pub fn write_warp_grid_csv(path: &Path, warps: &[Vec<Warp>]) -> Result<()> {
    let values: Vec<Vec<Vec<f64>>> = warps
        .iter()
        .map(|row| row.iter().map(|w| w.values().to_vec()).collect())
        .collect();
    let grid = warps[0][0].grid().clone();
    write_panel_csv(path, &grid, &values)
}

/// Sites: `j,x,y[,z]`.
pub fn write_sites_csv(path: &Path, layout: &SpatialLayout) -> Result<()> {
    let mut out = if layout.dim() == 2 {
        String::from("j,x,y\n")
    } else {
        String::from("j,x,y,z\n")
    };
    for (j, site) in layout.sites().iter().enumerate() {
        let coords: Vec<String> = site.iter().map(|&c| fmt_f64(c)).collect();
        out.push_str(&format!("{j},{}\n", coords.join(",")));
    }
    atomic_write(path, out.as_bytes())
}

/// Variogram dump: `bin_center,count,estimate,fitted_value` (fitted value
/// blank when no model is given).
pub fn write_variogram_csv(
    path: &Path,
    emp: &EmpiricalVariogram,
    model: Option<&VariogramModel>,
) -> Result<()> {
    let mut out = String::from("bin_center,count,estimate,fitted_value\n");
    for b in &emp.bins {
        let fitted = model
            .map(|m| fmt_f64(m.eval(b.center)))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{fitted}\n",
            fmt_f64(b.center),
            b.count,
            fmt_f64(b.estimate)
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Per-observation variograms stacked into one file:
/// `i,bin_center,count,estimate,fitted_value`.
pub fn write_variogram_set_csv(
    path: &Path,
    variograms: &[EmpiricalVariogram],
    models: &[VariogramModel],
) -> Result<()> {
    let mut out = String::from("i,bin_center,count,estimate,fitted_value\n");
    for (i, (emp, model)) in variograms.iter().zip(models).enumerate() {
        for b in &emp.bins {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                fmt_f64(b.center),
                b.count,
                fmt_f64(b.estimate),
                fmt_f64(model.eval(b.center))
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    rec.get(idx)
        .ok_or(Error::CsvParse {
            line,
            msg: format!("missing column {idx}"),
        })?
        .trim()
        .parse::<T>()
        .map_err(|_| Error::CsvParse {
            line,
            msg: format!("cannot parse column {idx}"),
        })
}

/// Read `j,x,y[,z]` sites.
pub fn read_sites_csv(path: &Path) -> Result<SpatialLayout> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
    let dims = reader.headers().map(|h| h.len()).unwrap_or(0);
    if !(3..=4).contains(&dims) {
        return Err(Error::CsvParse {
            line: 1,
            msg: format!("sites file must have 3 or 4 columns, found {dims}"),
        });
    }
    let mut sites: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::CsvParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let j: usize = parse_field(&rec, 0, line)?;
        let coords = (1..dims)
            .map(|c| parse_field::<f64>(&rec, c, line))
            .collect::<Result<Vec<f64>>>()?;
        sites.push((j, coords));
    }
    sites.sort_by_key(|(j, _)| *j);
    for (expect, (j, _)) in sites.iter().enumerate() {
        if *j != expect {
            return Err(Error::CsvParse {
                line: 0,
                msg: format!("site indices must be 0..K-1, missing {expect}"),
            });
        }
    }
    SpatialLayout::new(sites.into_iter().map(|(_, c)| c).collect())
}

/// Raw long-format rows grouped as values[(i, j)] = (ts, vs).
struct PanelRows {
    n: usize,
    k: usize,
    cells: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

fn read_panel_rows(path: &Path) -> Result<PanelRows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
    let mut triplets: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut n = 0usize;
    let mut k = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::CsvParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(Error::CsvParse {
                line,
                msg: format!("expected 4 columns, found {}", rec.len()),
            });
        }
        let i: usize = parse_field(&rec, 0, line)?;
        let j: usize = parse_field(&rec, 1, line)?;
        let t: f64 = parse_field(&rec, 2, line)?;
        let v: f64 = parse_field(&rec, 3, line)?;
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::CsvParse {
                line,
                msg: "non-finite value".into(),
            });
        }
        n = n.max(i + 1);
        k = k.max(j + 1);
        triplets.push((i, j, t, v));
    }
    if n == 0 || k == 0 {
        return Err(Error::CsvParse {
            line: 0,
            msg: "empty panel".into(),
        });
    }
    let mut cells = vec![vec![(Vec::new(), Vec::new()); k]; n];
    for (i, j, t, v) in triplets {
        cells[i][j].0.push(t);
        cells[i][j].1.push(v);
    }
    Ok(PanelRows { n, k, cells })
}

/// Load a panel; functions on other grids are linearly resampled onto a
/// shared uniform grid (`m_override` points, or the first cell's length).
pub fn read_sample_csv(
    path: &Path,
    sites: &Path,
    m_override: Option<usize>,
) -> Result<MvSample> {
    let layout = read_sites_csv(sites)?;
    let rows = read_panel_rows(path)?;
    if rows.k != layout.count() {
        return Err(Error::InvalidInput(format!(
            "panel has {} components but sites file has {}",
            rows.k,
            layout.count()
        )));
    }

    // Decide the shared grid.
    let first_ts = &rows.cells[0][0].0;
    if first_ts.is_empty() {
        return Err(Error::CsvParse {
            line: 0,
            msg: "missing cell (0, 0)".into(),
        });
    }
    let shared = rows.cells.iter().flatten().all(|(ts, _)| ts == first_ts);
    let native_grid = if shared {
        TimeGrid::from_points(first_ts.clone()).ok()
    } else {
        None
    };
    let target = match (m_override, native_grid) {
        (Some(m), _) => TimeGrid::uniform(m)?,
        (None, Some(g)) if g.is_uniform() => g,
        (None, _) => TimeGrid::uniform(first_ts.len().max(3))?,
    };

    let mut funcs = Vec::with_capacity(rows.n);
    for (i, row) in rows.cells.iter().enumerate() {
        let mut frow = Vec::with_capacity(rows.k);
        for (j, (ts, vs)) in row.iter().enumerate() {
            if ts.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "cell ({i}, {j}) has fewer than 2 samples"
                )));
            }
            let mut order: Vec<usize> = (0..ts.len()).collect();
            order.sort_by(|&a, &b| ts[a].partial_cmp(&ts[b]).unwrap());
            let ts_sorted: Vec<f64> = order.iter().map(|&x| ts[x]).collect();
            let vs_sorted: Vec<f64> = order.iter().map(|&x| vs[x]).collect();
            let values: Vec<f64> = if ts_sorted.as_slice() == target.points() {
                vs_sorted
            } else {
                target
                    .points()
                    .iter()
                    .map(|&t| interp_linear(&ts_sorted, &vs_sorted, t))
                    .collect()
            };
            frow.push(SampledFunction::new(target.clone(), values)?);
        }
        funcs.push(frow);
    }
    MvSample::new(funcs, layout, None)
}

/// Read `j,t,value` component curves onto their native grid.
pub fn read_component_csv(path: &Path) -> Result<Vec<SampledFunction>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
    let mut cells: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::CsvParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let j: usize = parse_field(&rec, 0, line)?;
        let t: f64 = parse_field(&rec, 1, line)?;
        let v: f64 = parse_field(&rec, 2, line)?;
        if j >= cells.len() {
            cells.resize(j + 1, (Vec::new(), Vec::new()));
        }
        cells[j].0.push(t);
        cells[j].1.push(v);
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(j, (ts, vs))| {
            let grid = TimeGrid::from_points(ts).map_err(|e| {
                Error::InvalidInput(format!("component {j} grid invalid: {e}"))
            })?;
            SampledFunction::new(grid, vs)
        })
        .collect()
}
