//! Channel ingestion, minute resampling, artificial aggregates, bias
//! injection and leave-one-home-out folds.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};

pub const MAINS: &str = "mains";
pub const REFRIGERATOR: &str = "refrigerator";
pub const DISHWASHER: &str = "dishwasher";
pub const MICROWAVE: &str = "microwave";

/// Appliances whose sum forms the artificial aggregate.
pub const AGGREGATE_APPLIANCES: [&str; 3] = [REFRIGERATOR, DISHWASHER, MICROWAVE];

/// Maps a channel label (case-insensitive) onto its canonical name.
pub fn canonical_channel(name: &str) -> Option<&'static str> {
    let lower = name.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    let canon = match lower.as_str() {
        "mains" | "aggregate" | "main" | "site_meter" => MAINS,
        "refrigerator" | "fridge" | "fridge_freezer" | "refrigerator_1" | "fridge_1" => REFRIGERATOR,
        "dishwasher" | "dish_washer" | "dishwaser" | "dishwasher_1" => DISHWASHER,
        "microwave" | "micro_wave" | "microwave_1" | "microwave_oven" => MICROWAVE,
        _ => return None,
    };
    Some(canon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    /// Epoch seconds, strictly increasing.
    pub timestamps: Vec<i64>,
    pub watts: Vec<f64>,
    pub channel_name: String,
}

impl PowerSeries {
    pub fn new(channel_name: impl Into<String>, timestamps: Vec<i64>, watts: Vec<f64>) -> Result<Self> {
        let channel_name = channel_name.into();
        if timestamps.len() != watts.len() {
            return Err(NilmError::Input(format!(
                "{channel_name}: {} timestamps but {} readings",
                timestamps.len(),
                watts.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(NilmError::Input(format!(
                "{channel_name}: timestamps not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(v) = watts.iter().find(|v| !v.is_finite()) {
            return Err(NilmError::Input(format!("{channel_name}: non-finite reading {v}")));
        }
        Ok(PowerSeries {
            timestamps,
            watts,
            channel_name,
        })
    }

    pub fn len(&self) -> usize {
        self.watts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.watts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Home {
    pub home_id: String,
    /// Measured or artificial aggregate; `None` until one is loaded or built.
    pub mains: Option<PowerSeries>,
    /// Appliance channels keyed by canonical name.
    pub appliances: BTreeMap<String, PowerSeries>,
}

impl Home {
    pub fn appliance(&self, name: &str) -> Result<&PowerSeries> {
        let canon = canonical_channel(name).unwrap_or(name);
        self.appliances.get(canon).ok_or_else(|| {
            NilmError::Data(format!("home {} has no {canon} channel", self.home_id))
        })
    }

    pub fn mains(&self) -> Result<&PowerSeries> {
        self.mains
            .as_ref()
            .ok_or_else(|| NilmError::Data(format!("home {} has no mains", self.home_id)))
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    field.parse::<i64>().ok().or_else(|| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|v| v.floor() as i64)
    })
}

/// Parses `<epoch_seconds><sep><watts>` lines (comma or whitespace
/// separated, `#` comments). Rows are sorted and duplicate timestamps are
/// collapsed to their mean.
pub fn parse_channel(text: &str, path: &Path, channel_name: &str) -> Result<PowerSeries> {
    let mut rows: Vec<(i64, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| NilmError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let ts = parse_timestamp(fields[0])
            .ok_or_else(|| parse_err(format!("bad timestamp {:?}", fields[0])))?;
        let w: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad reading {:?}", fields[1])))?;
        if !w.is_finite() {
            return Err(parse_err(format!("non-finite reading {:?}", fields[1])));
        }
        if w < 0.0 {
            return Err(NilmError::Input(format!(
                "{}:{}: negative power reading {w}",
                path.display(),
                idx + 1
            )));
        }
        rows.push((ts, w));
    }
    rows.sort_by_key(|r| r.0);
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut watts = Vec::with_capacity(rows.len());
    let mut i = 0;
    while i < rows.len() {
        let ts = rows[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < rows.len() && rows[j].0 == ts {
            sum += rows[j].1;
            j += 1;
        }
        timestamps.push(ts);
        watts.push(sum / (j - i) as f64);
        i = j;
    }
    PowerSeries::new(channel_name, timestamps, watts)
}

pub fn load_channel(path: impl AsRef<Path>, channel_name: &str) -> Result<PowerSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    parse_channel(&text, path, channel_name)
}

/// Writes a channel in the format [`load_channel`] reads.
pub fn write_channel(path: impl AsRef<Path>, series: &PowerSeries) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(series.len() * 16);
    out.push_str(&format!("# {}\n", series.channel_name));
    for (t, w) in series.timestamps.iter().zip(&series.watts) {
        out.push_str(&format!("{t},{w}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| NilmError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| NilmError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| NilmError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| NilmError::io(path, e))
}

/// One reading per minute bucket `[m, m + 60)`: the mean of the readings in
/// it. Empty buckets are skipped.
pub fn resample_minute(series: &PowerSeries) -> Result<PowerSeries> {
    if series.is_empty() {
        return Err(NilmError::Input(format!("{}: empty series", series.channel_name)));
    }
    let mut timestamps = Vec::new();
    let mut watts = Vec::new();
    let mut i = 0;
    let n = series.len();
    while i < n {
        let bucket = series.timestamps[i].div_euclid(60) * 60;
        let mut sum = 0.0;
        let mut count = 0usize;
        while i < n && series.timestamps[i].div_euclid(60) * 60 == bucket {
            sum += series.watts[i];
            count += 1;
            i += 1;
        }
        timestamps.push(bucket);
        watts.push(sum / count as f64);
    }
    PowerSeries::new(series.channel_name.clone(), timestamps, watts)
}

/// Pointwise sum of several channels over the timestamps present in all of
/// them; `None` when they share none.
pub fn sum_common(channels: &[&PowerSeries], channel_name: &str) -> Result<Option<PowerSeries>> {
    if channels.is_empty() {
        return Ok(None);
    }
    let mut idx = vec![0usize; channels.len()];
    let mut timestamps = Vec::new();
    let mut watts = Vec::new();
    'outer: loop {
        let mut target = i64::MIN;
        for (c, &i) in channels.iter().zip(&idx) {
            match c.timestamps.get(i) {
                Some(&t) => target = target.max(t),
                None => break 'outer,
            }
        }
        let mut aligned = true;
        for (c, i) in channels.iter().zip(idx.iter_mut()) {
            while *i < c.len() && c.timestamps[*i] < target {
                *i += 1;
            }
            if *i >= c.len() {
                break 'outer;
            }
            aligned &= c.timestamps[*i] == target;
        }
        if aligned {
            timestamps.push(target);
            watts.push(channels.iter().zip(&idx).map(|(c, &i)| c.watts[i]).sum());
            idx.iter_mut().for_each(|i| *i += 1);
        }
    }
    if timestamps.is_empty() {
        return Ok(None);
    }
    PowerSeries::new(channel_name, timestamps, watts).map(Some)
}

/// Pointwise sum of refrigerator, dishwasher and microwave over the minutes
/// present in all three channels.
pub fn artificial_aggregate(home: &Home) -> Result<PowerSeries> {
    let channels = AGGREGATE_APPLIANCES
        .iter()
        .map(|name| home.appliance(name))
        .collect::<Result<Vec<_>>>()?;
    sum_common(&channels, MAINS)?.ok_or_else(|| {
        NilmError::Data(format!(
            "home {}: appliance channels share no minutes",
            home.home_id
        ))
    })
}

/// Adds a constant load to every reading.
pub fn inject_bias(series: &PowerSeries, bias_watts: f64) -> PowerSeries {
    PowerSeries {
        timestamps: series.timestamps.clone(),
        watts: series.watts.iter().map(|w| w + bias_watts).collect(),
        channel_name: series.channel_name.clone(),
    }
}

/// Resamples every channel to minutes and replaces mains with the
/// artificial aggregate.
pub fn prepare_home(home: &Home) -> Result<Home> {
    let appliances = home
        .appliances
        .iter()
        .map(|(k, v)| Ok((k.clone(), resample_minute(v)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut out = Home {
        home_id: home.home_id.clone(),
        mains: None,
        appliances,
    };
    out.mains = Some(artificial_aggregate(&out)?);
    Ok(out)
}

/// `labels.dat` lines of the form `<channel number> <label>`.
fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (num, label) = line.split_once(char::is_whitespace).ok_or_else(|| NilmError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected `<channel> <label>`".into(),
        })?;
        out.insert(format!("channel_{}", num.trim()), label.trim().to_string());
    }
    Ok(out)
}

/// Loads the channels of a home directory. Files named after a known
/// channel (`fridge.dat`, `mains.dat`, ...) are used directly; `channel_<n>.dat`
/// files are named through an optional `labels.dat`, and several labelled
/// channels mapping to the same name (e.g. two mains legs) are summed.
pub fn load_home(dir: impl AsRef<Path>) -> Result<Home> {
    let dir = dir.as_ref();
    let home_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let labels_path = dir.join("labels.dat");
    let labels = if labels_path.is_file() {
        read_labels(&labels_path)?
    } else {
        BTreeMap::new()
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| NilmError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "dat") && *p != labels_path)
        .collect();
    entries.sort();
    // canonical name -> (series, all came from labels.dat)
    let mut found: BTreeMap<&'static str, (Vec<PowerSeries>, bool)> = BTreeMap::new();
    for path in entries {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let (canon, labelled) = match labels.get(&stem) {
            Some(label) => (canonical_channel(label), true),
            None => (canonical_channel(&stem), false),
        };
        let Some(canon) = canon else {
            continue;
        };
        let series = load_channel(&path, canon)?;
        let slot = found.entry(canon).or_insert((Vec::new(), true));
        slot.0.push(series);
        slot.1 &= labelled;
    }
    let mut mains = None;
    let mut appliances = BTreeMap::new();
    for (canon, (mut parts, labelled)) in found {
        let series = if parts.len() == 1 {
            parts.pop().expect("one part")
        } else if labelled {
            let refs: Vec<&PowerSeries> = parts.iter().collect();
            sum_common(&refs, canon)?.ok_or_else(|| {
                NilmError::Data(format!("home {home_id}: {canon} channels share no timestamps"))
            })?
        } else {
            return Err(NilmError::Data(format!(
                "home {home_id}: more than one file maps to channel {canon}"
            )));
        };
        if canon == MAINS {
            mains = Some(series);
        } else {
            appliances.insert(canon.to_string(), series);
        }
    }
    Ok(Home {
        home_id,
        mains,
        appliances,
    })
}

/// Writes a home as `<dir>/<channel>.dat` files.
pub fn write_home(dir: impl AsRef<Path>, home: &Home) -> Result<()> {
    let dir = dir.as_ref();
    if let Some(m) = &home.mains {
        write_channel(dir.join("mains.dat"), m)?;
    }
    for (name, s) in &home.appliances {
        write_channel(dir.join(format!("{name}.dat")), s)?;
    }
    Ok(())
}

/// Manifest: one home directory per line, relative to the manifest's own
/// directory; `#` comments and blank lines skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if dirs.is_empty() {
        return Err(NilmError::Data(format!("{}: manifest lists no homes", path.display())));
    }
    Ok(dirs)
}

pub fn write_manifest(path: impl AsRef<Path>, home_dirs: &[String]) -> Result<()> {
    let mut out = String::from("# one home directory per line\n");
    for d in home_dirs {
        out.push_str(d);
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Home>> {
    read_manifest(path)?.iter().map(load_home).collect()
}

/// Writes homes under `dir/<home_id>/` plus `dir/manifest.txt`; returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, homes: &[Home]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for h in homes {
        write_home(dir.join(&h.home_id), h)?;
    }
    let manifest = dir.join("manifest.txt");
    let ids: Vec<String> = homes.iter().map(|h| h.home_id.clone()).collect();
    write_manifest(&manifest, &ids)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_home_ids: Vec<String>,
    pub test_home_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Leave-one-home-out: each home is the test home exactly once.
pub fn make_folds(home_ids: &[String]) -> Result<FoldPlan> {
    if home_ids.len() < 2 {
        return Err(NilmError::Config(format!(
            "leave-one-home-out needs at least 2 homes, got {}",
            home_ids.len()
        )));
    }
    for (i, id) in home_ids.iter().enumerate() {
        if home_ids[..i].contains(id) {
            return Err(NilmError::Config(format!("duplicate home id {id}")));
        }
    }
    let folds = home_ids
        .iter()
        .map(|test| Fold {
            train_home_ids: home_ids.iter().filter(|h| *h != test).cloned().collect(),
            test_home_id: test.clone(),
        })
        .collect();
    Ok(FoldPlan { folds })
}
