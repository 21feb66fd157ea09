use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::mobility::MobilityConfig;
use crate::netsim::RadioParams;
use crate::road::{ModelKind, TopologyParams};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid experiment: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 300 s, 40 vehicles, 2 seeds.
    Desk,
    /// Full-size sweep: 1000 s, 160/200/250 vehicles, 5 seeds.
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

impl Preset {
    fn apply(self, spec: &mut ExperimentSpec) {
        match self {
            Preset::Desk => {
                spec.mobility.duration = 300.0;
                spec.vehicle_counts = vec![40];
                spec.seeds = vec![1, 2];
            }
            Preset::Paper => {
                spec.mobility.duration = 1000.0;
                spec.vehicle_counts = vec![160, 200, 250];
                spec.seeds = vec![1, 2, 3, 4, 5];
            }
        }
    }
}

/// A full sweep description. `mobility.vehicle_count` and `mobility.seed`
/// are overwritten per run, as is `radio.tx_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub topology: TopologyParams,
    pub models: Vec<ModelKind>,
    pub vehicle_counts: Vec<u32>,
    pub cbr_source_counts: Vec<u32>,
    pub tx_ranges: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mobility: MobilityConfig,
    pub radio: RadioParams,
    /// interference_range = factor × tx_range for every run
    pub interference_factor: f64,
    pub packet_size: u32,
    pub cbr_interval: f64,
    pub output_dir: PathBuf,
    /// Range at which the per-CBR figures are taken; defaults to 250 m when
    /// swept, else the largest range.
    pub figure_tx_range: Option<f64>,
    /// Source count for the range figure; defaults to the largest swept.
    pub figure_cbr_sources: Option<u32>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            topology: TopologyParams::default(),
            models: ModelKind::ALL.to_vec(),
            vehicle_counts: vec![160, 200, 250],
            cbr_source_counts: vec![5, 10, 15, 20],
            tx_ranges: vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
            seeds: vec![1, 2, 3, 4, 5],
            mobility: MobilityConfig::default(),
            radio: RadioParams::default(),
            interference_factor: 1.8,
            packet_size: 512,
            cbr_interval: 0.05,
            output_dir: PathBuf::from("results"),
            figure_tx_range: None,
            figure_cbr_sources: None,
        }
    }
}

impl ExperimentSpec {
    pub fn figure_range(&self) -> f64 {
        self.figure_tx_range.unwrap_or_else(|| {
            if self.tx_ranges.contains(&250.0) {
                250.0
            } else {
                self.tx_ranges.iter().copied().fold(f64::MIN, f64::max)
            }
        })
    }

    pub fn figure_cbr(&self) -> u32 {
        self.figure_cbr_sources
            .unwrap_or_else(|| self.cbr_source_counts.iter().copied().max().unwrap_or(0))
    }

    pub fn radio_for(&self, tx_range: f64) -> RadioParams {
        RadioParams {
            tx_range,
            interference_range: self.interference_factor * tx_range,
            ..self.radio.clone()
        }
    }

    /// Number of rows a run of this spec produces.
    pub fn point_count(&self) -> usize {
        self.models.len()
            * self.vehicle_counts.len()
            * self.cbr_source_counts.len()
            * self.tx_ranges.len()
            * self.seeds.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Validation(m));
        for (name, empty) in [
            ("models", self.models.is_empty()),
            ("vehicle_counts", self.vehicle_counts.is_empty()),
            ("cbr_source_counts", self.cbr_source_counts.is_empty()),
            ("tx_ranges", self.tx_ranges.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return fail(format!("{name} must not be empty"));
            }
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            return fail("models must not repeat".into());
        }
        if self.vehicle_counts.contains(&0) {
            return fail("vehicle_counts must be positive".into());
        }
        if self.cbr_source_counts.contains(&0) {
            return fail("cbr_source_counts must be positive".into());
        }
        let fewest = *self.vehicle_counts.iter().min().unwrap();
        if let Some(c) = self.cbr_source_counts.iter().find(|c| **c > fewest / 2) {
            return fail(format!(
                "cbr_source_counts value {c} exceeds half the smallest vehicle count ({fewest})"
            ));
        }
        if self.tx_ranges.iter().any(|r| !(*r > 0.0)) {
            return fail("tx_ranges must be positive".into());
        }
        if !(self.interference_factor >= 1.0) {
            return fail("interference_factor must be at least 1".into());
        }
        if self.packet_size == 0 {
            return fail("packet_size must be positive".into());
        }
        if !(self.cbr_interval > 0.0) {
            return fail("cbr_interval must be positive".into());
        }
        if !self.tx_ranges.contains(&self.figure_range()) {
            return fail(format!(
                "figure_tx_range {} is not among tx_ranges",
                self.figure_range()
            ));
        }
        if !self.cbr_source_counts.contains(&self.figure_cbr()) {
            return fail(format!(
                "figure_cbr_sources {} is not among cbr_source_counts",
                self.figure_cbr()
            ));
        }
        self.topology
            .check()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let mobility = MobilityConfig {
            vehicle_count: fewest,
            ..self.mobility.clone()
        };
        mobility
            .check()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        self.radio_for(self.tx_ranges[0])
            .check()
            .map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

/// Parses a `key = value` experiment file. Lists are comma separated, `#`
/// starts a comment, omitted keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    parse_config_with_preset(text, None)
}

/// As [`parse_config`], with `preset` supplying every key the file leaves
/// unset.
pub fn parse_config_with_preset(
    text: &str,
    preset: Option<Preset>,
) -> Result<ExperimentSpec, ConfigError> {
    let mut spec = ExperimentSpec::default();
    if let Some(p) = preset {
        p.apply(&mut spec);
    }
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Parse { line, msg };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        set(&mut spec, key, value).map_err(err)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| scalar(v.trim())).collect()
}

fn pair(value: &str) -> Result<(f64, f64), String> {
    match list::<f64>(value)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err(format!(
            "expected two comma-separated numbers, got `{value}`"
        )),
    }
}

fn flag(value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn set(spec: &mut ExperimentSpec, key: &str, v: &str) -> Result<(), String> {
    let t = &mut spec.topology;
    let m = &mut spec.mobility;
    let r = &mut spec.radio;
    match key {
        "models" => spec.models = v.split(',').map(|s| s.parse()).collect::<Result<_, _>>()?,
        "vehicle_counts" => spec.vehicle_counts = list(v)?,
        "cbr_source_counts" => spec.cbr_source_counts = list(v)?,
        "tx_ranges" => spec.tx_ranges = list(v)?,
        "seeds" => spec.seeds = list(v)?,
        "output_dir" => spec.output_dir = PathBuf::from(v),
        "figure_tx_range" => spec.figure_tx_range = Some(scalar(v)?),
        "figure_cbr_sources" => spec.figure_cbr_sources = Some(scalar(v)?),
        "interference_factor" => spec.interference_factor = scalar(v)?,
        "packet_size" => spec.packet_size = scalar(v)?,
        "cbr_interval" => spec.cbr_interval = scalar(v)?,

        "dt" => m.dt = scalar(v)?,
        "accel" => m.accel = scalar(v)?,
        "decel" => m.decel = scalar(v)?,
        "tau" => m.tau = scalar(v)?,
        "sigma" => m.sigma = scalar(v)?,
        "min_gap" => m.min_gap = scalar(v)?,
        "ssm_stop_time" => m.ssm_stop_time = scalar(v)?,
        "rwp_pause" => m.rwp_pause = scalar(v)?,
        "rwp_speed_min" => m.rwp_speed_min = scalar(v)?,
        "rwp_speed_max" => m.rwp_speed_max = scalar(v)?,
        "duration" => m.duration = scalar(v)?,
        "metrobus_fraction" => m.metrobus_fraction = scalar(v)?,
        "route_choice" => m.route_choice = v.parse()?,

        "corridor_length" => t.corridor_length = scalar(v)?,
        "corridor_width" => t.corridor_width = scalar(v)?,
        "metrobus_lanes_per_direction" => t.metrobus_lanes_per_direction = scalar(v)?,
        "metrobus_speed" => t.metrobus_speed = scalar(v)?,
        "metrobus_bidirectional" => t.metrobus_bidirectional = flag(v)?,
        "main_road_lanes_per_direction" => t.main_road_lanes_per_direction = scalar(v)?,
        "main_road_speed" => t.main_road_speed = scalar(v)?,
        "main_road_offset" => t.main_road_offset = scalar(v)?,
        "hwm_lanes" => t.hwm_lanes = scalar(v)?,
        "hwm_speed" => t.hwm_speed = scalar(v)?,
        "umm_lanes" => t.umm_lanes = scalar(v)?,
        "umm_speed" => t.umm_speed = scalar(v)?,
        "metrobus_stations" => t.metrobus_stations = scalar(v)?,
        "main_road_stops" => t.main_road_stops = scalar(v)?,
        "hwm_stops" => t.hwm_stops = scalar(v)?,
        "umm_stops" => t.umm_stops = scalar(v)?,
        "umm_grid_rows" => t.umm_grid_rows = scalar(v)?,
        "umm_grid_cols" => t.umm_grid_cols = scalar(v)?,
        "umm_row_spacing" => t.umm_row_spacing = scalar(v)?,
        "umm_control" => t.umm_control = v.parse()?,
        "tlm_green" => t.tlm_green = scalar(v)?,
        "ptsm_p" => t.ptsm_p = scalar(v)?,
        "ptsm_w" => t.ptsm_w = scalar(v)?,
        "metrobus_dwell" => t.metrobus_dwell = pair(v)?,
        "stop_dwell" => t.stop_dwell = pair(v)?,

        "bitrate" => r.bitrate = scalar(v)?,
        "per_hop_overhead" => r.per_hop_overhead = scalar(v)?,
        "slot" => r.slot = scalar(v)?,
        "max_backoff_slots" => r.max_backoff_slots = scalar(v)?,
        "collisions" => r.collisions = flag(v)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let spec = parse_config("").unwrap();
        assert_eq!(
            spec.models,
            vec![ModelKind::Hmm, ModelKind::Umm, ModelKind::Hwm]
        );
        assert_eq!(spec.mobility.duration, 1000.0);
        assert_eq!(
            (spec.topology.corridor_length, spec.topology.corridor_width),
            (6380.0, 1934.0)
        );
        assert_eq!(spec, ExperimentSpec::default());
    }

    #[test]
    fn range_sweep() {
        let spec = parse_config("tx_ranges = 50,100,150,200,250,300").unwrap();
        assert_eq!(
            spec.tx_ranges,
            vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0]
        );
    }

    #[test]
    fn zero_sources_rejected() {
        assert!(matches!(
            parse_config("cbr_source_counts = 0"),
            Err(ConfigError::Validation(_))
        ));
    }

    #[test]
    fn too_many_sources_for_the_fleet() {
        let err = parse_config("vehicle_counts = 30\ncbr_source_counts = 5,16").unwrap_err();
        assert!(matches!(err, ConfigError::Validation(m) if m.contains("16")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# sweep\nmodels = HMM\n\nbogus = 3\n";
        assert_eq!(
            parse_config(text),
            Err(ConfigError::Parse {
                line: 4,
                msg: "unknown key `bogus`".into()
            })
        );
        assert!(matches!(
            parse_config("seeds = 1, x"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("seeds"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("seeds = 1\nseeds = 2"),
            Err(ConfigError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn preset_fills_only_unset_keys() {
        let spec = parse_config_with_preset("seeds = 1,2,3,4,5\n", Some(Preset::Desk)).unwrap();
        assert_eq!(spec.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(spec.vehicle_counts, vec![40]);
        assert_eq!(spec.mobility.duration, 300.0);
        let spec = parse_config_with_preset("duration = 60", Some(Preset::Desk)).unwrap();
        assert_eq!(spec.mobility.duration, 60.0);
        assert_eq!(spec.seeds, vec![1, 2]);
    }

    #[test]
    fn nested_settings_and_comments() {
        let text = "umm_control = ssm  # stop signs only\nmetrobus_dwell = 10, 30\ncollisions = false\nroute_choice = manhattan\n";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.topology.umm_control, crate::road::UmmControl::StopSign);
        assert_eq!(spec.topology.metrobus_dwell, (10.0, 30.0));
        assert!(!spec.radio.collisions);
        assert_eq!(
            spec.mobility.route_choice,
            crate::mobility::RouteChoice::Manhattan
        );
    }

    #[test]
    fn figure_defaults() {
        let spec = parse_config("").unwrap();
        assert_eq!((spec.figure_range(), spec.figure_cbr()), (250.0, 20));
        let spec = parse_config("tx_ranges = 100, 150").unwrap();
        assert_eq!(spec.figure_range(), 150.0);
        assert!(matches!(
            parse_config("figure_tx_range = 120"),
            Err(ConfigError::Validation(_))
        ));
    }
}
