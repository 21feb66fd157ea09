use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::config::{ConfigError, ExperimentSpec};
use crate::mobility::{run_mobility, MobilityConfig, MobilityTrace, VehicleId};
use crate::netsim::{run_network_sim, CbrFlowConfig, Metrics, SweepKey};
use crate::parallel::map_ordered;
use crate::rng;
use crate::road::{build_topology, quantize, ModelKind, RoadError, RoadNetwork};

pub const RESULTS_HEADER: &str =
    "model,vehicles,cbr_sources,tx_range,seed,sent,delivered,dropped,pdf,mean_delay_s,status";

/// Share of the run a vehicle must be present for to source or sink a flow.
const MIN_PRESENCE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot build {model} topology: {source}")]
    Road { model: ModelKind, source: RoadError },
    #[error("cannot write results: {0}")]
    Io(#[from] io::Error),
}

/// One sweep point. Failed runs keep their key and carry the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub key: SweepKey,
    pub outcome: Result<Metrics, String>,
}

impl RunRow {
    pub fn csv(&self) -> String {
        let k = &self.key;
        let mut row = format!(
            "{},{},{},{:.6},{},",
            k.model.as_str(),
            k.vehicles,
            k.cbr_sources,
            k.tx_range,
            k.seed
        );
        match &self.outcome {
            Ok(m) => {
                write!(
                    row,
                    "{},{},{},{:.6},",
                    m.sent, m.delivered, m.dropped, m.pdf
                )
                .unwrap();
                if let Some(d) = m.mean_e2e_delay {
                    write!(row, "{d:.6}").unwrap();
                }
                row.push_str(",ok");
            }
            Err(e) => {
                let clean: String = e
                    .chars()
                    .map(|c| if c == ',' || c == '\n' { ';' } else { c })
                    .collect();
                write!(row, ",,,,,error: {clean}").unwrap();
            }
        }
        row
    }
}

/// Seed-averaged value for one model at one x position (a source count or
/// a range). `value` is absent when no run contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub x: f64,
    pub runs: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figures {
    pub pdf_vs_cbr: Vec<AggregateRow>,
    pub delay_vs_cbr: Vec<AggregateRow>,
    pub loss_vs_cbr: Vec<AggregateRow>,
    pub pdr_vs_range: Vec<AggregateRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<RunRow>,
    pub figures: Figures,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }
}

/// Picks `count` disjoint source/destination pairs among vehicles present
/// for most of the trace. Pairs depend only on the seed and eligibility,
/// so a smaller count selects a prefix of a larger one.
pub fn select_flows(
    trace: &MobilityTrace,
    count: u32,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<Vec<CbrFlowConfig>, String> {
    let mut times = trace.records.iter().map(|r| r.time).collect::<Vec<_>>();
    times.dedup();
    let mut presence: BTreeMap<VehicleId, usize> = BTreeMap::new();
    for r in &trace.records {
        *presence.entry(r.vehicle).or_default() += 1;
    }
    let needed = (MIN_PRESENCE * times.len() as f64).ceil() as usize;
    let mut ids: Vec<VehicleId> = presence
        .into_iter()
        .filter(|(_, n)| *n >= needed)
        .map(|(v, _)| v)
        .collect();
    if ids.len() < 2 * count as usize {
        return Err(format!(
            "{} flows need {} eligible vehicles, found {}",
            count,
            2 * count,
            ids.len()
        ));
    }
    ids.shuffle(&mut rng::stream(seed, rng::domain::FLOWS, 0));
    let (start, stop) = (trace.start_time(), trace.end_time());
    Ok((0..count as usize)
        .map(|k| {
            let offset = rng::stream(seed, rng::domain::FLOWS, 1 + k as u64)
                .random_range(0.0..spec.cbr_interval);
            CbrFlowConfig {
                src: ids[2 * k],
                dst: ids[2 * k + 1],
                packet_size: spec.packet_size,
                interval: spec.cbr_interval,
                start: quantize(start + offset),
                stop,
            }
        })
        .collect())
}

/// Runs every sweep point and returns rows in sweep order: model, vehicle
/// count, source count, range, seed.
pub fn execute_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<RunRow>, ExperimentError> {
    spec.validate()?;
    let mut networks: BTreeMap<ModelKind, RoadNetwork> = BTreeMap::new();
    for &model in &spec.models {
        let net = build_topology(&spec.topology, model)
            .map_err(|source| ExperimentError::Road { model, source })?;
        networks.insert(model, net);
    }
    let mut traces = Vec::new();
    for &model in &spec.models {
        for &vehicles in &spec.vehicle_counts {
            for &seed in &spec.seeds {
                traces.push((model, vehicles, seed));
            }
        }
    }
    // one task per trace keeps at most `jobs` traces in memory
    let grouped = map_ordered(&traces, jobs, |&(model, vehicles, seed)| {
        let cfg = MobilityConfig {
            vehicle_count: vehicles,
            seed,
            ..spec.mobility.clone()
        };
        let trace = run_mobility(&networks[&model], &cfg).map_err(|e| format!("mobility: {e}"));
        let mut points = Vec::new();
        for &cbr in &spec.cbr_source_counts {
            for &tx_range in &spec.tx_ranges {
                points.push((cbr, tx_range));
            }
        }
        let outcomes = map_ordered(&points, jobs, |&(cbr, tx_range)| {
            let trace = trace.as_ref().map_err(Clone::clone)?;
            let flows = select_flows(trace, cbr, spec, seed)?;
            run_network_sim(trace, &flows, &spec.radio_for(tx_range), seed)
                .map(|r| r.totals)
                .map_err(|e| format!("network: {e}"))
        });
        points
            .into_iter()
            .zip(outcomes)
            .map(|((cbr, tx_range), outcome)| RunRow {
                key: SweepKey {
                    model,
                    vehicles,
                    cbr_sources: cbr,
                    tx_range,
                    seed,
                },
                outcome,
            })
            .collect::<Vec<_>>()
    });

    // regroup from trace-major into the documented sweep order
    let mut rows: Vec<RunRow> = grouped.into_iter().flatten().collect();
    let pos = |v: &[u32], x: u32| v.iter().position(|y| *y == x);
    rows.sort_by_key(|r| {
        let k = &r.key;
        (
            spec.models.iter().position(|m| *m == k.model),
            pos(&spec.vehicle_counts, k.vehicles),
            pos(&spec.cbr_source_counts, k.cbr_sources),
            spec.tx_ranges.iter().position(|t| *t == k.tx_range),
            spec.seeds.iter().position(|s| *s == k.seed),
        )
    });
    Ok(rows)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Seed-averaged figure series. The per-source-count figures use rows at
/// the figure range, the range figure uses rows at the figure source count;
/// vehicle counts are pooled.
pub fn aggregate(spec: &ExperimentSpec, rows: &[RunRow]) -> Figures {
    let mut figures = Figures::default();
    let ok = |r: &&RunRow| r.outcome.is_ok();
    for &model in &spec.models {
        for &cbr in &spec.cbr_source_counts {
            let group: Vec<&Metrics> = rows
                .iter()
                .filter(ok)
                .filter(|r| {
                    r.key.model == model
                        && r.key.cbr_sources == cbr
                        && r.key.tx_range == spec.figure_range()
                })
                .map(|r| r.outcome.as_ref().unwrap())
                .collect();
            let x = cbr as f64;
            let pdf: Vec<f64> = group.iter().map(|m| m.pdf).collect();
            let delay: Vec<f64> = group.iter().filter_map(|m| m.mean_e2e_delay).collect();
            let loss: Vec<f64> = group.iter().map(|m| m.loss as f64).collect();
            let row = |values: &[f64]| AggregateRow {
                model,
                x,
                runs: values.len(),
                value: mean(values),
            };
            figures.pdf_vs_cbr.push(row(&pdf));
            figures.delay_vs_cbr.push(row(&delay));
            figures.loss_vs_cbr.push(row(&loss));
        }
        for &tx_range in &spec.tx_ranges {
            let pdr: Vec<f64> = rows
                .iter()
                .filter(ok)
                .filter(|r| {
                    r.key.model == model
                        && r.key.tx_range == tx_range
                        && r.key.cbr_sources == spec.figure_cbr()
                })
                .map(|r| r.outcome.as_ref().unwrap().pdf)
                .collect();
            figures.pdr_vs_range.push(AggregateRow {
                model,
                x: tx_range,
                runs: pdr.len(),
                value: mean(&pdr),
            });
        }
    }
    figures
}

fn figure_csv(header: &str, rows: &[AggregateRow], integer_x: bool) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        if integer_x {
            write!(out, "{},{},{},", r.model.as_str(), r.x as u64, r.runs).unwrap();
        } else {
            write!(out, "{},{:.6},{},", r.model.as_str(), r.x, r.runs).unwrap();
        }
        if let Some(v) = r.value {
            write!(out, "{v:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `results.csv` and the four figure files into `dir`.
pub fn write_outputs(dir: &Path, rows: &[RunRow], figures: &Figures) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut results = format!("{RESULTS_HEADER}\n");
    for r in rows {
        results.push_str(&r.csv());
        results.push('\n');
    }
    let files = [
        ("results.csv", results),
        (
            "fig7_pdf_vs_cbr.csv",
            figure_csv("model,cbr_sources,runs,pdf", &figures.pdf_vs_cbr, true),
        ),
        (
            "fig8_delay_vs_cbr.csv",
            figure_csv(
                "model,cbr_sources,runs,mean_delay_s",
                &figures.delay_vs_cbr,
                true,
            ),
        ),
        (
            "fig9_loss_vs_cbr.csv",
            figure_csv("model,cbr_sources,runs,loss", &figures.loss_vs_cbr, true),
        ),
        (
            "fig10_pdr_vs_range.csv",
            figure_csv("model,tx_range,runs,pdr", &figures.pdr_vs_range, false),
        ),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the sweep and writes its CSV set into `spec.output_dir`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    jobs: usize,
) -> Result<ExperimentOutcome, ExperimentError> {
    let rows = execute_sweep(spec, jobs)?;
    let figures = aggregate(spec, &rows);
    let files = write_outputs(&spec.output_dir, &rows, &figures)?;
    Ok(ExperimentOutcome {
        rows,
        figures,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::parse_config;
    use crate::netsim::CSV_HEADER;

    fn small_spec() -> ExperimentSpec {
        parse_config(
            "models = HWM, HMM\nvehicle_counts = 12\ncbr_source_counts = 2, 3\ntx_ranges = 200, 250\nseeds = 1, 2\nduration = 30\n",
        )
        .unwrap()
    }

    #[test]
    fn header_extends_the_metrics_row() {
        assert_eq!(RESULTS_HEADER, format!("{CSV_HEADER},status"));
    }

    #[test]
    fn sweep_is_complete_and_ordered() {
        let spec = small_spec();
        let rows = execute_sweep(&spec, 1).unwrap();
        assert_eq!(rows.len(), spec.point_count());
        assert_eq!(rows.len(), 2 * 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.outcome.is_ok()), "{rows:?}");
        assert_eq!(rows[0].key.model, ModelKind::Hwm);
        assert_eq!((rows[1].key.seed, rows[2].key.tx_range), (2, 250.0));
        assert_eq!(rows.last().unwrap().key.model, ModelKind::Hmm);
    }

    #[test]
    fn job_count_does_not_change_results() {
        let spec = small_spec();
        assert_eq!(
            execute_sweep(&spec, 1).unwrap(),
            execute_sweep(&spec, 4).unwrap()
        );
    }

    #[test]
    fn aggregates_are_means_of_their_rows() {
        let spec = small_spec();
        let rows = execute_sweep(&spec, 0).unwrap();
        let figures = aggregate(&spec, &rows);
        assert_eq!(
            figures.pdf_vs_cbr.len(),
            spec.models.len() * spec.cbr_source_counts.len()
        );
        assert_eq!(
            figures.pdr_vs_range.len(),
            spec.models.len() * spec.tx_ranges.len()
        );
        for a in &figures.pdf_vs_cbr {
            let own: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.key.model == a.model
                        && r.key.cbr_sources as f64 == a.x
                        && r.key.tx_range == 250.0
                })
                .map(|r| r.outcome.as_ref().unwrap().pdf)
                .collect();
            assert_eq!(a.runs, 2);
            assert!((a.value.unwrap() - own.iter().sum::<f64>() / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nested_flow_selection() {
        let spec = small_spec();
        let net = build_topology(&spec.topology, ModelKind::Hwm).unwrap();
        let cfg = MobilityConfig {
            vehicle_count: 12,
            duration: 10.0,
            ..MobilityConfig::default()
        };
        let trace = run_mobility(&net, &cfg).unwrap();
        let three = select_flows(&trace, 3, &spec, 5).unwrap();
        let two = select_flows(&trace, 2, &spec, 5).unwrap();
        assert_eq!(&three[..2], &two[..]);
        let mut ends: Vec<VehicleId> = three.iter().flat_map(|f| [f.src, f.dst]).collect();
        ends.sort();
        ends.dedup();
        assert_eq!(ends.len(), 6);
        assert!(three
            .iter()
            .all(|f| f.start >= 0.0 && f.start < spec.cbr_interval && f.stop == 10.0));
        assert!(select_flows(&trace, 7, &spec, 5).is_err());
    }

    #[test]
    fn failures_become_rows() {
        let row = RunRow {
            key: SweepKey {
                model: ModelKind::Umm,
                vehicles: 4,
                cbr_sources: 1,
                tx_range: 100.0,
                seed: 9,
            },
            outcome: Err("mobility: bad, worse".into()),
        };
        assert_eq!(
            row.csv(),
            "UMM,4,1,100.000000,9,,,,,,error: mobility: bad; worse"
        );
        assert_eq!(
            row.csv().split(',').count(),
            RESULTS_HEADER.split(',').count()
        );
    }

    #[test]
    fn writes_the_csv_set() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            output_dir: dir.path().to_path_buf(),
            ..small_spec()
        };
        let outcome = run_experiment(&spec, 2).unwrap();
        assert!(outcome.all_ok());
        let names: Vec<String> = outcome
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            [
                "results.csv",
                "fig7_pdf_vs_cbr.csv",
                "fig8_delay_vs_cbr.csv",
                "fig9_loss_vs_cbr.csv",
                "fig10_pdr_vs_range.csv"
            ]
        );
        let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 1 + spec.point_count());
        let fig10 = fs::read_to_string(dir.path().join("fig10_pdr_vs_range.csv")).unwrap();
        assert!(fig10
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("HWM,200.000000,2,"));
    }
}
