use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataset::{DataFormat, Dataset, PointSet};
use crate::diagnostics::{
    cond_uncond_divergence, default_sweep_times, dim_size_sweep, memorization_curve, model_loss_sweep,
    series_to_csv, target_mse_sweep, top1_sweep, velocity_norm_sweep, SweepSeries,
};
use crate::error::{Error, Result};
use crate::model::{train, MlpConfig, MlpVelocityModel, TrainConfig, TrainTarget, VelocityField};
use crate::oracle::OracleField;
use crate::par::try_map_indexed;
use crate::sampler::{
    euler_sample, mixed_sample, prior_sample, resume_sample, terminal_states_csv, GuidanceConfig, GuidedField,
    MixedConfig, ResumeConfig,
};
use crate::schedule::{Schedule, ScheduleKind, TimeGrid};

use super::{Command, Common, DataKind, DataSource, GridArgs, StatArg, TargetArg};

pub(super) fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenData { common, kind, n, d, classes, radius, spread, normalize } => {
            let out = required_out(common, "gen-data")?;
            let mut data = match kind {
                DataKind::Gaussian => Dataset::gen_gaussian(*n, *d, common.seed)?,
                DataKind::Ring => Dataset::gen_mixture(&Dataset::ring_centers(*classes, *radius), *spread, *n, common.seed)?,
            };
            if *normalize {
                data = data.normalize()?;
            }
            data.save(out, DataFormat::from_path(out))
        }
        Command::SweepTargetMse { common, source, mc, times } => {
            let data = source_data(source, common.seed)?;
            let s = target_mse_sweep(&data, &schedule(common)?, &sweep_times(times), *mc, common.seed)?;
            emit_series(common, &[s])
        }
        Command::SweepTop1 { common, source, mc, times } => {
            let data = source_data(source, common.seed)?;
            let s = top1_sweep(&data, &schedule(common)?, &sweep_times(times), *mc, common.seed)?;
            emit_series(common, &[s])
        }
        Command::SweepDims { common, dims, sizes, mc, times } => {
            let s = dim_size_sweep(dims, sizes, &schedule(common)?, times, *mc, common.seed)?;
            emit_series(common, &s)
        }
        Command::Train {
            common,
            data,
            model_out,
            hidden,
            time_dim,
            class_dim,
            steps,
            batch_size,
            lr,
            beta1,
            beta2,
            class_drop,
            target,
            unconditional,
        } => {
            let data = load_data(data)?;
            let num_classes = if *unconditional { 0 } else { data.num_classes() };
            let config = MlpConfig {
                dim: data.dim(),
                hidden: *hidden,
                time_dim: *time_dim,
                class_dim: *class_dim,
                num_classes,
            };
            let mut model = MlpVelocityModel::new(config, common.seed)?;
            let train_config = TrainConfig {
                steps: *steps,
                batch_size: *batch_size,
                learning_rate: *lr,
                adam_betas: (*beta1, *beta2),
                class_drop_prob: *class_drop,
                target: match target {
                    TargetArg::Cfm => TrainTarget::Cfm,
                    TargetArg::Oracle => TrainTarget::Oracle,
                },
                seed: common.seed,
            };
            let history = train(&mut model, &data, &train_config, &schedule(common)?)?;
            model.save(model_out)?;
            emit(common, &history.to_csv())
        }
        Command::EvalLoss { common, data, model, stat, mc, times, conditional } => {
            let data = load_data(data)?;
            let schedule = schedule(common)?;
            let times = sweep_times(times);
            let model = model.as_deref().map(MlpVelocityModel::load).transpose()?;
            let oracle = OracleField::new(&data, schedule);
            let series = match stat {
                StatArg::Loss => {
                    let (c, o) = match &model {
                        Some(m) => model_loss_sweep(m, &data, &schedule, &times, *mc, common.seed, *conditional)?,
                        None => model_loss_sweep(&oracle, &data, &schedule, &times, *mc, common.seed, *conditional)?,
                    };
                    vec![c, o]
                }
                StatArg::VelocityNorm => {
                    let field: &dyn VelocityField = match &model {
                        Some(m) => m,
                        None => &oracle,
                    };
                    vec![velocity_norm_sweep(field, &data, &schedule, &times, *mc, common.seed)?]
                }
                StatArg::CondUncond => {
                    let m = model
                        .as_ref()
                        .ok_or_else(|| Error::invalid("--stat cond-uncond needs --model"))?;
                    vec![cond_uncond_divergence(m, &data, &schedule, &times, *mc, common.seed)?]
                }
            };
            emit_series(common, &series)
        }
        Command::Sample { common, data, model, grid, class, cfg_scale, cfg_interval, n_samples, terminal_only } => {
            let schedule = schedule(common)?;
            let grid = build_grid(grid)?;
            let data = data.as_deref().map(load_data).transpose()?;
            let model = model.as_deref().map(MlpVelocityModel::load).transpose()?;
            let guidance = match cfg_interval.as_slice() {
                [lo, hi] if *cfg_scale != 1.0 => GuidanceConfig::new(*cfg_scale, *lo, *hi)?,
                [_, _] => GuidanceConfig::disabled(),
                _ => return Err(Error::invalid("--cfg-interval takes exactly two values lo,hi")),
            };
            let oracle;
            let guided;
            let field: &dyn VelocityField = match (&model, &data) {
                (Some(m), _) if guidance.enabled => {
                    guided = GuidedField::new(m, guidance);
                    &guided
                }
                (Some(m), _) => m,
                (None, Some(d)) => {
                    if guidance.enabled {
                        return Err(Error::invalid("guidance needs a trained --model"));
                    }
                    oracle = OracleField::new(d, schedule);
                    &oracle
                }
                (None, None) => return Err(Error::invalid("sample needs --model or --data")),
            };
            if *n_samples == 0 {
                return Err(Error::invalid("--n-samples must be at least 1"));
            }
            let trajectories = try_map_indexed(*n_samples, |k| {
                euler_sample(field, &grid, &prior_sample(field.dim(), common.seed, k as u64), *class)
            })?;
            if *n_samples == 1 && !terminal_only {
                emit(common, &trajectories[0].to_csv())
            } else {
                let seeds: Vec<u64> = (0..*n_samples as u64).collect();
                emit(common, &terminal_states_csv(&seeds, &trajectories))
            }
        }
        Command::MixedSample { common, data, model, grid, t_switch, n_seeds, conditional, trajectory_out } => {
            let schedule = schedule(common)?;
            let grid = build_grid(grid)?;
            let data = load_data(data)?;
            let model = MlpVelocityModel::load(model)?;
            let oracle = OracleField::new(&data, schedule);
            let oracle = if *conditional { oracle } else { oracle.unconditional() };
            let curve = memorization_curve(&oracle, &model, &data, t_switch, *n_seeds, &grid, common.seed, *conditional)?;
            if let Some(path) = trajectory_out {
                let cfg = MixedConfig {
                    t_switch: t_switch[0],
                    grid: grid.clone(),
                    class: conditional.then_some(0),
                };
                let tr = mixed_sample(&oracle, &model, &cfg, &prior_sample(data.dim(), common.seed, 0))?;
                write_file(path, &tr.to_csv())?;
            }
            emit_series(common, &[curve])
        }
        Command::Resume { common, data, model, grid, t_resume, reference, reference_row, class, n_seeds } => {
            let schedule = schedule(common)?;
            let grid = build_grid(grid)?;
            let data = data.as_deref().map(load_data).transpose()?;
            let model = model.as_deref().map(MlpVelocityModel::load).transpose()?;
            let reference = match (reference, reference_row, &data) {
                (Some(r), None, _) => r.clone(),
                (None, Some(i), Some(d)) => {
                    if *i >= d.len() {
                        return Err(Error::invalid(format!("--reference-row {i} out of range for {} rows", d.len())));
                    }
                    d.row(*i).to_vec()
                }
                (None, Some(_), None) => return Err(Error::invalid("--reference-row needs --data")),
                (Some(_), Some(_), _) => return Err(Error::invalid("give either --reference or --reference-row")),
                (None, None, _) => return Err(Error::invalid("resume needs --reference or --reference-row")),
            };
            let oracle;
            let field: &dyn VelocityField = match (&model, &data) {
                (Some(m), _) => m,
                (None, Some(d)) => {
                    oracle = OracleField::new(d, schedule);
                    &oracle
                }
                (None, None) => return Err(Error::invalid("resume needs --model or --data")),
            };
            if *n_seeds == 0 {
                return Err(Error::invalid("--n-seeds must be at least 1"));
            }
            let trajectories = try_map_indexed(*n_seeds, |k| {
                let cfg = ResumeConfig {
                    t_resume: *t_resume,
                    reference: reference.clone(),
                    seed: common.seed.wrapping_add(k as u64),
                    class: *class,
                };
                resume_sample(field, &cfg, &grid, &schedule)
            })?;
            if *n_seeds == 1 {
                emit(common, &trajectories[0].to_csv())
            } else {
                let seeds: Vec<u64> = (0..*n_seeds as u64).map(|k| common.seed.wrapping_add(k)).collect();
                emit(common, &terminal_states_csv(&seeds, &trajectories))
            }
        }
        Command::ShiftTable { common, steps, shifts, threshold } => {
            if !(*threshold > 0.0 && *threshold < 1.0) {
                return Err(Error::invalid(format!("--threshold must lie in (0, 1), got {threshold}")));
            }
            let mut out = String::from("shift,steps,threshold,fraction,percent\n");
            for &s in shifts {
                let f = TimeGrid::shifted(*steps, s)?.fraction_below(*threshold);
                out.push_str(&format!("{s},{steps},{threshold},{f},{}\n", (f * 100.0).round()));
            }
            emit(common, &out)
        }
        Command::Plot { common, input, series } => {
            let out = required_out(common, "plot")?;
            let all = read_series(input)?;
            let s = all.get(*series).ok_or_else(|| {
                Error::invalid(format!("--series {series} out of range; {} has {} series", input.display(), all.len()))
            })?;
            super::write_svg(s, out)
        }
    }
}

fn schedule(common: &Common) -> Result<Schedule> {
    Schedule::new(ScheduleKind::RectifiedFlow, common.eps)
}

fn required_out<'a>(common: &'a Common, what: &str) -> Result<&'a Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("{what} needs --out <path>")))
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path, DataFormat::from_path(path))
}

fn source_data(source: &DataSource, seed: u64) -> Result<Dataset> {
    match &source.data {
        Some(p) => load_data(p),
        None => Dataset::gen_gaussian(source.n, source.d, seed),
    }
}

fn sweep_times(times: &Option<Vec<f64>>) -> Vec<f64> {
    times.clone().unwrap_or_else(default_sweep_times)
}

fn build_grid(g: &GridArgs) -> Result<TimeGrid> {
    match g.split {
        Some(split) => TimeGrid::stagewise(g.steps / 2, g.steps - g.steps / 2, split),
        None if g.shift == 1.0 => TimeGrid::uniform(g.steps),
        None => TimeGrid::shifted(g.steps, g.shift),
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn emit_series(common: &Common, series: &[SweepSeries]) -> Result<()> {
    if let (Some(path), Some(first)) = (&common.svg, series.first()) {
        super::write_svg(first, path)?;
    }
    emit(common, &series_to_csv(series))
}

/// Groups sweep CSV rows into series by consecutive `(sweep_name, param_json)`.
fn read_series(path: &Path) -> Result<Vec<SweepSeries>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != crate::diagnostics::CSV_HEADER {
        return Err(Error::format(path, "not a sweep CSV (unexpected header)"));
    }
    let mut out: Vec<SweepSeries> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}, column {}: not a number", CSV_HEADER_NAME[c])))
        };
        let (t, mean, std) = (num(2)?, num(3)?, num(4)?);
        let n_mc = num(5)? as usize;
        let seed: u64 = rec[6]
            .parse()
            .map_err(|_| Error::format(path, format!("row {row}, column seed: not an integer")))?;
        match out.last_mut() {
            Some(s) if s.name == rec[0] && s.params == rec[1] => {
                s.axis.push(t);
                s.mean.push(mean);
                s.std.push(std);
            }
            _ => out.push(SweepSeries {
                name: rec[0].to_string(),
                params: rec[1].to_string(),
                axis: vec![t],
                mean: vec![mean],
                std: vec![std],
                n_mc,
                seed,
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::format(path, "sweep CSV has no rows"));
    }
    Ok(out)
}

const CSV_HEADER_NAME: [&str; 7] = crate::diagnostics::CSV_HEADER;
