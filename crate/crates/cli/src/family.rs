//! Built-in model families.

use std::sync::Arc;

use valdesign::distribution::Distribution;
use valdesign::functional::ModelFunctional;
use valdesign::projectile::{self, FineModel};
use valdesign::transport::{Grid, RegionMean, SensorMean, TransportModel, VelocityField};
use valdesign::validation::{ExperimentSource, FineModelSource, ModelSource};

use crate::config::{FamilyId, Loaded, SensorPoint};
use crate::error::CliError;

pub enum Family {
    Projectile { fine: FineModel, noise: f64 },
    Transport { model: Arc<TransportModel> },
}

impl Family {
    pub fn build(cfg: &Loaded) -> Result<Self, CliError> {
        let c = &cfg.config;
        match c.family {
            FamilyId::Projectile => Ok(Family::Projectile {
                fine: FineModel {
                    g: c.fine_model.g,
                    visc: c.fine_model.visc,
                    rho: c.fine_model.rho,
                    step: c.fine_model.step,
                },
                noise: c.fine_model.noise,
            }),
            FamilyId::Transport => {
                let t = &c.transport;
                let mut grid = Grid::new(t.nx, t.ny, t.width, t.height)?;
                if !t.docks.is_empty() {
                    grid = grid.with_docks(&t.docks)?;
                }
                let velocity = match &t.velocity_file {
                    Some(p) => VelocityField::load(&grid, cfg.resolve(p))?,
                    None => VelocityField::poiseuille(&grid, t.v_max),
                };
                let model =
                    TransportModel::new(grid, velocity)?.with_inflow_sampling(t.inflow_sampling);
                Ok(Family::Transport {
                    model: Arc::new(model),
                })
            }
        }
    }

    pub fn functional(&self, id: &str) -> Result<Box<dyn ModelFunctional>, CliError> {
        let f: Option<Box<dyn ModelFunctional>> = match self {
            Family::Projectile { .. } => projectile::functional(id),
            Family::Transport { model } => match id {
                "qoi1" => Some(Box::new(RegionMean::qoi1(model.clone()))),
                "qoi2" => Some(Box::new(RegionMean::qoi2(model.clone()))),
                "obs" => Some(Box::new(SensorMean::new(model.clone()))),
                _ => None,
            },
        };
        f.ok_or_else(|| CliError::Config(format!("unknown functional `{id}` for this model family")))
    }

    /// Sensor points scanned when the config gives none: 200 times up to
    /// twice the time of maximal altitude, or every fluid cell centre.
    pub fn default_sensor_grid(&self, x_val: &[f64], theta: &Distribution) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            Family::Projectile { .. } => {
                let t_end = 2.0 * projectile::time_of_max(x_val, &theta.mean())?;
                Ok((1..=200).map(|k| vec![t_end * k as f64 / 200.0]).collect())
            }
            Family::Transport { model } => {
                let g = model.grid();
                let mut pts = Vec::new();
                for j in 0..g.ny() {
                    for i in 0..g.nx() {
                        if !g.is_solid(i, j) {
                            pts.push(vec![(i as f64 + 0.5) * g.dx(), (j as f64 + 0.5) * g.dy()]);
                        }
                    }
                }
                Ok(pts)
            }
        }
    }

    pub fn sensor_point(&self, p: &SensorPoint, x: &[f64], theta: &Distribution) -> Result<Vec<f64>, CliError> {
        match (p, self) {
            (SensorPoint::Point(z), _) => Ok(z.clone()),
            (SensorPoint::Named(n), Family::Projectile { .. }) if n == "time_of_max" => {
                Ok(vec![projectile::time_of_max(x, &theta.mean())?])
            }
            (SensorPoint::Named(n), _) => Err(CliError::Config(format!(
                "unknown sensor point `{n}` for this model family"
            ))),
        }
    }

    pub fn fine_source(&self) -> Result<Box<dyn ExperimentSource>, CliError> {
        match self {
            Family::Projectile { fine, noise } => Ok(Box::new(FineModelSource {
                model: *fine,
                noise: *noise,
            })),
            Family::Transport { .. } => Err(CliError::Config(
                "the transport family has no fine model; use source = \"model\" or \"csv\"".into(),
            )),
        }
    }

    pub fn model_source(theta: &Distribution) -> Box<dyn ExperimentSource> {
        Box::new(ModelSource {
            theta: theta.clone(),
        })
    }
}
