//! Resolving the named truth recipes of a config into spectral fields,
//! source paths, and coefficient paths.

use super::config::{ExperimentConfig, LambdaRecipe, ModeCoeff, SourceRecipe};
use crate::error::Result;
use crate::random_data::CoefficientPath;
use crate::solver::SourcePath;
use crate::spectral::{DesignGrid, MultiIndex, SpectralField};

fn field_from_modes(dim: usize, modes: &[ModeCoeff]) -> Result<SpectralField> {
    let mut field = SpectralField::zero(dim);
    for mc in modes {
        field.set(MultiIndex::new(mc.mode.clone())?, mc.coeff)?;
    }
    Ok(field)
}

pub fn u0_field(cfg: &ExperimentConfig) -> Result<SpectralField> {
    field_from_modes(cfg.dimension, &cfg.truth.u0)
}

/// The source as a spectral path on the given time nodes; `None` when the
/// recipe has no source term.
pub fn source_path(cfg: &ExperimentConfig, time_nodes: &[f64]) -> Result<Option<SourcePath>> {
    match &cfg.truth.source {
        SourceRecipe::None => Ok(None),
        SourceRecipe::Decay { rate, modes } => {
            let base = field_from_modes(cfg.dimension, modes)?;
            let fields = time_nodes.iter().map(|&t| base.scale((-rate * t).exp())).collect();
            Ok(Some(SourcePath::new(time_nodes.to_vec(), fields)?))
        }
    }
}

/// G(x_i, t_m) sampled on the design grid, outer index grid point.
pub fn source_values(cfg: &ExperimentConfig, grid: &DesignGrid, time_nodes: &[f64]) -> Result<Vec<Vec<f64>>> {
    match &cfg.truth.source {
        SourceRecipe::None => Ok(vec![vec![0.0; time_nodes.len()]; grid.len()]),
        SourceRecipe::Decay { rate, modes } => {
            let base = field_from_modes(cfg.dimension, modes)?;
            let decay: Vec<f64> = time_nodes.iter().map(|&t| (-rate * t).exp()).collect();
            grid.points()
                .iter()
                .map(|x| {
                    let v = base.synthesize(x)?;
                    Ok(decay.iter().map(|&e| v * e).collect())
                })
                .collect()
        }
    }
}

/// The true diffusion coefficient sampled at the given time nodes.
pub fn lambda_path(cfg: &ExperimentConfig, time_nodes: &[f64]) -> Result<CoefficientPath> {
    let values: Vec<f64> = time_nodes
        .iter()
        .map(|&t| match &cfg.truth.lambda {
            LambdaRecipe::Constant { value } => *value,
            LambdaRecipe::Sinusoid { mean, amplitude, period } => {
                mean + amplitude * (2.0 * std::f64::consts::PI * t / period).sin()
            }
        })
        .collect();
    CoefficientPath::new(time_nodes.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::super::config::parse_config_str;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recipes_resolve() {
        let text = super::super::config::minimal_toml().replace(
            "kind = \"none\"",
            "kind = \"decay\"\nrate = 2.0\nmodes = [{ mode = [1], coeff = 0.25 }]",
        );
        let cfg = parse_config_str(&text).unwrap();
        let u0 = u0_field(&cfg).unwrap();
        assert_eq!(u0.support_len(), 1);

        let nodes = vec![0.0, 0.5, 1.0];
        let src = source_path(&cfg, &nodes).unwrap().unwrap();
        let p1 = MultiIndex::new(vec![1]).unwrap();
        assert_abs_diff_eq!(src.fields()[1].coeff(&p1), 0.25 * (-1.0_f64).exp(), epsilon = 1e-15);

        let grid = DesignGrid::new(&[8]).unwrap();
        let vals = source_values(&cfg, &grid, &nodes).unwrap();
        assert_eq!(vals.len(), 8);
        let expect = src.fields()[2].synthesize(&grid.points()[3]).unwrap();
        assert_abs_diff_eq!(vals[3][2], expect, epsilon = 1e-14);

        let lam = lambda_path(&cfg, &nodes).unwrap();
        assert_eq!(lam.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn sinusoid_lambda_stays_in_band() {
        let text = super::super::config::minimal_toml().replace(
            "kind = \"constant\"\nvalue = 1.0",
            "kind = \"sinusoid\"\nmean = 0.8\namplitude = 0.2\nperiod = 0.5",
        );
        let cfg = parse_config_str(&text).unwrap();
        let nodes: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let lam = lambda_path(&cfg, &nodes).unwrap();
        assert!(lam.satisfies_band(cfg.operator.a0, cfg.operator.a1));
        assert!(lam.sup_abs() > 0.9);
    }
}
