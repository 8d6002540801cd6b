//! Canned desk-scale recipes for the four figures. `full` widens the grids.

use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};

const FIG1_LEFT: &str = include_str!("../configs/fig1_left.toml");
const FIG1_CENTER: &str = include_str!("../configs/fig1_center.toml");
const FIG1_RIGHT: &str = include_str!("../configs/fig1_right.toml");
const FIG2_LEFT: &str = include_str!("../configs/fig2_left.toml");
const FIG2_RIGHT: &str = include_str!("../configs/fig2_right.toml");
const FIG3: &str = include_str!("../configs/fig3.toml");
const FIG4: &str = include_str!("../configs/fig4.toml");

/// Configs of one figure, one per output file, named by their `name` field.
pub fn figure_configs(figure: u8, full: bool) -> Result<Vec<ExperimentConfig>> {
    let texts: &[&str] = match figure {
        1 => &[FIG1_LEFT, FIG1_CENTER, FIG1_RIGHT],
        2 => &[FIG2_LEFT, FIG2_RIGHT],
        3 => &[FIG3],
        4 => &[FIG4],
        _ => return Err(config_err(format!("no figure {figure}; choose 1, 2, 3 or 4"))),
    };
    let mut out = Vec::with_capacity(texts.len());
    for text in texts {
        let mut cfg = ExperimentConfig::from_toml(text)?;
        if full {
            widen(&mut cfg);
            cfg.validate()?;
        }
        out.push(cfg);
    }
    Ok(out)
}

fn widen(cfg: &mut ExperimentConfig) {
    let g = &mut cfg.geometry;
    match cfg.name.as_str() {
        "fig1_left" | "fig1_center" => {
            g.alpha_b = vec![0.05, 0.1, 0.2, 0.3, 0.35, 0.5, 1.0];
            g.alpha_max = Some(5.0);
        }
        "fig1_right" => {
            g.alpha_b = vec![0.05, 0.1, 0.2, 0.3, 0.5, 1.0];
            g.alpha_max = Some(6.0);
        }
        "fig2_left" => g.num_batches = Some(10),
        "fig2_right" => {
            g.alpha_b = (1..=100).map(|i| i as f64 / 100.0).collect();
            g.num_batches = Some(20);
        }
        "fig3" => {
            g.alpha_b = vec![0.1, 0.2, 0.25, 0.3, 0.5, 1.0];
            g.alpha_max = Some(5.0);
        }
        "fig4" => {
            cfg.algorithm.t_max_list = vec![1, 2, 3, 5, 10, 20, 0];
            g.alpha_max = Some(5.0);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_parses() {
        for f in 1..=4 {
            for full in [false, true] {
                let cfgs = figure_configs(f, full).unwrap();
                assert!(!cfgs.is_empty());
            }
        }
        assert_eq!(figure_configs(1, false).unwrap().len(), 3);
        assert!(figure_configs(5, false).is_err());
    }

    #[test]
    fn desk_scale_sizes() {
        let f1 = figure_configs(1, false).unwrap();
        assert!(f1.iter().all(|c| c.n() == 2000 && c.seeds.len() == 10));
        let f3 = figure_configs(3, false).unwrap();
        assert_eq!(f3[0].n(), 1000);
        assert_eq!(f3[0].seeds.len(), 100);
    }
}
