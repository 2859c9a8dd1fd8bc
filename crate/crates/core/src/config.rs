//! TOML experiment files. A file holds one `[run]` table and, for grids, a
//! `[matrix]` table whose lists replace the corresponding run fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationRule;
use crate::attack::AttackKind;
use crate::engine::{OptimizerKind, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Matrix>,
}

/// Empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    #[serde(default)]
    pub rules: Vec<AggregationRule>,
    #[serde(default)]
    pub attacks: Vec<AttackKind>,
    #[serde(default)]
    pub byz_ratios: Vec<f64>,
    #[serde(default)]
    pub optimizers: Vec<OptimizerKind>,
}

/// One cell of an expanded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub config: RunConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for cell in file.cells() {
            cell.config.validate().map_err(|e| Error::Config(format!("{}: {e}", cell.name)))?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    /// Cartesian product in rule, attack, ratio, optimizer order (optimizer
    /// varies fastest). Without a matrix the base run is the only cell.
    pub fn cells(&self) -> Vec<Cell> {
        let m = self.matrix.clone().unwrap_or_default();
        let base = &self.run;
        let rules = or_base(m.rules, base.rule);
        let attacks = or_base(m.attacks, base.attack);
        let ratios = or_base(m.byz_ratios, base.byz_ratio);
        let optimizers = or_base(m.optimizers, base.optimizer);
        let mut cells = Vec::new();
        for rule in &rules {
            for attack in &attacks {
                for ratio in &ratios {
                    for opt in &optimizers {
                        let config = RunConfig {
                            rule: *rule,
                            attack: *attack,
                            byz_ratio: *ratio,
                            optimizer: *opt,
                            ..base.clone()
                        };
                        let name = format!(
                            "{:03}_{}_{}_eps{}_{}",
                            cells.len(),
                            rule.name(),
                            attack.name(),
                            ratio,
                            opt.name()
                        );
                        cells.push(Cell { name, config });
                    }
                }
            }
        }
        cells
    }
}

fn or_base<T>(values: Vec<T>, base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values
    }
}
