//! JSON instance format and report serialization.
//!
//! Rationals are written as `"p/q"` strings and read from strings or plain
//! JSON numbers. Every facility and client is referenced by its id.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::metric_from_points;
use crate::model::ClusteringInstance;
use crate::rational::Rational;
use crate::variants::{KnapsackConstraint, PartitionMatroid};

/// Bits kept when rounding Euclidean distances read in points mode.
pub const POINTS_PRECISION_BITS: u32 = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DistJson {
    Matrix { rows: Vec<Vec<Rational>> },
    Points { dim: usize, coords: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsJson {
    pub w: Vec<Rational>,
    #[serde(rename = "W")]
    pub budget: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionJson {
    pub classes: Vec<Vec<String>>,
    pub capacities: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceJson {
    pub q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub m: usize,
    pub facilities: Vec<String>,
    pub clients: Vec<String>,
    pub dist: DistJson,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pre_opened: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionJson>,
}

/// An instance with the optional variant constraints it carries.
#[derive(Debug, Clone)]
pub struct InstanceBundle {
    pub instance: ClusteringInstance,
    pub partition: Option<PartitionMatroid>,
    pub knapsack: Option<KnapsackConstraint>,
}

impl InstanceBundle {
    pub fn plain(instance: ClusteringInstance) -> Self {
        InstanceBundle { instance, partition: None, knapsack: None }
    }

    pub fn from_json(json: &InstanceJson) -> Result<Self> {
        let index = |ids: &[String], what: &str| -> Result<HashMap<String, usize>> {
            let map: HashMap<String, usize> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
            if map.len() != ids.len() {
                return Err(Error::BadInstance(format!("duplicate {what} id")));
            }
            Ok(map)
        };
        let fac = index(&json.facilities, "facility")?;
        index(&json.clients, "client")?;
        let lookup = |id: &String| fac.get(id).copied().ok_or_else(|| Error::BadInstance(format!("unknown facility id {id:?}")));
        let rows = match &json.dist {
            DistJson::Matrix { rows } => rows.clone(),
            DistJson::Points { dim, coords } => {
                if coords.iter().any(|c| c.len() != *dim) {
                    return Err(Error::BadMetric(format!("every point needs {dim} coordinates")));
                }
                metric_from_points(coords, POINTS_PRECISION_BITS)?
            }
        };
        let pre = json.pre_opened.iter().map(lookup).collect::<Result<Vec<_>>>()?;
        let instance = ClusteringInstance::new(json.facilities.clone(), json.clients.clone(), rows, json.k, json.m, json.q, pre)?;
        let nf = instance.num_facilities();
        let partition = match &json.partition {
            Some(p) => {
                let classes = p.classes.iter().map(|c| c.iter().map(lookup).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
                Some(PartitionMatroid::new(classes, p.capacities.clone(), nf)?)
            }
            None => None,
        };
        let knapsack = match &json.weights {
            Some(w) => {
                if w.w.len() != nf {
                    return Err(Error::BadInstance(format!("{} weights for {nf} facilities", w.w.len())));
                }
                Some(KnapsackConstraint::new(w.w.clone(), w.budget.clone())?)
            }
            None => None,
        };
        Ok(InstanceBundle { instance, partition, knapsack })
    }

    /// Matrix-mode JSON, or points mode when `coords` is given.
    pub fn to_json(&self, coords: Option<&[Vec<f64>]>) -> InstanceJson {
        let inst = &self.instance;
        let fids = inst.facility_ids();
        let n = inst.num_points();
        let dist = match coords {
            Some(c) => DistJson::Points { dim: c.first().map_or(0, Vec::len), coords: c.to_vec() },
            None => DistJson::Matrix { rows: (0..n).map(|p| (0..n).map(|r| inst.d(p, r).clone()).collect()).collect() },
        };
        InstanceJson {
            q: inst.q(),
            k: inst.k(),
            m: inst.m(),
            facilities: fids.to_vec(),
            clients: inst.client_ids().to_vec(),
            dist,
            pre_opened: inst.pre_opened().iter().map(|&i| fids[i].clone()).collect(),
            weights: self.knapsack.as_ref().map(|k| WeightsJson { w: k.weights.clone(), budget: k.budget.clone() }),
            partition: self.partition.as_ref().map(|p| PartitionJson {
                classes: p.classes.iter().map(|c| c.iter().map(|&i| fids[i].clone()).collect()).collect(),
                capacities: p.capacities.clone(),
            }),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<InstanceBundle> {
    let json: InstanceJson = serde_json::from_str(text).map_err(|e| Error::BadInstance(e.to_string()))?;
    InstanceBundle::from_json(&json)
}

pub fn instance_to_string(bundle: &InstanceBundle, coords: Option<&[Vec<f64>]>) -> String {
    to_pretty(&bundle.to_json(coords))
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
