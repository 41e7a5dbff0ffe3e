// SPDX-License-Identifier: Apache-2.0

//! Memory estimation, layer-to-device allocation and cost estimation for
//! quantized model deployments.
//!
//! Sizes are decimal gigabytes (1 GB = 1e9 bytes).

use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RUNTIME_BUFFER_GB: f64 = 1.5;
pub const DEFAULT_HEADROOM: f64 = 0.15;

/// Search nodes the exact fallback may visit before giving up.
const SEARCH_BUDGET: usize = 2_000_000;
const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(
        "no feasible device map: layer {smallest_unplaced_layer} ({smallest_unplaced_gb:.3} GB) is the smallest \
         that does not fit; {unplaced_gb:.3} GB unplaced, capacity shortfall {shortfall_gb:.3} GB"
    )]
    Infeasible { smallest_unplaced_layer: usize, smallest_unplaced_gb: f64, unplaced_gb: f64, shortfall_gb: f64 },
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Quantization {
    Int4,
    Int8,
    Float16,
    Float32,
}

impl Quantization {
    pub fn bits(self) -> u8 {
        match self {
            Quantization::Int4 => 4,
            Quantization::Int8 => 8,
            Quantization::Float16 => 16,
            Quantization::Float32 => 32,
        }
    }
}

impl TryFrom<u8> for Quantization {
    type Error = String;
    fn try_from(bits: u8) -> Result<Self, String> {
        match bits {
            4 => Ok(Quantization::Int4),
            8 => Ok(Quantization::Int8),
            16 => Ok(Quantization::Float16),
            32 => Ok(Quantization::Float32),
            other => Err(format!("quantization must be 4, 8, 16 or 32 bits, got {other}")),
        }
    }
}

impl From<Quantization> for u8 {
    fn from(q: Quantization) -> u8 {
        q.bits()
    }
}

/// Weight bytes at the given width, in GB.
pub fn weight_memory(parameter_count: f64, quantization: Quantization) -> f64 {
    parameter_count * f64::from(quantization.bits()) / 8.0 / 1e9
}

/// Weights plus an additive runtime buffer (activations, KV cache, CUDA context).
pub fn estimate_model_memory(parameter_count: f64, quantization: Quantization, runtime_buffer_gb: f64) -> f64 {
    weight_memory(parameter_count, quantization) + runtime_buffer_gb
}

/// Decoder-only transformer shape, enough to count parameters per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerArchitecture {
    pub vocab_size: u64,
    pub hidden_size: u64,
    pub num_layers: u64,
    pub intermediate_size: u64,
    pub num_attention_heads: u64,
    pub num_kv_heads: u64,
    /// 1 for a dense feed-forward block.
    pub num_experts: u64,
    pub tied_embeddings: bool,
}

impl TransformerArchitecture {
    pub fn mistral_7b() -> Self {
        Self {
            vocab_size: 32_000,
            hidden_size: 4096,
            num_layers: 32,
            intermediate_size: 14_336,
            num_attention_heads: 32,
            num_kv_heads: 8,
            num_experts: 1,
            tied_embeddings: false,
        }
    }

    /// Eight experts per layer, same attention as the dense 7B model.
    pub fn mixtral_8x7b() -> Self {
        Self { num_experts: 8, ..Self::mistral_7b() }
    }

    pub fn decoder_layer_params(&self) -> u64 {
        let h = self.hidden_size;
        let head_dim = h / self.num_attention_heads;
        let kv = self.num_kv_heads * head_dim;
        let attention = 2 * h * h + 2 * h * kv;
        let ffn = self.num_experts * 3 * h * self.intermediate_size;
        let router = if self.num_experts > 1 { h * self.num_experts } else { 0 };
        attention + ffn + router + 2 * h
    }

    pub fn embedding_params(&self) -> u64 {
        self.vocab_size * self.hidden_size
    }

    /// Final norm plus the output projection (zero extra when tied).
    pub fn head_params(&self) -> u64 {
        let lm_head = if self.tied_embeddings { 0 } else { self.embedding_params() };
        self.hidden_size + lm_head
    }

    pub fn total_params(&self) -> u64 {
        self.embedding_params() + self.num_layers * self.decoder_layer_params() + self.head_params()
    }

    /// `[embedding, decoder layers..., head]` sizes in GB.
    pub fn layer_sizes_gb(&self, quantization: Quantization) -> Vec<f64> {
        let gb = |p: u64| weight_memory(p as f64, quantization);
        std::iter::once(gb(self.embedding_params()))
            .chain((0..self.num_layers).map(|_| gb(self.decoder_layer_params())))
            .chain(std::iter::once(gb(self.head_params())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub parameter_count: f64,
    pub quantization_bits: Quantization,
    #[serde(default)]
    pub layer_sizes: Vec<f64>,
}

impl ModelProfile {
    pub fn from_architecture(model_id: &str, arch: &TransformerArchitecture, quantization: Quantization) -> Self {
        Self {
            model_id: model_id.to_owned(),
            parameter_count: arch.total_params() as f64,
            quantization_bits: quantization,
            layer_sizes: arch.layer_sizes_gb(quantization),
        }
    }

    pub fn weight_gb(&self) -> f64 {
        weight_memory(self.parameter_count, self.quantization_bits)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.parameter_count > 0.0 && self.parameter_count.is_finite()) {
            return Err(PlanError::InvalidInput("parameter_count must be positive".into()));
        }
        if self.layer_sizes.is_empty() {
            return Ok(());
        }
        if self.layer_sizes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(PlanError::InvalidInput("layer sizes must be positive".into()));
        }
        let sum: f64 = self.layer_sizes.iter().sum();
        let weights = self.weight_gb();
        if (sum - weights).abs() > 0.10 * weights {
            return Err(PlanError::InvalidInput(format!(
                "layer sizes sum to {sum:.3} GB, more than 10% away from the {weights:.3} GB weight estimate"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub capacity: f64,
    #[serde(default = "default_headroom")]
    pub headroom_fraction: f64,
}

fn default_headroom() -> f64 {
    DEFAULT_HEADROOM
}

impl DeviceProfile {
    pub fn new(device_id: impl Into<String>, capacity: f64, headroom_fraction: f64) -> Self {
        Self { device_id: device_id.into(), capacity, headroom_fraction }
    }

    /// Usable memory after headroom.
    pub fn budget(&self) -> f64 {
        self.capacity * (1.0 - self.headroom_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMapPlan {
    /// Layer index → device id.
    pub assignments: BTreeMap<usize, String>,
    /// Device id → assigned GB. Every device appears, idle ones with 0.
    pub per_device_load: BTreeMap<String, f64>,
}

impl DeviceMapPlan {
    /// Every layer placed once, no device over its headroom budget.
    pub fn check(&self, layer_sizes: &[f64], devices: &[DeviceProfile]) -> Result<(), String> {
        if self.assignments.len() != layer_sizes.len()
            || (0..layer_sizes.len()).any(|i| !self.assignments.contains_key(&i))
        {
            return Err("not every layer is assigned exactly once".into());
        }
        for d in devices {
            let load: f64 =
                self.assignments.iter().filter(|(_, dev)| **dev == d.device_id).map(|(i, _)| layer_sizes[*i]).sum();
            if load > d.budget() + EPS {
                return Err(format!("{} holds {load:.3} GB over its {:.3} GB budget", d.device_id, d.budget()));
            }
            let reported = self.per_device_load.get(&d.device_id).copied().unwrap_or(0.0);
            if (reported - load).abs() > 1e-6 {
                return Err(format!("{} load reported as {reported} but is {load}", d.device_id));
            }
        }
        Ok(())
    }
}

fn validate_inputs(layer_sizes: &[f64], devices: &[DeviceProfile]) -> Result<(), PlanError> {
    let invalid = |s: String| Err(PlanError::InvalidInput(s));
    if layer_sizes.is_empty() {
        return invalid("no layers".into());
    }
    if let Some((i, s)) = layer_sizes.iter().enumerate().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
        return invalid(format!("layer {i} has non-positive size {s}"));
    }
    if devices.is_empty() {
        return invalid("no devices".into());
    }
    let mut ids = BTreeSet::new();
    for d in devices {
        if !ids.insert(d.device_id.as_str()) {
            return invalid(format!("duplicate device id `{}`", d.device_id));
        }
        if !(d.capacity > 0.0 && d.capacity.is_finite()) {
            return invalid(format!("device `{}` has non-positive capacity", d.device_id));
        }
        if !(0.0..1.0).contains(&d.headroom_fraction) {
            return invalid(format!("device `{}` headroom must be in [0, 1)", d.device_id));
        }
    }
    Ok(())
}

/// First-fit-decreasing over headroom budgets. Layers are taken largest
/// first (ties: lower index first) and go to the lowest-index device with
/// room. When that leaves a layer unplaced an exhaustive search settles
/// feasibility before reporting [`PlanError::Infeasible`].
pub fn plan_device_map(layer_sizes: &[f64], devices: &[DeviceProfile]) -> Result<DeviceMapPlan, PlanError> {
    validate_inputs(layer_sizes, devices)?;
    let budgets: Vec<f64> = devices.iter().map(DeviceProfile::budget).collect();
    let mut order: Vec<usize> = (0..layer_sizes.len()).collect();
    order.sort_by(|&a, &b| layer_sizes[b].total_cmp(&layer_sizes[a]).then(a.cmp(&b)));

    let mut loads = vec![0.0; devices.len()];
    let mut placement = vec![usize::MAX; layer_sizes.len()];
    let mut unplaced = Vec::new();
    for &layer in &order {
        let size = layer_sizes[layer];
        match (0..devices.len()).find(|&d| loads[d] + size <= budgets[d] + EPS) {
            Some(d) => {
                loads[d] += size;
                placement[layer] = d;
            }
            None => unplaced.push(layer),
        }
    }

    if !unplaced.is_empty() {
        match exact_search(layer_sizes, &order, &budgets) {
            Some(found) => placement = found,
            None => {
                let &smallest = unplaced
                    .iter()
                    .min_by(|&&a, &&b| layer_sizes[a].total_cmp(&layer_sizes[b]).then(a.cmp(&b)))
                    .expect("non-empty");
                let total: f64 = layer_sizes.iter().sum();
                return Err(PlanError::Infeasible {
                    smallest_unplaced_layer: smallest,
                    smallest_unplaced_gb: layer_sizes[smallest],
                    unplaced_gb: unplaced.iter().map(|&l| layer_sizes[l]).sum(),
                    shortfall_gb: (total - budgets.iter().sum::<f64>()).max(0.0),
                });
            }
        }
    }

    let mut per_device_load: BTreeMap<String, f64> = devices.iter().map(|d| (d.device_id.clone(), 0.0)).collect();
    let mut assignments = BTreeMap::new();
    for (layer, &d) in placement.iter().enumerate() {
        let id = &devices[d].device_id;
        assignments.insert(layer, id.clone());
        *per_device_load.get_mut(id).expect("device listed") += layer_sizes[layer];
    }
    Ok(DeviceMapPlan { assignments, per_device_load })
}

/// Depth-first assignment in `order`, skipping devices whose (load, budget)
/// state duplicates one already tried at the same depth. `None` when no
/// assignment exists or the node budget runs out.
fn exact_search(layer_sizes: &[f64], order: &[usize], budgets: &[f64]) -> Option<Vec<usize>> {
    struct Search<'a> {
        sizes: &'a [f64],
        order: &'a [usize],
        budgets: &'a [f64],
        loads: Vec<f64>,
        placement: Vec<usize>,
        suffix_totals: Vec<f64>,
        nodes: usize,
    }

    impl Search<'_> {
        fn go(&mut self, depth: usize) -> bool {
            if depth == self.order.len() {
                return true;
            }
            self.nodes += 1;
            if self.nodes > SEARCH_BUDGET {
                return false;
            }
            let free: f64 = self.budgets.iter().zip(&self.loads).map(|(b, l)| (b - l).max(0.0)).sum();
            if self.suffix_totals[depth] > free + EPS {
                return false;
            }
            let layer = self.order[depth];
            let size = self.sizes[layer];
            let mut tried: Vec<(f64, f64)> = Vec::new();
            for d in 0..self.budgets.len() {
                if self.loads[d] + size > self.budgets[d] + EPS {
                    continue;
                }
                let state = (self.loads[d], self.budgets[d]);
                if tried.contains(&state) {
                    continue;
                }
                tried.push(state);
                self.loads[d] += size;
                self.placement[layer] = d;
                if self.go(depth + 1) {
                    return true;
                }
                self.loads[d] -= size;
            }
            false
        }
    }

    let mut suffix_totals = vec![0.0; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix_totals[i] = suffix_totals[i + 1] + layer_sizes[order[i]];
    }
    let mut search = Search {
        sizes: layer_sizes,
        order,
        budgets,
        loads: vec![0.0; budgets.len()],
        placement: vec![usize::MAX; layer_sizes.len()],
        suffix_totals,
        nodes: 0,
    };
    search.go(0).then_some(search.placement)
}

/// Loads produced by splitting consecutive layers evenly by count across
/// devices, ignoring budgets. Used to show where a naive split saturates.
pub fn equal_split_loads(layer_sizes: &[f64], devices: &[DeviceProfile]) -> BTreeMap<String, f64> {
    let n = devices.len().max(1);
    let per = layer_sizes.len().div_ceil(n);
    let mut loads: BTreeMap<String, f64> = devices.iter().map(|d| (d.device_id.clone(), 0.0)).collect();
    for (i, size) in layer_sizes.iter().enumerate() {
        if let Some(d) = devices.get((i / per.max(1)).min(n - 1)) {
            *loads.get_mut(&d.device_id).expect("device listed") += size;
        }
    }
    loads
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub hourly_rate: Decimal,
    pub hours: Decimal,
    pub total: Decimal,
}

/// `hourly_rate × hours`, rounded half-even to four decimals.
pub fn estimate_cost(hourly_rate: Decimal, hours: Decimal) -> Result<CostEstimate, PlanError> {
    if hourly_rate.is_sign_negative() || hours.is_sign_negative() {
        return Err(PlanError::InvalidInput("rate and hours must be non-negative".into()));
    }
    let total = (hourly_rate * hours).round_dp_with_strategy(4, RoundingStrategy::MidpointNearestEven);
    Ok(CostEstimate { hourly_rate, hours, total: total.normalize() })
}
