//! Dataset compositions, simulation and JSON-Lines persistence.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{
    click_distribution_from, detect_joint, pnr_response, sample, sample_joint, sample_product, DetectorModel,
    SampleSet,
};
use crate::error::{Error, Result};
use crate::fockstats::{photon_distribution_auto, Label, StateSpec};
use crate::interferometer::{
    coherent_shortcut, decompose, evolve, output_distribution, MultimodeState, UnitarySpec, DEFAULT_N_MAX,
};
use crate::witnesses::{evaluate_empirical, sweep_bias, WitnessContext, WitnessKind, WitnessReport};

/// Per-mode cutoff of squeezed inputs before the interferometer.
pub const SQUEEZED_LOCAL_CUTOFF: usize = 10;
/// Second coherent amplitude of a mixed coherent state, relative to the first.
pub const MIXED_COHERENT_RATIO: f64 = 0.5;
pub const PNS_PER_LOSS: f64 = 0.0167;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    /// Equidistant in log amplitude.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Grid {
    pub fn linear(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count, spacing: Spacing::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::param("amplitude grid must be nonempty"));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::param(format!("invalid amplitude range [{}, {}]", self.lo, self.hi)));
        }
        if self.spacing == Spacing::Geometric && self.lo <= 0.0 {
            return Err(Error::param("geometric grid needs a positive lower bound"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.lo + t * (self.hi - self.lo),
                    Spacing::Geometric => (self.lo.ln() + t * (self.hi.ln() - self.lo.ln())).exp(),
                }
            })
            .collect()
    }
}

/// State family of a composition row; the grid supplies its amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "species", rename_all = "snake_case")]
pub enum Species {
    Coherent,
    /// Equal mixture of α and `ratio`·α.
    MixedCoherent {
        #[serde(default = "default_ratio")]
        ratio: f64,
    },
    Thermal,
    Squeezed,
    Spats,
    LossyFock { p_loss: f64 },
    /// Multimode single-photon-loss Fock product: `main`·|n⃗⟩ + `per_loss`·Σ_σ |n⃗ − e_σ⟩.
    Pns {
        #[serde(default = "default_main")]
        main: f64,
        #[serde(default = "default_per_loss")]
        per_loss: f64,
    },
}

fn default_ratio() -> f64 {
    MIXED_COHERENT_RATIO
}
fn default_main() -> f64 {
    0.9
}
fn default_per_loss() -> f64 {
    PNS_PER_LOSS
}

impl Species {
    pub fn label(&self) -> Label {
        match self {
            Species::Coherent | Species::MixedCoherent { .. } | Species::Thermal => Label::Classical,
            _ => Label::Nonclassical,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Species::Coherent => "coherent",
            Species::MixedCoherent { .. } => "mixed_coherent",
            Species::Thermal => "thermal",
            Species::Squeezed => "squeezed_vacuum",
            Species::Spats => "spats",
            Species::LossyFock { .. } => "lossy_fock",
            Species::Pns { .. } => "pns",
        }
    }

    /// Single-mode state at grid amplitude `a`.
    pub fn single_mode(&self, a: f64) -> Result<StateSpec> {
        Ok(match *self {
            Species::Coherent => StateSpec::Coherent { alpha: a },
            Species::MixedCoherent { ratio } => StateSpec::MixedCoherent { alpha1: a, alpha2: ratio * a },
            Species::Thermal => StateSpec::Thermal { nbar: a },
            Species::Squeezed => StateSpec::SqueezedVacuum { r: a },
            Species::Spats => StateSpec::Spats { nbar: a },
            Species::LossyFock { p_loss } => StateSpec::LossyFock { n: integer_amplitude(a)?, p_loss },
            Species::Pns { .. } => {
                return Err(Error::param("pns states are multimode; use lossy_fock for one mode"))
            }
        })
    }
}

fn integer_amplitude(a: f64) -> Result<u32> {
    if a < 0.0 || (a - a.round()).abs() > 1e-9 {
        return Err(Error::param(format!("photon number must be a nonnegative integer, got {a}")));
    }
    Ok(a.round() as u32)
}

/// One composition row: species, amplitude grid and, for multimode data, the excited modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGroup {
    #[serde(flatten)]
    pub species: Species,
    pub grid: Grid,
    /// Excited input modes; all modes when absent.
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default = "one")]
    pub d_x: usize,
    pub detector: DetectorModel,
    pub states: Vec<StateGroup>,
    pub samples_per_state: usize,
    #[serde(default)]
    pub seed: u64,
    /// Real or complex unitary JSON file; the built-in 6-mode matrix when absent.
    #[serde(default)]
    pub unitary: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let ctx = |i: usize, e: Error| Error::param(format!("states[{i}]: {e}"));
        if self.samples_per_state == 0 {
            return Err(Error::param("samples_per_state must be >= 1"));
        }
        if self.d_x == 0 {
            return Err(Error::param("d_x must be >= 1"));
        }
        if self.states.is_empty() {
            return Err(Error::Empty("state list".into()));
        }
        self.detector.validate().map_err(|e| Error::param(format!("detector: {e}")))?;
        for (i, g) in self.states.iter().enumerate() {
            g.grid.validate().map_err(|e| ctx(i, e))?;
            if let Some(m) = &g.modes {
                if m.is_empty() || m.iter().any(|&k| k >= self.d_x) {
                    return Err(ctx(i, Error::param(format!("modes must be nonempty and < {}", self.d_x))));
                }
            }
            if self.d_x == 1 {
                for a in g.grid.values() {
                    g.species.single_mode(a).and_then(|s| s.validate()).map_err(|e| ctx(i, e))?;
                }
            } else {
                match g.species {
                    Species::Coherent | Species::Squeezed => {}
                    Species::Pns { main, per_loss } => {
                        if !(main >= 0.0 && per_loss >= 0.0) {
                            return Err(ctx(i, Error::param("pns weights must be >= 0")));
                        }
                        for a in g.grid.values() {
                            integer_amplitude(a).map_err(|e| ctx(i, e))?;
                        }
                    }
                    _ => {
                        return Err(ctx(
                            i,
                            Error::param(format!("species {} is not supported for multimode data", g.species.name())),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text)?;
        Ok(c)
    }

    pub fn state_count(&self) -> usize {
        self.states.iter().map(|g| g.grid.count).sum()
    }
}

/// Built-in compositions `table1`..`table4`.
pub fn preset(name: &str, samples_per_state: usize, seed: u64) -> Result<DatasetConfig> {
    let lin = Grid::linear;
    let group = |species: Species, grid: Grid| StateGroup { species, grid, modes: None };
    let on = |species: Species, grid: Grid, modes: &[usize]| StateGroup { species, grid, modes: Some(modes.to_vec()) };
    let realistic_single = || {
        vec![
            group(Species::Squeezed, lin(0.1, 1.2, 12)),
            group(Species::Spats, lin(0.15, 0.42, 10)),
            group(Species::Thermal, lin(0.5, 7.0, 14)),
        ]
    };
    let (d_x, detector, states) = match name {
        "table1" => (
            1,
            DetectorModel::IdealPnr { cutoff: 29 },
            vec![
                group(Species::Squeezed, lin(0.1, 1.2, 12)),
                group(Species::Spats, lin(0.25, 1.2, 20)),
                group(Species::Coherent, lin(0.0, 3.5, 36)),
                group(Species::MixedCoherent { ratio: MIXED_COHERENT_RATIO }, lin(0.0, 3.5, 18)),
            ],
        ),
        "table2" => {
            let mut s = realistic_single();
            s.push(group(Species::Coherent, lin(0.0, 12.0, 13)));
            (1, DetectorModel::binned(1.0, 0.0), s)
        }
        "table3" => {
            let mut s = realistic_single();
            s.push(group(
                Species::Coherent,
                Grid { lo: 1.04e-3, hi: 98.1, count: 13, spacing: Spacing::Geometric },
            ));
            (1, DetectorModel::ClickMultiplex { bins: 8, efficiency: 1.0, dark_rate: 0.0 }, s)
        }
        "table4" => {
            let low = [0, 1, 2];
            let high = [3, 4, 5];
            let pns = |main| Species::Pns { main, per_loss: PNS_PER_LOSS };
            (
                6,
                DetectorModel::binned(1.0, 0.0),
                vec![
                    group(Species::Squeezed, lin(0.1, 0.6, 6)),
                    on(Species::Squeezed, lin(0.1, 0.8, 8), &high),
                    on(Species::Squeezed, lin(0.1, 0.8, 8), &low),
                    group(Species::Coherent, lin(0.0, 0.9, 10)),
                    on(Species::Coherent, lin(0.1, 1.4, 14), &high),
                    on(Species::Coherent, lin(0.1, 1.4, 14), &low),
                    group(pns(0.9), lin(1.0, 5.0, 5)),
                    on(pns(0.95), lin(1.0, 5.0, 5), &high),
                    on(pns(0.95), lin(1.0, 5.0, 5), &low),
                ],
            )
        }
        other => {
            return Err(Error::param(format!("unknown preset '{other}' (expected table1, table2, table3 or table4)")))
        }
    };
    Ok(DatasetConfig { name: name.into(), d_x, detector, states, samples_per_state, seed, unitary: None })
}

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one state; depends only on the master seed and the state id.
pub fn state_seed(master: u64, state_id: usize) -> u64 {
    splitmix64(master ^ splitmix64(state_id as u64))
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub state_id: usize,
    pub family: String,
    pub params: serde_json::Value,
    pub label: u8,
    pub d_x: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Detector the samples were drawn with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorModel>,
    pub samples: Vec<Vec<u32>>,
}

impl StateRecord {
    pub fn label(&self) -> Result<Label> {
        Label::from_u8(self.label)
    }

    pub fn sample_set(&self) -> Result<SampleSet> {
        if self.samples.len() != self.m {
            return Err(Error::dim(format!(
                "state {}: M = {} but {} samples",
                self.state_id,
                self.m,
                self.samples.len()
            )));
        }
        let data: Vec<u32> = self.samples.iter().flatten().copied().collect();
        if self.samples.iter().any(|r| r.len() != self.d_x) {
            return Err(Error::dim(format!("state {}: rows must have {} entries", self.state_id, self.d_x)));
        }
        SampleSet::new(self.d_x, data, self.label()?, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<StateRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d_x(&self) -> Result<usize> {
        let d = self.records.first().ok_or_else(|| Error::Empty("dataset".into()))?.d_x;
        if self.records.iter().any(|r| r.d_x != d) {
            return Err(Error::dim("records have different mode counts"));
        }
        Ok(d)
    }

    pub fn detector(&self) -> Option<&DetectorModel> {
        self.records.first().and_then(|r| r.detector.as_ref())
    }

    pub fn labels(&self) -> Result<Vec<Label>> {
        self.records.iter().map(|r| r.label()).collect()
    }

    pub fn sample_sets(&self) -> Result<Vec<SampleSet>> {
        self.records.iter().map(|r| r.sample_set()).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label.as_u8()).count()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: StateRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            if r.label > 1 {
                return Err(Error::Parse(format!("line {}: label must be 0 or 1", i + 1)));
            }
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_jsonl()?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::param(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// A concrete state of a composition.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedState {
    pub state_id: usize,
    pub species: Species,
    pub amplitude: f64,
    pub modes: Vec<usize>,
}

impl PlannedState {
    fn params(&self, d_x: usize) -> Result<serde_json::Value> {
        if d_x == 1 {
            let spec = self.species.single_mode(self.amplitude)?;
            let mut v = serde_json::to_value(spec)?;
            if let Some(obj) = v.as_object_mut() {
                obj.remove("family");
            }
            return Ok(v);
        }
        let mut v = serde_json::json!({ "amplitude": self.amplitude, "modes": self.modes });
        if let Species::Pns { main, per_loss } = self.species {
            v["main"] = main.into();
            v["per_loss"] = per_loss.into();
        }
        Ok(v)
    }
}

pub fn plan(config: &DatasetConfig) -> Vec<PlannedState> {
    let mut out = Vec::with_capacity(config.state_count());
    for g in &config.states {
        let modes = g.modes.clone().unwrap_or_else(|| (0..config.d_x).collect());
        for a in g.grid.values() {
            out.push(PlannedState { state_id: out.len(), species: g.species, amplitude: a, modes: modes.clone() });
        }
    }
    out
}

fn simulate_single(s: &PlannedState, detector: &DetectorModel, m: usize, seed: u64) -> Result<SampleSet> {
    let spec = s.species.single_mode(s.amplitude)?;
    let outcomes = match detector {
        DetectorModel::ClickMultiplex { bins, efficiency, dark_rate } => {
            click_distribution_from(&spec, *bins, *efficiency, *dark_rate)?
        }
        _ => pnr_response(&photon_distribution_auto(&spec)?, detector)?,
    };
    Ok(sample(&outcomes, m, seed))
}

fn simulate_multimode(
    s: &PlannedState,
    d_x: usize,
    u: &UnitarySpec,
    detector: &DetectorModel,
    m: usize,
    seed: u64,
) -> Result<SampleSet> {
    let mut amp = vec![0.0; d_x];
    for &k in &s.modes {
        amp[k] = s.amplitude;
    }
    let plan = || decompose(u);
    match s.species {
        Species::Coherent => {
            let alphas: Vec<Complex64> = amp.iter().map(|&a| Complex64::new(a, 0.0)).collect();
            let out = coherent_shortcut(&alphas, u)?;
            let marginals = out
                .means()
                .into_iter()
                .map(|mu| {
                    let spec = StateSpec::Coherent { alpha: mu.sqrt() };
                    match detector {
                        DetectorModel::ClickMultiplex { bins, efficiency, dark_rate } => {
                            click_distribution_from(&spec, *bins, *efficiency, *dark_rate)
                        }
                        _ => pnr_response(&photon_distribution_auto(&spec)?, detector),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(sample_product(&marginals, m, seed))
        }
        Species::Squeezed => {
            let state = MultimodeState::squeezed_product(&amp, SQUEEZED_LOCAL_CUTOFF, DEFAULT_N_MAX)?;
            let joint = output_distribution(&evolve(&state, &plan()?)?).normalized();
            Ok(sample_joint(&detect_joint(&joint, detector)?, m, seed))
        }
        Species::Pns { main, per_loss } => {
            let n = integer_amplitude(s.amplitude)?;
            let ns: Vec<u32> = amp.iter().map(|&a| if a > 0.0 { n } else { 0 }).collect();
            let state = MultimodeState::single_loss_fock(&ns, main, per_loss)?;
            let joint = output_distribution(&evolve(&state, &plan()?)?).normalized();
            Ok(sample_joint(&detect_joint(&joint, detector)?, m, seed))
        }
        _ => Err(Error::param(format!("species {} is not supported for multimode data", s.species.name()))),
    }
}

/// Exact outcome distributions, then M samples per state with seeds from [`state_seed`].
pub fn simulate(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let unitary = if config.d_x > 1 {
        let u = match &config.unitary {
            Some(p) => UnitarySpec::load(p)?,
            None => UnitarySpec::dataset_unitary(),
        };
        if u.dim() != config.d_x {
            return Err(Error::dim(format!("unitary is {}-dimensional, d_x = {}", u.dim(), config.d_x)));
        }
        Some(u)
    } else {
        None
    };
    let planned = plan(config);
    let records = planned
        .par_iter()
        .map(|s| {
            let seed = state_seed(config.seed, s.state_id);
            let m = config.samples_per_state;
            let set = match &unitary {
                None => simulate_single(s, &config.detector, m, seed)?,
                Some(u) => simulate_multimode(s, config.d_x, u, &config.detector, m, seed)?,
            };
            let family = if config.d_x == 1 {
                s.species.single_mode(s.amplitude)?.family().name().to_string()
            } else {
                s.species.name().to_string()
            };
            Ok(StateRecord {
                state_id: s.state_id,
                family,
                params: s.params(config.d_x)?,
                label: s.species.label().as_u8(),
                d_x: config.d_x,
                m,
                detector: Some(config.detector.clone()),
                samples: set.rows().map(|r| r.to_vec()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records })
}

/// Empirical witness reports with labels for every state.
pub fn witness_reports(
    data: &Dataset,
    detector: &DetectorModel,
    witness: WitnessKind,
) -> Result<Vec<(WitnessReport, Label)>> {
    let ctx = WitnessContext::new(data.d_x()?, detector);
    if !witness.is_applicable(&ctx) {
        let valid: Vec<&str> = WitnessKind::applicable(&ctx).iter().map(|w| w.name()).collect();
        return Err(Error::NotApplicable(format!(
            "{} does not apply to {} data with {} mode(s); valid witnesses: {}",
            witness.name(),
            detector.name(),
            ctx.d_x,
            valid.join(", ")
        )));
    }
    data.records
        .par_iter()
        .map(|r| Ok((evaluate_empirical(witness, &ctx, &r.sample_set()?)?, r.label()?)))
        .collect()
}

pub fn witness_curve(
    data: &Dataset,
    detector: &DetectorModel,
    witness: WitnessKind,
    biases: &[f64],
) -> Result<crate::baselines::TradeoffCurve> {
    sweep_bias(witness.name(), &witness_reports(data, detector, witness)?, biases)
}
