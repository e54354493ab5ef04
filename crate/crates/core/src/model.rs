//! Observation models over a finite alphabet.
//!
//! Everything downstream works with joint densities f_i^n of the first n
//! observations under each hypothesis, taken with respect to counting
//! measure on the alphabet. Integrals over an observation are therefore
//! finite sums over symbols, which keeps every design quantity exactly
//! computable.
//!
//! Two process families are supported:
//!
//! - [`IidModel`]: one pmf per hypothesis, observations independent and
//!   identically distributed. Histories collapse to symbol counts
//!   ([`CountState`]), the sufficient statistic the dynamic program runs on.
//! - [`JointTableModel`]: explicit joint pmf tables per history length, for
//!   dependent processes at small horizons. No reduction; states are full
//!   histories.
//!
//! The sampling-cost side of the design carries its own distribution: a
//! mixture of per-symbol pmfs (weights summing to one). A single component
//! recovers the fixed-parameter expected-sample-size objective; mixing over
//! the hypotheses themselves gives the Bayesian weighting.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability mass must match 1 to this tolerance after parsing.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Densities are kept in plain double precision. Configurations whose
/// horizon could push products of pmf entries below this bound are rejected
/// up front instead of silently underflowing.
pub const MIN_DENSITY: f64 = 1e-280;

// ---------------------------------------------------------------------------
// Alphabet and hypothesis labels
// ---------------------------------------------------------------------------

/// A finite observation alphabet; symbols are `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidModel(format!(
                "alphabet must have at least 2 symbols, got {size}"
            )));
        }
        if size > u8::MAX as usize + 1 {
            return Err(Error::InvalidModel(format!(
                "alphabet size {size} exceeds the supported maximum of 256"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Iterator over the symbols `0..size`.
    pub fn symbols(&self) -> impl Iterator<Item = u8> {
        (0..self.size as u16).map(|s| s as u8)
    }
}

/// The set of simple hypotheses under test, identified by distinct labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSet {
    labels: Vec<String>,
}

impl HypothesisSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 hypotheses, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in labels.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidModel(format!(
                        "hypothesis labels must be distinct, `{a}` repeats"
                    )));
                }
            }
        }
        Ok(Self { labels })
    }

    /// Default labels `H1..Hk`.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((1..=k).map(|i| format!("H{i}")).collect())
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Symbol-count sufficient statistic for i.i.d. models: `counts[a]` is the
/// number of occurrences of symbol `a` among the first `n` observations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountState {
    pub n: usize,
    pub counts: Vec<u32>,
}

impl CountState {
    pub fn new(counts: Vec<u32>) -> Self {
        let n = counts.iter().map(|&c| c as usize).sum();
        Self { n, counts }
    }

    pub fn root(alphabet: Alphabet) -> Self {
        Self::new(vec![0; alphabet.size()])
    }

    /// State after additionally observing `symbol`.
    pub fn bump(&self, symbol: u8) -> Self {
        let mut counts = self.counts.clone();
        counts[symbol as usize] += 1;
        Self {
            n: self.n + 1,
            counts,
        }
    }
}

/// A point of the dynamic program's state space: symbol counts for i.i.d.
/// models, the full observed history for joint-table models.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    Counts(CountState),
    History(Vec<u8>),
}

/// Which state family a model walks on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateKind {
    Counts,
    History,
}

impl State {
    /// Number of observations the state summarizes.
    pub fn stage(&self) -> usize {
        match self {
            State::Counts(c) => c.n,
            State::History(h) => h.len(),
        }
    }

    pub fn kind(&self) -> StateKind {
        match self {
            State::Counts(_) => StateKind::Counts,
            State::History(_) => StateKind::History,
        }
    }

    /// Compact text key used in artifacts: counts as `"c0,c1,..."`,
    /// histories as digit strings like `"010"`.
    pub fn encode(&self) -> String {
        match self {
            State::Counts(c) => c
                .counts
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
            State::History(h) => h.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn decode(text: &str, kind: StateKind) -> Result<Self> {
        match kind {
            StateKind::Counts => {
                let counts = text
                    .split(',')
                    .map(|part| {
                        part.trim().parse::<u32>().map_err(|_| {
                            Error::InvalidPlan(format!("bad count state key `{text}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(State::Counts(CountState::new(counts)))
            }
            StateKind::History => {
                let history = text
                    .chars()
                    .map(|ch| {
                        ch.to_digit(10)
                            .map(|d| d as u8)
                            .ok_or_else(|| Error::InvalidPlan(format!("bad history key `{text}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(State::History(history))
            }
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.encode())
    }
}

// ---------------------------------------------------------------------------
// I.i.d. model
// ---------------------------------------------------------------------------

/// One component of the sampling-cost mixture: a per-symbol pmf and its
/// weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsnComponent {
    pub pmf: Vec<f64>,
    pub weight: f64,
}

/// Independent, identically distributed observations: hypothesis `i` draws
/// every symbol from `pmfs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidModel {
    alphabet: Alphabet,
    hypotheses: HypothesisSet,
    pmfs: Vec<Vec<f64>>,
    asn_mixture: Vec<AsnComponent>,
}

fn check_pmf(pmf: &[f64], alphabet: Alphabet, what: &str) -> Result<()> {
    if pmf.len() != alphabet.size() {
        return Err(Error::InvalidModel(format!(
            "{what} has {} entries, alphabet has {} symbols",
            pmf.len(),
            alphabet.size()
        )));
    }
    let mut total = 0.0;
    for &p in pmf {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidModel(format!(
                "{what} contains a negative or non-finite entry {p}"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "{what} sums to {total}, expected 1 within {MASS_TOLERANCE:e}"
        )));
    }
    Ok(())
}

impl IidModel {
    pub fn new(
        alphabet: Alphabet,
        hypotheses: HypothesisSet,
        pmfs: Vec<Vec<f64>>,
        asn_mixture: Vec<AsnComponent>,
    ) -> Result<Self> {
        if pmfs.len() != hypotheses.k() {
            return Err(Error::InvalidModel(format!(
                "got {} pmfs for {} hypotheses",
                pmfs.len(),
                hypotheses.k()
            )));
        }
        for (i, pmf) in pmfs.iter().enumerate() {
            check_pmf(pmf, alphabet, &format!("hypothesis pmf {i}"))?;
        }
        if asn_mixture.is_empty() {
            return Err(Error::InvalidModel(
                "sampling-cost mixture must have at least one component".into(),
            ));
        }
        let mut weight_sum = 0.0;
        for (e, comp) in asn_mixture.iter().enumerate() {
            check_pmf(&comp.pmf, alphabet, &format!("cost-mixture pmf {e}"))?;
            if !(comp.weight >= 0.0) || !comp.weight.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "cost-mixture weight {e} is {}, must be nonnegative",
                    comp.weight
                )));
            }
            weight_sum += comp.weight;
        }
        if (weight_sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "cost-mixture weights sum to {weight_sum}, expected 1"
            )));
        }
        Ok(Self {
            alphabet,
            hypotheses,
            pmfs,
            asn_mixture,
        })
    }

    /// Convenience constructor: hypotheses labelled `H1..Hk`, a single
    /// sampling-cost pmf with weight one.
    pub fn simple(pmfs: Vec<Vec<f64>>, cost_pmf: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::new(pmfs.first().map(|p| p.len()).unwrap_or(0))?;
        let hypotheses = HypothesisSet::numbered(pmfs.len())?;
        Self::new(
            alphabet,
            hypotheses,
            pmfs,
            vec![AsnComponent {
                pmf: cost_pmf,
                weight: 1.0,
            }],
        )
    }

    pub fn pmfs(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    pub fn asn_mixture(&self) -> &[AsnComponent] {
        &self.asn_mixture
    }

    fn density_from_counts(pmf: &[f64], counts: &CountState) -> f64 {
        let mut d = 1.0;
        for (a, &c) in counts.counts.iter().enumerate() {
            if c > 0 {
                d *= pmf[a].powi(c as i32);
            }
        }
        d
    }

    /// Smallest strictly positive probability across hypothesis and
    /// cost-mixture pmfs; drives the underflow guard.
    pub fn min_positive_pmf(&self) -> f64 {
        self.pmfs
            .iter()
            .chain(self.asn_mixture.iter().map(|c| &c.pmf))
            .flatten()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(1.0, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Joint-table model
// ---------------------------------------------------------------------------

/// Joint pmf tables for one distribution: `lengths[n-1]` maps every length-n
/// history to its mass. The empty history has mass 1 by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSet {
    lengths: Vec<BTreeMap<Vec<u8>, f64>>,
}

impl TableSet {
    /// Validates masses and the marginalization identity: summing the
    /// length-(n+1) table over its last symbol must reproduce the length-n
    /// table. Absent keys carry zero mass.
    pub fn new(lengths: Vec<BTreeMap<Vec<u8>, f64>>, alphabet: Alphabet, what: &str) -> Result<Self> {
        for (idx, table) in lengths.iter().enumerate() {
            let n = idx + 1;
            let mut total = 0.0;
            for (history, &mass) in table {
                if history.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "{what}: history `{:?}` filed under length {n}",
                        history
                    )));
                }
                if history.iter().any(|&s| s as usize >= alphabet.size()) {
                    return Err(Error::InvalidModel(format!(
                        "{what}: history `{:?}` uses a symbol outside the alphabet",
                        history
                    )));
                }
                if !(mass >= 0.0) || !mass.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "{what}: negative or non-finite mass {mass} at length {n}"
                    )));
                }
                total += mass;
            }
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "{what}: length-{n} table sums to {total}, expected 1"
                )));
            }
        }
        // marginal consistency between consecutive lengths
        for idx in 1..lengths.len() {
            let shorter = &lengths[idx - 1];
            let longer = &lengths[idx];
            let mut marginal: BTreeMap<&[u8], f64> = BTreeMap::new();
            for (history, &mass) in longer {
                *marginal.entry(&history[..history.len() - 1]).or_insert(0.0) += mass;
            }
            for (history, &mass) in shorter {
                let m = marginal.remove(history.as_slice()).unwrap_or(0.0);
                if (m - mass).abs() > MASS_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "{what}: length-{} table does not marginalize to length-{} \
                         at history `{:?}` ({m} vs {mass})",
                        idx + 1,
                        idx,
                        history
                    )));
                }
            }
            for (history, m) in marginal {
                if m.abs() > MASS_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "{what}: mass {m} at length {} has no length-{} ancestor `{:?}`",
                        idx + 1,
                        idx,
                        history
                    )));
                }
            }
        }
        Ok(Self { lengths })
    }

    pub fn horizon(&self) -> usize {
        self.lengths.len()
    }

    pub fn mass(&self, history: &[u8]) -> Result<f64> {
        if history.is_empty() {
            return Ok(1.0);
        }
        let table = self
            .lengths
            .get(history.len() - 1)
            .ok_or(Error::BeyondHorizon {
                stage: history.len(),
                horizon: self.lengths.len(),
            })?;
        Ok(table.get(history).copied().unwrap_or(0.0))
    }
}

/// Dependent process given by explicit joint pmf tables up to a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTableModel {
    alphabet: Alphabet,
    hypotheses: HypothesisSet,
    horizon: usize,
    tables: Vec<TableSet>,
    asn_mixture: Vec<(TableSet, f64)>,
}

impl JointTableModel {
    pub fn new(
        alphabet: Alphabet,
        hypotheses: HypothesisSet,
        tables: Vec<TableSet>,
        asn_mixture: Vec<(TableSet, f64)>,
    ) -> Result<Self> {
        if tables.len() != hypotheses.k() {
            return Err(Error::InvalidModel(format!(
                "got {} table sets for {} hypotheses",
                tables.len(),
                hypotheses.k()
            )));
        }
        let horizon = tables
            .first()
            .map(TableSet::horizon)
            .ok_or_else(|| Error::InvalidModel("no hypothesis tables".into()))?;
        if horizon == 0 {
            return Err(Error::InvalidModel("joint tables need horizon >= 1".into()));
        }
        for t in &tables {
            if t.horizon() != horizon {
                return Err(Error::InvalidModel(
                    "all hypothesis table sets must share one horizon".into(),
                ));
            }
        }
        if asn_mixture.is_empty() {
            return Err(Error::InvalidModel(
                "sampling-cost mixture must have at least one component".into(),
            ));
        }
        let mut weight_sum = 0.0;
        for (t, w) in &asn_mixture {
            if t.horizon() != horizon {
                return Err(Error::InvalidModel(
                    "cost-mixture tables must share the hypothesis horizon".into(),
                ));
            }
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "cost-mixture weight is {w}, must be nonnegative"
                )));
            }
            weight_sum += w;
        }
        if (weight_sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "cost-mixture weights sum to {weight_sum}, expected 1"
            )));
        }
        Ok(Self {
            alphabet,
            hypotheses,
            horizon,
            tables,
            asn_mixture,
        })
    }

    /// Tabulates an i.i.d. model up to `horizon` by multiplying pmf entries
    /// along each history. Gives the dynamic program a second, reduction-free
    /// route to the same quantities.
    pub fn from_iid(model: &IidModel, horizon: usize) -> Result<Self> {
        let alphabet = model.alphabet;
        let tabulate = |pmf: &[f64]| -> Result<TableSet> {
            let mut lengths = Vec::with_capacity(horizon);
            let mut current: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
            current.insert(Vec::new(), 1.0);
            for _ in 0..horizon {
                let mut next = BTreeMap::new();
                for (history, mass) in &current {
                    for a in alphabet.symbols() {
                        let mut h = history.clone();
                        h.push(a);
                        next.insert(h, mass * pmf[a as usize]);
                    }
                }
                lengths.push(next.clone());
                current = next;
            }
            TableSet::new(lengths, alphabet, "tabulated pmf")
        };
        let tables = model
            .pmfs
            .iter()
            .map(|pmf| tabulate(pmf))
            .collect::<Result<Vec<_>>>()?;
        let asn_mixture = model
            .asn_mixture
            .iter()
            .map(|c| Ok((tabulate(&c.pmf)?, c.weight)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, model.hypotheses.clone(), tables, asn_mixture)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

// ---------------------------------------------------------------------------
// Unified process model
// ---------------------------------------------------------------------------

/// A concrete observation process: the hypothesis distributions plus the
/// sampling-cost distribution(s) the design minimizes against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProcessModel {
    Iid(IidModel),
    Joint(JointTableModel),
}

impl ProcessModel {
    pub fn alphabet(&self) -> Alphabet {
        match self {
            ProcessModel::Iid(m) => m.alphabet,
            ProcessModel::Joint(m) => m.alphabet,
        }
    }

    pub fn hypotheses(&self) -> &HypothesisSet {
        match self {
            ProcessModel::Iid(m) => &m.hypotheses,
            ProcessModel::Joint(m) => &m.hypotheses,
        }
    }

    pub fn k(&self) -> usize {
        self.hypotheses().k()
    }

    pub fn state_kind(&self) -> StateKind {
        match self {
            ProcessModel::Iid(_) => StateKind::Counts,
            ProcessModel::Joint(_) => StateKind::History,
        }
    }

    /// Stage cap imposed by the model itself (`None` for i.i.d. models).
    pub fn horizon_limit(&self) -> Option<usize> {
        match self {
            ProcessModel::Iid(_) => None,
            ProcessModel::Joint(m) => Some(m.horizon),
        }
    }

    pub fn root_state(&self) -> State {
        match self {
            ProcessModel::Iid(m) => State::Counts(CountState::root(m.alphabet)),
            ProcessModel::Joint(_) => State::History(Vec::new()),
        }
    }

    fn check_stage(&self, stage: usize) -> Result<()> {
        if let Some(h) = self.horizon_limit() {
            if stage > h {
                return Err(Error::BeyondHorizon { stage, horizon: h });
            }
        }
        Ok(())
    }

    /// Joint density f_i^n of the observations the state summarizes, under
    /// hypothesis `index`. The empty history has density 1.
    pub fn joint_density(&self, index: usize, state: &State) -> Result<f64> {
        if index >= self.k() {
            return Err(Error::UnknownHypothesis {
                index,
                k: self.k(),
            });
        }
        self.check_stage(state.stage())?;
        match (self, state) {
            (ProcessModel::Iid(m), State::Counts(c)) => {
                if c.counts.len() != m.alphabet.size() {
                    return Err(Error::StateMismatch(format!(
                        "count vector has {} entries, alphabet has {}",
                        c.counts.len(),
                        m.alphabet.size()
                    )));
                }
                Ok(IidModel::density_from_counts(&m.pmfs[index], c))
            }
            (ProcessModel::Joint(m), State::History(h)) => {
                if h.iter().any(|&s| s as usize >= m.alphabet.size()) {
                    return Err(Error::SymbolOutOfRange {
                        symbol: *h.iter().find(|&&s| s as usize >= m.alphabet.size()).unwrap(),
                        alphabet: m.alphabet.size(),
                    });
                }
                m.tables[index].mass(h)
            }
            _ => Err(Error::StateMismatch(
                "count state given to a joint-table model or vice versa".into(),
            )),
        }
    }

    /// Sampling-cost density at the state: the weighted sum of component
    /// densities. Equals 1 at the root for any mixture.
    pub fn asn_density(&self, state: &State) -> Result<f64> {
        self.check_stage(state.stage())?;
        match (self, state) {
            (ProcessModel::Iid(m), State::Counts(c)) => Ok(m
                .asn_mixture
                .iter()
                .map(|comp| comp.weight * IidModel::density_from_counts(&comp.pmf, c))
                .sum()),
            (ProcessModel::Joint(m), State::History(h)) => {
                let mut total = 0.0;
                for (tables, weight) in &m.asn_mixture {
                    total += weight * tables.mass(h)?;
                }
                Ok(total)
            }
            _ => Err(Error::StateMismatch(
                "count state given to a joint-table model or vice versa".into(),
            )),
        }
    }

    /// Density of one sampling-cost mixture component at the state.
    pub fn asn_component_density(&self, component: usize, state: &State) -> Result<f64> {
        self.check_stage(state.stage())?;
        match (self, state) {
            (ProcessModel::Iid(m), State::Counts(c)) => {
                Ok(IidModel::density_from_counts(&m.asn_mixture[component].pmf, c))
            }
            (ProcessModel::Joint(m), State::History(h)) => m.asn_mixture[component].0.mass(h),
            _ => Err(Error::StateMismatch(
                "count state given to a joint-table model or vice versa".into(),
            )),
        }
    }

    /// Weights of the sampling-cost mixture components.
    pub fn asn_weights(&self) -> Vec<f64> {
        match self {
            ProcessModel::Iid(m) => m.asn_mixture.iter().map(|c| c.weight).collect(),
            ProcessModel::Joint(m) => m.asn_mixture.iter().map(|(_, w)| *w).collect(),
        }
    }

    /// The one-step extensions of a state, one per symbol.
    pub fn successors(&self, state: &State) -> Vec<(u8, State)> {
        let alphabet = self.alphabet();
        match state {
            State::Counts(c) => alphabet
                .symbols()
                .map(|a| (a, State::Counts(c.bump(a))))
                .collect(),
            State::History(h) => alphabet
                .symbols()
                .map(|a| {
                    let mut next = h.clone();
                    next.push(a);
                    (a, State::History(next))
                })
                .collect(),
        }
    }

    /// All states reachable after exactly `n` observations, in a fixed
    /// deterministic order (ascending by state key).
    pub fn states_at_stage(&self, n: usize) -> Result<Vec<State>> {
        self.check_stage(n)?;
        match self {
            ProcessModel::Iid(m) => {
                let mut out = Vec::new();
                let mut prefix = Vec::with_capacity(m.alphabet.size());
                compositions(n as u32, m.alphabet.size(), &mut prefix, &mut out);
                Ok(out
                    .into_iter()
                    .map(|counts| State::Counts(CountState::new(counts)))
                    .collect())
            }
            ProcessModel::Joint(m) => {
                let mut out = Vec::with_capacity(m.alphabet.size().pow(n as u32));
                let mut history = Vec::with_capacity(n);
                histories(n, m.alphabet.size(), &mut history, &mut out);
                Ok(out.into_iter().map(State::History).collect())
            }
        }
    }

    /// Number of states at stage `n` without materializing them.
    pub fn states_at_stage_count(&self, n: usize) -> u128 {
        match self {
            ProcessModel::Iid(m) => compositions_count(n as u128, m.alphabet.size() as u128),
            ProcessModel::Joint(m) => (m.alphabet.size() as u128).saturating_pow(n as u32),
        }
    }

    /// Number of length-n histories a state stands for: the multinomial
    /// coefficient n!/prod(c_a!) for count states, 1 for explicit histories.
    /// Converts per-history quantities into integrals over mu^n.
    pub fn multiplicity(&self, state: &State) -> f64 {
        match state {
            State::Counts(c) => multinomial(&c.counts),
            State::History(_) => 1.0,
        }
    }

    /// Verdict of the Bayesian-weighting test: every hypothesis distribution
    /// appears in the sampling-cost mixture with strictly positive weight.
    /// Such problems are always truncatable.
    pub fn is_bayesian_mixture(&self) -> bool {
        match self {
            ProcessModel::Iid(m) => m.pmfs.iter().all(|pmf| {
                m.asn_mixture.iter().any(|comp| {
                    comp.weight > 0.0
                        && comp
                            .pmf
                            .iter()
                            .zip(pmf)
                            .all(|(a, b)| (a - b).abs() <= MASS_TOLERANCE)
                })
            }),
            ProcessModel::Joint(m) => m.tables.iter().all(|t| {
                m.asn_mixture
                    .iter()
                    .any(|(ct, w)| *w > 0.0 && ct == t)
            }),
        }
    }

    /// Rejects horizon/model pairs whose densities could drop below
    /// [`MIN_DENSITY`]. Joint-table masses are given directly and never
    /// multiplied, so only i.i.d. models are constrained.
    pub fn check_underflow(&self, horizon: usize) -> Result<()> {
        if let ProcessModel::Iid(m) = self {
            let min_pmf = m.min_positive_pmf();
            if (horizon as f64) * min_pmf.ln().abs() > MIN_DENSITY.ln().abs() {
                return Err(Error::UnderflowGuard {
                    horizon,
                    min_pmf,
                });
            }
        }
        Ok(())
    }

    /// Conditional next-symbol distribution given the current state, under
    /// hypothesis `index`; used by the sampler.
    pub fn conditional_pmf(&self, index: usize, state: &State) -> Result<Vec<f64>> {
        match self {
            ProcessModel::Iid(m) => {
                if index >= m.pmfs.len() {
                    return Err(Error::UnknownHypothesis {
                        index,
                        k: m.pmfs.len(),
                    });
                }
                Ok(m.pmfs[index].clone())
            }
            ProcessModel::Joint(_) => self.conditional_from_masses(|s| self.joint_density(index, s), state),
        }
    }

    /// Conditional next-symbol distribution under one sampling-cost mixture
    /// component.
    pub fn conditional_asn_pmf(&self, component: usize, state: &State) -> Result<Vec<f64>> {
        match self {
            ProcessModel::Iid(m) => Ok(m.asn_mixture[component].pmf.clone()),
            ProcessModel::Joint(_) => {
                self.conditional_from_masses(|s| self.asn_component_density(component, s), state)
            }
        }
    }

    fn conditional_from_masses(
        &self,
        mass: impl Fn(&State) -> Result<f64>,
        state: &State,
    ) -> Result<Vec<f64>> {
        let here = mass(state)?;
        if here <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "cannot condition on zero-probability history `{state}`"
            )));
        }
        self.successors(state)
            .iter()
            .map(|(_, succ)| Ok(mass(succ)? / here))
            .collect()
    }
}

fn compositions(remaining: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        let mut full = prefix.clone();
        full.push(remaining);
        out.push(full);
        return;
    }
    for first in 0..=remaining {
        prefix.push(first);
        compositions(remaining - first, slots - 1, prefix, out);
        prefix.pop();
    }
}

fn compositions_count(n: u128, slots: u128) -> u128 {
    // C(n + slots - 1, slots - 1)
    let mut num = 1u128;
    for i in 0..(slots - 1) {
        num = num.saturating_mul(n + i + 1) / (i + 1);
    }
    num
}

fn histories(depth: usize, alphabet: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == depth {
        out.push(prefix.clone());
        return;
    }
    for a in 0..alphabet {
        prefix.push(a as u8);
        histories(depth, alphabet, prefix, out);
        prefix.pop();
    }
}

/// n!/prod(c_a!) as a double, built from running binomial products to stay
/// accurate at desk-scale n.
pub fn multinomial(counts: &[u32]) -> f64 {
    let mut result = 1.0;
    let mut seen: u32 = 0;
    for &c in counts {
        // multiply by C(seen + c, c)
        for i in 1..=c {
            result = result * f64::from(seen + i) / f64::from(i);
        }
        seen += c;
    }
    result
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ModelDoc {
    #[serde(default)]
    schema: Option<u32>,
    alphabet: usize,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    hypotheses: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    asn: Option<AsnDoc>,
    #[serde(default)]
    joint_tables: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    asn_tables: Option<AsnTablesDoc>,
}

#[derive(Debug, Deserialize)]
struct AsnDoc {
    mixture: Vec<AsnComponent>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AsnTablesDoc {
    Mixture {
        mixture: Vec<AsnTableComponentDoc>,
    },
    Single(BTreeMap<String, f64>),
}

#[derive(Debug, Deserialize)]
struct AsnTableComponentDoc {
    tables: BTreeMap<String, f64>,
    weight: f64,
}

fn parse_flat_tables(
    flat: &BTreeMap<String, f64>,
    alphabet: Alphabet,
    what: &str,
) -> Result<TableSet> {
    let mut horizon = 0usize;
    for key in flat.keys() {
        if key.is_empty() {
            return Err(Error::InvalidModel(format!(
                "{what}: empty history key is implicit and must not appear"
            )));
        }
        horizon = horizon.max(key.len());
    }
    if alphabet.size() > 10 {
        return Err(Error::InvalidModel(
            "digit-string histories support alphabets up to 10 symbols".into(),
        ));
    }
    let mut lengths: Vec<BTreeMap<Vec<u8>, f64>> = vec![BTreeMap::new(); horizon];
    for (key, &mass) in flat {
        let history = key
            .chars()
            .map(|ch| {
                ch.to_digit(10).map(|d| d as u8).ok_or_else(|| {
                    Error::InvalidModel(format!("{what}: bad history key `{key}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lengths[history.len() - 1].insert(history, mass);
    }
    TableSet::new(lengths, alphabet, what)
}

impl ProcessModel {
    /// Parses the model configuration document.
    ///
    /// I.i.d. form:
    /// `{"alphabet": A, "hypotheses": [[p...]...],
    ///   "asn": {"mixture": [{"pmf": [...], "weight": w}, ...]}}`
    ///
    /// Joint-table form: `{"alphabet": A, "joint_tables": {"1": {...}, ...},
    /// "asn_tables": ...}` with histories encoded as digit strings ("010")
    /// and hypothesis keys "1".."k".
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
        if let Some(schema) = doc.schema {
            if schema != 1 {
                return Err(Error::InvalidModel(format!(
                    "unsupported model schema {schema}"
                )));
            }
        }
        let alphabet = Alphabet::new(doc.alphabet)?;
        match (doc.hypotheses, doc.joint_tables) {
            (Some(pmfs), None) => {
                let hypotheses = match doc.labels {
                    Some(labels) => HypothesisSet::new(labels)?,
                    None => HypothesisSet::numbered(pmfs.len())?,
                };
                let asn = doc
                    .asn
                    .ok_or_else(|| Error::InvalidModel("missing `asn` mixture".into()))?;
                Ok(ProcessModel::Iid(IidModel::new(
                    alphabet,
                    hypotheses,
                    pmfs,
                    asn.mixture,
                )?))
            }
            (None, Some(raw_tables)) => {
                let k = raw_tables.len();
                let hypotheses = match doc.labels {
                    Some(labels) => HypothesisSet::new(labels)?,
                    None => HypothesisSet::numbered(k)?,
                };
                let mut tables = Vec::with_capacity(k);
                for i in 1..=k {
                    let flat = raw_tables.get(&i.to_string()).ok_or_else(|| {
                        Error::InvalidModel(format!("joint_tables missing hypothesis key `{i}`"))
                    })?;
                    tables.push(parse_flat_tables(
                        flat,
                        alphabet,
                        &format!("hypothesis {i} tables"),
                    )?);
                }
                let asn_mixture = match doc.asn_tables {
                    Some(AsnTablesDoc::Single(flat)) => {
                        vec![(parse_flat_tables(&flat, alphabet, "cost tables")?, 1.0)]
                    }
                    Some(AsnTablesDoc::Mixture { mixture }) => mixture
                        .iter()
                        .enumerate()
                        .map(|(e, comp)| {
                            Ok((
                                parse_flat_tables(
                                    &comp.tables,
                                    alphabet,
                                    &format!("cost tables {e}"),
                                )?,
                                comp.weight,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?,
                    None => {
                        return Err(Error::InvalidModel(
                            "joint-table models need `asn_tables`".into(),
                        ))
                    }
                };
                Ok(ProcessModel::Joint(JointTableModel::new(
                    alphabet,
                    hypotheses,
                    tables,
                    asn_mixture,
                )?))
            }
            (Some(_), Some(_)) => Err(Error::InvalidModel(
                "give either `hypotheses` or `joint_tables`, not both".into(),
            )),
            (None, None) => Err(Error::InvalidModel(
                "model needs `hypotheses` or `joint_tables`".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_pair() -> ProcessModel {
        ProcessModel::Iid(
            IidModel::simple(vec![vec![0.7, 0.3], vec![0.3, 0.7]], vec![0.5, 0.5]).unwrap(),
        )
    }

    #[test]
    fn empty_history_has_unit_density() {
        let model = bernoulli_pair();
        let root = model.root_state();
        assert_eq!(model.joint_density(0, &root).unwrap(), 1.0);
        assert_eq!(model.joint_density(1, &root).unwrap(), 1.0);
        assert_eq!(model.asn_density(&root).unwrap(), 1.0);
    }

    #[test]
    fn count_density_is_product_of_pmf_powers() {
        let model = ProcessModel::Iid(
            IidModel::simple(vec![vec![0.3, 0.7], vec![0.5, 0.5]], vec![0.5, 0.5]).unwrap(),
        );
        let state = State::Counts(CountState::new(vec![1, 1]));
        let d = model.joint_density(0, &state).unwrap();
        assert!((d - 0.21).abs() < 1e-15);
    }

    #[test]
    fn joint_table_density_is_a_lookup() {
        let flat: BTreeMap<String, f64> = [
            ("0", 0.5),
            ("1", 0.5),
            ("00", 0.25),
            ("01", 0.25),
            ("10", 0.25),
            ("11", 0.25),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let alphabet = Alphabet::new(2).unwrap();
        let tables = parse_flat_tables(&flat, alphabet, "test").unwrap();
        let model = ProcessModel::Joint(
            JointTableModel::new(
                alphabet,
                HypothesisSet::numbered(2).unwrap(),
                vec![tables.clone(), tables.clone()],
                vec![(tables, 1.0)],
            )
            .unwrap(),
        );
        let state = State::History(vec![0, 1]);
        assert_eq!(model.joint_density(0, &state).unwrap(), 0.25);
    }

    #[test]
    fn asn_density_single_component() {
        let model = bernoulli_pair();
        let state = State::Counts(CountState::new(vec![2, 0]));
        assert!((model.asn_density(&state).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn asn_density_mixes_components() {
        let model = ProcessModel::Iid(
            IidModel::new(
                Alphabet::new(2).unwrap(),
                HypothesisSet::numbered(2).unwrap(),
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![
                    AsnComponent {
                        pmf: vec![0.3, 0.7],
                        weight: 0.5,
                    },
                    AsnComponent {
                        pmf: vec![0.7, 0.3],
                        weight: 0.5,
                    },
                ],
            )
            .unwrap(),
        );
        let state = State::Counts(CountState::new(vec![1, 0]));
        assert!((model.asn_density(&state).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn successors_increment_one_count() {
        let model = bernoulli_pair();
        let root = model.root_state();
        let succ = model.successors(&root);
        assert_eq!(succ.len(), 2);
        assert_eq!(succ[0].1, State::Counts(CountState::new(vec![1, 0])));
        assert_eq!(succ[1].1, State::Counts(CountState::new(vec![0, 1])));

        let state = State::Counts(CountState::new(vec![2, 3]));
        let succ = model.successors(&state);
        assert_eq!(succ[0].1, State::Counts(CountState::new(vec![3, 3])));
        assert_eq!(succ[1].1, State::Counts(CountState::new(vec![2, 4])));
    }

    #[test]
    fn three_symbol_successors() {
        let model = ProcessModel::Iid(
            IidModel::simple(
                vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.3, 0.2]],
                vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            )
            .unwrap(),
        );
        let state = State::Counts(CountState::new(vec![1, 0, 0]));
        let succ = model.successors(&state);
        assert_eq!(succ.len(), 3);
        for (a, s) in &succ {
            let State::Counts(c) = s else { panic!() };
            assert_eq!(c.counts[*a as usize], if *a == 0 { 2 } else { 1 });
            assert_eq!(c.n, 2);
        }
    }

    #[test]
    fn stage_enumeration_counts() {
        let model = bernoulli_pair();
        assert_eq!(model.states_at_stage(0).unwrap().len(), 1);
        assert_eq!(model.states_at_stage(3).unwrap().len(), 4);
        assert_eq!(model.states_at_stage_count(3), 4);

        let iid = match &model {
            ProcessModel::Iid(m) => m.clone(),
            _ => unreachable!(),
        };
        let joint = ProcessModel::Joint(JointTableModel::from_iid(&iid, 3).unwrap());
        assert_eq!(joint.states_at_stage(3).unwrap().len(), 8);
    }

    #[test]
    fn count_density_matches_every_concrete_history() {
        let iid = IidModel::simple(vec![vec![0.2, 0.8], vec![0.6, 0.4]], vec![0.5, 0.5]).unwrap();
        let model = ProcessModel::Iid(iid.clone());
        let joint = ProcessModel::Joint(JointTableModel::from_iid(&iid, 6).unwrap());
        for n in 0..=6usize {
            for history in joint.states_at_stage(n).unwrap() {
                let State::History(h) = &history else { panic!() };
                let mut counts = vec![0u32; 2];
                for &s in h {
                    counts[s as usize] += 1;
                }
                let count_state = State::Counts(CountState::new(counts));
                for i in 0..2 {
                    let from_counts = model.joint_density(i, &count_state).unwrap();
                    let from_path: f64 =
                        h.iter().map(|&s| iid.pmfs()[i][s as usize]).product();
                    assert!(
                        (from_counts - from_path).abs() <= 1e-12,
                        "density mismatch at {history}: {from_counts} vs {from_path}"
                    );
                }
            }
        }
    }

    #[test]
    fn densities_integrate_to_one_with_multiplicity() {
        let model = ProcessModel::Iid(
            IidModel::simple(
                vec![vec![0.1, 0.5, 0.4], vec![0.3, 0.3, 0.4]],
                vec![0.2, 0.4, 0.4],
            )
            .unwrap(),
        );
        for n in 0..=12usize {
            for i in 0..2 {
                let total: f64 = model
                    .states_at_stage(n)
                    .unwrap()
                    .iter()
                    .map(|s| model.multiplicity(s) * model.joint_density(i, s).unwrap())
                    .sum();
                assert!(
                    (total - 1.0).abs() <= 1e-10,
                    "stage {n} hypothesis {i}: integral {total}"
                );
            }
        }
    }

    #[test]
    fn marginal_inconsistency_is_rejected() {
        let flat: BTreeMap<String, f64> = [
            ("0", 0.6),
            ("1", 0.4),
            ("00", 0.25),
            ("01", 0.25),
            ("10", 0.25),
            ("11", 0.25),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let alphabet = Alphabet::new(2).unwrap();
        let err = parse_flat_tables(&flat, alphabet, "test").unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn multiplicity_is_the_multinomial_coefficient() {
        assert_eq!(multinomial(&[3, 0]), 1.0);
        assert_eq!(multinomial(&[2, 1]), 3.0);
        assert_eq!(multinomial(&[2, 2, 1]), 30.0);
        assert_eq!(multinomial(&[0, 0]), 1.0);
    }

    #[test]
    fn underflow_guard_trips_on_tiny_probabilities() {
        let model = ProcessModel::Iid(
            IidModel::simple(
                vec![vec![1e-200, 1.0 - 1e-200], vec![0.5, 0.5]],
                vec![0.5, 0.5],
            )
            .unwrap(),
        );
        assert!(model.check_underflow(1).is_ok());
        assert!(matches!(
            model.check_underflow(3),
            Err(Error::UnderflowGuard { .. })
        ));
    }

    #[test]
    fn model_json_round_trips_iid() {
        let text = r#"{
            "schema": 1,
            "alphabet": 2,
            "hypotheses": [[0.7, 0.3], [0.3, 0.7]],
            "asn": {"mixture": [{"pmf": [0.5, 0.5], "weight": 1.0}]}
        }"#;
        let model = ProcessModel::from_json(text).unwrap();
        assert_eq!(model.k(), 2);
        assert_eq!(model.state_kind(), StateKind::Counts);
        let state = State::Counts(CountState::new(vec![1, 1]));
        assert!((model.joint_density(0, &state).unwrap() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn model_json_parses_joint_tables() {
        let text = r#"{
            "alphabet": 2,
            "joint_tables": {
                "1": {"0": 0.5, "1": 0.5, "00": 0.3, "01": 0.2, "10": 0.2, "11": 0.3},
                "2": {"0": 0.4, "1": 0.6, "00": 0.1, "01": 0.3, "10": 0.3, "11": 0.3}
            },
            "asn_tables": {"0": 0.5, "1": 0.5, "00": 0.25, "01": 0.25, "10": 0.25, "11": 0.25}
        }"#;
        let model = ProcessModel::from_json(text).unwrap();
        assert_eq!(model.k(), 2);
        assert_eq!(model.horizon_limit(), Some(2));
        let state = State::History(vec![0, 1]);
        assert_eq!(model.joint_density(0, &state).unwrap(), 0.2);
        assert_eq!(model.joint_density(1, &state).unwrap(), 0.3);
        assert_eq!(model.asn_density(&state).unwrap(), 0.25);
        assert!(matches!(
            model.states_at_stage(3),
            Err(Error::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn bayesian_mixture_detection() {
        let bayes = ProcessModel::Iid(
            IidModel::new(
                Alphabet::new(2).unwrap(),
                HypothesisSet::numbered(2).unwrap(),
                vec![vec![0.7, 0.3], vec![0.3, 0.7]],
                vec![
                    AsnComponent {
                        pmf: vec![0.7, 0.3],
                        weight: 0.5,
                    },
                    AsnComponent {
                        pmf: vec![0.3, 0.7],
                        weight: 0.5,
                    },
                ],
            )
            .unwrap(),
        );
        assert!(bayes.is_bayesian_mixture());
        assert!(!bernoulli_pair().is_bayesian_mixture());
    }

    #[test]
    fn state_keys_round_trip() {
        let counts = State::Counts(CountState::new(vec![3, 0, 2]));
        assert_eq!(counts.encode(), "3,0,2");
        assert_eq!(State::decode("3,0,2", StateKind::Counts).unwrap(), counts);

        let history = State::History(vec![0, 1, 0]);
        assert_eq!(history.encode(), "010");
        assert_eq!(State::decode("010", StateKind::History).unwrap(), history);
        assert_eq!(
            State::decode("", StateKind::History).unwrap(),
            State::History(vec![])
        );
    }
}
