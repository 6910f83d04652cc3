//! Flat sectioned text format for experiment specs.
//!
//! ```text
//! # comment
//! [experiment]
//! name = fig3
//! strategies = od, rd, rr
//!
//! [order_p]
//! perm = 1,2 : 0.7
//! perm = 2,1 : 0.3
//! ```
//!
//! Keys are `key = value`; vectors are comma-separated; `perm` lines give
//! one-based decoding ranks per relay followed by the probability.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::channel::{
    ChannelSpec, LinkParams, NetworkConfig, OutageMatrix, PhysicalChannel, SlotTiming, Strategy,
};
use crate::optimizer::{OptimizerConfig, QosSpec};
use crate::orders::{OrderDistribution, Ranking};
use crate::params::{Decoding, SensingErrorParams, StrategyParams, TrafficParams};
use crate::rates::DEFAULT_EPS_STAB;
use crate::sim::RelayMode;

use super::{ExperimentSpec, ParamTemplate, SimSettings, Sweep, SweepVar, Tolerance};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {field}: {message}")]
pub struct ParseError {
    /// One-based line number; 0 for whole-file problems.
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid experiment spec: {}", .violations.join("; "))]
pub struct ValidationError {
    pub violations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

const SECTIONS: &[&str] = &[
    "experiment",
    "network",
    "strategy",
    "order_p",
    "order_s",
    "traffic",
    "qos",
    "sensing",
    "sim",
    "optimizer",
];

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    used: bool,
}

#[derive(Debug)]
struct Section {
    name: String,
    entries: Vec<Entry>,
}

fn tokenize(text: &str) -> Result<Vec<Section>, ParseError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError::new(line, content, "unterminated section header"))?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ParseError::new(line, &name, "unknown section"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(ParseError::new(line, &name, "section appears twice"));
            }
            sections.push(Section {
                name,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ParseError::new(line, content, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let section = sections
            .last_mut()
            .ok_or_else(|| ParseError::new(line, &key, "key outside of any section"))?;
        if key != "perm" && section.entries.iter().any(|e| e.key == key) {
            return Err(ParseError::new(line, &key, "key appears twice"));
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
            used: false,
        });
    }
    if sections.is_empty() {
        return Err(ParseError::new(0, "", "spec is empty"));
    }
    Ok(sections)
}

/// Typed access to the tokenized sections. Every lookup marks the entry as
/// used so leftover keys can be reported.
struct Doc {
    sections: Vec<Section>,
}

impl Doc {
    fn has(&self, section: &str) -> bool {
        self.sections.iter().any(|s| s.name == section)
    }

    fn entry(&mut self, section: &str, key: &str) -> Option<&mut Entry> {
        self.sections
            .iter_mut()
            .find(|s| s.name == section)?
            .entries
            .iter_mut()
            .find(|e| e.key == key)
            .map(|e| {
                e.used = true;
                e
            })
    }

    fn parsed<T>(
        &mut self,
        section: &str,
        key: &str,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ParseError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .map_err(|m| ParseError::new(e.line, &format!("{section}.{key}"), m)),
        }
    }

    fn f64(&mut self, section: &str, key: &str) -> Result<Option<f64>, ParseError> {
        self.parsed(section, key, parse_f64)
    }

    fn u64(&mut self, section: &str, key: &str) -> Result<Option<u64>, ParseError> {
        self.parsed(section, key, |v| {
            parse_f64(v).and_then(|x| {
                if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
                    Ok(x as u64)
                } else {
                    Err(format!("`{v}` is not a non-negative integer"))
                }
            })
        })
    }

    fn vec(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ParseError> {
        self.parsed(section, key, |v| v.split(',').map(parse_f64).collect())
    }

    fn string(&mut self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.value.clone())
    }

    fn require<T>(value: Option<T>, section: &str, key: &str) -> Result<T, ParseError> {
        value.ok_or_else(|| ParseError::new(0, &format!("{section}.{key}"), "missing required key"))
    }

    fn perms(&mut self, section: &str) -> Result<Option<Vec<(Ranking, f64)>>, ParseError> {
        let Some(sec) = self.sections.iter_mut().find(|s| s.name == section) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for e in sec.entries.iter_mut().filter(|e| e.key == "perm") {
            e.used = true;
            let err = |m: String| ParseError::new(e.line, &format!("{section}.perm"), m);
            let (ranks, p) = e
                .value
                .split_once(':')
                .ok_or_else(|| err("expected `r1,r2,... : probability`".into()))?;
            let ranks = ranks
                .split(',')
                .map(|r| {
                    r.trim()
                        .parse::<usize>()
                        .map_err(|_| format!("`{}` is not a rank", r.trim()))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            if ranks.contains(&0) || ranks.iter().any(|&r| r > u8::MAX as usize) {
                return Err(err("ranks are one-based".into()));
            }
            let p = parse_f64(p).map_err(err)?;
            out.push((Ranking::from_one_based(&ranks), p));
        }
        Ok(Some(out))
    }

    fn leftovers(&self) -> Option<ParseError> {
        self.sections.iter().find_map(|s| {
            s.entries
                .iter()
                .find(|e| !e.used)
                .map(|e| ParseError::new(e.line, &format!("{}.{}", s.name, e.key), "unknown key"))
        })
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let v = v.trim();
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| format!("`{v}` is not a number")),
    }
}

/// Parse and validate the text of a spec.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, SpecError> {
    let mut doc = Doc {
        sections: tokenize(text)?,
    };
    let mut violations = Vec::new();

    let name = doc.string("experiment", "name").unwrap_or_else(|| "experiment".into());
    let strategies = match doc.parsed("experiment", "strategies", |v| {
        v.split(',').map(str::parse::<Strategy>).collect::<Result<Vec<_>, _>>()
    })? {
        Some(s) => s,
        None => Strategy::ALL.to_vec(),
    };
    if strategies.is_empty() {
        violations.push("experiment.strategies is empty".into());
    }
    let seed = doc.u64("experiment", "seed")?.unwrap_or(0);
    let output = doc.string("experiment", "output").map(PathBuf::from);
    let sweep = parse_sweep(&mut doc, &mut violations)?;

    let network = parse_network(&mut doc)?;
    if let Err(e) = network.validate() {
        violations.push(format!("network: {e}"));
    }
    let n = network.n_relays();

    let traffic = TrafficParams::new(
        doc.f64("traffic", "lambda_p")?.unwrap_or(0.0),
        doc.f64("traffic", "lambda_s")?.unwrap_or(0.0),
    );
    if let Err(e) = traffic.validate() {
        violations.push(format!("traffic: {e}"));
    }
    let qos = QosSpec::new(
        doc.f64("qos", "d_p_max")?.unwrap_or(f64::INFINITY),
        doc.f64("qos", "d_s_max")?.unwrap_or(f64::INFINITY),
        traffic,
    );
    if !(qos.d_p_max > 0.0 && qos.d_s_max > 0.0) {
        violations.push("qos: delay ceilings must be positive".into());
    }

    let template = ParamTemplate {
        omega: doc.vec("strategy", "omega")?,
        alpha: doc.vec("strategy", "alpha")?,
        f_p: doc.vec("strategy", "f_p")?,
        f_s: doc.vec("strategy", "f_s")?,
        beta: doc.vec("strategy", "beta")?,
        order_p: doc.perms("order_p")?,
        order_s: doc.perms("order_s")?,
    };
    for &s in &strategies {
        match template.params(s, n) {
            Ok(p) => {
                if let Err(e) = p.validate() {
                    violations.extend(e.0.into_iter().map(|m| format!("strategy {s}: {m}")));
                }
            }
            Err(m) => violations.push(format!("strategy {s}: {m}")),
        }
    }

    let sensing = if doc.has("sensing") {
        let get = |doc: &mut Doc, key| -> Result<Vec<f64>, ParseError> {
            Ok(doc.vec("sensing", key)?.unwrap_or_else(|| vec![0.0; n]))
        };
        let se = SensingErrorParams {
            p_md_p: get(&mut doc, "p_md_p")?,
            p_md_s: get(&mut doc, "p_md_s")?,
            p_fa: get(&mut doc, "p_fa")?,
        };
        if let Err(e) = se.validate() {
            violations.push(format!("sensing: {e}"));
        } else if se.n_relays() != n {
            violations.push(format!("sensing: describes {} relays, network has {n}", se.n_relays()));
        }
        Some(se)
    } else {
        None
    };

    let mode = match doc.string("sim", "relays").as_deref() {
        None | Some("queues") => RelayMode::TrueQueues,
        Some("saturated") => RelayMode::SaturatedRelays,
        Some(other) => {
            violations.push(format!("sim.relays: `{other}` is not `queues` or `saturated`"));
            RelayMode::TrueQueues
        }
    };
    let sim = SimSettings {
        slots: doc.u64("sim", "slots")?.unwrap_or(1_000_000),
        warmup: doc.u64("sim", "warmup")?.unwrap_or(0),
        replications: doc.u64("sim", "replications")?.unwrap_or(1) as usize,
        mode,
    };
    if sim.slots == 0 {
        violations.push("sim.slots must be positive".into());
    }
    if sim.replications == 0 {
        violations.push("sim.replications must be positive".into());
    }
    let tolerance = Tolerance {
        half_widths: doc.f64("sim", "tolerance_half_widths")?.unwrap_or(3.0),
        absolute: doc.f64("sim", "tolerance_abs")?.unwrap_or(0.01),
    };

    let defaults = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        budget: doc.u64("optimizer", "budget")?.map_or(defaults.budget, |b| b as usize),
        restarts: doc.u64("optimizer", "restarts")?.map_or(defaults.restarts, |r| r as usize),
        seed,
        eps_stab: doc.f64("optimizer", "eps_stab")?.unwrap_or(DEFAULT_EPS_STAB),
    };
    if optimizer.budget == 0 || optimizer.restarts == 0 {
        violations.push("optimizer: budget and restarts must be positive".into());
    }
    let n_max = doc.u64("optimizer", "n_max")?.map_or(n, |v| v as usize);
    if n_max > n {
        violations.push(format!("optimizer.n_max = {n_max} exceeds the {n} relays described"));
    }

    if let Some(sweep) = &sweep {
        check_sweep(sweep, &network, n, &mut violations);
    }

    if let Some(e) = doc.leftovers() {
        return Err(e.into());
    }
    if !violations.is_empty() {
        return Err(ValidationError { violations }.into());
    }
    Ok(ExperimentSpec {
        name,
        network,
        strategies,
        sweep,
        qos,
        template,
        sensing,
        sim,
        optimizer,
        n_max,
        seed,
        output,
        tolerance,
    })
}

fn parse_sweep(doc: &mut Doc, violations: &mut Vec<String>) -> Result<Option<Sweep>, ParseError> {
    let Some(var) = doc.parsed("experiment", "sweep", |v| v.parse::<SweepVar>())? else {
        return Ok(None);
    };
    if let Some(values) = doc.vec("experiment", "values")? {
        if values.is_empty() {
            violations.push("experiment.values is empty".into());
        }
        return Ok(Some(Sweep { var, values }));
    }
    let from = Doc::require(doc.f64("experiment", "from")?, "experiment", "from")?;
    let to = Doc::require(doc.f64("experiment", "to")?, "experiment", "to")?;
    let step = Doc::require(doc.f64("experiment", "step")?, "experiment", "step")?;
    if !(step > 0.0) || !step.is_finite() {
        violations.push("experiment.step must be positive".into());
        return Ok(Some(Sweep { var, values: vec![] }));
    }
    if !(from <= to) || !to.is_finite() {
        violations.push("experiment sweep range is empty".into());
        return Ok(Some(Sweep { var, values: vec![] }));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    // round away accumulated binary noise so sweep values print cleanly
    let values = (0..count)
        .map(|i| ((from + i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    Ok(Some(Sweep { var, values }))
}

fn check_sweep(sweep: &Sweep, network: &NetworkConfig, n: usize, violations: &mut Vec<String>) {
    for &v in &sweep.values {
        let ok = match sweep.var {
            SweepVar::LambdaP | SweepVar::LambdaS => (0.0..=1.0).contains(&v),
            SweepVar::TauF => v >= 0.0 && matches!(network.channel, ChannelSpec::Physical(_)),
            SweepVar::NRelays => v >= 0.0 && v.fract() == 0.0 && v as usize <= n,
            SweepVar::DpMax | SweepVar::DsMax => v > 0.0,
        };
        if !ok {
            violations.push(format!("sweep value {v} is out of range for {}", sweep.var));
            return;
        }
    }
}

fn parse_network(doc: &mut Doc) -> Result<NetworkConfig, ParseError> {
    fn req(doc: &mut Doc, key: &str) -> Result<f64, ParseError> {
        Doc::require(doc.f64("network", key)?, "network", key)
    }
    let physical = doc.entry("network", "slot").is_some();
    if !physical {
        let vec = |doc: &mut Doc, key| -> Result<Vec<f64>, ParseError> {
            Ok(doc.vec("network", key)?.unwrap_or_default())
        };
        return Ok(NetworkConfig::from_outages(OutageMatrix {
            p_pd: req(doc, "p_pd")?,
            s_sd: req(doc, "s_sd")?,
            p_relay: vec(doc, "p_relay")?,
            s_relay: vec(doc, "s_relay")?,
            relay_pd: vec(doc, "relay_pd")?,
            relay_sd: vec(doc, "relay_sd")?,
        }));
    }
    let slot = req(doc, "slot")?;
    let timing = SlotTiming {
        slot,
        tau: req(doc, "tau")? * slot,
        tau_f: doc.f64("network", "tau_f")?.unwrap_or(0.0) * slot,
        packet_bits: req(doc, "packet_bits")?,
        bandwidth: req(doc, "bandwidth")?,
    };
    let link = |doc: &mut Doc, name: &str| -> Result<LinkParams, ParseError> {
        let g = req(doc, &format!("gamma_{name}"))?;
        let s = req(doc, &format!("sigma_{name}"))?;
        Ok(LinkParams::new(g, s))
    };
    let links = |doc: &mut Doc, name: &str| -> Result<Vec<LinkParams>, ParseError> {
        let g = doc.vec("network", &format!("gamma_{name}"))?.unwrap_or_default();
        let s = doc.vec("network", &format!("sigma_{name}"))?.unwrap_or_default();
        if g.len() != s.len() {
            return Err(ParseError::new(
                0,
                &format!("network.sigma_{name}"),
                format!("{} sigmas for {} gammas", s.len(), g.len()),
            ));
        }
        Ok(g.into_iter().zip(s).map(|(g, s)| LinkParams::new(g, s)).collect())
    };
    Ok(NetworkConfig::from_physical(PhysicalChannel {
        timing,
        p_pd: link(doc, "p_pd")?,
        s_sd: link(doc, "s_sd")?,
        p_relay: links(doc, "p_relay")?,
        s_relay: links(doc, "s_relay")?,
        relay_pd: links(doc, "relay_pd")?,
        relay_sd: links(doc, "relay_sd")?,
    }))
}

impl ParamTemplate {
    /// Parameters for `strategy` over `n` relays. Unset vectors default to a
    /// uniform schedule, `alpha = 1/2`, full acceptance and uniform decoding.
    pub fn params(&self, strategy: Strategy, n: usize) -> Result<StrategyParams, String> {
        let mut p = StrategyParams::uniform(strategy, n);
        let take = |name: &str, src: &Option<Vec<f64>>, dst: &mut Vec<f64>| -> Result<(), String> {
            if let Some(v) = src {
                if v.len() != n {
                    return Err(format!("{name} has {} entries, the network has {n} relays", v.len()));
                }
                dst.clone_from(v);
            }
            Ok(())
        };
        take("omega", &self.omega, &mut p.omega)?;
        take("alpha", &self.alpha, &mut p.alpha)?;
        take("f_p", &self.f_p, &mut p.f_p)?;
        take("f_s", &self.f_s, &mut p.f_s)?;
        match &mut p.decoding {
            Decoding::Ordered { primary, secondary } => {
                for (name, src, dst) in [("order_p", &self.order_p, primary), ("order_s", &self.order_s, secondary)] {
                    if let Some(entries) = src {
                        if let Some((r, _)) = entries.iter().find(|(r, _)| r.len() != n) {
                            return Err(format!("{name}: ranking {r} does not cover {n} relays"));
                        }
                        let mut seen = BTreeSet::new();
                        if let Some((r, _)) = entries.iter().find(|(r, _)| !seen.insert((*r).clone())) {
                            return Err(format!("{name}: ranking {r} listed twice"));
                        }
                        *dst = OrderDistribution::from_entries_unchecked(n, entries.iter().cloned());
                    }
                }
            }
            Decoding::Assigned { beta } => take("beta", &self.beta, beta)?,
            Decoding::RoundRobin => {}
        }
        Ok(p)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepVar::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = SweepVar::ALL.iter().map(|v| v.name()).collect();
                format!("unknown sweep variable `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[network]
p_pd = 0.1
s_sd = 0.2
p_relay = 0.1, 0.02
s_relay = 0.1, 0.1
relay_pd = 0.1, 0.1
relay_sd = 0.1, 0.1
";

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(parse_spec(""), Err(SpecError::Parse(_))));
        assert!(matches!(parse_spec("# only a comment\n"), Err(SpecError::Parse(_))));
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = parse_spec(MINIMAL).unwrap();
        assert_eq!(s.network.n_relays(), 2);
        assert_eq!(s.strategies, Strategy::ALL.to_vec());
        assert!(s.sweep.is_none());
        assert_eq!(s.n_max, 2);
    }

    #[test]
    fn omega_not_summing_to_one_names_omega() {
        let text = format!("{MINIMAL}[strategy]\nomega = 0.45, 0.45\n");
        match parse_spec(&text) {
            Err(SpecError::Validation(v)) => {
                assert!(v.violations.iter().any(|m| m.contains("omega")), "{v}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_and_field() {
        let text = format!("{MINIMAL}[traffic]\nlambda_p = abc\n");
        let Err(SpecError::Parse(e)) = parse_spec(&text) else {
            panic!("expected parse error");
        };
        assert_eq!(e.field, "traffic.lambda_p");
        assert_eq!(e.line, 10);

        let Err(SpecError::Parse(e)) = parse_spec(&format!("{MINIMAL}[traffic]\nlamda_p = 0.1\n")) else {
            panic!("expected parse error");
        };
        assert_eq!(e.field, "traffic.lamda_p");
    }

    #[test]
    fn perm_lines_build_the_order_distribution() {
        let text = format!("{MINIMAL}[experiment]\nstrategies = od\n[order_p]\nperm = 1,2 : 0.7\nperm = 2,1 : 0.3\n");
        let s = parse_spec(&text).unwrap();
        let p = s.template.params(Strategy::OrderedAcceptance, 2).unwrap();
        let Decoding::Ordered { primary, .. } = p.decoding else {
            panic!()
        };
        assert_eq!(primary.probability(&Ranking::from_one_based(&[2, 1])), 0.3);

        let bad = format!("{MINIMAL}[experiment]\nstrategies = od\n[order_p]\nperm = 1,2 : 0.7\n");
        assert!(matches!(parse_spec(&bad), Err(SpecError::Validation(_))));
    }

    #[test]
    fn sweep_range_expands_cleanly() {
        let text = format!("{MINIMAL}[experiment]\nsweep = lambda_p\nfrom = 0.1\nto = 0.5\nstep = 0.1\n");
        let s = parse_spec(&text).unwrap();
        assert_eq!(s.sweep.unwrap().values, vec![0.1, 0.2, 0.3, 0.4, 0.5]);

        let text = format!("{MINIMAL}[experiment]\nsweep = lambda_p\nfrom = 0.5\nto = 0.1\nstep = 0.1\n");
        assert!(matches!(parse_spec(&text), Err(SpecError::Validation(_))));
        let text = format!("{MINIMAL}[experiment]\nsweep = lambda_p\nfrom = 0.1\nto = 0.5\nstep = 0\n");
        assert!(matches!(parse_spec(&text), Err(SpecError::Validation(_))));
    }

    #[test]
    fn tau_f_sweep_needs_physical_network() {
        let text = format!("{MINIMAL}[experiment]\nsweep = tau_f\nvalues = 0, 0.1\n");
        assert!(matches!(parse_spec(&text), Err(SpecError::Validation(_))));
    }
}
