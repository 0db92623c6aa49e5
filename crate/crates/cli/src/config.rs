//! Scenario files.
//!
//! A scenario is a set of `[section]` blocks of `key = value` lines. List
//! values are comma separated and may contain `start:stop:step` ranges.
//! `[variant NAME]` blocks rerun the scenario with `section.key` overrides.
//! The grammar is documented in `docs/config.md`.

use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use qkd_tha::intensity_attack::DEFAULT_N_IT;
use qkd_tha::optimizer::{apply_params, SearchBox};
use qkd_tha::{
    ChannelParams, DecoyEstimation, Delta, EpsilonBudget, ExperimentConfig, FiniteSize, FreeParams, Leakage,
    OptimizerSettings, Pipeline, PoissonSource, Protocol, BB84_APPLICATIONS,
};

const SECTIONS: [(&str, &[&str]); 5] = [
    ("scenario", &["n_total", "distances_km", "protocol", "finite_size", "decoy", "eps_s", "eps_c", "f_e", "n_cut"]),
    ("channel", &["p_d", "eta_d", "alpha_db", "phi_mis_deg"]),
    ("protocol", &["mu0", "mu1", "mu2", "p_z", "p_mu0"]),
    ("adversary", &["delta", "delta_gap", "i_max", "kappa", "n_it"]),
    (
        "optimizer",
        &["enabled", "grid_points", "tolerance", "max_passes", "mu0_max", "mu1_fraction", "p_z_range", "p_mu0_range"],
    ),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Section {
    name: String,
    /// Label of a `[variant NAME]` block.
    variant: Option<String>,
    entries: Vec<Entry>,
}

/// A parsed scenario file, before any value is interpreted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    sections: Vec<Section>,
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: unterminated section header"))?
                    .trim();
                doc.open_section(header, line_no)?;
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| anyhow!("line {line_no}: expected `key = value`, got `{line}`"))?;
            let key = key.trim();
            let section = doc
                .sections
                .last_mut()
                .ok_or_else(|| anyhow!("line {line_no}: key `{key}` appears before any section"))?;
            let full = match &section.variant {
                Some(_) => key.to_string(),
                None => format!("{}.{key}", section.name),
            };
            check_key(&full).with_context(|| format!("line {line_no}"))?;
            if section.entries.iter().any(|e| e.key == key) {
                bail!("line {line_no}: duplicate key `{full}`");
            }
            section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line: line_no });
        }
        Ok(doc)
    }

    fn open_section(&mut self, header: &str, line_no: usize) -> Result<()> {
        let (name, variant) = match header.split_once(char::is_whitespace) {
            Some(("variant", label)) => ("variant", Some(label.trim().to_string())),
            _ if header == "variant" => bail!("line {line_no}: variant sections need a name"),
            _ => (header, None),
        };
        if variant.is_none() && !SECTIONS.iter().any(|(s, _)| *s == name) {
            bail!("line {line_no}: unknown section `[{header}]`");
        }
        if self.sections.iter().any(|s| s.name == name && s.variant == variant) {
            bail!("line {line_no}: section `[{header}]` appears twice");
        }
        self.sections.push(Section { name: name.to_string(), variant, entries: Vec::new() });
        Ok(())
    }

    /// Overlays `other` on `self`: its keys replace ours, its variants
    /// replace ours of the same name or are appended.
    pub fn merge(mut self, other: Document) -> Document {
        for sec in other.sections {
            match self.sections.iter_mut().find(|s| s.name == sec.name && s.variant == sec.variant) {
                Some(mine) if sec.variant.is_some() => *mine = sec,
                Some(mine) => {
                    for e in sec.entries {
                        match mine.entries.iter_mut().find(|m| m.key == e.key) {
                            Some(m) => *m = e,
                            None => mine.entries.push(e),
                        }
                    }
                }
                None => self.sections.push(sec),
            }
        }
        self
    }

    fn base(&self) -> Values {
        let mut v = Values::default();
        for s in self.sections.iter().filter(|s| s.variant.is_none()) {
            for e in &s.entries {
                v.set(format!("{}.{}", s.name, e.key), e);
            }
        }
        v
    }

    fn variants(&self) -> impl Iterator<Item = (&str, &[Entry])> {
        self.sections.iter().filter_map(|s| s.variant.as_deref().map(|label| (label, s.entries.as_slice())))
    }
}

fn check_key(full: &str) -> Result<()> {
    let (section, key) =
        full.split_once('.').ok_or_else(|| anyhow!("variant key `{full}` must be written `section.key`"))?;
    match SECTIONS.iter().find(|(s, _)| *s == section) {
        Some((_, keys)) if keys.contains(&key) => Ok(()),
        Some(_) => bail!("unknown key `{full}`"),
        None => bail!("unknown section in key `{full}`"),
    }
}

/// Raw values keyed by `section.key`.
#[derive(Debug, Clone, Default)]
struct Values(Vec<(String, String, usize)>);

impl Values {
    fn set(&mut self, key: String, e: &Entry) {
        match self.0.iter_mut().find(|(k, _, _)| *k == key) {
            Some(slot) => *slot = (key, e.value.clone(), e.line),
            None => self.0.push((key, e.value.clone(), e.line)),
        }
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.0.iter().find(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l))
    }

    fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn get<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => parse(v).with_context(|| format!("`{key}` (line {line})")),
        }
    }

    fn num(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key, default, parse_number)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key, None, |v| parse_list(v).map(Some))
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v: f64 = s.parse().map_err(|_| anyhow!("expected a number, got `{s}`"))?;
    if !v.is_finite() {
        bail!("expected a finite number, got `{s}`");
    }
    Ok(v)
}

fn parse_count(s: &str) -> Result<u64> {
    let v = parse_number(s)?;
    if !(v >= 1.0 && v.fract() == 0.0 && v <= 2f64.powi(63)) {
        bail!("expected a positive integer, got `{}`", s.trim());
    }
    Ok(v as u64)
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => bail!("expected true or false, got `{other}`"),
    }
}

/// Comma-separated numbers and inclusive `start:stop:step` ranges. An
/// empty value is an empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if item.is_empty() {
            if s.trim().is_empty() {
                break;
            }
            bail!("empty list item in `{s}`");
        }
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(parse_number(v)?),
            [a, b, c] => {
                let (start, stop, step) = (parse_number(a)?, parse_number(b)?, parse_number(c)?);
                if !(step > 0.0) || stop < start {
                    bail!("range `{item}` needs start <= stop and a positive step");
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| start + i as f64 * step));
            }
            _ => bail!("expected a number or start:stop:step, got `{item}`"),
        }
    }
    Ok(out)
}

fn parse_words(s: &str) -> Vec<String> {
    s.split(',').map(|w| w.trim().to_string()).filter(|w| !w.is_empty()).collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    match parse_list(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => bail!("expected two numbers `lo, hi`, got `{s}`"),
    }
}

fn parse_protocol(s: &str) -> Result<Protocol> {
    match s {
        "bb84" => Ok(Protocol::Bb84),
        "lt" => Ok(Protocol::LossTolerant),
        other => bail!("expected bb84 or lt, got `{other}`"),
    }
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Bb84 => "bb84",
        Protocol::LossTolerant => "lt",
    }
}

/// One curve of the sweep.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    /// Configuration at distance 0; when the optimizer is off it already
    /// carries the fixed source parameters.
    pub template: ExperimentConfig,
    pub pipeline: Pipeline,
    pub fixed: FreeParams,
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone)]
pub struct Plan {
    pub distances_km: Vec<f64>,
    pub variants: Vec<Variant>,
    /// `None` evaluates the fixed `[protocol]` parameters instead.
    pub optimizer: Option<OptimizerSettings>,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy)]
enum LeakageAxis {
    Delta,
    DeltaGap,
    IMax,
}

impl LeakageAxis {
    fn key(self) -> &'static str {
        match self {
            LeakageAxis::Delta => "delta",
            LeakageAxis::DeltaGap => "delta_gap",
            LeakageAxis::IMax => "i_max",
        }
    }

    fn leakage(self, v: f64) -> Result<Leakage> {
        Ok(match self {
            LeakageAxis::Delta => Leakage::Overlap(Delta::new(v)?),
            LeakageAxis::DeltaGap => Leakage::Overlap(Delta::new(1.0 - v)?),
            LeakageAxis::IMax => Leakage::Coherent { i_max: v },
        })
    }
}

impl Plan {
    pub fn from_document(doc: &Document) -> Result<Plan> {
        let base = doc.base();
        let (distances_km, optimizer) = shared(&base)?;
        let mut variants = expand(&base, None)?;
        for (label, entries) in doc.variants() {
            let mut v = base.clone();
            for e in entries {
                v.set(e.key.clone(), e);
            }
            let (d, o) = shared(&v)?;
            if d != distances_km || o != optimizer {
                bail!("variant `{label}` may not change distances_km or [optimizer] settings");
            }
            variants.extend(expand(&v, Some(label)).with_context(|| format!("variant `{label}`"))?);
        }
        Ok(Plan { distances_km, variants, optimizer })
    }

    pub fn parse(text: &str) -> Result<Plan> {
        Plan::from_document(&Document::parse(text)?)
    }
}

fn shared(v: &Values) -> Result<(Vec<f64>, Option<OptimizerSettings>)> {
    let distances = v.list("scenario.distances_km")?.unwrap_or_default();
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0)) {
        bail!("`scenario.distances_km`: distances must be non-negative, got {d}");
    }
    if !v.get("optimizer.enabled", true, parse_bool)? {
        return Ok((distances, None));
    }
    let d = OptimizerSettings::default();
    let b = SearchBox::default();
    let settings = OptimizerSettings {
        mu2: v.num("protocol.mu2", d.mu2)?,
        search_box: SearchBox {
            mu0_max: v.num("optimizer.mu0_max", b.mu0_max)?,
            mu1_fraction: v.get("optimizer.mu1_fraction", b.mu1_fraction, parse_pair)?,
            p_z: v.get("optimizer.p_z_range", b.p_z, parse_pair)?,
            p_mu0: v.get("optimizer.p_mu0_range", b.p_mu0, parse_pair)?,
            ..b
        },
        grid_points: v.get("optimizer.grid_points", d.grid_points as u64, parse_count)? as usize,
        tolerance: v.num("optimizer.tolerance", d.tolerance)?,
        max_passes: v.get("optimizer.max_passes", d.max_passes as u64, parse_count)? as usize,
        ..d
    };
    settings.validate().context("[optimizer]")?;
    Ok((distances, Some(settings)))
}

fn template(v: &Values, protocol: Protocol, leakage: Leakage) -> Result<(ExperimentConfig, FreeParams)> {
    let ch = ChannelParams::new(
        v.num("channel.p_d", 7.2e-8)?,
        v.num("channel.eta_d", 0.65)?,
        v.num("channel.alpha_db", 0.2)?,
        0.0,
        v.num("channel.phi_mis_deg", 6.0)?.to_radians(),
    )
    .context("[channel]")?;
    let mu2 = v.num("protocol.mu2", 1e-4)?;
    let fixed = FreeParams {
        mu0: v.num("protocol.mu0", 0.5)?,
        mu1: v.num("protocol.mu1", 0.1)?,
        p_z: v.num("protocol.p_z", 0.8)?,
        p_mu0: v.num("protocol.p_mu0", 0.8)?,
    };
    let q = (1.0 - fixed.p_mu0) / 2.0;
    let n_cut = v.get("scenario.n_cut", 12, parse_count)? as usize;
    let source = PoissonSource::new(vec![fixed.mu0, fixed.mu1, mu2], vec![fixed.p_mu0, q, q], n_cut)
        .context("[protocol] intensities")?;
    let n_total = v.get("scenario.n_total", 10_000_000_000, parse_count)?;
    let mut cfg = ExperimentConfig::new(n_total, ch, source, fixed.p_z).context("[protocol]")?;
    cfg.protocol = protocol;
    cfg.leakage = leakage;
    cfg.f_e = v.num("scenario.f_e", 1.2)?;
    cfg.budget =
        EpsilonBudget::standard(v.num("scenario.eps_s", 1e-10)?, v.num("scenario.eps_c", 1e-10)?, BB84_APPLICATIONS)
            .context("`scenario.eps_s` / `scenario.eps_c`")?;
    cfg.finite_size = v.get("scenario.finite_size", FiniteSize::Kato, |s| match s {
        "kato" => Ok(FiniteSize::Kato),
        "asymptotic" => Ok(FiniteSize::Asymptotic),
        other => bail!("expected kato or asymptotic, got `{other}`"),
    })?;
    cfg.decoy = v.get("scenario.decoy", DecoyEstimation::LinearProgram, |s| match s {
        "lp" => Ok(DecoyEstimation::LinearProgram),
        "infinite" => Ok(DecoyEstimation::InfiniteDecoy),
        other => bail!("expected lp or infinite, got `{other}`"),
    })?;
    cfg.validate().context("scenario")?;
    Ok((cfg, fixed))
}

/// Cartesian product of protocols, leakage values and `κ` values.
fn expand(v: &Values, prefix: Option<&str>) -> Result<Vec<Variant>> {
    let protocols = v.get("scenario.protocol", vec![Protocol::Bb84], |s| {
        let words = parse_words(s);
        if words.is_empty() {
            bail!("expected at least one protocol");
        }
        words.iter().map(|w| parse_protocol(w)).collect()
    })?;
    let axes: Vec<LeakageAxis> = [LeakageAxis::Delta, LeakageAxis::DeltaGap, LeakageAxis::IMax]
        .into_iter()
        .filter(|a| v.has(&format!("adversary.{}", a.key())))
        .collect();
    let (axis, values) = match axes.as_slice() {
        [] => (LeakageAxis::DeltaGap, vec![0.0]),
        [a] => {
            let key = format!("adversary.{}", a.key());
            let vals = v.list(&key)?.unwrap_or_default();
            if vals.is_empty() {
                bail!("`{key}` needs at least one value");
            }
            (*a, vals)
        }
        _ => bail!("set only one of `adversary.delta`, `adversary.delta_gap` and `adversary.i_max`"),
    };
    let kappas = v.list("adversary.kappa")?;
    let n_it = v.get("adversary.n_it", DEFAULT_N_IT as u64, parse_count)? as usize;
    if kappas.is_some() && !matches!(axis, LeakageAxis::IMax) {
        bail!("`adversary.kappa` requires leakage given as `adversary.i_max`");
    }
    if kappas.as_ref().is_some_and(Vec::is_empty) {
        bail!("`adversary.kappa` needs at least one value");
    }

    let mut out = Vec::new();
    for &protocol in &protocols {
        for &x in &values {
            let leakage = axis.leakage(x).with_context(|| format!("`adversary.{}` = {x}", axis.key()))?;
            let (template, fixed) = template(v, protocol, leakage)?;
            let mut label = format!("{};{}={x:?}", protocol_name(protocol), axis.key());
            if let Some(p) = prefix {
                label = format!("{p}:{label}");
            }
            let pipelines: Vec<(Pipeline, String)> = match &kappas {
                None => vec![(
                    match protocol {
                        Protocol::Bb84 => Pipeline::Bb84,
                        Protocol::LossTolerant => Pipeline::LossTolerant,
                    },
                    label,
                )],
                Some(ks) => ks
                    .iter()
                    .map(|&kappa| {
                        if !(kappa >= 1.0) {
                            bail!("`adversary.kappa`: values must be at least 1, got {kappa}");
                        }
                        let p = if n_it == 1 {
                            Pipeline::RoundDependent { kappa }
                        } else {
                            Pipeline::WorstCase { kappa, n_it }
                        };
                        Ok((p, format!("{label};kappa={kappa:?};n_it={n_it}")))
                    })
                    .collect::<Result<_>>()?,
            };
            for (pipeline, label) in pipelines {
                let template = apply_params(&template, pipeline, template.source.intensities[2], &fixed)?;
                out.push(Variant { label, template, pipeline, fixed });
            }
        }
    }
    Ok(out)
}
