//! One function per subcommand. Each returns the names of the files it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use carbonet_core::bootstrap::{bootstrap_consensus, BootstrapOptions};
use carbonet_core::dbn::{learn_transitions, temporal_query, TransitionOptions, TwoSliceNetwork};
use carbonet_core::discretize::{discretize, DiscretePanel, Thresholds};
use carbonet_core::dot::to_dot;
use carbonet_core::garch::{fit_filter, FilterMode, FilterModel, FilterOptions};
use carbonet_core::graph::cpdag;
use carbonet_core::inference::{evidence_sweep, mpe, EvidenceMap};
use carbonet_core::network::{fit_mle, BayesianNetwork, Metadata};
use carbonet_core::panel::{load_panel, to_log_returns, PanelKind, PanelSchema, TimePanel};
use carbonet_core::report;
use carbonet_core::score::BDeuConfig;
use carbonet_core::search::SearchControls;
use carbonet_core::sensitivity::{edge_strengths, sensitivity_report, tornado};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::config::{parse_shock, read_text, PipelineConfig};
use crate::Failure;

#[derive(Serialize)]
struct InputDigest {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a PipelineConfig,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

/// Output directory plus a record of what went into it.
struct Run<'a> {
    command: &'static str,
    config: &'a PipelineConfig,
    dir: PathBuf,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, config: &'a PipelineConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&config.out).map_err(|e| Failure::input(format!("{}: {e}", config.out.display())))?;
        Ok(Self {
            command,
            config,
            dir: config.out.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Reads an input file and records its digest.
    fn read(&mut self, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> carbonet_core::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(mut self) -> Result<Vec<String>, Failure> {
        let name = format!("manifest_{}.json", self.command);
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.outputs.clone(),
        };
        self.write_json(&name, &manifest)?;
        info!(command = self.command, dir = %self.dir.display(), files = self.outputs.len(), "done");
        Ok(self.outputs)
    }
}

fn load_model(run: &mut Run<'_>, path: &Path) -> Result<BayesianNetwork, Failure> {
    let bytes = run.read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    BayesianNetwork::from_json_str(&text).map_err(|e| Failure::from(e).context(path.display()))
}

fn load_discrete(run: &mut Run<'_>, path: &Path) -> Result<DiscretePanel, Failure> {
    let bytes = run.read(path)?;
    DiscretePanel::read_csv(bytes.as_slice()).map_err(|e| Failure::from(e).context(path.display()))
}

fn filter_options(cfg: &PipelineConfig) -> FilterOptions {
    FilterOptions {
        scale: cfg.scale,
        input_prescaled: cfg.prescaled,
        max_lag: cfg.max_lag,
        p_range: (1, cfg.p_max),
        q_range: (1, cfg.q_max),
        min_len: cfg.min_len,
        ..FilterOptions::default()
    }
}

/// Residual panel aligned on the last common dates. Series with a longer AR lag are shorter,
/// so every series is cut to the shortest one.
fn residual_panel(returns: &TimePanel, models: &[FilterModel]) -> carbonet_core::Result<TimePanel> {
    let len = models.iter().map(|m| m.residuals.len()).min().unwrap_or(0);
    let dates = returns.dates[returns.len() - len..].to_vec();
    let series = models
        .iter()
        .map(|m| m.residuals[m.residuals.len() - len..].to_vec())
        .collect();
    TimePanel::new(dates, returns.names.clone(), series, PanelKind::Residuals)
}

fn write_residuals(out: &mut Vec<u8>, panel: &TimePanel) -> carbonet_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(panel.names.iter().cloned());
    w.write_record(&header)?;
    for (i, d) in panel.dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(panel.series.iter().map(|s| s[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FilterPair {
    instrument: String,
    ar_garch: FilterModel,
    garch: FilterModel,
}

/// Filters and discretizes the input price panel in both modes.
pub fn prep(cfg: &PipelineConfig) -> Result<Vec<String>, Failure> {
    let mut run = Run::new("prep", cfg)?;
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| Failure::input("prep needs --input <prices.csv>"))?;
    let bytes = run.read(&path)?;
    let schema = PanelSchema {
        columns: cfg.columns.clone(),
    };
    let prices = load_panel(bytes.as_slice(), &schema).map_err(|e| Failure::from(e).context(path.display()))?;
    let returns = to_log_returns(&prices).map_err(|e| Failure::from(e).context(path.display()))?;
    let opts = filter_options(cfg);

    let mut panels = BTreeMap::new();
    let mut by_mode: BTreeMap<&str, Vec<FilterModel>> = BTreeMap::new();
    for (key, mode) in [("ar_garch", FilterMode::ArGarch), ("garch", FilterMode::GarchOnly)] {
        let mut models = Vec::with_capacity(returns.names.len());
        for (name, series) in returns.names.iter().zip(&returns.series) {
            info!(instrument = %name, mode = key, "fitting filter");
            let m = fit_filter(name, series, mode, &opts).map_err(|e| Failure::from(e).context(name))?;
            if m.ljung_box.residual_squared > m.ljung_box.raw_squared {
                warn!(instrument = %name, mode = key, "squared residuals are more autocorrelated than the raw series");
            }
            models.push(m);
        }
        let residuals = residual_panel(&returns, &models)?;
        let discrete = discretize(&residuals)?;
        run.write_with(&format!("residuals_{key}.csv"), |b| write_residuals(b, &residuals))?;
        run.write_with(&format!("panel_{key}.csv"), |b| discrete.write_csv(b))?;
        panels.insert(key, discrete.thresholds);
        by_mode.insert(key, models);
    }

    let mut ar = by_mode.remove("ar_garch").unwrap_or_default();
    let mut g = by_mode.remove("garch").unwrap_or_default();
    for m in ar.iter_mut().chain(g.iter_mut()) {
        m.residuals.clear();
    }
    let pairs: Vec<(FilterModel, FilterModel)> = ar.into_iter().zip(g).collect();
    run.write_with("filters.csv", |b| report::write_filter_table(b, &pairs))?;
    let json: Vec<FilterPair> = pairs
        .into_iter()
        .map(|(a, g)| FilterPair {
            instrument: a.instrument.clone(),
            ar_garch: a,
            garch: g,
        })
        .collect();
    run.write_json("filters.json", &json)?;
    let thresholds: &BTreeMap<&str, BTreeMap<String, Thresholds>> = &panels;
    run.write_json("thresholds.json", thresholds)?;
    run.finish()
}

#[derive(Serialize)]
struct CpdagJson {
    nodes: Vec<String>,
    directed: Vec<[String; 2]>,
    undirected: Vec<[String; 2]>,
}

fn strengths_by_index(net: &BayesianNetwork, whole_row: bool) -> Result<BTreeMap<(usize, usize), f64>, Failure> {
    let mut out = BTreeMap::new();
    for e in edge_strengths(net, whole_row)? {
        out.insert((net.require(&e.parent)?, net.require(&e.child)?), e.diameter);
    }
    Ok(out)
}

fn controls(cfg: &PipelineConfig) -> SearchControls {
    SearchControls {
        max_in_degree: cfg.max_in_degree,
        ..SearchControls::default()
    }
}

fn bootstrap_options(cfg: &PipelineConfig) -> BootstrapOptions {
    BootstrapOptions {
        resamples: cfg.resamples,
        threshold: cfg.threshold,
        rule: cfg.threshold_rule,
    }
}

/// Consensus structure and maximum-likelihood CPTs from the AR-GARCH panel.
pub fn learn(cfg: &PipelineConfig) -> Result<Vec<String>, Failure> {
    let mut run = Run::new("learn", cfg)?;
    let path = cfg.input_or("panel_ar_garch.csv");
    let panel = load_discrete(&mut run, &path)?;
    let bdeu = BDeuConfig::new(cfg.ess)?;
    let opts = bootstrap_options(cfg);
    info!(resamples = opts.resamples, rows = panel.len(), "bootstrap structure search");
    let consensus = bootstrap_consensus(&panel.data, &bdeu, &controls(cfg), &opts, cfg.seed)?;
    let metadata = Metadata {
        seed: Some(cfg.seed),
        resamples: Some(opts.resamples),
        threshold: Some(opts.threshold),
        ess: Some(cfg.ess),
        source: path.file_name().map(|n| n.to_string_lossy().into_owned()),
    };
    let net = fit_mle(&consensus.dag, &panel.data, metadata)?;

    let mut model = net.to_json_string()?;
    model.push('\n');
    run.write("model.json", model.as_bytes())?;
    run.write_with("edge_frequencies.csv", |b| report::write_edge_frequencies(b, &consensus.frequencies))?;
    let strengths = strengths_by_index(&net, cfg.whole_row)?;
    run.write("model.dot", to_dot(net.dag(), &strengths).as_bytes())?;
    let pdag = cpdag(net.dag());
    let pair = |&(a, b): &(usize, usize)| [net.name(a).to_string(), net.name(b).to_string()];
    run.write_json(
        "cpdag.json",
        &CpdagJson {
            nodes: net.names().to_vec(),
            directed: pdag.directed.iter().map(pair).collect(),
            undirected: pdag.undirected.iter().map(pair).collect(),
        },
    )?;
    run.finish()
}

/// MPE per target state, evidence sweep, sensitivity and tornado reports.
pub fn analyze(cfg: &PipelineConfig) -> Result<Vec<String>, Failure> {
    let mut run = Run::new("analyze", cfg)?;
    let target = cfg.target()?;
    let net = load_model(&mut run, &cfg.model_or_default())?;
    let t = net.require(target)?;
    let states = net.states(t).to_vec();

    let mut mpes = Vec::with_capacity(states.len());
    for s in &states {
        match mpe(&net, &EvidenceMap::new().with(target, s)) {
            Ok(r) => mpes.push(r),
            Err(carbonet_core::Error::ZeroProbabilityEvidence) => {
                warn!(target, state = %s, "state has zero probability; no MPE column");
            }
            Err(e) => return Err(e.into()),
        }
    }
    run.write_with("mpe.csv", |b| report::write_mpe_table(b, &net, &mpes))?;
    run.write_json("mpe.json", &mpes)?;

    let sweep = evidence_sweep(&net, target, cfg.include_neutral)?;
    run.write_with("evidence_sweep.csv", |b| report::write_sweep(b, &sweep))?;
    run.write_json("evidence_sweep.json", &sweep)?;

    let sens = sensitivity_report(&net, target)?;
    run.write_with("sensitivity.csv", |b| report::write_sensitivity(b, &sens, cfg.mi_percent))?;
    run.write_with("arc_strengths.csv", |b| report::write_arc_strengths(b, &sens))?;
    run.write_json("sensitivity.json", &sens)?;

    let mut tornados = BTreeMap::new();
    for s in &states {
        let entries = tornado(&net, target, s, cfg.top_k, cfg.delta)?;
        run.write_with(&format!("tornado_{s}.csv"), |b| report::write_tornado(b, &entries))?;
        tornados.insert(s.clone(), entries);
    }
    run.write_json("tornado.json", &tornados)?;
    run.finish()
}

fn shocks(cfg: &PipelineConfig, net: &BayesianNetwork, target: &str) -> Result<Vec<EvidenceMap>, Failure> {
    let mut out = vec![EvidenceMap::new()];
    if cfg.shocks.is_empty() {
        for (v, name) in net.names().iter().enumerate() {
            if name == target {
                continue;
            }
            for s in ["High", "Low"] {
                if net.states(v).iter().any(|x| x == s) {
                    out.push(EvidenceMap::new().with(name, s));
                }
            }
        }
    } else {
        for item in &cfg.shocks {
            out.push(EvidenceMap(parse_shock(item)?));
        }
    }
    Ok(out)
}

/// Two-slice model learned on the GARCH-only panel, plus the next-day shock table.
pub fn dbn(cfg: &PipelineConfig) -> Result<Vec<String>, Failure> {
    let mut run = Run::new("dbn", cfg)?;
    let target = cfg.target()?.to_string();
    let model = load_model(&mut run, &cfg.model_or_default())?;
    let path = cfg.input_or("panel_garch.csv");
    let panel = load_discrete(&mut run, &path)?;
    model.require(&target)?;

    let cols = model
        .names()
        .iter()
        .map(|n| panel.data.require(n))
        .collect::<carbonet_core::Result<Vec<_>>>()
        .map_err(|e| Failure::from(e).context(path.display()))?;
    let data = panel.data.select_columns(&cols);
    let static_net = fit_mle(model.dag(), &data, model.metadata.clone())?;
    let shocks = shocks(cfg, &static_net, &target)?;
    for ev in &shocks {
        ev.resolve(&static_net)?;
    }

    let opts = TransitionOptions {
        config: BDeuConfig::new(cfg.ess)?,
        controls: controls(cfg),
        bootstrap: bootstrap_options(cfg),
        single_run: cfg.single_run,
    };
    info!(single_run = opts.single_run, rows = data.n_rows(), "learning transitions");
    let learned = learn_transitions(&data, &static_net, &opts, cfg.seed)?;
    let tsn: &TwoSliceNetwork = &learned.network;

    let mut rows = Vec::with_capacity(shocks.len());
    for ev in &shocks {
        match temporal_query(tsn, ev, &target) {
            Ok(r) => rows.push(r),
            Err(carbonet_core::Error::ZeroProbabilityEvidence) => {
                warn!(evidence = ?ev.0, "shock has zero probability; row skipped");
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut json = tsn.to_json_string()?;
    json.push('\n');
    run.write("two_slice.json", json.as_bytes())?;
    run.write_with("transition_frequencies.csv", |b| report::write_edge_frequencies(b, &learned.frequencies))?;
    run.write_with("temporal_report.csv", |b| report::write_temporal(b, &rows))?;
    run.write_json("temporal_report.json", &rows)?;
    run.finish()
}

/// Loads the model files and blocks serving HTTP.
pub fn serve(cfg: &PipelineConfig) -> Result<(), Failure> {
    use carbonet_service::{AppState, ModelSnapshot};

    let path = cfg.model_or_default();
    let model = BayesianNetwork::from_json_str(&read_text(&path)?).map_err(|e| Failure::from(e).context(path.display()))?;
    let two_slice = match &cfg.two_slice {
        Some(p) => Some(TwoSliceNetwork::from_json_str(&read_text(p)?).map_err(|e| Failure::from(e).context(p.display()))?),
        None => None,
    };
    let snapshot = ModelSnapshot::new(model, two_slice)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| Failure::input(format!("bad address {}:{}: {e}", cfg.host, cfg.port)))?;
    let origin = cfg
        .cors_origin
        .as_deref()
        .map(|o| o.parse().map_err(|_| Failure::input(format!("bad CORS origin `{o}`"))))
        .transpose()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(carbonet_service::serve(addr, Arc::new(AppState::new(Some(snapshot))), origin))?;
    Ok(())
}

/// DOT text for a model with arc diameters as edge widths.
pub fn export_dot(cfg: &PipelineConfig) -> Result<String, Failure> {
    let path = cfg.model_or_default();
    let net = BayesianNetwork::from_json_str(&read_text(&path)?).map_err(|e| Failure::from(e).context(path.display()))?;
    Ok(to_dot(net.dag(), &strengths_by_index(&net, cfg.whole_row)?))
}
