//! Run configuration: defaults, flat `key = value` config files, and flag
//! overrides. Config files are a TOML-compatible subset — one key per line,
//! `#` comments, no sections.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use blocksampler_core::dmfm::DmfmConfig;
use blocksampler_core::kernel::czinb::CzinbPriors;
use blocksampler_core::kernel::zinb::ZinbPriors;
use blocksampler_core::kernel::zip::ZipPriors;
use blocksampler_core::kernel::FitSchedule;
use blocksampler_core::predict::ModelKind;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub chains: u32,
    pub seed: u64,
    pub init_components: usize,
    pub random_scan: bool,
    /// None = kernel-appropriate default (on for zinb/zip, off for czinb).
    pub tempered_burn_in: Option<bool>,
    pub zinb_priors: ZinbPriors,
    pub zip_priors: ZipPriors,
    pub czinb_priors: CzinbPriors,
    pub dmfm: DmfmConfig,
    pub standardize: bool,
    pub intercept: bool,
    pub replications: usize,
    pub mask_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Zinb,
            iterations: 4000,
            burn_in: 2000,
            thinning: 1,
            chains: 1,
            seed: 1,
            init_components: 10,
            random_scan: false,
            tempered_burn_in: None,
            zinb_priors: ZinbPriors::default(),
            zip_priors: ZipPriors::default(),
            czinb_priors: CzinbPriors::default(),
            dmfm: DmfmConfig::default(),
            standardize: true,
            intercept: false,
            replications: 10,
            mask_fraction: 0.2,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), lineno + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| anyhow::anyhow!("bad value `{value}` for `{key}`"))
        }
        let v = value.trim_matches('"');
        match key {
            "model" => self.model = ModelKind::parse(v)?,
            "iterations" => self.iterations = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "thinning" => self.thinning = num(key, v)?,
            "chains" => self.chains = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "init_components" => self.init_components = num(key, v)?,
            "random_scan" => self.random_scan = num(key, v)?,
            "tempered_burn_in" => self.tempered_burn_in = Some(num(key, v)?),
            "a_p" => self.zinb_priors.a_p = num(key, v)?,
            "b_p" => self.zinb_priors.b_p = num(key, v)?,
            "a_psi" => self.zinb_priors.a_psi = num(key, v)?,
            "b_psi" => self.zinb_priors.b_psi = num(key, v)?,
            "a_r" => {
                self.zinb_priors.a_r = num(key, v)?;
                self.czinb_priors.a_r = self.zinb_priors.a_r;
            }
            "b_r" => {
                self.zinb_priors.b_r = num(key, v)?;
                self.czinb_priors.b_r = self.zinb_priors.b_r;
            }
            "r_proposal_sd" => {
                self.zinb_priors.r_proposal_sd = num(key, v)?;
                self.czinb_priors.r_proposal_sd = self.zinb_priors.r_proposal_sd;
            }
            "a_lambda" => self.zip_priors.a_lambda = num(key, v)?,
            "b_lambda" => self.zip_priors.b_lambda = num(key, v)?,
            "b0" => self.czinb_priors.b0 = num(key, v)?,
            "B0_scale" | "b0_scale" => self.czinb_priors.b0_scale = num(key, v)?,
            "bnb_alpha" => self.dmfm.bnb_alpha = num(key, v)?,
            "bnb_a" => self.dmfm.bnb_a = num(key, v)?,
            "bnb_b" => self.dmfm.bnb_b = num(key, v)?,
            "gamma_proposal_sd" => self.dmfm.gamma_proposal_sd = num(key, v)?,
            "k_max" => self.dmfm.k_max = num(key, v)?,
            "tail_tol" => self.dmfm.tail_tol = num(key, v)?,
            "standardize" => self.standardize = num(key, v)?,
            "intercept" => self.intercept = num(key, v)?,
            "replications" => self.replications = num(key, v)?,
            "mask_fraction" => self.mask_fraction = num(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn schedule(&self) -> FitSchedule {
        let tempered = self
            .tempered_burn_in
            .unwrap_or(!matches!(self.model, ModelKind::Czinb));
        FitSchedule {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            chains: self.chains,
            seed: self.seed,
            tempered_burn_in: tempered,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        self.dmfm.validate()?;
        self.zinb_priors.validate()?;
        self.zip_priors.validate()?;
        self.czinb_priors.validate()?;
        if !(0.0..1.0).contains(&self.mask_fraction) {
            bail!("mask_fraction must lie in [0, 1)");
        }
        if self.replications == 0 {
            bail!("replications must be positive");
        }
        Ok(())
    }

    /// Canonical echo of every setting, used for the config hash and report
    /// headers.
    pub fn echo(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("model", self.model.name().to_string());
        map.insert("iterations", self.iterations.to_string());
        map.insert("burn_in", self.burn_in.to_string());
        map.insert("thinning", self.thinning.to_string());
        map.insert("chains", self.chains.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("init_components", self.init_components.to_string());
        map.insert("random_scan", self.random_scan.to_string());
        map.insert(
            "tempered_burn_in",
            self.tempered_burn_in.map_or("auto".to_string(), |b| b.to_string()),
        );
        map.insert("a_p", self.zinb_priors.a_p.to_string());
        map.insert("b_p", self.zinb_priors.b_p.to_string());
        map.insert("a_psi", self.zinb_priors.a_psi.to_string());
        map.insert("b_psi", self.zinb_priors.b_psi.to_string());
        map.insert("a_r", self.zinb_priors.a_r.to_string());
        map.insert("b_r", self.zinb_priors.b_r.to_string());
        map.insert("r_proposal_sd", self.zinb_priors.r_proposal_sd.to_string());
        map.insert("a_lambda", self.zip_priors.a_lambda.to_string());
        map.insert("b_lambda", self.zip_priors.b_lambda.to_string());
        map.insert("b0", self.czinb_priors.b0.to_string());
        map.insert("b0_scale", self.czinb_priors.b0_scale.to_string());
        map.insert("bnb_alpha", self.dmfm.bnb_alpha.to_string());
        map.insert("bnb_a", self.dmfm.bnb_a.to_string());
        map.insert("bnb_b", self.dmfm.bnb_b.to_string());
        map.insert("gamma_proposal_sd", self.dmfm.gamma_proposal_sd.to_string());
        map.insert("k_max", self.dmfm.k_max.to_string());
        map.insert("tail_tol", self.dmfm.tail_tol.to_string());
        map.insert("standardize", self.standardize.to_string());
        map.insert("intercept", self.intercept.to_string());
        map.insert("replications", self.replications.to_string());
        map.insert("mask_fraction", self.mask_fraction.to_string());
        map.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
