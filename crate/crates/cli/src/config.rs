//! Settings shared by the subcommands. Each value comes from its flag if
//! given, else from the config file, else from the default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Keys accepted in a config file.
pub const KEYS: [&str; 9] = ["epsilon", "t_final", "transient", "tol", "bvp_t", "q", "m", "delta", "threads"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    File,
    Env,
    Default,
}

impl Source {
    fn label(self) -> &'static str {
        match self {
            Source::Flag => "flag",
            Source::File => "file",
            Source::Env => "KWI_THREADS",
            Source::Default => "default",
        }
    }
}

/// Flag values before resolution.
#[derive(Debug, Clone, Default)]
pub struct FlagValues {
    pub epsilon: Option<f64>,
    pub t_final: Option<f64>,
    pub transient: Option<f64>,
    pub tol: Option<f64>,
    pub bvp_t: Option<f64>,
    pub q: Option<f64>,
    pub m: Option<usize>,
    pub delta: Option<f64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epsilon: f64,
    pub t_final: f64,
    /// `None` means a quarter of `t_final`.
    pub transient: Option<f64>,
    pub tol: f64,
    pub bvp_t: f64,
    pub q: f64,
    pub m: usize,
    pub delta: f64,
    pub threads: usize,
    pub sources: BTreeMap<&'static str, Source>,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(format!("line {}: unknown key `{k}` (known: {})", n + 1, KEYS.join(", ")));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text)
}

fn pick<T: std::str::FromStr>(
    key: &'static str,
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    default: T,
    sources: &mut BTreeMap<&'static str, Source>,
) -> Result<T, String> {
    if let Some(v) = flag {
        sources.insert(key, Source::Flag);
        return Ok(v);
    }
    if let Some(s) = file.get(key) {
        sources.insert(key, Source::File);
        return s.parse().map_err(|_| format!("config value for `{key}` is not a valid number: {s}"));
    }
    sources.insert(key, Source::Default);
    Ok(default)
}

fn pick_optional(
    key: &'static str,
    flag: Option<f64>,
    file: &BTreeMap<String, String>,
    sources: &mut BTreeMap<&'static str, Source>,
) -> Result<Option<f64>, String> {
    if flag.is_some() || file.contains_key(key) {
        return pick(key, flag, file, 0.0, sources).map(Some);
    }
    sources.insert(key, Source::Default);
    Ok(None)
}

/// Worker count when neither flag nor file set it.
fn default_threads(env: Option<&str>) -> Result<(usize, Source), String> {
    if let Some(s) = env {
        let n: usize = s.trim().parse().map_err(|_| format!("KWI_THREADS is not a positive integer: {s}"))?;
        return Ok((n, Source::Env));
    }
    Ok((std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1), Source::Default))
}

impl RunConfig {
    pub fn resolve(flags: &FlagValues, file: &BTreeMap<String, String>, env_threads: Option<&str>) -> Result<Self, String> {
        let mut sources = BTreeMap::new();
        let s = &mut sources;
        let epsilon = pick("epsilon", flags.epsilon, file, 0.1, s)?;
        let t_final = pick("t_final", flags.t_final, file, 4000.0, s)?;
        let transient = pick_optional("transient", flags.transient, file, s)?;
        let tol = pick("tol", flags.tol, file, 1e-10, s)?;
        let bvp_t = pick("bvp_t", flags.bvp_t, file, 150.0, s)?;
        let q = pick("q", flags.q, file, 0.5, s)?;
        let m = pick("m", flags.m, file, 20, s)?;
        let delta = pick("delta", flags.delta, file, 1e-4, s)?;
        let threads = if flags.threads.is_some() || file.contains_key("threads") {
            pick("threads", flags.threads, file, 1, s)?
        } else {
            let (n, src) = default_threads(env_threads)?;
            s.insert("threads", src);
            n
        };
        let cfg = RunConfig { epsilon, t_final, transient, tol, bvp_t, q, m, delta, threads, sources };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("epsilon", self.epsilon),
            ("t_final", self.t_final),
            ("tol", self.tol),
            ("bvp_t", self.bvp_t),
            ("delta", self.delta),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("`{k}` must be positive and finite, got {v}"));
            }
        }
        if let Some(t) = self.transient {
            if !(t >= 0.0 && t < self.t_final) {
                return Err(format!("`transient` must lie in [0, t_final), got {t}"));
            }
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(format!("`q` must lie in (0, 1), got {}", self.q));
        }
        if self.m == 0 {
            return Err("`m` must be at least 1".into());
        }
        if self.threads == 0 {
            return Err("`threads` must be at least 1".into());
        }
        Ok(())
    }

    /// The resolved settings as a config file, each line tagged with its source.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let src = |k: &str| self.sources.get(k).copied().unwrap_or(Source::Default).label();
        let transient = match self.transient {
            Some(t) => t.to_string(),
            None => (0.25 * self.t_final).to_string(),
        };
        let rows: [(&str, String); 9] = [
            ("epsilon", self.epsilon.to_string()),
            ("t_final", self.t_final.to_string()),
            ("transient", transient),
            ("tol", self.tol.to_string()),
            ("bvp_t", self.bvp_t.to_string()),
            ("q", self.q.to_string()),
            ("m", self.m.to_string()),
            ("delta", self.delta.to_string()),
            ("threads", self.threads.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v} # {}", src(k));
        }
        out
    }
}
