//! Plain-text run configuration: training keys plus dataset paths and the
//! output directory, overridable from the command line with `--set`.

use std::path::{Path, PathBuf};

use dgr_core::{DatasetFormat, DgrError, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Unsplit interaction file; `prepare` splits it at `split_ratio`.
    pub data_file: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub format: DatasetFormat,
    pub split_ratio: f64,
    pub out_dir: PathBuf,
    /// Prebuilt co-occurrence index; built on the fly when absent.
    pub lec_index_file: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data_file: None,
            train_file: None,
            test_file: None,
            format: DatasetFormat::PairList,
            split_ratio: 0.8,
            out_dir: PathBuf::from("out"),
            lec_index_file: None,
        }
    }
}

impl RunConfig {
    /// Apply one `key = value` pair; unknown keys are an error.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), DgrError> {
        if self.train.apply_kv(key, value)? {
            return Ok(());
        }
        match key {
            "data_file" => self.data_file = Some(PathBuf::from(value)),
            "train_file" => self.train_file = Some(PathBuf::from(value)),
            "test_file" => self.test_file = Some(PathBuf::from(value)),
            "format" => self.format = DatasetFormat::parse(value)?,
            "split_ratio" => {
                self.split_ratio = value
                    .parse()
                    .map_err(|_| DgrError::Config(format!("bad split_ratio {value:?}")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "lec_index_file" => self.lec_index_file = Some(PathBuf::from(value)),
            _ => return Err(DgrError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(content: &str, origin: &Path) -> Result<Self, DgrError> {
        let mut config = Self::default();
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(DgrError::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got {raw:?}"),
                });
            };
            config.apply_kv(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, DgrError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| {
            DgrError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::parse_str(&content, path)
    }

    /// Apply `--set key=value` overrides.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), DgrError> {
        for s in sets {
            let Some((key, value)) = s.split_once('=') else {
                return Err(DgrError::Config(format!(
                    "--set expects key=value, got {s:?}"
                )));
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.train.to_kv() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(p) = &self.data_file {
            out.push_str(&format!("data_file = {}\n", p.display()));
        }
        if let Some(p) = &self.train_file {
            out.push_str(&format!("train_file = {}\n", p.display()));
        }
        if let Some(p) = &self.test_file {
            out.push_str(&format!("test_file = {}\n", p.display()));
        }
        out.push_str(&format!("format = {}\n", self.format.name()));
        out.push_str(&format!("split_ratio = {}\n", self.split_ratio));
        out.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        if let Some(p) = &self.lec_index_file {
            out.push_str(&format!("lec_index_file = {}\n", p.display()));
        }
        out
    }
}
