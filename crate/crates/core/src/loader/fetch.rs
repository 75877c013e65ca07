use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Copies the bytes named by a manifest source into a sink.
pub trait Fetcher {
    fn fetch(&self, source: &str, sink: &mut dyn Write) -> io::Result<u64>;
}

/// `file:` URLs and plain paths. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, Default)]
pub struct LocalFetcher {
    pub base_dir: Option<PathBuf>,
}

impl LocalFetcher {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: Some(base_dir.into()),
        }
    }

    fn resolve(&self, source: &str) -> PathBuf {
        let raw = source
            .strip_prefix("file://")
            .or_else(|| source.strip_prefix("file:"))
            .unwrap_or(source);
        let path = Path::new(raw);
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

impl Fetcher for LocalFetcher {
    fn fetch(&self, source: &str, sink: &mut dyn Write) -> io::Result<u64> {
        io::copy(&mut File::open(self.resolve(source))?, sink)
    }
}

/// `http:` and `https:` GET.
#[derive(Debug, Clone)]
pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::with_timeout(Duration::from_secs(60))
    }
}

impl HttpFetcher {
    pub fn with_timeout(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, source: &str, sink: &mut dyn Write) -> io::Result<u64> {
        let response = self.agent.get(source).call().map_err(io::Error::other)?;
        io::copy(&mut response.into_body().into_reader(), sink)
    }
}

/// Picks a backend from the source's scheme.
#[derive(Debug, Clone, Default)]
pub struct SourceFetcher {
    pub local: LocalFetcher,
    pub http: HttpFetcher,
}

impl SourceFetcher {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            local: LocalFetcher::new(base_dir),
            http: HttpFetcher::default(),
        }
    }
}

impl Fetcher for SourceFetcher {
    fn fetch(&self, source: &str, sink: &mut dyn Write) -> io::Result<u64> {
        let scheme = source.split_once(':').map(|(s, _)| s.to_ascii_lowercase());
        match scheme.as_deref() {
            Some("http") | Some("https") => self.http.fetch(source, sink),
            Some("file") => self.local.fetch(source, sink),
            Some(s) if source.contains("://") => Err(io::Error::new(
                io::ErrorKind::Unsupported,
                format!("unsupported scheme {s:?}"),
            )),
            _ => self.local.fetch(source, sink),
        }
    }
}
