use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use log::{debug, warn};

use super::csv_io::{load_csv, parse_csv, LoadedSeries};
use crate::error::{Error, Result};

const ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchError {
    /// The endpoint does not know the instrument.
    NotFound,
    /// Anything worth retrying.
    Transient(String),
}

/// Minimal GET abstraction so the cache and retry logic can be exercised
/// without a network.
pub trait Transport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, FetchError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent("kfrev/0.1")
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, FetchError> {
        match self.agent.get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_vec()
                .map_err(|e| FetchError::Transient(e.to_string())),
            Err(ureq::Error::StatusCode(404)) => Err(FetchError::NotFound),
            Err(e) => Err(FetchError::Transient(e.to_string())),
        }
    }
}

/// Where to download bars from and where to keep them.
///
/// The URL template understands `{instrument}`, `{start}`/`{end}`
/// (`YYYY-MM-DD`) and `{period1}`/`{period2}` (unix seconds, end exclusive).
#[derive(Debug, Clone)]
pub struct RemoteSource {
    pub url_template: String,
    pub cache_dir: PathBuf,
    pub market: String,
    /// Delay before the second attempt; doubled for each retry after that.
    pub initial_backoff: Duration,
}

impl RemoteSource {
    pub fn cache_path(&self, instrument_id: &str) -> PathBuf {
        self.cache_dir
            .join(&self.market)
            .join(format!("{instrument_id}.csv"))
    }

    pub fn url(&self, instrument_id: &str, start: NaiveDate, end: NaiveDate) -> String {
        let unix = |d: NaiveDate| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        self.url_template
            .replace("{instrument}", instrument_id)
            .replace("{start}", &start.format("%Y-%m-%d").to_string())
            .replace("{end}", &end.format("%Y-%m-%d").to_string())
            .replace("{period1}", &unix(start).to_string())
            .replace("{period2}", &(unix(end) + 86_400).to_string())
    }
}

fn has_data_rows(payload: &[u8]) -> bool {
    String::from_utf8_lossy(payload)
        .lines()
        .skip(1)
        .any(|l| !l.trim().is_empty())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("csv.part");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads an instrument from the cache, downloading it first on a miss.
///
/// Transient failures are retried with exponential backoff, three attempts
/// in total. The payload is validated before it is cached, and the returned
/// series is always the parse of the cached file.
pub fn fetch_remote<T: Transport + ?Sized>(
    instrument_id: &str,
    start: NaiveDate,
    end: NaiveDate,
    source: &RemoteSource,
    transport: &T,
) -> Result<LoadedSeries> {
    let cache = source.cache_path(instrument_id);
    if cache.is_file() {
        debug!("{instrument_id}: cache hit at {}", cache.display());
        return load_csv(&cache, instrument_id);
    }

    let url = source.url(instrument_id, start, end);
    let mut backoff = source.initial_backoff;
    let mut last_error = String::new();
    let mut payload = None;
    for attempt in 1..=ATTEMPTS {
        match transport.get(&url) {
            Ok(bytes) => {
                payload = Some(bytes);
                break;
            }
            Err(FetchError::NotFound) => {
                return Err(Error::EmptyPayload(instrument_id.to_string()));
            }
            Err(FetchError::Transient(msg)) => {
                warn!("{instrument_id}: attempt {attempt}/{ATTEMPTS} failed: {msg}");
                last_error = msg;
                if attempt < ATTEMPTS {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    let payload = payload.ok_or_else(|| Error::Fetch {
        instrument: instrument_id.to_string(),
        attempts: ATTEMPTS,
        message: last_error,
    })?;
    if !has_data_rows(&payload) {
        return Err(Error::EmptyPayload(instrument_id.to_string()));
    }
    // Reject corrupt payloads before they poison the cache.
    parse_csv(payload.as_slice(), instrument_id, &cache)?;
    write_atomic(&cache, &payload)?;
    load_csv(&cache, instrument_id)
}

#[cfg(test)]
mod tests {
    use std::cell::{Cell, RefCell};

    use super::*;

    struct Scripted {
        replies: RefCell<Vec<std::result::Result<Vec<u8>, FetchError>>>,
        calls: Cell<usize>,
    }

    impl Scripted {
        fn new(mut replies: Vec<std::result::Result<Vec<u8>, FetchError>>) -> Self {
            replies.reverse();
            Scripted {
                replies: RefCell::new(replies),
                calls: Cell::new(0),
            }
        }
    }

    impl Transport for Scripted {
        fn get(&self, _url: &str) -> std::result::Result<Vec<u8>, FetchError> {
            self.calls.set(self.calls.get() + 1);
            self.replies
                .borrow_mut()
                .pop()
                .unwrap_or(Err(FetchError::Transient("exhausted".into())))
        }
    }

    const PAYLOAD: &str = "Date,Open,High,Low,Close,Adj Close,Volume\n\
        2024-01-02,10,11,9,10.5,10.5,100\n\
        2024-01-03,10.5,11,10,10.8,10.8,200\n";

    fn source(dir: &Path) -> RemoteSource {
        RemoteSource {
            url_template: "https://example.invalid/{instrument}?p1={period1}&p2={period2}&s={start}"
                .into(),
            cache_dir: dir.to_path_buf(),
            market: "KR".into(),
            initial_backoff: Duration::ZERO,
        }
    }

    fn day(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn url_template_substitution() {
        let src = source(Path::new("/tmp"));
        assert_eq!(
            src.url("ABC", day("2024-01-01"), day("2024-01-02")),
            "https://example.invalid/ABC?p1=1704067200&p2=1704240000&s=2024-01-01"
        );
        assert_eq!(src.cache_path("ABC"), Path::new("/tmp/KR/ABC.csv"));
    }

    #[test]
    fn download_caches_and_reparses_identically() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path());
        let t = Scripted::new(vec![Ok(PAYLOAD.as_bytes().to_vec())]);
        let fetched = fetch_remote("A", day("2024-01-01"), day("2024-01-31"), &src, &t).unwrap();
        assert_eq!(t.calls.get(), 1);
        let cached = std::fs::read(src.cache_path("A")).unwrap();
        assert_eq!(cached, PAYLOAD.as_bytes());
        assert_eq!(fetched, load_csv(&src.cache_path("A"), "A").unwrap());

        let offline = Scripted::new(vec![]);
        let again = fetch_remote("A", day("2024-01-01"), day("2024-01-31"), &src, &offline).unwrap();
        assert_eq!(offline.calls.get(), 0);
        assert_eq!(again, fetched);
    }

    #[test]
    fn retries_then_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let t = Scripted::new(vec![
            Err(FetchError::Transient("503".into())),
            Err(FetchError::Transient("timeout".into())),
            Ok(PAYLOAD.as_bytes().to_vec()),
        ]);
        let got = fetch_remote("A", day("2024-01-01"), day("2024-01-31"), &source(dir.path()), &t);
        assert!(got.is_ok());
        assert_eq!(t.calls.get(), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let dir = tempfile::tempdir().unwrap();
        let t = Scripted::new(vec![]);
        let err = fetch_remote("A", day("2024-01-01"), day("2024-01-31"), &source(dir.path()), &t)
            .unwrap_err();
        assert!(matches!(err, Error::Fetch { attempts: 3, .. }));
        assert_eq!(t.calls.get(), 3);
        assert!(!source(dir.path()).cache_path("A").exists());
    }

    #[test]
    fn unknown_ticker_and_empty_payload() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path());
        let t = Scripted::new(vec![Err(FetchError::NotFound)]);
        let err = fetch_remote("NOPE", day("2024-01-01"), day("2024-01-31"), &src, &t).unwrap_err();
        assert!(matches!(err, Error::EmptyPayload(_)));
        assert_eq!(t.calls.get(), 1);

        let t = Scripted::new(vec![Ok(b"Date,Open,High,Low,Close,Adj Close,Volume\n".to_vec())]);
        let err = fetch_remote("E", day("2024-01-01"), day("2024-01-31"), &src, &t).unwrap_err();
        assert!(matches!(err, Error::EmptyPayload(_)));
        assert!(!src.cache_path("E").exists());
    }
}
