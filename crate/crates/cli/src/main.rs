use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use eventstudy::config::{codes, Format, RunConfig};
use eventstudy::event_study::TStatistic;
use eventstudy::inference::ZeroMethod;
use eventstudy::ingest::fetch::{fetch_market_data, FetchConfig, ReqwestTransport};
use eventstudy::ingest::{write_asset_csv, Panel};
use eventstudy::pipeline::{validate, FailureKind, RunError};
use eventstudy::report::{rerender, run, INTERMEDIATE};
use eventstudy::window::DateRange;

#[derive(Parser)]
#[command(name = "eventstudy", version, about = "Event-study analysis of crypto asset reactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate configuration and inputs; print findings as JSON lines.
    IngestCheck(RunArgs),
    /// Run the full analysis and write all artifacts.
    Analyze(RunArgs),
    /// Re-render tables from a cached intermediate file.
    Report {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to `<output-dir>/intermediate/events.json`.
        #[arg(long)]
        intermediate: Option<PathBuf>,
    },
    /// Download daily market data into an asset CSV.
    Fetch(FetchArgs),
}

fn parse_pair(text: &str) -> Result<[i32; 2], String> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|_| format!("bad day `{a}`"))?,
            b.parse().map_err(|_| format!("bad day `{b}`"))?,
        ]),
        _ => Err(format!("expected `start,end`, got `{text}`")),
    }
}

fn parse_t(text: &str) -> Result<TStatistic, String> {
    match text {
        "plain" => Ok(TStatistic::Plain),
        "standardized" => Ok(TStatistic::Standardized),
        _ => Err(format!("expected plain or standardized, got `{text}`")),
    }
}

fn parse_zeros(text: &str) -> Result<ZeroMethod, String> {
    match text {
        "wilcox" => Ok(ZeroMethod::Wilcox),
        "pratt" => Ok(ZeroMethod::Pratt),
        _ => Err(format!("expected wilcox or pratt, got `{text}`")),
    }
}

/// Flags override values from `--config`, which override defaults.
#[derive(Args)]
struct RunArgs {
    /// TOML file with any subset of the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    sentiment: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    /// e.g. `-150,-10`
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    estimation_window: Option<[i32; 2]>,
    /// e.g. `-7,30`
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    horizon: Option<[i32; 2]>,
    /// Repeatable; replaces the default window list.
    #[arg(long = "window", value_parser = parse_pair, allow_hyphen_values = true)]
    windows: Vec<[i32; 2]>,
    /// Repeatable panel tag: ALL, BINANCE_COINBASE, COINBASE_INSIDER, BITTREX.
    #[arg(long = "panel")]
    panels: Vec<Panel>,
    #[arg(long)]
    min_coverage: Option<usize>,
    #[arg(long, value_parser = parse_t)]
    t_statistic: Option<TStatistic>,
    #[arg(long, value_parser = parse_zeros)]
    zeros: Option<ZeroMethod>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subsets: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    age_divisor: Option<f64>,
    #[arg(long)]
    standardize_illiquidity: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Repeatable: csv, json, markdown.
    #[arg(long = "format")]
    formats: Vec<Format>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .map_err(|m| RunError::new(FailureKind::Validation, codes::CONFIG_INVALID, m))?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        set!(
            data_dir => cfg.data_dir,
            events => cfg.events,
            sentiment => cfg.sentiment,
            benchmark => cfg.benchmark,
            estimation_window => cfg.estimation_window,
            horizon => cfg.horizon,
            min_coverage => cfg.min_coverage,
            t_statistic => cfg.pool.t_statistic,
            zeros => cfg.pool.wilcoxon.zeros,
            seed => cfg.robust.seed,
            subsets => cfg.robust.n_subsets,
            max_iter => cfg.robust.max_iter,
            age_divisor => cfg.scaling.age_divisor,
            output_dir => cfg.output_dir,
        );
        if !self.windows.is_empty() {
            cfg.windows = self.windows.clone();
        }
        if !self.panels.is_empty() {
            cfg.panels = self.panels.clone();
        }
        if !self.formats.is_empty() {
            cfg.formats = self.formats.clone();
        }
        if self.standardize_illiquidity {
            cfg.scaling.standardize_illiquidity = true;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    ticker: String,
    /// Provider coin id, when it differs from the ticker.
    #[arg(long)]
    coin_id: Option<String>,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
    #[arg(long, default_value = "https://api.coingecko.com/api/v3")]
    endpoint: String,
    #[arg(long, env = "EVENTSTUDY_CACHE_DIR", default_value = ".eventstudy-cache")]
    cache_dir: PathBuf,
    /// Output CSV; defaults to `<TICKER>.csv` in the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("{}", err.to_json_line());
    ExitCode::from(err.kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::IngestCheck(args) => {
            let cfg = match args.resolve() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let findings = validate(&cfg);
            for f in &findings {
                println!("{}", serde_json::to_string(f).expect("serializable"));
            }
            return match findings.iter().find(|f| f.is_fatal()) {
                Some(f) if f.code.as_str() < codes::EVENTS_UNREADABLE => ExitCode::from(2),
                Some(_) => ExitCode::from(3),
                None => ExitCode::SUCCESS,
            };
        }
        Command::Analyze(args) => args.resolve().and_then(|cfg| run(&cfg)),
        Command::Report { run: args, intermediate } => args.resolve().and_then(|cfg| {
            let path = intermediate.unwrap_or_else(|| cfg.output_dir.join(INTERMEDIATE));
            rerender(&cfg, &path)
        }),
        Command::Fetch(args) => return fetch(args),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fetch(args: FetchArgs) -> ExitCode {
    let data_err = |m: String| fail(RunError::new(FailureKind::Data, codes::ASSET_UNREADABLE, m));
    let transport = match ReqwestTransport::new() {
        Ok(t) => t,
        Err(m) => return data_err(m),
    };
    let config = FetchConfig::new(&args.cache_dir);
    let id = args.coin_id.as_deref().unwrap_or(&args.ticker);
    let series = match fetch_market_data(id, DateRange::new(args.from, args.to), &args.endpoint, &config, &transport) {
        Ok(mut s) => {
            s.ticker = args.ticker.clone();
            s
        }
        Err(e) => return data_err(e.to_string()),
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", args.ticker)));
    let written = std::fs::File::create(&out).and_then(|f| write_asset_csv(&series, std::io::BufWriter::new(f)));
    match written {
        Ok(()) => {
            println!("{}", serde_json::json!({ "ticker": args.ticker, "rows": series.len(), "path": out }));
            ExitCode::SUCCESS
        }
        Err(e) => data_err(format!("{}: {e}", out.display())),
    }
}
