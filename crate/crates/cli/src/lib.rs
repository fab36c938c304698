//! `aog-forge` command line. All work is delegated to the library; this
//! crate only resolves the spec source, maps errors to exit codes and
//! writes artifacts.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aog_forge::analyzer::analyze;
use aog_forge::assembler::{preset, LambdaPolicy, StageSpec, Stem, PRESET_NAMES};
use aog_forge::checks::run_checks;
use aog_forge::error::{ConfigError, IrError};
use aog_forge::executor::{dump_weights, init_weights};
use aog_forge::fsutil::write_atomic;
use aog_forge::grammar::build_block_graph;
use aog_forge::ir::{export_json, graph_to_dot, ir_to_dot, parse_json, Shape, FORMAT_VERSION};
use aog_forge::{assemble_network, Error, NetworkIr, NetworkSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const SEED_ENV: &str = "AOG_FORGE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "aog-forge",
    version,
    about = "Compile AOGNet architectures into shape-annotated IR"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble a network and write its IR (and optionally DOT and weights).
    Generate {
        #[command(flatten)]
        source: SpecSource,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
        #[arg(long, value_name = "PATH")]
        dot: Option<PathBuf>,
        /// Write `<PREFIX>.bin` and `<PREFIX>.index.json`.
        #[arg(long, value_name = "PREFIX")]
        weights: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-export an IR or spec, or a single building block, as JSON or DOT.
    Export {
        #[command(flatten)]
        source: SpecSource,
        /// Export the AND-OR graph of a standalone block with this primitive size.
        #[arg(long, value_name = "N", conflicts_with_all = ["preset", "config", "stages", "ir"])]
        aog: Option<usize>,
        /// Restrict DOT output to the AND-OR graph of one block (0-based).
        #[arg(long, value_name = "INDEX")]
        block: Option<usize>,
        #[arg(long, value_name = "PATH")]
        dot: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Count parameters and FLOPs.
    Analyze {
        #[command(flatten)]
        source: SpecSource,
        /// Input resolution as CxHxW; defaults to the spec's nominal size.
        #[arg(long, value_name = "CxHxW")]
        input: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run structural invariants and a gradient check on a downscaled copy.
    Check {
        #[command(flatten)]
        source: SpecSource,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// List the built-in configurations.
    Presets {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LambdaArg {
    Ratio,
    Learnable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StemArg {
    Imagenet,
    Cifar,
}

#[derive(Debug, Args)]
struct SpecSource {
    #[arg(long)]
    preset: Option<String>,
    /// JSON network spec, or an `.aogir.json` document whose spec is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Existing IR document (export and analyze only).
    #[arg(long, value_name = "PATH")]
    ir: Option<PathBuf>,

    /// Inline spec: comma-separated `NxBLOCKS` per stage, e.g. `2x2,4x1`.
    #[arg(long)]
    stages: Option<String>,
    /// Inline spec: stem width then one width per stage.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    stem: Option<StemArg>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    input_size: Option<usize>,
    /// Inline spec: drop rate per stage.
    #[arg(long, value_delimiter = ',')]
    drop_rates: Option<Vec<f64>>,
    #[arg(long)]
    name: Option<String>,

    #[arg(long, overrides_with = "no_prune")]
    prune: bool,
    #[arg(long)]
    no_prune: bool,
    #[arg(long, overrides_with = "no_laterals")]
    laterals: bool,
    #[arg(long)]
    no_laterals: bool,
    #[arg(long, value_enum)]
    lambda: Option<LambdaArg>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Config(_) => EXIT_CONFIG,
            Error::Ir(IrError::Validation { .. }) | Error::Grammar(_) | Error::Exec(_) => {
                EXIT_INVARIANT
            }
            Error::Ir(_) => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Error::from(e).into()
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(Failure::from)
}

fn parse_stages(text: &str, drops: Option<&[f64]>) -> Result<Vec<StageSpec>, Failure> {
    let stages: Vec<StageSpec> = text
        .split(',')
        .map(|part| {
            let (n, b) = part.trim().split_once('x').ok_or_else(|| {
                Failure::config(format!("stage `{part}` is not of the form NxBLOCKS"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Failure::config(format!("bad stage `{part}`")))
            };
            Ok(StageSpec {
                primitive_size: parse(n)?,
                blocks: parse(b)?,
                drop_rate: 0.0,
            })
        })
        .collect::<Result<_, Failure>>()?;
    match drops {
        None => Ok(stages),
        Some(d) if d.len() == stages.len() => Ok(stages
            .into_iter()
            .zip(d)
            .map(|(s, &drop_rate)| StageSpec { drop_rate, ..s })
            .collect()),
        Some(d) => Err(Failure::config(format!(
            "{} drop rates given for {} stages",
            d.len(),
            stages.len()
        ))),
    }
}

/// Parse a config file: a bare network spec or an IR document.
fn parse_config(bytes: &[u8], path: &Path) -> Result<NetworkSpec, Failure> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| Failure::config(format!("malformed config {}: {e}", path.display())))?;
    if value.get("format").is_some() {
        return Ok(parse_json(bytes).map_err(Error::from)?.spec);
    }
    serde_json::from_value(value)
        .map_err(|e| Failure::config(format!("malformed config {}: {e}", path.display())))
}

enum Resolved {
    Spec(NetworkSpec),
    Ir(NetworkIr),
}

impl SpecSource {
    fn inline_given(&self) -> bool {
        self.stages.is_some()
            || self.channels.is_some()
            || self.stem.is_some()
            || self.classes.is_some()
            || self.input_size.is_some()
            || self.drop_rates.is_some()
    }

    fn resolve(&self, allow_ir: bool) -> Result<Resolved, Failure> {
        let given = [
            self.preset.is_some(),
            self.config.is_some(),
            self.ir.is_some(),
            self.inline_given(),
        ];
        match given.iter().filter(|&&g| g).count() {
            0 => {
                return Err(Failure::config(
                    "no spec source: pass --preset, --config, --ir or inline --stages/--channels",
                ))
            }
            1 => {}
            _ => return Err(Failure::config(
                "exactly one spec source allowed among --preset, --config, --ir and inline flags",
            )),
        }
        if let Some(path) = &self.ir {
            if !allow_ir {
                return Err(Failure::config(
                    "--ir is only accepted by export and analyze",
                ));
            }
            if self.toggles_given() {
                return Err(Failure::config(
                    "toggles cannot be applied to an existing IR",
                ));
            }
            let ir = parse_json(&read(path)?).map_err(Error::from)?;
            return Ok(Resolved::Ir(ir));
        }
        let mut spec = if let Some(name) = &self.preset {
            preset(name)?
        } else if let Some(path) = &self.config {
            parse_config(&read(path)?, path)?
        } else {
            let stages = parse_stages(
                self.stages
                    .as_deref()
                    .ok_or_else(|| Failure::config("inline spec needs --stages"))?,
                self.drop_rates.as_deref(),
            )?;
            let channels = self
                .channels
                .clone()
                .ok_or_else(|| Failure::config("inline spec needs --channels"))?;
            let stem = match self.stem.unwrap_or(StemArg::Imagenet) {
                StemArg::Imagenet => Stem::Imagenet,
                StemArg::Cifar => Stem::Cifar,
            };
            let mut spec = preset("tiny-cifar").expect("built-in preset");
            spec.name = None;
            spec.stages = stages;
            spec.channels = channels;
            spec.stem = stem;
            spec.class_count =
                self.classes
                    .unwrap_or(if stem == Stem::Imagenet { 1000 } else { 10 });
            spec.input_size =
                self.input_size
                    .unwrap_or(if stem == Stem::Imagenet { 224 } else { 32 });
            spec
        };
        if self.name.is_some() {
            spec.name = self.name.clone();
        }
        if self.prune || self.no_prune {
            spec.prune = self.prune;
        }
        if self.laterals || self.no_laterals {
            spec.laterals = self.laterals;
        }
        if let Some(l) = self.lambda {
            spec.lambda_policy = match l {
                LambdaArg::Ratio => LambdaPolicy::PathRatio,
                LambdaArg::Learnable => LambdaPolicy::Learnable,
            };
        }
        spec.validate()?;
        Ok(Resolved::Spec(spec))
    }

    fn toggles_given(&self) -> bool {
        self.prune
            || self.no_prune
            || self.laterals
            || self.no_laterals
            || self.lambda.is_some()
            || self.name.is_some()
    }

    fn spec(&self) -> Result<NetworkSpec, Failure> {
        match self.resolve(false)? {
            Resolved::Spec(s) => Ok(s),
            Resolved::Ir(_) => unreachable!("IR sources are rejected"),
        }
    }

    fn ir(&self) -> Result<NetworkIr, Failure> {
        match self.resolve(true)? {
            Resolved::Spec(s) => Ok(assemble_network(&s)?),
            Resolved::Ir(ir) => Ok(ir),
        }
    }
}

fn parse_shape(text: &str) -> Result<Shape, Failure> {
    let dims: Vec<usize> = text
        .split('x')
        .map(|d| {
            d.trim()
                .parse()
                .map_err(|_| Failure::config(format!("bad input shape `{text}`")))
        })
        .collect::<Result<_, _>>()?;
    match dims[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Shape::new(c, h, w)),
        _ => Err(Failure::config(format!(
            "input shape `{text}` must be CxHxW with positive sizes"
        ))),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure {
        code: EXIT_IO,
        message: format!("cannot write output: {e}"),
    };
    match cli.command {
        Command::Generate {
            source,
            output,
            dot,
            weights,
            seed,
        } => {
            let ir = assemble_network(&source.spec()?)?;
            if let Some(prefix) = weights {
                let store = init_weights(&ir, resolve_seed(seed)?);
                let (blob, index) = dump_weights(&store);
                write(&with_suffix(&prefix, ".bin"), &blob)?;
                write(&with_suffix(&prefix, ".index.json"), &index)?;
            }
            write(&output, &export_json(&ir))?;
            if let Some(path) = dot {
                write(&path, ir_to_dot(&ir).as_bytes())?;
            }
            writeln!(
                out,
                "wrote {} ({} operators, {FORMAT_VERSION})",
                output.display(),
                ir.operators.len()
            )
            .map_err(io)?;
        }
        Command::Export {
            source,
            aog,
            block,
            dot,
            json,
        } => {
            if dot.is_none() && json.is_none() {
                return Err(Failure::config("export needs --dot and/or --json"));
            }
            if let Some(n) = aog {
                if json.is_some() {
                    return Err(Failure::config("--aog exports DOT only"));
                }
                let prune = !source.no_prune;
                let laterals = !source.no_laterals;
                let g = build_block_graph(n, prune, laterals.then(Default::default))
                    .map_err(Error::from)?;
                write(
                    dot.as_deref().expect("checked above"),
                    graph_to_dot(&g).as_bytes(),
                )?;
                return Ok(EXIT_OK);
            }
            let ir = source.ir()?;
            if let Some(path) = json {
                write(&path, &export_json(&ir))?;
            }
            if let Some(path) = dot {
                let text = match block {
                    Some(b) => {
                        let info = ir.blocks.get(b).ok_or_else(|| {
                            Failure::config(format!(
                                "block {b} out of range (network has {})",
                                ir.blocks.len()
                            ))
                        })?;
                        graph_to_dot(&info.graph)
                    }
                    None => ir_to_dot(&ir),
                };
                write(&path, text.as_bytes())?;
            }
        }
        Command::Analyze {
            source,
            input,
            json,
        } => {
            let ir = source.ir()?;
            let shape = match input {
                Some(text) => parse_shape(&text)?,
                None => ir.input_shape(),
            };
            let report =
                analyze(&ir, shape).map_err(|e| Failure::config(format!("input {shape}: {e}")))?;
            if json {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                writeln!(out, "{text}").map_err(io)?;
            } else {
                write!(out, "{}", report.render_table()).map_err(io)?;
            }
        }
        Command::Check { source, seed, json } => {
            let spec = source.spec()?;
            let report = run_checks(&spec, resolve_seed(seed)?);
            if json {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                writeln!(out, "{text}").map_err(io)?;
            } else {
                for c in &report.checks {
                    writeln!(
                        out,
                        "{} {:<10} {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.detail
                    )
                    .map_err(io)?;
                }
            }
            if !report.passed() {
                return Ok(EXIT_INVARIANT);
            }
        }
        Command::Presets { json } => {
            let specs: Vec<NetworkSpec> = PRESET_NAMES
                .iter()
                .map(|n| preset(n).expect("built-in preset"))
                .collect();
            if json {
                let text = serde_json::to_string_pretty(&specs).expect("specs serialize");
                writeln!(out, "{text}").map_err(io)?;
            } else {
                for s in &specs {
                    let stages: Vec<String> = s
                        .stages
                        .iter()
                        .map(|st| format!("{}x{}", st.primitive_size, st.blocks))
                        .collect();
                    let channels: Vec<String> = s.channels.iter().map(usize::to_string).collect();
                    writeln!(
                        out,
                        "{:<12} stages {:<16} channels {:<24} input {}",
                        s.name.as_deref().unwrap_or(""),
                        stages.join(","),
                        channels.join(","),
                        s.input_size
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

/// Run with explicit output streams; returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(
        args,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}
