//! `lbpmarkdex` command line.

use crate::descriptor::DescriptorError;
use crate::eval::{check_cutoffs, evaluate_index, to_csv, EvalError};
use crate::image_io::{read_pgm, write_pgm, GrayImage};
use crate::payload::{Birthday, PatientRecord};
use crate::retrieval::{open_stored, relink, Index, RetrievalError, StoredImage};
use crate::watermark;
use clap::{ArgAction, Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const INDEX_ENV: &str = "LBPMARKDEX_INDEX";

#[derive(Debug, Parser)]
#[command(
    name = "lbpmarkdex",
    version,
    about = "Retrieve grayscale images by LBP texture descriptors embedded as reversible watermarks"
)]
struct Cli {
    #[command(flatten)]
    config: CliConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Index file (TSV of image id, locator, class label).
    #[arg(long = "index", global = true, env = INDEX_ENV, default_value = "lbpmarkdex.tsv")]
    pub index_path: PathBuf,
    /// Directory holding the watermarked images.
    #[arg(long = "store", global = true, default_value = "store")]
    pub store_dir: PathBuf,
    /// More diagnostics on standard error (repeat for more).
    #[arg(short, long = "verbose", global = true, action = ArgAction::Count)]
    pub verbosity: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Watermark an image with its descriptor and patient record and store it.
    Index {
        #[arg(long)]
        id: String,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        patient_id: String,
        #[arg(long, default_value = "")]
        name: String,
        /// YYYY-MM-DD
        #[arg(long)]
        birthday: Birthday,
        #[arg(long, default_value = "")]
        diagnostic: String,
        /// Class label, used only by `evaluate`.
        #[arg(long)]
        class: Option<String>,
    },
    /// Rank stored images by descriptor distance to a query image.
    Query {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
    },
    /// List stored images whose embedded patient id matches.
    FindPatient {
        #[arg(long)]
        patient_id: String,
    },
    /// Print the payload embedded in a stored image.
    Extract {
        #[command(flatten)]
        target: Target,
    },
    /// Write the original, unwatermarked image.
    Restore {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the index from the locators embedded in the store.
    Relink,
    /// Leave-one-out precision/recall per class, as CSV.
    Evaluate {
        /// TSV of image id and class; defaults to the index's class column.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated ascending cutoffs.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        cutoffs: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print how many data bits an image can carry.
    Capacity {
        #[arg(long)]
        image: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Indexed image id.
    #[arg(long)]
    id: Option<String>,
    /// Watermarked file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<DescriptorError> for CliError {
    fn from(e: DescriptorError) -> Self {
        CliError::Retrieval(e.into())
    }
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| {
        CliError::Retrieval(RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn load_image(path: &Path) -> Result<GrayImage, CliError> {
    let bytes = fs::read(path).map_err(io_failure(path))?;
    Ok(read_pgm(&bytes).map_err(RetrievalError::from)?)
}

fn open_target(cfg: &CliConfig, target: &Target) -> Result<StoredImage, CliError> {
    Ok(match (&target.id, &target.file) {
        (Some(id), _) => Index::open(&cfg.index_path)?.open_entry(id)?,
        (None, Some(file)) => open_stored(file)?,
        (None, None) => unreachable!("clap enforces the group"),
    })
}

fn parse_labels(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(io_failure(path))?;
    let mut labels = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>().as_slice() {
            [id, class] if !id.is_empty() && !class.is_empty() => {
                labels.insert(id.to_string(), class.to_string());
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected \"image_id<TAB>class\"",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(labels)
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = &cli.config;
    if cfg.index_path == cfg.store_dir {
        return Err(CliError::Usage(
            "--index and --store must be different paths".into(),
        ));
    }
    let verbose = cfg.verbosity.min(2);
    let w = |e: io::Error| CliError::Usage(format!("cannot write output: {e}"));

    match cli.command {
        Command::Index {
            id,
            image,
            patient_id,
            name,
            birthday,
            diagnostic,
            class,
        } => {
            let img = load_image(&image)?;
            let mut index = Index::open(&cfg.index_path)?;
            let patient = PatientRecord {
                patient_id,
                name,
                birthday,
                diagnostic,
            };
            let entry = index.add(&img, &id, &patient, &cfg.store_dir, class.as_deref())?;
            if verbose > 0 {
                let _ = writeln!(
                    err,
                    "capacity {} bits for {}x{}",
                    watermark::capacity(&img),
                    img.width(),
                    img.height()
                );
            }
            writeln!(out, "{}\t{}", entry.image_id, entry.locator).map_err(w)?;
        }
        Command::Query { image, k } => {
            let query = load_image(&image)?;
            let index = Index::open(&cfg.index_path)?;
            let outcome = index.query_by_image(&query, k as usize)?;
            for f in &outcome.failures {
                let _ = writeln!(err, "warning: skipped {}: {}", f.image_id, f.error);
            }
            for (rank, r) in outcome.results.iter().enumerate() {
                writeln!(out, "{}\t{}\t{:.6}", rank + 1, r.image_id, r.distance).map_err(w)?;
            }
        }
        Command::FindPatient { patient_id } => {
            let index = Index::open(&cfg.index_path)?;
            let outcome = index.query_by_patient_id(&patient_id);
            for f in &outcome.failures {
                let _ = writeln!(err, "warning: skipped {}: {}", f.image_id, f.error);
            }
            for hit in &outcome.results {
                let p = &hit.patient;
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    hit.entry.image_id,
                    hit.entry.locator,
                    p.patient_id,
                    p.name,
                    p.birthday,
                    p.diagnostic
                )
                .map_err(w)?;
            }
        }
        Command::Extract { target } => {
            let stored = open_target(cfg, &target)?;
            let p = &stored.payload;
            let bins: Vec<String> = p.descriptor.bins().iter().map(u32::to_string).collect();
            let text = format!(
                "locator\t{}\npatient_id\t{}\nname\t{}\nbirthday\t{}\ndiagnostic\t{}\ndescriptor_total\t{}\ndescriptor\t{}\n",
                p.locator,
                p.patient.patient_id,
                p.patient.name,
                p.patient.birthday,
                p.patient.diagnostic,
                p.descriptor.total(),
                bins.join(",")
            );
            out.write_all(text.as_bytes()).map_err(w)?;
        }
        Command::Restore { target, out: path } => {
            let stored = open_target(cfg, &target)?;
            fs::write(&path, write_pgm(&stored.original)).map_err(io_failure(&path))?;
            if verbose > 0 {
                let _ = writeln!(err, "restored {}", path.display());
            }
        }
        Command::Relink => {
            let (index, report) = relink(&cfg.store_dir, &cfg.index_path)?;
            for id in &report.repaired {
                writeln!(out, "repaired\t{id}").map_err(w)?;
            }
            for (path, e) in &report.unreadable {
                writeln!(out, "unreadable\t{}\t{e}", path.display()).map_err(w)?;
            }
            for (path, why) in &report.conflicting {
                writeln!(out, "conflicting\t{}\t{why}", path.display()).map_err(w)?;
            }
            for id in &report.dangling {
                writeln!(out, "dangling\t{id}").map_err(w)?;
            }
            if verbose > 0 {
                let _ = writeln!(
                    err,
                    "{} entries in {}",
                    index.entries().len(),
                    index.path().display()
                );
            }
        }
        Command::Evaluate {
            labels,
            cutoffs,
            out: path,
        } => {
            check_cutoffs(&cutoffs)?;
            let labels = labels.as_deref().map(parse_labels).transpose()?;
            let index = Index::open(&cfg.index_path)?;
            let evaluation = evaluate_index(&index, labels.as_ref(), &cutoffs)?;
            for f in &evaluation.failures {
                let _ = writeln!(err, "warning: skipped {}: {}", f.image_id, f.error);
            }
            let csv = to_csv(&evaluation.rows);
            match path {
                Some(p) => fs::write(&p, csv).map_err(io_failure(&p))?,
                None => out.write_all(csv.as_bytes()).map_err(w)?,
            }
        }
        Command::Capacity { image } => {
            let img = load_image(&image)?;
            writeln!(out, "{}", watermark::capacity(&img)).map_err(w)?;
        }
    }
    Ok(())
}

/// Runs one invocation, writing to the given streams. Returns the exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["lbpmarkdex"]).0, 2);
        assert_eq!(run_capture(&["lbpmarkdex", "frobnicate"]).0, 2);
        assert_eq!(
            run_capture(&["lbpmarkdex", "query", "--image", "a.pgm", "--k", "0"]).0,
            2
        );
        assert_eq!(
            run_capture(&["lbpmarkdex", "restore", "--out", "x.pgm"]).0,
            2
        );
        let (code, _, err) = run_capture(&[
            "lbpmarkdex",
            "index",
            "--id",
            "a",
            "--image",
            "a.pgm",
            "--patient-id",
            "P",
            "--birthday",
            "03/02/1970",
        ]);
        assert_eq!(code, 2, "{err}");
        let (code, _, err) = run_capture(&[
            "lbpmarkdex",
            "--index",
            "same",
            "--store",
            "same",
            "capacity",
            "--image",
            "x",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("different"));
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_capture(&["lbpmarkdex", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("find-patient"));
    }

    #[test]
    fn domain_error_exits_1_with_name() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.pgm");
        let (code, _, err) = run_capture(&[
            "lbpmarkdex",
            "capacity",
            "--image",
            missing.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("IoFailure"), "{err}");

        let bad = dir.path().join("bad.pgm");
        fs::write(&bad, b"P6\n1 1\n255\n\0\0\0").unwrap();
        let (code, _, err) =
            run_capture(&["lbpmarkdex", "capacity", "--image", bad.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("BadMagic"), "{err}");
    }
}
