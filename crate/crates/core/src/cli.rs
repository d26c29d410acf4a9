//! Command-line interface.
//!
//! Exit codes: 0 success, 1 I/O or file format error, 2 invalid pipeline,
//! 3 transform failure. Usage errors exit with 2, as clap does.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::image::{ImageKind, Subject};
use crate::nifti;
use crate::rng::Rng;
use crate::sampling::Sampler;
use crate::transforms::{history_as_pipeline, PipelineSpec};

pub const EXIT_IO: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_TRANSFORM: i32 = 3;

/// Key under which the CLI stores its single input image.
pub const IMAGE_KEY: &str = "image";

#[derive(Parser, Debug)]
#[command(name = "voxaug", version, about = "Medical image preprocessing and augmentation")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Apply a pipeline to one volume.
    Apply {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the resolved history as a replayable pipeline.
        #[arg(long)]
        history_out: Option<PathBuf>,
        /// Treat the input as a label map.
        #[arg(long)]
        label: bool,
    },
    /// Print shape, spacing, orientation and intensity range.
    Info { input: PathBuf },
    /// Draw uniform random patches and write each one as a file.
    Sample {
        input: PathBuf,
        /// Patch size as X,Y,Z.
        #[arg(long, value_parser = parse_triple)]
        patch: [usize; 3],
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Run the preview HTTP service.
    Serve {
        #[arg(long, default_value_t = 8642)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn parse_triple(text: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected X,Y,Z, got {text:?}"))
}

struct Failure {
    code: i32,
    error: Error,
}

fn io(error: Error) -> Failure {
    Failure { code: EXIT_IO, error }
}

fn pipeline_error(error: Error) -> Failure {
    let code = match error {
        Error::Io(_) | Error::File { .. } => EXIT_IO,
        _ => EXIT_PIPELINE,
    };
    Failure { code, error }
}

fn transform_error(error: Error) -> Failure {
    Failure {
        code: EXIT_TRANSFORM,
        error,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn apply(
    input: &Path,
    output: &Path,
    pipeline: &Path,
    seed: u64,
    history_out: Option<&Path>,
    label: bool,
    err: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let spec = read_text(pipeline)
        .and_then(|t| PipelineSpec::from_json(&t))
        .map_err(pipeline_error)?;
    let kind = if label { ImageKind::Label } else { ImageKind::Scalar };
    let image = nifti::read_image(input, kind).map_err(io)?;
    let _ = writeln!(err, "seed: {seed}");
    let subject = Subject::new().with_image(IMAGE_KEY, image);
    let out = spec.apply(subject, &mut Rng::new(seed)).map_err(transform_error)?;
    nifti::write_image(out.image(IMAGE_KEY).map_err(io)?, output).map_err(io)?;
    if let Some(path) = history_out {
        let text = history_as_pipeline(&out).to_json_pretty().map_err(transform_error)?;
        write_text(path, &text).map_err(io)?;
    }
    Ok(())
}

fn info(input: &Path, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (header, stats) = nifti::scan_statistics(input).map_err(io)?;
    let shape = header.shape4().map_err(io)?;
    let affine = nifti::affine_from_header(&header).map_err(io)?;
    let footprint = crate::image::memory_footprint(shape, crate::image::ElementType::F32);
    let sp = affine.spacing();
    let _ = writeln!(out, "shape: {shape:?}");
    let _ = writeln!(out, "spacing: [{:.4}, {:.4}, {:.4}]", sp[0], sp[1], sp[2]);
    let _ = writeln!(out, "orientation: {}", affine.orientation_code());
    let _ = writeln!(out, "datatype: {:?}", header.data_type().map_err(io)?);
    let _ = writeln!(out, "min: {}", stats.min);
    let _ = writeln!(out, "max: {}", stats.max);
    let _ = writeln!(out, "mean: {}", stats.mean);
    let _ = writeln!(out, "memory_footprint: {footprint}");
    Ok(())
}

fn sample(
    input: &Path,
    patch_size: [usize; 3],
    count: usize,
    seed: u64,
    outdir: &Path,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let image = nifti::read_image(input, ImageKind::Scalar).map_err(io)?;
    let subject = Subject::new().with_image(IMAGE_KEY, image);
    std::fs::create_dir_all(outdir)
        .map_err(|source| Error::File {
            path: outdir.to_path_buf(),
            source,
        })
        .map_err(io)?;
    let sampler = Sampler::Uniform { patch_size };
    let mut rng = Rng::new(seed);
    for i in 0..count {
        let p = sampler.sample(&subject, 0, &mut rng).map_err(transform_error)?;
        let path = outdir.join(format!("patch_{i:04}.nii.gz"));
        nifti::write_image(p.subject.image(IMAGE_KEY).map_err(io)?, &path).map_err(io)?;
        let _ = writeln!(out, "{} {:?}", path.display(), p.location.origin);
    }
    Ok(())
}

/// Runs the CLI with explicit arguments and output streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PIPELINE } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let result = match &args.command {
        Command::Apply {
            input,
            output,
            pipeline,
            seed,
            history_out,
            label,
        } => apply(input, output, pipeline, *seed, history_out.as_deref(), *label, err),
        Command::Info { input } => info(input, out),
        Command::Sample {
            input,
            patch,
            count,
            seed,
            outdir,
        } => sample(input, *patch, *count, *seed, outdir, out),
        Command::Serve { port, host } => crate::service::serve_blocking(host, *port).map_err(io),
    };
    match result {
        Ok(()) => 0,
        Err(Failure { code, error }) => {
            let _ = writeln!(err, "error: {error}");
            code
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
