use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mgtpc::codec::{self, Header};
use mgtpc::metrics::{bd_rate, psnr, read_rd_csv};
use mgtpc::parallel::{threads_from_env, with_threads};
use mgtpc::{init_weights, CodecConfig, Error, Image, Model, Preset, Variant, WeightFile};

const DEFAULT_LAMBDA: f64 = 0.0483;

#[derive(Parser, Debug)]
#[command(name = "mgtpc", version, about = "Learned image codec (PPM in, .mgpc out)")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Compress a PPM image.
    Encode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Refuse weights built for another variant.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Decompress to a PPM image.
    Decode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode and decode in memory and report rate, quality and RD loss.
    Roundtrip {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
    },
    /// PSNR between two PPM images.
    Metrics {
        #[arg(short)]
        a: PathBuf,
        #[arg(short)]
        b: PathBuf,
    },
    /// BD-rate of a test RD curve against an anchor (CSV `bpp,psnr`).
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Write seeded random weights.
    InitWeights {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "full")]
        variant: Variant,
        #[arg(long, default_value = "paper")]
        preset: Preset,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the header of a coded stream.
    Inspect {
        #[arg(short, long)]
        input: PathBuf,
    },
}

fn read(path: &PathBuf) -> mgtpc::Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &PathBuf, bytes: &[u8]) -> mgtpc::Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_model(path: &PathBuf, variant: Option<Variant>) -> mgtpc::Result<Model<f32>> {
    let file = WeightFile::from_bytes(&read(path)?)?;
    let model = Model::from_weights(&file)?;
    if let Some(v) = variant {
        if v != model.config.variant {
            return Err(Error::ConfigMismatch(format!(
                "weights are for variant {} but {} was requested",
                model.config.variant, v
            )));
        }
    }
    Ok(model)
}

fn run(cmd: Cmd, out: &mut impl Write) -> mgtpc::Result<()> {
    match cmd {
        Cmd::Encode {
            input,
            weights,
            output,
            variant,
        } => {
            let model = load_model(&weights, variant)?;
            let image = Image::from_ppm_bytes(&read(&input)?)?;
            let bytes = codec::encode_image(&image, &model)?;
            write(&output, &bytes)?;
            writeln!(out, "bytes={}", bytes.len())?;
            writeln!(out, "bpp={}", mgtpc::metrics::bpp(bytes.len(), image.width(), image.height()))?;
        }
        Cmd::Decode { input, weights, output } => {
            let model = load_model(&weights, None)?;
            let dec = codec::decode_image(&read(&input)?, &model)?;
            write(&output, &ppm_bytes(&dec.image)?)?;
            writeln!(out, "width={}", dec.image.width())?;
            writeln!(out, "height={}", dec.image.height())?;
            writeln!(out, "bpp={}", dec.bpp)?;
        }
        Cmd::Roundtrip { input, weights, lambda } => {
            let model = load_model(&weights, None)?;
            let image = Image::from_ppm_bytes(&read(&input)?)?;
            let r = codec::simulate_rd_point(&image, &model, lambda)?;
            writeln!(out, "bpp={}", r.point.bpp)?;
            writeln!(out, "psnr={}", r.point.psnr)?;
            writeln!(out, "loss={}", r.loss)?;
            writeln!(out, "bytes={}", r.bytes)?;
        }
        Cmd::Metrics { a, b } => {
            let a = Image::from_ppm_bytes(&read(&a)?)?;
            let b = Image::from_ppm_bytes(&read(&b)?)?;
            writeln!(out, "psnr={}", psnr(&a, &b)?)?;
        }
        Cmd::Bdrate { anchor, test } => {
            let a = read_rd_csv(read(&anchor)?.as_slice())?;
            let t = read_rd_csv(read(&test)?.as_slice())?;
            let v = bd_rate(&a, &t)?;
            // avoid printing "-0.00"
            let v = if v.abs() < 0.005 { 0.0 } else { v };
            writeln!(out, "{v:.2}")?;
        }
        Cmd::InitWeights {
            seed,
            variant,
            preset,
            output,
        } => {
            let config = CodecConfig::new(preset, variant);
            let file = init_weights(&config, seed)?;
            let bytes = file.to_bytes();
            write(&output, &bytes)?;
            writeln!(out, "config={}", config.name())?;
            writeln!(out, "config_id={}", config.config_id())?;
            writeln!(out, "entries={}", file.entries.len())?;
            writeln!(out, "bytes={}", bytes.len())?;
        }
        Cmd::Inspect { input } => {
            let bytes = read(&input)?;
            let h = Header::parse(&bytes)?;
            writeln!(out, "magic=MGPC")?;
            writeln!(out, "version={}", codec::STREAM_VERSION)?;
            writeln!(out, "width={}", h.width)?;
            writeln!(out, "height={}", h.height)?;
            writeln!(out, "config_id={}", h.config_id)?;
            if let Ok(c) = CodecConfig::from_id(h.config_id) {
                writeln!(out, "config={}", c.name())?;
            }
            writeln!(out, "z_bytes={}", h.z_bytes)?;
            writeln!(out, "y_bytes={}", h.y_bytes)?;
            writeln!(out, "total_bytes={}", bytes.len())?;
            if bytes.len() < h.total_len() {
                return Err(Error::Truncated("bitstream payload"));
            }
        }
    }
    Ok(())
}

fn ppm_bytes(image: &Image) -> mgtpc::Result<Vec<u8>> {
    let mut buf = Vec::new();
    image.write_ppm(&mut buf)?;
    Ok(buf)
}

/// 1 for misuse (bad arguments, wrong configuration), 2 for anything wrong
/// with the files themselves.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Contract(_) | Error::ConfigMismatch(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = with_threads(threads, || {
        let mut buf = Vec::new();
        run(cli.cmd, &mut buf).map(|_| buf)
    })
    .and_then(|r| r);
    match result {
        Ok(buf) => {
            let _ = std::io::stdout().write_all(&buf);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
