//! File plumbing shared by commands: output directories, manifests, config
//! snapshots and 8-bit image files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use jemlab::Tensor;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_SNAPSHOT: &str = "config.txt";

/// The configured output directory, created if needed.
pub fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.out.clone().ok_or_else(|| CliError::config("no output directory; pass --out or set `out`"))?;
    ensure_dir(&dir)?;
    Ok(dir)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_config_snapshot(dir: &Path, cfg: &RunConfig) -> CliResult<PathBuf> {
    let p = dir.join(CONFIG_SNAPSHOT);
    write_file(&p, cfg.to_text().as_bytes())?;
    Ok(p)
}

/// `path  bytes  sha256` for one written file.
pub fn manifest_line(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("cannot read back {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(format!("{}\t{}\t{hex}", path.display(), bytes.len()))
}

pub fn print_manifest(paths: &[PathBuf]) -> CliResult<()> {
    for p in paths {
        say!("{}", manifest_line(p)?);
    }
    Ok(())
}

pub fn say(args: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(args).and_then(|()| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("jemlab: cannot write to stdout: {e}");
        std::process::exit(3);
    }
}

/// `[-1, 1]` to `[0, 255]`, clamped and rounded.
pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Encodes a `C×H×W` image as binary PGM (C = 1) or PPM (C = 3).
pub fn encode_netpbm(image: &[f64], channels: usize, h: usize, w: usize) -> CliResult<Vec<u8>> {
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(CliError::config(format!("images with {c} channels cannot be written as PGM/PPM"))),
    };
    if image.len() != channels * h * w {
        return Err(CliError::config("image size does not match its shape"));
    }
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    for p in 0..h * w {
        for c in 0..channels {
            out.push(to_byte(image[c * h * w + p]));
        }
    }
    Ok(out)
}

pub fn netpbm_extension(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

/// Writes row `i` of an `N×C×H×W` batch; returns the path.
pub fn write_image(dir: &Path, stem: &str, batch: &Tensor, i: usize) -> CliResult<PathBuf> {
    let s = batch.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    let p = dir.join(format!("{stem}.{}", netpbm_extension(c)));
    write_file(&p, &encode_netpbm(batch.row(i), c, h, w)?)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_mapping_endpoints() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(to_byte(-3.0), 0);
        assert_eq!(to_byte(7.0), 255);
    }

    #[test]
    fn pgm_layout() {
        let bytes = encode_netpbm(&[-1.0, 1.0], 1, 1, 2).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn ppm_interleaves_channels() {
        // one pixel, channels r, g, b
        let bytes = encode_netpbm(&[1.0, -1.0, 1.0], 3, 1, 1).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 0, 255]);
        assert!(encode_netpbm(&[0.0; 2], 2, 1, 1).is_err());
    }
}
