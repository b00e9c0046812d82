#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn idn<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_idn")).args(args).env_remove("IDN_THREADS").output().expect("run idn")
}

/// Runs `idn` and returns stdout, panicking with stderr on failure.
pub fn idn_ok<I, S>(args: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = idn(args);
    assert!(out.status.success(), "idn failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Tab-separated report rows as `(name, psnr, ssim)`.
pub fn report_rows(text: &str) -> Vec<(String, f64, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<_> = l.split('\t').collect();
            let num = |s: &str| if s == "inf" { f64::INFINITY } else { s.parse().unwrap() };
            (f[0].to_string(), num(f[1]), num(f[2]))
        })
        .collect()
}
