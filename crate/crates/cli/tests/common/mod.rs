#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn periscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_periscope"))
        .args(args)
        .output()
        .expect("periscope binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Grey test card: a smooth ramp so crops are not uniform.
pub fn write_gray_png(path: &Path, width: u32, height: u32) {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).unwrap();
    }
    let img = image::GrayImage::from_fn(width, height, |x, y| image::Luma([((x * 3 + y * 5) % 256) as u8]));
    img.save(path).unwrap();
}

pub const MANIFEST_HEADER: &str = "subject_id,image_id,pose,lx,ly,rx,ry,nx,ny,img_w,img_h\n";

pub fn manifest_row(subject: &str, image: &str, pose: &str, l: (f64, f64), r: (f64, f64), n: (f64, f64), w: u32, h: u32) -> String {
    format!("{subject},{image},{pose},{},{},{},{},{},{},{w},{h}\n", l.0, l.1, r.0, r.1, n.0, n.1)
}
