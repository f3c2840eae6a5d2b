use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn xsparse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xsparse")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 64x48 8-bit P5 image with smooth content.
fn write_input(dir: &Path) -> PathBuf {
    let (w, h) = (64usize, 48usize);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            let v = 110.0 + 50.0 * (r as f64 / 7.0).sin() + 40.0 * (c as f64 / 9.0).cos();
            bytes.push(v.round() as u8);
        }
    }
    let p = dir.join("in.pgm");
    fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn encode_is_deterministic_and_decodes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path());
    let (a, b) = (dir.path().join("a.ssr"), dir.path().join("b.ssr"));
    let recon = dir.path().join("recon.pgm");
    let common = ["--block-size", "8", "--levels", "3", "--psnr", "40"];
    let first = xsparse(&[&["encode", arg(&input), "-o", arg(&a), "--reconstruction", arg(&recon)][..], &common].concat());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = xsparse(&[&["encode", arg(&input), "-o", arg(&b)][..], &common].concat());
    assert!(second.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(&fs::read(&a).unwrap()[..4], b"SSR1");

    let report = String::from_utf8(first.stdout).unwrap();
    let mut lines = report.lines();
    assert!(lines.next().unwrap().starts_with("image,method,N_b,levels,psnr_target,psnr"));
    assert!(lines.next().unwrap().starts_with("in.pgm,hbw-omp2d,8,3,40"));

    let out = dir.path().join("out.pgm");
    let dec = xsparse(&["decode", arg(&a), "-o", arg(&out)]);
    assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
    let decoded = fs::read(&out).unwrap();
    assert!(decoded.starts_with(b"P5\n64 48\n255\n"));
    assert_eq!(decoded, fs::read(&recon).unwrap());
}

#[test]
fn threads_do_not_change_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path());
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}.ssr"));
        let o = xsparse(&[
            "encode", arg(&input), "-o", arg(&out), "--method", "omp2d", "--block-size", "8", "--levels", "3",
            "--threads", threads,
        ]);
        assert!(o.status.success());
        files.push(fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path());
    let out = dir.path().join("x.ssr");
    let code = |args: &[&str]| xsparse(args).status.code();

    assert_eq!(code(&["encode", arg(&input), "-o", arg(&out), "--block-size", "1"]), Some(2));
    assert_eq!(code(&["encode", arg(&input), "-o", arg(&out), "--method", "dct-baseline"]), Some(2));
    assert_eq!(code(&["encode", arg(&input), "-o", arg(&out), "--psnr", "-3"]), Some(2));
    assert_eq!(code(&["encode", "missing.pgm", "-o", arg(&out)]), Some(4));
    assert_eq!(code(&["decode", arg(&input), "-o", arg(&out)]), Some(4));
    assert_eq!(code(&["bench", arg(&dir.path().join("none.txt"))]), Some(4));
}

#[test]
fn baseline_and_bench_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path());
    let b = xsparse(&["baseline", "dct", arg(&input), "--psnr", "38"]);
    assert!(b.status.success());
    assert!(String::from_utf8(b.stdout).unwrap().lines().nth(1).unwrap().starts_with("in.pgm,dct-baseline,"));

    let manifest = dir.path().join("corpus.txt");
    fs::write(&manifest, "# two copies of one image\nin.pgm\nin.pgm, 36\n").unwrap();
    let csv = dir.path().join("bench.csv");
    let o = xsparse(&[
        "bench", arg(&manifest), "-o", arg(&csv), "--methods", "omp2d,dwt-baseline", "--block-sizes", "8",
        "--levels", "3", "--psnr", "38",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // header, 2 images x 2 methods, MEAN and STDDEV per method
    assert_eq!(lines.len(), 1 + 4 + 4, "{text}");
    assert_eq!(lines.iter().filter(|l| l.starts_with("in.pgm,dwt-baseline,")).count(), 2);
    assert!(lines.iter().any(|l| l.starts_with("STDDEV,omp2d,8,3,")));
}
