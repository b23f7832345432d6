use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rca_ghost_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// An 8+8 config writing to `dir`.
fn small_config(dir: &Path) -> *mut RgConfig {
    let toml = dir.join("small.toml");
    std::fs::write(
        &toml,
        "[array]\nn_rows = 8\nn_cols = 8\n[grid]\nhalf_extent = [0.0008, 0.0008, 0.0004]\n",
    )
    .unwrap();
    let mut cfg = ptr::null_mut();
    let path = cstr(toml.to_str().unwrap());
    assert_eq!(
        unsafe { rg_config_load(cstr("desk").as_ptr(), path.as_ptr(), &mut cfg) },
        RgStatus::Ok
    );
    let out = cstr(dir.to_str().unwrap());
    assert_eq!(
        unsafe { rg_config_set_output_dir(cfg, out.as_ptr()) },
        RgStatus::Ok
    );
    cfg
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(rg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn tof_matches_the_core_library() {
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { rg_config_load(ptr::null(), ptr::null(), &mut cfg) },
        RgStatus::Ok
    );
    let p = [0.0, 0.0, 0.03];
    let mut t = 0.0;
    // Center-ish elements of the 32+32 array; the main path is twice the depth.
    assert_eq!(
        unsafe { rg_tof(cfg, 16, 16, 1, 1, p.as_ptr(), &mut t) },
        RgStatus::Ok
    );
    let half_pitch = 74e-6;
    let want = 2.0 * (0.03f64.powi(2) + half_pitch * half_pitch).sqrt() / 1480.0;
    assert!((t - want).abs() < 1e-15, "{t} vs {want}");

    assert_eq!(
        unsafe { rg_tof(cfg, 16, 16, 4, 1, p.as_ptr(), &mut t) },
        RgStatus::InvalidArgument
    );
    assert!(last_error().contains("1..=3"));
    assert_eq!(
        unsafe { rg_tof(cfg, 99, 0, 1, 1, p.as_ptr(), &mut t) },
        RgStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { rg_tof(cfg, 0, 0, 1, 1, ptr::null(), &mut t) },
        RgStatus::NullPointer
    );
    unsafe { rg_config_free(cfg) };
}

#[test]
fn correlation_round_trip() {
    let x = [1.0, 2.0, -0.5, 0.3, 0.0, 1.0];
    let mut out = [0.0; 2];
    assert_eq!(
        unsafe { rg_complex_correlation(x.as_ptr(), x.as_ptr(), 3, out.as_mut_ptr()) },
        RgStatus::Ok
    );
    assert!((out[0] - 1.0).abs() < 1e-15 && out[1].abs() < 1e-15);

    let a = [1.0, 0.0, 0.0, 0.0];
    let b = [1.0, 0.0, 1.0, 0.0];
    assert_eq!(
        unsafe { rg_complex_correlation(a.as_ptr(), b.as_ptr(), 2, out.as_mut_ptr()) },
        RgStatus::Ok
    );
    assert!((out[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

    assert_eq!(
        unsafe { rg_complex_correlation(a.as_ptr(), b.as_ptr(), 0, out.as_mut_ptr()) },
        RgStatus::InvalidArgument
    );
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { rg_config_load(cstr("huge").as_ptr(), ptr::null(), &mut cfg) },
        RgStatus::InvalidArgument
    );
    assert!(last_error().contains("huge"));
    assert_eq!(
        unsafe { rg_config_load(ptr::null(), ptr::null(), ptr::null_mut()) },
        RgStatus::NullPointer
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pulse]\nfs = 8e6\n").unwrap();
    let path = cstr(bad.to_str().unwrap());
    assert_eq!(
        unsafe { rg_config_load(ptr::null(), path.as_ptr(), &mut cfg) },
        RgStatus::InvalidConfig
    );
    assert!(last_error().contains("fs must exceed 2·f0"));
    unsafe { rg_config_free(ptr::null_mut()) };
    unsafe { rg_volume_free(ptr::null_mut()) };
}

#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(
        unsafe { rg_run_stage(cfg, cstr("filter").as_ptr(), 1) },
        RgStatus::MissingArtifact
    );
    assert!(last_error().contains("frames.json"));
    let mut v = ptr::null_mut();
    assert_eq!(
        unsafe { rg_volume_load_filtered(cfg, &mut v) },
        RgStatus::MissingArtifact
    );
    assert_eq!(
        unsafe { rg_run_stage(cfg, cstr("paint").as_ptr(), 1) },
        RgStatus::InvalidArgument
    );
    unsafe { rg_config_free(cfg) };
}

#[test]
fn pipeline_runs_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(
        unsafe { rg_run_stage(cfg, cstr("all").as_ptr(), 2) },
        RgStatus::Ok
    );

    let (mut main, mut filtered) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(
        unsafe { rg_volume_load_frame(cfg, 1, 1, &mut main) },
        RgStatus::Ok
    );
    assert_eq!(
        unsafe { rg_volume_load_filtered(cfg, &mut filtered) },
        RgStatus::Ok
    );

    let mut dims = [0usize; 3];
    assert_eq!(
        unsafe { rg_volume_dims(main, dims.as_mut_ptr()) },
        RgStatus::Ok
    );
    let n = dims.iter().product::<usize>();
    let (mut m, mut f) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(
        unsafe { rg_volume_magnitude(main, m.as_mut_ptr(), n) },
        RgStatus::Ok
    );
    assert_eq!(
        unsafe { rg_volume_magnitude(filtered, f.as_mut_ptr(), n) },
        RgStatus::Ok
    );
    assert!(f.iter().zip(&m).all(|(a, b)| a <= b));
    assert_eq!(
        unsafe { rg_volume_magnitude(main, m.as_mut_ptr(), n - 1) },
        RgStatus::BufferTooSmall
    );

    let mut idx = [0usize; 3];
    assert_eq!(
        unsafe { rg_volume_argmax(main, idx.as_mut_ptr()) },
        RgStatus::Ok
    );
    assert_eq!(idx, [dims[0] / 2, dims[1] / 2, dims[2] / 2]);
    unsafe {
        rg_volume_free(main);
        rg_volume_free(filtered);
        rg_config_free(cfg);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rca_ghost.h");
    assert!(header.is_file());
    let dir = tempfile::tempdir().unwrap();
    for (compiler, file) in [("cc", "probe.c"), ("c++", "probe.cpp")] {
        let src = dir.path().join(file);
        std::fs::write(
            &src,
            format!(
                "#include \"{}\"\nint main(void) {{ return RG_STATUS_OK; }}\n",
                header.display()
            ),
        )
        .unwrap();
        let status = match Command::new(compiler)
            .arg("-fsyntax-only")
            .arg(&src)
            .status()
        {
            Ok(s) => s,
            Err(_) => {
                eprintln!("{compiler} not available, skipping");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
