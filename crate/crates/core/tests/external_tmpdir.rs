use uvrecon::external::{run, ExternalCommand, TMPDIR_ENV};
use uvrecon::Image;

// Alone in its binary: it sets a process-wide environment variable.
#[test]
fn temp_dirs_live_under_the_configured_root_and_are_removed() {
    let root = tempfile::tempdir().unwrap();
    let record = tempfile::tempdir().unwrap();
    let log = record.path().join("in_path.txt");
    std::env::set_var(TMPDIR_ENV, root.path());
    let cmd = ExternalCommand {
        command: format!("sh -c 'echo \"$0\" > \"$1\"; cp \"$0\" \"$2\"' {{in}} '{}' {{out}}", log.display()),
        timeout_secs: 20.0,
        seed: 0,
    };
    let image = Image::filled(4, 4, [0.25, 0.5, 0.75]);
    let out = run(&cmd, "test", &image, &[1.0; 16], None).unwrap();
    assert_eq!((out.width, out.height), (4, 4));
    assert!((out.pixel(1, 2)[1] - 0.5).abs() < 1.0 / 65535.0);
    let used = std::fs::read_to_string(&log).unwrap();
    assert!(used.trim().starts_with(&*root.path().to_string_lossy()), "{used}");
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}
