#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;
use serde_json::{json, Value};

pub fn camtrap() -> Command {
    let mut cmd = Command::cargo_bin("camtrap").unwrap();
    cmd.env_remove("TRAPPER_TOKEN").env("RUST_LOG", "warn");
    cmd
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

/// One image with pixel boxes `(species, [x0, y0, x1, y1])`.
pub fn image(id: &str, w: u32, h: u32, boxes: &[(&str, [f64; 4])]) -> Value {
    json!({
        "image_id": id,
        "path": format!("media/{id}.jpg"),
        "width": w,
        "height": h,
        "location_id": null,
        "annotations": boxes.iter().map(|(s, b)| json!({
            "class": s,
            "box": {"x_min": b[0], "y_min": b[1], "x_max": b[2], "y_max": b[3]},
            "coords": "pixel",
        })).collect::<Vec<_>>(),
    })
}

/// Writes `manifest.json` plus a placeholder file per image under `dir`.
pub fn write_dataset(dir: &Path, classes: &[&str], images: &[Value]) -> PathBuf {
    fs::create_dir_all(dir.join("media")).unwrap();
    for img in images {
        fs::write(
            dir.join(img["path"].as_str().unwrap()),
            img["image_id"].as_str().unwrap(),
        )
        .unwrap();
    }
    let path = dir.join("manifest.json");
    let doc = json!({"schema_version": 1, "classes": classes, "images": images});
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

pub fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
