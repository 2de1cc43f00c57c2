//! Hierarchy checkpoints: a directory holding a TOML manifest, the macro file and one network
//! checkpoint (with optimizer state) per node.
//!
//! ```text
//! <dir>/manifest.toml
//! <dir>/macros.txt
//! <dir>/nodes/<name>.ckpt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_topology, Hierarchy, HierarchyConfig, HrlError};
use crate::approx::{load_checkpoint, write_checkpoint};
use crate::mining::{parse_macro_file, write_macro_file};

pub const MANIFEST_FILE: &str = "manifest.toml";
const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub version: u32,
    pub config: HierarchyConfig,
    pub nodes: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HrlError + '_ {
    move |source| HrlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write through a temporary file so readers never see a half-written file.
fn write_atomic(path: &Path, text: &str) -> Result<(), HrlError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn node_path(dir: &Path, name: &str) -> PathBuf {
    dir.join("nodes").join(format!("{name}.ckpt"))
}

pub fn save_hierarchy(dir: &Path, h: &Hierarchy) -> Result<(), HrlError> {
    fs::create_dir_all(dir.join("nodes")).map_err(io_err(dir))?;
    for n in &h.nodes {
        write_atomic(&node_path(dir, &n.name), &write_checkpoint(&n.net, Some(&n.adam)))?;
    }
    write_atomic(&dir.join("macros.txt"), &write_macro_file(&h.macros))?;
    let manifest = HierarchyManifest {
        version: MANIFEST_VERSION,
        config: h.config.clone(),
        nodes: h.node_names(),
    };
    let text = toml::to_string(&manifest).map_err(|e| HrlError::Checkpoint(e.to_string()))?;
    // The manifest goes last: its presence marks a complete checkpoint.
    write_atomic(&dir.join(MANIFEST_FILE), &text)
}

pub fn load_hierarchy(dir: &Path) -> Result<Hierarchy, HrlError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: HierarchyManifest =
        toml::from_str(&text).map_err(|e| HrlError::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(HrlError::Checkpoint(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let mpath = dir.join("macros.txt");
    let macros = parse_macro_file(&fs::read_to_string(&mpath).map_err(io_err(&mpath))?)
        .map_err(|e| HrlError::Checkpoint(format!("{}: {e}", mpath.display())))?;
    let mut h = build_topology(&manifest.config, &macros)?;
    if h.node_names() != manifest.nodes {
        return Err(HrlError::Checkpoint(format!(
            "manifest nodes {:?} do not match topology {}",
            manifest.nodes, manifest.config.topology
        )));
    }
    for n in &mut h.nodes {
        let ck = load_checkpoint(&node_path(dir, &n.name))?;
        if ck.network.spec != n.net.spec {
            return Err(HrlError::Checkpoint(format!("node `{}` has a different network shape", n.name)));
        }
        n.net = ck.network;
        if let Some(adam) = ck.adam {
            n.adam = adam;
        }
    }
    Ok(h)
}
