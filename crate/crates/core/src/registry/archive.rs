//! Archive unpacking for the four registry formats.
//!
//! Every format is reduced to a `relative path -> bytes` map. Paths are
//! normalized (no `.`/`..` segments, no leading `/`), the registry's wrapper
//! directory (`package/`, `name-version/`) is stripped, and packaging metadata
//! that never corresponds to a repository file is dropped.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use flate2::read::GzDecoder;

use super::{DistKind, RegistryError};

pub type FileMap = BTreeMap<String, Vec<u8>>;

pub fn unpack(kind: DistKind, bytes: &[u8]) -> Result<FileMap, RegistryError> {
    let files = match kind {
        DistKind::Crate | DistKind::NpmTarball => strip_wrapper(read_tar(GzDecoder::new(bytes))?),
        DistKind::Gem => unpack_gem(bytes)?,
        DistKind::Wheel => read_zip(bytes)?,
        DistKind::Sdist if bytes.starts_with(b"PK") => strip_wrapper(read_zip(bytes)?),
        DistKind::Sdist => strip_wrapper(read_tar(GzDecoder::new(bytes))?),
    };
    Ok(files.into_iter().filter(|(path, _)| !is_metadata(kind, path)).collect())
}

/// Members written by the packaging tool rather than taken from the source tree.
fn is_metadata(kind: DistKind, path: &str) -> bool {
    match kind {
        DistKind::Crate => path == ".cargo_vcs_info.json" || path == "Cargo.toml.orig",
        DistKind::Wheel => path.split('/').next().is_some_and(|top| top.ends_with(".dist-info")),
        DistKind::Sdist => path == "PKG-INFO" || path.split('/').any(|seg| seg.ends_with(".egg-info")),
        // gem metadata lives outside data.tar.gz and never reaches this map
        DistKind::Gem | DistKind::NpmTarball => false,
    }
}

fn unpack_gem(bytes: &[u8]) -> Result<FileMap, RegistryError> {
    let outer = read_tar(bytes)?;
    let data = outer
        .get("data.tar.gz")
        .ok_or_else(|| RegistryError::ArchiveCorrupt("gem has no data.tar.gz member".into()))?;
    read_tar(GzDecoder::new(data.as_slice()))
}

/// Normalize an archive member path. `Ok(None)` means the entry names the root.
pub fn normalize_entry_path(raw: &[u8]) -> Result<Option<String>, RegistryError> {
    let text = std::str::from_utf8(raw)
        .map_err(|_| RegistryError::NonUnicodePathEntry(String::from_utf8_lossy(raw).into_owned()))?;
    if text.starts_with('/') {
        return Err(RegistryError::ArchiveCorrupt(format!("absolute member path {text}")));
    }
    let mut parts = Vec::new();
    for seg in text.split(['/', '\\']) {
        match seg {
            "" | "." => {}
            ".." => return Err(RegistryError::ArchiveCorrupt(format!("member path escapes archive: {text}"))),
            s => parts.push(s),
        }
    }
    Ok(if parts.is_empty() { None } else { Some(parts.join("/")) })
}

fn read_tar<R: Read>(reader: R) -> Result<FileMap, RegistryError> {
    let corrupt = |e: std::io::Error| RegistryError::ArchiveCorrupt(e.to_string());
    let mut archive = tar::Archive::new(reader);
    let mut files = FileMap::new();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let kind = entry.header().entry_type();
        if !(kind.is_file() || kind.is_contiguous()) {
            continue;
        }
        let path_bytes = entry.path_bytes().into_owned();
        let Some(path) = normalize_entry_path(&path_bytes)? else { continue };
        let mut content = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut content).map_err(corrupt)?;
        files.insert(path, content);
    }
    Ok(files)
}

fn read_zip(bytes: &[u8]) -> Result<FileMap, RegistryError> {
    let corrupt = |e: zip::result::ZipError| RegistryError::ArchiveCorrupt(e.to_string());
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(corrupt)?;
    let mut files = FileMap::new();
    for i in 0..archive.len() {
        let mut file = archive.by_index(i).map_err(corrupt)?;
        if file.is_dir() {
            continue;
        }
        let Some(path) = normalize_entry_path(file.name_raw())? else { continue };
        let mut content = Vec::with_capacity(file.size() as usize);
        file.read_to_end(&mut content)
            .map_err(|e| RegistryError::ArchiveCorrupt(e.to_string()))?;
        files.insert(path, content);
    }
    Ok(files)
}

/// Drop a single top-level directory shared by every member.
fn strip_wrapper(files: FileMap) -> FileMap {
    let mut tops = files.keys().map(|p| p.split_once('/').map(|(top, _)| top));
    let Some(Some(first)) = tops.next() else { return files };
    let first = first.to_string();
    if !tops.all(|t| t == Some(first.as_str())) {
        return files;
    }
    let prefix = format!("{first}/");
    files
        .into_iter()
        .map(|(p, c)| (p[prefix.len()..].to_string(), c))
        .collect()
}
