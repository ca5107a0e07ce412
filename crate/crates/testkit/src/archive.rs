//! Registry archive packers, written the way each registry's publishing tool
//! lays out its artifact.

use std::io::{Cursor, Write};

use flate2::write::GzEncoder;
use flate2::Compression;

use crate::Files;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Crate,
    Npm,
    Gem,
    Wheel,
    Sdist,
}

impl Format {
    pub fn registry(self) -> &'static str {
        match self {
            Format::Crate => "crates-io",
            Format::Npm => "npm",
            Format::Gem => "rubygems",
            Format::Wheel | Format::Sdist => "pypi",
        }
    }
}

fn tar_bytes<'a>(entries: impl IntoIterator<Item = (String, &'a [u8])>) -> Vec<u8> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, content) in entries {
        let mut header = tar::Header::new_gnu();
        header.set_size(content.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, &path, content).expect("tar append");
    }
    builder.into_inner().expect("tar finish")
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("gzip write");
    enc.finish().expect("gzip finish")
}

fn zip_bytes<'a>(entries: impl IntoIterator<Item = (String, &'a [u8])>) -> Vec<u8> {
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    for (path, content) in entries {
        writer.start_file(path, options).expect("zip entry");
        writer.write_all(content).expect("zip write");
    }
    writer.finish().expect("zip finish").into_inner()
}

/// Pack `files` as `package`'s `version` release; returns `(file name, bytes)`.
pub fn pack(format: Format, package: &str, version: &str, files: &Files) -> (String, Vec<u8>) {
    let under = |prefix: String| files.iter().map(move |(p, c)| (format!("{prefix}{p}"), c.as_slice()));
    match format {
        Format::Crate => {
            let vcs = br#"{"git":{"sha1":"0000000000000000000000000000000000000000"}}"#;
            let prefix = format!("{package}-{version}/");
            let extra = [(format!("{prefix}.cargo_vcs_info.json"), &vcs[..])];
            let bytes = gzip(&tar_bytes(under(prefix).chain(extra)));
            (format!("{package}-{version}.crate"), bytes)
        }
        Format::Npm => {
            let bare = package.rsplit('/').next().unwrap_or(package);
            (format!("{bare}-{version}.tgz"), gzip(&tar_bytes(under("package/".into()))))
        }
        Format::Gem => {
            let data = gzip(&tar_bytes(under(String::new())));
            let metadata = gzip(format!("--- !ruby/object:Gem::Specification\nname: {package}\n").as_bytes());
            let checksums = gzip(b"---\n");
            let outer = tar_bytes([
                ("metadata.gz".to_string(), metadata.as_slice()),
                ("data.tar.gz".to_string(), data.as_slice()),
                ("checksums.yaml.gz".to_string(), checksums.as_slice()),
            ]);
            (format!("{package}-{version}.gem"), outer)
        }
        Format::Wheel => {
            let dist = format!("{}-{version}.dist-info", package.replace('-', "_"));
            let meta = format!("Metadata-Version: 2.1\nName: {package}\nVersion: {version}\n");
            let record: String = files.keys().map(|p| format!("{p},,\n")).collect();
            let extra = [
                (format!("{dist}/METADATA"), meta.as_bytes()),
                (format!("{dist}/RECORD"), record.as_bytes()),
            ];
            let bytes = zip_bytes(under(String::new()).chain(extra));
            (format!("{}-{version}-py3-none-any.whl", package.replace('-', "_")), bytes)
        }
        Format::Sdist => {
            let prefix = format!("{package}-{version}/");
            let pkg_info = format!("Metadata-Version: 2.1\nName: {package}\nVersion: {version}\n");
            let extra = [(format!("{prefix}PKG-INFO"), pkg_info.as_bytes())];
            let bytes = gzip(&tar_bytes(under(prefix).chain(extra)));
            (format!("{package}-{version}.tar.gz"), bytes)
        }
    }
}
