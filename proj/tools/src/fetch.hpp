// SPDX-License-Identifier: Apache-2.0
// Download, checksum and unpack benchmark archives.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace maven::fetch {

struct Artifact {
    std::string url;
    std::string file;  // name inside the destination directory
    std::string md5;
    bool extract = false;  // .tar.gz archives are unpacked in place
};

/// Known archives for a dataset name ("cifar10", "svhn").
std::vector<Artifact> dataset_artifacts(const std::string& dataset);

void download(const std::string& url, const std::filesystem::path& target);
std::string md5_file(const std::filesystem::path& file);
/// Unpacks regular files and directories of a gzip'd ustar archive under dest.
/// Entries that would escape dest are rejected.
std::vector<std::filesystem::path> extract_tar_gz(const std::filesystem::path& archive, const std::filesystem::path& dest);

/// Downloads (unless a file with the right checksum is already present), verifies, extracts.
void fetch_artifact(const Artifact& a, const std::filesystem::path& dest, std::ostream& log);

}  // namespace maven::fetch
