// SPDX-License-Identifier: Apache-2.0
// Minimal reader for MATLAB level-5 MAT files: numeric, real, non-sparse arrays only.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace maven::detail {

struct MatVariable {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<double> values;  // column-major
};

std::vector<MatVariable> read_mat_v5(const std::filesystem::path& file);
std::vector<MatVariable> parse_mat_v5(const std::vector<unsigned char>& bytes);

}  // namespace maven::detail
