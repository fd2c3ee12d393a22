#pragma once

#include <string>
#include <utility>
#include <vector>

#include "textdet/tensor.hpp"

namespace textdet {

/// Weight file format: a text manifest (one `name dim0 dim1 ...` line per
/// tensor) plus a single little-endian float32 blob holding the tensors'
/// data in manifest order. Round-trips are bit-exact.

std::string manifest_text(const std::vector<std::pair<std::string, const Tensor*>>& entries);
std::string blob_bytes(const std::vector<std::pair<std::string, const Tensor*>>& entries);

void save_weights(const std::vector<std::pair<std::string, const Tensor*>>& entries,
                  const std::string& manifest_path, const std::string& blob_path);

/// Loads into pre-shaped tensors; names and shapes must match the manifest
/// exactly (order included). Throws IoError / ParseError / ShapeMismatch.
void load_weights(const std::vector<std::pair<std::string, Tensor*>>& entries,
                  const std::string& manifest_path, const std::string& blob_path);

std::vector<std::pair<std::string, std::vector<int>>> read_manifest(
    const std::string& manifest_path);

}  // namespace textdet
