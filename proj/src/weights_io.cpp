#include "textdet/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "textdet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight blobs are little-endian; add byte swapping for this platform");

namespace textdet {

std::string manifest_text(const std::vector<std::pair<std::string, const Tensor*>>& entries) {
  std::ostringstream os;
  for (const auto& [name, t] : entries) {
    os << name;
    for (int d : t->shape()) os << ' ' << d;
    os << '\n';
  }
  return os.str();
}

std::string blob_bytes(const std::vector<std::pair<std::string, const Tensor*>>& entries) {
  size_t total = 0;
  for (const auto& [name, t] : entries) total += static_cast<size_t>(t->numel()) * sizeof(float);
  std::string out;
  out.resize(total);
  size_t off = 0;
  for (const auto& [name, t] : entries) {
    size_t bytes = static_cast<size_t>(t->numel()) * sizeof(float);
    std::memcpy(out.data() + off, t->data(), bytes);
    off += bytes;
  }
  return out;
}

void save_weights(const std::vector<std::pair<std::string, const Tensor*>>& entries,
                  const std::string& manifest_path, const std::string& blob_path) {
  {
    std::ofstream mf(manifest_path, std::ios::binary);
    if (!mf) throw IoError("cannot write " + manifest_path);
    mf << manifest_text(entries);
  }
  std::ofstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError("cannot write " + blob_path);
  std::string blob = blob_bytes(entries);
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bf) throw IoError("short write to " + blob_path);
}

std::vector<std::pair<std::string, std::vector<int>>> read_manifest(
    const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot read " + manifest_path);
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name;
    is >> name;
    if (name.empty()) throw ParseError(lineno, "missing tensor name");
    std::vector<int> shape;
    int d;
    while (is >> d) shape.push_back(d);
    if (!is.eof()) throw ParseError(lineno, "non-numeric dimension");
    out.emplace_back(std::move(name), std::move(shape));
  }
  return out;
}

void load_weights(const std::vector<std::pair<std::string, Tensor*>>& entries,
                  const std::string& manifest_path, const std::string& blob_path) {
  auto manifest = read_manifest(manifest_path);
  if (manifest.size() != entries.size()) {
    throw ShapeMismatch("manifest has " + std::to_string(manifest.size()) + " tensors, expected " +
                        std::to_string(entries.size()));
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    if (manifest[i].first != entries[i].first) {
      throw ShapeMismatch("manifest tensor '" + manifest[i].first + "' does not match expected '" +
                          entries[i].first + "'");
    }
    if (manifest[i].second != entries[i].second->shape()) {
      throw ShapeMismatch("shape mismatch for " + manifest[i].first);
    }
  }
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError("cannot read " + blob_path);
  for (const auto& [name, t] : entries) {
    bf.read(reinterpret_cast<char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * static_cast<int64_t>(sizeof(float))));
    if (!bf) throw IoError("blob " + blob_path + " truncated at tensor " + name);
  }
  char extra;
  if (bf.read(&extra, 1)) throw IoError("blob " + blob_path + " has trailing bytes");
}

}  // namespace textdet
