#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "livestyle/errors.hpp"
#include "livestyle/tensor.hpp"

namespace livestyle {

// Named float32 tensors over one contiguous little-endian blob.
//
// On disk this is a ZIP container holding `manifest.json`, an array of
// {name, shape, dtype:"f32", file}, plus one raw blob file per tensor whose
// size is exactly 4 * prod(shape) bytes.
class WeightArchive {
 public:
  struct Entry {
    std::string tensor_name;
    Shape shape;
    std::string dtype = "f32";
    std::size_t blob_offset = 0;
  };

  void add(const std::string& name, const Shape& shape, std::span<const float> values) {
    if (index_.count(name)) throw ArchiveError("duplicate tensor name '" + name + "'");
    if (values.size() != shape_numel(shape))
      throw ShapeMismatch("tensor '" + name + "' has " + std::to_string(values.size()) +
                          " values for shape " + shape_str(shape));
    Entry e{name, shape, "f32", blob_.size()};
    blob_.resize(blob_.size() + values.size() * 4);
    std::uint8_t* dst = blob_.data() + e.blob_offset;
    for (float v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    index_[name] = manifest_.size();
    manifest_.push_back(std::move(e));
  }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    const Tensor<float> f = t.template cast<float>();
    add(name, t.shape, std::span<const float>(f.data));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw MissingTensor(name);
    return manifest_[it->second];
  }

  Tensor<float> get(const std::string& name) const {
    const Entry& e = entry(name);
    Tensor<float> t(e.shape);
    const std::uint8_t* src = blob_.data() + e.blob_offset;
    for (auto& v : t.data) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(*src++) << (8 * b);
      std::memcpy(&v, &bits, 4);
    }
    return t;
  }

  // Raw little-endian bytes of one tensor.
  std::span<const std::uint8_t> bytes(const std::string& name) const {
    const Entry& e = entry(name);
    return {blob_.data() + e.blob_offset, shape_numel(e.shape) * 4};
  }

  // Checks the manifest/blob invariants.
  void validate() const {
    std::unordered_map<std::string, int> seen;
    for (const auto& e : manifest_) {
      if (++seen[e.tensor_name] > 1) throw ArchiveError("duplicate tensor name '" + e.tensor_name + "'");
      if (e.dtype != "f32") throw ArchiveError("tensor '" + e.tensor_name + "' has unsupported dtype " + e.dtype);
      if (e.blob_offset + shape_numel(e.shape) * 4 > blob_.size())
        throw ArchiveError("tensor '" + e.tensor_name + "' overruns the blob");
    }
  }

  const std::vector<Entry>& manifest() const { return manifest_; }
  const std::vector<std::uint8_t>& blob() const { return blob_; }
  std::size_t size() const { return manifest_.size(); }

  bool operator==(const WeightArchive& o) const {
    if (manifest_.size() != o.manifest_.size()) return false;
    for (const auto& e : manifest_) {
      if (!o.contains(e.tensor_name) || o.entry(e.tensor_name).shape != e.shape) return false;
      auto a = bytes(e.tensor_name), b = o.bytes(e.tensor_name);
      if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> manifest_;
  std::vector<std::uint8_t> blob_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ZIP serialization (compiled in livestyle_io).
std::vector<std::uint8_t> serialize_archive(const WeightArchive& archive);
WeightArchive parse_archive(std::span<const std::uint8_t> zip_bytes);
void save_archive(const WeightArchive& archive, const std::filesystem::path& path);
WeightArchive load_archive(const std::filesystem::path& path);

}  // namespace livestyle
