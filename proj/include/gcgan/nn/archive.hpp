#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcgan/nn/tensor.hpp"

// "GCA1" checkpoint container: magic, u32 tensor count, then per tensor in name order
// u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f32 payload. Little-endian.

namespace gcgan::nn {

struct ArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TensorArchive {
 public:
  void insert(const std::string& name, Tensor<float> tensor) {
    if (name.empty() || name.size() > 0xFFFF) throw ArchiveError("invalid tensor name length");
    if (tensor.rank() > 0xFF) throw ArchiveError("tensor rank too large: " + name);
    if (!entries_.emplace(name, std::move(tensor)).second) throw ArchiveError("duplicate tensor name " + name);
  }

  /// Inserts every entry of `values`, prefixing each name.
  template <typename T>
  void insert_all(const std::map<std::string, Tensor<T>>& values, const std::string& prefix = "") {
    for (const auto& [name, t] : values) insert(prefix + name, t.template cast<float>());
  }

  /// Entries whose name starts with `prefix`, with the prefix stripped.
  template <typename T = float>
  std::map<std::string, Tensor<T>> extract(const std::string& prefix = "") const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, t] : entries_) {
      if (name.compare(0, prefix.size(), prefix) == 0) out.emplace(name.substr(prefix.size()), t.template cast<T>());
    }
    return out;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  const Tensor<float>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArchiveError("archive has no tensor " + name);
    return it->second;
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, Tensor<float>>& entries() const { return entries_; }

  bool operator==(const TensorArchive&) const = default;

 private:
  std::map<std::string, Tensor<float>> entries_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw ArchiveError(std::string("truncated archive while reading ") + what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = take(4, what);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
  }
  std::uint16_t u16(const char* what) {
    const auto* p = take(2, what);
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_archive(const TensorArchive& archive) {
  std::string out = "GCA1";
  detail::put_u32(out, static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, t] : archive.entries()) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline TensorArchive decode_archive(const std::string& bytes) {
  detail::Reader in(bytes);
  if (std::memcmp(in.take(4, "magic"), "GCA1", 4) != 0) throw ArchiveError("bad magic: not a GCA1 archive");
  const std::uint32_t count = in.u32("tensor count");
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = in.u16("name length");
    const auto* name_bytes = in.take(len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), len);
    const int rank = in.u8("rank");
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = in.u32("dims");
      if (dim == 0 || dim > 0x7FFFFFFF) throw ArchiveError("invalid dimension in tensor " + name);
      shape[d] = static_cast<int>(dim);
    }
    std::vector<float> data(numel(shape));
    for (auto& v : data) v = std::bit_cast<float>(in.u32("payload"));
    archive.insert(name, Tensor<float>(shape, std::move(data)));
  }
  if (!in.done()) throw ArchiveError("trailing bytes after last tensor");
  return archive;
}

inline void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot write " + path.string());
  const std::string bytes = encode_archive(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("write failed for " + path.string());
}

inline TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace gcgan::nn
