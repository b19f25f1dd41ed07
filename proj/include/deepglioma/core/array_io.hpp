#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "deepglioma/core/array.hpp"
#include "deepglioma/core/tape.hpp"

namespace deepglioma::ad {

// File layout: one line of compact JSON
//   {"arrays":[{"name":...,"shape":[...]},...],"byte_order":"little","dtype":"f64","meta":{...}}
// terminated by '\n', followed by the raw little-endian f64 payload of every
// array in header order.

struct NamedArray {
  std::string name;
  Array array;
};

struct ArrayBundle {
  std::vector<NamedArray> arrays;
  nlohmann::json meta = nlohmann::json::object();

  const Array& get(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a.array;
    throw std::out_of_range("ArrayBundle: no array named '" + name + "'");
  }
  bool contains(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }
};

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace detail

inline std::string encode_arrays(const ArrayBundle& bundle) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["byte_order"] = "little";
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : bundle.arrays) header["arrays"].push_back({{"name", a.name}, {"shape", a.array.shape()}});
  header["meta"] = bundle.meta;
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& a : bundle.arrays) {
    for (double v : a.array.values()) {
      std::uint64_t bits = detail::to_little(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.append(buf, 8);
    }
  }
  return out;
}

inline ArrayBundle decode_arrays(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("array file: missing header line");
  const auto header = nlohmann::json::parse(bytes.substr(0, nl));
  if (header.value("dtype", "") != "f64" || header.value("byte_order", "") != "little") {
    throw std::runtime_error("array file: unsupported dtype or byte order");
  }
  ArrayBundle bundle;
  bundle.meta = header.value("meta", nlohmann::json::object());
  std::size_t offset = nl + 1;
  for (const auto& entry : header.at("arrays")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_size(shape);
    if (offset + 8 * n > bytes.size()) throw std::runtime_error("array file: truncated payload");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + offset + 8 * i, 8);
      data[i] = std::bit_cast<double>(detail::to_little(bits));
    }
    offset += 8 * n;
    bundle.arrays.push_back({entry.at("name").get<std::string>(), Array(std::move(shape), std::move(data))});
  }
  if (offset != bytes.size()) throw std::runtime_error("array file: trailing bytes after payload");
  return bundle;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void save_arrays(const std::filesystem::path& path, const ArrayBundle& bundle) {
  write_file_bytes(path, encode_arrays(bundle));
}

inline ArrayBundle load_arrays(const std::filesystem::path& path) { return decode_arrays(read_file_bytes(path)); }

inline ArrayBundle bundle_parameters(const std::vector<Parameter*>& params, nlohmann::json meta = nlohmann::json::object()) {
  ArrayBundle b;
  b.meta = std::move(meta);
  for (const Parameter* p : params) b.arrays.push_back({p->name, p->value});
  return b;
}

/// Copies arrays into parameters by name; shapes must agree.
inline void restore_parameters(const ArrayBundle& bundle, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    const Array& a = bundle.get(p->name);
    if (a.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "': " + shape_string(a.shape()) +
                               " vs " + shape_string(p->value.shape()));
    }
    p->value = a;
  }
}

}  // namespace deepglioma::ad
