#pragma once

// Binary tensor container shared by head weights and depth-feature dumps.
//
// Layout (all integers little-endian):
//   bytes [0, 8)    magic "M3DCNTR1"
//   bytes [8, 16)   u64 header length N
//   bytes [16, 16+N) UTF-8 JSON header:
//       {"format":"mono3d-container","version":1,"kind":<string>,
//        "meta":<object>,"tensors":[{"name":<string>,"shape":[<int>...]}...]}
//   payload         f32 little-endian values, tensors concatenated in header
//                   order, each row-major; no padding, nothing after.
// The header is written with sorted keys and no whitespace, so write(read(x))
// reproduces x byte for byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>  // nlohmann/json (vendor/)

#include "mono3d/core.hpp"

namespace mono3d {

inline constexpr char kContainerMagic[9] = "M3DCNTR1";
inline constexpr int kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct TensorContainer {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  const NamedTensor& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw ParseError("container: missing tensor '" + name + "'");
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void put_f32(std::string& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace detail

inline std::string serialize_container(const TensorContainer& c) {
  nlohmann::json header;
  header["format"] = "mono3d-container";
  header["version"] = kContainerVersion;
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    if (t.numel() != static_cast<std::int64_t>(t.data.size()))
      throw InvalidArgument("container: tensor '" + t.name + "' shape does not match data size");
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string h = header.dump();
  std::string out(kContainerMagic, 8);
  detail::put_u64(out, h.size());
  out += h;
  for (const auto& t : c.tensors)
    for (float f : t.data) detail::put_f32(out, f);
  return out;
}

inline TensorContainer deserialize_container(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kContainerMagic, 8) != 0)
    throw ParseError("container: bad magic");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = detail::get_u64(raw + 8);
  if (hlen > bytes.size() - 16) throw ParseError("container: header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("container: header is not valid JSON: ") + e.what());
  }
  TensorContainer c;
  try {
    if (header.at("format") != "mono3d-container") throw ParseError("container: unknown format tag");
    if (header.at("version") != kContainerVersion) throw ParseError("container: unsupported version");
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.at("meta");
    std::size_t offset = 16 + hlen;
    for (const auto& jt : header.at("tensors")) {
      NamedTensor t;
      t.name = jt.at("name").get<std::string>();
      t.shape = jt.at("shape").get<std::vector<std::int64_t>>();
      std::int64_t n = 1;
      for (auto d : t.shape) {
        if (d < 0 || (d > 0 && n > (std::int64_t{1} << 40) / d))
          throw ParseError("container: bad shape for tensor '" + t.name + "'");
        n *= d;
      }
      const std::size_t need = static_cast<std::size_t>(n) * 4;
      if (need > bytes.size() - offset) throw ParseError("container: payload truncated at '" + t.name + "'");
      t.data.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) t.data[i] = detail::get_f32(raw + offset + 4 * i);
      offset += need;
      c.tensors.push_back(std::move(t));
    }
    if (offset != bytes.size()) throw ParseError("container: trailing bytes after payload");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("container: malformed header: ") + e.what());
  }
  return c;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline TensorContainer read_container(const std::string& path) {
  return deserialize_container(read_file_bytes(path));
}

inline void write_container(const std::string& path, const TensorContainer& c) {
  write_file_bytes(path, serialize_container(c));
}

}  // namespace mono3d
