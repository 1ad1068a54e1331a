#pragma once

// EMBX v1: a single-file container for layerwise embedding tensors.
//
//   bytes 0..3    ASCII "EMBX"
//   byte  4       format version (0x01)
//   bytes 5..12   header length H, unsigned 64-bit little-endian
//   bytes 13..    H bytes of UTF-8 JSON header
//   remainder     row-major (layer, point, dim) float32, little-endian

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mancap/error.hpp"

namespace mancap {

inline constexpr std::array<char, 4> kEmbxMagic = {'E', 'M', 'B', 'X'};
inline constexpr std::uint8_t kEmbxVersion = 1;
inline constexpr std::uint64_t kEmbxMaxHeaderBytes = std::uint64_t{1} << 30;

enum class EmbeddingKind { sentence_mean, last_token };
enum class Condition { raw, instruction, demonstrations, soft_prompt };

inline std::string_view to_string(EmbeddingKind k) {
  return k == EmbeddingKind::sentence_mean ? "sentence_mean" : "last_token";
}

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::raw: return "raw";
    case Condition::instruction: return "instruction";
    case Condition::demonstrations: return "demonstrations";
    case Condition::soft_prompt: return "soft_prompt";
  }
  return "raw";
}

inline Condition condition_from_string(std::string_view s) {
  if (s == "raw") return Condition::raw;
  if (s == "instruction") return Condition::instruction;
  if (s == "demonstrations") return Condition::demonstrations;
  if (s == "soft_prompt") return Condition::soft_prompt;
  throw ValidationError("unknown condition '" + std::string(s) + "'");
}

inline EmbeddingKind embedding_kind_from_string(std::string_view s) {
  if (s == "sentence_mean") return EmbeddingKind::sentence_mean;
  if (s == "last_token") return EmbeddingKind::last_token;
  throw ValidationError("unknown embedding_kind '" + std::string(s) + "'");
}

struct EmbxShape {
  std::uint64_t num_layers = 1;
  std::uint64_t num_points = 1;
  std::uint64_t embed_dim = 1;

  std::uint64_t element_count() const { return num_layers * num_points * embed_dim; }
  friend bool operator==(const EmbxShape&, const EmbxShape&) = default;
};

struct EmbxHeader {
  int format_version = kEmbxVersion;
  std::string dtype = "f32";
  EmbxShape shape;
  EmbeddingKind embedding_kind = EmbeddingKind::sentence_mean;
  Condition condition = Condition::raw;
  nlohmann::json condition_params = nlohmann::json::object();
  std::map<std::string, std::vector<std::string>> label_schemes;
  std::string model_name;
  int layer_index_base = 0;

  friend bool operator==(const EmbxHeader&, const EmbxHeader&) = default;
};

/// Embeddings of N points at every layer, plus the labels that group them.
struct EmbeddingTensor {
  EmbxHeader header;
  std::vector<float> data;  // (num_layers, num_points, embed_dim), row-major

  std::span<const float> layer(std::uint64_t l) const {
    const auto stride = header.shape.num_points * header.shape.embed_dim;
    return std::span<const float>(data).subspan(l * stride, stride);
  }
  float at(std::uint64_t l, std::uint64_t i, std::uint64_t j) const {
    const auto& s = header.shape;
    return data[(l * s.num_points + i) * s.embed_dim + j];
  }

  friend bool operator==(const EmbeddingTensor&, const EmbeddingTensor&) = default;
};

namespace detail {

inline void require_params(const EmbxHeader& h, std::initializer_list<const char*> keys) {
  if (!h.condition_params.is_object())
    throw ValidationError("condition_params must be an object");
  for (const char* k : keys) {
    if (!h.condition_params.contains(k))
      throw ValidationError(std::string("condition_params missing '") + k + "' for condition " +
                            std::string(to_string(h.condition)));
  }
}

inline void put_u64_le(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(b.data(), 8);
}

inline std::uint64_t get_u64_le(const std::array<unsigned char, 8>& b) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

/// Throws ValidationError naming the first violated field.
inline void validate(const EmbxHeader& h) {
  if (h.format_version != kEmbxVersion)
    throw ValidationError("format_version: unsupported value " + std::to_string(h.format_version));
  if (h.dtype != "f32") throw ValidationError("dtype: only f32 is supported, got '" + h.dtype + "'");
  const auto& s = h.shape;
  if (s.num_layers < 1 || s.num_points < 1 || s.embed_dim < 1)
    throw ValidationError("shape: all components must be >= 1");
  if (s.num_points > (std::uint64_t{1} << 40) / s.embed_dim / s.num_layers)
    throw ValidationError("shape: element count too large");
  for (const auto& [name, labels] : h.label_schemes) {
    if (labels.size() != s.num_points)
      throw ValidationError("label_schemes[" + name + "] length mismatch: expected " +
                            std::to_string(s.num_points) + ", got " + std::to_string(labels.size()));
  }
  switch (h.condition) {
    case Condition::demonstrations:
      detail::require_params(h, {"num_demonstrations", "demo_seed"});
      break;
    case Condition::soft_prompt:
      detail::require_params(h, {"soft_prompt_length", "checkpoint_index"});
      break;
    default:
      detail::require_params(h, {});
  }
}

inline void validate(const EmbeddingTensor& t) {
  validate(t.header);
  if (t.data.size() != t.header.shape.element_count())
    throw ValidationError("data: expected " + std::to_string(t.header.shape.element_count()) +
                          " elements, got " + std::to_string(t.data.size()));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i]))
      throw ValidationError("data: non-finite value at flat index " + std::to_string(i));
  }
}

inline nlohmann::json header_to_json(const EmbxHeader& h) {
  nlohmann::json j;
  j["format_version"] = h.format_version;
  j["dtype"] = h.dtype;
  j["shape"] = {h.shape.num_layers, h.shape.num_points, h.shape.embed_dim};
  j["embedding_kind"] = std::string(to_string(h.embedding_kind));
  j["condition"] = std::string(to_string(h.condition));
  j["condition_params"] = h.condition_params;
  j["label_schemes"] = h.label_schemes;
  j["model_name"] = h.model_name;
  j["layer_index_base"] = h.layer_index_base;
  return j;
}

inline EmbxHeader header_from_json(const nlohmann::json& j) {
  try {
    EmbxHeader h;
    h.format_version = j.at("format_version").get<int>();
    h.dtype = j.at("dtype").get<std::string>();
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw FormatError("header: shape must be a 3-array");
    h.shape = {shape[0].get<std::uint64_t>(), shape[1].get<std::uint64_t>(),
               shape[2].get<std::uint64_t>()};
    h.embedding_kind = embedding_kind_from_string(j.at("embedding_kind").get<std::string>());
    h.condition = condition_from_string(j.at("condition").get<std::string>());
    h.condition_params = j.value("condition_params", nlohmann::json::object());
    h.label_schemes =
        j.value("label_schemes", std::map<std::string, std::vector<std::string>>{});
    h.model_name = j.value("model_name", std::string{});
    h.layer_index_base = j.value("layer_index_base", 0);
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("header: ") + e.what());
  }
}

/// Serializes the tensor and returns the number of bytes written.
inline std::uint64_t write_embx(const EmbeddingTensor& t, std::ostream& out) {
  validate(t);
  const std::string header = header_to_json(t.header).dump();
  out.write(kEmbxMagic.data(), 4);
  out.put(static_cast<char>(kEmbxVersion));
  detail::put_u64_le(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  } else {
    std::vector<char> buf(t.data.size() * 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const auto u = std::bit_cast<std::uint32_t>(t.data[i]);
      for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xffU);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write_embx: stream write failed");
  return 4 + 1 + 8 + header.size() + t.data.size() * 4;
}

/// Parses magic, version and JSON header, leaving the stream at the payload.
inline EmbxHeader read_embx_header(std::istream& in) {
  std::array<char, 5> lead{};
  in.read(lead.data(), 5);
  if (in.gcount() < 4 || std::memcmp(lead.data(), kEmbxMagic.data(), 4) != 0)
    throw FormatError("bad magic: not an EMBX stream");
  if (in.gcount() < 5) throw LengthError("truncated EMBX preamble");
  if (static_cast<std::uint8_t>(lead[4]) != kEmbxVersion)
    throw FormatError("unsupported EMBX version " +
                      std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(lead[4]))));
  std::array<unsigned char, 8> len_bytes{};
  in.read(reinterpret_cast<char*>(len_bytes.data()), 8);
  if (in.gcount() != 8) throw LengthError("truncated EMBX header length");
  const std::uint64_t header_len = detail::get_u64_le(len_bytes);
  if (header_len > kEmbxMaxHeaderBytes) throw FormatError("header length implausibly large");

  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len)
    throw LengthError("truncated EMBX header");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("header must be a JSON object");
  EmbxHeader h = header_from_json(j);
  validate(h);
  return h;
}

inline EmbeddingTensor read_embx(std::istream& in) {
  EmbeddingTensor t;
  t.header = read_embx_header(in);
  const std::uint64_t count = t.header.shape.element_count();
  t.data.resize(count);

  auto* raw = reinterpret_cast<char*>(t.data.data());
  in.read(raw, static_cast<std::streamsize>(count * 4));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != count * 4)
    throw LengthError("truncated EMBX payload: expected " + std::to_string(count * 4) +
                      " bytes, got " + std::to_string(got));
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after EMBX payload");

  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : t.data) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      v = std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xff00U) | ((u << 8) & 0xff0000U) | (u << 24));
    }
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::isfinite(t.data[i]))
      throw DataError("non-finite value at flat index " + std::to_string(i), i);
  }
  return t;
}

inline std::uint64_t write_embx_file(const EmbeddingTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const auto n = write_embx(t, out);
  out.close();
  if (!out) throw IoError("failed writing '" + path + "'");
  return n;
}

inline EmbeddingTensor read_embx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_embx(in);
}

}  // namespace mancap
