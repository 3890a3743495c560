#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phasesched/autodiff.hpp"
#include "phasesched/matrix.hpp"

namespace phasesched {

inline std::string base64_encode(const void* bytes, std::size_t n) {
  static const char* tbl =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t v = std::uint32_t(p[i]) << 16;
    if (i + 1 < n) v |= std::uint32_t(p[i + 1]) << 8;
    if (i + 2 < n) v |= std::uint32_t(p[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? tbl[v & 63] : '=');
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw std::invalid_argument("base64: bad character");
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i + 3 < s.size(); i += 4) {
    const int a = val(s[i]), b = val(s[i + 1]), c = val(s[i + 2]), d = val(s[i + 3]);
    const std::uint32_t v = (std::uint32_t(a) << 18) | (std::uint32_t(b) << 12) |
                            (std::uint32_t(c < 0 ? 0 : c) << 6) |
                            std::uint32_t(d < 0 ? 0 : d);
    out.push_back((v >> 16) & 0xff);
    if (c >= 0) out.push_back((v >> 8) & 0xff);
    if (d >= 0) out.push_back(v & 0xff);
  }
  return out;
}

// Little-endian 64-bit float blobs.
inline std::string encode_doubles(const std::vector<double>& v) {
  return base64_encode(v.data(), v.size() * sizeof(double));
}

inline std::vector<double> decode_doubles(const std::string& b64) {
  auto raw = base64_decode(b64);
  if (raw.size() % sizeof(double) != 0)
    throw std::invalid_argument("decode_doubles: blob not a multiple of 8 bytes");
  std::vector<double> out(raw.size() / sizeof(double));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

inline nlohmann::json densenet_to_json(const DenseNet& net) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["sizes"] = net.sizes;
  std::vector<std::string> acts;
  std::vector<std::string> weights, biases;
  for (const auto& l : net.layers) {
    acts.push_back(act_name(l.act));
    weights.push_back(encode_doubles(l.w.value.data));
    biases.push_back(encode_doubles(l.b.value.data));
  }
  j["activations"] = acts;
  j["weights"] = weights;
  j["biases"] = biases;
  return j;
}

inline DenseNet densenet_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("DenseNet: unsupported format_version");
  DenseNet net;
  net.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  const auto acts = j.at("activations").get<std::vector<std::string>>();
  const auto weights = j.at("weights").get<std::vector<std::string>>();
  const auto biases = j.at("biases").get<std::vector<std::string>>();
  require(acts.size() == net.sizes.size() - 1, "DenseNet json: activation count");
  require(weights.size() == acts.size() && biases.size() == acts.size(),
          "DenseNet json: blob count");
  for (std::size_t i = 0; i < acts.size(); ++i) {
    DenseLayer layer;
    layer.act = act_from_name(acts[i]);
    layer.w = Param(net.sizes[i + 1], net.sizes[i]);
    layer.b = Param(1, net.sizes[i + 1]);
    layer.w.value.data = decode_doubles(weights[i]);
    layer.b.value.data = decode_doubles(biases[i]);
    require(layer.w.value.data.size() == net.sizes[i + 1] * net.sizes[i],
            "DenseNet json: weight blob size");
    require(layer.b.value.data.size() == net.sizes[i + 1],
            "DenseNet json: bias blob size");
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace phasesched
