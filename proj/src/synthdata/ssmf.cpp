#include "ssm/synthdata/ssmf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ssm/errors.hpp"

namespace ssm::synth {

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::int32_t get_i32(const std::uint8_t* p) { return static_cast<std::int32_t>(get_u32(p)); }

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace le

std::vector<std::uint8_t> encode_feature_file(const Episode& episode) {
  const std::size_t n = episode.length(), d = episode.features.cols();
  const bool labels = episode.has_labels();
  if (labels && (episode.y_d.size() != n || episode.y_a.size() != n)) {
    throw DimensionError("ssmf: label count does not match frame count");
  }
  nlohmann::json header = {{"frames", n},          {"dim", d},
                           {"fps", episode.fps},   {"has_labels", labels},
                           {"horizon", episode.horizon}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kSsmfMagic), std::end(kSsmfMagic));
  out.push_back(kSsmfVersion);
  le::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + n * d * 4 + (labels ? 8 * n : 0));
  for (double v : episode.features.data()) le::put_f32(out, static_cast<float>(v));
  if (labels) {
    for (int y : episode.y_d) le::put_i32(out, y);
    for (int y : episode.y_a) le::put_i32(out, y);
  }
  return out;
}

Episode decode_feature_file(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSsmfMagic, 4) != 0) {
    throw ParseError(ParseErrorKind::bad_magic, "not an SSMF file");
  }
  if (bytes.size() < 9) throw ParseError(ParseErrorKind::truncated, "file ends inside the preamble");
  if (bytes[4] != kSsmfVersion) {
    throw ParseError(ParseErrorKind::bad_version, "unsupported SSMF version " + std::to_string(bytes[4]));
  }
  const std::size_t header_len = le::get_u32(bytes.data() + 5);
  if (bytes.size() < 9 + header_len) throw ParseError(ParseErrorKind::truncated, "file ends inside the header");

  nlohmann::json header;
  std::size_t n = 0, d = 0, horizon = 0;
  double fps = 0.0;
  bool labels = false;
  try {
    header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    n = header.at("frames").get<std::size_t>();
    d = header.at("dim").get<std::size_t>();
    fps = header.at("fps").get<double>();
    labels = header.at("has_labels").get<bool>();
    horizon = header.at("horizon").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::bad_header, e.what());
  }
  if (n == 0 || d == 0) throw ParseError(ParseErrorKind::bad_header, "frames and dim must be positive");

  const std::size_t payload = n * d * 4 + (labels ? 8 * n : 0);
  const std::size_t start = 9 + header_len;
  const std::size_t available = bytes.size() - start;
  if (available < payload) {
    throw ParseError(ParseErrorKind::truncated, "header declares " + std::to_string(n) + " frames, payload holds " +
                                                    std::to_string(available) + " of " + std::to_string(payload) +
                                                    " bytes");
  }
  if (available > payload) {
    throw ParseError(ParseErrorKind::size_mismatch, std::to_string(available - payload) + " trailing bytes");
  }

  Episode ep;
  ep.fps = fps;
  ep.horizon = horizon;
  ep.features = num::Tensor::matrix(n, d);
  const std::uint8_t* p = bytes.data() + start;
  for (auto& v : ep.features.data()) {
    v = static_cast<double>(le::get_f32(p));
    p += 4;
  }
  if (labels) {
    ep.y_d.resize(n);
    ep.y_a.resize(n);
    for (auto& y : ep.y_d) {
      y = le::get_i32(p);
      p += 4;
    }
    for (auto& y : ep.y_a) {
      y = le::get_i32(p);
      p += 4;
    }
  }
  if (!ep.features.all_finite()) throw ParseError(ParseErrorKind::bad_header, "non-finite feature values");
  return ep;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(ParseErrorKind::io, "short write to " + path.string());
}

void write_feature_file(const std::filesystem::path& path, const Episode& episode) {
  write_file_bytes(path, encode_feature_file(episode));
}

Episode load_feature_file(const std::filesystem::path& path) { return decode_feature_file(read_file_bytes(path)); }

}  // namespace ssm::synth
