#include "ssm/harness/checkpoint.hpp"

#include <cstring>
#include <iterator>

#include "ssm/errors.hpp"
#include "ssm/synthdata/ssmf.hpp"

namespace ssm::harness {

namespace le = synth::le;
using num::ParamStore;
using num::Tensor;

void quantize_to_f32(ParamStore& store) {
  for (auto& [name, tensor] : store) {
    for (auto& v : tensor.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

Checkpoint make_checkpoint(const RunConfig& config, ParamStore params, objective::OptimState optim,
                           std::uint64_t step) {
  Checkpoint c{config, std::move(params), std::move(optim), step};
  quantize_to_f32(c.params);
  quantize_to_f32(c.optim.first_moment);
  quantize_to_f32(c.optim.second_moment);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  const auto& params = checkpoint.params;
  const bool has_moments = checkpoint.optim.first_moment.size() > 0;
  if (has_moments && !(checkpoint.optim.first_moment.names() == params.names() &&
                       checkpoint.optim.second_moment.names() == params.names())) {
    throw StateError("checkpoint: optimizer state does not match parameters");
  }
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params) tensors.push_back({{"name", name}, {"shape", t.shape()}});
  nlohmann::json header = {{"config", to_json(checkpoint.config)},
                           {"step", checkpoint.step},
                           {"optimizer_step", checkpoint.optim.step},
                           {"has_optimizer", has_moments},
                           {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kSsmcMagic), std::end(kSsmcMagic));
  out.push_back(kSsmcVersion);
  le::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  auto put_store = [&](const ParamStore& store) {
    for (const auto& [name, t] : store) {
      for (double v : t.data()) le::put_f32(out, static_cast<float>(v));
    }
  };
  put_store(params);
  if (has_moments) {
    put_store(checkpoint.optim.first_moment);
    put_store(checkpoint.optim.second_moment);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSsmcMagic, 4) != 0) {
    throw ParseError(ParseErrorKind::bad_magic, "not an SSMC checkpoint");
  }
  if (bytes.size() < 9) throw ParseError(ParseErrorKind::truncated, "file ends inside the preamble");
  if (bytes[4] != kSsmcVersion) {
    throw ParseError(ParseErrorKind::bad_version, "unsupported SSMC version " + std::to_string(bytes[4]));
  }
  const std::size_t header_len = le::get_u32(bytes.data() + 5);
  if (bytes.size() < 9 + header_len) throw ParseError(ParseErrorKind::truncated, "file ends inside the header");

  Checkpoint c;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> manifest;
  bool has_moments = false;
  try {
    const auto header =
        nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    c.config = config_from_json(header.at("config"));
    c.step = header.at("step").get<std::uint64_t>();
    c.optim.step = header.at("optimizer_step").get<std::uint64_t>();
    has_moments = header.at("has_optimizer").get<bool>();
    for (const auto& t : header.at("tensors")) {
      manifest.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::bad_header, e.what());
  } catch (const ArgumentError& e) {
    throw ParseError(ParseErrorKind::bad_header, e.what());
  }

  std::size_t scalars = 0;
  for (const auto& [name, shape] : manifest) {
    if (shape.empty() || shape.size() > 2 || num::shape_product(shape) == 0) {
      throw ParseError(ParseErrorKind::bad_header, "bad shape for " + name);
    }
    scalars += num::shape_product(shape);
  }
  const std::size_t payload = scalars * 4 * (has_moments ? 3 : 1);
  const std::size_t start = 9 + header_len;
  const std::size_t available = bytes.size() - start;
  if (available < payload) {
    throw ParseError(ParseErrorKind::truncated, "payload holds " + std::to_string(available) + " of " +
                                                    std::to_string(payload) + " bytes");
  }
  if (available > payload) {
    throw ParseError(ParseErrorKind::size_mismatch, std::to_string(available - payload) + " trailing bytes");
  }

  const std::uint8_t* p = bytes.data() + start;
  auto read_store = [&](ParamStore& store) {
    for (const auto& [name, shape] : manifest) {
      Tensor t(shape, 0.0);
      for (auto& v : t.data()) {
        v = static_cast<double>(le::get_f32(p));
        p += 4;
      }
      try {
        store.add(name, std::move(t));
      } catch (const ArgumentError& e) {
        throw ParseError(ParseErrorKind::bad_header, e.what());
      }
    }
  };
  read_store(c.params);
  if (has_moments) {
    read_store(c.optim.first_moment);
    read_store(c.optim.second_moment);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  synth::write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(synth::read_file_bytes(path));
}

}  // namespace ssm::harness
