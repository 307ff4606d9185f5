#include "heterogcn/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace heterogcn {

namespace {

// Serialize doubles explicitly little-endian so checkpoints are portable and
// byte-stable regardless of host order.
void append_le(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

double read_le(const std::string& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(in[offset + i]);
  }
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& stem, const RunConfig& cfg, const nn::ParamStore& params) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string blob;
  blob.reserve(params.scalar_count() * 8);
  for (const std::string& name : params.sorted_names()) {
    const ad::Tensor& t = params.get(name);
    manifest.push_back({{"name", name}, {"shape", {t.rows, t.cols}}});
    for (double v : t.data) {
      append_le(blob, v);
    }
  }
  nlohmann::json j{{"config", run_config_to_json(cfg)}, {"params", std::move(manifest)}};

  std::ofstream jf(stem + ".json", std::ios::binary);
  if (!jf) {
    throw ValidationError("cannot write checkpoint manifest '" + stem + ".json'");
  }
  jf << j.dump(2) << "\n";
  std::ofstream bf(stem + ".bin", std::ios::binary);
  if (!bf) {
    throw ValidationError("cannot write checkpoint binary '" + stem + ".bin'");
  }
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::string& stem) {
  std::ifstream jf(stem + ".json", std::ios::binary);
  if (!jf) {
    throw ValidationError("cannot open checkpoint manifest '" + stem + ".json'");
  }
  nlohmann::json j;
  try {
    jf >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint manifest '" + stem + ".json' is malformed: " + e.what());
  }

  std::ifstream bf(stem + ".bin", std::ios::binary);
  if (!bf) {
    throw ValidationError("cannot open checkpoint binary '" + stem + ".bin'");
  }
  std::ostringstream buf;
  buf << bf.rdbuf();
  const std::string blob = buf.str();

  Checkpoint out;
  try {
    out.config = run_config_from_json(j.at("config"));
    std::size_t offset = 0;
    for (const auto& entry : j.at("params")) {
      const std::string name = entry.at("name").get<std::string>();
      const int rows = entry.at("shape").at(0).get<int>();
      const int cols = entry.at("shape").at(1).get<int>();
      if (rows < 0 || cols < 0) {
        throw ValidationError("checkpoint parameter '" + name + "' has negative shape");
      }
      ad::Tensor t(rows, cols);
      const std::size_t bytes = t.data.size() * 8;
      if (offset + bytes > blob.size()) {
        throw ValidationError("checkpoint binary '" + stem + ".bin' is truncated: parameter '" +
                              name + "' needs " + std::to_string(bytes) + " bytes at offset " +
                              std::to_string(offset) + ", file has " +
                              std::to_string(blob.size()));
      }
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        t.data[i] = read_le(blob, offset + i * 8);
      }
      offset += bytes;
      out.params.add(name, std::move(t));
    }
    if (offset != blob.size()) {
      throw ValidationError("checkpoint binary '" + stem + ".bin' has " +
                            std::to_string(blob.size() - offset) +
                            " trailing bytes beyond the manifest");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest '" + stem + ".json' is missing fields: " + e.what());
  }
  return out;
}

}  // namespace heterogcn
