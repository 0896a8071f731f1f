// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/serialize.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/config.hpp"

namespace mucrasp {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp." +
                        std::to_string(::getpid()));
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw MucraspError("cannot open temp file " + tmp.string());
    writer(os);
    os.flush();
    if (!os) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw MucraspError("write failed for " + path);
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw MucraspError("rename to " + path + " failed: " + ec.message());
  }
}

void atomic_write_text(const std::string& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MucraspError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string config_to_json(const ModelConfig& cfg) {
  json j = {
      {"n_layers", cfg.n_layers},
      {"d_model", cfg.d_model},
      {"n_q_heads", cfg.n_q_heads},
      {"n_kv_groups", cfg.n_kv_groups},
      {"head_dim", cfg.head_dim},
      {"d_mlp", cfg.d_mlp},
      {"vocab_size", cfg.vocab_size},
      {"max_seq", cfg.max_seq},
      {"n_vision_tokens", cfg.n_vision_tokens},
      {"precision", precision_name(cfg.precision)},
      {"layer_kv_groups", cfg.layer_kv_groups},
      {"layer_d_mlp", cfg.layer_d_mlp},
  };
  return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw MucraspError(std::string("config JSON parse error: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_q_heads = j.at("n_q_heads").get<int>();
    cfg.n_kv_groups = j.at("n_kv_groups").get<int>();
    cfg.head_dim = j.at("head_dim").get<int>();
    cfg.d_mlp = j.at("d_mlp").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.max_seq = j.at("max_seq").get<int>();
    cfg.n_vision_tokens = j.at("n_vision_tokens").get<int>();
    cfg.precision = precision_from_name(j.at("precision").get<std::string>());
    cfg.layer_kv_groups = j.at("layer_kv_groups").get<std::vector<int>>();
    cfg.layer_d_mlp = j.at("layer_d_mlp").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw MucraspError(std::string("config JSON field error: ") + e.what());
  }
  return cfg;
}

}  // namespace mucrasp
