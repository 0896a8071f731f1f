// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/serialize.hpp"

namespace mucrasp {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'C', 'R', 'A', 'S', 'P', '0', '1'};

struct TensorRef {
  std::string name;
  const std::vector<double>* vec = nullptr;
  const Matrix* mat = nullptr;
  std::vector<long long> shape;
};

struct MutableTensorRef {
  std::string name;
  std::vector<double>* vec = nullptr;
  Matrix* mat = nullptr;
  std::vector<long long> shape;
};

// Fixed tensor order; the manifest mirrors it so readers need no name lookup.
template <typename W, typename Ref>
std::vector<Ref> tensor_list(W& w) {
  std::vector<Ref> refs;
  auto add_mat = [&](const std::string& name, auto& m) {
    refs.push_back({name, nullptr, &m, {m.rows, m.cols}});
  };
  auto add_vec = [&](const std::string& name, auto& v) {
    refs.push_back({name, &v, nullptr, {static_cast<long long>(v.size())}});
  };
  add_mat("token_embedding", w.token_embedding);
  add_mat("pos_embedding", w.pos_embedding);
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add_mat(p + "w_q", w.layers[l].w_q);
    add_mat(p + "w_k", w.layers[l].w_k);
    add_mat(p + "w_v", w.layers[l].w_v);
    add_mat(p + "w_o", w.layers[l].w_o);
    add_mat(p + "w_gate", w.layers[l].w_gate);
    add_mat(p + "w_up", w.layers[l].w_up);
    add_mat(p + "w_down", w.layers[l].w_down);
    add_vec(p + "norm_attn", w.layers[l].norm_attn);
    add_vec(p + "norm_mlp", w.layers[l].norm_mlp);
  }
  add_vec("final_norm", w.final_norm);
  add_mat("output_head", w.output_head);
  return refs;
}

void write_u64_le(std::ostream& os, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw MucraspError("checkpoint: truncated header length");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_payload(std::ostream& os, const double* data, size_t n, Precision p) {
  if (p == Precision::f64) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
  } else {
    std::vector<float> tmp(n);
    for (size_t i = 0; i < n; ++i) tmp[i] = static_cast<float>(data[i]);
    os.write(reinterpret_cast<const char*>(tmp.data()),
             static_cast<std::streamsize>(n * 4));
  }
}

void read_payload(std::istream& is, double* data, size_t n, Precision p) {
  if (p == Precision::f64) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
  } else {
    std::vector<float> tmp(n);
    is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * 4));
    for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(tmp[i]);
  }
  if (!is) throw MucraspError("checkpoint: tensor payload truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelWeights& w) {
  cfg.validate();
  auto refs = tensor_list<const ModelWeights, TensorRef>(w);

  json manifest = json::array();
  const std::string dtype = precision_name(cfg.precision);
  for (const auto& r : refs)
    manifest.push_back({{"name", r.name}, {"dtype", dtype}, {"shape", r.shape}});
  json header = {{"config", json::parse(config_to_json(cfg))}, {"manifest", manifest}};
  const std::string header_text = header.dump();

  atomic_write(path, [&](std::ostream& os) {
    os.write(kMagic, 8);
    write_u64_le(os, header_text.size());
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& r : refs) {
      const double* data = r.mat ? r.mat->data.data() : r.vec->data();
      const size_t n = r.mat ? r.mat->size() : r.vec->size();
      write_payload(os, data, n, cfg.precision);
    }
    if (!os) throw MucraspError("checkpoint: write failed for " + path);
  });
}

std::pair<ModelConfig, ModelWeights> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MucraspError("checkpoint: cannot open " + path);

  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw MucraspError("checkpoint: bad magic in " + path);

  const uint64_t header_len = read_u64_le(is);
  if (header_len > (1ULL << 30))
    throw MucraspError("checkpoint: implausible header length");
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw MucraspError("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw MucraspError(std::string("checkpoint: malformed header JSON: ") + e.what());
  }
  if (!header.contains("config") || !header.contains("manifest"))
    throw MucraspError("checkpoint: header missing config or manifest");

  ModelConfig cfg = config_from_json(header["config"].dump());
  cfg.validate();

  ModelWeights w = zero_gradients(cfg);  // shape-congruent allocation
  auto refs = tensor_list<ModelWeights, MutableTensorRef>(w);

  const json& manifest = header["manifest"];
  if (!manifest.is_array() || manifest.size() != refs.size())
    throw MucraspError("checkpoint: manifest entry count does not match config");

  for (size_t i = 0; i < refs.size(); ++i) {
    const json& e = manifest[i];
    const std::string name = e.at("name").get<std::string>();
    if (name != refs[i].name)
      throw MucraspError("checkpoint: manifest order mismatch at '" + name +
                         "' (expected '" + refs[i].name + "')");
    const Precision dtype = precision_from_name(e.at("dtype").get<std::string>());
    if (dtype != cfg.precision)
      throw MucraspError("checkpoint: tensor dtype disagrees with config precision");
    std::vector<long long> shape = e.at("shape").get<std::vector<long long>>();
    if (shape != refs[i].shape)
      throw MucraspError("checkpoint: shape mismatch for tensor '" + name + "'");
    double* data = refs[i].mat ? refs[i].mat->data.data() : refs[i].vec->data();
    const size_t n = refs[i].mat ? refs[i].mat->size() : refs[i].vec->size();
    read_payload(is, data, n, cfg.precision);
  }

  // Trailing garbage means the file is not what the manifest promised.
  is.peek();
  if (!is.eof()) throw MucraspError("checkpoint: trailing bytes after payload");
  return {std::move(cfg), std::move(w)};
}

}  // namespace mucrasp
