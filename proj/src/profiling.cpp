// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/profiling.hpp"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"

namespace mucrasp {

std::string sublayer_name(Sublayer s) {
  switch (s) {
    case Sublayer::attention: return "attention";
    case Sublayer::mlp: return "mlp";
  }
  throw MucraspError("sublayer_name: unknown sublayer");
}

Sublayer sublayer_from_name(const std::string& name) {
  if (name == "attention") return Sublayer::attention;
  if (name == "mlp") return Sublayer::mlp;
  throw MucraspError("unknown sublayer: " + name);
}

void SublayerMoments::add(const double* row, int dim, Modality tag) {
  if (static_cast<size_t>(dim) != sum_vision.size())
    throw MucraspError("SublayerMoments: dimension mismatch");
  std::vector<double>& sum = tag == Modality::vision ? sum_vision : sum_text;
  double sq = 0.0;
  for (int d = 0; d < dim; ++d) {
    sum[static_cast<size_t>(d)] += row[d];
    sq += row[d] * row[d];
  }
  (tag == Modality::vision ? n_vision : n_text) += 1;
  sum_sq_norm += sq;
  sum_norm += std::sqrt(sq);
}

void SublayerMoments::merge(const SublayerMoments& other) {
  if (other.sum_vision.size() != sum_vision.size())
    throw MucraspError("SublayerMoments: dimension mismatch in merge");
  for (size_t d = 0; d < sum_vision.size(); ++d) {
    sum_vision[d] += other.sum_vision[d];
    sum_text[d] += other.sum_text[d];
  }
  n_vision += other.n_vision;
  n_text += other.n_text;
  sum_sq_norm += other.sum_sq_norm;
  sum_norm += other.sum_norm;
}

double SublayerMoments::sens() const {
  if (total() == 0) throw MucraspError("sensitivity: no positions");
  return std::sqrt(sum_sq_norm / static_cast<double>(total()));
}

double SublayerMoments::cmds(double eps) const {
  if (n_vision == 0 || n_text == 0)
    throw MucraspError("cmds: a modality has zero positions");
  double gap_sq = 0.0;
  for (size_t d = 0; d < sum_vision.size(); ++d) {
    const double diff = sum_vision[d] / static_cast<double>(n_vision) -
                        sum_text[d] / static_cast<double>(n_text);
    gap_sq += diff * diff;
  }
  const double mean_norm = sum_norm / static_cast<double>(total());
  return std::sqrt(gap_sq) / (mean_norm + eps);
}

std::vector<LayerProfile> profile_layers(const ModelWeights& w,
                                         const ModelConfig& cfg,
                                         const Corpus& corpus, int jobs) {
  if (corpus.samples.empty())
    throw MucraspError("profile_layers: corpus is empty");
  const int n = static_cast<int>(corpus.samples.size());
  const int slots_per_sample = 2 * cfg.n_layers;

  std::vector<std::vector<SublayerMoments>> slots(static_cast<size_t>(n));
  parallel_for(n, jobs, [&](int i) {
    const CalibrationSample& s = corpus.samples[static_cast<size_t>(i)];
    ForwardTrace tr =
        forward(w, cfg, s.token_ids, s.vision_embeddings, TraceMode::eval);
    std::vector<SublayerMoments> local(static_cast<size_t>(slots_per_sample),
                                       SublayerMoments(cfg.d_model));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const LayerTrace& lt = tr.layers[static_cast<size_t>(l)];
      SublayerMoments& attn = local[static_cast<size_t>(2 * l)];
      SublayerMoments& mlp = local[static_cast<size_t>(2 * l + 1)];
      for (int t = 0; t < tr.seq; ++t) {
        const Modality tag = tr.tags[static_cast<size_t>(t)];
        attn.add(lt.attn_out.row(t), cfg.d_model, tag);
        mlp.add(lt.mlp_out.row(t), cfg.d_model, tag);
      }
    }
    slots[static_cast<size_t>(i)] = std::move(local);
  });

  std::vector<SublayerMoments> pooled(static_cast<size_t>(slots_per_sample),
                                      SublayerMoments(cfg.d_model));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < slots_per_sample; ++k)
      pooled[static_cast<size_t>(k)].merge(
          slots[static_cast<size_t>(i)][static_cast<size_t>(k)]);

  std::vector<LayerProfile> profiles;
  profiles.reserve(static_cast<size_t>(slots_per_sample));
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (Sublayer sub : {Sublayer::attention, Sublayer::mlp}) {
      const SublayerMoments& m =
          pooled[static_cast<size_t>(2 * l + (sub == Sublayer::mlp ? 1 : 0))];
      LayerProfile p;
      p.layer = l;
      p.sublayer = sub;
      p.sens_raw = m.sens();
      p.cmds_raw = m.cmds();
      profiles.push_back(p);
    }
  }
  return profiles;
}

double cmds_value(const std::vector<std::vector<double>>& vision_rows,
                  const std::vector<std::vector<double>>& text_rows,
                  double eps) {
  if (vision_rows.empty() || text_rows.empty())
    throw MucraspError("cmds: a modality has zero positions");
  const int dim = static_cast<int>(vision_rows.front().size());
  SublayerMoments m(dim);
  for (const auto& r : vision_rows) {
    if (static_cast<int>(r.size()) != dim)
      throw MucraspError("cmds: ragged activation rows");
    m.add(r.data(), dim, Modality::vision);
  }
  for (const auto& r : text_rows) {
    if (static_cast<int>(r.size()) != dim)
      throw MucraspError("cmds: ragged activation rows");
    m.add(r.data(), dim, Modality::text);
  }
  return m.cmds(eps);
}

double sensitivity_value(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw MucraspError("sensitivity: no positions");
  const int dim = static_cast<int>(rows.front().size());
  SublayerMoments m(dim);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != dim)
      throw MucraspError("sensitivity: ragged activation rows");
    m.add(r.data(), dim, Modality::text);
  }
  return m.sens();
}

std::vector<LayerProfile> normalize_profiles(std::vector<LayerProfile> profiles) {
  for (Sublayer sub : {Sublayer::attention, Sublayer::mlp}) {
    bool any = false;
    double sens_lo = 0, sens_hi = 0, cmds_lo = 0, cmds_hi = 0;
    for (const LayerProfile& p : profiles) {
      if (p.sublayer != sub) continue;
      if (!any) {
        sens_lo = sens_hi = p.sens_raw;
        cmds_lo = cmds_hi = p.cmds_raw;
        any = true;
      } else {
        sens_lo = std::min(sens_lo, p.sens_raw);
        sens_hi = std::max(sens_hi, p.sens_raw);
        cmds_lo = std::min(cmds_lo, p.cmds_raw);
        cmds_hi = std::max(cmds_hi, p.cmds_raw);
      }
    }
    if (!any)
      throw MucraspError("normalize_profiles: missing sublayer class " +
                         sublayer_name(sub));
    for (LayerProfile& p : profiles) {
      if (p.sublayer != sub) continue;
      p.sens_norm =
          sens_hi > sens_lo ? (p.sens_raw - sens_lo) / (sens_hi - sens_lo) : 0.0;
      p.cmds_norm =
          cmds_hi > cmds_lo ? (p.cmds_raw - cmds_lo) / (cmds_hi - cmds_lo) : 0.0;
    }
  }
  return profiles;
}

std::vector<double> layer_max_sens(const std::vector<LayerProfile>& profiles,
                                   int n_layers) {
  std::vector<double> out(static_cast<size_t>(n_layers), 0.0);
  for (const LayerProfile& p : profiles) {
    if (p.layer < 0 || p.layer >= n_layers)
      throw MucraspError("layer_max_sens: layer index out of range");
    out[static_cast<size_t>(p.layer)] =
        std::max(out[static_cast<size_t>(p.layer)], p.sens_raw);
  }
  return out;
}

std::string profiles_to_json(const std::vector<LayerProfile>& profiles) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LayerProfile& p : profiles) {
    arr.push_back({{"layer", p.layer},
                   {"sublayer", sublayer_name(p.sublayer)},
                   {"sens_raw", p.sens_raw},
                   {"cmds_raw", p.cmds_raw},
                   {"sens_norm", p.sens_norm},
                   {"cmds_norm", p.cmds_norm}});
  }
  return arr.dump(2) + "\n";
}

std::vector<LayerProfile> profiles_from_json(const std::string& json_text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw MucraspError(std::string("profiles: invalid JSON: ") + e.what());
  }
  try {
    std::vector<LayerProfile> out;
    for (const auto& row : arr) {
      LayerProfile p;
      p.layer = row.at("layer").get<int>();
      p.sublayer = sublayer_from_name(row.at("sublayer").get<std::string>());
      p.sens_raw = row.at("sens_raw").get<double>();
      p.cmds_raw = row.at("cmds_raw").get<double>();
      p.sens_norm = row.at("sens_norm").get<double>();
      p.cmds_norm = row.at("cmds_norm").get<double>();
      out.push_back(p);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw MucraspError(std::string("profiles: bad field: ") + e.what());
  }
}

}  // namespace mucrasp
