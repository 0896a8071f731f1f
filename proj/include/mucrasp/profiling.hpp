// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mucrasp/corpus.hpp"
#include "mucrasp/model.hpp"

namespace mucrasp {

enum class Sublayer : uint8_t { attention, mlp };

std::string sublayer_name(Sublayer s);
Sublayer sublayer_from_name(const std::string& name);

// Per-(layer, sublayer) activation statistics. The raw stats come from one
// calibration sweep; the normalized fields from normalize_profiles(); omega
// and protection are filled in by the pruning planner.
struct LayerProfile {
  int layer = 0;
  Sublayer sublayer = Sublayer::attention;
  double sens_raw = 0.0;    // sqrt(mean squared l2 norm of the sublayer output)
  double cmds_raw = 0.0;    // cross-modal mean gap over mean activation norm
  double sens_norm = 0.0;   // min-max within the sublayer class, in [0,1]
  double cmds_norm = 0.0;
  double omega = 1.0;       // structural prior (depth/kind/modality boosts)
  double protection = 1.0;  // (1 + alpha*sens_norm)(1 + beta*cmds_norm) * omega
};

inline constexpr double kCmdsEps = 1e-8;

// Streaming moments for one sublayer's activations, split by modality tag.
// add() order does not affect the results beyond float associativity, and
// merge() lets per-sample partials reduce deterministically.
struct SublayerMoments {
  std::vector<double> sum_vision, sum_text;  // per-dim activation sums
  long long n_vision = 0, n_text = 0;
  double sum_sq_norm = 0.0;  // sum of squared l2 norms, all positions
  double sum_norm = 0.0;     // sum of l2 norms, all positions

  explicit SublayerMoments(int dim = 0)
      : sum_vision(static_cast<size_t>(dim), 0.0),
        sum_text(static_cast<size_t>(dim), 0.0) {}

  void add(const double* row, int dim, Modality tag);
  void merge(const SublayerMoments& other);
  long long total() const { return n_vision + n_text; }
  double sens() const;
  double cmds(double eps = kCmdsEps) const;
};

// Raw profiles (sens_raw, cmds_raw) for every layer and sublayer, pooled over
// every position of every sample. Output order: layer ascending, attention
// before mlp. The hook point is the sublayer's output projection (W_O or
// W_down output), before the residual add.
std::vector<LayerProfile> profile_layers(const ModelWeights& w,
                                         const ModelConfig& cfg,
                                         const Corpus& corpus, int jobs = 1);

// Closed-form helpers over injected activation rows (each row one position).
double cmds_value(const std::vector<std::vector<double>>& vision_rows,
                  const std::vector<std::vector<double>>& text_rows,
                  double eps = kCmdsEps);
double sensitivity_value(const std::vector<std::vector<double>>& rows);

// Min-max across layers within each sublayer class; a constant class maps
// to all zeros.
std::vector<LayerProfile> normalize_profiles(std::vector<LayerProfile> profiles);

// Per-layer aggregate sensitivity/CMDS = max over the layer's two sublayers,
// for consumers that want a single value per layer.
std::vector<double> layer_max_sens(const std::vector<LayerProfile>& profiles,
                                   int n_layers);

std::string profiles_to_json(const std::vector<LayerProfile>& profiles);
std::vector<LayerProfile> profiles_from_json(const std::string& json_text);

}  // namespace mucrasp
