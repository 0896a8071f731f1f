// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mucrasp/attribution.hpp"
#include "mucrasp/corpus.hpp"
#include "mucrasp/profiling.hpp"
#include "mucrasp/units.hpp"

namespace mucrasp {

enum class PivotMode : uint8_t { real, random, none };
enum class Allocation : uint8_t { global, layerwise };
enum class Scoring : uint8_t { mucrasp, magnitude, taylor };

std::string pivot_mode_name(PivotMode m);
PivotMode pivot_mode_from_name(const std::string& name);
std::string allocation_name(Allocation a);
Allocation allocation_from_name(const std::string& name);
std::string scoring_name(Scoring s);
Scoring scoring_from_name(const std::string& name);

// Knobs for one pruning run. Defaults are the reference settings; the
// *_override fields force alpha/beta away from their ratio-conditioned
// formulas (NaN = use the formula) for ablation experiments.
struct PruningConfig {
  double S = 0.5;  // fraction of prunable parameters to remove, in (0,1)
  int half_width = 8;
  double gamma_base = 0.4;
  double rho = 2.0;
  int min_markers = 2;
  int n_early = 4;
  int n_final = 2;
  double final_boost = 1.3;
  double attention_boost = 1.8;
  double vision_boost = 1.2;
  PivotMode pivot_mode = PivotMode::real;
  bool cmds_enabled = true;
  Allocation allocation = Allocation::global;
  Scoring scoring = Scoring::mucrasp;
  bool attn_qo_only = false;
  double alpha_override = std::nan("");
  double beta_override = std::nan("");
  uint64_t seed = 42;
  int jobs = 1;

  double alpha() const {
    return std::isnan(alpha_override) ? 0.3 + 1.5 * S : alpha_override;
  }
  double beta() const {
    return std::isnan(beta_override) ? 0.2 + S : beta_override;
  }

  void validate() const;
};

// gamma_base * (1 - S)^rho: the pivot signal's fusion weight, decaying as the
// pruning ratio grows.
double dynamic_gamma(double S, double gamma_base, double rho);

// Per-layer minimum unit retention.
int attn_min_keep(int n_units, double S);
int mlp_min_keep(int n_units, double S);

// (1-gamma)*global + gamma*pivot per unit. Both inputs must be normalized
// over the same unit universe.
ImportanceTable fuse(const ImportanceTable& global_table,
                     const ImportanceTable& pivot_table, double gamma);

// Omega: product of early-depth, final-depth, attention and vision boosts
// that apply to (layer, sublayer). No unit in this decoder is vision-tagged,
// so vision_unit exists for completeness and tests.
double structural_prior(int layer, Sublayer sublayer, int n_layers,
                        const PruningConfig& cfg, bool vision_unit = false);

// P = (1 + alpha*sens_norm) * (1 + beta*cmds_norm) * omega, the cmds term
// dropping to 1 when cmds_enabled is false. Reads profile.omega.
double protection_factor(const LayerProfile& profile, const PruningConfig& cfg);

struct GreedyResult {
  std::vector<uint8_t> kept;  // aligned with the input units
  bool fallback_used = false;
  long long kept_cost = 0;
  double kept_value = 0.0;
};

// Descending value/cost with (layer, kind, index) ascending tie-break,
// skip-and-continue; the result is compared against the best single unit
// that fits alone (greedy-filled to maximality) and the higher-value set
// wins. Guarantees >= 1/2 of the 0/1-knapsack optimum.
GreedyResult greedy_pack(const std::vector<StructuralUnit>& units,
                         const std::vector<double>& values, long long budget);

struct SafetyResult {
  std::vector<uint8_t> kept;
  std::vector<int> forced_in;  // indices into units, in force order
  std::vector<int> evicted;    // indices into units, in eviction order
};

// Forces each (layer, kind) up to its minimum retention, then evicts the
// lowest-efficiency evictable units until the budget holds again. Throws
// when the minimum-retention floor alone exceeds the budget.
SafetyResult enforce_safety(const std::vector<StructuralUnit>& units,
                            const std::vector<double>& values,
                            std::vector<uint8_t> kept, const ModelConfig& mcfg,
                            const PruningConfig& cfg, long long budget);

struct PruningPlan {
  ModelConfig model_config;
  PruningConfig config;
  std::vector<StructuralUnit> units;
  std::vector<double> values;        // v(u), the packing objective
  std::vector<double> efficiencies;  // v(u) / cost(u)
  std::vector<uint8_t> kept;
  long long budget = 0;             // floor((1-S) * prunable params), enforced
  long long budget_total_base = 0;  // floor((1-S) * all params), reported only
  long long prunable_params_total = 0;
  long long total_params = 0;
  long long kept_params = 0;  // kept prunable parameters
  bool fallback_used = false;
  std::vector<StructuralUnit> forced_in;
  std::vector<StructuralUnit> evicted;
  std::vector<LayerProfile> profiles;  // empty when scoring bypasses profiling
};

// Runs the full scoring + allocation pipeline for the configured mode.
PruningPlan build_plan(const ModelWeights& w, const ModelConfig& mcfg,
                       const Corpus& corpus, const PruningConfig& cfg);

KeepSet plan_keep_set(const PruningPlan& plan);

// Equality of everything the allocator decided (units, scores, keep flags,
// budget accounting, safety trail) ignoring the config snapshots, so ablation
// plumbing can assert two differently-configured runs made identical choices.
bool plan_decisions_equal(const PruningPlan& a, const PruningPlan& b);

std::string plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const std::string& json_text);

}  // namespace mucrasp
