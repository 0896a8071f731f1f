// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/allocator.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <tuple>
#include <utility>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/serialize.hpp"

namespace mucrasp {

namespace {

using nlohmann::json;

std::tuple<int, int, int> unit_key(const StructuralUnit& u) {
  return {u.layer, static_cast<int>(u.kind), u.index};
}

// Indices sorted by efficiency descending, (layer, kind, index) ascending on
// ties — the canonical packing order.
std::vector<int> efficiency_order(const std::vector<StructuralUnit>& units,
                                  const std::vector<double>& eff) {
  std::vector<int> idx(units.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ea = eff[static_cast<size_t>(a)];
    const double eb = eff[static_cast<size_t>(b)];
    if (ea != eb) return ea > eb;
    return unit_key(units[static_cast<size_t>(a)]) <
           unit_key(units[static_cast<size_t>(b)]);
  });
  return idx;
}

std::vector<double> efficiencies_of(const std::vector<StructuralUnit>& units,
                                    const std::vector<double>& values) {
  std::vector<double> eff(units.size());
  for (size_t i = 0; i < units.size(); ++i)
    eff[i] = values[i] / static_cast<double>(units[i].cost);
  return eff;
}

void check_pack_args(const std::vector<StructuralUnit>& units,
                     const std::vector<double>& values, long long budget) {
  if (values.size() != units.size())
    throw MucraspError("greedy_pack: one value per unit required");
  if (budget < 0) throw MucraspError("greedy_pack: negative budget");
  for (size_t i = 0; i < units.size(); ++i) {
    if (units[i].cost < 1) throw MucraspError("greedy_pack: unit cost must be >= 1");
    if (!std::isfinite(values[i]) || values[i] < 0.0)
      throw MucraspError("greedy_pack: unit values must be finite and >= 0");
  }
}

// Number of units and minimum retention per (layer, kind). The formula floor
// is clamped to the layer's unit count: a layer can never retain more units
// than it has.
struct LayerQuota {
  int n = 0;
  int min_keep = 0;
};

std::vector<LayerQuota> layer_quotas(const ModelConfig& mcfg,
                                     const PruningConfig& cfg) {
  std::vector<LayerQuota> q(static_cast<size_t>(2 * mcfg.n_layers));
  for (int l = 0; l < mcfg.n_layers; ++l) {
    const int n_mlp = mcfg.mlp_width(l);
    const int n_grp = mcfg.kv_groups(l);
    q[static_cast<size_t>(2 * l)] = {n_mlp,
                                     std::min(mlp_min_keep(n_mlp, cfg.S), n_mlp)};
    q[static_cast<size_t>(2 * l + 1)] = {
        n_grp, std::min(attn_min_keep(n_grp, cfg.S), n_grp)};
  }
  return q;
}

size_t quota_slot(const StructuralUnit& u) {
  return static_cast<size_t>(2 * u.layer +
                             (u.kind == UnitKind::GqaGroup ? 1 : 0));
}

json unit_ref_json(const StructuralUnit& u) {
  return {{"kind", unit_kind_name(u.kind)}, {"layer", u.layer}, {"index", u.index}};
}

StructuralUnit unit_ref_from_json(const json& j, const ModelConfig& mcfg) {
  StructuralUnit u;
  u.kind = unit_kind_from_name(j.at("kind").get<std::string>());
  u.layer = j.at("layer").get<int>();
  u.index = j.at("index").get<int>();
  u.cost = u.kind == UnitKind::MlpNeuron ? mlp_neuron_cost(mcfg)
                                         : gqa_group_cost(mcfg);
  return u;
}

}  // namespace

std::string pivot_mode_name(PivotMode m) {
  switch (m) {
    case PivotMode::real: return "real";
    case PivotMode::random: return "random";
    case PivotMode::none: return "none";
  }
  throw MucraspError("pivot_mode_name: unknown mode");
}

PivotMode pivot_mode_from_name(const std::string& name) {
  if (name == "real") return PivotMode::real;
  if (name == "random") return PivotMode::random;
  if (name == "none") return PivotMode::none;
  throw MucraspError("unknown pivot mode: " + name);
}

std::string allocation_name(Allocation a) {
  switch (a) {
    case Allocation::global: return "global";
    case Allocation::layerwise: return "layerwise";
  }
  throw MucraspError("allocation_name: unknown allocation");
}

Allocation allocation_from_name(const std::string& name) {
  if (name == "global") return Allocation::global;
  if (name == "layerwise") return Allocation::layerwise;
  throw MucraspError("unknown allocation: " + name);
}

std::string scoring_name(Scoring s) {
  switch (s) {
    case Scoring::mucrasp: return "mucrasp";
    case Scoring::magnitude: return "magnitude";
    case Scoring::taylor: return "taylor";
  }
  throw MucraspError("scoring_name: unknown scoring");
}

Scoring scoring_from_name(const std::string& name) {
  if (name == "mucrasp") return Scoring::mucrasp;
  if (name == "magnitude") return Scoring::magnitude;
  if (name == "taylor") return Scoring::taylor;
  throw MucraspError("unknown scoring: " + name);
}

void PruningConfig::validate() const {
  if (!(S > 0.0 && S < 1.0))
    throw MucraspError("pruning ratio must lie strictly between 0 and 1");
  if (half_width < 0) throw MucraspError("window half-width must be >= 0");
  if (gamma_base < 0.0 || gamma_base > 1.0)
    throw MucraspError("gamma_base must lie in [0, 1]");
  if (rho < 0.0) throw MucraspError("rho must be >= 0");
  if (min_markers < 0) throw MucraspError("min_markers must be >= 0");
  if (n_early < 0 || n_final < 0)
    throw MucraspError("layer-boost counts must be >= 0");
  if (final_boost < 1.0 || attention_boost < 1.0 || vision_boost < 1.0)
    throw MucraspError("structural boosts must be >= 1");
  if (!std::isnan(alpha_override) && !std::isfinite(alpha_override))
    throw MucraspError("alpha override must be finite");
  if (!std::isnan(beta_override) && !std::isfinite(beta_override))
    throw MucraspError("beta override must be finite");
  if (jobs < 0) throw MucraspError("jobs must be >= 0");
}

double dynamic_gamma(double S, double gamma_base, double rho) {
  if (S < 0.0 || S > 1.0) throw MucraspError("dynamic_gamma: S must lie in [0, 1]");
  return gamma_base * std::pow(1.0 - S, rho);
}

int attn_min_keep(int n_units, double S) {
  if (n_units < 0) throw MucraspError("attn_min_keep: negative unit count");
  const double frac = std::max(0.35, 0.70 * (1.0 - S));
  return std::max(2, static_cast<int>(std::floor(n_units * frac)));
}

int mlp_min_keep(int n_units, double S) {
  if (n_units < 0) throw MucraspError("mlp_min_keep: negative unit count");
  const double frac = std::max(0.05, 0.25 * (1.0 - S));
  return std::max(1, static_cast<int>(std::floor(n_units * frac)));
}

ImportanceTable fuse(const ImportanceTable& global_table,
                     const ImportanceTable& pivot_table, double gamma) {
  if (!global_table.normalized || !pivot_table.normalized)
    throw MucraspError("fuse: both tables must be normalized");
  if (gamma < 0.0 || gamma > 1.0) throw MucraspError("fuse: gamma must lie in [0, 1]");
  if (global_table.units != pivot_table.units)
    throw MucraspError("fuse: tables cover different unit universes");
  ImportanceTable out;
  out.kind = TableKind::fused;
  out.sample_count = global_table.sample_count;
  out.normalized = true;
  out.units = global_table.units;
  out.scores.resize(global_table.scores.size());
  for (size_t i = 0; i < out.scores.size(); ++i)
    out.scores[i] =
        (1.0 - gamma) * global_table.scores[i] + gamma * pivot_table.scores[i];
  return out;
}

double structural_prior(int layer, Sublayer sublayer, int n_layers,
                        const PruningConfig& cfg, bool vision_unit) {
  if (layer < 0 || layer >= n_layers)
    throw MucraspError("structural_prior: layer out of range");
  double omega = 1.0;
  if (layer < cfg.n_early)
    omega *= 1.0 + 0.5 * (1.0 - static_cast<double>(layer) /
                                    static_cast<double>(cfg.n_early));
  if (layer >= n_layers - cfg.n_final) omega *= cfg.final_boost;
  if (sublayer == Sublayer::attention) omega *= cfg.attention_boost;
  if (vision_unit) omega *= cfg.vision_boost;
  return omega;
}

double protection_factor(const LayerProfile& profile, const PruningConfig& cfg) {
  const double sens_term = 1.0 + cfg.alpha() * profile.sens_norm;
  const double cmds_term =
      cfg.cmds_enabled ? 1.0 + cfg.beta() * profile.cmds_norm : 1.0;
  return sens_term * cmds_term * profile.omega;
}

GreedyResult greedy_pack(const std::vector<StructuralUnit>& units,
                         const std::vector<double>& values, long long budget) {
  check_pack_args(units, values, budget);
  const std::vector<double> eff = efficiencies_of(units, values);
  const std::vector<int> order = efficiency_order(units, eff);

  auto pack = [&](std::vector<uint8_t>& kept, long long& cost, double& value) {
    for (int i : order) {
      const size_t ui = static_cast<size_t>(i);
      if (kept[ui]) continue;
      if (units[ui].cost <= budget - cost) {
        kept[ui] = 1;
        cost += units[ui].cost;
        value += values[ui];
      }
    }
  };

  GreedyResult greedy;
  greedy.kept.assign(units.size(), 0);
  pack(greedy.kept, greedy.kept_cost, greedy.kept_value);

  // Classical fallback: the single highest-value unit that fits alone, then
  // greedily refilled so the alternative is maximal too. max(greedy, best
  // single) is what carries the 1/2-of-optimum guarantee.
  int best = -1;
  for (size_t i = 0; i < units.size(); ++i) {
    if (units[i].cost > budget) continue;
    if (best < 0 || values[i] > values[static_cast<size_t>(best)] ||
        (values[i] == values[static_cast<size_t>(best)] &&
         unit_key(units[i]) < unit_key(units[static_cast<size_t>(best)])))
      best = static_cast<int>(i);
  }
  if (best >= 0) {
    GreedyResult alt;
    alt.kept.assign(units.size(), 0);
    alt.kept[static_cast<size_t>(best)] = 1;
    alt.kept_cost = units[static_cast<size_t>(best)].cost;
    alt.kept_value = values[static_cast<size_t>(best)];
    pack(alt.kept, alt.kept_cost, alt.kept_value);
    if (alt.kept_value > greedy.kept_value) {
      alt.fallback_used = true;
      return alt;
    }
  }
  return greedy;
}

SafetyResult enforce_safety(const std::vector<StructuralUnit>& units,
                            const std::vector<double>& values,
                            std::vector<uint8_t> kept, const ModelConfig& mcfg,
                            const PruningConfig& cfg, long long budget) {
  if (kept.size() != units.size() || values.size() != units.size())
    throw MucraspError("enforce_safety: misaligned inputs");
  const std::vector<double> eff = efficiencies_of(units, values);
  const std::vector<LayerQuota> quotas = layer_quotas(mcfg, cfg);

  // Feasibility: the cost of every (layer, kind) minimum must fit the budget.
  long long floor_cost = 0;
  std::vector<long long> slot_unit_cost(quotas.size(), 0);
  for (const StructuralUnit& u : units) slot_unit_cost[quota_slot(u)] = u.cost;
  for (size_t s = 0; s < quotas.size(); ++s)
    floor_cost += quotas[s].min_keep * slot_unit_cost[s];
  if (floor_cost > budget) {
    std::ostringstream msg;
    msg << "safety infeasible: minimum retention needs " << floor_cost
        << " parameters but the budget is " << budget << "; binding layers:";
    for (size_t s = 0; s < quotas.size(); ++s) {
      if (quotas[s].min_keep == 0) continue;
      msg << " layer " << (s / 2) << (s % 2 == 0 ? " mlp" : " attention")
          << " keeps >= " << quotas[s].min_keep << "/" << quotas[s].n << ";";
    }
    throw MucraspError(msg.str());
  }

  SafetyResult out;
  out.kept = std::move(kept);

  std::vector<int> kept_count(quotas.size(), 0);
  long long total_cost = 0;
  for (size_t i = 0; i < units.size(); ++i) {
    if (!out.kept[i]) continue;
    kept_count[quota_slot(units[i])] += 1;
    total_cost += units[i].cost;
  }

  // Phase A: force each deficient (layer, kind) up to its minimum, highest
  // efficiency first.
  for (size_t s = 0; s < quotas.size(); ++s) {
    while (kept_count[s] < quotas[s].min_keep) {
      int pick = -1;
      for (size_t i = 0; i < units.size(); ++i) {
        if (out.kept[i] || quota_slot(units[i]) != s) continue;
        if (pick < 0 || eff[i] > eff[static_cast<size_t>(pick)] ||
            (eff[i] == eff[static_cast<size_t>(pick)] &&
             unit_key(units[i]) < unit_key(units[static_cast<size_t>(pick)])))
          pick = static_cast<int>(i);
      }
      if (pick < 0)
        throw MucraspError("enforce_safety: not enough units to satisfy retention");
      out.kept[static_cast<size_t>(pick)] = 1;
      out.forced_in.push_back(pick);
      kept_count[s] += 1;
      total_cost += units[static_cast<size_t>(pick)].cost;
    }
  }

  // Phase B: while over budget, drop the least efficient unit whose layer
  // still stays at or above its minimum.
  while (total_cost > budget) {
    int pick = -1;
    for (size_t i = 0; i < units.size(); ++i) {
      if (!out.kept[i]) continue;
      const size_t s = quota_slot(units[i]);
      if (kept_count[s] <= quotas[s].min_keep) continue;
      if (pick < 0 || eff[i] < eff[static_cast<size_t>(pick)] ||
          (eff[i] == eff[static_cast<size_t>(pick)] &&
           unit_key(units[i]) < unit_key(units[static_cast<size_t>(pick)])))
        pick = static_cast<int>(i);
    }
    if (pick < 0)
      throw MucraspError("enforce_safety: stuck over budget at the retention floor");
    out.kept[static_cast<size_t>(pick)] = 0;
    out.evicted.push_back(pick);
    kept_count[quota_slot(units[static_cast<size_t>(pick)])] -= 1;
    total_cost -= units[static_cast<size_t>(pick)].cost;
  }
  return out;
}

PruningPlan build_plan(const ModelWeights& w, const ModelConfig& mcfg,
                       const Corpus& corpus, const PruningConfig& cfg) {
  mcfg.validate();
  cfg.validate();
  if (corpus.samples.empty()) throw MucraspError("build_plan: corpus is empty");

  PruningPlan plan;
  plan.model_config = mcfg;
  plan.config = cfg;
  plan.units = enumerate_units(mcfg);
  plan.prunable_params_total = prunable_params(mcfg);
  plan.total_params = total_params(mcfg);
  plan.budget = static_cast<long long>(
      std::floor((1.0 - cfg.S) * static_cast<double>(plan.prunable_params_total)));
  plan.budget_total_base = static_cast<long long>(
      std::floor((1.0 - cfg.S) * static_cast<double>(plan.total_params)));

  AttributionOptions aopts;
  aopts.attn_qo_only = cfg.attn_qo_only;
  aopts.jobs = cfg.jobs;

  if (cfg.scoring == Scoring::magnitude) {
    // Baseline: raw aggregate l1 norms, no attribution, no protection.
    plan.values = magnitude_scores(w, mcfg).scores;
  } else {
    ImportanceTable norm_global =
        normalize_importance(global_attribution(w, mcfg, corpus, aopts));
    ImportanceTable fused;
    if (cfg.scoring == Scoring::taylor || cfg.pivot_mode == PivotMode::none) {
      // No pivot signal: the fused table is the normalized global table.
      fused = std::move(norm_global);
      fused.kind = TableKind::fused;
    } else {
      const std::vector<PivotMask> masks =
          cfg.pivot_mode == PivotMode::real
              ? detect_corpus_pivots(corpus, cfg.half_width, cfg.min_markers)
              : random_corpus_pivots(corpus, cfg.half_width, cfg.min_markers,
                                     cfg.seed);
      ImportanceTable norm_pivot = normalize_importance(
          pivot_attribution(w, mcfg, corpus, masks, aopts));
      fused = fuse(norm_global, norm_pivot,
                   dynamic_gamma(cfg.S, cfg.gamma_base, cfg.rho));
    }

    if (cfg.scoring == Scoring::taylor) {
      plan.values = std::move(fused.scores);  // protection identically 1
    } else {
      plan.profiles = normalize_profiles(profile_layers(w, mcfg, corpus, cfg.jobs));
      // Indexed like quota_slot: even = mlp, odd = attention.
      std::vector<double> prot(static_cast<size_t>(2 * mcfg.n_layers), 1.0);
      for (LayerProfile& p : plan.profiles) {
        p.omega = structural_prior(p.layer, p.sublayer, mcfg.n_layers, cfg);
        p.protection = protection_factor(p, cfg);
        prot[static_cast<size_t>(
            2 * p.layer + (p.sublayer == Sublayer::attention ? 1 : 0))] =
            p.protection;
      }
      plan.values.resize(plan.units.size());
      for (size_t i = 0; i < plan.units.size(); ++i)
        plan.values[i] = fused.scores[i] * prot[quota_slot(plan.units[i])];
    }
  }

  plan.efficiencies = efficiencies_of(plan.units, plan.values);

  if (cfg.allocation == Allocation::global) {
    GreedyResult packed = greedy_pack(plan.units, plan.values, plan.budget);
    plan.fallback_used = packed.fallback_used;
    SafetyResult safe = enforce_safety(plan.units, plan.values,
                                       std::move(packed.kept), mcfg, cfg,
                                       plan.budget);
    plan.kept = std::move(safe.kept);
    for (int i : safe.forced_in) plan.forced_in.push_back(plan.units[static_cast<size_t>(i)]);
    for (int i : safe.evicted) plan.evicted.push_back(plan.units[static_cast<size_t>(i)]);
  } else {
    // Layerwise: uniform keep fraction per (layer, kind), floored at the
    // safety minimum, filled with that slot's most efficient units. The
    // global budget is reported but the minima may override it.
    plan.kept.assign(plan.units.size(), 0);
    const std::vector<LayerQuota> quotas = layer_quotas(mcfg, cfg);
    const std::vector<int> order = efficiency_order(plan.units, plan.efficiencies);
    std::vector<int> taken(quotas.size(), 0);
    std::vector<int> target(quotas.size(), 0);
    for (size_t s = 0; s < quotas.size(); ++s) {
      const int frac_keep = static_cast<int>(
          std::floor((1.0 - cfg.S) * static_cast<double>(quotas[s].n)));
      target[s] = std::max(quotas[s].min_keep, frac_keep);
    }
    for (int i : order) {
      const size_t ui = static_cast<size_t>(i);
      const size_t s = quota_slot(plan.units[ui]);
      if (taken[s] >= target[s]) continue;
      plan.kept[ui] = 1;
      taken[s] += 1;
    }
  }

  plan.kept_params = 0;
  for (size_t i = 0; i < plan.units.size(); ++i)
    if (plan.kept[i]) plan.kept_params += plan.units[i].cost;
  return plan;
}

KeepSet plan_keep_set(const PruningPlan& plan) {
  return keep_set_from_units(plan.model_config, plan.units, plan.kept);
}

bool plan_decisions_equal(const PruningPlan& a, const PruningPlan& b) {
  auto units_equal = [](const std::vector<StructuralUnit>& x,
                        const std::vector<StructuralUnit>& y) { return x == y; };
  return units_equal(a.units, b.units) && a.values == b.values &&
         a.efficiencies == b.efficiencies && a.kept == b.kept &&
         a.budget == b.budget && a.budget_total_base == b.budget_total_base &&
         a.kept_params == b.kept_params &&
         a.prunable_params_total == b.prunable_params_total &&
         a.fallback_used == b.fallback_used &&
         units_equal(a.forced_in, b.forced_in) &&
         units_equal(a.evicted, b.evicted);
}

std::string plan_to_json(const PruningPlan& plan) {
  json cfg = {{"S", plan.config.S},
              {"half_width", plan.config.half_width},
              {"gamma_base", plan.config.gamma_base},
              {"rho", plan.config.rho},
              {"min_markers", plan.config.min_markers},
              {"n_early", plan.config.n_early},
              {"n_final", plan.config.n_final},
              {"final_boost", plan.config.final_boost},
              {"attention_boost", plan.config.attention_boost},
              {"vision_boost", plan.config.vision_boost},
              {"pivot_mode", pivot_mode_name(plan.config.pivot_mode)},
              {"cmds_enabled", plan.config.cmds_enabled},
              {"allocation", allocation_name(plan.config.allocation)},
              {"scoring", scoring_name(plan.config.scoring)},
              {"attn_qo_only", plan.config.attn_qo_only},
              {"alpha", plan.config.alpha()},
              {"beta", plan.config.beta()},
              {"seed", plan.config.seed}};
  if (!std::isnan(plan.config.alpha_override))
    cfg["alpha_override"] = plan.config.alpha_override;
  if (!std::isnan(plan.config.beta_override))
    cfg["beta_override"] = plan.config.beta_override;

  json sub_seeds = json::object();
  if (plan.config.pivot_mode == PivotMode::random)
    sub_seeds["random_pivots"] = sub_seed(plan.config.seed, "random_pivots");

  json units = json::array();
  for (size_t i = 0; i < plan.units.size(); ++i) {
    const StructuralUnit& u = plan.units[i];
    units.push_back({{"kind", unit_kind_name(u.kind)},
                     {"layer", u.layer},
                     {"index", u.index},
                     {"cost", u.cost},
                     {"value", plan.values[i]},
                     {"efficiency", plan.efficiencies[i]},
                     {"kept", static_cast<bool>(plan.kept[i])}});
  }
  json forced = json::array();
  for (const StructuralUnit& u : plan.forced_in) forced.push_back(unit_ref_json(u));
  json evicted = json::array();
  for (const StructuralUnit& u : plan.evicted) evicted.push_back(unit_ref_json(u));

  json profiles = json::array();
  for (const LayerProfile& p : plan.profiles) {
    profiles.push_back({{"layer", p.layer},
                        {"sublayer", sublayer_name(p.sublayer)},
                        {"sens_raw", p.sens_raw},
                        {"cmds_raw", p.cmds_raw},
                        {"sens_norm", p.sens_norm},
                        {"cmds_norm", p.cmds_norm},
                        {"omega", p.omega},
                        {"protection", p.protection}});
  }

  json j = {{"schema_version", kSchemaVersion},
            {"kind", "plan"},
            {"model_config", json::parse(config_to_json(plan.model_config))},
            {"config", std::move(cfg)},
            {"sub_seeds", std::move(sub_seeds)},
            {"budget", plan.budget},
            {"budget_total_base", plan.budget_total_base},
            {"prunable_params", plan.prunable_params_total},
            {"total_params", plan.total_params},
            {"kept_params", plan.kept_params},
            {"fallback_used", plan.fallback_used},
            {"units", std::move(units)},
            {"forced_in", std::move(forced)},
            {"evicted", std::move(evicted)},
            {"profiles", std::move(profiles)}};
  return j.dump(2) + "\n";
}

PruningPlan plan_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw MucraspError(std::string("plan: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw MucraspError("plan: unsupported schema version");
    if (j.at("kind").get<std::string>() != "plan")
      throw MucraspError("plan: document kind is not 'plan'");

    PruningPlan plan;
    plan.model_config = config_from_json(j.at("model_config").dump());

    const json& c = j.at("config");
    plan.config.S = c.at("S").get<double>();
    plan.config.half_width = c.at("half_width").get<int>();
    plan.config.gamma_base = c.at("gamma_base").get<double>();
    plan.config.rho = c.at("rho").get<double>();
    plan.config.min_markers = c.at("min_markers").get<int>();
    plan.config.n_early = c.at("n_early").get<int>();
    plan.config.n_final = c.at("n_final").get<int>();
    plan.config.final_boost = c.at("final_boost").get<double>();
    plan.config.attention_boost = c.at("attention_boost").get<double>();
    plan.config.vision_boost = c.at("vision_boost").get<double>();
    plan.config.pivot_mode =
        pivot_mode_from_name(c.at("pivot_mode").get<std::string>());
    plan.config.cmds_enabled = c.at("cmds_enabled").get<bool>();
    plan.config.allocation =
        allocation_from_name(c.at("allocation").get<std::string>());
    plan.config.scoring = scoring_from_name(c.at("scoring").get<std::string>());
    plan.config.attn_qo_only = c.at("attn_qo_only").get<bool>();
    plan.config.seed = c.at("seed").get<uint64_t>();
    if (c.contains("alpha_override"))
      plan.config.alpha_override = c.at("alpha_override").get<double>();
    if (c.contains("beta_override"))
      plan.config.beta_override = c.at("beta_override").get<double>();

    for (const json& row : j.at("units")) {
      StructuralUnit u = unit_ref_from_json(row, plan.model_config);
      u.cost = row.at("cost").get<long long>();
      plan.units.push_back(u);
      plan.values.push_back(row.at("value").get<double>());
      plan.efficiencies.push_back(row.at("efficiency").get<double>());
      plan.kept.push_back(row.at("kept").get<bool>() ? 1 : 0);
    }
    for (const json& row : j.at("forced_in"))
      plan.forced_in.push_back(unit_ref_from_json(row, plan.model_config));
    for (const json& row : j.at("evicted"))
      plan.evicted.push_back(unit_ref_from_json(row, plan.model_config));

    plan.budget = j.at("budget").get<long long>();
    plan.budget_total_base = j.at("budget_total_base").get<long long>();
    plan.prunable_params_total = j.at("prunable_params").get<long long>();
    plan.total_params = j.at("total_params").get<long long>();
    plan.kept_params = j.at("kept_params").get<long long>();
    plan.fallback_used = j.at("fallback_used").get<bool>();

    for (const json& row : j.at("profiles")) {
      LayerProfile p;
      p.layer = row.at("layer").get<int>();
      p.sublayer = sublayer_from_name(row.at("sublayer").get<std::string>());
      p.sens_raw = row.at("sens_raw").get<double>();
      p.cmds_raw = row.at("cmds_raw").get<double>();
      p.sens_norm = row.at("sens_norm").get<double>();
      p.cmds_norm = row.at("cmds_norm").get<double>();
      p.omega = row.at("omega").get<double>();
      p.protection = row.at("protection").get<double>();
      plan.profiles.push_back(p);
    }
    return plan;
  } catch (const json::exception& e) {
    throw MucraspError(std::string("plan: bad field: ") + e.what());
  }
}

}  // namespace mucrasp
