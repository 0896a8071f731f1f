// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mucrasp/model.hpp"

namespace mucrasp {

enum class UnitKind : uint8_t { MlpNeuron, GqaGroup };

std::string unit_kind_name(UnitKind k);
UnitKind unit_kind_from_name(const std::string& name);

// One independently removable structure: an MLP hidden neuron (gate/up row +
// down column) or a GQA group (its K/V rows plus its query heads' Q rows and
// O columns). cost counts the parameters removed with the unit.
struct StructuralUnit {
  UnitKind kind = UnitKind::MlpNeuron;
  int layer = 0;
  int index = 0;  // neuron index or group index within the layer
  long long cost = 0;

  bool operator==(const StructuralUnit&) const = default;
};

long long mlp_neuron_cost(const ModelConfig& cfg);
long long gqa_group_cost(const ModelConfig& cfg);

// All prunable units, ordered by (layer, kind, index) with MlpNeuron < GqaGroup.
std::vector<StructuralUnit> enumerate_units(const ModelConfig& cfg);

// Sum of unit costs == every attention and MLP projection parameter.
long long prunable_params(const ModelConfig& cfg);

KeepSet keep_set_from_units(const ModelConfig& cfg,
                            const std::vector<StructuralUnit>& units,
                            const std::vector<uint8_t>& kept);

// Physically slices dropped units out of the weights and returns the reduced
// model. Every layer must keep at least one MLP neuron and one GQA group.
std::pair<ModelConfig, ModelWeights> apply_prune(const ModelConfig& cfg,
                                                 const ModelWeights& w,
                                                 const KeepSet& keep);

}  // namespace mucrasp
