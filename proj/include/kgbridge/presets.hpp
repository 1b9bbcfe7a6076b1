#pragma once

#include "kgbridge/bridge.hpp"
#include "kgbridge/encoders.hpp"
#include "kgbridge/kg.hpp"
#include "kgbridge/trainer.hpp"

namespace kgbridge {

// A fully pinned synthetic benchmark: planted graph, encoders, split, and
// training recipe. Used by the planted-bench command and the acceptance
// suite.
struct PlantedBenchPreset {
  std::string name;
  PlantedKgSpec kg_spec;
  SplitRatios ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 13;
  std::vector<EncoderSpec> encoders;
  BridgeConfig bridge;
  TrainConfig train;
};

PlantedBenchPreset planted_preset(const std::string& name);

// Closed-form expectation of the reciprocal rank when a query is ranked
// uniformly at random among n candidates: (1/n) * sum_k 1/k.
double random_ranking_mrr(int n_candidates);

}  // namespace kgbridge
