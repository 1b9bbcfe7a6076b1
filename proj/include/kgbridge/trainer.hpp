#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgbridge/bridge.hpp"
#include "kgbridge/kg.hpp"
#include "kgbridge/metrics.hpp"

namespace kgbridge {

enum class NegativeMode { sampled, in_batch_plus_sampled };

std::string negative_mode_name(NegativeMode m);
NegativeMode negative_mode_from_name(const std::string& s);

struct TrainConfig {
  int batch_size = 256;      // 4096 at full scale
  int epochs = 50;
  double lr = 1e-4;
  double tau = 0.07;         // fixed unless learnable_tau
  int negatives = 31;        // M in the 32-way softmax
  std::uint64_t seed = 1;
  NegativeMode negative_mode = NegativeMode::sampled;
  bool learnable_tau = false;
};

// M distinct same-modality corrupted tails, never the true tail, known
// positives for (head, relation) excluded. When too few candidates remain
// the positive filter is relaxed (true tail still excluded) and a warning
// is recorded.
std::vector<std::string> sample_negatives(const Triple& triple,
                                          const KnowledgeGraph& kg, int m,
                                          Rng& rng,
                                          std::vector<std::string>* warnings = nullptr);

// InfoNCE over unit vectors, log-sum-exp stabilized, evaluated in double.
// Inputs must be unit norm within 1e-4.
double info_nce(const std::vector<float>& h_hat, const std::vector<float>& z_pos,
                const std::vector<std::vector<float>>& z_negs, double tau);

struct Checkpoint {
  BridgeModel model;
  TrainConfig train_config;
  std::string encoder_fingerprint;
  int epoch = 0;
  std::vector<double> loss_history;       // one mean loss per epoch
  std::vector<double> valid_mrr_history;  // empty when no validation split
};

struct TrainResult {
  Checkpoint final;
  std::optional<Checkpoint> best;  // highest validation MRR
  std::vector<std::string> warnings;
};

// Trains psi, the projection heads, and the embedding tables against the
// frozen cache. Deterministic in (kg, split, cache, config) when
// single-threaded. log_path, when set, receives one JSON line per epoch.
TrainResult train_bridge(const KnowledgeGraph& kg, const TripleSplit& split,
                         const EmbeddingCache& cache, const TrainConfig& config,
                         const BridgeConfig& bridge_config,
                         const std::string& log_path = "");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Content hash of a checkpoint's parameters and configs (hex).
std::string checkpoint_hash(const Checkpoint& ckpt);

}  // namespace kgbridge
