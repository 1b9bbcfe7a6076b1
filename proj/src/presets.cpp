#include "kgbridge/presets.hpp"

namespace kgbridge {

PlantedBenchPreset planted_preset(const std::string& name) {
  if (name != "small" && name != "tiny")
    throw DataError("unknown planted preset: " + name);

  PlantedBenchPreset p;
  p.name = name;
  const bool small = name == "small";

  p.kg_spec.modalities = {{"m0", small ? 300 : 60}, {"m1", small ? 300 : 60}};
  p.kg_spec.latent_dim = 8;
  p.kg_spec.relations = {{"r0", "m0", "m1", PlantedMapKind::rotation, 101}};
  p.kg_spec.edges_per_head = 3;
  p.kg_spec.noise_scale = 0.05;
  p.kg_spec.seed = 13;
  p.split_seed = 13;

  for (const char* m : {"m0", "m1"}) {
    EncoderSpec e;
    e.modality = m;
    e.kind = EncoderKind::latent_passthrough;
    e.raw_dim = p.kg_spec.latent_dim;
    e.seed = 13;
    p.encoders.push_back(e);
  }

  p.bridge.d = 32;
  p.bridge.layers = small ? 6 : 2;
  p.bridge.heads = 4;
  p.bridge.variant = BridgeVariant::residual_additive;
  p.bridge.seed = 13;

  // Full-batch at this scale: one optimizer step per epoch.
  p.train.batch_size = 1024;
  p.train.epochs = small ? 50 : 10;
  p.train.lr = 2e-3;
  p.train.tau = 0.07;
  p.train.negatives = 31;
  p.train.seed = 13;
  return p;
}

double random_ranking_mrr(int n_candidates) {
  double acc = 0;
  for (int k = 1; k <= n_candidates; ++k) acc += 1.0 / k;
  return acc / n_candidates;
}

}  // namespace kgbridge
