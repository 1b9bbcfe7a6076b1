#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgbridge/kg.hpp"
#include "kgbridge/metrics.hpp"
#include "kgbridge/tensor.hpp"

namespace kgbridge {

enum class KgeFamily { TransE, TransH, TransR, TransD, DistMult, ComplEx, RotatE };
enum class KgeLoss { margin, logistic, self_adversarial };

std::string kge_family_name(KgeFamily f);
KgeFamily kge_family_from_name(const std::string& s);
std::string kge_loss_name(KgeLoss l);
KgeLoss kge_loss_from_name(const std::string& s);
KgeLoss default_kge_loss(KgeFamily f);

// Entity/relation tables plus per-family extras. RotatE relations are
// stored as phases in (-pi, pi], so every complex coordinate has modulus 1
// by construction. ComplEx and RotatE read entity rows as (real half,
// imaginary half).
struct KgeModel {
  KgeFamily family = KgeFamily::TransE;
  int d_e = 64;
  int d_r = 64;
  float gamma = 4.0f;
  std::vector<std::string> entity_ids;  // lexicographic
  std::vector<std::string> relation_vocab;
  std::unordered_map<std::string, int> entity_index;
  std::unordered_map<std::string, int> relation_index;

  TensorData<float> entity;         // |V| x d_e
  TensorData<float> relation;       // |R| x d_r (phases for RotatE)
  TensorData<float> transh_normal;  // |R| x d_e
  TensorData<float> transr_proj;    // |R| x (d_e * d_r), row-major per relation
  TensorData<float> transd_ent_p;   // |V| x d_e
  TensorData<float> transd_rel_p;   // |R| x d_r

  int entity_of(const std::string& id) const;
  int relation_of(const std::string& label) const;
};

struct KgeTrainConfig {
  int d_e = 64;
  int d_r = 64;
  double lr = 0.01;
  int epochs = 100;
  int batch_size = 128;
  int negatives = 8;
  KgeLoss loss = KgeLoss::margin;
  bool loss_overridden = false;  // false: pick default_kge_loss(family)
  float gamma = 4.0f;
  double adversarial_alpha = 1.0;
  bool same_modality_negatives = false;
  std::uint64_t seed = 1;
};

KgeModel init_kge_model(KgeFamily family, const KnowledgeGraph& kg,
                        const KgeTrainConfig& config);

// Plausibility score, higher is better. Distance-based families return the
// negated distance. DistMult evaluates (h*t)*r per coordinate, which makes
// score(h,r,t) == score(t,r,h) bit-exact.
double kge_score(const KgeModel& model, const std::string& head,
                 const std::string& relation, const std::string& tail);

KgeModel train_kge(const KnowledgeGraph& kg, const std::vector<Triple>& train,
                   KgeFamily family, const KgeTrainConfig& config);

struct KgeRanked {
  std::vector<std::pair<std::string, double>> entries;  // score desc, id asc
};

// Candidates sorted by score; ids in filter are dropped first. The caller
// keeps the target out of the filter set.
KgeRanked kge_rank_tails(const KgeModel& model, const std::string& head,
                         const std::string& relation,
                         const std::vector<std::string>& candidates,
                         const std::unordered_set<std::string>& filter = {});

EvalReport evaluate_link_prediction_kge(
    const KgeModel& model, const std::vector<Triple>& test,
    const KnowledgeGraph& kg,
    const std::unordered_map<std::string, std::unordered_set<std::string>>& filter,
    bool filtered = true);

void save_kge_checkpoint(const KgeModel& model, const KgeTrainConfig& config,
                         const std::string& path);
KgeModel load_kge_checkpoint(const std::string& path);

// Training-internal score graph, exposed so tests can pin it against the
// plain scorer.
typename Tape<float>::Id kge_score_node(Tape<float>& tape, const KgeModel& model,
                                        typename Tape<float>::Id entity_table,
                                        typename Tape<float>::Id relation_table,
                                        typename Tape<float>::Id transh_normal,
                                        typename Tape<float>::Id transr_proj,
                                        typename Tape<float>::Id transd_ent_p,
                                        typename Tape<float>::Id transd_rel_p,
                                        int head, int rel, int tail);

}  // namespace kgbridge
