#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgbridge/encoders.hpp"
#include "kgbridge/transformer.hpp"

namespace kgbridge {

enum class BridgeVariant { residual_additive, no_residual, rotate_multiplicative };
enum class ProjectionKind { linear, two_layer };

std::string bridge_variant_name(BridgeVariant v);
BridgeVariant bridge_variant_from_name(const std::string& s);
std::string projection_kind_name(ProjectionKind k);
ProjectionKind projection_kind_from_name(const std::string& s);

struct BridgeConfig {
  int d = 128;       // common embedding dimension, >= 2 and even
  int layers = 6;
  int heads = 4;
  BridgeVariant variant = BridgeVariant::residual_additive;
  ProjectionKind projection_kind = ProjectionKind::linear;
  std::uint64_t seed = 1;
};

// Trainable state: per-modality projection heads, modality/relation
// embedding tables, four slot biases for the 4 x d transformer input, and
// the encoder stack. For the residual-additive variant the attention/FF
// output projections start at zero so the whole map starts as the
// identity on z; the other variants start from Xavier weights since their
// combine rule would otherwise produce the zero vector.
template <typename T>
struct BridgeModelT {
  BridgeConfig config;
  std::vector<std::string> modality_vocab;
  std::vector<std::string> relation_vocab;
  std::vector<int> raw_dims;  // aligned with modality_vocab
  std::vector<NamedTensor<T>> params;
  std::map<std::string, std::size_t> param_index;

  const TensorData<T>& param(const std::string& name) const {
    auto it = param_index.find(name);
    if (it == param_index.end()) throw DataError("unknown parameter: " + name);
    return params[it->second].value;
  }
  TensorData<T>& param(const std::string& name) {
    auto it = param_index.find(name);
    if (it == param_index.end()) throw DataError("unknown parameter: " + name);
    return params[it->second].value;
  }

  int modality_index(const std::string& label) const;
  int relation_index(const std::string& label) const;

  template <typename U>
  BridgeModelT<U> cast() const {
    BridgeModelT<U> out;
    out.config = config;
    out.modality_vocab = modality_vocab;
    out.relation_vocab = relation_vocab;
    out.raw_dims = raw_dims;
    for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>()});
    out.param_index = param_index;
    return out;
  }
};

using BridgeModel = BridgeModelT<float>;

template <typename T>
BridgeModelT<T> init_bridge_model(const BridgeConfig& config,
                                  const std::vector<std::string>& modality_vocab,
                                  const std::vector<int>& raw_dims,
                                  const std::vector<std::string>& relation_vocab);

struct ProjectedEmbedding {
  std::string modality;
  std::vector<float> vector;  // length d, not yet normalized
};

struct BridgedEmbedding {
  std::string head_modality, tail_modality, relation;
  std::vector<float> vector;  // length d, unit norm
};

// Inserts model parameters into a tape once and builds forward graphs on
// demand; used by both training (with gradients) and inference.
template <typename T>
class BridgeForward {
 public:
  using Id = typename Tape<T>::Id;

  BridgeForward(Tape<T>& tape, const BridgeModelT<T>& model, bool with_grad);

  // z = p_c(h) for a raw embedding of the given modality; 1 x d.
  Id project(const std::vector<T>& raw, int modality_idx);
  Id project(Id raw_row, int modality_idx);
  // Unit-norm candidate embedding.
  Id candidate(const std::vector<T>& raw, int modality_idx);
  // Full bridge: stack [z, c_head, c_tail, r] + slot biases, run psi, read
  // slot 0, combine per variant, l2-normalize.
  Id bridged(Id z, int head_modality_idx, int tail_modality_idx, int relation_idx);

  Id param_id(const std::string& name) const;
  const std::vector<std::string>& param_names() const { return names_; }
  Tape<T>& tape() { return *tape_; }

 private:
  Tape<T>* tape_;
  const BridgeModelT<T>* model_;
  std::map<std::string, Id> ids_;
  std::vector<std::string> names_;
  std::vector<EncoderBlockIds<T>> layers_;
  Id modality_table_, relation_table_, slot_bias_;
};

// Plain-vector l2 normalization; throws NumericError on a near-zero input.
std::vector<float> l2_normalize(const std::vector<float>& v);

ProjectedEmbedding project(const RawEmbedding& raw, const BridgeModel& model);

BridgedEmbedding bridge_transform(const ProjectedEmbedding& z,
                                  const std::string& head_modality,
                                  const std::string& tail_modality,
                                  const std::string& relation,
                                  const BridgeModel& model);

// Rows = normalize(project(raw)), in input order. All nodes must share one
// modality covered by the cache.
TensorData<float> embed_candidates(const std::vector<std::string>& node_ids,
                                   const std::string& modality,
                                   const EmbeddingCache& cache,
                                   const BridgeModel& model);

extern template struct BridgeModelT<float>;
extern template struct BridgeModelT<double>;
extern template class BridgeForward<float>;
extern template class BridgeForward<double>;
extern template BridgeModelT<float> init_bridge_model<float>(
    const BridgeConfig&, const std::vector<std::string>&, const std::vector<int>&,
    const std::vector<std::string>&);
extern template BridgeModelT<double> init_bridge_model<double>(
    const BridgeConfig&, const std::vector<std::string>&, const std::vector<int>&,
    const std::vector<std::string>&);

}  // namespace kgbridge
