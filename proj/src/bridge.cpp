#include "kgbridge/bridge.hpp"

#include <algorithm>
#include <cmath>

namespace kgbridge {

std::string bridge_variant_name(BridgeVariant v) {
  switch (v) {
    case BridgeVariant::residual_additive: return "residual-additive";
    case BridgeVariant::no_residual: return "no-residual";
    case BridgeVariant::rotate_multiplicative: return "rotate-multiplicative";
  }
  throw DataError("unknown bridge variant");
}

BridgeVariant bridge_variant_from_name(const std::string& s) {
  if (s == "residual-additive") return BridgeVariant::residual_additive;
  if (s == "no-residual") return BridgeVariant::no_residual;
  if (s == "rotate-multiplicative") return BridgeVariant::rotate_multiplicative;
  throw DataError("unknown bridge variant: " + s);
}

std::string projection_kind_name(ProjectionKind k) {
  return k == ProjectionKind::linear ? "linear" : "two-layer";
}

ProjectionKind projection_kind_from_name(const std::string& s) {
  if (s == "linear") return ProjectionKind::linear;
  if (s == "two-layer") return ProjectionKind::two_layer;
  throw DataError("unknown projection kind: " + s);
}

template <typename T>
int BridgeModelT<T>::modality_index(const std::string& label) const {
  auto it = std::find(modality_vocab.begin(), modality_vocab.end(), label);
  if (it == modality_vocab.end())
    throw DataError("unknown modality label: " + label);
  return static_cast<int>(it - modality_vocab.begin());
}

template <typename T>
int BridgeModelT<T>::relation_index(const std::string& label) const {
  auto it = std::find(relation_vocab.begin(), relation_vocab.end(), label);
  if (it == relation_vocab.end())
    throw DataError("unknown relation label: " + label);
  return static_cast<int>(it - relation_vocab.begin());
}

namespace {

template <typename T>
TensorData<T> xavier(Rng& rng, int fan_in, int fan_out, std::vector<int> shape) {
  auto t = TensorData<T>::zeros(std::move(shape));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
TensorData<T> normal_scaled(Rng& rng, double stddev, std::vector<int> shape) {
  auto t = TensorData<T>::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template <typename T>
TensorData<T> ones(std::vector<int> shape) {
  auto t = TensorData<T>::zeros(std::move(shape));
  std::fill(t.data.begin(), t.data.end(), T(1));
  return t;
}

}  // namespace

template <typename T>
BridgeModelT<T> init_bridge_model(const BridgeConfig& config,
                                  const std::vector<std::string>& modality_vocab,
                                  const std::vector<int>& raw_dims,
                                  const std::vector<std::string>& relation_vocab) {
  if (config.d < 2 || config.d % 2 != 0)
    throw DataError("bridge d must be even and >= 2");
  if (config.layers < 1) throw DataError("bridge layers must be >= 1");
  if (config.heads < 1 || config.d % config.heads != 0)
    throw DataError("bridge d must be divisible by heads");
  if (modality_vocab.size() != raw_dims.size())
    throw DataError("one raw_dim per modality required");
  if (modality_vocab.empty() || relation_vocab.empty())
    throw DataError("bridge model needs non-empty vocabularies");

  BridgeModelT<T> m;
  m.config = config;
  m.modality_vocab = modality_vocab;
  m.relation_vocab = relation_vocab;
  m.raw_dims = raw_dims;

  const int d = config.d;
  const bool zero_out_proj = config.variant == BridgeVariant::residual_additive;
  Rng rng(Rng::derive(config.seed, 0xb21d6e));
  const double table_std = 1.0 / std::sqrt(static_cast<double>(d));

  auto add = [&m](std::string name, TensorData<T> value) {
    m.param_index.emplace(name, m.params.size());
    m.params.push_back({std::move(name), std::move(value)});
  };

  add("table.modality",
      normal_scaled<T>(rng, table_std, {static_cast<int>(modality_vocab.size()), d}));
  add("table.relation",
      normal_scaled<T>(rng, table_std, {static_cast<int>(relation_vocab.size()), d}));
  add("slot_bias", TensorData<T>::zeros({4, d}));

  for (std::size_t i = 0; i < modality_vocab.size(); ++i) {
    const std::string p = "proj." + modality_vocab[i];
    const int raw = raw_dims[i];
    if (raw < 1) throw DataError("raw_dim must be >= 1");
    if (config.projection_kind == ProjectionKind::linear) {
      add(p + ".w", xavier<T>(rng, raw, d, {raw, d}));
      add(p + ".b", TensorData<T>::zeros({d}));
    } else {
      add(p + ".w1", xavier<T>(rng, raw, d, {raw, d}));
      add(p + ".b1", TensorData<T>::zeros({d}));
      add(p + ".w2", xavier<T>(rng, d, d, {d, d}));
      add(p + ".b2", TensorData<T>::zeros({d}));
    }
  }

  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "psi.l" + std::to_string(l);
    add(p + ".ln1.g", ones<T>({d}));
    add(p + ".ln1.b", TensorData<T>::zeros({d}));
    add(p + ".attn.wq", xavier<T>(rng, d, d, {d, d}));
    add(p + ".attn.bq", TensorData<T>::zeros({d}));
    add(p + ".attn.wk", xavier<T>(rng, d, d, {d, d}));
    add(p + ".attn.bk", TensorData<T>::zeros({d}));
    add(p + ".attn.wv", xavier<T>(rng, d, d, {d, d}));
    add(p + ".attn.bv", TensorData<T>::zeros({d}));
    add(p + ".attn.wo", zero_out_proj ? TensorData<T>::zeros({d, d})
                                      : xavier<T>(rng, d, d, {d, d}));
    add(p + ".attn.bo", TensorData<T>::zeros({d}));
    add(p + ".ln2.g", ones<T>({d}));
    add(p + ".ln2.b", TensorData<T>::zeros({d}));
    add(p + ".ff.w1", xavier<T>(rng, d, 4 * d, {d, 4 * d}));
    add(p + ".ff.b1", TensorData<T>::zeros({4 * d}));
    add(p + ".ff.w2", zero_out_proj ? TensorData<T>::zeros({4 * d, d})
                                    : xavier<T>(rng, 4 * d, d, {4 * d, d}));
    add(p + ".ff.b2", TensorData<T>::zeros({d}));
  }
  return m;
}

template <typename T>
BridgeForward<T>::BridgeForward(Tape<T>& tape, const BridgeModelT<T>& model,
                                bool with_grad)
    : tape_(&tape), model_(&model) {
  for (const auto& p : model.params) {
    ids_.emplace(p.name, tape.input(p.value, with_grad));
    names_.push_back(p.name);
  }
  modality_table_ = ids_.at("table.modality");
  relation_table_ = ids_.at("table.relation");
  slot_bias_ = ids_.at("slot_bias");
  for (int l = 0; l < model.config.layers; ++l) {
    const std::string p = "psi.l" + std::to_string(l);
    EncoderBlockIds<T> blk;
    blk.ln1_gain = ids_.at(p + ".ln1.g");
    blk.ln1_bias = ids_.at(p + ".ln1.b");
    blk.attn = {ids_.at(p + ".attn.wq"), ids_.at(p + ".attn.bq"),
                ids_.at(p + ".attn.wk"), ids_.at(p + ".attn.bk"),
                ids_.at(p + ".attn.wv"), ids_.at(p + ".attn.bv"),
                ids_.at(p + ".attn.wo"), ids_.at(p + ".attn.bo")};
    blk.ln2_gain = ids_.at(p + ".ln2.g");
    blk.ln2_bias = ids_.at(p + ".ln2.b");
    blk.ff_w1 = ids_.at(p + ".ff.w1");
    blk.ff_b1 = ids_.at(p + ".ff.b1");
    blk.ff_w2 = ids_.at(p + ".ff.w2");
    blk.ff_b2 = ids_.at(p + ".ff.b2");
    layers_.push_back(blk);
  }
}

template <typename T>
typename BridgeForward<T>::Id BridgeForward<T>::param_id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
typename BridgeForward<T>::Id BridgeForward<T>::project(const std::vector<T>& raw,
                                                        int modality_idx) {
  const int raw_dim = model_->raw_dims.at(static_cast<std::size_t>(modality_idx));
  if (static_cast<int>(raw.size()) != raw_dim)
    throw DataError("raw embedding length does not match modality raw_dim");
  return project(tape_->input(TensorData<T>({1, raw_dim}, raw)), modality_idx);
}

template <typename T>
typename BridgeForward<T>::Id BridgeForward<T>::project(Id raw_row, int modality_idx) {
  const std::string& mod = model_->modality_vocab.at(static_cast<std::size_t>(modality_idx));
  const std::string p = "proj." + mod;
  if (model_->config.projection_kind == ProjectionKind::linear)
    return tape_->add(tape_->matmul(raw_row, ids_.at(p + ".w")), ids_.at(p + ".b"));
  const auto h = tape_->gelu(
      tape_->add(tape_->matmul(raw_row, ids_.at(p + ".w1")), ids_.at(p + ".b1")));
  return tape_->add(tape_->matmul(h, ids_.at(p + ".w2")), ids_.at(p + ".b2"));
}

template <typename T>
typename BridgeForward<T>::Id BridgeForward<T>::candidate(const std::vector<T>& raw,
                                                          int modality_idx) {
  return tape_->l2_normalize(project(raw, modality_idx));
}

template <typename T>
typename BridgeForward<T>::Id BridgeForward<T>::bridged(Id z, int head_modality_idx,
                                                        int tail_modality_idx,
                                                        int relation_idx) {
  const auto c_head = tape_->gather_rows(modality_table_, {head_modality_idx});
  const auto c_tail = tape_->gather_rows(modality_table_, {tail_modality_idx});
  const auto r = tape_->gather_rows(relation_table_, {relation_idx});
  const auto stacked = tape_->concat_rows({z, c_head, c_tail, r});
  const auto input = tape_->add(stacked, slot_bias_);
  const auto encoded =
      transformer_encoder_forward(*tape_, input, layers_, model_->config.heads);
  const auto psi_out = tape_->row(encoded, 0);

  Id combined;
  switch (model_->config.variant) {
    case BridgeVariant::residual_additive:
      combined = tape_->add(z, psi_out);
      break;
    case BridgeVariant::no_residual:
      combined = psi_out;
      break;
    case BridgeVariant::rotate_multiplicative:
      combined = tape_->mul(z, psi_out);
      break;
    default:
      throw DataError("unknown bridge variant");
  }
  return tape_->l2_normalize(combined);
}

std::vector<float> l2_normalize(const std::vector<float>& v) {
  float acc = 0;
  for (float x : v) acc += x * x;
  const float norm = std::sqrt(acc);
  if (norm < 1e-12f)
    throw NumericError("l2_normalize: degenerate near-zero vector");
  std::vector<float> out = v;
  for (auto& x : out) x /= norm;
  return out;
}

ProjectedEmbedding project(const RawEmbedding& raw, const BridgeModel& model) {
  const int mi = model.modality_index(raw.modality);
  Tape<float> tape;
  BridgeForward<float> fwd(tape, model, false);
  const auto z = fwd.project(raw.vector, mi);
  return {raw.modality, tape.value(z).data};
}

BridgedEmbedding bridge_transform(const ProjectedEmbedding& z,
                                  const std::string& head_modality,
                                  const std::string& tail_modality,
                                  const std::string& relation,
                                  const BridgeModel& model) {
  if (z.modality != head_modality)
    throw DataError("projected embedding modality '" + z.modality +
                    "' does not match head modality '" + head_modality + "'");
  if (static_cast<int>(z.vector.size()) != model.config.d)
    throw DataError("projected embedding has wrong dimension");
  const int hm = model.modality_index(head_modality);
  const int tm = model.modality_index(tail_modality);
  const int rel = model.relation_index(relation);

  Tape<float> tape;
  BridgeForward<float> fwd(tape, model, false);
  const auto zid = tape.input(TensorData<float>({1, model.config.d}, z.vector));
  const auto out = fwd.bridged(zid, hm, tm, rel);
  return {head_modality, tail_modality, relation, tape.value(out).data};
}

TensorData<float> embed_candidates(const std::vector<std::string>& node_ids,
                                   const std::string& modality,
                                   const EmbeddingCache& cache,
                                   const BridgeModel& model) {
  const int mi = model.modality_index(modality);
  const int raw_dim = cache.raw_dim(modality);
  if (raw_dim != model.raw_dims.at(static_cast<std::size_t>(mi)))
    throw DataError("cache raw_dim does not match model raw_dim for " + modality);
  const int d = model.config.d;
  auto out = TensorData<float>::zeros({static_cast<int>(node_ids.size()), d});

  Tape<float> tape;
  BridgeForward<float> fwd(tape, model, false);
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    const float* row = cache.row(modality, node_ids[i]);
    const auto z = fwd.candidate(std::vector<float>(row, row + raw_dim), mi);
    const auto& v = tape.value(z).data;
    std::copy(v.begin(), v.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  return out;
}

template struct BridgeModelT<float>;
template struct BridgeModelT<double>;
template class BridgeForward<float>;
template class BridgeForward<double>;
template BridgeModelT<float> init_bridge_model<float>(
    const BridgeConfig&, const std::vector<std::string>&, const std::vector<int>&,
    const std::vector<std::string>&);
template BridgeModelT<double> init_bridge_model<double>(
    const BridgeConfig&, const std::vector<std::string>&, const std::vector<int>&,
    const std::vector<std::string>&);

}  // namespace kgbridge
