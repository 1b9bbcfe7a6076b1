#include "kgbridge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kgbridge/container.hpp"
#include "kgbridge/hash.hpp"

namespace kgbridge {

std::string negative_mode_name(NegativeMode m) {
  return m == NegativeMode::sampled ? "sampled" : "in-batch+sampled";
}

NegativeMode negative_mode_from_name(const std::string& s) {
  if (s == "sampled") return NegativeMode::sampled;
  if (s == "in-batch+sampled") return NegativeMode::in_batch_plus_sampled;
  throw DataError("unknown negative mode: " + s);
}

std::vector<std::string> sample_negatives(const Triple& triple,
                                          const KnowledgeGraph& kg, int m,
                                          Rng& rng,
                                          std::vector<std::string>* warnings) {
  if (m < 1) throw DataError("sample_negatives: M must be >= 1");
  const std::string& tail_modality = kg.node(triple.tail_id).modality;
  const std::vector<std::string>& pool = kg.nodes_of_modality(tail_modality);
  const std::unordered_set<std::string>& positives =
      kg.tails_of(triple.head_id, triple.relation);

  std::vector<std::string> eligible;
  eligible.reserve(pool.size());
  for (const std::string& id : pool) {
    if (id == triple.tail_id || positives.count(id)) continue;
    eligible.push_back(id);
  }
  if (static_cast<int>(eligible.size()) < m) {
    // Too few after filtering known positives: relax to excluding only the
    // true tail.
    eligible.clear();
    for (const std::string& id : pool) {
      if (id == triple.tail_id) continue;
      eligible.push_back(id);
    }
    if (warnings != nullptr)
      warnings->push_back("negative filter relaxed for triple " + triple.head_id +
                          " -" + triple.relation + "-> " + triple.tail_id);
    if (static_cast<int>(eligible.size()) < m)
      throw DataError("not enough candidates of modality '" + tail_modality +
                      "' to sample " + std::to_string(m) + " negatives");
  }

  // Partial Fisher-Yates: first m slots in rng order.
  for (int i = 0; i < m; ++i) {
    const std::size_t j = i + rng.uniform_int(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(m);
  return eligible;
}

namespace {

void check_unit(const std::vector<float>& v, const char* what) {
  double norm2 = 0;
  for (float x : v) norm2 += static_cast<double>(x) * x;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-4)
    throw DataError(std::string("info_nce: ") + what + " is not unit norm");
}

double dot_d(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

}  // namespace

double info_nce(const std::vector<float>& h_hat, const std::vector<float>& z_pos,
                const std::vector<std::vector<float>>& z_negs, double tau) {
  if (tau <= 0) throw DataError("info_nce: tau must be > 0");
  check_unit(h_hat, "query");
  check_unit(z_pos, "positive");
  std::vector<double> logits;
  logits.reserve(z_negs.size() + 1);
  logits.push_back(dot_d(h_hat, z_pos) / tau);
  for (const auto& z : z_negs) {
    check_unit(z, "negative");
    if (z.size() != h_hat.size()) throw DataError("info_nce: dimension mismatch");
    logits.push_back(dot_d(h_hat, z) / tau);
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double s = 0;
  for (double l : logits) s += std::exp(l - mx);
  return mx + std::log(s) - logits[0];
}

namespace {

struct RawLookup {
  const EmbeddingCache* cache;
  const KnowledgeGraph* kg;

  std::vector<float> operator()(const std::string& node_id) const {
    const Node& node = kg->node(node_id);
    const float* row = cache->row(node.modality, node_id);
    return std::vector<float>(row, row + cache->raw_dim(node.modality));
  }
};

Checkpoint make_checkpoint(const BridgeModel& model, const TrainConfig& config,
                           const std::string& fingerprint, int epoch,
                           std::vector<double> loss_history,
                           std::vector<double> mrr_history) {
  Checkpoint c;
  c.model = model;
  c.train_config = config;
  c.encoder_fingerprint = fingerprint;
  c.epoch = epoch;
  c.loss_history = std::move(loss_history);
  c.valid_mrr_history = std::move(mrr_history);
  return c;
}

}  // namespace

TrainResult train_bridge(const KnowledgeGraph& kg, const TripleSplit& split,
                         const EmbeddingCache& cache, const TrainConfig& config,
                         const BridgeConfig& bridge_config,
                         const std::string& log_path) {
  if (config.batch_size < 1 || config.negatives < 1 || config.tau <= 0)
    throw DataError("invalid train config");
  if (split.train.empty()) throw DataError("train split is empty");
  for (const Triple& t : split.train) {
    if (cache.find_block(kg.node(t.head_id).modality) == nullptr ||
        cache.find_block(kg.node(t.tail_id).modality) == nullptr)
      throw DataError("cache does not cover train split modalities");
  }

  std::vector<int> raw_dims;
  for (const std::string& m : kg.modality_vocab()) raw_dims.push_back(cache.raw_dim(m));
  BridgeModel model = init_bridge_model<float>(bridge_config, kg.modality_vocab(),
                                               raw_dims, kg.relation_vocab());
  if (config.learnable_tau) {
    model.param_index.emplace("log_tau", model.params.size());
    model.params.push_back(
        {"log_tau", TensorData<float>({1}, {std::log(static_cast<float>(config.tau))})});
  }

  Adam<float> adam(static_cast<float>(config.lr));
  RawLookup raw{&cache, &kg};
  const auto filter = build_filter({&split.train, &split.valid});

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::binary);
    if (!log) throw DataError("cannot write training log: " + log_path);
  }

  TrainResult result;
  std::vector<double> loss_history, mrr_history;
  double best_mrr = -1;
  int best_epoch = -1;
  BridgeModel best_model = model;

  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(Rng::derive(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      try {
        Tape<float> tape;
        BridgeForward<float> fwd(tape, model, true);
        const bool fixed_tau = !config.learnable_tau;
        Tape<float>::Id inv_tau = 0;
        if (!fixed_tau)
          inv_tau = tape.exp(tape.scale(fwd.param_id("log_tau"), -1.0f));

        struct BatchItem {
          Tape<float>::Id z_pos;
          std::string tail_id;
          std::string tail_modality;
          const Triple* triple;
          Tape<float>::Id query;
        };
        std::vector<BatchItem> items;
        std::vector<std::vector<Tape<float>::Id>> neg_ids(stop - start);

        for (std::size_t b = start; b < stop; ++b) {
          const Triple& t = split.train[order[b]];
          const Node& head = kg.node(t.head_id);
          const Node& tail = kg.node(t.tail_id);
          const int hm = model.modality_index(head.modality);
          const int tm = model.modality_index(tail.modality);
          const int rel = model.relation_index(t.relation);

          const auto z_head = fwd.project(raw(t.head_id), hm);
          const auto query = fwd.bridged(z_head, hm, tm, rel);
          const auto z_pos = fwd.candidate(raw(t.tail_id), tm);
          for (const std::string& neg :
               sample_negatives(t, kg, config.negatives, rng, &result.warnings))
            neg_ids[b - start].push_back(fwd.candidate(raw(neg), tm));
          items.push_back({z_pos, t.tail_id, tail.modality, &t, query});
        }

        std::vector<Tape<float>::Id> per_triple_losses;
        for (std::size_t i = 0; i < items.size(); ++i) {
          const BatchItem& item = items[i];
          std::vector<Tape<float>::Id> logits;
          auto push_logit = [&](Tape<float>::Id z) {
            auto s = tape.dot(item.query, z);
            logits.push_back(fixed_tau
                                 ? tape.scale(s, static_cast<float>(1.0 / config.tau))
                                 : tape.scale_by(s, inv_tau));
          };
          push_logit(item.z_pos);
          for (auto z : neg_ids[i]) push_logit(z);
          if (config.negative_mode == NegativeMode::in_batch_plus_sampled) {
            const auto& positives =
                kg.tails_of(item.triple->head_id, item.triple->relation);
            for (std::size_t j = 0; j < items.size(); ++j) {
              if (j == i || items[j].tail_modality != item.tail_modality) continue;
              if (items[j].tail_id == item.tail_id || positives.count(items[j].tail_id))
                continue;
              push_logit(items[j].z_pos);
            }
          }
          const auto all = tape.concat_rows(logits);
          per_triple_losses.push_back(tape.sub(tape.log_sum_exp(all), logits[0]));
        }
        const auto batch_loss = tape.mean(tape.concat_rows(per_triple_losses));
        tape.backward(batch_loss);

        epoch_loss += static_cast<double>(tape.value(batch_loss).data[0]) *
                      static_cast<double>(items.size());
        seen += items.size();

        std::vector<TensorData<float>> grads;
        grads.reserve(model.params.size());
        for (const auto& p : model.params) grads.push_back(tape.grad(fwd.param_id(p.name)));
        adam.step(model.params, grads);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + ": " + e.what());
      }
    }

    const double mean_loss = epoch_loss / static_cast<double>(seen);
    loss_history.push_back(mean_loss);

    nlohmann::ordered_json rec;
    rec["epoch"] = epoch;
    rec["mean_loss"] = mean_loss;
    if (!split.valid.empty()) {
      const EvalReport report =
          evaluate_link_prediction(model, split.valid, kg, cache, filter, true);
      mrr_history.push_back(report.mrr);
      rec["valid_mrr"] = report.mrr;
      if (report.mrr > best_mrr) {
        best_mrr = report.mrr;
        best_epoch = epoch;
        best_model = model;
      }
    }
    if (log.is_open()) log << rec.dump() << '\n';
  }

  result.final = make_checkpoint(model, config, cache.fingerprint(), config.epochs,
                                 loss_history, mrr_history);
  if (best_epoch >= 0) {
    result.best = make_checkpoint(
        best_model, config, cache.fingerprint(), best_epoch,
        std::vector<double>(loss_history.begin(), loss_history.begin() + best_epoch),
        std::vector<double>(mrr_history.begin(), mrr_history.begin() + best_epoch));
  }
  return result;
}

namespace {

nlohmann::ordered_json bridge_config_to_json(const BridgeConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["variant"] = bridge_variant_name(c.variant);
  j["projection_kind"] = projection_kind_name(c.projection_kind);
  j["seed"] = c.seed;
  return j;
}

BridgeConfig bridge_config_from_json(const nlohmann::ordered_json& j) {
  BridgeConfig c;
  c.d = j.at("d").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.variant = bridge_variant_from_name(j.at("variant").get<std::string>());
  c.projection_kind = projection_kind_from_name(j.at("projection_kind").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["tau"] = c.tau;
  j["negatives"] = c.negatives;
  j["seed"] = c.seed;
  j["negative_mode"] = negative_mode_name(c.negative_mode);
  j["learnable_tau"] = c.learnable_tau;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.tau = j.at("tau").get<double>();
  c.negatives = j.at("negatives").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.negative_mode = negative_mode_from_name(j.at("negative_mode").get<std::string>());
  c.learnable_tau = j.at("learnable_tau").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ContainerPayload payload;
  payload.header["kind"] = "bridge";
  payload.header["bridge_config"] = bridge_config_to_json(ckpt.model.config);
  payload.header["train_config"] = train_config_to_json(ckpt.train_config);
  payload.header["modality_vocab"] = ckpt.model.modality_vocab;
  payload.header["relation_vocab"] = ckpt.model.relation_vocab;
  payload.header["raw_dims"] = ckpt.model.raw_dims;
  payload.header["encoder_fingerprint"] = ckpt.encoder_fingerprint;
  payload.header["epoch"] = ckpt.epoch;
  payload.header["loss_history"] = ckpt.loss_history;
  payload.header["valid_mrr_history"] = ckpt.valid_mrr_history;
  payload.tensors = ckpt.model.params;
  write_container(path, payload);
}

Checkpoint load_checkpoint(const std::string& path) {
  const ContainerPayload payload = read_container(path);
  if (payload.header.value("kind", "") != "bridge")
    throw DataError("checkpoint at " + path + " is not a bridge checkpoint");

  Checkpoint ckpt;
  const BridgeConfig config = bridge_config_from_json(payload.header.at("bridge_config"));
  const auto modality_vocab =
      payload.header.at("modality_vocab").get<std::vector<std::string>>();
  const auto relation_vocab =
      payload.header.at("relation_vocab").get<std::vector<std::string>>();
  const auto raw_dims = payload.header.at("raw_dims").get<std::vector<int>>();
  ckpt.train_config = train_config_from_json(payload.header.at("train_config"));

  // Rebuild the parameter skeleton, then overwrite values by name so
  // mangled checkpoints fail loudly.
  ckpt.model =
      init_bridge_model<float>(config, modality_vocab, raw_dims, relation_vocab);
  if (ckpt.train_config.learnable_tau) {
    ckpt.model.param_index.emplace("log_tau", ckpt.model.params.size());
    ckpt.model.params.push_back({"log_tau", TensorData<float>({1}, {0.0f})});
  }
  if (payload.tensors.size() != ckpt.model.params.size())
    throw DataError("checkpoint parameter count mismatch");
  for (const auto& t : payload.tensors) {
    TensorData<float>& dst = ckpt.model.param(t.name);
    if (dst.shape != t.value.shape)
      throw DataError("checkpoint tensor shape mismatch for " + t.name);
    dst = t.value;
  }

  ckpt.encoder_fingerprint = payload.header.at("encoder_fingerprint").get<std::string>();
  ckpt.epoch = payload.header.at("epoch").get<int>();
  ckpt.loss_history = payload.header.at("loss_history").get<std::vector<double>>();
  ckpt.valid_mrr_history =
      payload.header.at("valid_mrr_history").get<std::vector<double>>();
  return ckpt;
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
  Sha256 h;
  h.update(bridge_variant_name(ckpt.model.config.variant));
  h.update(std::to_string(ckpt.model.config.d));
  h.update(std::to_string(ckpt.model.config.layers));
  for (const auto& p : ckpt.model.params) {
    h.update(p.name);
    h.update(p.value.data.data(), p.value.data.size() * sizeof(float));
  }
  return to_hex(h.finish());
}

}  // namespace kgbridge
