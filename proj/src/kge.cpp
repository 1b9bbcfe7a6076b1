#include "kgbridge/kge.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "kgbridge/container.hpp"

namespace kgbridge {

std::string kge_family_name(KgeFamily f) {
  switch (f) {
    case KgeFamily::TransE: return "transe";
    case KgeFamily::TransH: return "transh";
    case KgeFamily::TransR: return "transr";
    case KgeFamily::TransD: return "transd";
    case KgeFamily::DistMult: return "distmult";
    case KgeFamily::ComplEx: return "complex";
    case KgeFamily::RotatE: return "rotate";
  }
  throw DataError("unknown KGE family");
}

KgeFamily kge_family_from_name(const std::string& s) {
  if (s == "transe") return KgeFamily::TransE;
  if (s == "transh") return KgeFamily::TransH;
  if (s == "transr") return KgeFamily::TransR;
  if (s == "transd") return KgeFamily::TransD;
  if (s == "distmult") return KgeFamily::DistMult;
  if (s == "complex") return KgeFamily::ComplEx;
  if (s == "rotate") return KgeFamily::RotatE;
  throw DataError("unknown KGE family: " + s);
}

std::string kge_loss_name(KgeLoss l) {
  switch (l) {
    case KgeLoss::margin: return "margin";
    case KgeLoss::logistic: return "logistic";
    case KgeLoss::self_adversarial: return "self-adversarial";
  }
  throw DataError("unknown KGE loss");
}

KgeLoss kge_loss_from_name(const std::string& s) {
  if (s == "margin") return KgeLoss::margin;
  if (s == "logistic") return KgeLoss::logistic;
  if (s == "self-adversarial") return KgeLoss::self_adversarial;
  throw DataError("unknown KGE loss: " + s);
}

KgeLoss default_kge_loss(KgeFamily f) {
  switch (f) {
    case KgeFamily::TransE:
    case KgeFamily::TransH:
    case KgeFamily::TransR:
    case KgeFamily::TransD:
      return KgeLoss::margin;
    case KgeFamily::DistMult:
    case KgeFamily::ComplEx:
      return KgeLoss::logistic;
    case KgeFamily::RotatE:
      return KgeLoss::self_adversarial;
  }
  throw DataError("unknown KGE family");
}

int KgeModel::entity_of(const std::string& id) const {
  auto it = entity_index.find(id);
  if (it == entity_index.end()) throw DataError("unknown entity id: " + id);
  return it->second;
}

int KgeModel::relation_of(const std::string& label) const {
  auto it = relation_index.find(label);
  if (it == relation_index.end()) throw DataError("unknown relation: " + label);
  return it->second;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_translational(KgeFamily f) {
  return f == KgeFamily::TransE || f == KgeFamily::TransH ||
         f == KgeFamily::TransR || f == KgeFamily::TransD;
}

// Wrap into (-pi, pi].
float wrap_phase(float theta) {
  double t = std::remainder(static_cast<double>(theta), 2.0 * kPi);
  if (t <= -kPi) t += 2.0 * kPi;
  return static_cast<float>(t);
}

void renorm_rows_to_ball(TensorData<float>& table) {
  const int n = table.shape[0], d = table.shape[1];
  for (int i = 0; i < n; ++i) {
    double norm2 = 0;
    for (int j = 0; j < d; ++j) {
      const double v = table.data[i * d + j];
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (norm > 1.0) {
      const auto inv = static_cast<float>(1.0 / norm);
      for (int j = 0; j < d; ++j) table.data[i * d + j] *= inv;
    }
  }
}

void renorm_rows_to_unit(TensorData<float>& table) {
  const int n = table.shape[0], d = table.shape[1];
  for (int i = 0; i < n; ++i) {
    double norm2 = 0;
    for (int j = 0; j < d; ++j) {
      const double v = table.data[i * d + j];
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (norm > 1e-12) {
      const auto inv = static_cast<float>(1.0 / norm);
      for (int j = 0; j < d; ++j) table.data[i * d + j] *= inv;
    }
  }
}

void apply_constraints(KgeModel& model) {
  if (is_translational(model.family)) renorm_rows_to_ball(model.entity);
  if (model.family == KgeFamily::TransH) renorm_rows_to_unit(model.transh_normal);
  if (model.family == KgeFamily::RotatE)
    for (auto& v : model.relation.data) v = wrap_phase(v);
}

}  // namespace

KgeModel init_kge_model(KgeFamily family, const KnowledgeGraph& kg,
                        const KgeTrainConfig& config) {
  KgeModel m;
  m.family = family;
  m.gamma = config.gamma;
  m.d_e = config.d_e;
  m.d_r = config.d_r;
  if (m.d_e < 1) throw DataError("kge d_e must be >= 1");
  switch (family) {
    case KgeFamily::TransE:
    case KgeFamily::TransH:
    case KgeFamily::DistMult:
      m.d_r = m.d_e;
      break;
    case KgeFamily::ComplEx:
      if (m.d_e % 2 != 0) throw DataError("complex requires even d_e");
      m.d_r = m.d_e;
      break;
    case KgeFamily::RotatE:
      if (m.d_e % 2 != 0) throw DataError("rotate requires even d_e");
      m.d_r = m.d_e / 2;
      break;
    case KgeFamily::TransR:
    case KgeFamily::TransD:
      if (m.d_r < 1) throw DataError("kge d_r must be >= 1");
      break;
  }

  for (const Node& n : kg.nodes()) m.entity_ids.push_back(n.id);
  std::sort(m.entity_ids.begin(), m.entity_ids.end());
  for (std::size_t i = 0; i < m.entity_ids.size(); ++i)
    m.entity_index.emplace(m.entity_ids[i], static_cast<int>(i));
  m.relation_vocab = kg.relation_vocab();
  for (std::size_t i = 0; i < m.relation_vocab.size(); ++i)
    m.relation_index.emplace(m.relation_vocab[i], static_cast<int>(i));

  const auto nv = static_cast<int>(m.entity_ids.size());
  const auto nr = static_cast<int>(m.relation_vocab.size());
  Rng rng(Rng::derive(config.seed, 0x4b47));
  const double bound_e = 6.0 / std::sqrt(static_cast<double>(m.d_e));
  const double bound_r = 6.0 / std::sqrt(static_cast<double>(m.d_r));

  m.entity = TensorData<float>::zeros({nv, m.d_e});
  for (auto& v : m.entity.data) v = static_cast<float>(rng.uniform(-bound_e, bound_e));

  m.relation = TensorData<float>::zeros({nr, m.d_r});
  if (family == KgeFamily::RotatE) {
    for (auto& v : m.relation.data)
      v = wrap_phase(static_cast<float>(rng.uniform(-kPi, kPi)));
  } else {
    for (auto& v : m.relation.data) v = static_cast<float>(rng.uniform(-bound_r, bound_r));
  }

  if (family == KgeFamily::TransH) {
    m.transh_normal = TensorData<float>::zeros({nr, m.d_e});
    for (auto& v : m.transh_normal.data) v = static_cast<float>(rng.normal());
    renorm_rows_to_unit(m.transh_normal);
  }
  if (family == KgeFamily::TransR) {
    // Identity-padded start so training begins TransE-like.
    m.transr_proj = TensorData<float>::zeros({nr, m.d_e * m.d_r});
    for (int r = 0; r < nr; ++r)
      for (int i = 0; i < std::min(m.d_e, m.d_r); ++i)
        m.transr_proj.data[static_cast<std::size_t>(r) * m.d_e * m.d_r +
                           static_cast<std::size_t>(i) * m.d_r + i] = 1.0f;
  }
  if (family == KgeFamily::TransD) {
    m.transd_ent_p = TensorData<float>::zeros({nv, m.d_e});
    m.transd_rel_p = TensorData<float>::zeros({nr, m.d_r});
  }
  apply_constraints(m);
  return m;
}

namespace {

// Plain scorer over double accumulators; mirrors kge_score_node.
double score_plain(const KgeModel& m, int h, int r, int t) {
  const int de = m.d_e, dr = m.d_r;
  const float* eh = m.entity.data.data() + static_cast<std::size_t>(h) * de;
  const float* et = m.entity.data.data() + static_cast<std::size_t>(t) * de;
  const float* wr = m.relation.data.data() + static_cast<std::size_t>(r) * dr;

  switch (m.family) {
    case KgeFamily::TransE: {
      double acc = 0;
      for (int i = 0; i < de; ++i) {
        const double d = static_cast<double>(eh[i]) + wr[i] - et[i];
        acc += d * d;
      }
      return -std::sqrt(acc);
    }
    case KgeFamily::TransH: {
      const float* n = m.transh_normal.data.data() + static_cast<std::size_t>(r) * de;
      double nn = 0, nh = 0, nt = 0;
      for (int i = 0; i < de; ++i) nn += static_cast<double>(n[i]) * n[i];
      const double inv = 1.0 / std::sqrt(nn);
      for (int i = 0; i < de; ++i) {
        nh += static_cast<double>(n[i]) * inv * eh[i];
        nt += static_cast<double>(n[i]) * inv * et[i];
      }
      double acc = 0;
      for (int i = 0; i < de; ++i) {
        const double hp = eh[i] - nh * n[i] * inv;
        const double tp = et[i] - nt * n[i] * inv;
        const double d = hp + wr[i] - tp;
        acc += d * d;
      }
      return -std::sqrt(acc);
    }
    case KgeFamily::TransR: {
      const float* mr = m.transr_proj.data.data() +
                        static_cast<std::size_t>(r) * de * dr;
      double acc = 0;
      for (int j = 0; j < dr; ++j) {
        double hp = 0, tp = 0;
        for (int i = 0; i < de; ++i) {
          hp += static_cast<double>(eh[i]) * mr[static_cast<std::size_t>(i) * dr + j];
          tp += static_cast<double>(et[i]) * mr[static_cast<std::size_t>(i) * dr + j];
        }
        const double d = hp + wr[j] - tp;
        acc += d * d;
      }
      return -std::sqrt(acc);
    }
    case KgeFamily::TransD: {
      const float* hp = m.transd_ent_p.data.data() + static_cast<std::size_t>(h) * de;
      const float* tp = m.transd_ent_p.data.data() + static_cast<std::size_t>(t) * de;
      const float* rp = m.transd_rel_p.data.data() + static_cast<std::size_t>(r) * dr;
      double hdot = 0, tdot = 0;
      for (int i = 0; i < de; ++i) {
        hdot += static_cast<double>(hp[i]) * eh[i];
        tdot += static_cast<double>(tp[i]) * et[i];
      }
      double acc = 0;
      for (int j = 0; j < dr; ++j) {
        const double hbase = j < de ? eh[j] : 0.0;
        const double tbase = j < de ? et[j] : 0.0;
        const double hproj = hbase + rp[j] * hdot;
        const double tproj = tbase + rp[j] * tdot;
        const double d = hproj + wr[j] - tproj;
        acc += d * d;
      }
      return -std::sqrt(acc);
    }
    case KgeFamily::DistMult: {
      double acc = 0;
      for (int i = 0; i < de; ++i)
        acc += static_cast<double>(static_cast<float>(eh[i] * et[i])) * wr[i];
      return acc;
    }
    case KgeFamily::ComplEx: {
      const int half = de / 2;
      double acc = 0;
      for (int i = 0; i < half; ++i) {
        const double a = eh[i], b = eh[half + i];
        const double c = wr[i], d = wr[half + i];
        const double e = et[i], f = et[half + i];
        acc += (a * c - b * d) * e + (a * d + b * c) * f;
      }
      return acc;
    }
    case KgeFamily::RotatE: {
      const int half = de / 2;
      double acc = 0;
      for (int i = 0; i < half; ++i) {
        const double cr = std::cos(static_cast<double>(wr[i]));
        const double ci = std::sin(static_cast<double>(wr[i]));
        const double re = eh[i] * cr - eh[half + i] * ci - et[i];
        const double im = eh[i] * ci + eh[half + i] * cr - et[half + i];
        acc += re * re + im * im;
      }
      return -std::sqrt(acc);
    }
  }
  throw DataError("unknown KGE family");
}

}  // namespace

double kge_score(const KgeModel& model, const std::string& head,
                 const std::string& relation, const std::string& tail) {
  return score_plain(model, model.entity_of(head), model.relation_of(relation),
                     model.entity_of(tail));
}

typename Tape<float>::Id kge_score_node(Tape<float>& tape, const KgeModel& model,
                                        typename Tape<float>::Id entity_table,
                                        typename Tape<float>::Id relation_table,
                                        typename Tape<float>::Id transh_normal,
                                        typename Tape<float>::Id transr_proj,
                                        typename Tape<float>::Id transd_ent_p,
                                        typename Tape<float>::Id transd_rel_p,
                                        int head, int rel, int tail) {
  using Id = typename Tape<float>::Id;
  const int de = model.d_e, dr = model.d_r;
  const Id eh = tape.reshape(tape.gather_rows(entity_table, {head}), {de});
  const Id et = tape.reshape(tape.gather_rows(entity_table, {tail}), {de});
  const Id wr = tape.reshape(tape.gather_rows(relation_table, {rel}), {dr});

  switch (model.family) {
    case KgeFamily::TransE:
      return tape.scale(tape.l2_norm(tape.sub(tape.add(eh, wr), et)), -1.0f);
    case KgeFamily::TransH: {
      const Id n = tape.l2_normalize(
          tape.reshape(tape.gather_rows(transh_normal, {rel}), {de}));
      const Id hp = tape.sub(eh, tape.scale_by(n, tape.dot(n, eh)));
      const Id tp = tape.sub(et, tape.scale_by(n, tape.dot(n, et)));
      return tape.scale(tape.l2_norm(tape.sub(tape.add(hp, wr), tp)), -1.0f);
    }
    case KgeFamily::TransR: {
      const Id mr = tape.reshape(tape.gather_rows(transr_proj, {rel}), {de, dr});
      const Id hp = tape.reshape(tape.matmul(tape.reshape(eh, {1, de}), mr), {dr});
      const Id tp = tape.reshape(tape.matmul(tape.reshape(et, {1, de}), mr), {dr});
      return tape.scale(tape.l2_norm(tape.sub(tape.add(hp, wr), tp)), -1.0f);
    }
    case KgeFamily::TransD: {
      const Id hpv = tape.reshape(tape.gather_rows(transd_ent_p, {head}), {de});
      const Id tpv = tape.reshape(tape.gather_rows(transd_ent_p, {tail}), {de});
      const Id rpv = tape.reshape(tape.gather_rows(transd_rel_p, {rel}), {dr});
      const Id hp = tape.add(tape.resize_vec(eh, dr),
                             tape.scale_by(rpv, tape.dot(hpv, eh)));
      const Id tp = tape.add(tape.resize_vec(et, dr),
                             tape.scale_by(rpv, tape.dot(tpv, et)));
      return tape.scale(tape.l2_norm(tape.sub(tape.add(hp, wr), tp)), -1.0f);
    }
    case KgeFamily::DistMult:
      return tape.sum(tape.mul(tape.mul(eh, et), wr));
    case KgeFamily::ComplEx: {
      const int half = de / 2;
      const Id a = tape.slice_cols(tape.reshape(eh, {1, de}), 0, half);
      const Id b = tape.slice_cols(tape.reshape(eh, {1, de}), half, de);
      const Id c = tape.slice_cols(tape.reshape(wr, {1, de}), 0, half);
      const Id d = tape.slice_cols(tape.reshape(wr, {1, de}), half, de);
      const Id e = tape.slice_cols(tape.reshape(et, {1, de}), 0, half);
      const Id f = tape.slice_cols(tape.reshape(et, {1, de}), half, de);
      const Id re_hr = tape.sub(tape.mul(a, c), tape.mul(b, d));
      const Id im_hr = tape.add(tape.mul(a, d), tape.mul(b, c));
      return tape.sum(tape.add(tape.mul(re_hr, e), tape.mul(im_hr, f)));
    }
    case KgeFamily::RotatE: {
      const int half = de / 2;
      const Id hre = tape.slice_cols(tape.reshape(eh, {1, de}), 0, half);
      const Id him = tape.slice_cols(tape.reshape(eh, {1, de}), half, de);
      const Id tre = tape.slice_cols(tape.reshape(et, {1, de}), 0, half);
      const Id tim = tape.slice_cols(tape.reshape(et, {1, de}), half, de);
      const Id wre = tape.reshape(tape.cos(wr), {1, half});
      const Id wim = tape.reshape(tape.sin(wr), {1, half});
      const Id dre = tape.sub(tape.sub(tape.mul(hre, wre), tape.mul(him, wim)), tre);
      const Id dim = tape.sub(tape.add(tape.mul(hre, wim), tape.mul(him, wre)), tim);
      return tape.scale(tape.l2_norm(tape.concat_cols({dre, dim})), -1.0f);
    }
  }
  throw DataError("unknown KGE family");
}

namespace {

std::vector<int> sample_kge_negatives(const KgeModel& model,
                                      const KnowledgeGraph& kg, const Triple& t,
                                      int count, bool same_modality, Rng& rng) {
  const std::unordered_set<std::string>& positives = kg.tails_of(t.head_id, t.relation);
  const std::string tail_modality = kg.node(t.tail_id).modality;

  std::vector<int> eligible;
  eligible.reserve(model.entity_ids.size());
  for (std::size_t i = 0; i < model.entity_ids.size(); ++i) {
    const std::string& id = model.entity_ids[i];
    if (id == t.tail_id || positives.count(id)) continue;
    if (same_modality && kg.node(id).modality != tail_modality) continue;
    eligible.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(eligible.size()) < count) {
    eligible.clear();
    for (std::size_t i = 0; i < model.entity_ids.size(); ++i) {
      if (model.entity_ids[i] == t.tail_id) continue;
      eligible.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(eligible.size()) < count)
      throw DataError("not enough entities to sample KGE negatives");
  }
  for (int i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_int(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(count);
  return eligible;
}

}  // namespace

KgeModel train_kge(const KnowledgeGraph& kg, const std::vector<Triple>& train,
                   KgeFamily family, const KgeTrainConfig& config) {
  if (train.empty()) throw DataError("train_kge: empty train split");
  KgeModel model = init_kge_model(family, kg, config);
  const KgeLoss loss_kind =
      config.loss_overridden ? config.loss : default_kge_loss(family);
  const float gamma = config.gamma;
  if (loss_kind == KgeLoss::margin && gamma <= 0)
    throw DataError("margin loss requires gamma > 0");

  // The Adam-facing parameter list owns the tensors; the model mirror is
  // refreshed after every update so plain scoring and constraints see
  // current values.
  std::vector<NamedTensor<float>> params;
  params.push_back({"entity", std::move(model.entity)});
  params.push_back({"relation", std::move(model.relation)});
  if (family == KgeFamily::TransH)
    params.push_back({"transh_normal", std::move(model.transh_normal)});
  if (family == KgeFamily::TransR)
    params.push_back({"transr_proj", std::move(model.transr_proj)});
  if (family == KgeFamily::TransD) {
    params.push_back({"transd_ent_p", std::move(model.transd_ent_p)});
    params.push_back({"transd_rel_p", std::move(model.transd_rel_p)});
  }
  auto restore = [&]() {
    for (auto& p : params) {
      if (p.name == "entity") model.entity = p.value;
      if (p.name == "relation") model.relation = p.value;
      if (p.name == "transh_normal") model.transh_normal = p.value;
      if (p.name == "transr_proj") model.transr_proj = p.value;
      if (p.name == "transd_ent_p") model.transd_ent_p = p.value;
      if (p.name == "transd_rel_p") model.transd_rel_p = p.value;
    }
  };
  restore();

  Adam<float> adam(static_cast<float>(config.lr));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(Rng::derive(config.seed, 0x9000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      try {
        Tape<float> tape;
        using Id = Tape<float>::Id;
        std::vector<Id> pids;
        for (auto& p : params) pids.push_back(tape.input(p.value, true));
        auto pid = [&](const char* name) -> Id {
          for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return pids[i];
          return -1;
        };
        const Id ent = pid("entity");
        const Id rel = pid("relation");
        const Id thn = pid("transh_normal");
        const Id trp = pid("transr_proj");
        const Id tep = pid("transd_ent_p");
        const Id trr = pid("transd_rel_p");

        auto score_of = [&](int h, int r, int t) {
          return kge_score_node(tape, model, ent, rel, thn, trp, tep, trr, h, r, t);
        };

        std::vector<Id> triple_losses;
        for (std::size_t b = start; b < stop; ++b) {
          const Triple& t = train[order[b]];
          const int h = model.entity_of(t.head_id);
          const int r = model.relation_of(t.relation);
          const int ti = model.entity_of(t.tail_id);
          const std::vector<int> negs = sample_kge_negatives(
              model, kg, t, config.negatives, config.same_modality_negatives, rng);

          const Id s_pos = score_of(h, r, ti);
          std::vector<Id> s_negs;
          s_negs.reserve(negs.size());
          for (int n : negs) s_negs.push_back(score_of(h, r, n));

          switch (loss_kind) {
            case KgeLoss::margin: {
              std::vector<Id> parts;
              for (Id sn : s_negs)
                parts.push_back(tape.relu(
                    tape.add_scalar(tape.sub(sn, s_pos), gamma)));
              triple_losses.push_back(tape.mean(tape.concat_rows(parts)));
              break;
            }
            case KgeLoss::logistic: {
              std::vector<Id> parts;
              for (Id sn : s_negs) parts.push_back(tape.softplus(sn));
              const Id neg_term = tape.mean(tape.concat_rows(parts));
              const Id pos_term = tape.softplus(tape.scale(s_pos, -1.0f));
              triple_losses.push_back(tape.add(pos_term, neg_term));
              break;
            }
            case KgeLoss::self_adversarial: {
              // Negative weights from current scores, detached.
              std::vector<double> plain(negs.size());
              double mx = -1e300;
              for (std::size_t i = 0; i < negs.size(); ++i) {
                plain[i] = config.adversarial_alpha * score_plain(model, h, r, negs[i]);
                mx = std::max(mx, plain[i]);
              }
              double z = 0;
              for (double& p : plain) {
                p = std::exp(p - mx);
                z += p;
              }
              const Id pos_term =
                  tape.softplus(tape.scale(tape.add_scalar(s_pos, gamma), -1.0f));
              std::vector<Id> parts{pos_term};
              for (std::size_t i = 0; i < negs.size(); ++i) {
                const Id term = tape.softplus(tape.add_scalar(s_negs[i], gamma));
                parts.push_back(tape.scale(term, static_cast<float>(plain[i] / z)));
              }
              Id acc = parts[0];
              for (std::size_t i = 1; i < parts.size(); ++i) acc = tape.add(acc, parts[i]);
              triple_losses.push_back(acc);
              break;
            }
          }
        }
        const Id batch_loss = tape.mean(tape.concat_rows(triple_losses));
        tape.backward(batch_loss);

        std::vector<TensorData<float>> grads;
        for (std::size_t i = 0; i < params.size(); ++i) grads.push_back(tape.grad(pids[i]));
        adam.step(params, grads);
        restore();
        apply_constraints(model);
        for (auto& p : params) {
          if (p.name == "entity") p.value = model.entity;
          if (p.name == "relation") p.value = model.relation;
          if (p.name == "transh_normal") p.value = model.transh_normal;
        }
      } catch (const NumericError& e) {
        throw NumericError("kge epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(start) + ": " +
                           e.what());
      }
    }
  }
  restore();
  return model;
}

KgeRanked kge_rank_tails(const KgeModel& model, const std::string& head,
                         const std::string& relation,
                         const std::vector<std::string>& candidates,
                         const std::unordered_set<std::string>& filter) {
  const int h = model.entity_of(head);
  const int r = model.relation_of(relation);
  KgeRanked out;
  out.entries.reserve(candidates.size());
  for (const std::string& id : candidates) {
    if (filter.count(id)) continue;
    out.entries.emplace_back(id, score_plain(model, h, r, model.entity_of(id)));
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

EvalReport evaluate_link_prediction_kge(
    const KgeModel& model, const std::vector<Triple>& test,
    const KnowledgeGraph& kg,
    const std::unordered_map<std::string, std::unordered_set<std::string>>& filter,
    bool filtered) {
  if (test.empty()) throw DataError("evaluate_link_prediction_kge: empty test set");

  std::map<std::string, std::vector<std::string>> candidates_by_modality;
  auto candidates_for = [&](const std::string& modality) -> const std::vector<std::string>& {
    auto it = candidates_by_modality.find(modality);
    if (it != candidates_by_modality.end()) return it->second;
    std::vector<std::string> ids = kg.nodes_of_modality(modality);
    std::sort(ids.begin(), ids.end());
    return candidates_by_modality.emplace(modality, std::move(ids)).first->second;
  };

  EvalReport report;
  report.filtered = filtered;
  std::map<std::string, std::vector<int>> task_ranks;
  std::vector<std::string> task_order;
  for (const Triple& t : test) {
    const std::string tail_modality = kg.node(t.tail_id).modality;
    std::unordered_set<std::string> removed;
    if (filtered) {
      auto it = filter.find(t.head_id + '\t' + t.relation);
      if (it != filter.end()) {
        removed = it->second;
        removed.erase(t.tail_id);
      }
    }
    const KgeRanked ranked =
        kge_rank_tails(model, t.head_id, t.relation, candidates_for(tail_modality), removed);
    int rank = 0;
    for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
      if (ranked.entries[i].first == t.tail_id) {
        rank = static_cast<int>(i) + 1;
        break;
      }
    }
    if (rank == 0) throw DataError("kge eval: target missing from candidates: " + t.tail_id);

    const std::string key =
        kg.node(t.head_id).modality + '\t' + t.relation + '\t' + tail_modality;
    auto [it, inserted] = task_ranks.emplace(key, std::vector<int>{});
    if (inserted) task_order.push_back(key);
    it->second.push_back(rank);
    report.ranks.push_back(rank);
    report.rank_triples.push_back(t.head_id + '\t' + t.relation + '\t' + t.tail_id);
  }

  std::sort(task_order.begin(), task_order.end());
  for (const std::string& key : task_order) {
    const std::vector<int>& ranks = task_ranks[key];
    EvalTask task;
    std::size_t p1 = key.find('\t'), p2 = key.find('\t', p1 + 1);
    task.head_modality = key.substr(0, p1);
    task.relation = key.substr(p1 + 1, p2 - p1 - 1);
    task.tail_modality = key.substr(p2 + 1);
    task.count = ranks.size();
    task.mrr = mrr(ranks);
    task.hit1 = hit_at_k(ranks, 1);
    task.hit3 = hit_at_k(ranks, 3);
    task.hit10 = hit_at_k(ranks, 10);
    report.tasks.push_back(std::move(task));
  }
  report.count = report.ranks.size();
  report.mrr = mrr(report.ranks);
  report.hit1 = hit_at_k(report.ranks, 1);
  report.hit3 = hit_at_k(report.ranks, 3);
  report.hit10 = hit_at_k(report.ranks, 10);
  return report;
}

void save_kge_checkpoint(const KgeModel& model, const KgeTrainConfig& config,
                         const std::string& path) {
  ContainerPayload payload;
  payload.header["kind"] = "kge";
  payload.header["family"] = kge_family_name(model.family);
  payload.header["d_e"] = model.d_e;
  payload.header["d_r"] = model.d_r;
  payload.header["gamma"] = model.gamma;
  payload.header["entity_ids"] = model.entity_ids;
  payload.header["relation_vocab"] = model.relation_vocab;
  payload.header["train_config"] = {
      {"lr", config.lr},           {"epochs", config.epochs},
      {"batch_size", config.batch_size}, {"negatives", config.negatives},
      {"loss", kge_loss_name(config.loss_overridden ? config.loss
                                                    : default_kge_loss(model.family))},
      {"seed", config.seed}};
  payload.tensors.push_back({"entity", model.entity});
  payload.tensors.push_back({"relation", model.relation});
  if (model.family == KgeFamily::TransH)
    payload.tensors.push_back({"transh_normal", model.transh_normal});
  if (model.family == KgeFamily::TransR)
    payload.tensors.push_back({"transr_proj", model.transr_proj});
  if (model.family == KgeFamily::TransD) {
    payload.tensors.push_back({"transd_ent_p", model.transd_ent_p});
    payload.tensors.push_back({"transd_rel_p", model.transd_rel_p});
  }
  write_container(path, payload);
}

KgeModel load_kge_checkpoint(const std::string& path) {
  const ContainerPayload payload = read_container(path);
  if (payload.header.value("kind", "") != "kge")
    throw DataError("checkpoint at " + path + " is not a KGE checkpoint");
  KgeModel model;
  model.family = kge_family_from_name(payload.header.at("family").get<std::string>());
  model.d_e = payload.header.at("d_e").get<int>();
  model.d_r = payload.header.at("d_r").get<int>();
  model.gamma = payload.header.at("gamma").get<float>();
  model.entity_ids = payload.header.at("entity_ids").get<std::vector<std::string>>();
  model.relation_vocab =
      payload.header.at("relation_vocab").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < model.entity_ids.size(); ++i)
    model.entity_index.emplace(model.entity_ids[i], static_cast<int>(i));
  for (std::size_t i = 0; i < model.relation_vocab.size(); ++i)
    model.relation_index.emplace(model.relation_vocab[i], static_cast<int>(i));
  for (const auto& t : payload.tensors) {
    if (t.name == "entity") model.entity = t.value;
    else if (t.name == "relation") model.relation = t.value;
    else if (t.name == "transh_normal") model.transh_normal = t.value;
    else if (t.name == "transr_proj") model.transr_proj = t.value;
    else if (t.name == "transd_ent_p") model.transd_ent_p = t.value;
    else if (t.name == "transd_rel_p") model.transd_rel_p = t.value;
    else throw DataError("unexpected tensor in KGE checkpoint: " + t.name);
  }
  if (model.entity.shape != std::vector<int>{static_cast<int>(model.entity_ids.size()),
                                             model.d_e})
    throw DataError("KGE checkpoint entity table shape mismatch");
  return model;
}

}  // namespace kgbridge
