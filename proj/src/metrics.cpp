#include "kgbridge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kgbridge {

EmbeddingIndex EmbeddingIndex::from_rows(std::string modality,
                                         std::vector<std::string> ids,
                                         TensorData<float> rows) {
  if (rows.shape.size() != 2 || rows.shape[0] != static_cast<int>(ids.size()))
    throw DataError("index rows do not match id count");
  EmbeddingIndex idx;
  idx.modality_ = std::move(modality);
  idx.dim_ = rows.shape[1];
  idx.ids_ = std::move(ids);
  idx.rows_ = std::move(rows);
  for (std::size_t i = 0; i < idx.ids_.size(); ++i) {
    if (!idx.id_to_row_.emplace(idx.ids_[i], static_cast<int>(i)).second)
      throw DataError("duplicate id in index: " + idx.ids_[i]);
  }
  for (std::size_t i = 0; i < idx.ids_.size(); ++i) {
    double norm2 = 0;
    const float* r = idx.row(i);
    for (int j = 0; j < idx.dim_; ++j) norm2 += static_cast<double>(r[j]) * r[j];
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-5)
      throw DataError("index row for " + idx.ids_[i] + " is not unit norm");
  }
  return idx;
}

int EmbeddingIndex::row_of(const std::string& id) const {
  auto it = id_to_row_.find(id);
  return it == id_to_row_.end() ? -1 : it->second;
}

const std::unordered_set<std::string>* EmbeddingIndex::filter_for(
    const std::string& key) const {
  auto it = filter_.find(key);
  return it == filter_.end() ? nullptr : &it->second;
}

EmbeddingIndex build_index(const std::vector<std::string>& node_ids,
                           const std::string& modality,
                           const EmbeddingCache& cache,
                           const BridgeModel* model) {
  const int raw_dim = cache.raw_dim(modality);
  TensorData<float> rows;
  if (model != nullptr) {
    rows = embed_candidates(node_ids, modality, cache, *model);
  } else {
    rows = TensorData<float>::zeros({static_cast<int>(node_ids.size()), raw_dim});
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
      const float* src = cache.row(modality, node_ids[i]);
      const std::vector<float> unit =
          l2_normalize(std::vector<float>(src, src + raw_dim));
      std::copy(unit.begin(), unit.end(),
                rows.data.begin() + static_cast<std::ptrdiff_t>(i) * raw_dim);
    }
  }
  return EmbeddingIndex::from_rows(modality, node_ids, std::move(rows));
}

namespace {

std::vector<double> score_all(const EmbeddingIndex& index,
                              const std::vector<float>& query) {
  if (static_cast<int>(query.size()) != index.dim())
    throw DataError("query dimension does not match index");
  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const float* r = index.row(i);
    double acc = 0;
    for (int j = 0; j < index.dim(); ++j)
      acc += static_cast<double>(r[j]) * static_cast<double>(query[j]);
    scores[i] = acc;
  }
  return scores;
}

// Order: score descending, id ascending on ties.
std::vector<std::size_t> ranked_order(const EmbeddingIndex& index,
                                      const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.ids()[a] < index.ids()[b];
  });
  return order;
}

}  // namespace

RankedResult top_k(const EmbeddingIndex& index, const std::vector<float>& query,
                   int k) {
  if (k < 1) throw DataError("top_k: k must be >= 1");
  const std::vector<double> scores = score_all(index, query);
  const std::vector<std::size_t> order = ranked_order(index, scores);
  RankedResult out;
  out.truncated_k = k > static_cast<int>(index.size());
  const std::size_t take = std::min<std::size_t>(k, index.size());
  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.entries.push_back({index.ids()[order[i]], scores[order[i]]});
  return out;
}

int rank_of_target(const EmbeddingIndex& index, const std::vector<float>& query,
                   const std::string& target_id, const std::string& filter_key,
                   bool filtered) {
  if (index.row_of(target_id) < 0)
    throw DataError("rank target absent from index: " + target_id);
  const std::vector<double> scores = score_all(index, query);
  const std::vector<std::size_t> order = ranked_order(index, scores);
  const std::unordered_set<std::string>* removed =
      filtered && !filter_key.empty() ? index.filter_for(filter_key) : nullptr;
  int rank = 0;
  for (std::size_t pos : order) {
    const std::string& id = index.ids()[pos];
    if (removed != nullptr && id != target_id && removed->count(id)) continue;
    ++rank;
    if (id == target_id) return rank;
  }
  throw DataError("target unexpectedly filtered out: " + target_id);
}

double mrr(const std::vector<int>& ranks) {
  if (ranks.empty()) throw DataError("mrr of empty rank list");
  double acc = 0;
  for (int r : ranks) {
    if (r < 1) throw DataError("ranks must be >= 1");
    acc += 1.0 / r;
  }
  return acc / static_cast<double>(ranks.size());
}

double hit_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw DataError("hit_at_k of empty rank list");
  if (k < 1) throw DataError("hit_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (int r : ranks)
    if (r <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::pair<double, double> precision_recall_at_k(
    const std::vector<std::string>& retrieved,
    const std::set<std::string>& relevant, int k) {
  if (k < 1) throw DataError("precision_recall_at_k: k must be >= 1");
  if (relevant.empty()) throw DataError("precision_recall_at_k: empty relevant set");
  std::size_t hits = 0;
  const std::size_t take = std::min<std::size_t>(k, retrieved.size());
  for (std::size_t i = 0; i < take; ++i)
    if (relevant.count(retrieved[i])) ++hits;
  return {static_cast<double>(hits) / k,
          static_cast<double>(hits) / static_cast<double>(relevant.size())};
}

double ndcg_at_k(const std::vector<std::string>& retrieved,
                 const std::map<std::string, double>& relevance, int k) {
  if (k < 1) throw DataError("ndcg_at_k: k must be >= 1");
  for (const auto& [id, gain] : relevance) {
    if (gain < 0) throw DataError("ndcg gains must be >= 0");
  }
  double dcg = 0;
  const std::size_t take = std::min<std::size_t>(k, retrieved.size());
  for (std::size_t i = 0; i < take; ++i) {
    auto it = relevance.find(retrieved[i]);
    if (it != relevance.end())
      dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<double> gains;
  gains.reserve(relevance.size());
  for (const auto& [id, gain] : relevance) gains.push_back(gain);
  std::sort(gains.begin(), gains.end(), std::greater<>());
  double ideal = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(k, gains.size()); ++i)
    ideal += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  return ideal == 0 ? 0.0 : dcg / ideal;
}

TensorData<double> manhattan_similarity_matrix(const TensorData<float>& embeddings) {
  if (embeddings.shape.size() != 2)
    throw DataError("manhattan_similarity_matrix expects a rank-2 matrix");
  const int n = embeddings.shape[0], d = embeddings.shape[1];
  auto s = TensorData<double>::zeros({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double l1 = 0;
      for (int k = 0; k < d; ++k)
        l1 += std::abs(static_cast<double>(embeddings.data[i * d + k]) -
                       static_cast<double>(embeddings.data[j * d + k]));
      s.data[i * n + j] = -l1;
      s.data[j * n + i] = -l1;
    }
  }
  return s;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& pred, const std::vector<double>& gold) {
  if (pred.size() != gold.size()) throw DataError("spearman: length mismatch");
  if (pred.size() < 2) throw DataError("spearman needs at least 2 points");
  const auto all_equal = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (all_equal(pred) || all_equal(gold))
    throw DataError("spearman undefined for constant input");

  const std::vector<double> rp = average_ranks(pred);
  const std::vector<double> rg = average_ranks(gold);
  const auto n = static_cast<double>(pred.size());
  double mp = 0, mg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += rp[i];
    mg += rg[i];
  }
  mp /= n;
  mg /= n;
  double cov = 0, vp = 0, vg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = rp[i] - mp, b = rg[i] - mg;
    cov += a * b;
    vp += a * a;
    vg += b * b;
  }
  return cov / std::sqrt(vp * vg);
}

std::unordered_map<std::string, std::unordered_set<std::string>> build_filter(
    const std::vector<const std::vector<Triple>*>& parts) {
  std::unordered_map<std::string, std::unordered_set<std::string>> filter;
  for (const auto* part : parts)
    for (const Triple& t : *part) filter[t.head_id + '\t' + t.relation].insert(t.tail_id);
  return filter;
}

EvalReport evaluate_labeled_retrieval(const EmbeddingIndex& index,
                                      const std::vector<LabeledQuery>& queries,
                                      const std::vector<int>& ks) {
  if (queries.empty()) throw DataError("evaluate_labeled_retrieval: no queries");
  EvalReport report;
  report.filtered = false;
  for (const LabeledQuery& lq : queries) {
    if (lq.relevant.empty())
      throw DataError("evaluate_labeled_retrieval: query with no relevant ids");
    const RankedResult ranked = top_k(index, lq.query,
                                      static_cast<int>(index.size()));
    std::vector<std::string> retrieved;
    retrieved.reserve(ranked.entries.size());
    for (const auto& e : ranked.entries) retrieved.push_back(e.id);

    int first_relevant = 0;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
      if (lq.relevant.count(retrieved[i])) {
        first_relevant = static_cast<int>(i) + 1;
        break;
      }
    }
    if (first_relevant == 0)
      throw DataError("evaluate_labeled_retrieval: relevant ids absent from index");
    report.ranks.push_back(first_relevant);

    std::set<std::string> relevant_ids;
    for (const auto& [id, gain] : lq.relevant) relevant_ids.insert(id);
    for (int k : ks) {
      const auto [p, r] = precision_recall_at_k(retrieved, relevant_ids, k);
      report.precision_at[k] += p;
      report.recall_at[k] += r;
      report.ndcg_at[k] += ndcg_at_k(retrieved, lq.relevant, k);
    }
  }
  const auto n = static_cast<double>(queries.size());
  for (int k : ks) {
    report.precision_at[k] /= n;
    report.recall_at[k] /= n;
    report.ndcg_at[k] /= n;
  }
  report.count = queries.size();
  report.mrr = mrr(report.ranks);
  report.hit1 = hit_at_k(report.ranks, 1);
  report.hit3 = hit_at_k(report.ranks, 3);
  report.hit10 = hit_at_k(report.ranks, 10);
  return report;
}

EvalReport evaluate_link_prediction(
    const BridgeModel& model, const std::vector<Triple>& test,
    const KnowledgeGraph& kg, const EmbeddingCache& cache,
    const std::unordered_map<std::string, std::unordered_set<std::string>>& filter,
    bool filtered) {
  if (test.empty()) throw DataError("evaluate_link_prediction: empty test set");

  // One index per tail modality; rows do not depend on the relation.
  std::map<std::string, EmbeddingIndex> indexes;
  auto index_for = [&](const std::string& modality) -> EmbeddingIndex& {
    auto it = indexes.find(modality);
    if (it != indexes.end()) return it->second;
    std::vector<std::string> ids = kg.nodes_of_modality(modality);
    std::sort(ids.begin(), ids.end());
    EmbeddingIndex idx = build_index(ids, modality, cache, &model);
    std::unordered_map<std::string, std::unordered_set<std::string>> f(filter.begin(),
                                                                       filter.end());
    idx.set_filter(std::move(f));
    return indexes.emplace(modality, std::move(idx)).first->second;
  };

  EvalReport report;
  report.filtered = filtered;
  std::map<std::string, std::vector<int>> task_ranks;  // key -> ranks
  std::vector<std::string> task_order;

  for (const Triple& t : test) {
    const Node& head = kg.node(t.head_id);
    const Node& tail = kg.node(t.tail_id);
    EmbeddingIndex& index = index_for(tail.modality);

    const float* raw = cache.row(head.modality, head.id);
    RawEmbedding raw_emb{head.id, head.modality,
                         std::vector<float>(raw, raw + cache.raw_dim(head.modality))};
    const BridgedEmbedding query = bridge_transform(
        project(raw_emb, model), head.modality, tail.modality, t.relation, model);

    const int rank = rank_of_target(index, query.vector, t.tail_id,
                                    t.head_id + '\t' + t.relation, filtered);
    const std::string key = head.modality + '\t' + t.relation + '\t' + tail.modality;
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
    std::stringstream ss(key);
    std::getline(ss, task.head_modality, '\t');
    std::getline(ss, task.relation, '\t');
    std::getline(ss, task.tail_modality, '\t');
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

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["filtered"] = report.filtered;
  j["count"] = report.count;
  j["mrr"] = report.mrr;
  j["hit1"] = report.hit1;
  j["hit3"] = report.hit3;
  j["hit10"] = report.hit10;
  auto tasks = nlohmann::ordered_json::array();
  for (const auto& t : report.tasks) {
    tasks.push_back({{"head_modality", t.head_modality},
                     {"relation", t.relation},
                     {"tail_modality", t.tail_modality},
                     {"count", t.count},
                     {"mrr", t.mrr},
                     {"hit1", t.hit1},
                     {"hit3", t.hit3},
                     {"hit10", t.hit10}});
  }
  j["tasks"] = tasks;
  if (!report.precision_at.empty()) {
    auto emit = [](const std::map<int, double>& m) {
      nlohmann::ordered_json out = nlohmann::ordered_json::object();
      for (const auto& [k, v] : m) out[std::to_string(k)] = v;
      return out;
    };
    j["precision_at"] = emit(report.precision_at);
    j["recall_at"] = emit(report.recall_at);
    j["ndcg_at"] = emit(report.ndcg_at);
  }
  return j.dump(2);
}

void write_ranks_tsv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ranks file: " + path);
  out << "#ranks v1\n";
  for (std::size_t i = 0; i < report.ranks.size(); ++i)
    out << report.rank_triples[i] << '\t' << report.ranks[i] << '\n';
}

TensorData<double> load_similarity_matrix_tsv(const std::string& path,
                                              const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open similarity matrix: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, '\t')) header.push_back(item);
  }
  if (header != ids)
    throw DataError(path + ": header ids do not match the requested id list");
  const std::size_t n = ids.size();
  auto m = TensorData<double>::zeros({static_cast<int>(n), static_cast<int>(n)});
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError(path + ": missing matrix row");
    std::stringstream ss(line);
    std::string item;
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::getline(ss, item, '\t'))
        throw DataError(path + ": short matrix row " + std::to_string(i + 2));
      m.data[i * n + j] = std::stod(item);
    }
  }
  return m;
}

std::map<std::string, double> semantic_similarity_eval(
    const std::vector<std::string>& query_ids, const std::string& query_modality,
    const BridgeModel& model, const EmbeddingCache& cache,
    const std::vector<SimilarityAspect>& aspects) {
  const int raw_dim = cache.raw_dim(query_modality);
  const auto n = static_cast<int>(query_ids.size());

  std::map<std::string, double> out;
  for (const SimilarityAspect& aspect : aspects) {
    if (aspect.gold.shape != std::vector<int>{n, n})
      throw DataError("gold matrix for aspect '" + aspect.name +
                      "' does not match the query id count");
    auto transformed = TensorData<float>::zeros({n, model.config.d});
    for (int i = 0; i < n; ++i) {
      const float* raw = cache.row(query_modality, query_ids[i]);
      RawEmbedding raw_emb{query_ids[i], query_modality,
                           std::vector<float>(raw, raw + raw_dim)};
      const BridgedEmbedding b =
          bridge_transform(project(raw_emb, model), query_modality, aspect.name,
                           aspect.relation, model);
      std::copy(b.vector.begin(), b.vector.end(),
                transformed.data.begin() +
                    static_cast<std::ptrdiff_t>(i) * model.config.d);
    }
    const TensorData<double> pred = manhattan_similarity_matrix(transformed);
    std::vector<double> flat_pred, flat_gold;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        flat_pred.push_back(pred.data[i * n + j]);
        flat_gold.push_back(aspect.gold.data[i * n + j]);
      }
    out[aspect.name] = spearman(flat_pred, flat_gold);
  }
  return out;
}

}  // namespace kgbridge
