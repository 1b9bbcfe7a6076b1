#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgbridge/bridge.hpp"
#include "kgbridge/kg.hpp"

namespace kgbridge {

// Unit-row candidate matrix for one modality, queried by inner product.
class EmbeddingIndex {
 public:
  static EmbeddingIndex from_rows(std::string modality,
                                  std::vector<std::string> ids,
                                  TensorData<float> rows);

  const std::string& modality() const { return modality_; }
  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const float* row(std::size_t i) const { return rows_.data.data() + i * dim_; }
  int row_of(const std::string& id) const;  // -1 if absent

  // Known-positive tails per filter key, removed (target excepted) when
  // ranking in the filtered setting.
  void set_filter(std::unordered_map<std::string, std::unordered_set<std::string>> f) {
    filter_ = std::move(f);
  }
  const std::unordered_set<std::string>* filter_for(const std::string& key) const;

 private:
  std::string modality_;
  int dim_ = 0;
  std::vector<std::string> ids_;
  TensorData<float> rows_;
  std::unordered_map<std::string, int> id_to_row_;
  std::unordered_map<std::string, std::unordered_set<std::string>> filter_;
};

// Rows = normalize(project(raw)); pass model = nullptr for encoder-only
// baselines where rows = normalize(raw).
EmbeddingIndex build_index(const std::vector<std::string>& node_ids,
                           const std::string& modality,
                           const EmbeddingCache& cache,
                           const BridgeModel* model);

struct RankedResult {
  struct Entry {
    std::string id;
    double score;
  };
  std::vector<Entry> entries;      // score descending, id-ascending ties
  bool truncated_k = false;        // k exceeded the candidate count
  std::string head_modality, tail_modality, relation;  // query metadata
};

// Exact top-k by inner product. k larger than the index returns everything
// and sets truncated_k.
RankedResult top_k(const EmbeddingIndex& index, const std::vector<float>& query,
                   int k);

// 1-based rank of target among candidates, known positives under
// filter_key removed (except the target). Empty filter_key or filtered =
// false ranks the raw candidate list.
int rank_of_target(const EmbeddingIndex& index, const std::vector<float>& query,
                   const std::string& target_id, const std::string& filter_key,
                   bool filtered = true);

double mrr(const std::vector<int>& ranks);
double hit_at_k(const std::vector<int>& ranks, int k);

// P@k = |top-k ∩ relevant| / k, R@k = |top-k ∩ relevant| / |relevant|.
std::pair<double, double> precision_recall_at_k(
    const std::vector<std::string>& retrieved,
    const std::set<std::string>& relevant, int k);

double ndcg_at_k(const std::vector<std::string>& retrieved,
                 const std::map<std::string, double>& relevance, int k);

// S[i][j] = -sum_k |x_ik - x_jk|; symmetric, zero diagonal.
TensorData<double> manhattan_similarity_matrix(const TensorData<float>& embeddings);

// Pearson correlation of average-tied ranks. Throws on constant input.
double spearman(const std::vector<double>& pred, const std::vector<double>& gold);

struct EvalTask {
  std::string head_modality, relation, tail_modality;
  std::size_t count = 0;
  double mrr = 0, hit1 = 0, hit3 = 0, hit10 = 0;
};

struct EvalReport {
  std::vector<EvalTask> tasks;  // deterministic task order
  std::size_t count = 0;
  double mrr = 0, hit1 = 0, hit3 = 0, hit10 = 0;
  bool filtered = true;
  std::vector<int> ranks;                 // per test triple, input order
  std::vector<std::string> rank_triples;  // matching "head\trel\ttail" keys
  // Multi-relevant retrieval metrics, filled by evaluate_labeled_retrieval.
  std::map<int, double> precision_at, recall_at, ndcg_at;
};

std::string eval_report_to_json(const EvalReport& report);
void write_ranks_tsv(const EvalReport& report, const std::string& path);

// Filter map (head \t relation -> tails) built from triple lists, typically
// train + valid.
std::unordered_map<std::string, std::unordered_set<std::string>> build_filter(
    const std::vector<const std::vector<Triple>*>& parts);

// Retrieval against queries with several relevant candidates each, the
// shape used for phenotype-matching style tasks. MRR/Hit@K use the rank of
// the first relevant item; Precision@K, Recall@K, and nDCG@K are averaged
// over queries for every k in ks.
struct LabeledQuery {
  std::vector<float> query;              // unit vector
  std::map<std::string, double> relevant;  // id -> gain (> 0)
};

EvalReport evaluate_labeled_retrieval(const EmbeddingIndex& index,
                                      const std::vector<LabeledQuery>& queries,
                                      const std::vector<int>& ks);

// Tail-entity ranking over all candidate nodes of the tail modality.
EvalReport evaluate_link_prediction(
    const BridgeModel& model, const std::vector<Triple>& test,
    const KnowledgeGraph& kg, const EmbeddingCache& cache,
    const std::unordered_map<std::string, std::unordered_set<std::string>>& filter,
    bool filtered = true);

// Gold similarity TSV: first line is tab-separated ids, then an n x n value
// matrix.
TensorData<double> load_similarity_matrix_tsv(const std::string& path,
                                              const std::vector<std::string>& ids);

struct SimilarityAspect {
  std::string name;           // tail modality the proteins are mapped into
  std::string relation;
  TensorData<double> gold;    // square over the query ids
};

// For each aspect: bridge every query embedding into the aspect space,
// take pairwise Manhattan similarities, flatten the upper triangle of
// prediction and gold, and report Spearman's rho.
std::map<std::string, double> semantic_similarity_eval(
    const std::vector<std::string>& query_ids, const std::string& query_modality,
    const BridgeModel& model, const EmbeddingCache& cache,
    const std::vector<SimilarityAspect>& aspects);

}  // namespace kgbridge
