#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgbridge/errors.hpp"

namespace kgbridge {

struct Node {
  std::string id;
  std::string modality;
  std::string feature;  // sequence / SMILES / name+definition text
};

struct Triple {
  std::string head_id;
  std::string relation;
  std::string tail_id;
};

// Multimodal knowledge graph: typed nodes with raw features plus directed
// relation-labeled triples. Immutable after construction; safe to share
// read-only across workers.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Builds and validates. Vocabularies, when empty, are derived in
  // first-appearance order. Throws DataError on duplicate ids, dangling
  // triple ids, self-loops, empty fields, or labels outside a declared
  // vocabulary.
  static KnowledgeGraph build(std::vector<Node> nodes,
                              std::vector<Triple> triples,
                              std::vector<std::string> modality_vocab = {},
                              std::vector<std::string> relation_vocab = {});

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<std::string>& modality_vocab() const { return modality_vocab_; }
  const std::vector<std::string>& relation_vocab() const { return relation_vocab_; }

  const Node& node(const std::string& id) const;
  const Node* find_node(const std::string& id) const;
  int modality_index(const std::string& label) const;  // -1 if unknown
  int relation_index(const std::string& label) const;

  // Node ids of one modality, in insertion order.
  const std::vector<std::string>& nodes_of_modality(const std::string& m) const;

  // True tails recorded for (head, relation); empty set if none.
  const std::unordered_set<std::string>& tails_of(const std::string& head_id,
                                                  const std::string& relation) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Triple> triples_;
  std::vector<std::string> modality_vocab_;
  std::vector<std::string> relation_vocab_;
  std::unordered_map<std::string, std::size_t> node_index_;
  std::unordered_map<std::string, int> modality_index_;
  std::unordered_map<std::string, int> relation_index_;
  std::unordered_map<std::string, std::vector<std::string>> by_modality_;
  std::unordered_map<std::string, std::unordered_set<std::string>> adjacency_;
};

// Loads the TSV pair described in the file formats section of the README.
// Nodes: header "#nodes v1", rows "id<TAB>modality<TAB>feature".
// Triples: header "#triples v1", rows "head<TAB>relation<TAB>tail".
// An optional "#modalities<TAB>a,b,c" / "#relations<TAB>r,s" second header
// line pins the vocabulary; labels outside it are rejected.
KnowledgeGraph load_graph(const std::string& nodes_path,
                          const std::string& triples_path);

void write_nodes_tsv(const std::string& path, const std::vector<Node>& nodes);
void write_triples_tsv(const std::string& path, const std::vector<Triple>& triples);
std::vector<Triple> load_triples_tsv(const std::string& path);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct StratumCount {
  std::string key;  // relation \t head_modality \t tail_modality
  std::size_t total = 0, train = 0, valid = 0, test = 0;
};

struct TripleSplit {
  std::vector<Triple> train, valid, test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::vector<StratumCount> strata;     // first-appearance order
  std::vector<std::string> warnings;    // e.g. strata too small to split
};

// Stratified by (relation, head modality, tail modality), deterministic in
// (kg, ratios, seed). Strata with fewer than 3 triples go wholly to train
// and are reported as warnings.
TripleSplit split_triples(const KnowledgeGraph& kg, const SplitRatios& ratios,
                          std::uint64_t seed);

std::string stratum_key(const KnowledgeGraph& kg, const Triple& t);

// Writes train/valid/test TSVs plus a split.json sidecar into dir.
void write_split(const TripleSplit& split, const std::string& dir);
// Reads the three TSVs back; sidecar is not required.
TripleSplit load_split(const std::string& dir, const KnowledgeGraph& kg);

struct GraphStats {
  // (modality, count) in vocabulary order.
  std::vector<std::pair<std::string, std::size_t>> node_counts;
  // (head modality, relation, tail modality, count) ordered by vocabulary
  // indices; zero-count strata omitted.
  struct TripleCount {
    std::string head_modality, relation, tail_modality;
    std::size_t count = 0;
  };
  std::vector<TripleCount> triple_counts;
  std::size_t total_nodes = 0;
  std::size_t total_triples = 0;
};

GraphStats graph_stats(const KnowledgeGraph& kg);
std::string graph_stats_to_json(const GraphStats& s);

// --- synthetic graphs with a known generating process ---

enum class PlantedMapKind { identity, rotation, gaussian };

struct PlantedRelationSpec {
  std::string name;
  std::string head_modality;
  std::string tail_modality;
  PlantedMapKind map_kind = PlantedMapKind::rotation;
  std::uint64_t map_seed = 0;
};

struct PlantedKgSpec {
  std::vector<std::pair<std::string, int>> modalities;  // (name, node count)
  int latent_dim = 8;
  std::vector<PlantedRelationSpec> relations;
  int edges_per_head = 1;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

struct PlantedKg {
  KnowledgeGraph graph;
  std::map<std::string, std::vector<double>> latents;        // node id -> u
  std::map<std::string, std::vector<double>> relation_maps;  // name -> row-major dim x dim
};

// Latents are N(0,1)^latent_dim; node features serialize them so the
// latent-passthrough encoder recovers them. For each relation r and head i,
// tails are the edges_per_head nearest (Euclidean) tail-modality latents to
// A_r u_i + noise, excluding the head node itself. Deterministic in seed.
PlantedKg generate_planted_kg(const PlantedKgSpec& spec);

}  // namespace kgbridge
