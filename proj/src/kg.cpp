#include "kgbridge/kg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgbridge/rng.hpp"

namespace kgbridge {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

[[noreturn]] void fail_line(const std::string& path, std::size_t lineno,
                            const std::string& msg) {
  throw DataError(path + ":" + std::to_string(lineno) + ": " + msg);
}

}  // namespace

KnowledgeGraph KnowledgeGraph::build(std::vector<Node> nodes,
                                     std::vector<Triple> triples,
                                     std::vector<std::string> modality_vocab,
                                     std::vector<std::string> relation_vocab) {
  KnowledgeGraph kg;
  const bool modality_declared = !modality_vocab.empty();
  const bool relation_declared = !relation_vocab.empty();
  kg.modality_vocab_ = std::move(modality_vocab);
  kg.relation_vocab_ = std::move(relation_vocab);
  for (std::size_t i = 0; i < kg.modality_vocab_.size(); ++i) {
    if (!kg.modality_index_.emplace(kg.modality_vocab_[i], static_cast<int>(i)).second)
      throw DataError("duplicate modality in vocabulary: " + kg.modality_vocab_[i]);
  }
  for (std::size_t i = 0; i < kg.relation_vocab_.size(); ++i) {
    if (!kg.relation_index_.emplace(kg.relation_vocab_[i], static_cast<int>(i)).second)
      throw DataError("duplicate relation in vocabulary: " + kg.relation_vocab_[i]);
  }

  kg.nodes_ = std::move(nodes);
  for (std::size_t i = 0; i < kg.nodes_.size(); ++i) {
    const Node& n = kg.nodes_[i];
    if (n.id.empty()) throw DataError("node with empty id");
    if (n.feature.empty()) throw DataError("node " + n.id + " has empty feature");
    if (!kg.node_index_.emplace(n.id, i).second)
      throw DataError("duplicate node id: " + n.id);
    if (kg.modality_index_.find(n.modality) == kg.modality_index_.end()) {
      if (modality_declared)
        throw DataError("node " + n.id + " has modality '" + n.modality +
                        "' not in the declared vocabulary");
      kg.modality_index_.emplace(n.modality, static_cast<int>(kg.modality_vocab_.size()));
      kg.modality_vocab_.push_back(n.modality);
    }
    kg.by_modality_[n.modality].push_back(n.id);
  }

  kg.triples_ = std::move(triples);
  for (const Triple& t : kg.triples_) {
    if (kg.node_index_.find(t.head_id) == kg.node_index_.end())
      throw DataError("triple references unknown node id: " + t.head_id);
    if (kg.node_index_.find(t.tail_id) == kg.node_index_.end())
      throw DataError("triple references unknown node id: " + t.tail_id);
    if (t.head_id == t.tail_id)
      throw DataError("self-loop triple on node " + t.head_id + " rejected");
    if (kg.relation_index_.find(t.relation) == kg.relation_index_.end()) {
      if (relation_declared)
        throw DataError("triple relation '" + t.relation +
                        "' not in the declared vocabulary");
      kg.relation_index_.emplace(t.relation, static_cast<int>(kg.relation_vocab_.size()));
      kg.relation_vocab_.push_back(t.relation);
    }
    kg.adjacency_[t.head_id + '\t' + t.relation].insert(t.tail_id);
  }
  return kg;
}

const Node& KnowledgeGraph::node(const std::string& id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) throw DataError("unknown node id: " + id);
  return nodes_[it->second];
}

const Node* KnowledgeGraph::find_node(const std::string& id) const {
  auto it = node_index_.find(id);
  return it == node_index_.end() ? nullptr : &nodes_[it->second];
}

int KnowledgeGraph::modality_index(const std::string& label) const {
  auto it = modality_index_.find(label);
  return it == modality_index_.end() ? -1 : it->second;
}

int KnowledgeGraph::relation_index(const std::string& label) const {
  auto it = relation_index_.find(label);
  return it == relation_index_.end() ? -1 : it->second;
}

const std::vector<std::string>& KnowledgeGraph::nodes_of_modality(
    const std::string& m) const {
  static const std::vector<std::string> kEmpty;
  auto it = by_modality_.find(m);
  return it == by_modality_.end() ? kEmpty : it->second;
}

const std::unordered_set<std::string>& KnowledgeGraph::tails_of(
    const std::string& head_id, const std::string& relation) const {
  static const std::unordered_set<std::string> kEmpty;
  auto it = adjacency_.find(head_id + '\t' + relation);
  return it == adjacency_.end() ? kEmpty : it->second;
}

KnowledgeGraph load_graph(const std::string& nodes_path,
                          const std::string& triples_path) {
  std::ifstream nin(nodes_path);
  if (!nin) throw DataError("cannot open nodes file: " + nodes_path);
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(nin, line)) fail_line(nodes_path, 1, "empty file");
  ++lineno;
  if (line != "#nodes v1")
    fail_line(nodes_path, lineno, "expected header '#nodes v1', got '" + line + "'");

  std::vector<std::string> modality_vocab;
  std::vector<Node> nodes;
  while (std::getline(nin, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("#modalities\t", 0) == 0) {
      modality_vocab = split_commas(line.substr(std::string("#modalities\t").size()));
      continue;
    }
    if (line[0] == '#') fail_line(nodes_path, lineno, "unknown directive: " + line);
    auto f = split_tabs(line);
    if (f.size() != 3)
      fail_line(nodes_path, lineno, "expected 3 tab-separated fields, got " +
                                        std::to_string(f.size()));
    if (f[0].empty()) fail_line(nodes_path, lineno, "empty node id");
    if (f[2].empty()) fail_line(nodes_path, lineno, "empty feature for node " + f[0]);
    nodes.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2])});
  }

  std::ifstream tin(triples_path);
  if (!tin) throw DataError("cannot open triples file: " + triples_path);
  lineno = 0;
  if (!std::getline(tin, line)) fail_line(triples_path, 1, "empty file");
  ++lineno;
  if (line != "#triples v1")
    fail_line(triples_path, lineno, "expected header '#triples v1', got '" + line + "'");

  std::vector<std::string> relation_vocab;
  std::vector<Triple> triples;
  while (std::getline(tin, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("#relations\t", 0) == 0) {
      relation_vocab = split_commas(line.substr(std::string("#relations\t").size()));
      continue;
    }
    if (line[0] == '#') fail_line(triples_path, lineno, "unknown directive: " + line);
    auto f = split_tabs(line);
    if (f.size() != 3)
      fail_line(triples_path, lineno, "expected 3 tab-separated fields, got " +
                                          std::to_string(f.size()));
    triples.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2])});
  }

  return KnowledgeGraph::build(std::move(nodes), std::move(triples),
                               std::move(modality_vocab), std::move(relation_vocab));
}

void write_nodes_tsv(const std::string& path, const std::vector<Node>& nodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write nodes file: " + path);
  out << "#nodes v1\n";
  for (const Node& n : nodes)
    out << n.id << '\t' << n.modality << '\t' << n.feature << '\n';
}

void write_triples_tsv(const std::string& path, const std::vector<Triple>& triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write triples file: " + path);
  out << "#triples v1\n";
  for (const Triple& t : triples)
    out << t.head_id << '\t' << t.relation << '\t' << t.tail_id << '\n';
}

std::vector<Triple> load_triples_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triples file: " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) fail_line(path, 1, "empty file");
  ++lineno;
  if (line != "#triples v1")
    fail_line(path, lineno, "expected header '#triples v1', got '" + line + "'");
  std::vector<Triple> triples;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("#relations\t", 0) == 0) continue;
    auto f = split_tabs(line);
    if (f.size() != 3) fail_line(path, lineno, "expected 3 tab-separated fields");
    triples.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2])});
  }
  return triples;
}

std::string stratum_key(const KnowledgeGraph& kg, const Triple& t) {
  return t.relation + '\t' + kg.node(t.head_id).modality + '\t' +
         kg.node(t.tail_id).modality;
}

TripleSplit split_triples(const KnowledgeGraph& kg, const SplitRatios& ratios,
                          std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.valid <= 0 || ratios.test <= 0)
    throw DataError("split ratios must all be positive");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw DataError("split ratios must sum to 1");

  // Strata in first-appearance order so the split is a pure function of
  // (kg, ratios, seed).
  std::vector<std::string> stratum_order;
  std::unordered_map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < kg.triples().size(); ++i) {
    const std::string key = stratum_key(kg, kg.triples()[i]);
    auto [it, inserted] = strata.emplace(key, std::vector<std::size_t>{});
    if (inserted) stratum_order.push_back(key);
    it->second.push_back(i);
  }

  TripleSplit split;
  split.ratios = ratios;
  split.seed = seed;
  Rng rng(seed);
  for (const std::string& key : stratum_order) {
    std::vector<std::size_t>& idx = strata[key];
    StratumCount sc;
    sc.key = key;
    sc.total = idx.size();
    if (idx.size() < 3) {
      for (auto i : idx) split.train.push_back(kg.triples()[i]);
      sc.train = idx.size();
      split.warnings.push_back("stratum '" + key + "' has only " +
                               std::to_string(idx.size()) +
                               " triples; placed wholly in train");
      split.strata.push_back(sc);
      continue;
    }
    rng.shuffle(idx);
    const auto n = idx.size();
    auto n_valid = static_cast<std::size_t>(
        std::llround(ratios.valid * static_cast<double>(n)));
    auto n_test = static_cast<std::size_t>(
        std::llround(ratios.test * static_cast<double>(n)));
    n_valid = std::min(n_valid, n - 2);
    n_test = std::min(n_test, n - 1 - n_valid);
    const std::size_t n_train = n - n_valid - n_test;
    for (std::size_t i = 0; i < n; ++i) {
      const Triple& t = kg.triples()[idx[i]];
      if (i < n_train)
        split.train.push_back(t);
      else if (i < n_train + n_valid)
        split.valid.push_back(t);
      else
        split.test.push_back(t);
    }
    sc.train = n_train;
    sc.valid = n_valid;
    sc.test = n_test;
    split.strata.push_back(sc);
  }
  return split;
}

void write_split(const TripleSplit& split, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_triples_tsv(dir + "/train.tsv", split.train);
  write_triples_tsv(dir + "/valid.tsv", split.valid);
  write_triples_tsv(dir + "/test.tsv", split.test);

  nlohmann::ordered_json j;
  j["ratios"] = {split.ratios.train, split.ratios.valid, split.ratios.test};
  j["seed"] = split.seed;
  auto strata = nlohmann::ordered_json::array();
  for (const auto& s : split.strata) {
    strata.push_back({{"key", s.key},
                      {"total", s.total},
                      {"train", s.train},
                      {"valid", s.valid},
                      {"test", s.test}});
  }
  j["strata"] = strata;
  j["warnings"] = split.warnings;
  std::ofstream out(dir + "/split.json", std::ios::binary);
  if (!out) throw DataError("cannot write split sidecar in " + dir);
  out << j.dump(2) << '\n';
}

TripleSplit load_split(const std::string& dir, const KnowledgeGraph& kg) {
  TripleSplit split;
  split.train = load_triples_tsv(dir + "/train.tsv");
  split.valid = load_triples_tsv(dir + "/valid.tsv");
  split.test = load_triples_tsv(dir + "/test.tsv");
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const Triple& t : *part) {
      if (kg.find_node(t.head_id) == nullptr || kg.find_node(t.tail_id) == nullptr)
        throw DataError("split triple references node absent from graph: " +
                        t.head_id + " / " + t.tail_id);
    }
  }
  return split;
}

GraphStats graph_stats(const KnowledgeGraph& kg) {
  GraphStats s;
  s.total_nodes = kg.nodes().size();
  s.total_triples = kg.triples().size();
  std::unordered_map<std::string, std::size_t> node_counts;
  for (const Node& n : kg.nodes()) ++node_counts[n.modality];
  for (const std::string& m : kg.modality_vocab())
    s.node_counts.emplace_back(m, node_counts.count(m) ? node_counts[m] : 0);

  std::unordered_map<std::string, std::size_t> triple_counts;
  for (const Triple& t : kg.triples()) {
    ++triple_counts[kg.node(t.head_id).modality + '\t' + t.relation + '\t' +
                    kg.node(t.tail_id).modality];
  }
  for (const std::string& hm : kg.modality_vocab()) {
    for (const std::string& r : kg.relation_vocab()) {
      for (const std::string& tm : kg.modality_vocab()) {
        auto it = triple_counts.find(hm + '\t' + r + '\t' + tm);
        if (it == triple_counts.end()) continue;
        s.triple_counts.push_back({hm, r, tm, it->second});
      }
    }
  }
  return s;
}

std::string graph_stats_to_json(const GraphStats& s) {
  nlohmann::ordered_json j;
  j["total_nodes"] = s.total_nodes;
  j["total_triples"] = s.total_triples;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& [m, c] : s.node_counts)
    nodes.push_back({{"modality", m}, {"count", c}});
  j["nodes"] = nodes;
  auto triples = nlohmann::ordered_json::array();
  for (const auto& t : s.triple_counts) {
    triples.push_back({{"head_modality", t.head_modality},
                       {"relation", t.relation},
                       {"tail_modality", t.tail_modality},
                       {"count", t.count}});
  }
  j["triples"] = triples;
  return j.dump(2);
}

namespace {

std::string format_latent(const std::vector<double>& u) {
  std::string s;
  char buf[32];
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", u[i]);
    if (i) s.push_back(',');
    s += buf;
  }
  return s;
}

// Row-major dim x dim matrix for one planted relation.
std::vector<double> make_relation_map(const PlantedRelationSpec& r, int dim) {
  std::vector<double> a(static_cast<std::size_t>(dim) * dim, 0.0);
  switch (r.map_kind) {
    case PlantedMapKind::identity:
      for (int i = 0; i < dim; ++i) a[static_cast<std::size_t>(i) * dim + i] = 1.0;
      return a;
    case PlantedMapKind::gaussian: {
      Rng rng(Rng::derive(r.map_seed, 0x6d61));
      for (auto& v : a) v = rng.normal() / std::sqrt(static_cast<double>(dim));
      return a;
    }
    case PlantedMapKind::rotation: {
      // QR of a Gaussian matrix via Gram-Schmidt, signs fixed so the
      // result is deterministic and orthonormal.
      Rng rng(Rng::derive(r.map_seed, 0x6d61));
      std::vector<std::vector<double>> cols(dim, std::vector<double>(dim));
      for (auto& c : cols)
        for (auto& v : c) v = rng.normal();
      for (int j = 0; j < dim; ++j) {
        for (int k = 0; k < j; ++k) {
          double dot = 0;
          for (int i = 0; i < dim; ++i) dot += cols[j][i] * cols[k][i];
          for (int i = 0; i < dim; ++i) cols[j][i] -= dot * cols[k][i];
        }
        double norm = 0;
        for (int i = 0; i < dim; ++i) norm += cols[j][i] * cols[j][i];
        norm = std::sqrt(norm);
        const double sign = cols[j][0] >= 0 ? 1.0 : -1.0;
        for (int i = 0; i < dim; ++i) cols[j][i] *= sign / norm;
      }
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) a[static_cast<std::size_t>(i) * dim + j] = cols[j][i];
      return a;
    }
  }
  throw DataError("unknown planted map kind");
}

}  // namespace

PlantedKg generate_planted_kg(const PlantedKgSpec& spec) {
  if (spec.latent_dim < 1) throw DataError("planted latent_dim must be >= 1");
  if (spec.edges_per_head < 1) throw DataError("planted edges_per_head must be >= 1");
  if (spec.noise_scale < 0) throw DataError("planted noise_scale must be >= 0");
  for (const auto& [name, count] : spec.modalities) {
    if (count < spec.edges_per_head)
      throw DataError("planted modality '" + name +
                      "' smaller than edges_per_head");
  }

  PlantedKg out;
  std::vector<Node> nodes;
  std::vector<std::pair<std::string, std::vector<std::string>>> ids_by_modality;
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    const auto& [name, count] = spec.modalities[m];
    Rng rng(Rng::derive(spec.seed, m));
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%05d", name.c_str(), i);
      std::vector<double> u(static_cast<std::size_t>(spec.latent_dim));
      for (auto& v : u) v = rng.normal();
      nodes.push_back({buf, name, format_latent(u)});
      out.latents.emplace(buf, std::move(u));
      ids.emplace_back(buf);
    }
    ids_by_modality.emplace_back(name, std::move(ids));
  }

  auto ids_of = [&](const std::string& m) -> const std::vector<std::string>& {
    for (const auto& [name, ids] : ids_by_modality)
      if (name == m) return ids;
    throw DataError("planted relation references unknown modality: " + m);
  };

  std::vector<Triple> triples;
  for (std::size_t r = 0; r < spec.relations.size(); ++r) {
    const PlantedRelationSpec& rel = spec.relations[r];
    const auto& heads = ids_of(rel.head_modality);
    const auto& tails = ids_of(rel.tail_modality);
    std::vector<double> a = make_relation_map(rel, spec.latent_dim);
    Rng noise_rng(Rng::derive(spec.seed, 0x1000 + r));

    for (const std::string& head : heads) {
      const std::vector<double>& u = out.latents.at(head);
      std::vector<double> target(static_cast<std::size_t>(spec.latent_dim), 0.0);
      for (int i = 0; i < spec.latent_dim; ++i) {
        double acc = 0;
        for (int j = 0; j < spec.latent_dim; ++j)
          acc += a[static_cast<std::size_t>(i) * spec.latent_dim + j] * u[j];
        target[i] = acc;
      }
      for (auto& v : target) v += spec.noise_scale * noise_rng.normal();

      std::vector<std::pair<double, const std::string*>> dists;
      dists.reserve(tails.size());
      for (const std::string& tail : tails) {
        if (tail == head) continue;
        const std::vector<double>& w = out.latents.at(tail);
        double d2 = 0;
        for (int i = 0; i < spec.latent_dim; ++i) {
          const double diff = target[i] - w[i];
          d2 += diff * diff;
        }
        dists.emplace_back(d2, &tail);
      }
      const auto k = static_cast<std::size_t>(spec.edges_per_head);
      std::partial_sort(dists.begin(), dists.begin() + k, dists.end(),
                        [](const auto& x, const auto& y) {
                          return x.first != y.first ? x.first < y.first
                                                    : *x.second < *y.second;
                        });
      for (std::size_t i = 0; i < k; ++i)
        triples.push_back({head, rel.name, *dists[i].second});
    }
    out.relation_maps.emplace(rel.name, std::move(a));
  }

  out.graph = KnowledgeGraph::build(std::move(nodes), std::move(triples));
  return out;
}

}  // namespace kgbridge
