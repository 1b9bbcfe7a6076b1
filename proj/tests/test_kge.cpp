#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kgbridge/kge.hpp"

using namespace kgbridge;
namespace fs = std::filesystem;

namespace {

KnowledgeGraph cycle_graph(int n = 8) {
  std::vector<Node> nodes;
  std::vector<Triple> triples;
  for (int i = 0; i < n; ++i)
    nodes.push_back({"v" + std::to_string(i), "node", "feature" + std::to_string(i)});
  for (int i = 0; i < n; ++i)
    triples.push_back({"v" + std::to_string(i), "next", "v" + std::to_string((i + 1) % n)});
  return KnowledgeGraph::build(nodes, triples);
}

KnowledgeGraph random_graph(int n_nodes, int n_triples, std::uint64_t seed) {
  std::vector<Node> nodes;
  for (int i = 0; i < n_nodes; ++i)
    nodes.push_back({"e" + std::to_string(i), "node", "f"});
  std::vector<Triple> triples;
  Rng rng(seed);
  std::set<std::string> seen;
  const std::vector<std::string> rels = {"ra", "rb", "rc"};
  while (static_cast<int>(triples.size()) < n_triples) {
    const auto h = rng.uniform_int(n_nodes), t = rng.uniform_int(n_nodes);
    if (h == t) continue;
    const std::string rel = rels[rng.uniform_int(rels.size())];
    const std::string key =
        std::to_string(h) + rel + std::to_string(t);
    if (!seen.insert(key).second) continue;
    triples.push_back({"e" + std::to_string(h), rel, "e" + std::to_string(t)});
  }
  return KnowledgeGraph::build(nodes, triples);
}

KgeTrainConfig small_config(int d = 8, std::uint64_t seed = 3) {
  KgeTrainConfig c;
  c.d_e = d;
  c.d_r = d;
  c.seed = seed;
  c.epochs = 5;
  c.negatives = 4;
  c.batch_size = 16;
  c.lr = 0.02;
  return c;
}

void set_entity_row(KgeModel& m, const std::string& id, std::vector<float> row) {
  const int e = m.entity_of(id);
  std::copy(row.begin(), row.end(),
            m.entity.data.begin() + static_cast<std::ptrdiff_t>(e) * m.d_e);
}

void set_relation_row(KgeModel& m, const std::string& label, std::vector<float> row,
                      TensorData<float>& table) {
  const int r = m.relation_of(label);
  std::copy(row.begin(), row.end(),
            table.data.begin() + static_cast<std::ptrdiff_t>(r) * table.shape[1]);
}

}  // namespace

TEST_CASE("kge_score: TransE exact translation scores zero") {
  const KnowledgeGraph kg = KnowledgeGraph::build(
      {{"a", "node", "f"}, {"b", "node", "f"}}, {{"a", "r", "b"}});
  KgeModel m = init_kge_model(KgeFamily::TransE, kg, small_config(2));
  set_entity_row(m, "a", {1.0f, 0.0f});
  set_entity_row(m, "b", {1.0f, 1.0f});
  set_relation_row(m, "r", {0.0f, 1.0f}, m.relation);
  CHECK(kge_score(m, "a", "r", "b") == doctest::Approx(0.0).epsilon(1e-12));
  // And it tops any candidate set containing b.
  CHECK(kge_score(m, "a", "r", "b") > kge_score(m, "a", "r", "a"));
}

TEST_CASE("kge_score: RotatE with zero phases reduces to negated distance") {
  const KnowledgeGraph kg = KnowledgeGraph::build(
      {{"a", "node", "f"}, {"b", "node", "f"}}, {{"a", "r", "b"}});
  KgeModel m = init_kge_model(KgeFamily::RotatE, kg, small_config(4));
  std::fill(m.relation.data.begin(), m.relation.data.end(), 0.0f);
  set_entity_row(m, "a", {0.5f, -0.25f, 0.75f, 0.1f});
  set_entity_row(m, "b", {0.5f, -0.25f, 0.75f, 0.1f});
  CHECK(kge_score(m, "a", "r", "b") == doctest::Approx(0.0).epsilon(1e-12));

  set_entity_row(m, "b", {0.5f, 0.75f, 0.75f, 0.1f});
  double d2 = 0;
  for (int i = 0; i < 4; ++i) {
    const double diff = m.entity.data[m.entity_of("a") * 4 + i] -
                        m.entity.data[m.entity_of("b") * 4 + i];
    d2 += diff * diff;
  }
  CHECK(kge_score(m, "a", "r", "b") == doctest::Approx(-std::sqrt(d2)).epsilon(1e-6));
}

TEST_CASE("kge_score: DistMult loop oracle and exact symmetry; ComplEx asymmetry") {
  const KnowledgeGraph kg = random_graph(6, 8, 1);
  KgeModel dm = init_kge_model(KgeFamily::DistMult, kg, small_config(4, 7));
  const int h = dm.entity_of("e0"), r = dm.relation_of("ra"), t = dm.entity_of("e1");
  double expected = 0;
  for (int i = 0; i < 4; ++i)
    expected += static_cast<double>(static_cast<float>(dm.entity.data[h * 4 + i] *
                                                       dm.entity.data[t * 4 + i])) *
                dm.relation.data[r * 4 + i];
  CHECK(kge_score(dm, "e0", "ra", "e1") == doctest::Approx(expected).epsilon(1e-6));

  // Symmetry is exact, not approximate.
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const std::string a = "e" + std::to_string(rng.uniform_int(6));
    const std::string b = "e" + std::to_string(rng.uniform_int(6));
    CHECK(kge_score(dm, a, "rb", b) == kge_score(dm, b, "rb", a));
  }

  // ComplEx differs under argument swap when the relation has imaginary
  // parts.
  KgeModel cx = init_kge_model(KgeFamily::ComplEx, kg, small_config(4, 8));
  CHECK(kge_score(cx, "e0", "ra", "e1") != kge_score(cx, "e1", "ra", "e0"));
}

TEST_CASE("kge_score_node matches the plain scorer for every family") {
  const KnowledgeGraph kg = random_graph(10, 20, 2);
  for (KgeFamily family :
       {KgeFamily::TransE, KgeFamily::TransH, KgeFamily::TransR, KgeFamily::TransD,
        KgeFamily::DistMult, KgeFamily::ComplEx, KgeFamily::RotatE}) {
    KgeTrainConfig config = small_config(6, 31 + static_cast<int>(family));
    config.d_r = 4;  // exercises d_e != d_r for TransR/TransD
    KgeModel m = init_kge_model(family, kg, config);
    // Perturb away from the constrained init so the comparison is not
    // trivially symmetric.
    Rng rng(55);
    for (auto& v : m.entity.data) v += static_cast<float>(0.05 * rng.normal());
    if (family != KgeFamily::RotatE)
      for (auto& v : m.relation.data) v += static_cast<float>(0.05 * rng.normal());
    if (family == KgeFamily::TransD) {
      for (auto& v : m.transd_ent_p.data) v = static_cast<float>(0.3 * rng.normal());
      for (auto& v : m.transd_rel_p.data) v = static_cast<float>(0.3 * rng.normal());
    }

    Tape<float> tape;
    using Id = Tape<float>::Id;
    const Id ent = tape.input(m.entity);
    const Id rel = tape.input(m.relation);
    const Id thn = m.transh_normal.data.empty() ? -1 : tape.input(m.transh_normal);
    const Id trp = m.transr_proj.data.empty() ? -1 : tape.input(m.transr_proj);
    const Id tep = m.transd_ent_p.data.empty() ? -1 : tape.input(m.transd_ent_p);
    const Id trr = m.transd_rel_p.data.empty() ? -1 : tape.input(m.transd_rel_p);

    Rng pick(7);
    for (int i = 0; i < 20; ++i) {
      const int h = static_cast<int>(pick.uniform_int(10));
      int t = static_cast<int>(pick.uniform_int(10));
      if (t == h) t = (t + 1) % 10;
      const int r = static_cast<int>(pick.uniform_int(3));
      const Id node = kge_score_node(tape, m, ent, rel, thn, trp, tep, trr, h, r, t);
      const double plain =
          kge_score(m, m.entity_ids[h], m.relation_vocab[r], m.entity_ids[t]);
      CHECK(tape.value(node).data[0] ==
            doctest::Approx(plain).epsilon(2e-4));
    }
  }
}

TEST_CASE("train_kge: zero epochs equals seeded initialization; same seed twice matches") {
  const KnowledgeGraph kg = random_graph(12, 30, 3);
  KgeTrainConfig c = small_config();
  c.epochs = 0;
  const KgeModel trained = train_kge(kg, kg.triples(), KgeFamily::TransE, c);
  const KgeModel fresh = init_kge_model(KgeFamily::TransE, kg, c);
  CHECK(trained.entity.data == fresh.entity.data);
  CHECK(trained.relation.data == fresh.relation.data);

  c.epochs = 3;
  const KgeModel a = train_kge(kg, kg.triples(), KgeFamily::TransE, c);
  const KgeModel b = train_kge(kg, kg.triples(), KgeFamily::TransE, c);
  CHECK(a.entity.data == b.entity.data);
  CHECK(a.relation.data == b.relation.data);
}

TEST_CASE("train_kge: constraints hold after every family's training") {
  const KnowledgeGraph kg = random_graph(10, 24, 4);
  KgeTrainConfig c = small_config(6);
  c.d_r = 4;
  c.epochs = 3;
  for (KgeFamily family :
       {KgeFamily::TransE, KgeFamily::TransH, KgeFamily::TransR, KgeFamily::TransD,
        KgeFamily::DistMult, KgeFamily::ComplEx, KgeFamily::RotatE}) {
    const KgeModel m = train_kge(kg, kg.triples(), family, c);
    if (family == KgeFamily::TransE || family == KgeFamily::TransH ||
        family == KgeFamily::TransR || family == KgeFamily::TransD) {
      for (int e = 0; e < m.entity.shape[0]; ++e) {
        double norm2 = 0;
        for (int j = 0; j < m.d_e; ++j) {
          const double v = m.entity.data[e * m.d_e + j];
          norm2 += v * v;
        }
        CHECK(std::sqrt(norm2) <= 1.0 + 1e-5);
      }
    }
    if (family == KgeFamily::RotatE) {
      for (float phase : m.relation.data) {
        CHECK(phase > -M_PI - 1e-6);
        CHECK(phase <= M_PI + 1e-6);
        const double mod = std::cos(phase) * std::cos(phase) +
                           std::sin(phase) * std::sin(phase);
        CHECK(std::abs(mod - 1.0) < 1e-6);
      }
    }
    if (family == KgeFamily::TransH) {
      for (int r = 0; r < m.transh_normal.shape[0]; ++r) {
        double norm2 = 0;
        for (int j = 0; j < m.d_e; ++j) {
          const double v = m.transh_normal.data[r * m.d_e + j];
          norm2 += v * v;
        }
        CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("kge_rank_tails: singletons, tie-break, full-sort oracle") {
  const KnowledgeGraph kg = random_graph(100, 200, 5);
  const KgeModel m = init_kge_model(KgeFamily::DistMult, kg, small_config(6, 77));

  const KgeRanked single = kge_rank_tails(m, "e0", "ra", {"e5"});
  REQUIRE(single.entries.size() == 1);
  CHECK(single.entries[0].first == "e5");

  // Equal scores break ties by ascending id: duplicate a row.
  KgeModel tied = m;
  const int src = tied.entity_of("e7");
  const int dst = tied.entity_of("e3");
  for (int j = 0; j < tied.d_e; ++j)
    tied.entity.data[dst * tied.d_e + j] = tied.entity.data[src * tied.d_e + j];
  const KgeRanked two = kge_rank_tails(tied, "e0", "ra", {"e7", "e3"});
  REQUIRE(two.entries.size() == 2);
  CHECK(two.entries[0].second == two.entries[1].second);
  CHECK(two.entries[0].first == "e3");

  // 100 candidates equal an independent full sort.
  std::vector<std::string> candidates = m.entity_ids;
  const KgeRanked ranked = kge_rank_tails(m, "e0", "rb", candidates);
  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& id : candidates)
    oracle.emplace_back(-kge_score(m, "e0", "rb", id), id);
  std::sort(oracle.begin(), oracle.end());
  REQUIRE(ranked.entries.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(ranked.entries[i].first == oracle[i].second);

  // Filter removal.
  const KgeRanked filtered = kge_rank_tails(m, "e0", "rb", candidates, {"e1", "e2"});
  CHECK(filtered.entries.size() == candidates.size() - 2);
}

TEST_CASE("train_kge: TransE learns the cycle's train split") {
  const KnowledgeGraph kg = cycle_graph(8);
  const TripleSplit split = split_triples(kg, {0.8, 0.1, 0.1}, 13);
  KgeTrainConfig c;
  c.d_e = 16;
  c.d_r = 16;
  c.epochs = 200;
  c.batch_size = 8;
  c.lr = 0.05;
  c.negatives = 4;
  c.seed = 13;
  const KgeModel m = train_kge(kg, split.train, KgeFamily::TransE, c);

  const auto filter = build_filter({&split.train});
  const EvalReport report =
      evaluate_link_prediction_kge(m, split.train, kg, filter, true);
  CHECK(report.hit1 >= 0.9);
}

TEST_CASE("train_kge: same-modality negative corruption stays in-modality") {
  // Two modalities; negatives drawn with the flag must come from the tail's
  // modality even though KGE convention samples all entities.
  PlantedKgSpec spec;
  spec.modalities = {{"x", 12}, {"y", 12}};
  spec.latent_dim = 3;
  spec.relations = {{"r0", "x", "y", PlantedMapKind::gaussian, 4}};
  spec.edges_per_head = 2;
  spec.seed = 66;
  const KnowledgeGraph kg = generate_planted_kg(spec).graph;

  KgeTrainConfig c = small_config(6, 5);
  c.epochs = 2;
  c.same_modality_negatives = true;
  const KgeModel with_flag = train_kge(kg, kg.triples(), KgeFamily::TransE, c);
  c.same_modality_negatives = false;
  const KgeModel without = train_kge(kg, kg.triples(), KgeFamily::TransE, c);
  // Different candidate pools draw different rng streams, so the trained
  // tables differ; both runs stay finite.
  CHECK(with_flag.entity.data != without.entity.data);
  for (float v : with_flag.entity.data) CHECK(std::isfinite(v));
}

TEST_CASE("kge checkpoint round-trip") {
  const KnowledgeGraph kg = random_graph(10, 24, 6);
  KgeTrainConfig c = small_config(6);
  c.epochs = 2;
  const KgeModel m = train_kge(kg, kg.triples(), KgeFamily::RotatE, c);
  const auto dir = fs::temp_directory_path() / "kgbridge_kge_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "kge.ckpt").string();
  save_kge_checkpoint(m, c, path);
  const KgeModel loaded = load_kge_checkpoint(path);
  CHECK(loaded.family == KgeFamily::RotatE);
  CHECK(loaded.entity.data == m.entity.data);
  CHECK(loaded.relation.data == m.relation.data);
  CHECK(loaded.entity_ids == m.entity_ids);
  CHECK(kge_score(loaded, "e0", "ra", "e1") == kge_score(m, "e0", "ra", "e1"));
}

TEST_CASE("train_kge: evaluation improves over the untrained model on a random graph") {
  const KnowledgeGraph kg = random_graph(30, 120, 7);
  const TripleSplit split = split_triples(kg, {0.8, 0.1, 0.1}, 7);
  KgeTrainConfig c = small_config(16, 44);
  c.epochs = 60;
  c.lr = 0.05;
  const auto filter = build_filter({&split.train, &split.valid});

  const KgeModel untrained = init_kge_model(KgeFamily::DistMult, kg, c);
  const KgeModel trained = train_kge(kg, split.train, KgeFamily::DistMult, c);
  const EvalReport before =
      evaluate_link_prediction_kge(untrained, split.train, kg, filter, true);
  const EvalReport after =
      evaluate_link_prediction_kge(trained, split.train, kg, filter, true);
  CHECK(after.mrr > before.mrr);
}
