#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "kgbridge/metrics.hpp"
#include "kgbridge/rng.hpp"

using namespace kgbridge;

namespace {

TensorData<float> unit_rows(Rng& rng, int n, int d) {
  auto rows = TensorData<float>::zeros({n, d});
  for (int i = 0; i < n; ++i) {
    std::vector<float> v(d);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    const auto u = l2_normalize(v);
    std::copy(u.begin(), u.end(), rows.data.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  return rows;
}

std::vector<std::string> make_ids(int n, const std::string& prefix = "id") {
  std::vector<std::string> ids;
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix.c_str(), i);
    ids.emplace_back(buf);
  }
  return ids;
}

std::vector<float> unit_query(Rng& rng, int d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return l2_normalize(v);
}

}  // namespace

TEST_CASE("EmbeddingIndex: duplicate ids and non-unit rows rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(
      EmbeddingIndex::from_rows("m", {"a", "a"}, unit_rows(rng, 2, 4)), DataError);
  auto rows = unit_rows(rng, 2, 4);
  rows.data[0] *= 2.0f;
  CHECK_THROWS_AS(EmbeddingIndex::from_rows("m", {"a", "b"}, std::move(rows)),
                  DataError);
}

TEST_CASE("top_k: exact-match query, orthogonal query, full-sort oracle") {
  Rng rng(2);
  const int n = 50, d = 16;
  auto rows = unit_rows(rng, n, d);
  const auto ids = make_ids(n);
  std::vector<float> row7(rows.data.begin() + 7 * d, rows.data.begin() + 8 * d);
  const EmbeddingIndex index = EmbeddingIndex::from_rows("m", ids, std::move(rows));

  const RankedResult exact = top_k(index, row7, 3);
  CHECK(exact.entries[0].id == "id0007");
  CHECK(exact.entries[0].score == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(exact.truncated_k);

  // Orthogonal query: all scores zero, ordering is id order.
  auto zrows = TensorData<float>::zeros({3, 4});
  zrows.data = {1, 0, 0, 0,  0, 1, 0, 0,  0, 0, 1, 0};
  const EmbeddingIndex zindex =
      EmbeddingIndex::from_rows("m", {"c", "a", "b"}, std::move(zrows));
  const RankedResult ortho = top_k(zindex, {0, 0, 0, 1}, 5);
  CHECK(ortho.truncated_k);
  REQUIRE(ortho.entries.size() == 3);
  CHECK(ortho.entries[0].id == "a");
  CHECK(ortho.entries[1].id == "b");
  CHECK(ortho.entries[2].id == "c");
  for (const auto& e : ortho.entries) CHECK(e.score == 0.0);

  // 1000 random instances against a full argsort oracle.
  Rng orng(3);
  const int big_n = 40;
  auto big_rows = unit_rows(orng, big_n, 8);
  const auto big_ids = make_ids(big_n, "x");
  const EmbeddingIndex big =
      EmbeddingIndex::from_rows("m", big_ids, std::move(big_rows));
  for (int trial = 0; trial < 1000; ++trial) {
    const auto q = unit_query(orng, 8);
    const RankedResult got = top_k(big, q, 10);
    std::vector<std::pair<double, std::string>> oracle;
    for (int i = 0; i < big_n; ++i) {
      double acc = 0;
      for (int j = 0; j < 8; ++j) acc += static_cast<double>(big.row(i)[j]) * q[j];
      oracle.emplace_back(-acc, big_ids[i]);
    }
    std::sort(oracle.begin(), oracle.end());
    for (int i = 0; i < 10; ++i) {
      CHECK(got.entries[i].id == oracle[i].second);
      CHECK(got.entries[i].score == -oracle[i].first);
      CHECK(got.entries[i].score >= -1.0 - 1e-6);
      CHECK(got.entries[i].score <= 1.0 + 1e-6);
    }
  }
}

TEST_CASE("rank_of_target: trivial ranks and brute-force equality with filtering") {
  Rng rng(4);
  const int n = 30, d = 8;
  auto rows = unit_rows(rng, n, d);
  const auto ids = make_ids(n, "t");
  std::vector<float> target_row(rows.data.begin() + 4 * d, rows.data.begin() + 5 * d);
  EmbeddingIndex index = EmbeddingIndex::from_rows("m", ids, std::move(rows));
  index.set_filter({{"q", {"t0001", "t0002", "t0004"}}});

  CHECK(rank_of_target(index, target_row, "t0004", "") == 1);
  CHECK_THROWS_AS(rank_of_target(index, target_row, "missing", ""), DataError);

  for (int trial = 0; trial < 500; ++trial) {
    const auto q = unit_query(rng, d);
    const std::string target = ids[rng.uniform_int(n)];
    const int got = rank_of_target(index, q, target, "q", true);

    // Brute force: sort, drop filtered ids (target excepted), find position.
    std::vector<std::pair<double, std::string>> scored;
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int j = 0; j < d; ++j) acc += static_cast<double>(index.row(i)[j]) * q[j];
      scored.emplace_back(-acc, ids[i]);
    }
    std::sort(scored.begin(), scored.end());
    int rank = 0, expected = -1;
    for (const auto& [neg, id] : scored) {
      const bool removed = (id == "t0001" || id == "t0002" || id == "t0004") &&
                           id != target;
      if (removed) continue;
      ++rank;
      if (id == target) {
        expected = rank;
        break;
      }
    }
    CHECK(got == expected);

    // Raw mode keeps every candidate.
    const int raw = rank_of_target(index, q, target, "q", false);
    int raw_expected = 0;
    for (const auto& [neg, id] : scored) {
      ++raw_expected;
      if (id == target) break;
    }
    CHECK(raw == raw_expected);
  }
}

TEST_CASE("mrr and hit_at_k: examples and oracle equivalence") {
  CHECK(mrr({1}) == 1.0);
  CHECK(mrr({1, 2, 4}) == doctest::Approx((1.0 + 0.5 + 0.25) / 3).epsilon(1e-12));
  CHECK_THROWS_AS(mrr({}), DataError);
  CHECK_THROWS_AS(mrr({0}), DataError);

  CHECK(hit_at_k({1, 5, 20}, 10) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(hit_at_k({1, 5, 20}, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(5);
  std::vector<int> ranks;
  for (int i = 0; i < 200; ++i) ranks.push_back(1 + static_cast<int>(rng.uniform_int(50)));

  // Monotone in k, and equal to a cumulative-count oracle.
  double prev = 0.0;
  for (int k = 1; k <= 50; ++k) {
    const double h = hit_at_k(ranks, k);
    int count = 0;
    for (int r : ranks)
      if (r <= k) ++count;
    CHECK(h == doctest::Approx(count / 200.0).epsilon(1e-12));
    CHECK(h >= prev);
    prev = h;
  }

  // MRR direct-formula oracle in long double.
  long double acc = 0;
  for (int r : ranks) acc += 1.0L / r;
  CHECK(mrr(ranks) == doctest::Approx(static_cast<double>(acc / 200.0L)).epsilon(1e-12));
  CHECK(mrr(ranks) > 0.0);
  CHECK(mrr(ranks) <= 1.0);
}

TEST_CASE("precision_recall_at_k: boundary cases and set oracle") {
  const std::vector<std::string> retrieved = {"a", "b", "c", "d", "e"};
  const auto [p1, r1] = precision_recall_at_k(retrieved, {"a", "b", "c"}, 3);
  CHECK(p1 == 1.0);
  CHECK(r1 == 1.0);

  const auto [p2, r2] = precision_recall_at_k(retrieved, {"a", "z"}, 5);
  CHECK(p2 == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r2 == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(precision_recall_at_k(retrieved, {}, 3), DataError);

  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> pool = make_ids(20, "p");
    rng.shuffle(pool);
    std::set<std::string> relevant;
    const int n_rel = 1 + static_cast<int>(rng.uniform_int(10));
    for (int i = 0; i < n_rel; ++i)
      relevant.insert("p" + std::to_string(1000 + rng.uniform_int(20)).substr(1));
    std::set<std::string> fixed;
    for (const auto& r : relevant) fixed.insert("p0" + r.substr(1));
    const int k = 1 + static_cast<int>(rng.uniform_int(20));
    const auto [p, r] = precision_recall_at_k(pool, relevant, k);
    int inter = 0;
    for (int i = 0; i < std::min<int>(k, pool.size()); ++i)
      if (relevant.count(pool[i])) ++inter;
    CHECK(p == doctest::Approx(static_cast<double>(inter) / k).epsilon(1e-12));
    CHECK(r ==
          doctest::Approx(static_cast<double>(inter) / relevant.size()).epsilon(1e-12));
  }
}

TEST_CASE("ndcg_at_k: closed forms and direct-formula oracle") {
  CHECK(ndcg_at_k({"a", "b"}, {{"a", 1.0}}, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ndcg_at_k({"b", "a"}, {{"a", 1.0}}, 2) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k({"b", "c"}, {{"a", 0.0}}, 2) == 0.0);
  CHECK_THROWS_AS(ndcg_at_k({"a"}, {{"a", -1.0}}, 1), DataError);

  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pool = make_ids(12, "n");
    std::vector<std::string> retrieved = pool;
    rng.shuffle(retrieved);
    std::map<std::string, double> gains;
    for (const auto& id : pool)
      if (rng.uniform() < 0.4) gains[id] = std::floor(rng.uniform() * 4);
    if (gains.empty()) gains[pool[0]] = 1.0;
    const int k = 1 + static_cast<int>(rng.uniform_int(12));

    double dcg = 0;
    for (int i = 0; i < k; ++i) {
      auto it = gains.find(retrieved[i]);
      if (it != gains.end()) dcg += it->second / std::log2(i + 2.0);
    }
    std::vector<double> sorted_gains;
    for (const auto& [id, g] : gains) sorted_gains.push_back(g);
    std::sort(sorted_gains.rbegin(), sorted_gains.rend());
    double idcg = 0;
    for (int i = 0; i < std::min<int>(k, sorted_gains.size()); ++i)
      idcg += sorted_gains[i] / std::log2(i + 2.0);
    const double expected = idcg == 0 ? 0.0 : dcg / idcg;
    CHECK(ndcg_at_k(retrieved, gains, k) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("manhattan_similarity_matrix: examples, symmetry, triangle inequality") {
  auto two = TensorData<float>::zeros({2, 2});
  two.data = {0, 0, 1, 1};
  const auto s2 = manhattan_similarity_matrix(two);
  CHECK(s2.data[0 * 2 + 1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(s2.data[1 * 2 + 0] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(s2.data[0] == 0.0);
  CHECK(s2.data[3] == 0.0);

  auto same = TensorData<float>::zeros({3, 4});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) same.data[i * 4 + j] = static_cast<float>(j);
  for (double v : manhattan_similarity_matrix(same).data) CHECK(v == 0.0);

  Rng rng(8);
  auto x = TensorData<float>::zeros({5, 3});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  const auto s = manhattan_similarity_matrix(x);
  for (int i = 0; i < 5; ++i) {
    CHECK(s.data[i * 5 + i] == 0.0);
    for (int j = 0; j < 5; ++j) {
      CHECK(s.data[i * 5 + j] == s.data[j * 5 + i]);
      double l1 = 0;
      for (int k = 0; k < 3; ++k)
        l1 += std::abs(static_cast<double>(x.data[i * 3 + k]) - x.data[j * 3 + k]);
      CHECK(s.data[i * 5 + j] == doctest::Approx(-l1).epsilon(1e-9));
      // d(i,k) <= d(i,j) + d(j,k)
      for (int k = 0; k < 5; ++k)
        CHECK(-s.data[i * 5 + k] <= -s.data[i * 5 + j] - s.data[j * 5 + k] + 1e-9);
    }
  }
}

namespace {

// Independent rank-then-Pearson oracle with average ties.
double spearman_oracle(std::vector<double> a, std::vector<double> b) {
  auto rank_of = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < v.size()) {
      std::size_t j = i;
      while (j + 1 < v.size() && v[order[j + 1]] == v[order[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k)
        ranks[order[k]] = (static_cast<double>(i + j)) / 2.0 + 1.0;
      i = j + 1;
    }
    return ranks;
  };
  const auto ra = rank_of(a), rb = rank_of(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("spearman: exact endpoints, ties, monotone invariance") {
  const std::vector<double> gold = {1, 2, 3, 4, 5};
  CHECK(spearman(gold, gold) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spearman({5, 4, 3, 2, 1}, gold) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), DataError);
  CHECK_THROWS_AS(spearman({1.0}, {2.0}), DataError);
  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), DataError);

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(40), b(40);
    for (auto& v : a) v = std::floor(rng.uniform() * 8);  // heavy ties
    for (auto& v : b) v = rng.normal();
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) continue;
    CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-9));

    // Strictly increasing transforms leave rho untouched.
    std::vector<double> affine = a, cube = a;
    for (auto& v : affine) v = 2 * v + 3;
    for (auto& v : cube) v = (v + 1) * (v + 1) * (v + 1);  // positive inputs
    CHECK(spearman(affine, b) == doctest::Approx(spearman(a, b)).epsilon(1e-12));
    CHECK(spearman(cube, b) == doctest::Approx(spearman(a, b)).epsilon(1e-12));
  }
}

namespace {

struct PlantedPipeline {
  PlantedKg planted;
  EmbeddingCache cache;
  BridgeModel model;
};

PlantedPipeline planted_pipeline() {
  PlantedKgSpec spec;
  spec.modalities = {{"m0", 40}, {"m1", 40}};
  spec.latent_dim = 5;
  spec.relations = {{"r0", "m0", "m1", PlantedMapKind::rotation, 4}};
  spec.edges_per_head = 2;
  spec.noise_scale = 0.02;
  spec.seed = 23;
  PlantedPipeline p{generate_planted_kg(spec), {}, {}};
  EncoderSpec e0;
  e0.modality = "m0";
  e0.kind = EncoderKind::latent_passthrough;
  e0.raw_dim = 5;
  EncoderSpec e1 = e0;
  e1.modality = "m1";
  p.cache = encode_all(p.planted.graph, {e0, e1});
  BridgeConfig bc;
  bc.d = 8;
  bc.layers = 1;
  bc.heads = 2;
  bc.seed = 24;
  p.model = init_bridge_model<float>(bc, p.planted.graph.modality_vocab(), {5, 5},
                                     p.planted.graph.relation_vocab());
  return p;
}

}  // namespace

TEST_CASE("build_index rows equal embed_candidates; model-free uses normalized raw") {
  const PlantedPipeline p = planted_pipeline();
  std::vector<std::string> ids = p.planted.graph.nodes_of_modality("m1");
  std::sort(ids.begin(), ids.end());

  const EmbeddingIndex idx = build_index(ids, "m1", p.cache, &p.model);
  const TensorData<float> rows = embed_candidates(ids, "m1", p.cache, p.model);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < 8; ++j) CHECK(idx.row(i)[j] == rows.data[i * 8 + j]);

  const EmbeddingIndex raw_idx = build_index(ids, "m1", p.cache, nullptr);
  const float* raw = p.cache.row("m1", ids[0]);
  const auto unit = l2_normalize(std::vector<float>(raw, raw + 5));
  for (int j = 0; j < 5; ++j) CHECK(raw_idx.row(0)[j] == unit[j]);
}

TEST_CASE("evaluate_link_prediction: single triple with a perfect query scores MRR 1") {
  const PlantedPipeline p = planted_pipeline();
  const TripleSplit split = split_triples(p.planted.graph, {0.8, 0.1, 0.1}, 25);
  const auto filter = build_filter({&split.train, &split.valid});

  const std::vector<Triple> one = {split.test[0]};
  const EvalReport report = evaluate_link_prediction(p.model, one, p.planted.graph,
                                                     p.cache, filter, true);
  CHECK(report.count == 1);
  CHECK(report.ranks.size() == 1);
  CHECK(report.mrr == doctest::Approx(1.0 / report.ranks[0]).epsilon(1e-12));
  CHECK(report.tasks.size() == 1);

  // Aggregation equals a per-triple recomputation.
  const EvalReport full = evaluate_link_prediction(p.model, split.test, p.planted.graph,
                                                   p.cache, filter, true);
  std::vector<int> ranks;
  for (const Triple& t : split.test) {
    const EvalReport single = evaluate_link_prediction(p.model, {t}, p.planted.graph,
                                                       p.cache, filter, true);
    ranks.push_back(single.ranks[0]);
  }
  CHECK(full.ranks == ranks);
  CHECK(full.mrr == doctest::Approx(mrr(ranks)).epsilon(1e-12));
  CHECK(full.hit10 == doctest::Approx(hit_at_k(ranks, 10)).epsilon(1e-12));

  // Report metrics all live in [0, 1]; Hit@K is monotone.
  CHECK(full.mrr > 0.0);
  CHECK(full.mrr <= 1.0);
  CHECK(full.hit1 <= full.hit3);
  CHECK(full.hit3 <= full.hit10);
}

TEST_CASE("semantic_similarity_eval: gold == prediction gives rho 1 per aspect") {
  const PlantedPipeline p = planted_pipeline();
  std::vector<std::string> ids = p.planted.graph.nodes_of_modality("m0");
  std::sort(ids.begin(), ids.end());
  ids.resize(12);

  // Compute the prediction matrix once, hand it back as gold.
  auto transformed = TensorData<float>::zeros({12, 8});
  for (int i = 0; i < 12; ++i) {
    const float* raw = p.cache.row("m0", ids[i]);
    RawEmbedding r{ids[i], "m0", std::vector<float>(raw, raw + 5)};
    const BridgedEmbedding b =
        bridge_transform(project(r, p.model), "m0", "m1", "r0", p.model);
    std::copy(b.vector.begin(), b.vector.end(), transformed.data.begin() + i * 8);
  }
  SimilarityAspect aspect{"m1", "r0", manhattan_similarity_matrix(transformed)};
  const auto rho = semantic_similarity_eval(ids, "m0", p.model, p.cache, {aspect});
  CHECK(rho.at("m1") == doctest::Approx(1.0).epsilon(1e-9));

  SimilarityAspect bad = aspect;
  bad.gold = TensorData<double>::zeros({3, 3});
  CHECK_THROWS_AS(semantic_similarity_eval(ids, "m0", p.model, p.cache, {bad}),
                  DataError);
}

TEST_CASE("load_similarity_matrix_tsv round-trips a gold matrix") {
  const auto dir = std::filesystem::temp_directory_path() / "kgbridge_gold";
  std::filesystem::create_directories(dir);
  const std::vector<std::string> ids = {"p1", "p2", "p3"};
  {
    std::ofstream out(dir / "gold.tsv");
    out << "p1\tp2\tp3\n";
    out << "0\t-1.5\t-2\n";
    out << "-1.5\t0\t-0.25\n";
    out << "-2\t-0.25\t0\n";
  }
  const TensorData<double> gold =
      load_similarity_matrix_tsv((dir / "gold.tsv").string(), ids);
  CHECK(gold.shape == std::vector<int>{3, 3});
  CHECK(gold.data[0 * 3 + 1] == -1.5);
  CHECK(gold.data[2 * 3 + 1] == -0.25);

  // Header mismatch is an error.
  CHECK_THROWS_AS(load_similarity_matrix_tsv((dir / "gold.tsv").string(),
                                             {"p1", "p3", "p2"}),
                  DataError);
}

TEST_CASE("evaluate_labeled_retrieval: P/R/nDCG over multi-relevant queries") {
  // Four candidates on coordinate axes; queries point at known subsets.
  auto rows = TensorData<float>::zeros({4, 4});
  for (int i = 0; i < 4; ++i) rows.data[i * 4 + i] = 1.0f;
  const EmbeddingIndex index =
      EmbeddingIndex::from_rows("m", {"a", "b", "c", "d"}, std::move(rows));

  std::vector<LabeledQuery> queries;
  {
    // Aimed exactly at "a"; relevant {a, b}.
    LabeledQuery q;
    q.query = {1, 0, 0, 0};
    q.relevant = {{"a", 1.0}, {"b", 1.0}};
    queries.push_back(q);
    // Aimed between c and d; relevant {d}.
    LabeledQuery q2;
    q2.query = l2_normalize({0.0f, 0.0f, 0.6f, 0.8f});
    q2.relevant = {{"d", 1.0}};
    queries.push_back(q2);
  }
  const EvalReport report = evaluate_labeled_retrieval(index, queries, {1, 2});

  // Query 1: ranking a,b,(c,d); first relevant rank 1, P@1=1, P@2=1, R@2=1.
  // Query 2: ranking d,c,(a,b); first relevant rank 1, P@1=1, R@1=1,
  // P@2=0.5, nDCG@2=1.
  CHECK(report.mrr == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.precision_at.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.precision_at.at(2) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(report.recall_at.at(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.ndcg_at.at(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eval_report_to_json(report).find("precision_at") != std::string::npos);

  LabeledQuery missing;
  missing.query = {1, 0, 0, 0};
  missing.relevant = {{"zz", 1.0}};
  CHECK_THROWS_AS(evaluate_labeled_retrieval(index, {missing}, {1}), DataError);
}

TEST_CASE("eval report JSON and ranks TSV") {
  const PlantedPipeline p = planted_pipeline();
  const TripleSplit split = split_triples(p.planted.graph, {0.8, 0.1, 0.1}, 26);
  const auto filter = build_filter({&split.train, &split.valid});
  const EvalReport report = evaluate_link_prediction(p.model, split.test,
                                                     p.planted.graph, p.cache, filter,
                                                     true);
  const std::string json = eval_report_to_json(report);
  CHECK(json.find("\"mrr\"") != std::string::npos);
  CHECK(json.find("\"tasks\"") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "kgbridge_ranks";
  std::filesystem::create_directories(dir);
  write_ranks_tsv(report, (dir / "ranks.tsv").string());
  CHECK(std::filesystem::exists(dir / "ranks.tsv"));
}
