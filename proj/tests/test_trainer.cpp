#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "kgbridge/trainer.hpp"

using namespace kgbridge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("kgbridge_tr_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct PlantedSetup {
  PlantedKg planted;
  EmbeddingCache cache;
  TripleSplit split;
};

PlantedSetup planted_setup(int per_modality = 60, int latent_dim = 6,
                           std::uint64_t seed = 11) {
  PlantedKgSpec spec;
  spec.modalities = {{"m0", per_modality}, {"m1", per_modality}};
  spec.latent_dim = latent_dim;
  spec.relations = {{"r0", "m0", "m1", PlantedMapKind::rotation, 5}};
  spec.edges_per_head = 2;
  spec.noise_scale = 0.05;
  spec.seed = seed;

  PlantedSetup s{generate_planted_kg(spec), {}, {}};
  EncoderSpec e0;
  e0.modality = "m0";
  e0.kind = EncoderKind::latent_passthrough;
  e0.raw_dim = latent_dim;
  EncoderSpec e1 = e0;
  e1.modality = "m1";
  s.cache = encode_all(s.planted.graph, {e0, e1});
  s.split = split_triples(s.planted.graph, {0.8, 0.1, 0.1}, seed);
  return s;
}

std::vector<float> unit_vec(Rng& rng, int d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return l2_normalize(v);
}

}  // namespace

TEST_CASE("sample_negatives: forced set, determinism, filter") {
  // Modality with exactly M+1 nodes and one positive: the other M nodes.
  std::vector<Node> nodes{{"h", "a", "f"}};
  for (int i = 0; i < 6; ++i)
    nodes.push_back({"t" + std::to_string(i), "b", "f"});
  const KnowledgeGraph kg = KnowledgeGraph::build(nodes, {{"h", "r", "t0"}});

  Rng rng(5);
  const auto negs = sample_negatives({"h", "r", "t0"}, kg, 5, rng);
  CHECK(std::set<std::string>(negs.begin(), negs.end()) ==
        std::set<std::string>{"t1", "t2", "t3", "t4", "t5"});

  Rng rng_a(9), rng_b(9);
  const auto a = sample_negatives({"h", "r", "t0"}, kg, 3, rng_a);
  const auto b = sample_negatives({"h", "r", "t0"}, kg, 3, rng_b);
  CHECK(a == b);

  // True tail and known positives never appear.
  const KnowledgeGraph kg2 = KnowledgeGraph::build(
      nodes, {{"h", "r", "t0"}, {"h", "r", "t1"}});
  Rng rng2(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto sample = sample_negatives({"h", "r", "t0"}, kg2, 4, rng2);
    for (const auto& id : sample) {
      CHECK(id != "t0");
      CHECK(id != "t1");
    }
  }
}

TEST_CASE("sample_negatives: filter relaxation warns, hard shortage throws") {
  std::vector<Node> nodes{{"h", "a", "f"}};
  for (int i = 0; i < 4; ++i) nodes.push_back({"t" + std::to_string(i), "b", "f"});
  // Three of four tails are known positives: strict filtering leaves 1 < 3.
  const KnowledgeGraph kg = KnowledgeGraph::build(
      nodes, {{"h", "r", "t0"}, {"h", "r", "t1"}, {"h", "r", "t2"}});
  Rng rng(2);
  std::vector<std::string> warnings;
  const auto negs = sample_negatives({"h", "r", "t0"}, kg, 3, rng, &warnings);
  CHECK(negs.size() == 3);
  CHECK(warnings.size() == 1);
  for (const auto& id : negs) CHECK(id != "t0");

  Rng rng2(2);
  CHECK_THROWS_AS(sample_negatives({"h", "r", "t0"}, kg, 4, rng2), DataError);
}

TEST_CASE("sample_negatives: 10k draws over 100 candidates are near uniform") {
  std::vector<Node> nodes{{"h", "a", "f"}};
  for (int i = 0; i < 101; ++i)
    nodes.push_back({"t" + std::to_string(i), "b", "f"});
  const KnowledgeGraph kg = KnowledgeGraph::build(nodes, {{"h", "r", "t100"}});

  Rng rng(77);
  std::map<std::string, int> freq;
  const int draws = 10000, m = 5;
  for (int i = 0; i < draws; ++i)
    for (const auto& id : sample_negatives({"h", "r", "t100"}, kg, m, rng)) ++freq[id];

  // Chi-square against uniform over the 100 eligible candidates.
  const double expected = static_cast<double>(draws) * m / 100.0;
  double chi2 = 0;
  for (const auto& [id, count] : freq) {
    const double d = count - expected;
    chi2 += d * d / expected;
  }
  CHECK(freq.size() == 100);
  // 99 dof: mean 99, sd ~14; 5 sigma acceptance band.
  CHECK(chi2 < 99 + 5 * std::sqrt(2.0 * 99));
  CHECK(chi2 > 99 - 5 * std::sqrt(2.0 * 99));
}

TEST_CASE("info_nce: uniform logits give ln(M+1) for any tau") {
  Rng rng(3);
  const auto h = unit_vec(rng, 16);
  // Same candidate vector everywhere: all similarities equal.
  const auto z = unit_vec(rng, 16);
  const std::vector<std::vector<float>> negs(31, z);
  for (double tau : {0.05, 0.07, 1.0})
    CHECK(info_nce(h, z, negs, tau) == doctest::Approx(std::log(32.0)).epsilon(1e-9));
}

TEST_CASE("info_nce: closed form with orthogonal negatives") {
  const int m = 7;
  std::vector<float> h(16, 0.0f);
  h[0] = 1.0f;
  std::vector<std::vector<float>> negs;
  for (int i = 0; i < m; ++i) {
    std::vector<float> z(16, 0.0f);
    z[i + 1] = 1.0f;  // orthogonal to h
    negs.push_back(z);
  }
  const double expected = std::log(1.0 + m * std::exp(-1.0));
  CHECK(info_nce(h, h, negs, 1.0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("info_nce: matches an extended-precision oracle at tau 0.05") {
  Rng rng(4);
  const auto h = unit_vec(rng, 24);
  const auto pos = unit_vec(rng, 24);
  std::vector<std::vector<float>> negs;
  for (int i = 0; i < 15; ++i) negs.push_back(unit_vec(rng, 24));

  // long double oracle, no log-sum-exp trick.
  const long double tau = 0.05L;
  auto dotl = [](const std::vector<float>& a, const std::vector<float>& b) {
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
    return acc;
  };
  long double denom = expl(dotl(h, pos) / tau);
  for (const auto& z : negs) denom += expl(dotl(h, z) / tau);
  const long double expected = -logl(expl(dotl(h, pos) / tau) / denom);
  const double got = info_nce(h, pos, negs, 0.05);
  CHECK(got == doctest::Approx(static_cast<double>(expected)).epsilon(1e-5));
  CHECK(got > 0.0);
}

TEST_CASE("info_nce: rejects non-normalized inputs") {
  std::vector<float> h(8, 0.5f);  // norm sqrt(2)
  std::vector<float> u(8, 0.0f);
  u[0] = 1.0f;
  CHECK_THROWS_AS(info_nce(h, u, {u}, 1.0), DataError);
  CHECK_THROWS_AS(info_nce(u, u, {u}, 0.0), DataError);
}

TEST_CASE("info_nce: random unit batch at d=64 concentrates near ln 32") {
  Rng rng(6);
  double total = 0;
  const int batches = 100, per_batch = 16;
  for (int b = 0; b < batches; ++b) {
    double batch_loss = 0;
    for (int i = 0; i < per_batch; ++i) {
      const auto h = unit_vec(rng, 64);
      const auto pos = unit_vec(rng, 64);
      std::vector<std::vector<float>> negs;
      for (int k = 0; k < 31; ++k) negs.push_back(unit_vec(rng, 64));
      batch_loss += info_nce(h, pos, negs, 1.0);
    }
    total += batch_loss / per_batch;
  }
  const double mean = total / batches;
  CHECK(mean > std::log(32.0) - 0.5);
  CHECK(mean < std::log(32.0) + 0.5);
}

namespace {

TrainConfig quick_train_config(int epochs) {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = epochs;
  c.lr = 1e-3;
  c.tau = 0.07;
  c.negatives = 15;
  c.seed = 33;
  return c;
}

BridgeConfig quick_bridge_config() {
  BridgeConfig c;
  c.d = 16;
  c.layers = 2;
  c.heads = 2;
  c.seed = 33;
  return c;
}

}  // namespace

TEST_CASE("train_bridge: zero epochs returns the seeded initialization") {
  const PlantedSetup s = planted_setup();
  const TrainResult r = train_bridge(s.planted.graph, s.split, s.cache,
                                     quick_train_config(0), quick_bridge_config());
  const BridgeModel fresh =
      init_bridge_model<float>(quick_bridge_config(), s.planted.graph.modality_vocab(),
                               {6, 6}, s.planted.graph.relation_vocab());
  REQUIRE(r.final.model.params.size() == fresh.params.size());
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(r.final.model.params[i].value.data == fresh.params[i].value.data);
  CHECK(r.final.loss_history.empty());
  CHECK_FALSE(r.best.has_value());
}

TEST_CASE("train_bridge: deterministic checkpoint hash, frozen cache, loss falls") {
  const PlantedSetup s = planted_setup();
  const std::vector<float> cache_before = s.cache.blocks()[0].data;

  const TrainResult a = train_bridge(s.planted.graph, s.split, s.cache,
                                     quick_train_config(4), quick_bridge_config());
  const TrainResult b = train_bridge(s.planted.graph, s.split, s.cache,
                                     quick_train_config(4), quick_bridge_config());
  CHECK(checkpoint_hash(a.final) == checkpoint_hash(b.final));
  CHECK(s.cache.blocks()[0].data == cache_before);

  REQUIRE(a.final.loss_history.size() == 4);
  CHECK(a.final.loss_history.back() < a.final.loss_history.front());
  REQUIRE(a.final.valid_mrr_history.size() == 4);
  CHECK(a.best.has_value());
  CHECK(a.best->epoch >= 1);

  // Best checkpoint reproduces the recorded validation MRR.
  const auto filter = build_filter({&s.split.train, &s.split.valid});
  const EvalReport best_eval = evaluate_link_prediction(
      a.best->model, s.split.valid, s.planted.graph, s.cache, filter, true);
  CHECK(best_eval.mrr ==
        doctest::Approx(a.final.valid_mrr_history[a.best->epoch - 1]).epsilon(1e-12));
}

TEST_CASE("train_bridge: training log is one JSON record per epoch") {
  const PlantedSetup s = planted_setup();
  const auto dir = temp_dir("log");
  const std::string log_path = (dir / "train.jsonl").string();
  train_bridge(s.planted.graph, s.split, s.cache, quick_train_config(3),
               quick_bridge_config(), log_path);
  std::ifstream in(log_path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"epoch\":" ) != std::string::npos);
    CHECK(line.find("mean_loss") != std::string::npos);
    CHECK(line.find("valid_mrr") != std::string::npos);
  }
  CHECK(lines == 3);
}

TEST_CASE("train_bridge: empty train split is an error") {
  const PlantedSetup s = planted_setup();
  TripleSplit empty = s.split;
  empty.train.clear();
  CHECK_THROWS_AS(train_bridge(s.planted.graph, empty, s.cache, quick_train_config(1),
                               quick_bridge_config()),
                  DataError);
}

TEST_CASE("train_bridge: learnable tau moves when enabled") {
  const PlantedSetup s = planted_setup(40);
  TrainConfig c = quick_train_config(3);
  c.learnable_tau = true;
  const TrainResult r = train_bridge(s.planted.graph, s.split, s.cache, c,
                                     quick_bridge_config());
  const float log_tau = r.final.model.param("log_tau").data[0];
  CHECK(log_tau != doctest::Approx(std::log(0.07f)).epsilon(1e-9));
  CHECK(std::isfinite(log_tau));

  // The checkpoint carries the extra parameter through a round-trip.
  const auto dir = temp_dir("tau");
  save_checkpoint(r.final, (dir / "t.ckpt").string());
  const Checkpoint loaded = load_checkpoint((dir / "t.ckpt").string());
  CHECK(loaded.model.param("log_tau").data[0] == log_tau);
}

TEST_CASE("train_bridge: in-batch negatives mode still trains") {
  const PlantedSetup s = planted_setup(40);
  TrainConfig c = quick_train_config(2);
  c.negative_mode = NegativeMode::in_batch_plus_sampled;
  c.negatives = 8;
  const TrainResult r = train_bridge(s.planted.graph, s.split, s.cache, c,
                                     quick_bridge_config());
  CHECK(r.final.loss_history.size() == 2);
  for (double loss : r.final.loss_history) CHECK(std::isfinite(loss));
}

TEST_CASE("checkpoint: save/load round-trip preserves forward behavior bit-for-bit") {
  const PlantedSetup s = planted_setup(40);
  const TrainResult r = train_bridge(s.planted.graph, s.split, s.cache,
                                     quick_train_config(2), quick_bridge_config());
  const auto dir = temp_dir("ckpt");
  const std::string path = (dir / "bridge.ckpt").string();
  save_checkpoint(r.final, path);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(checkpoint_hash(loaded) == checkpoint_hash(r.final));
  CHECK(loaded.encoder_fingerprint == r.final.encoder_fingerprint);
  CHECK(loaded.epoch == r.final.epoch);
  CHECK(loaded.loss_history == r.final.loss_history);

  Rng rng(8);
  ProjectedEmbedding z{"m0", unit_vec(rng, 16)};
  const BridgedEmbedding before = bridge_transform(z, "m0", "m1", "r0", r.final.model);
  const BridgedEmbedding after = bridge_transform(z, "m0", "m1", "r0", loaded.model);
  CHECK(before.vector == after.vector);

  // Reloaded model reproduces the evaluation MRR exactly.
  const auto filter = build_filter({&s.split.train, &s.split.valid});
  const EvalReport e1 = evaluate_link_prediction(r.final.model, s.split.test,
                                                 s.planted.graph, s.cache, filter, true);
  const EvalReport e2 = evaluate_link_prediction(loaded.model, s.split.test,
                                                 s.planted.graph, s.cache, filter, true);
  CHECK(e1.mrr == e2.mrr);
}

TEST_CASE("checkpoint: corrupted byte fails the content hash") {
  const PlantedSetup s = planted_setup(40);
  const TrainResult r = train_bridge(s.planted.graph, s.split, s.cache,
                                     quick_train_config(1), quick_bridge_config());
  const auto dir = temp_dir("ckpt_bad");
  const std::string path = (dir / "bridge.ckpt").string();
  save_checkpoint(r.final, path);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(200);
  char byte;
  f.seekg(200);
  f.get(byte);
  byte = static_cast<char>(byte ^ 0x40);
  f.seekp(200);
  f.put(byte);
  f.close();
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("train_bridge: conditioning sensitivity appears after training") {
  // Two relations with very different planted maps.
  PlantedKgSpec spec;
  spec.modalities = {{"m0", 50}, {"m1", 50}};
  spec.latent_dim = 6;
  spec.relations = {{"r0", "m0", "m1", PlantedMapKind::rotation, 100},
                    {"r1", "m0", "m1", PlantedMapKind::rotation, 200}};
  spec.edges_per_head = 2;
  spec.noise_scale = 0.02;
  spec.seed = 19;
  const PlantedKg planted = generate_planted_kg(spec);
  EncoderSpec e0;
  e0.modality = "m0";
  e0.kind = EncoderKind::latent_passthrough;
  e0.raw_dim = 6;
  EncoderSpec e1 = e0;
  e1.modality = "m1";
  const EmbeddingCache cache = encode_all(planted.graph, {e0, e1});
  const TripleSplit split = split_triples(planted.graph, {0.8, 0.1, 0.1}, 19);

  TrainConfig tc = quick_train_config(6);
  const TrainResult r =
      train_bridge(planted.graph, split, cache, tc, quick_bridge_config());

  Rng rng(20);
  ProjectedEmbedding z{"m0", unit_vec(rng, 16)};
  const BridgedEmbedding a = bridge_transform(z, "m0", "m1", "r0", r.final.model);
  const BridgedEmbedding b = bridge_transform(z, "m0", "m1", "r1", r.final.model);
  CHECK(a.vector != b.vector);
}
