#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgbridge/container.hpp"
#include "kgbridge/hash.hpp"
#include "kgbridge/kge.hpp"
#include "kgbridge/metrics.hpp"
#include "kgbridge/presets.hpp"
#include "kgbridge/prompt.hpp"
#include "kgbridge/trainer.hpp"

using namespace kgbridge;
namespace fs = std::filesystem;

namespace {

// Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical abort.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

class ManifestWriter {
 public:
  ManifestWriter(std::string command, std::uint64_t seed)
      : command_(std::move(command)), seed_(seed),
        start_(std::chrono::steady_clock::now()) {}

  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_output(const std::string& path) { outputs_.push_back(path); }
  void set_config_hash(const std::string& hash) { config_hash_ = hash; }

  void write(const std::string& manifest_path) const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config_hash"] = config_hash_;
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& p : inputs_) in[p] = sha256_file_hex(p);
    j["inputs"] = in;
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& p : outputs_) out[p] = sha256_file_hex(p);
    j["outputs"] = out;
    j["wall_time_s"] = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start_)
                           .count();
    std::ofstream f(manifest_path, std::ios::binary);
    if (!f) throw DataError("cannot write manifest: " + manifest_path);
    f << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  std::string config_hash_ = "";
  std::vector<std::string> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

SplitRatios parse_ratios(const std::string& text) {
  SplitRatios r;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf", &r.train, &r.valid, &r.test) != 3)
    throw DataError("ratios must look like 0.8,0.1,0.1");
  return r;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void reject_unknown_keys(const nlohmann::json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw DataError("unknown key '" + key + "' in " + where);
  }
}

struct RunConfig {
  std::string nodes, triples, split_dir, cache, out_dir;
  BridgeConfig bridge;
  TrainConfig train;
  std::string raw_text;  // hashed into the manifest
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  rc.raw_text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(rc.raw_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  reject_unknown_keys(j, {"nodes", "triples", "split_dir", "cache", "out_dir",
                          "bridge", "train"},
                      path);
  rc.nodes = j.at("nodes").get<std::string>();
  rc.triples = j.at("triples").get<std::string>();
  rc.split_dir = j.at("split_dir").get<std::string>();
  rc.cache = j.at("cache").get<std::string>();
  rc.out_dir = j.at("out_dir").get<std::string>();
  for (const std::string& p : {rc.nodes, rc.triples, rc.cache}) {
    if (!fs::exists(p)) throw DataError("referenced path does not exist: " + p);
  }
  if (!fs::exists(fs::path(rc.split_dir) / "train.tsv"))
    throw DataError("split_dir has no train.tsv: " + rc.split_dir);

  if (j.contains("bridge")) {
    const auto& b = j["bridge"];
    reject_unknown_keys(b, {"d", "layers", "heads", "variant", "projection_kind", "seed"},
                        "bridge config");
    if (b.contains("d")) rc.bridge.d = b["d"].get<int>();
    if (b.contains("layers")) rc.bridge.layers = b["layers"].get<int>();
    if (b.contains("heads")) rc.bridge.heads = b["heads"].get<int>();
    if (b.contains("variant"))
      rc.bridge.variant = bridge_variant_from_name(b["variant"].get<std::string>());
    if (b.contains("projection_kind"))
      rc.bridge.projection_kind =
          projection_kind_from_name(b["projection_kind"].get<std::string>());
    if (b.contains("seed")) rc.bridge.seed = b["seed"].get<std::uint64_t>();
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t, {"batch_size", "epochs", "lr", "tau", "negatives", "seed",
                            "negative_mode", "learnable_tau"},
                        "train config");
    if (t.contains("batch_size")) rc.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("epochs")) rc.train.epochs = t["epochs"].get<int>();
    if (t.contains("lr")) rc.train.lr = t["lr"].get<double>();
    if (t.contains("tau")) rc.train.tau = t["tau"].get<double>();
    if (t.contains("negatives")) rc.train.negatives = t["negatives"].get<int>();
    if (t.contains("seed")) rc.train.seed = t["seed"].get<std::uint64_t>();
    if (t.contains("negative_mode"))
      rc.train.negative_mode =
          negative_mode_from_name(t["negative_mode"].get<std::string>());
    if (t.contains("learnable_tau"))
      rc.train.learnable_tau = t["learnable_tau"].get<bool>();
  }
  return rc;
}

int cmd_split(const std::string& nodes, const std::string& triples,
              const std::string& ratios_text, std::uint64_t seed,
              const std::string& out_dir) {
  ManifestWriter manifest("split", seed);
  manifest.add_input(nodes);
  manifest.add_input(triples);

  const KnowledgeGraph kg = load_graph(nodes, triples);
  const TripleSplit split = split_triples(kg, parse_ratios(ratios_text), seed);
  write_split(split, out_dir);
  for (const std::string& w : split.warnings) std::cerr << "warning: " << w << '\n';

  for (const char* f : {"train.tsv", "valid.tsv", "test.tsv", "split.json"})
    manifest.add_output((fs::path(out_dir) / f).string());
  manifest.write((fs::path(out_dir) / "run_manifest.json").string());
  std::cout << "split written to " << out_dir << " (train " << split.train.size()
            << ", valid " << split.valid.size() << ", test " << split.test.size()
            << ")\n";
  return kExitOk;
}

int cmd_encode(const std::string& nodes, const std::string& triples,
               const std::string& spec_path, const std::string& out_path) {
  const auto specs = encoder_specs_from_json(read_text_file(spec_path));
  const std::uint64_t seed = specs.empty() ? 0 : specs[0].seed;
  ManifestWriter manifest("encode", seed);
  manifest.add_input(nodes);
  manifest.add_input(triples);
  manifest.add_input(spec_path);

  const KnowledgeGraph kg = load_graph(nodes, triples);
  const EmbeddingCache cache = encode_all(kg, specs);
  persist_cache(cache, out_path);

  manifest.set_config_hash(to_hex(sha256(read_text_file(spec_path))));
  manifest.add_output(out_path);
  manifest.write(out_path + ".manifest.json");
  std::cout << "encoded " << cache.total_rows() << " nodes; fingerprint "
            << cache.fingerprint() << '\n';
  return kExitOk;
}

int cmd_train_bridge(const std::string& config_path) {
  const RunConfig rc = load_run_config(config_path);
  ManifestWriter manifest("train-bridge", rc.train.seed);
  manifest.set_config_hash(to_hex(sha256(rc.raw_text)));
  manifest.add_input(rc.nodes);
  manifest.add_input(rc.triples);
  manifest.add_input(rc.cache);

  const KnowledgeGraph kg = load_graph(rc.nodes, rc.triples);
  const TripleSplit split = load_split(rc.split_dir, kg);
  const EmbeddingCache cache = load_cache(rc.cache);
  fs::create_directories(rc.out_dir);

  const std::string log_path = (fs::path(rc.out_dir) / "train_log.jsonl").string();
  const TrainResult result =
      train_bridge(kg, split, cache, rc.train, rc.bridge, log_path);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';

  const std::string final_path = (fs::path(rc.out_dir) / "bridge.ckpt").string();
  save_checkpoint(result.final, final_path);
  manifest.add_output(final_path);
  manifest.add_output(log_path);
  if (result.best.has_value()) {
    const std::string best_path = (fs::path(rc.out_dir) / "bridge_best.ckpt").string();
    save_checkpoint(*result.best, best_path);
    manifest.add_output(best_path);
    std::cout << "best validation MRR "
              << result.final.valid_mrr_history[result.best->epoch - 1] << " at epoch "
              << result.best->epoch << '\n';
  }
  manifest.write((fs::path(rc.out_dir) / "run_manifest.json").string());
  std::cout << "final checkpoint " << final_path << " (hash "
            << checkpoint_hash(result.final).substr(0, 16) << ")\n";
  return kExitOk;
}

int cmd_train_kge(const std::string& nodes, const std::string& triples,
                  const std::string& split_dir, const std::string& family_name,
                  const KgeTrainConfig& config, const std::string& loss_name,
                  const std::string& out_path) {
  ManifestWriter manifest("train-kge", config.seed);
  manifest.add_input(nodes);
  manifest.add_input(triples);

  KgeTrainConfig cfg = config;
  if (!loss_name.empty()) {
    cfg.loss = kge_loss_from_name(loss_name);
    cfg.loss_overridden = true;
  }
  const KnowledgeGraph kg = load_graph(nodes, triples);
  std::vector<Triple> train;
  if (split_dir.empty()) {
    train = kg.triples();
  } else {
    train = load_split(split_dir, kg).train;
  }
  const KgeModel model = train_kge(kg, train, kge_family_from_name(family_name), cfg);
  save_kge_checkpoint(model, cfg, out_path);
  manifest.add_output(out_path);
  manifest.write(out_path + ".manifest.json");
  std::cout << "trained " << family_name << " on " << train.size() << " triples -> "
            << out_path << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& nodes,
             const std::string& triples, const std::string& split_dir,
             const std::string& cache_path, bool raw_ranking,
             bool tolerate_fingerprint, const std::string& out_path,
             const std::string& ranks_path) {
  ManifestWriter manifest("eval", 0);
  manifest.add_input(checkpoint);
  manifest.add_input(nodes);
  manifest.add_input(triples);

  const KnowledgeGraph kg = load_graph(nodes, triples);
  const TripleSplit split = load_split(split_dir, kg);
  if (split.test.empty()) throw DataError("test split is empty");
  const auto filter = build_filter({&split.train, &split.valid});
  const bool filtered = !raw_ranking;

  // Dispatch on the checkpoint kind recorded in the container header.
  const ContainerPayload payload = read_container(checkpoint);
  const std::string kind = payload.header.value("kind", "");
  EvalReport report;
  if (kind == "bridge") {
    if (cache_path.empty()) throw DataError("bridge eval requires --cache");
    manifest.add_input(cache_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    std::vector<std::string> warnings;
    const EmbeddingCache cache = load_cache(cache_path, ckpt.encoder_fingerprint,
                                            tolerate_fingerprint, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
    report = evaluate_link_prediction(ckpt.model, split.test, kg, cache, filter,
                                      filtered);
  } else if (kind == "kge") {
    const KgeModel model = load_kge_checkpoint(checkpoint);
    report = evaluate_link_prediction_kge(model, split.test, kg, filter, filtered);
  } else {
    throw DataError("unrecognized checkpoint kind: '" + kind + "'");
  }

  const std::string json = eval_report_to_json(report);
  if (out_path.empty()) {
    std::cout << json << '\n';
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DataError("cannot write report: " + out_path);
    out << json << '\n';
    manifest.add_output(out_path);
    if (!ranks_path.empty()) {
      write_ranks_tsv(report, ranks_path);
      manifest.add_output(ranks_path);
    }
    manifest.write(out_path + ".manifest.json");
    std::cout << "report written to " << out_path << " (MRR " << report.mrr << ")\n";
  }
  return kExitOk;
}

int cmd_retrieve(const std::string& checkpoint, const std::string& cache_path,
                 const std::string& nodes, const std::string& triples,
                 const std::string& node_id, const std::string& tail_modality,
                 const std::string& relation, int k, bool tolerate_fingerprint) {
  const KnowledgeGraph kg = load_graph(nodes, triples);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  std::vector<std::string> warnings;
  const EmbeddingCache cache = load_cache(cache_path, ckpt.encoder_fingerprint,
                                          tolerate_fingerprint, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';

  const Node& query_node = kg.node(node_id);
  std::vector<std::string> candidates = kg.nodes_of_modality(tail_modality);
  if (candidates.empty())
    throw DataError("no nodes of modality '" + tail_modality + "'");
  std::sort(candidates.begin(), candidates.end());
  const EmbeddingIndex index = build_index(candidates, tail_modality, cache,
                                           &ckpt.model);

  const float* raw = cache.row(query_node.modality, node_id);
  RawEmbedding raw_emb{node_id, query_node.modality,
                       std::vector<float>(raw, raw + cache.raw_dim(query_node.modality))};
  const BridgedEmbedding query = bridge_transform(
      project(raw_emb, ckpt.model), query_node.modality, tail_modality, relation,
      ckpt.model);
  const RankedResult ranked = top_k(index, query.vector, k);

  nlohmann::ordered_json j;
  j["query_node"] = node_id;
  j["head_modality"] = query_node.modality;
  j["tail_modality"] = tail_modality;
  j["relation"] = relation;
  j["k"] = k;
  j["truncated_k"] = ranked.truncated_k;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : ranked.entries)
    entries.push_back({{"id", e.id}, {"score", e.score}});
  j["results"] = entries;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_planted_bench(const std::string& preset_name, const std::string& out_dir) {
  const PlantedBenchPreset preset = planted_preset(preset_name);
  ManifestWriter manifest("planted-bench", preset.kg_spec.seed);
  fs::create_directories(out_dir);

  const PlantedKg planted = generate_planted_kg(preset.kg_spec);
  write_nodes_tsv((fs::path(out_dir) / "nodes.tsv").string(), planted.graph.nodes());
  write_triples_tsv((fs::path(out_dir) / "triples.tsv").string(),
                    planted.graph.triples());
  const EmbeddingCache cache = encode_all(planted.graph, preset.encoders);
  const TripleSplit split = split_triples(planted.graph, preset.ratios,
                                          preset.split_seed);

  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  const TrainResult result = train_bridge(planted.graph, split, cache, preset.train,
                                          preset.bridge, log_path);
  const std::string ckpt_path = (fs::path(out_dir) / "bridge.ckpt").string();
  save_checkpoint(result.final, ckpt_path);

  const auto filter = build_filter({&split.train, &split.valid});
  const EvalReport report = evaluate_link_prediction(result.final.model, split.test,
                                                     planted.graph, cache, filter, true);
  const std::string report_path = (fs::path(out_dir) / "eval_report.json").string();
  {
    std::ofstream out(report_path, std::ios::binary);
    out << eval_report_to_json(report) << '\n';
  }

  const double random_mrr =
      random_ranking_mrr(static_cast<int>(planted.graph.nodes_of_modality("m1").size()));
  nlohmann::ordered_json summary;
  summary["preset"] = preset_name;
  summary["test_mrr"] = report.mrr;
  summary["test_hit10"] = report.hit10;
  summary["random_ranking_mrr"] = random_mrr;
  summary["mrr_over_random"] = report.mrr / random_mrr;
  summary["final_train_loss"] = result.final.loss_history.back();
  std::cout << summary.dump(2) << '\n';

  for (const char* f :
       {"nodes.tsv", "triples.tsv", "train_log.jsonl", "bridge.ckpt", "eval_report.json"})
    manifest.add_output((fs::path(out_dir) / f).string());
  manifest.write((fs::path(out_dir) / "run_manifest.json").string());
  return kExitOk;
}

int cmd_prompt(const std::string& template_name, const std::string& smiles,
               const std::string& sequence, const std::vector<std::string>& proteins,
               const std::vector<std::string>& diseases,
               const std::vector<std::string>& go_terms, const std::string& question,
               const std::string& guidance, const std::string& checkpoint,
               const std::string& cache_path, const std::string& nodes,
               const std::string& triples, const std::string& query_node,
               const std::vector<std::string>& role_specs) {
  const PromptTemplate kind = prompt_template_from_name(template_name);
  PromptBundle bundle;
  if (!query_node.empty()) {
    if (checkpoint.empty() || cache_path.empty() || nodes.empty() || triples.empty())
      throw DataError(
          "retrieval mode needs --checkpoint, --cache, --nodes and --triples");
    std::vector<RetrievalRole> roles;
    for (const std::string& spec : role_specs) {
      RetrievalRole role;
      char modality[128], relation[128], slot[32] = "";
      const int fields = std::sscanf(spec.c_str(), "%127[^:]:%127[^:]:%d:%31s",
                                     modality, relation, &role.k, slot);
      if (fields < 3)
        throw DataError("role must look like tail_modality:relation:k[:slot], got " +
                        spec);
      role.tail_modality = modality;
      role.relation = relation;
      if (fields == 4) {
        const std::string s = slot;
        if (s == "protein") role.slot = BundleSlot::protein;
        else if (s == "disease") role.slot = BundleSlot::disease;
        else if (s == "go-term") role.slot = BundleSlot::go_term;
        else throw DataError("role slot must be protein, disease or go-term, got " + s);
      }
      roles.push_back(role);
    }
    if (roles.empty()) throw DataError("retrieval mode needs at least one --role");
    const KnowledgeGraph kg = load_graph(nodes, triples);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const EmbeddingCache cache = load_cache(cache_path);
    const std::string text =
        kind == PromptTemplate::molecule_generation ? guidance : question;
    bundle = retrieve_for_rag(query_node, roles, kind, ckpt.model, cache, kg, text);
  } else {
    bundle.kind = kind;
    bundle.smiles = smiles;
    bundle.sequence = sequence;
    bundle.protein_names = proteins;
    bundle.disease_names = diseases;
    bundle.go_terms = go_terms;
    bundle.question = question;
    bundle.text_guidance = guidance;
  }
  std::cout << assemble_prompt(bundle);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph-supervised bridging of frozen unimodal encoders"};
  app.require_subcommand(1);
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic,
               "force single-threaded execution (this build is single-threaded "
               "throughout; the flag is kept for interface stability)");

  auto* split = app.add_subcommand("split", "stratified train/valid/test split");
  std::string s_nodes, s_triples, s_ratios = "0.8,0.1,0.1", s_out;
  std::uint64_t s_seed = 1;
  split->add_option("--nodes", s_nodes)->required();
  split->add_option("--triples", s_triples)->required();
  split->add_option("--ratios", s_ratios);
  split->add_option("--seed", s_seed);
  split->add_option("--out-dir", s_out)->required();

  auto* encode = app.add_subcommand("encode", "run frozen encoders into a cache");
  std::string e_nodes, e_triples, e_spec, e_out;
  encode->add_option("--nodes", e_nodes)->required();
  encode->add_option("--triples", e_triples)->required();
  encode->add_option("--spec", e_spec)->required();
  encode->add_option("--out", e_out)->required();

  auto* tb = app.add_subcommand("train-bridge", "train the bridge module");
  std::string tb_config;
  tb->add_option("--config", tb_config)->required();

  auto* tk = app.add_subcommand("train-kge", "train a KGE baseline");
  std::string tk_nodes, tk_triples, tk_split, tk_family, tk_out, tk_loss;
  KgeTrainConfig tk_config;
  tk->add_option("--nodes", tk_nodes)->required();
  tk->add_option("--triples", tk_triples)->required();
  tk->add_option("--split-dir", tk_split);
  tk->add_option("--family", tk_family)->required();
  tk->add_option("--out", tk_out)->required();
  tk->add_option("--dim", tk_config.d_e);
  tk->add_option("--rel-dim", tk_config.d_r);
  tk->add_option("--lr", tk_config.lr);
  tk->add_option("--epochs", tk_config.epochs);
  tk->add_option("--batch-size", tk_config.batch_size);
  tk->add_option("--negatives", tk_config.negatives);
  tk->add_option("--gamma", tk_config.gamma);
  tk->add_option("--loss", tk_loss);
  tk->add_option("--seed", tk_config.seed);
  tk->add_flag("--same-modality-negatives", tk_config.same_modality_negatives);

  auto* ev = app.add_subcommand("eval", "tail-ranking evaluation");
  std::string ev_ckpt, ev_nodes, ev_triples, ev_split, ev_cache, ev_out, ev_ranks;
  bool ev_raw = false, ev_filtered = true, ev_tolerate = false;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--nodes", ev_nodes)->required();
  ev->add_option("--triples", ev_triples)->required();
  ev->add_option("--split-dir", ev_split)->required();
  ev->add_option("--cache", ev_cache);
  ev->add_flag("--filtered", ev_filtered, "filtered ranking (default)");
  ev->add_flag("--raw", ev_raw, "rank without removing known positives");
  ev->add_flag("--tolerate-fingerprint-mismatch", ev_tolerate);
  ev->add_option("--out", ev_out);
  ev->add_option("--ranks-tsv", ev_ranks);

  auto* rt = app.add_subcommand("retrieve", "cross-modal top-k retrieval");
  std::string rt_ckpt, rt_cache, rt_nodes, rt_triples, rt_node, rt_modality, rt_rel;
  int rt_k = 10;
  bool rt_tolerate = false;
  rt->add_option("--checkpoint", rt_ckpt)->required();
  rt->add_option("--cache", rt_cache)->required();
  rt->add_option("--nodes", rt_nodes)->required();
  rt->add_option("--triples", rt_triples)->required();
  rt->add_option("--node", rt_node)->required();
  rt->add_option("--tail-modality", rt_modality)->required();
  rt->add_option("--relation", rt_rel)->required();
  rt->add_option("-k,--k", rt_k);
  rt->add_flag("--tolerate-fingerprint-mismatch", rt_tolerate);

  auto* pb = app.add_subcommand("planted-bench", "end-to-end synthetic benchmark");
  std::string pb_preset = "small", pb_out = "planted_bench_out";
  pb->add_option("--preset", pb_preset);
  pb->add_option("--out-dir", pb_out);

  auto* pr = app.add_subcommand("prompt", "assemble a retrieval-augmented prompt");
  std::string pr_template, pr_smiles, pr_sequence, pr_question, pr_guidance;
  std::vector<std::string> pr_proteins, pr_diseases, pr_go, pr_roles;
  std::string pr_ckpt, pr_cache, pr_nodes, pr_triples, pr_node;
  pr->add_option("--template", pr_template)->required();
  pr->add_option("--smiles", pr_smiles);
  pr->add_option("--sequence", pr_sequence);
  pr->add_option("--protein", pr_proteins);
  pr->add_option("--disease", pr_diseases);
  pr->add_option("--go-term", pr_go);
  pr->add_option("--question", pr_question);
  pr->add_option("--guidance", pr_guidance);
  pr->add_option("--checkpoint", pr_ckpt);
  pr->add_option("--cache", pr_cache);
  pr->add_option("--nodes", pr_nodes);
  pr->add_option("--triples", pr_triples);
  pr->add_option("--node", pr_node);
  pr->add_option("--role", pr_roles, "tail_modality:relation:k[:slot] (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (split->parsed())
      return cmd_split(s_nodes, s_triples, s_ratios, s_seed, s_out);
    if (encode->parsed()) return cmd_encode(e_nodes, e_triples, e_spec, e_out);
    if (tb->parsed()) return cmd_train_bridge(tb_config);
    if (tk->parsed())
      return cmd_train_kge(tk_nodes, tk_triples, tk_split, tk_family, tk_config,
                           tk_loss, tk_out);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_nodes, ev_triples, ev_split, ev_cache, ev_raw,
                      ev_tolerate, ev_out, ev_ranks);
    if (rt->parsed())
      return cmd_retrieve(rt_ckpt, rt_cache, rt_nodes, rt_triples, rt_node,
                          rt_modality, rt_rel, rt_k, rt_tolerate);
    if (pb->parsed()) return cmd_planted_bench(pb_preset, pb_out);
    if (pr->parsed())
      return cmd_prompt(pr_template, pr_smiles, pr_sequence, pr_proteins, pr_diseases,
                        pr_go, pr_question, pr_guidance, pr_ckpt, pr_cache, pr_nodes,
                        pr_triples, pr_node, pr_roles);
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
