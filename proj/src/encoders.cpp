#include "kgbridge/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgbridge/binio.hpp"
#include "kgbridge/hash.hpp"
#include "kgbridge/rng.hpp"

namespace kgbridge {

std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::hash_ngram: return "hash-ngram";
    case EncoderKind::latent_passthrough: return "latent-passthrough";
    case EncoderKind::external_import: return "external-import";
  }
  throw DataError("unknown encoder kind");
}

EncoderKind encoder_kind_from_name(const std::string& s) {
  if (s == "hash-ngram") return EncoderKind::hash_ngram;
  if (s == "latent-passthrough") return EncoderKind::latent_passthrough;
  if (s == "external-import") return EncoderKind::external_import;
  throw DataError("unknown encoder kind: " + s);
}

std::uint32_t ngram_bucket(const std::string& ngram) {
  return static_cast<std::uint32_t>(fnv1a64(ngram) % kNgramBuckets);
}

std::vector<float> projection_row(std::uint64_t seed, std::uint32_t bucket,
                                  int raw_dim) {
  Rng rng(Rng::derive(seed, bucket));
  std::vector<float> row(static_cast<std::size_t>(raw_dim));
  for (auto& v : row) v = static_cast<float>(rng.normal());
  return row;
}

namespace {

std::vector<float> encode_hash_ngram(const Node& node, const EncoderSpec& spec) {
  if (spec.ngram_sizes.empty())
    throw DataError("hash-ngram spec for modality '" + spec.modality +
                    "' has no ngram sizes");
  std::map<std::uint32_t, double> counts;
  std::size_t total = 0;
  for (int n : spec.ngram_sizes) {
    if (n < 1) throw DataError("ngram size must be >= 1");
    if (node.feature.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + n <= node.feature.size(); ++i) {
      counts[ngram_bucket(node.feature.substr(i, n))] += 1.0;
      ++total;
    }
  }
  if (total == 0)
    throw DataError("feature of node " + node.id +
                    " is shorter than the smallest n-gram size");

  double norm2 = 0;
  for (const auto& [b, c] : counts) norm2 += c * c;
  const double inv = 1.0 / std::sqrt(norm2);

  std::vector<double> acc(static_cast<std::size_t>(spec.raw_dim), 0.0);
  for (const auto& [bucket, count] : counts) {
    const std::vector<float> row = projection_row(spec.seed, bucket, spec.raw_dim);
    const double w = count * inv;
    for (int i = 0; i < spec.raw_dim; ++i) acc[i] += w * row[i];
  }
  std::vector<float> out(static_cast<std::size_t>(spec.raw_dim));
  for (int i = 0; i < spec.raw_dim; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

std::vector<float> parse_float_csv(const std::string& s, const std::string& node_id) {
  std::vector<float> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stof(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DataError("node " + node_id + ": cannot parse '" + item +
                      "' as a real number");
    }
  }
  return out;
}

std::vector<float> encode_passthrough(const Node& node, const EncoderSpec& spec) {
  std::vector<float> v = parse_float_csv(node.feature, node.id);
  if (static_cast<int>(v.size()) != spec.raw_dim)
    throw DataError("node " + node.id + ": latent has " +
                    std::to_string(v.size()) + " components, spec raw_dim is " +
                    std::to_string(spec.raw_dim));
  return v;
}

std::vector<float> encode_external(const Node& node, const EncoderSpec& spec) {
  std::ifstream in(spec.import_path);
  if (!in)
    throw DataError("cannot open external embedding file: " + spec.import_path);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    if (line.substr(0, tab) != node.id) continue;
    std::vector<float> v = parse_float_csv(line.substr(tab + 1), node.id);
    if (static_cast<int>(v.size()) != spec.raw_dim)
      throw DataError("external embedding for node " + node.id +
                      " has wrong dimension");
    return v;
  }
  throw DataError("node " + node.id + " not found in " + spec.import_path);
}

}  // namespace

RawEmbedding encode(const Node& node, const EncoderSpec& spec) {
  if (node.modality != spec.modality)
    throw DataError("node " + node.id + " has modality '" + node.modality +
                    "' but the spec encodes '" + spec.modality + "'");
  if (spec.raw_dim < 1) throw DataError("encoder raw_dim must be >= 1");

  RawEmbedding out;
  out.node_id = node.id;
  out.modality = node.modality;
  switch (spec.kind) {
    case EncoderKind::hash_ngram:
      out.vector = encode_hash_ngram(node, spec);
      break;
    case EncoderKind::latent_passthrough:
      out.vector = encode_passthrough(node, spec);
      break;
    case EncoderKind::external_import:
      out.vector = encode_external(node, spec);
      break;
  }
  for (float v : out.vector) {
    if (!std::isfinite(v))
      throw NumericError("non-finite raw embedding for node " + node.id);
  }
  return out;
}

const EmbeddingCache::ModalityBlock* EmbeddingCache::find_block(
    const std::string& modality) const {
  for (const auto& b : blocks_)
    if (b.modality == modality) return &b;
  return nullptr;
}

const float* EmbeddingCache::row(const std::string& modality,
                                 const std::string& node_id) const {
  const ModalityBlock* b = find_block(modality);
  if (b == nullptr) throw DataError("cache has no modality '" + modality + "'");
  auto it = b->row_of.find(node_id);
  if (it == b->row_of.end())
    throw DataError("cache has no embedding for node " + node_id);
  return b->data.data() + it->second * static_cast<std::size_t>(b->raw_dim);
}

int EmbeddingCache::raw_dim(const std::string& modality) const {
  const ModalityBlock* b = find_block(modality);
  if (b == nullptr) throw DataError("cache has no modality '" + modality + "'");
  return b->raw_dim;
}

std::size_t EmbeddingCache::total_rows() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.ids.size();
  return n;
}

EmbeddingCache EmbeddingCache::from_blocks(std::vector<ModalityBlock> blocks,
                                           std::string fingerprint) {
  EmbeddingCache c;
  c.blocks_ = std::move(blocks);
  c.fingerprint_ = std::move(fingerprint);
  for (auto& b : c.blocks_) {
    b.row_of.clear();
    for (std::size_t i = 0; i < b.ids.size(); ++i) b.row_of.emplace(b.ids[i], i);
  }
  return c;
}

std::string encoder_fingerprint(const std::vector<EncoderSpec>& specs) {
  std::vector<std::string> lines;
  for (const auto& s : specs) {
    std::string line = s.modality + '|' + encoder_kind_name(s.kind) + '|' +
                       std::to_string(s.raw_dim) + '|' + std::to_string(s.seed) + '|';
    for (std::size_t i = 0; i < s.ngram_sizes.size(); ++i) {
      if (i) line.push_back(',');
      line += std::to_string(s.ngram_sizes[i]);
    }
    lines.push_back(std::move(line));
  }
  std::sort(lines.begin(), lines.end());
  Sha256 h;
  for (const auto& l : lines) {
    h.update(l);
    h.update("\n");
  }
  return to_hex(h.finish());
}

EmbeddingCache encode_all(const KnowledgeGraph& kg,
                          const std::vector<EncoderSpec>& specs) {
  std::map<std::string, const EncoderSpec*> by_modality;
  for (const auto& s : specs) {
    if (!by_modality.emplace(s.modality, &s).second)
      throw DataError("more than one encoder spec for modality '" + s.modality + "'");
  }
  for (const std::string& m : kg.modality_vocab()) {
    if (by_modality.find(m) == by_modality.end())
      throw DataError("no encoder spec for modality '" + m + "'");
  }

  std::vector<EmbeddingCache::ModalityBlock> blocks;
  for (const std::string& m : kg.modality_vocab()) {
    const EncoderSpec& spec = *by_modality.at(m);
    EmbeddingCache::ModalityBlock block;
    block.modality = m;
    block.raw_dim = spec.raw_dim;
    block.ids = kg.nodes_of_modality(m);
    std::sort(block.ids.begin(), block.ids.end());
    block.data.reserve(block.ids.size() * static_cast<std::size_t>(spec.raw_dim));
    for (const std::string& id : block.ids) {
      RawEmbedding e = encode(kg.node(id), spec);
      block.data.insert(block.data.end(), e.vector.begin(), e.vector.end());
    }
    blocks.push_back(std::move(block));
  }
  return EmbeddingCache::from_blocks(std::move(blocks), encoder_fingerprint(specs));
}

namespace {
constexpr char kCacheMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void persist_cache(const EmbeddingCache& cache, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cache file: " + path);
  out.write(kCacheMagic, 4);
  binio::write_scalar<std::uint32_t>(out, kCacheVersion);
  binio::write_scalar<std::uint32_t>(out,
                                     static_cast<std::uint32_t>(cache.blocks().size()));
  for (const auto& b : cache.blocks()) {
    binio::write_string(out, b.modality);
    binio::write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(b.raw_dim));
    binio::write_scalar<std::uint64_t>(out, b.ids.size());
    for (const auto& id : b.ids) binio::write_string(out, id);
    binio::write_f32_array(out, b.data.data(), b.data.size());
  }
  if (cache.fingerprint().size() != 64)
    throw DataError("cache fingerprint is not a 32-byte hash");
  for (std::size_t i = 0; i < 32; ++i) {
    const auto byte = static_cast<std::uint8_t>(
        std::stoi(cache.fingerprint().substr(i * 2, 2), nullptr, 16));
    binio::write_scalar<std::uint8_t>(out, byte);
  }
  if (!out) throw DataError("write failed for cache file: " + path);
}

EmbeddingCache load_cache(const std::string& path,
                          const std::string& expected_fingerprint,
                          bool tolerate_fingerprint_mismatch,
                          std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cache file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw DataError("bad magic in cache file: " + path);
  const auto version = binio::read_scalar<std::uint32_t>(in, "cache version");
  if (version != kCacheVersion)
    throw DataError("unsupported cache version " + std::to_string(version));

  const auto n_blocks = binio::read_scalar<std::uint32_t>(in, "modality count");
  std::vector<EmbeddingCache::ModalityBlock> blocks;
  for (std::uint32_t bi = 0; bi < n_blocks; ++bi) {
    EmbeddingCache::ModalityBlock b;
    b.modality = binio::read_string(in, "modality label");
    b.raw_dim = static_cast<int>(binio::read_scalar<std::uint32_t>(in, "raw_dim"));
    const auto rows = binio::read_scalar<std::uint64_t>(in, "row count");
    b.ids.reserve(rows);
    for (std::uint64_t i = 0; i < rows; ++i)
      b.ids.push_back(binio::read_string(in, "row id"));
    b.data.resize(rows * static_cast<std::size_t>(b.raw_dim));
    binio::read_f32_array(in, b.data.data(), b.data.size(), "embedding rows");
    blocks.push_back(std::move(b));
  }

  std::string fingerprint;
  {
    static const char* k = "0123456789abcdef";
    for (std::size_t i = 0; i < 32; ++i) {
      const auto byte = binio::read_scalar<std::uint8_t>(in, "fingerprint");
      fingerprint.push_back(k[byte >> 4]);
      fingerprint.push_back(k[byte & 0xf]);
    }
  }
  if (!expected_fingerprint.empty() && fingerprint != expected_fingerprint) {
    const std::string msg = "cache fingerprint " + fingerprint +
                            " does not match expected " + expected_fingerprint;
    if (!tolerate_fingerprint_mismatch) throw DataError(msg);
    if (warnings != nullptr) warnings->push_back(msg);
  }
  return EmbeddingCache::from_blocks(std::move(blocks), std::move(fingerprint));
}

std::vector<EncoderSpec> encoder_specs_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("invalid encoder spec JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("encoders") || !j["encoders"].is_array())
    throw DataError("encoder spec JSON must be {\"encoders\": [...]}");
  for (const auto& [key, _] : j.items()) {
    if (key != "encoders") throw DataError("unknown key in encoder spec: " + key);
  }
  std::vector<EncoderSpec> specs;
  for (const auto& e : j["encoders"]) {
    EncoderSpec s;
    for (const auto& [key, _] : e.items()) {
      if (key != "modality" && key != "kind" && key != "ngram_sizes" &&
          key != "raw_dim" && key != "seed" && key != "import_path")
        throw DataError("unknown key in encoder spec: " + key);
    }
    s.modality = e.at("modality").get<std::string>();
    s.kind = encoder_kind_from_name(e.at("kind").get<std::string>());
    if (e.contains("ngram_sizes")) s.ngram_sizes = e["ngram_sizes"].get<std::vector<int>>();
    if (e.contains("raw_dim")) s.raw_dim = e["raw_dim"].get<int>();
    if (e.contains("seed")) s.seed = e["seed"].get<std::uint64_t>();
    if (e.contains("import_path")) s.import_path = e["import_path"].get<std::string>();
    specs.push_back(std::move(s));
  }
  return specs;
}

std::string encoder_specs_to_json(const std::vector<EncoderSpec>& specs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : specs) {
    nlohmann::ordered_json e;
    e["modality"] = s.modality;
    e["kind"] = encoder_kind_name(s.kind);
    e["ngram_sizes"] = s.ngram_sizes;
    e["raw_dim"] = s.raw_dim;
    e["seed"] = s.seed;
    if (!s.import_path.empty()) e["import_path"] = s.import_path;
    arr.push_back(std::move(e));
  }
  nlohmann::ordered_json j;
  j["encoders"] = arr;
  return j.dump(2);
}

}  // namespace kgbridge
