#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgbridge/kg.hpp"

namespace kgbridge {

enum class EncoderKind { hash_ngram, latent_passthrough, external_import };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& s);

// One frozen featurizer per modality. hash_ngram hashes character n-grams
// into 2^16 buckets, l2-normalizes the counts, and applies a fixed seeded
// Gaussian projection to raw_dim. latent_passthrough parses the feature as
// a comma-separated vector (planted graphs). external_import reads rows
// from a precomputed-embedding TSV so real encoder outputs can be dropped
// in.
struct EncoderSpec {
  std::string modality;
  EncoderKind kind = EncoderKind::hash_ngram;
  std::vector<int> ngram_sizes = {3};
  int raw_dim = 256;
  std::uint64_t seed = 0;
  std::string import_path;  // external_import only
};

struct RawEmbedding {
  std::string node_id;
  std::string modality;
  std::vector<float> vector;
};

constexpr int kNgramBuckets = 1 << 16;

std::uint32_t ngram_bucket(const std::string& ngram);

// Row of the 2^16 x raw_dim projection matrix, generated on demand from
// (seed, bucket) so only occupied buckets ever materialize.
std::vector<float> projection_row(std::uint64_t seed, std::uint32_t bucket,
                                  int raw_dim);

// Deterministic: identical (feature, spec) gives identical output bits.
RawEmbedding encode(const Node& node, const EncoderSpec& spec);

class EmbeddingCache {
 public:
  struct ModalityBlock {
    std::string modality;
    int raw_dim = 0;
    std::vector<std::string> ids;  // lexicographic
    std::vector<float> data;       // row-major |ids| x raw_dim
    std::map<std::string, std::size_t> row_of;
  };

  const std::vector<ModalityBlock>& blocks() const { return blocks_; }
  const ModalityBlock* find_block(const std::string& modality) const;
  // Row for a node; throws DataError when absent.
  const float* row(const std::string& modality, const std::string& node_id) const;
  int raw_dim(const std::string& modality) const;
  const std::string& fingerprint() const { return fingerprint_; }
  std::size_t total_rows() const;

  static EmbeddingCache from_blocks(std::vector<ModalityBlock> blocks,
                                    std::string fingerprint);

 private:
  std::vector<ModalityBlock> blocks_;
  std::string fingerprint_;  // 64 hex chars
};

// Canonical fingerprint over the spec set (order-independent).
std::string encoder_fingerprint(const std::vector<EncoderSpec>& specs);

// Encodes every node; rows per modality are ordered by node id. Requires
// exactly one spec per graph modality.
EmbeddingCache encode_all(const KnowledgeGraph& kg,
                          const std::vector<EncoderSpec>& specs);

// Binary cache format: magic "EMB1", u32 version, u32 modality count, then
// per modality: label, u32 raw_dim, u64 row count, row ids, row-major
// little-endian f32 data; trailing 32-byte encoder fingerprint.
void persist_cache(const EmbeddingCache& cache, const std::string& path);

// When expected_fingerprint is non-empty a mismatch is fatal unless
// tolerate_fingerprint_mismatch, in which case the mismatch is appended to
// *warnings.
EmbeddingCache load_cache(const std::string& path,
                          const std::string& expected_fingerprint = "",
                          bool tolerate_fingerprint_mismatch = false,
                          std::vector<std::string>* warnings = nullptr);

std::vector<EncoderSpec> encoder_specs_from_json(const std::string& json_text);
std::string encoder_specs_to_json(const std::vector<EncoderSpec>& specs);

}  // namespace kgbridge
