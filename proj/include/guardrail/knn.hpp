#pragma once

#include <map>
#include <string>
#include <vector>

#include "guardrail/core.hpp"
#include "guardrail/embedding.hpp"

namespace guardrail::knn {

struct LabeledEmbedding {
  std::string id;
  std::string category;
  Origin origin = Origin::collected;
  embed::EmbeddingVector embedding;
};

struct StoreRecord {
  std::string id;
  std::string category;
  Origin origin = Origin::collected;
  std::vector<double> embedding;
};

class EmbeddingStore {
 public:
  EmbeddingStore(std::vector<StoreRecord> records, std::string encoder_id, int dim);

  const std::string& encoder_id() const { return encoder_id_; }
  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<StoreRecord>& records() const { return records_; }
  std::map<std::string, std::size_t> category_counts() const;

 private:
  std::vector<StoreRecord> records_;
  std::string encoder_id_;
  int dim_ = 0;
};

struct KnnConfig {
  int k = 8;
};

// Validates a uniform encoder and dimension across all inputs; record order
// is preserved.
EmbeddingStore build_store(const std::vector<LabeledEmbedding>& examples);

// Probabilistic KNN: fraction of the k nearest records (cosine distance,
// ties broken by ascending record id then category id) per taxonomy
// category. Every taxonomy category must be represented in the store.
ProbabilityVector knn_probabilities(const EmbeddingStore& store,
                                    const embed::EmbeddingVector& query, const KnnConfig& cfg,
                                    const CategoryTaxonomy& taxonomy);

inline constexpr int kStoreFormatVersion = 1;

// JSON Lines: manifest line {"format_version","encoder_id","dim"} followed by
// one record object per line.
void save_store(const EmbeddingStore& store, const std::string& path);
// expected_encoder_id, when non-empty, must match the manifest.
EmbeddingStore load_store(const std::string& path, const std::string& expected_encoder_id = "");

}  // namespace guardrail::knn
