#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "guardrail/core.hpp"

namespace guardrail::embed {

// ---------------------------------------------------------------------------
// Vocabulary: fixed token list, whitespace tokenization. Out-of-vocabulary
// words hash into the id range so any text maps deterministically.
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  // One token per line; blank lines skipped.
  static Vocabulary from_file(const std::string& path);
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  // Tokens "t0".."t<size-1>".
  static Vocabulary builtin(int size);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& id() const { return id_; }
  const std::string& token(int idx) const { return tokens_[idx]; }
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> token_ids) const;

 private:
  Vocabulary(std::vector<std::string> tokens, std::string id);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingVector {
  std::vector<double> values;
  std::string encoder_id;

  int dim() const { return static_cast<int>(values.size()); }
};

// Relaxed text: per-position logits over the vocabulary.
struct SoftSequence {
  Matrix logits;  // length x vocab
  std::string vocabulary_id;

  int length() const { return logits.rows; }
  int vocab_size() const { return logits.cols; }

  // Near-one-hot logits: `scale` on the token, 0 elsewhere.
  static SoftSequence one_hot(std::span<const int> tokens, int vocab_size,
                              std::string vocabulary_id, double scale);

  void validate() const;  // length >= 1, all entries finite
};

// Logit scale at which softmax is indistinguishable from a hard token at
// double precision for desk-scale vocabularies.
inline constexpr double kHardTokenLogit = 25.0;

// ---------------------------------------------------------------------------
// Reference encoder: seeded token-embedding table, mean pooling, L2
// normalization. Differentiable through soft sequences.
// ---------------------------------------------------------------------------

class ReferenceEncoder {
 public:
  ReferenceEncoder(const Vocabulary& vocab, int dim, std::uint64_t seed);

  const std::string& encoder_id() const { return encoder_id_; }
  const std::string& vocabulary_id() const { return vocabulary_id_; }
  int dim() const { return dim_; }
  int vocab_size() const { return table_.rows; }
  const Matrix& table() const { return table_; }

  EmbeddingVector embed_text(std::span<const int> tokens) const;
  EmbeddingVector embed_soft(const SoftSequence& seq) const;
  // d(cotangent . embed_soft(seq)) / d logits, analytic.
  Matrix embed_soft_grad(const SoftSequence& seq, std::span<const double> cotangent) const;
  Matrix embed_soft_grad(const SoftSequence& seq, const EmbeddingVector& cotangent) const {
    return embed_soft_grad(seq, std::span<const double>(cotangent.values));
  }

 private:
  Matrix table_;  // vocab x dim
  int dim_;
  std::string vocabulary_id_;
  std::string encoder_id_;
};

// ---------------------------------------------------------------------------
// Text-level encoder interface consumed by the pipeline
// ---------------------------------------------------------------------------

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual EmbeddingVector embed(const std::string& text) const = 0;
  virtual const std::string& encoder_id() const = 0;
  virtual int dim() const = 0;
};

class ReferenceTextEncoder final : public TextEncoder {
 public:
  ReferenceTextEncoder(Vocabulary vocab, int dim, std::uint64_t seed)
      : vocab_(std::move(vocab)), encoder_(vocab_, dim, seed) {}

  EmbeddingVector embed(const std::string& text) const override {
    return encoder_.embed_text(vocab_.tokenize(text));
  }
  const std::string& encoder_id() const override { return encoder_.encoder_id(); }
  int dim() const override { return encoder_.dim(); }

  const Vocabulary& vocabulary() const { return vocab_; }
  const ReferenceEncoder& encoder() const { return encoder_; }

 private:
  Vocabulary vocab_;
  ReferenceEncoder encoder_;
};

// ---------------------------------------------------------------------------
// Remote encoder client
// ---------------------------------------------------------------------------

struct RemoteEncoderEndpoint {
  std::string base_url;          // e.g. "http://127.0.0.1:8100"
  std::string path = "/v1/embed";
  int dim = 0;                   // declared dimension, validated per response
  std::string encoder_id;        // expected id; empty accepts whatever is returned
  int max_attempts = 3;
  int initial_backoff_ms = 100;  // doubles per retry
  int timeout_ms = 5000;
};

// POST {"text": ...} -> {"embedding": [...], "encoder_id": ..., "dim": ...}.
// Transport failures are retried per the endpoint policy; dimension
// mismatches and malformed responses are fatal.
EmbeddingVector remote_embed(const std::string& text, const RemoteEncoderEndpoint& endpoint);

class RemoteTextEncoder final : public TextEncoder {
 public:
  explicit RemoteTextEncoder(RemoteEncoderEndpoint endpoint);

  EmbeddingVector embed(const std::string& text) const override;
  const std::string& encoder_id() const override { return endpoint_.encoder_id; }
  int dim() const override { return endpoint_.dim; }

 private:
  RemoteEncoderEndpoint endpoint_;
};

}  // namespace guardrail::embed
