#pragma once

#include <span>
#include <string>
#include <vector>

#include "guardrail/core.hpp"
#include "guardrail/embedding.hpp"

namespace guardrail::lm {

// A language model that can score token sequences, score relaxed (soft)
// prefixes, and expose the derivatives the optimizers need.
class ScorableLM {
 public:
  virtual ~ScorableLM() = default;

  virtual int vocab_size() const = 0;
  virtual const std::string& vocabulary_id() const = 0;
  // Token whose next-token probability the suffix optimizers target.
  virtual int affirmation_token() const = 0;

  // Next-token logits after a hard prefix; empty prefix yields the
  // unconditional first-token logits.
  virtual std::vector<double> next_token_logits(std::span<const int> prefix) const = 0;

  // Next-token logits after a soft prefix (rows are per-position probability
  // distributions): the expected logits under the last position's
  // distribution. Agrees with next_token_logits on one-hot rows.
  virtual std::vector<double> soft_next_token_logits(const Matrix& prefix_dists) const = 0;

  // d(cotangent . soft_next_token_logits(prefix)) / d(prefix distributions).
  virtual Matrix soft_next_token_logits_vjp(const Matrix& prefix_dists,
                                            std::span<const double> cotangent) const = 0;

  // Sum of log P(continuation[i] | prefix + continuation[:i]).
  virtual double continuation_log_prob(std::span<const int> prefix,
                                       std::span<const int> continuation) const = 0;

  // Gradient of P(target | tokens) with respect to one-hot token indicators,
  // one row per position of `tokens`.
  virtual Matrix next_token_prob_grad(std::span<const int> tokens, int target) const = 0;

  // softmax(next_token_logits(prefix)).
  std::vector<double> next_token_probs(std::span<const int> prefix) const;
};

// Bigram stand-in for a real reference model: a transition-logit matrix plus
// unconditional first-token logits.
class ToyBigramLM final : public ScorableLM {
 public:
  ToyBigramLM(Matrix transition_logits, std::vector<double> initial_logits,
              int affirmation_token, std::string vocabulary_id);

  static ToyBigramLM seeded(int vocab_size, std::uint64_t seed, int affirmation_token,
                            std::string vocabulary_id = "");
  // Add-one bigram counts over whitespace-tokenized lines.
  static ToyBigramLM fit(const embed::Vocabulary& vocab,
                         const std::vector<std::string>& corpus_lines,
                         int affirmation_token);
  // Deterministic cycle start -> start+1 -> ... (mod V); transition and
  // initial mass concentrated to within double precision of 1.
  static ToyBigramLM chain(int vocab_size, int start_token, int affirmation_token);

  const Matrix& transition_logits() const { return transition_logits_; }
  const std::vector<double>& initial_logits() const { return initial_logits_; }

  int vocab_size() const override { return transition_logits_.rows; }
  const std::string& vocabulary_id() const override { return vocabulary_id_; }
  int affirmation_token() const override { return affirmation_token_; }
  std::vector<double> next_token_logits(std::span<const int> prefix) const override;
  std::vector<double> soft_next_token_logits(const Matrix& prefix_dists) const override;
  Matrix soft_next_token_logits_vjp(const Matrix& prefix_dists,
                                    std::span<const double> cotangent) const override;
  double continuation_log_prob(std::span<const int> prefix,
                               std::span<const int> continuation) const override;
  Matrix next_token_prob_grad(std::span<const int> tokens, int target) const override;

 private:
  void check_token(int id) const;

  Matrix transition_logits_;           // V x V; row = previous token
  std::vector<double> initial_logits_;  // V
  int affirmation_token_;
  std::string vocabulary_id_;
};

}  // namespace guardrail::lm
