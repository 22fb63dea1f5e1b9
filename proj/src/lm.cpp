#include "guardrail/lm.hpp"

#include <cmath>

namespace guardrail::lm {

std::vector<double> ScorableLM::next_token_probs(std::span<const int> prefix) const {
  return softmax(next_token_logits(prefix));
}

// ---------------------------------------------------------------------------
// ToyBigramLM
// ---------------------------------------------------------------------------

ToyBigramLM::ToyBigramLM(Matrix transition_logits, std::vector<double> initial_logits,
                         int affirmation_token, std::string vocabulary_id)
    : transition_logits_(std::move(transition_logits)),
      initial_logits_(std::move(initial_logits)),
      affirmation_token_(affirmation_token),
      vocabulary_id_(std::move(vocabulary_id)) {
  const int V = transition_logits_.rows;
  if (V < 2 || transition_logits_.cols != V) {
    throw ValidationError("bigram lm: transition matrix must be square, V >= 2");
  }
  if (static_cast<int>(initial_logits_.size()) != V) {
    throw ValidationError("bigram lm: initial logits must have V entries");
  }
  if (!transition_logits_.all_finite() || !all_finite(initial_logits_)) {
    throw ValidationError("bigram lm: non-finite logit");
  }
  check_token(affirmation_token_);
}

void ToyBigramLM::check_token(int id) const {
  if (id < 0 || id >= vocab_size()) {
    throw ValidationError("bigram lm: token id " + std::to_string(id) + " out of vocabulary");
  }
}

ToyBigramLM ToyBigramLM::seeded(int vocab_size, std::uint64_t seed, int affirmation_token,
                                std::string vocabulary_id) {
  if (vocab_size < 2) throw ValidationError("bigram lm: vocab_size must be >= 2");
  Rng rng(derive_seed(seed, "lm/toy-bigram"));
  Matrix trans(vocab_size, vocab_size);
  for (double& x : trans.data) x = 2.0 * rng.gaussian();
  std::vector<double> init(vocab_size);
  for (double& x : init) x = 2.0 * rng.gaussian();
  if (vocabulary_id.empty()) {
    vocabulary_id = "toy:" + std::to_string(vocab_size) + ":" + std::to_string(seed);
  }
  return ToyBigramLM(std::move(trans), std::move(init), affirmation_token,
                     std::move(vocabulary_id));
}

ToyBigramLM ToyBigramLM::fit(const embed::Vocabulary& vocab,
                             const std::vector<std::string>& corpus_lines,
                             int affirmation_token) {
  const int V = vocab.size();
  if (V < 2) throw ValidationError("bigram lm: vocabulary must have >= 2 tokens");
  std::vector<double> bigram(static_cast<std::size_t>(V) * V, 1.0);  // add-one
  std::vector<double> first(V, 1.0);
  std::vector<double> row_total(V, static_cast<double>(V));
  double first_total = static_cast<double>(V);
  for (const auto& line : corpus_lines) {
    const std::vector<int> ids = vocab.tokenize(line);
    if (ids.empty()) continue;
    first[ids[0]] += 1.0;
    first_total += 1.0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      bigram[static_cast<std::size_t>(ids[i]) * V + ids[i + 1]] += 1.0;
      row_total[ids[i]] += 1.0;
    }
  }
  Matrix trans(V, V);
  for (int v = 0; v < V; ++v) {
    for (int w = 0; w < V; ++w) {
      trans.at(v, w) = std::log(bigram[static_cast<std::size_t>(v) * V + w] / row_total[v]);
    }
  }
  std::vector<double> init(V);
  for (int v = 0; v < V; ++v) init[v] = std::log(first[v] / first_total);
  return ToyBigramLM(std::move(trans), std::move(init), affirmation_token, vocab.id());
}

ToyBigramLM ToyBigramLM::chain(int vocab_size, int start_token, int affirmation_token) {
  if (vocab_size < 2) throw ValidationError("bigram lm: vocab_size must be >= 2");
  if (start_token < 0 || start_token >= vocab_size) {
    throw ValidationError("bigram lm: start token out of range");
  }
  constexpr double kPeak = 60.0;  // softmax mass on the peak == 1 at double precision
  Matrix trans(vocab_size, vocab_size, 0.0);
  for (int v = 0; v < vocab_size; ++v) trans.at(v, (v + 1) % vocab_size) = kPeak;
  std::vector<double> init(vocab_size, 0.0);
  init[start_token] = kPeak;
  return ToyBigramLM(std::move(trans), std::move(init), affirmation_token,
                     "chain:" + std::to_string(vocab_size));
}

std::vector<double> ToyBigramLM::next_token_logits(std::span<const int> prefix) const {
  if (prefix.empty()) return initial_logits_;
  check_token(prefix.back());
  const auto row = transition_logits_.row(prefix.back());
  return {row.begin(), row.end()};
}

std::vector<double> ToyBigramLM::soft_next_token_logits(const Matrix& prefix_dists) const {
  const int V = vocab_size();
  if (prefix_dists.rows == 0) return initial_logits_;
  if (prefix_dists.cols != V) throw ValidationError("bigram lm: distribution width mismatch");
  const auto q = prefix_dists.row(prefix_dists.rows - 1);
  std::vector<double> out(V, 0.0);
  for (int v = 0; v < V; ++v) {
    if (q[v] == 0.0) continue;
    const auto row = transition_logits_.row(v);
    for (int w = 0; w < V; ++w) out[w] += q[v] * row[w];
  }
  return out;
}

Matrix ToyBigramLM::soft_next_token_logits_vjp(const Matrix& prefix_dists,
                                               std::span<const double> cotangent) const {
  const int V = vocab_size();
  if (static_cast<int>(cotangent.size()) != V) {
    throw ValidationError("bigram lm: cotangent width mismatch");
  }
  Matrix grad(prefix_dists.rows, prefix_dists.cols, 0.0);
  if (prefix_dists.rows == 0) return grad;
  // Only the last prefix position feeds the prediction.
  const int last = prefix_dists.rows - 1;
  for (int v = 0; v < V; ++v) grad.at(last, v) = dot(transition_logits_.row(v), cotangent);
  return grad;
}

double ToyBigramLM::continuation_log_prob(std::span<const int> prefix,
                                          std::span<const int> continuation) const {
  if (continuation.empty()) return 0.0;
  std::vector<int> context(prefix.begin(), prefix.end());
  double total = 0.0;
  for (int id : continuation) {
    check_token(id);
    const std::vector<double> p = next_token_probs(context);
    total += std::log(std::max(p[id], 1e-300));
    context.push_back(id);
  }
  return total;
}

Matrix ToyBigramLM::next_token_prob_grad(std::span<const int> tokens, int target) const {
  if (tokens.empty()) throw ValidationError("bigram lm: gradient needs a non-empty sequence");
  check_token(target);
  const int V = vocab_size();
  const int T = static_cast<int>(tokens.size());
  Matrix grad(T, V, 0.0);

  // P(target | tokens) = softmax(row of last token)[target]; only the last
  // position has a nonzero indicator gradient under the bigram factorization.
  const int last_tok = tokens.back();
  check_token(last_tok);
  const std::vector<double> p = softmax(transition_logits_.row(last_tok));
  const double pt = p[target];
  // d p_target / d e_last(v) = p_target * (L_v[target] - L_v . p)
  for (int v = 0; v < V; ++v) {
    const auto row = transition_logits_.row(v);
    grad.at(T - 1, v) = pt * (row[target] - dot(row, p));
  }
  return grad;
}

}  // namespace guardrail::lm
