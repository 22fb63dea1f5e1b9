#include "guardrail/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace guardrail::datagen {

namespace {

constexpr double kLogFloor = 1e-12;

// Backprop a per-row cotangent through softmax: q * (h - q.h).
void add_softmax_vjp(std::span<const double> q, std::span<const double> h,
                     std::span<double> out) {
  const double inner = dot(q, h);
  for (std::size_t v = 0; v < q.size(); ++v) out[v] += q[v] * (h[v] - inner);
}

}  // namespace

void EnergyConfig::validate() const {
  if (lambda_sim < 0.0 || lambda_flu < 0.0) {
    throw ValidationError("energy: constraint weights must be >= 0");
  }
  if (lambda_sim > 0.0 && references.empty()) {
    throw ValidationError("energy: similarity weight > 0 requires at least one reference");
  }
  if (lambda_flu > 0.0 && lm == nullptr) {
    throw ValidationError("energy: fluency weight > 0 requires a language model");
  }
}

double LangevinSchedule::sigma_at(int step_index) const {
  return sigma0 * std::pow(decay, step_index);
}

void LangevinSchedule::validate() const {
  // eta == 0 makes the noiseless sampler the identity; the engine config
  // requires a strictly positive step, the sampler itself does not.
  if (eta < 0.0) throw ValidationError("langevin: eta must be >= 0");
  if (sigma0 < 0.0) throw ValidationError("langevin: sigma0 must be >= 0");
  if (decay <= 0.0 || decay > 1.0) throw ValidationError("langevin: decay must be in (0, 1]");
  if (steps < 0) throw ValidationError("langevin: steps must be >= 0");
}

// ---------------------------------------------------------------------------
// Similarity constraint
// ---------------------------------------------------------------------------

double similarity(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                  std::span<const embed::EmbeddingVector> references) {
  if (references.empty()) throw ValidationError("similarity: no references");
  const embed::EmbeddingVector e = encoder.embed_soft(seq);
  double total = 0.0;
  for (const auto& ref : references) total += cosine(e.values, ref.values);
  return total;
}

Matrix similarity_grad(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                       std::span<const embed::EmbeddingVector> references) {
  if (references.empty()) throw ValidationError("similarity: no references");
  // embed_soft output is unit-norm, so sum_i cos(e, y_i) = e . sum_i y_i/|y_i|
  // and the whole constraint backpropagates through one cotangent.
  std::vector<double> cotangent(encoder.dim(), 0.0);
  for (const auto& ref : references) {
    const double n = l2_norm(ref.values);
    if (n < 1e-12) throw ValidationError("similarity: zero-norm reference");
    for (int j = 0; j < encoder.dim(); ++j) cotangent[j] += ref.values[j] / n;
  }
  return encoder.embed_soft_grad(seq, cotangent);
}

// ---------------------------------------------------------------------------
// Fluency constraint
// ---------------------------------------------------------------------------

double fluency(const embed::SoftSequence& seq, const lm::ScorableLM& lm) {
  seq.validate();
  if (seq.vocab_size() != lm.vocab_size()) {
    throw ValidationError("fluency: vocabulary size mismatch");
  }
  if (seq.vocabulary_id != lm.vocabulary_id()) {
    throw ValidationError("fluency: vocabulary mismatch (" + seq.vocabulary_id + " vs " +
                          lm.vocabulary_id() + ")");
  }
  const int T = seq.length();
  const int V = seq.vocab_size();

  Matrix dists(T, V);
  for (int t = 0; t < T; ++t) {
    const std::vector<double> q = softmax(seq.logits.row(t));
    std::copy(q.begin(), q.end(), dists.row(t).begin());
  }

  double total = 0.0;
  Matrix prefix(0, V);
  for (int t = 0; t < T; ++t) {
    prefix.rows = t;
    prefix.data.assign(dists.data.begin(), dists.data.begin() + static_cast<std::size_t>(t) * V);
    const std::vector<double> p = softmax(lm.soft_next_token_logits(prefix));
    const auto q = dists.row(t);
    for (int v = 0; v < V; ++v) {
      if (q[v] == 0.0) continue;
      total += q[v] * std::log(std::max(p[v], kLogFloor));
    }
  }
  return total;
}

Matrix fluency_grad(const embed::SoftSequence& seq, const lm::ScorableLM& lm) {
  seq.validate();
  if (seq.vocab_size() != lm.vocab_size()) {
    throw ValidationError("fluency: vocabulary size mismatch");
  }
  if (seq.vocabulary_id != lm.vocabulary_id()) {
    throw ValidationError("fluency: vocabulary mismatch");
  }
  const int T = seq.length();
  const int V = seq.vocab_size();

  Matrix dists(T, V);
  for (int t = 0; t < T; ++t) {
    const std::vector<double> q = softmax(seq.logits.row(t));
    std::copy(q.begin(), q.end(), dists.row(t).begin());
  }

  // d f / d q_j, accumulated across both the direct term at position j and
  // the predicted distributions at later positions.
  Matrix grad_q(T, V, 0.0);
  Matrix prefix(0, V);
  for (int t = 0; t < T; ++t) {
    prefix.rows = t;
    prefix.data.assign(dists.data.begin(), dists.data.begin() + static_cast<std::size_t>(t) * V);
    const std::vector<double> logits = lm.soft_next_token_logits(prefix);
    const std::vector<double> p = softmax(logits);
    const auto q = dists.row(t);

    // Direct term: sum_v q_t(v) log p_t(v).
    for (int v = 0; v < V; ++v) grad_q.at(t, v) += std::log(std::max(p[v], kLogFloor));

    // Through p_t = softmax(expected logits). Positions clipped by the log
    // floor contribute a constant, so they drop out of the cotangent.
    if (t > 0) {
      double unclipped_mass = 0.0;
      for (int v = 0; v < V; ++v) {
        if (p[v] > kLogFloor) unclipped_mass += q[v];
      }
      std::vector<double> cot(V);
      for (int v = 0; v < V; ++v) {
        cot[v] = (p[v] > kLogFloor ? q[v] : 0.0) - p[v] * unclipped_mass;
      }
      const Matrix up = lm.soft_next_token_logits_vjp(prefix, cot);
      for (int j = 0; j < t; ++j) {
        const auto src = up.row(j);
        auto dst = grad_q.row(j);
        for (int v = 0; v < V; ++v) dst[v] += src[v];
      }
    }
  }

  Matrix grad(T, V, 0.0);
  for (int t = 0; t < T; ++t) {
    add_softmax_vjp(dists.row(t), grad_q.row(t), grad.row(t));
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

double energy(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
              const EnergyConfig& cfg) {
  cfg.validate();
  double total = 0.0;
  if (cfg.lambda_sim > 0.0) total += cfg.lambda_sim * similarity(encoder, seq, cfg.references);
  if (cfg.lambda_flu > 0.0) total += cfg.lambda_flu * fluency(seq, *cfg.lm);
  return -total;
}

Matrix energy_grad(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                   const EnergyConfig& cfg) {
  cfg.validate();
  Matrix grad(seq.length(), seq.vocab_size(), 0.0);
  if (cfg.lambda_sim > 0.0) {
    const Matrix g = similarity_grad(encoder, seq, cfg.references);
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] -= cfg.lambda_sim * g.data[i];
  }
  if (cfg.lambda_flu > 0.0) {
    const Matrix g = fluency_grad(seq, *cfg.lm);
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] -= cfg.lambda_flu * g.data[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Langevin dynamics
// ---------------------------------------------------------------------------

embed::SoftSequence langevin_step(const embed::SoftSequence& seq, const EnergyObjective& objective,
                                  const LangevinSchedule& schedule, int step_index, Rng& rng) {
  schedule.validate();
  if (step_index < 0 || step_index >= std::max(schedule.steps, 1)) {
    throw ValidationError("langevin_step: step_index out of range");
  }
  const Matrix grad = objective.gradient(seq);
  if (grad.rows != seq.logits.rows || grad.cols != seq.logits.cols) {
    throw ValidationError("langevin_step: gradient shape mismatch");
  }
  for (int t = 0; t < grad.rows; ++t) {
    if (!all_finite(grad.row(t))) {
      throw ValidationError("langevin_step: non-finite gradient at position " + std::to_string(t));
    }
  }
  const double sigma = schedule.sigma_at(step_index);
  embed::SoftSequence next = seq;
  for (std::size_t i = 0; i < next.logits.data.size(); ++i) {
    double noise = 0.0;
    if (sigma > 0.0) noise = sigma * rng.gaussian();
    next.logits.data[i] = seq.logits.data[i] - schedule.eta * grad.data[i] + noise;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Category sample generation
// ---------------------------------------------------------------------------

namespace {

std::vector<int> fit_to_length(std::vector<int> ids, int length) {
  if (static_cast<int>(ids.size()) > length) {
    ids.resize(length);
    return ids;
  }
  // Cycle-pad short examples so the start stays in-distribution.
  const std::size_t base = ids.size();
  while (static_cast<int>(ids.size()) < length) ids.push_back(ids[ids.size() % base]);
  return ids;
}

}  // namespace

std::vector<GeneratedSample> generate_category_samples(
    const CategoryTaxonomy& taxonomy, const std::string& category_id,
    std::span<const LabeledExample> collected, const embed::Vocabulary& vocab,
    const embed::ReferenceEncoder& encoder, const EnergyConfig& energy_base,
    const LangevinSchedule& schedule, int samples, int sequence_length,
    std::uint64_t base_seed) {
  const auto cat_idx = taxonomy.index_of(category_id);
  if (!cat_idx) throw ValidationError("generate: unknown category '" + category_id + "'");
  if (taxonomy.is_benign(*cat_idx)) {
    throw ValidationError("generate: category '" + category_id + "' is benign");
  }
  if (samples < 0) throw ValidationError("generate: sample count must be >= 0");
  if (sequence_length < 1) throw ValidationError("generate: sequence length must be >= 1");
  schedule.validate();

  std::vector<std::vector<int>> seed_token_lists;
  std::vector<embed::EmbeddingVector> references;
  for (const auto& ex : collected) {
    if (ex.category != category_id) continue;
    validate_example(ex, taxonomy);
    std::vector<int> ids = vocab.tokenize(ex.text);
    if (ids.empty()) continue;
    references.push_back(encoder.embed_text(ids));
    seed_token_lists.push_back(std::move(ids));
  }
  if (seed_token_lists.empty()) {
    throw ValidationError("generate: no collected data for category '" + category_id + "'");
  }

  EnergyConfig cfg = energy_base;
  cfg.references = references;
  cfg.validate();
  const CompositeEnergy objective(encoder, cfg);

  std::vector<GeneratedSample> out;
  out.reserve(samples);
  for (int j = 0; j < samples; ++j) {
    Rng rng(derive_seed(base_seed, "datagen/" + category_id + "/" + std::to_string(j)));

    const auto& seed_tokens = seed_token_lists[rng.uniform_index(seed_token_lists.size())];
    embed::SoftSequence x = embed::SoftSequence::one_hot(
        fit_to_length(seed_tokens, sequence_length), vocab.size(), vocab.id(), kInitLogitScale);
    for (double& v : x.logits.data) v += 0.1 * rng.gaussian();

    for (int i = 0; i < schedule.steps; ++i) {
      x = langevin_step(x, objective, schedule, i, rng);
    }
    embed::EmbeddingVector e = encoder.embed_soft(x);
    out.push_back(GeneratedSample{std::move(x), std::move(e)});
  }
  return out;
}

}  // namespace guardrail::datagen
