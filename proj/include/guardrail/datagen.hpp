#pragma once

#include <span>
#include <vector>

#include "guardrail/core.hpp"
#include "guardrail/embedding.hpp"
#include "guardrail/lm.hpp"

namespace guardrail::datagen {

// Weights and targets of the composite energy. `references` are the
// embeddings the similarity constraint pulls toward; `lm` scores fluency.
struct EnergyConfig {
  double lambda_sim = 1.0;
  double lambda_flu = 0.1;
  std::vector<embed::EmbeddingVector> references;
  const lm::ScorableLM* lm = nullptr;

  void validate() const;
};

struct LangevinSchedule {
  double eta = 0.05;    // step size
  double sigma0 = 1.0;  // initial noise std
  double decay = 0.98;  // geometric decay per step
  int steps = 200;      // N

  double sigma_at(int step_index) const;
  void validate() const;
};

// Sum of cosine similarities between the soft embedding and each reference.
double similarity(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                  std::span<const embed::EmbeddingVector> references);
Matrix similarity_grad(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                       std::span<const embed::EmbeddingVector> references);

// Sum over positions of -CE(lm next-token distribution, softmax(logits_t));
// always <= 0. Model probabilities are floored at 1e-12 inside the log.
double fluency(const embed::SoftSequence& seq, const lm::ScorableLM& lm);
Matrix fluency_grad(const embed::SoftSequence& seq, const lm::ScorableLM& lm);

// E = -(lambda_sim * similarity + lambda_flu * fluency).
double energy(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
              const EnergyConfig& cfg);
Matrix energy_grad(const embed::ReferenceEncoder& encoder, const embed::SoftSequence& seq,
                   const EnergyConfig& cfg);

// Differentiable objective over soft sequences; lets tests drive the sampler
// with synthetic energies.
class EnergyObjective {
 public:
  virtual ~EnergyObjective() = default;
  virtual double value(const embed::SoftSequence& seq) const = 0;
  virtual Matrix gradient(const embed::SoftSequence& seq) const = 0;
};

class CompositeEnergy final : public EnergyObjective {
 public:
  CompositeEnergy(const embed::ReferenceEncoder& encoder, EnergyConfig cfg)
      : encoder_(&encoder), cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  double value(const embed::SoftSequence& seq) const override {
    return energy(*encoder_, seq, cfg_);
  }
  Matrix gradient(const embed::SoftSequence& seq) const override {
    return energy_grad(*encoder_, seq, cfg_);
  }
  const EnergyConfig& config() const { return cfg_; }

 private:
  const embed::ReferenceEncoder* encoder_;
  EnergyConfig cfg_;
};

// One update x - eta * grad E(x) + Normal(0, sigma(step_index)) per logit.
embed::SoftSequence langevin_step(const embed::SoftSequence& seq, const EnergyObjective& objective,
                                  const LangevinSchedule& schedule, int step_index, Rng& rng);

struct GeneratedSample {
  embed::SoftSequence sequence;
  embed::EmbeddingVector embedding;
};

// Runs `samples` independent annealed-Langevin chains for one harmful
// category. Each chain starts from a noisy near-one-hot encoding of a
// randomly chosen collected example of that category (cycle-padded or
// truncated to `sequence_length`) and is pulled toward the embeddings of all
// collected examples of the category. Soft sequences are never decoded back
// to text; only the final embeddings feed the store.
std::vector<GeneratedSample> generate_category_samples(
    const CategoryTaxonomy& taxonomy, const std::string& category_id,
    std::span<const LabeledExample> collected, const embed::Vocabulary& vocab,
    const embed::ReferenceEncoder& encoder, const EnergyConfig& energy_base,
    const LangevinSchedule& schedule, int samples, int sequence_length,
    std::uint64_t base_seed);

// Logit scale of the noisy one-hot initialization; moderate so softmax
// gradients still flow at step 0.
inline constexpr double kInitLogitScale = 5.0;

}  // namespace guardrail::datagen
