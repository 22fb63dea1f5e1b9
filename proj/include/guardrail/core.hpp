#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace guardrail {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed config file or unreadable config source.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value violates a documented bound or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Remote call failed after the retry budget was exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

// A classifier head could not produce a result; callers may degrade.
class HeadUnavailableError : public TransportError {
 public:
  using TransportError::TransportError;
};

// ---------------------------------------------------------------------------
// Small dense math
// ---------------------------------------------------------------------------

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  bool all_finite() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
// Throws ValidationError on a (near-)zero-norm vector.
double cosine(std::span<const double> a, std::span<const double> b);
std::vector<double> softmax(std::span<const double> logits);
bool all_finite(std::span<const double> v);

// ---------------------------------------------------------------------------
// Deterministic seeding and sampling
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

// Stream-id derivation: every stochastic operation draws from
// derive_seed(config seed, "<module>/<operation>/<instance>") so runs are
// reproducible and chains are independent.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view stream_id);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }
  // Uniform in [0, 1).
  double uniform();
  // Standard normal via Box-Muller; sequence fully determined by the seed.
  double gaussian();
  // Uniform in [0, n).
  std::size_t uniform_index(std::size_t n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

struct CategoryDef {
  std::string id;
  std::string name;  // display name; defaults to id
  bool benign = false;
};

class CategoryTaxonomy {
 public:
  // Validates and freezes a category list: unique ids, exactly one benign,
  // at least one harmful category. Order is preserved.
  static CategoryTaxonomy validate(std::vector<CategoryDef> raw);

  std::size_t size() const { return categories_.size(); }
  std::size_t harmful_count() const { return categories_.size() - 1; }
  std::size_t benign_index() const { return benign_index_; }
  bool is_benign(std::size_t idx) const { return idx == benign_index_; }
  const std::string& id(std::size_t idx) const { return categories_[idx].id; }
  const std::string& display_name(std::size_t idx) const { return categories_[idx].name; }
  std::optional<std::size_t> index_of(std::string_view id) const;
  const std::vector<CategoryDef>& categories() const { return categories_; }

 private:
  explicit CategoryTaxonomy(std::vector<CategoryDef> cats, std::size_t benign_idx);

  std::vector<CategoryDef> categories_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t benign_index_ = 0;
};

CategoryTaxonomy validate_taxonomy(std::vector<CategoryDef> raw);

// ---------------------------------------------------------------------------
// Labeled examples
// ---------------------------------------------------------------------------

enum class Origin { collected, generated };

const char* origin_name(Origin o);
Origin origin_from_name(std::string_view s);

struct LabeledExample {
  std::string id;
  std::string text;      // may be empty only for origin == generated
  std::string category;
  Origin origin = Origin::collected;
};

// Checks category membership and the collected-text invariant.
void validate_example(const LabeledExample& ex, const CategoryTaxonomy& taxonomy);

// ---------------------------------------------------------------------------
// Probability vectors
// ---------------------------------------------------------------------------

class ProbabilityVector {
 public:
  // Rejects vectors off the simplex by more than 1e-9.
  static ProbabilityVector checked(std::vector<double> values);
  // Renormalizes a nonnegative vector to sum 1; idempotent.
  static ProbabilityVector normalized(std::vector<double> values);

  const std::vector<double>& values() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }
  std::size_t size() const { return v_.size(); }

 private:
  explicit ProbabilityVector(std::vector<double> v) : v_(std::move(v)) {}
  std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Engine configuration
// ---------------------------------------------------------------------------

struct EngineConfig {
  int k = 8;                      // neighbor count
  double alpha = 0.5;             // fusion weight for the KNN head
  double p0 = 0.5;                // unsafe threshold
  int m = 3;                      // augmentation count
  double lambda_sim = 1.0;        // similarity constraint weight
  double lambda_flu = 0.1;        // fluency constraint weight
  double eta = 0.05;              // Langevin step size
  double sigma0 = 1.0;            // initial noise std
  double decay = 0.98;            // geometric noise decay per step
  int langevin_steps = 200;       // N
  int samples_per_category = 15;  // J
  int sequence_length = 32;       // T
  std::uint64_t rng_seed = 0;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Parses config text (JSON object with per-module sections); empty or
// whitespace-only text yields all defaults. Pure function of the bytes.
EngineConfig parse_config(const std::string& text);

// In-place overrides from GUARDRAIL_<SECTION>_<FIELD> environment variables.
void apply_env_overrides(EngineConfig& cfg);

// parse_config on the file contents, then environment overrides, then
// validation.
EngineConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// Misc file helpers
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace guardrail
