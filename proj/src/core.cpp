#include "guardrail/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace guardrail {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Math
// ---------------------------------------------------------------------------

bool Matrix::all_finite() const { return guardrail::all_finite(data); }

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < 1e-12 || nb < 1e-12) {
    throw ValidationError("cosine: zero-norm vector");
  }
  return dot(a, b) / (na * nb);
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view stream_id) {
  return splitmix64(base_seed ^ splitmix64(fnv1a64(stream_id)));
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw ValidationError("uniform_index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

CategoryTaxonomy::CategoryTaxonomy(std::vector<CategoryDef> cats, std::size_t benign_idx)
    : categories_(std::move(cats)), benign_index_(benign_idx) {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    index_.emplace(categories_[i].id, i);
  }
}

CategoryTaxonomy CategoryTaxonomy::validate(std::vector<CategoryDef> raw) {
  if (raw.empty()) throw ValidationError("taxonomy: empty category list");
  std::size_t benign_count = 0;
  std::size_t benign_idx = 0;
  std::unordered_map<std::string, int> seen;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& c = raw[i];
    if (c.id.empty()) throw ValidationError("taxonomy: empty category id");
    if (++seen[c.id] > 1) throw ValidationError("taxonomy: duplicate category id '" + c.id + "'");
    if (c.name.empty()) c.name = c.id;
    if (c.benign) {
      ++benign_count;
      benign_idx = i;
    }
  }
  if (benign_count == 0) throw ValidationError("taxonomy: no benign category flagged");
  if (benign_count > 1) throw ValidationError("taxonomy: multiple benign categories flagged");
  if (raw.size() < 2) throw ValidationError("taxonomy: at least one harmful category required");
  return CategoryTaxonomy(std::move(raw), benign_idx);
}

std::optional<std::size_t> CategoryTaxonomy::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CategoryTaxonomy validate_taxonomy(std::vector<CategoryDef> raw) {
  return CategoryTaxonomy::validate(std::move(raw));
}

const char* origin_name(Origin o) {
  return o == Origin::collected ? "collected" : "generated";
}

Origin origin_from_name(std::string_view s) {
  if (s == "collected") return Origin::collected;
  if (s == "generated") return Origin::generated;
  throw ValidationError("unknown origin '" + std::string(s) + "'");
}

void validate_example(const LabeledExample& ex, const CategoryTaxonomy& taxonomy) {
  if (ex.id.empty()) throw ValidationError("example: empty id");
  if (!taxonomy.index_of(ex.category)) {
    throw ValidationError("example '" + ex.id + "': unknown category '" + ex.category + "'");
  }
  if (ex.origin == Origin::collected && ex.text.empty()) {
    throw ValidationError("example '" + ex.id + "': collected example with empty text");
  }
}

// ---------------------------------------------------------------------------
// Probability vectors
// ---------------------------------------------------------------------------

namespace {
constexpr double kSimplexTolerance = 1e-9;
}

ProbabilityVector ProbabilityVector::checked(std::vector<double> values) {
  if (values.empty()) throw ValidationError("probability vector: empty");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < -kSimplexTolerance || v > 1.0 + kSimplexTolerance) {
      throw ValidationError("probability vector: entry outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw ValidationError("probability vector: entries sum to " + std::to_string(sum));
  }
  for (double& v : values) v = std::clamp(v, 0.0, 1.0);
  return ProbabilityVector(std::move(values));
}

ProbabilityVector ProbabilityVector::normalized(std::vector<double> values) {
  if (values.empty()) throw ValidationError("probability vector: empty");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("probability vector: negative or non-finite entry");
    }
    sum += v;
  }
  if (sum <= 0.0) throw ValidationError("probability vector: zero mass");
  for (double& v : values) v /= sum;
  return ProbabilityVector(std::move(values));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

struct FieldSpec {
  const char* section;
  const char* field;
  enum Kind { kInt, kDouble, kSeed } kind;
};

// Section/field layout of the config tree; also defines the
// GUARDRAIL_<SECTION>_<FIELD> environment override names.
constexpr FieldSpec kFields[] = {
    {"core", "rng_seed", FieldSpec::kSeed},
    {"knn", "k", FieldSpec::kInt},
    {"pipeline", "alpha", FieldSpec::kDouble},
    {"pipeline", "p0", FieldSpec::kDouble},
    {"pipeline", "m", FieldSpec::kInt},
    {"datagen", "lambda_sim", FieldSpec::kDouble},
    {"datagen", "lambda_flu", FieldSpec::kDouble},
    {"datagen", "eta", FieldSpec::kDouble},
    {"datagen", "sigma0", FieldSpec::kDouble},
    {"datagen", "decay", FieldSpec::kDouble},
    {"datagen", "steps", FieldSpec::kInt},
    {"datagen", "samples_per_category", FieldSpec::kInt},
    {"datagen", "sequence_length", FieldSpec::kInt},
};

void assign_field(EngineConfig& cfg, const FieldSpec& spec, const json& value) {
  const std::string where = std::string(spec.section) + "." + spec.field;
  auto want_number = [&] {
    if (!value.is_number()) throw ConfigError("config: " + where + " must be a number");
  };
  auto as_int = [&]() -> int {
    want_number();
    if (!value.is_number_integer()) throw ConfigError("config: " + where + " must be an integer");
    return value.get<int>();
  };
  auto as_double = [&]() -> double {
    want_number();
    return value.get<double>();
  };

  const std::string f = spec.field;
  if (f == "rng_seed") {
    if (value.is_string()) {
      cfg.rng_seed = std::stoull(value.get<std::string>());
    } else if (value.is_number_unsigned() || value.is_number_integer()) {
      cfg.rng_seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError("config: core.rng_seed must be an integer or string");
    }
  } else if (f == "k") {
    cfg.k = as_int();
  } else if (f == "alpha") {
    cfg.alpha = as_double();
  } else if (f == "p0") {
    cfg.p0 = as_double();
  } else if (f == "m") {
    cfg.m = as_int();
  } else if (f == "lambda_sim") {
    cfg.lambda_sim = as_double();
  } else if (f == "lambda_flu") {
    cfg.lambda_flu = as_double();
  } else if (f == "eta") {
    cfg.eta = as_double();
  } else if (f == "sigma0") {
    cfg.sigma0 = as_double();
  } else if (f == "decay") {
    cfg.decay = as_double();
  } else if (f == "steps") {
    cfg.langevin_steps = as_int();
  } else if (f == "samples_per_category") {
    cfg.samples_per_category = as_int();
  } else if (f == "sequence_length") {
    cfg.sequence_length = as_int();
  }
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

void EngineConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ValidationError(std::string("config: \"") + field + "\" " + why);
  };
  if (k < 1) fail("k", "must be >= 1");
  if (alpha < 0.0 || alpha > 1.0) fail("alpha", "must be in [0, 1]");
  if (p0 < 0.0 || p0 > 1.0) fail("p0", "must be in [0, 1]");
  if (m < 0) fail("m", "must be >= 0");
  if (lambda_sim < 0.0) fail("lambda_sim", "must be >= 0");
  if (lambda_flu < 0.0) fail("lambda_flu", "must be >= 0");
  if (!(eta > 0.0)) fail("eta", "must be > 0");
  if (sigma0 < 0.0) fail("sigma0", "must be >= 0");
  if (decay <= 0.0 || decay > 1.0) fail("decay", "must be in (0, 1]");
  if (langevin_steps < 0) fail("steps", "must be >= 0");
  if (samples_per_category < 0) fail("samples_per_category", "must be >= 0");
  if (sequence_length < 1) fail("sequence_length", "must be >= 1");
}

EngineConfig parse_config(const std::string& text) {
  EngineConfig cfg;
  const bool blank = std::all_of(text.begin(), text.end(),
                                 [](unsigned char c) { return std::isspace(c); });
  if (blank) return cfg;

  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "at line L, column C" in the message.
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object of sections");

  for (const auto& [section, body] : root.items()) {
    bool known_section = false;
    for (const auto& spec : kFields) {
      if (section == spec.section) known_section = true;
    }
    if (!known_section) throw ConfigError("config: unknown section \"" + section + "\"");
    if (!body.is_object()) throw ConfigError("config: section \"" + section + "\" must be an object");
    for (const auto& [field, value] : body.items()) {
      const FieldSpec* match = nullptr;
      for (const auto& spec : kFields) {
        if (section == spec.section && field == spec.field) match = &spec;
      }
      if (!match) {
        throw ConfigError("config: unknown field \"" + section + "." + field + "\"");
      }
      assign_field(cfg, *match, value);
    }
  }
  return cfg;
}

void apply_env_overrides(EngineConfig& cfg) {
  for (const auto& spec : kFields) {
    const std::string name = "GUARDRAIL_" + upper(spec.section) + "_" + upper(spec.field);
    const char* raw = std::getenv(name.c_str());
    if (!raw) continue;
    try {
      json value;
      if (spec.kind == FieldSpec::kDouble) {
        value = std::stod(raw);
      } else if (spec.kind == FieldSpec::kInt) {
        value = std::stoi(raw);
      } else {
        value = std::string(raw);
      }
      assign_field(cfg, spec, value);
    } catch (const std::exception&) {
      throw ConfigError("config: environment override " + name + " is not a valid number");
    }
  }
}

EngineConfig load_config(const std::string& path) {
  EngineConfig cfg = parse_config(read_file(path));
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace guardrail
