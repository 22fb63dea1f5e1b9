#include "guardrail/embedding.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace guardrail::embed {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::string id)
    : tokens_(std::move(tokens)), id_(std::move(id)) {
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    index_.emplace(tokens_[i], i);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty()) throw ValidationError("vocabulary: empty token list");
  std::string joined;
  for (const auto& t : tokens) {
    if (t.empty()) throw ValidationError("vocabulary: empty token");
    joined += t;
    joined += '\n';
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(joined)));
  std::string id = "vocab:" + std::string(buf) + ":" + std::to_string(tokens.size());
  return Vocabulary(std::move(tokens), std::move(id));
}

Vocabulary Vocabulary::from_file(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  if (tokens.empty()) throw ValidationError("vocabulary file has no tokens: " + path);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::builtin(int size) {
  if (size < 1) throw ValidationError("vocabulary: size must be >= 1");
  std::vector<std::string> tokens;
  tokens.reserve(size);
  for (int i = 0; i < size; ++i) tokens.push_back("t" + std::to_string(i));
  return Vocabulary(std::move(tokens), "builtin:" + std::to_string(size));
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      const std::string word(text.substr(i, j - i));
      auto it = index_.find(word);
      if (it != index_.end()) {
        ids.push_back(it->second);
      } else {
        // Unknown words hash into the fixed id range.
        ids.push_back(static_cast<int>(fnv1a64(word) % tokens_.size()));
      }
    }
    i = j;
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> token_ids) const {
  std::string out;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= size()) {
      throw ValidationError("detokenize: token id " + std::to_string(id) + " out of range");
    }
    if (i) out += ' ';
    out += tokens_[id];
  }
  return out;
}

// ---------------------------------------------------------------------------
// SoftSequence
// ---------------------------------------------------------------------------

SoftSequence SoftSequence::one_hot(std::span<const int> tokens, int vocab_size,
                                   std::string vocabulary_id, double scale) {
  if (tokens.empty()) throw ValidationError("soft sequence: empty token list");
  SoftSequence seq;
  seq.logits = Matrix(static_cast<int>(tokens.size()), vocab_size, 0.0);
  seq.vocabulary_id = std::move(vocabulary_id);
  for (int t = 0; t < seq.logits.rows; ++t) {
    const int id = tokens[t];
    if (id < 0 || id >= vocab_size) {
      throw ValidationError("soft sequence: token id " + std::to_string(id) + " out of range");
    }
    seq.logits.at(t, id) = scale;
  }
  return seq;
}

void SoftSequence::validate() const {
  if (logits.rows < 1) throw ValidationError("soft sequence: length must be >= 1");
  if (logits.cols < 1) throw ValidationError("soft sequence: empty vocabulary");
  if (!logits.all_finite()) throw ValidationError("soft sequence: non-finite logit");
}

// ---------------------------------------------------------------------------
// ReferenceEncoder
// ---------------------------------------------------------------------------

ReferenceEncoder::ReferenceEncoder(const Vocabulary& vocab, int dim, std::uint64_t seed)
    : dim_(dim), vocabulary_id_(vocab.id()) {
  if (dim < 1) throw ValidationError("encoder: dim must be >= 1");
  table_ = Matrix(vocab.size(), dim);
  Rng rng(derive_seed(seed, "embedding/reference-table"));
  for (double& x : table_.data) x = rng.gaussian();
  for (int v = 0; v < table_.rows; ++v) {
    if (l2_norm(table_.row(v)) < 1e-9) table_.at(v, 0) = 1.0;  // no zero rows
  }
  encoder_id_ = "ref-mean-v1:" + vocabulary_id_ + ":d" + std::to_string(dim) +
                ":s" + std::to_string(seed);
}

EmbeddingVector ReferenceEncoder::embed_text(std::span<const int> tokens) const {
  if (tokens.empty()) throw ValidationError("embed_text: empty token sequence");
  std::vector<double> mean(dim_, 0.0);
  for (int id : tokens) {
    if (id < 0 || id >= table_.rows) {
      throw ValidationError("embed_text: token id " + std::to_string(id) + " out of vocabulary");
    }
    const auto row = table_.row(id);
    for (int j = 0; j < dim_; ++j) mean[j] += row[j];
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  const double n = l2_norm(mean);
  if (n < 1e-12) throw ValidationError("embed_text: degenerate (zero) embedding");
  for (double& x : mean) x /= n;
  return EmbeddingVector{std::move(mean), encoder_id_};
}

EmbeddingVector ReferenceEncoder::embed_soft(const SoftSequence& seq) const {
  seq.validate();
  if (seq.vocabulary_id != vocabulary_id_) {
    throw ValidationError("embed_soft: vocabulary mismatch (" + seq.vocabulary_id +
                          " vs " + vocabulary_id_ + ")");
  }
  if (seq.vocab_size() != table_.rows) {
    throw ValidationError("embed_soft: vocabulary size mismatch");
  }
  const int T = seq.length();
  std::vector<double> mean(dim_, 0.0);
  for (int t = 0; t < T; ++t) {
    const std::vector<double> p = softmax(seq.logits.row(t));
    for (int v = 0; v < table_.rows; ++v) {
      if (p[v] == 0.0) continue;
      const auto row = table_.row(v);
      for (int j = 0; j < dim_; ++j) mean[j] += p[v] * row[j];
    }
  }
  for (double& x : mean) x /= static_cast<double>(T);
  const double n = l2_norm(mean);
  if (n < 1e-12) throw ValidationError("embed_soft: degenerate (zero) embedding");
  for (double& x : mean) x /= n;
  return EmbeddingVector{std::move(mean), encoder_id_};
}

Matrix ReferenceEncoder::embed_soft_grad(const SoftSequence& seq,
                                         std::span<const double> cotangent) const {
  seq.validate();
  if (seq.vocabulary_id != vocabulary_id_) {
    throw ValidationError("embed_soft_grad: vocabulary mismatch");
  }
  if (static_cast<int>(cotangent.size()) != dim_) {
    throw ValidationError("embed_soft_grad: cotangent dimension mismatch");
  }
  const int T = seq.length();
  const int V = table_.rows;

  // Forward pass: unnormalized mean u and its norm.
  std::vector<std::vector<double>> probs(T);
  std::vector<double> u(dim_, 0.0);
  for (int t = 0; t < T; ++t) {
    probs[t] = softmax(seq.logits.row(t));
    for (int v = 0; v < V; ++v) {
      const auto row = table_.row(v);
      for (int j = 0; j < dim_; ++j) u[j] += probs[t][v] * row[j];
    }
  }
  for (double& x : u) x /= static_cast<double>(T);
  const double n = l2_norm(u);
  if (n < 1e-12) throw ValidationError("embed_soft_grad: degenerate (zero) embedding");
  std::vector<double> z(u);
  for (double& x : z) x /= n;

  // d(c.z)/du = (c - (c.z) z) / ||u||
  const double cz = dot(cotangent, z);
  std::vector<double> gu(dim_);
  for (int j = 0; j < dim_; ++j) gu[j] = (cotangent[j] - cz * z[j]) / n;

  Matrix grad(T, V, 0.0);
  for (int t = 0; t < T; ++t) {
    // d(c.z)/dP_t(v) = (1/T) e_v . gu, then backprop through softmax.
    std::vector<double> gp(V);
    for (int v = 0; v < V; ++v) gp[v] = dot(table_.row(v), gu) / static_cast<double>(T);
    const double inner = dot(probs[t], gp);
    for (int v = 0; v < V; ++v) grad.at(t, v) = probs[t][v] * (gp[v] - inner);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Remote encoder
// ---------------------------------------------------------------------------

EmbeddingVector remote_embed(const std::string& text, const RemoteEncoderEndpoint& endpoint) {
  if (text.empty()) throw ValidationError("remote_embed: empty text");
  if (endpoint.dim < 1) throw ValidationError("remote_embed: endpoint must declare dim >= 1");

  json request = {{"text", text}};
  const std::string body = request.dump();

  std::string last_error;
  int backoff_ms = endpoint.initial_backoff_ms;
  for (int attempt = 0; attempt < endpoint.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    httplib::Client client(endpoint.base_url);
    client.set_connection_timeout(0, endpoint.timeout_ms * 1000);
    client.set_read_timeout(0, endpoint.timeout_ms * 1000);
    auto res = client.Post(endpoint.path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error: status " + std::to_string(res->status);
      continue;  // retryable
    }
    if (res->status != 200) {
      throw TransportError("remote_embed: status " + std::to_string(res->status));
    }

    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("remote_embed: malformed response: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("embedding") || !reply["embedding"].is_array()) {
      throw ValidationError("remote_embed: malformed response: missing embedding array");
    }
    std::vector<double> values;
    values.reserve(reply["embedding"].size());
    for (const auto& x : reply["embedding"]) {
      if (!x.is_number()) throw ValidationError("remote_embed: malformed response: non-numeric embedding entry");
      values.push_back(x.get<double>());
    }
    const int declared = reply.value("dim", static_cast<int>(values.size()));
    if (declared != static_cast<int>(values.size()) ||
        static_cast<int>(values.size()) != endpoint.dim) {
      throw ValidationError("remote_embed: dimension mismatch: endpoint declares " +
                            std::to_string(endpoint.dim) + ", response carries " +
                            std::to_string(values.size()));
    }
    std::string encoder_id = reply.value("encoder_id", std::string{});
    if (encoder_id.empty()) {
      throw ValidationError("remote_embed: malformed response: missing encoder_id");
    }
    if (!endpoint.encoder_id.empty() && encoder_id != endpoint.encoder_id) {
      throw ValidationError("remote_embed: encoder_id mismatch: expected " +
                            endpoint.encoder_id + ", got " + encoder_id);
    }
    if (!all_finite(values)) {
      throw ValidationError("remote_embed: malformed response: non-finite embedding entry");
    }
    return EmbeddingVector{std::move(values), std::move(encoder_id)};
  }
  throw TransportError("remote_embed: " + std::to_string(endpoint.max_attempts) +
                       " attempts failed; last: " + last_error);
}

RemoteTextEncoder::RemoteTextEncoder(RemoteEncoderEndpoint endpoint)
    : endpoint_(std::move(endpoint)) {
  if (endpoint_.dim < 1) throw ValidationError("remote encoder: dim must be declared");
  if (endpoint_.encoder_id.empty()) {
    throw ValidationError("remote encoder: encoder_id must be declared");
  }
}

EmbeddingVector RemoteTextEncoder::embed(const std::string& text) const {
  return remote_embed(text, endpoint_);
}

}  // namespace guardrail::embed
