#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "expweaver/errors.hpp"
#include "expweaver/rng.hpp"

// Text-to-vector abstraction. The local embedder is a hashed bag of words:
// fully deterministic across processes and platforms, which is what every
// retrieval test in this repository relies on.

namespace expweaver {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  bool is_zero() const {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }
};

inline bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
  return a.values == b.values;
}

// Cosine similarity; 0.0 by definition when either vector is zero.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw_error(Errc::dimension_mismatch,
                std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(const std::string& text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Hashed bag-of-words embedder: lowercase, split on non-alphanumeric runs,
// FNV-1a 64 each token into one of D buckets, accumulate counts, L2-normalize.
// Empty or whitespace-only text maps to the zero vector.
class LocalEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit LocalEmbedder(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {}

  EmbeddingVector embed(const std::string& text) const override {
    std::vector<double> buckets(dimension_, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
      if (token.empty()) return;
      buckets[fnv1a64(token) % dimension_] += 1.0;
      any = true;
      token.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    if (!any) return EmbeddingVector{std::move(buckets)};
    double norm_sq = 0.0;
    for (double v : buckets) norm_sq += v * v;  // bucket index order, fixed
    double norm = std::sqrt(norm_sq);
    for (double& v : buckets) v /= norm;
    return EmbeddingVector{std::move(buckets)};
  }

  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
};

}  // namespace expweaver
