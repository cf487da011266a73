#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace esd::metrics {

/// Sentence to fixed-length vector. Implementations must be deterministic.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view sentence) const = 0;
  virtual std::size_t dim() const = 0;
};

/// Averaged word vectors. Each word's vector is drawn once from a standard
/// normal stream seeded by a hash of (seed, word), so any word, seen or not,
/// gets a stable vector and nothing has to be stored. Words are produced by
/// text::tokenize; punctuation tokens are ignored.
class HashedWordEmbedder final : public Embedder {
 public:
  explicit HashedWordEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);

  std::vector<double> embed(std::string_view sentence) const override;
  std::size_t dim() const override { return dim_; }

  std::vector<double> word_vector(std::string_view word) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

std::unique_ptr<Embedder> make_default_embedder();

}  // namespace esd::metrics
