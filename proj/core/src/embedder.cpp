#include "esd/embedder.hpp"

#include <algorithm>
#include <cctype>

#include "esd/error.hpp"
#include "esd/random.hpp"
#include "esd/text.hpp"

namespace esd::metrics {

HashedWordEmbedder::HashedWordEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw InvalidArgument("embedder: dimension must be >= 1");
}

std::vector<double> HashedWordEmbedder::word_vector(std::string_view word) const {
  Rng rng(derive_seed(seed_, fnv1a(word)));
  std::vector<double> v(dim_);
  for (double& x : v) x = normal01(rng);
  return v;
}

std::vector<double> HashedWordEmbedder::embed(std::string_view sentence) const {
  std::vector<double> sum(dim_, 0.0);
  std::size_t n = 0;
  for (const auto& tok : text::tokenize(sentence)) {
    const bool has_alnum = std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
    if (!has_alnum) continue;
    const auto v = word_vector(tok);
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
    ++n;
  }
  if (n > 0) {
    for (double& x : sum) x /= static_cast<double>(n);
  }
  return sum;
}

std::unique_ptr<Embedder> make_default_embedder() { return std::make_unique<HashedWordEmbedder>(64, 0); }

}  // namespace esd::metrics
