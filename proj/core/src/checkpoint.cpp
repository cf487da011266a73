#include "esd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "esd/error.hpp"

namespace esd::model {
namespace {

constexpr char kMagic[8] = {'E', 'S', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw ParseError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

int small_int(std::int64_t v, const char* what) {
  if (v < 0 || v > (1 << 24)) throw ParseError(std::string("checkpoint: implausible ") + what);
  return static_cast<int>(v);
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  const ModelConfig& c = model.config();
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.i64(c.d_model);
  w.i64(c.n_heads);
  w.i64(c.n_layers);
  w.i64(c.d_ff);
  w.i64(c.max_len);
  w.f64(c.layernorm_eps);
  w.u64(c.seed);
  const auto& toks = c.vocab.tokens();
  w.u64(toks.size());
  for (const auto& t : toks) w.str(t);
  w.u64(model.params().size());
  for (const auto& t : model.params()) {
    w.str(t.name);
    w.u64(static_cast<std::uint64_t>(t.value.rows()));
    w.u64(static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) w.f64(t.value.data()[i]);  // row-major
  }
  return w.take();
}

Model deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw ParseError("checkpoint: bad magic (not an esd checkpoint)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig c;
  c.d_model = small_int(r.i64(), "d_model");
  c.n_heads = small_int(r.i64(), "n_heads");
  c.n_layers = small_int(r.i64(), "n_layers");
  c.d_ff = small_int(r.i64(), "d_ff");
  c.max_len = small_int(r.i64(), "max_len");
  c.layernorm_eps = r.f64();
  c.seed = r.u64();
  const std::uint64_t n_tokens = r.u64();
  if (n_tokens < corpus::Vocabulary::kNumSpecials) throw ParseError("checkpoint: vocabulary too small");
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str());
  const corpus::Vocabulary reserved;
  for (std::size_t i = 0; i < corpus::Vocabulary::kNumSpecials; ++i) {
    if (tokens[i] != reserved.tokens()[i]) throw ParseError("checkpoint: reserved tokens out of order");
  }
  c.vocab = corpus::Vocabulary(
      std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(corpus::Vocabulary::kNumSpecials),
                               tokens.end()));
  ParamSet params;
  const std::uint64_t n_tensors = r.u64();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows > (1u << 24) || cols > (1u << 24)) throw ParseError("checkpoint: implausible tensor shape");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.f64();
    params.add(std::move(name), std::move(m));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return Model(std::move(c), std::move(params));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace esd::model
