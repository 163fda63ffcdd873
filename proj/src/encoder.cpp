#include "lenopt/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "lenopt/errors.hpp"

namespace lenopt::model {

namespace {

using ad::Shape;

Tensor param(Shape shape, double fill = 0.0) { return Tensor(std::move(shape), fill, true); }

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

template <typename Fn>
void for_each_tensor(EncoderModel& m, Fn&& fn) {
  fn(m.token_embedding);
  fn(m.position_embedding);
  fn(m.embedding_ln_gain);
  fn(m.embedding_ln_bias);
  for (auto& l : m.layers) {
    for (Tensor* t : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gain,
                      &l.ln1_bias, &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gain, &l.ln2_bias})
      fn(*t);
  }
  fn(m.final_ln_gain);
  fn(m.final_ln_bias);
  fn(m.head_w);
  fn(m.head_b);
}

void check_tokens(const EncoderArch& arch, std::span<const int> tokens) {
  if (tokens.empty()) throw LengthError("empty token sequence");
  if (tokens.size() > sz(arch.max_seq))
    throw LengthError("input of " + std::to_string(tokens.size()) + " tokens exceeds max_seq " +
                      std::to_string(arch.max_seq));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 0 || tokens[i] >= arch.vocab)
      throw VocabularyError("token id " + std::to_string(tokens[i]) + " at position " +
                            std::to_string(i) + " outside vocabulary of " +
                            std::to_string(arch.vocab));
}

Tensor embed(const EncoderModel& m, std::span<const int> tokens) {
  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  std::vector<std::size_t> pos(tokens.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  Tensor x = ad::add(ad::gather_rows(m.token_embedding, ids), ad::gather_rows(m.position_embedding, pos));
  return ad::layer_norm(x, m.embedding_ln_gain, m.embedding_ln_bias);
}

struct LayerResult {
  Tensor hidden;
  std::vector<Tensor> attention;
};

LayerResult apply_layer(const LayerWeights& w, const Tensor& x, int heads) {
  const std::size_t hidden = x.cols();
  const std::size_t d = hidden / sz(heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor q = ad::add_rowwise(ad::matmul(x, w.wq), w.bq);
  Tensor k = ad::add_rowwise(ad::matmul(x, w.wk), w.bk);
  Tensor v = ad::add_rowwise(ad::matmul(x, w.wv), w.bv);

  LayerResult out;
  std::vector<Tensor> contexts;
  for (std::size_t h = 0; h < sz(heads); ++h) {
    Tensor qh = heads == 1 ? q : ad::slice_cols(q, h * d, (h + 1) * d);
    Tensor kh = heads == 1 ? k : ad::slice_cols(k, h * d, (h + 1) * d);
    Tensor vh = heads == 1 ? v : ad::slice_cols(v, h * d, (h + 1) * d);
    Tensor probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_d));
    contexts.push_back(ad::matmul(probs, vh));
    out.attention.push_back(std::move(probs));
  }
  Tensor context = heads == 1 ? contexts.front() : ad::concat_cols(contexts);
  Tensor attn_out = ad::add_rowwise(ad::matmul(context, w.wo), w.bo);
  Tensor h1 = ad::layer_norm(ad::add(x, attn_out), w.ln1_gain, w.ln1_bias);
  Tensor inner = ad::gelu(ad::add_rowwise(ad::matmul(h1, w.w1), w.b1));
  Tensor ffn = ad::add_rowwise(ad::matmul(inner, w.w2), w.b2);
  out.hidden = ad::layer_norm(ad::add(h1, ffn), w.ln2_gain, w.ln2_bias);
  return out;
}

Tensor span_head(const EncoderModel& m, const Tensor& x) {
  Tensor normed = ad::layer_norm(x, m.final_ln_gain, m.final_ln_bias);
  return ad::add_rowwise(ad::matmul(normed, m.head_w), m.head_b);
}

// Single-query attention of the position-0 token over the current rows; ranks
// tokens before any layer attention exists.
std::vector<double> preliminary_scores(const Tensor& x) {
  const std::size_t zero = 0;
  Tensor first = ad::gather_rows(x.detach(), std::span<const std::size_t>(&zero, 1));
  Tensor probs = ad::softmax_rows(
      ad::scale(ad::matmul_nt(first, x.detach()), 1.0 / std::sqrt(static_cast<double>(x.cols()))));
  return {probs.data().begin(), probs.data().end()};
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

// ---- arch / model ----------------------------------------------------------

void EncoderArch::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ParameterError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(num_layers, "num_layers");
  positive(hidden, "hidden");
  positive(ff, "ff");
  positive(heads, "heads");
  positive(vocab, "vocab");
  if (hidden % heads != 0)
    throw ParameterError("heads (" + std::to_string(heads) + ") must divide hidden (" +
                         std::to_string(hidden) + ")");
  if (max_seq < 2) throw ParameterError("max_seq must be at least 2");
}

EncoderModel::EncoderModel(const EncoderArch& arch) : arch_(arch) {
  arch_.validate();
  const std::size_t h = sz(arch.hidden), f = sz(arch.ff);
  token_embedding = param({sz(arch.vocab), h});
  position_embedding = param({sz(arch.max_seq), h});
  embedding_ln_gain = param({h}, 1.0);
  embedding_ln_bias = param({h});
  layers.resize(sz(arch.num_layers));
  for (auto& l : layers) {
    l.wq = param({h, h});
    l.bq = param({h});
    l.wk = param({h, h});
    l.bk = param({h});
    l.wv = param({h, h});
    l.bv = param({h});
    l.wo = param({h, h});
    l.bo = param({h});
    l.ln1_gain = param({h}, 1.0);
    l.ln1_bias = param({h});
    l.w1 = param({h, f});
    l.b1 = param({f});
    l.w2 = param({f, h});
    l.b2 = param({h});
    l.ln2_gain = param({h}, 1.0);
    l.ln2_bias = param({h});
  }
  final_ln_gain = param({h}, 1.0);
  final_ln_bias = param({h});
  head_w = param({h, 2});
  head_b = param({2});
}

EncoderModel::EncoderModel(const EncoderModel& other) : EncoderModel(other.arch_) {
  *this = other;
}

EncoderModel& EncoderModel::operator=(const EncoderModel& other) {
  if (this == &other) return *this;
  if (!(arch_ == other.arch_)) {
    EncoderModel fresh(other.arch_);
    *this = std::move(fresh);
  }
  auto src = other.named_parameters();
  auto dst = named_parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto from = src[i].second.data();
    auto to = dst[i].second.mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
    dst[i].second.set_requires_grad(src[i].second.requires_grad());
    dst[i].second.zero_grad();
  }
  return *this;
}

EncoderModel EncoderModel::zeros(const EncoderArch& arch) {
  EncoderModel m(arch);
  for_each_tensor(m, [](Tensor& t) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  });
  return m;
}

EncoderModel EncoderModel::random(const EncoderArch& arch, std::uint64_t seed) {
  EncoderModel m(arch);
  std::mt19937_64 rng(seed);
  auto fill_normal = [&rng](Tensor& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.mutable_data()) v = dist(rng);
  };
  const double h = arch.hidden;
  const double f = arch.ff;
  fill_normal(m.token_embedding, 1.0);
  fill_normal(m.position_embedding, 1.0);
  for (auto& l : m.layers) {
    fill_normal(l.wq, 1.0 / std::sqrt(h));
    fill_normal(l.wk, 1.0 / std::sqrt(h));
    fill_normal(l.wv, 1.0 / std::sqrt(h));
    fill_normal(l.wo, 1.0 / std::sqrt(h));
    fill_normal(l.w1, 1.0 / std::sqrt(h));
    fill_normal(l.w2, 1.0 / std::sqrt(f));
  }
  fill_normal(m.head_w, 1.0 / std::sqrt(h));
  return m;
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embeddings.token", token_embedding);
  out.emplace_back("embeddings.position", position_embedding);
  out.emplace_back("embeddings.ln.gain", embedding_ln_gain);
  out.emplace_back("embeddings.ln.bias", embedding_ln_bias);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "attn.wq", l.wq);
    out.emplace_back(p + "attn.bq", l.bq);
    out.emplace_back(p + "attn.wk", l.wk);
    out.emplace_back(p + "attn.bk", l.bk);
    out.emplace_back(p + "attn.wv", l.wv);
    out.emplace_back(p + "attn.bv", l.bv);
    out.emplace_back(p + "attn.wo", l.wo);
    out.emplace_back(p + "attn.bo", l.bo);
    out.emplace_back(p + "ln1.gain", l.ln1_gain);
    out.emplace_back(p + "ln1.bias", l.ln1_bias);
    out.emplace_back(p + "ffn.w1", l.w1);
    out.emplace_back(p + "ffn.b1", l.b1);
    out.emplace_back(p + "ffn.w2", l.w2);
    out.emplace_back(p + "ffn.b2", l.b2);
    out.emplace_back(p + "ln2.gain", l.ln2_gain);
    out.emplace_back(p + "ln2.bias", l.ln2_bias);
  }
  out.emplace_back("final.ln.gain", final_ln_gain);
  out.emplace_back("final.ln.bias", final_ln_bias);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

void EncoderModel::set_requires_grad(bool flag) {
  for_each_tensor(*this, [flag](Tensor& t) { t.set_requires_grad(flag); });
}

void EncoderModel::zero_grad() {
  for_each_tensor(*this, [](Tensor& t) { t.zero_grad(); });
}

// ---- length configs --------------------------------------------------------

LengthConfig LengthConfig::full(int num_layers, int length) {
  return LengthConfig{std::vector<int>(sz(num_layers), length)};
}

LengthConfig LengthConfig::parse(const std::string& text) {
  LengthConfig cfg;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = pos;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) throw ParseError("expected a positive integer length", pos);
    if (end - pos > 9) throw ParseError("length too large", pos);
    cfg.lengths.push_back(std::stoi(text.substr(pos, end - pos)));
    if (end == text.size()) break;
    if (text[end] != '-') throw ParseError("expected '-' between lengths", end);
    pos = end + 1;
  }
  return cfg;
}

std::string LengthConfig::str() const {
  std::string out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(lengths[i]);
  }
  return out;
}

std::vector<std::string> length_config_violations(const LengthConfig& config,
                                                  const EncoderArch& arch) {
  std::vector<std::string> out;
  if (config.size() != sz(arch.num_layers)) {
    out.push_back("expected " + std::to_string(arch.num_layers) + " lengths, got " +
                  std::to_string(config.size()));
    return out;
  }
  for (std::size_t i = 0; i < config.size(); ++i) {
    const std::string x = "x" + std::to_string(i);
    if (config[i] < 1) out.push_back(x + " < 1");
    if (config[i] > arch.max_seq) out.push_back(x + " > max_seq " + std::to_string(arch.max_seq));
    if (i > 0 && config[i] > config[i - 1]) out.push_back(x + " > x" + std::to_string(i - 1));
  }
  return out;
}

void check_length_config(const LengthConfig& config, const EncoderArch& arch) {
  auto violations = length_config_violations(config, arch);
  if (violations.empty()) return;
  std::string msg = "invalid length configuration " + config.str() + ":";
  for (const auto& v : violations) msg += " " + v + ";";
  msg.pop_back();
  throw ConstraintError(msg);
}

// ---- forward passes --------------------------------------------------------

std::vector<double> significance_scores(std::span<const Tensor> attention) {
  if (attention.empty()) throw DimensionError("significance_scores: no attention heads");
  const std::size_t n = attention.front().cols();
  std::vector<double> score(n, 0.0);
  for (const Tensor& a : attention) {
    if (a.dim() != 2 || a.rows() != n || a.cols() != n)
      throw DimensionError("significance_scores: attention must be square " + std::to_string(n) +
                           "x" + std::to_string(n) + ", got " + ad::shape_str(a.shape()));
    auto d = a.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) score[j] += d[i * n + j];
  }
  return score;
}

std::vector<std::size_t> select_tokens(std::span<const double> scores, std::size_t keep) {
  const std::size_t n = scores.size();
  if (keep == 0 || keep > n)
    throw ParameterError("cannot keep " + std::to_string(keep) + " of " + std::to_string(n) +
                         " tokens");
  std::vector<std::size_t> order(n > 0 ? n - 1 : 0);
  std::iota(order.begin(), order.end(), std::size_t{1});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept{0};
  kept.insert(kept.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1));
  std::sort(kept.begin(), kept.end());
  return kept;
}

ForwardTrace forward_full(const EncoderModel& model, std::span<const int> tokens) {
  const auto& arch = model.arch();
  check_tokens(arch, tokens);
  ForwardTrace trace;
  std::vector<std::size_t> identity(tokens.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  Tensor x = embed(model, tokens);
  for (const auto& layer : model.layers) {
    LayerResult r = apply_layer(layer, x, arch.heads);
    x = r.hidden;
    trace.hidden.push_back(r.hidden);
    trace.attention.push_back(std::move(r.attention));
    trace.kept.push_back(identity);
  }
  trace.logits = span_head(model, x);
  return trace;
}

ForwardTrace forward(const EncoderModel& model, std::span<const int> tokens,
                     const ForwardOptions& options) {
  const auto& arch = model.arch();
  check_tokens(arch, tokens);
  if (options.config) check_length_config(*options.config, arch);
  if (!options.skip_layers.empty() && options.skip_layers.size() != sz(arch.num_layers))
    throw ParameterError("layer mask has " + std::to_string(options.skip_layers.size()) +
                         " entries for " + std::to_string(arch.num_layers) + " layers");

  const std::size_t n = tokens.size();
  ForwardTrace trace;
  std::vector<std::size_t> alive(n);
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  std::vector<double> scores;  // aligned with `alive`; empty until some attention ranks tokens
  std::vector<Tensor> parts;
  std::vector<std::vector<std::size_t>> destinations;

  Tensor x = embed(model, tokens);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (options.config) {
      const std::size_t target = std::min(sz((*options.config)[i]), n);
      if (target < alive.size()) {
        if (scores.empty()) scores = preliminary_scores(x);
        std::vector<std::size_t> keep = select_tokens(scores, target);
        std::vector<std::size_t> drop;
        drop.reserve(alive.size() - target);
        for (std::size_t j = 0, k = 0; j < alive.size(); ++j) {
          if (k < keep.size() && keep[k] == j) {
            ++k;
          } else {
            drop.push_back(j);
          }
        }
        parts.push_back(ad::gather_rows(x, drop));
        destinations.push_back(pick(alive, drop));
        x = ad::gather_rows(x, keep);
        alive = pick(alive, keep);
        scores = pick(scores, keep);
      }
    }
    trace.kept.push_back(alive);
    if (!options.skip_layers.empty() && options.skip_layers[i]) {
      trace.hidden.push_back(x);
      trace.attention.emplace_back();
      continue;
    }
    LayerResult r = apply_layer(model.layers[i], x, arch.heads);
    x = r.hidden;
    scores = significance_scores(r.attention);
    trace.hidden.push_back(r.hidden);
    trace.attention.push_back(std::move(r.attention));
  }

  parts.push_back(x);
  destinations.push_back(alive);
  Tensor restored = ad::scatter_rows(parts, destinations, n);
  trace.logits = span_head(model, restored);
  return trace;
}

ForwardTrace forward_adaptive(const EncoderModel& model, std::span<const int> tokens,
                              const LengthConfig& config) {
  ForwardOptions options;
  options.config = config;
  return forward(model, tokens, options);
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (double v : t.data()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      hash ^= b;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace lenopt::model
