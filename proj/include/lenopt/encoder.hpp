#pragma once

// Toy post-LN transformer encoder with a span head and Drop-and-Restore
// length-adaptive inference.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lenopt/tensor.hpp"

namespace lenopt::model {

using ad::Tensor;

struct EncoderArch {
  int num_layers = 6;
  int hidden = 768;
  int ff = 3072;
  int heads = 12;
  int vocab = 30522;
  int max_seq = 384;

  int head_dim() const { return hidden / heads; }
  /// Throws ParameterError when a field is out of range or heads does not divide hidden.
  void validate() const;

  bool operator==(const EncoderArch&) const = default;
};

struct LayerWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gain, ln2_bias;
};

/// Weights of the encoder. Copies are deep: a copied model never shares
/// parameter storage with its source.
class EncoderModel {
 public:
  explicit EncoderModel(const EncoderArch& arch);  // all-zero weights, unit gains
  EncoderModel(const EncoderModel& other);
  EncoderModel& operator=(const EncoderModel& other);
  EncoderModel(EncoderModel&&) noexcept = default;
  EncoderModel& operator=(EncoderModel&&) noexcept = default;

  static EncoderModel zeros(const EncoderArch& arch);
  static EncoderModel random(const EncoderArch& arch, std::uint64_t seed);

  const EncoderArch& arch() const { return arch_; }

  /// Stable-ordered (name, handle) list; handles alias the model's storage.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_requires_grad(bool flag);
  void zero_grad();

  Tensor token_embedding, position_embedding;
  Tensor embedding_ln_gain, embedding_ln_bias;
  std::vector<LayerWeights> layers;
  Tensor final_ln_gain, final_ln_bias;
  Tensor head_w, head_b;

 private:
  EncoderArch arch_;
};

/// Retained sequence length per encoder layer.
struct LengthConfig {
  std::vector<int> lengths;

  static LengthConfig full(int num_layers, int length);
  /// "384-300-250" -> {384, 300, 250}; throws ParseError on bad input.
  static LengthConfig parse(const std::string& text);
  std::string str() const;
  std::size_t size() const { return lengths.size(); }
  int operator[](std::size_t i) const { return lengths[i]; }

  bool operator==(const LengthConfig&) const = default;
};

/// Names every violated inequality ("x1 > x0", "x3 < 1", ...). Empty when valid.
std::vector<std::string> length_config_violations(const LengthConfig& config,
                                                  const EncoderArch& arch);
/// Throws ConstraintError listing the violations.
void check_length_config(const LengthConfig& config, const EncoderArch& arch);

struct ForwardTrace {
  std::vector<Tensor> hidden;                  // per layer, kept rows × hidden
  std::vector<std::vector<Tensor>> attention;  // per layer, per head; empty when the layer was skipped
  Tensor logits;                               // input length × 2 (start, end)
  std::vector<std::vector<std::size_t>> kept;  // per layer, original positions in ascending order
};

struct ForwardOptions {
  std::optional<LengthConfig> config;
  /// Per-layer skip flags (LayerDrop). Empty means no layer is skipped.
  std::vector<bool> skip_layers;
};

ForwardTrace forward_full(const EncoderModel& model, std::span<const int> tokens);
ForwardTrace forward_adaptive(const EncoderModel& model, std::span<const int> tokens,
                              const LengthConfig& config);
ForwardTrace forward(const EncoderModel& model, std::span<const int> tokens,
                     const ForwardOptions& options);

/// Total attention received per token: score[j] = sum over heads h and rows i of attn[h](i, j).
std::vector<double> significance_scores(std::span<const Tensor> attention);

/// Positions (indices into `scores`) of the `keep` highest-scoring tokens, in
/// ascending order. Index 0 is always retained; ties go to the lower index.
std::vector<std::size_t> select_tokens(std::span<const double> scores, std::size_t keep);

/// 64-bit FNV-1a over the raw bytes of the values; used for golden traces.
std::uint64_t checksum(const Tensor& t);

}  // namespace lenopt::model
