#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "letter/tokenizer/codebook.hpp"
#include "letter/tokenizer/mlp.hpp"

namespace letter {

struct RqVaeConfig {
  std::size_t input_dim = 0;  // d_s, taken from the semantic table when 0
  std::size_t latent_dim = 32;
  std::vector<std::size_t> hidden{128, 128};
  Activation activation = Activation::Tanh;
  std::size_t levels = 4;
  std::size_t codebook_size = 256;
  double mu = 0.25;
  double codebook_init_stddev = 0.1;
};

/// One recorded forward pass over a minibatch of semantic vectors.
struct RqVaeForward {
  ad::Var z;                         // encoder output [B x d]
  BatchQuantization quant;           // codes chosen from z's value
  std::vector<ad::Var> code_tables;  // per level, the codebook Parameter on the tape [N x d]
  std::vector<ad::Var> selected;     // per level, e_{c_l} rows [B x d], differentiable w.r.t. codes
  ad::Var zhat;                      // sum of selected rows; gradient reaches the codes
  ad::Var reconstruction;            // decoder(straight_through(z, zhat)) [B x d_s]
  ad::Var recon_loss;                // sum_b ||s_b - shat_b||^2 / B
  ad::Var codebook_loss;             // sum_b sum_l ||sg[r_{l-1}] - e_{c_l}||^2 / B
  ad::Var commitment_loss;           // sum_b sum_l ||r_{l-1} - sg[e_{c_l}]||^2 / B
  ad::Var semantic_loss;             // recon + codebook + mu * commitment
};

class RqVae {
 public:
  RqVae() = default;
  RqVae(const RqVaeConfig& config, SeededRng& rng);

  const RqVaeConfig& config() const noexcept { return config_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  CodebookSet& codebooks() { return codebooks_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  const CodebookSet& codebooks() const { return codebooks_; }

  /// s [B x d_s] -> z [B x d]
  Tensor encode(const Tensor& s) const;
  std::vector<double> encode(std::span<const double> s) const;
  Tensor decode(const Tensor& z) const;
  BatchQuantization quantize(const Tensor& s) const { return quantize_batch(encode(s), codebooks_); }

  /// Records the semantic objective for a minibatch. Residuals are chained
  /// through stop-gradient copies of the codes, so code embeddings are
  /// trained only by the codebook term and the encoder only by the
  /// commitment and reconstruction terms.
  RqVaeForward forward(ad::Tape& tape, const Tensor& s);

  std::vector<ad::Parameter*> parameters();

  void save(const std::filesystem::path& path) const;
  static RqVae load(const std::filesystem::path& path);

 private:
  RqVaeConfig config_;
  Mlp encoder_, decoder_;
  CodebookSet codebooks_;
};

/// Plain evaluation of the per-item semantic objective
///   ||s - shat||^2 + sum_l ( ||r_{l-1} - e_{c_l}||^2 + mu ||r_{l-1} - e_{c_l}||^2 )
/// from a quantization result (r_{l-1} - e_{c_l} = r_l). DimensionError if
/// s and shat differ in size; ParameterError if mu < 0.
double semantic_loss(std::span<const double> s, std::span<const double> s_hat, const QuantizationResult& result,
                     double mu);

}  // namespace letter
