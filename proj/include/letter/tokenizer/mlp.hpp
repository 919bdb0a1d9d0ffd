#pragma once

#include <string>
#include <vector>

#include "letter/core/autodiff.hpp"
#include "letter/core/checkpoint.hpp"
#include "letter/core/rng.hpp"

namespace letter {

enum class Activation { Tanh, Gelu, Relu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Fully connected network: Linear -> act -> ... -> Linear. No activation on
/// the output layer. `hidden` may be empty (a single affine map).
class Mlp {
 public:
  Mlp() = default;
  /// Weights use Xavier-uniform initialisation, biases start at zero.
  Mlp(std::string name, std::size_t in, std::vector<std::size_t> hidden, std::size_t out, Activation act,
      SeededRng& rng);

  std::size_t input_dim() const noexcept { return in_; }
  std::size_t output_dim() const noexcept { return out_; }
  Activation activation() const noexcept { return act_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }

  /// x: [B x in] -> [B x out], recorded on `tape`.
  ad::Var forward(ad::Tape& tape, ad::Var x);
  /// Same computation without gradient bookkeeping.
  Tensor evaluate(const Tensor& x) const;

  std::size_t layers() const noexcept { return weights_.size(); }
  ad::Parameter& weight(std::size_t layer) { return weights_[layer]; }
  ad::Parameter& bias(std::size_t layer) { return biases_[layer]; }
  const ad::Parameter& weight(std::size_t layer) const { return weights_[layer]; }
  const ad::Parameter& bias(std::size_t layer) const { return biases_[layer]; }

  void collect(std::vector<ad::Parameter*>& out);
  void save(Checkpoint& ck) const;
  static Mlp load(const Checkpoint& ck, const std::string& name);

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
  std::vector<std::size_t> hidden_;
  Activation act_ = Activation::Tanh;
  std::vector<ad::Parameter> weights_;  // [fan_in x fan_out]
  std::vector<ad::Parameter> biases_;
};

}  // namespace letter
