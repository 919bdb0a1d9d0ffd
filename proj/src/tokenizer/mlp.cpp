#include "letter/tokenizer/mlp.hpp"

#include <cmath>

#include "letter/core/error.hpp"

namespace letter {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "gelu") return Activation::Gelu;
  if (name == "relu") return Activation::Relu;
  throw ParameterError("unknown activation '" + name + "' (expected tanh, gelu or relu)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Gelu: return "gelu";
    case Activation::Relu: return "relu";
  }
  return "?";
}

Mlp::Mlp(std::string name, std::size_t in, std::vector<std::size_t> hidden, std::size_t out, Activation act,
         SeededRng& rng)
    : name_(std::move(name)), in_(in), out_(out), hidden_(std::move(hidden)), act_(act) {
  if (in == 0 || out == 0) throw ParameterError("Mlp: input and output widths must be positive");
  std::vector<std::size_t> widths{in};
  for (std::size_t h : hidden_) {
    if (h == 0) throw ParameterError("Mlp: hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(out);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
    const std::string prefix = name_ + "." + std::to_string(l);
    weights_.emplace_back(prefix + ".weight", Tensor::uniform({widths[l], widths[l + 1]}, -bound, bound, rng));
    biases_.emplace_back(prefix + ".bias", Tensor({widths[l + 1]}));
  }
}

static ad::Var activate(ad::Var x, Activation act) {
  switch (act) {
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Gelu: return ad::gelu(x);
    case Activation::Relu: return ad::relu(x);
  }
  return x;
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) {
  if (x.value().rank() != 2 || x.value().cols() != in_)
    throw DimensionError("Mlp '" + name_ + "': expected [B x " + std::to_string(in_) + "] input, got " +
                         x.value().shape_string());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = ad::add_bias(ad::matmul(x, tape.param(weights_[l])), tape.param(biases_[l]));
    if (l + 1 < weights_.size()) x = activate(x, act_);
  }
  return x;
}

Tensor Mlp::evaluate(const Tensor& x) const {
  // The tape only holds constants here, so no backward closures ever run.
  ad::Tape tape;
  ad::Var h = tape.constant(x);
  if (h.value().rank() != 2 || h.value().cols() != in_)
    throw DimensionError("Mlp '" + name_ + "': expected [B x " + std::to_string(in_) + "] input, got " +
                         x.shape_string());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ad::add_bias(ad::matmul(h, tape.constant(weights_[l].value)), tape.constant(biases_[l].value));
    if (l + 1 < weights_.size()) h = activate(h, act_);
  }
  return h.value();
}

void Mlp::collect(std::vector<ad::Parameter*>& out) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
}

void Mlp::save(Checkpoint& ck) const {
  ck.header[name_] = {{"input", in_}, {"hidden", hidden_}, {"output", out_}, {"activation", to_string(act_)}};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    ck.tensors[weights_[l].name] = weights_[l].value;
    ck.tensors[biases_[l].name] = biases_[l].value;
  }
}

Mlp Mlp::load(const Checkpoint& ck, const std::string& name) {
  if (!ck.header.contains(name)) throw FormatError("checkpoint has no network '" + name + "'");
  const auto& h = ck.header.at(name);
  SeededRng unused(0);
  Mlp m(name, h.at("input").get<std::size_t>(), h.at("hidden").get<std::vector<std::size_t>>(),
        h.at("output").get<std::size_t>(), parse_activation(h.at("activation").get<std::string>()), unused);
  for (std::size_t l = 0; l < m.weights_.size(); ++l) {
    for (ad::Parameter* p : {&m.weights_[l], &m.biases_[l]}) {
      const Tensor& t = ck.tensor(p->name);
      if (!t.same_shape(p->value)) throw FormatError("tensor '" + p->name + "' has shape " + t.shape_string());
      *p = ad::Parameter(p->name, t);
    }
  }
  return m;
}

}  // namespace letter
