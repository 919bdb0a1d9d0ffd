#include "letter/genrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "letter/core/checkpoint.hpp"
#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"

namespace letter {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

ad::Parameter normal_param(std::string name, std::vector<std::size_t> shape, double stddev, SeededRng& rng) {
  return ad::Parameter(std::move(name), Tensor::normal(std::move(shape), stddev, rng));
}

ad::Parameter const_param(std::string name, std::vector<std::size_t> shape, double value) {
  return ad::Parameter(std::move(name), Tensor(std::move(shape), value));
}

void layer_norm_row(const double* x, const ad::Parameter& g, const ad::Parameter& b, std::size_t n, double* out) {
  double mu = 0.0;
  for (std::size_t j = 0; j < n; ++j) mu += x[j];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
  var /= static_cast<double>(n);
  const double is = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t j = 0; j < n; ++j) out[j] = (x[j] - mu) * is * g.value[j] + b.value[j];
}

// out = x W + b with W [n x m].
void affine_row(const double* x, const ad::Parameter& w, const ad::Parameter& b, std::size_t n, std::size_t m,
                double* out) {
  std::fill(out, out + m, 0.0);
  const double* W = w.value.data();
  for (std::size_t k = 0; k < n; ++k) {
    const double xk = x[k];
    const double* row = W + k * m;
    for (std::size_t c = 0; c < m; ++c) out[c] += xk * row[c];
  }
  for (std::size_t c = 0; c < m; ++c) out[c] += b.value[c];
}

}  // namespace

void RecommenderConfig::validate() const {
  if (layers == 0) throw ParameterError("recommender needs at least one layer");
  if (width == 0 || heads == 0 || width % heads != 0)
    throw ParameterError("recommender width " + std::to_string(width) + " must be a positive multiple of heads " +
                         std::to_string(heads));
  if (ffn_multiplier == 0) throw ParameterError("ffn_multiplier must be >= 1");
  if (!(init_stddev > 0.0)) throw ParameterError("init_stddev must be positive");
}

nlohmann::json RecommenderConfig::to_json() const {
  return {{"layers", layers},
          {"width", width},
          {"heads", heads},
          {"ffn_multiplier", ffn_multiplier},
          {"init_stddev", init_stddev}};
}

RecommenderConfig RecommenderConfig::from_json(const nlohmann::json& j) {
  RecommenderConfig c;
  try {
    c.layers = j.at("layers").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn_multiplier = j.at("ffn_multiplier").get<std::size_t>();
    c.init_stddev = j.at("init_stddev").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("recommender config: ") + e.what());
  }
  c.validate();
  return c;
}

RecommenderModel::RecommenderModel(RecommenderConfig config, TokenVocabulary vocab, std::size_t max_length,
                                   SeededRng& rng)
    : config_(config), vocab_(vocab), max_length_(max_length) {
  config_.validate();
  if (max_length == 0) throw ParameterError("max_length must be >= 1");
  const std::size_t D = config_.width, F = config_.width * config_.ffn_multiplier, V = vocab_.size();
  const double s = config_.init_stddev;
  SeededRng init = rng.split("recommender-init");
  token_embedding_ = normal_param("tok_emb", {V, D}, s, init);
  position_embedding_ = normal_param("pos_emb", {max_length, D}, s, init);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L;
    L.ln1_gain = const_param(p + "ln1.gain", {D}, 1.0);
    L.ln1_bias = const_param(p + "ln1.bias", {D}, 0.0);
    L.qkv_weight = normal_param(p + "attn.qkv.weight", {D, 3 * D}, s, init);
    L.qkv_bias = const_param(p + "attn.qkv.bias", {3 * D}, 0.0);
    L.out_weight = normal_param(p + "attn.out.weight", {D, D}, s, init);
    L.out_bias = const_param(p + "attn.out.bias", {D}, 0.0);
    L.ln2_gain = const_param(p + "ln2.gain", {D}, 1.0);
    L.ln2_bias = const_param(p + "ln2.bias", {D}, 0.0);
    L.up_weight = normal_param(p + "ffn.up.weight", {D, F}, s, init);
    L.up_bias = const_param(p + "ffn.up.bias", {F}, 0.0);
    L.down_weight = normal_param(p + "ffn.down.weight", {F, D}, s, init);
    L.down_bias = const_param(p + "ffn.down.bias", {D}, 0.0);
    layers_.push_back(std::move(L));
  }
  final_gain_ = const_param("final_ln.gain", {D}, 1.0);
  final_bias_ = const_param("final_ln.bias", {D}, 0.0);
  head_weight_ = normal_param("head.weight", {D, V}, s, init);
  head_bias_ = const_param("head.bias", {V}, 0.0);
}

void RecommenderModel::check_tokens(std::span<const std::uint32_t> tokens) const {
  for (std::uint32_t t : tokens)
    if (t >= vocab_.size()) throw DataError("token " + std::to_string(t) + " is outside the vocabulary");
}

ad::Var RecommenderModel::hidden(ad::Tape& tape, std::span<const std::uint32_t> tokens,
                                 std::span<const std::size_t> segment_starts) {
  if (tokens.empty()) throw DimensionError("recommender forward needs at least one token");
  check_tokens(tokens);
  std::vector<std::uint32_t> positions(tokens.size());
  {
    std::size_t seg = 0, begin = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      while (seg < segment_starts.size() && segment_starts[seg] <= i) begin = segment_starts[seg++];
      if (i - begin >= max_length_)
        throw DimensionError("sequence of length > " + std::to_string(max_length_) + " exceeds the model's context");
      positions[i] = static_cast<std::uint32_t>(i - begin);
    }
  }
  ad::Var x = ad::add(ad::gather_rows(tape.param(token_embedding_), tokens),
                      ad::gather_rows(tape.param(position_embedding_), positions));
  for (Layer& L : layers_) {
    ad::Var h = ad::layer_norm(x, tape.param(L.ln1_gain), tape.param(L.ln1_bias), kLayerNormEps);
    ad::Var qkv = ad::add_bias(ad::matmul(h, tape.param(L.qkv_weight)), tape.param(L.qkv_bias));
    ad::Var att = ad::causal_attention(qkv, config_.heads, segment_starts);
    x = ad::add(x, ad::add_bias(ad::matmul(att, tape.param(L.out_weight)), tape.param(L.out_bias)));
    ad::Var h2 = ad::layer_norm(x, tape.param(L.ln2_gain), tape.param(L.ln2_bias), kLayerNormEps);
    ad::Var up = ad::gelu(ad::add_bias(ad::matmul(h2, tape.param(L.up_weight)), tape.param(L.up_bias)));
    x = ad::add(x, ad::add_bias(ad::matmul(up, tape.param(L.down_weight)), tape.param(L.down_bias)));
  }
  return ad::layer_norm(x, tape.param(final_gain_), tape.param(final_bias_), kLayerNormEps);
}

ad::Var RecommenderModel::forward(ad::Tape& tape, std::span<const std::uint32_t> tokens,
                                  std::span<const std::size_t> segment_starts) {
  ad::Var h = hidden(tape, tokens, segment_starts);
  return ad::add_bias(ad::matmul(h, tape.param(head_weight_)), tape.param(head_bias_));
}

RecommenderModel::TargetLogits RecommenderModel::forward_targets(ad::Tape& tape, std::span<const TokenSequence> batch) {
  std::vector<std::uint32_t> tokens;
  std::vector<std::size_t> starts;
  std::vector<std::uint32_t> rows;
  TargetLogits out;
  for (const TokenSequence& seq : batch) {
    const std::size_t base = tokens.size();
    starts.push_back(base);
    for (std::uint32_t p : seq.target_positions) {
      if (p + 1 >= seq.tokens.size()) throw DataError("target position past the end of its sequence");
      rows.push_back(static_cast<std::uint32_t>(base + p));
      out.targets.push_back(seq.tokens[p + 1]);
    }
    tokens.insert(tokens.end(), seq.tokens.begin(), seq.tokens.end());
  }
  ad::Var h = ad::gather_rows(hidden(tape, tokens, starts), rows);
  out.logits = ad::add_bias(ad::matmul(h, tape.param(head_weight_)), tape.param(head_bias_));
  return out;
}

Tensor RecommenderModel::logits(std::span<const std::uint32_t> tokens) const {
  ad::Tape tape;
  // The tape only reads parameters here; no gradient is taken.
  return const_cast<RecommenderModel*>(this)->forward(tape, tokens).value();
}

void RecommenderModel::step(DecodeState::Block& block, const std::vector<const DecodeState::Block*>& chain,
                            std::uint32_t token, std::size_t position, std::vector<double>* logits) const {
  const std::size_t D = config_.width, F = D * config_.ffn_multiplier, H = config_.heads, dh = D / H;
  if (token >= vocab_.size()) throw DataError("token " + std::to_string(token) + " is outside the vocabulary");
  if (position >= max_length_)
    throw DimensionError("sequence of length > " + std::to_string(max_length_) + " exceeds the model's context");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> x(D), h(D), qkv(3 * D), att(D), proj(D), up(F);
  std::vector<double> scores;
  for (std::size_t c = 0; c < D; ++c)
    x[c] = token_embedding_.value[token * D + c] + position_embedding_.value[position * D + c];

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    layer_norm_row(x.data(), L.ln1_gain, L.ln1_bias, D, h.data());
    affine_row(h.data(), L.qkv_weight, L.qkv_bias, D, 3 * D, qkv.data());
    block.keys[l].insert(block.keys[l].end(), qkv.begin() + D, qkv.begin() + 2 * D);
    block.values[l].insert(block.values[l].end(), qkv.begin() + 2 * D, qkv.end());

    // Rows visible to this position: every ancestor block, then this block.
    const std::size_t own_rows = block.keys[l].size() / D;
    std::fill(att.begin(), att.end(), 0.0);
    for (std::size_t hd = 0; hd < H; ++hd) {
      const double* q = qkv.data() + hd * dh;
      scores.clear();
      double mx = -std::numeric_limits<double>::infinity();
      auto score_rows = [&](const std::vector<double>& keys, std::size_t rows) {
        for (std::size_t j = 0; j < rows; ++j) {
          const double s = kernels::dot(q, keys.data() + j * D + hd * dh, dh) * inv_sqrt;
          scores.push_back(s);
          mx = std::max(mx, s);
        }
      };
      for (const auto* b : chain) score_rows(b->keys[l], b->rows);
      score_rows(block.keys[l], own_rows);
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      double* o = att.data() + hd * dh;
      std::size_t idx = 0;
      auto mix_rows = [&](const std::vector<double>& vals, std::size_t rows) {
        for (std::size_t j = 0; j < rows; ++j, ++idx) {
          const double p = scores[idx] / z;
          const double* v = vals.data() + j * D + hd * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p * v[c];
        }
      };
      for (const auto* b : chain) mix_rows(b->values[l], b->rows);
      mix_rows(block.values[l], own_rows);
    }
    affine_row(att.data(), L.out_weight, L.out_bias, D, D, proj.data());
    for (std::size_t c = 0; c < D; ++c) x[c] += proj[c];

    layer_norm_row(x.data(), L.ln2_gain, L.ln2_bias, D, h.data());
    affine_row(h.data(), L.up_weight, L.up_bias, D, F, up.data());
    for (double& v : up) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
    affine_row(up.data(), L.down_weight, L.down_bias, F, D, proj.data());
    for (std::size_t c = 0; c < D; ++c) x[c] += proj[c];
  }
  block.rows = block.keys[0].size() / D;
  if (logits) {
    layer_norm_row(x.data(), final_gain_, final_bias_, D, h.data());
    logits->resize(vocab_.size());
    affine_row(h.data(), head_weight_, head_bias_, D, vocab_.size(), logits->data());
  }
}

DecodeState RecommenderModel::begin(std::span<const std::uint32_t> prompt) const {
  if (prompt.empty()) throw DimensionError("decoding needs a nonempty prompt");
  auto block = std::make_shared<DecodeState::Block>();
  block->keys.resize(layers_.size());
  block->values.resize(layers_.size());
  DecodeState st;
  const std::vector<const DecodeState::Block*> chain;
  for (std::size_t i = 0; i < prompt.size(); ++i)
    step(*block, chain, prompt[i], i, i + 1 == prompt.size() ? &st.logits_ : nullptr);
  st.cache_ = std::move(block);
  st.length_ = prompt.size();
  return st;
}

DecodeState RecommenderModel::extend(const DecodeState& state, std::uint32_t token) const {
  if (!state.cache_) throw StateError("extend called on an empty decode state");
  std::vector<const DecodeState::Block*> chain;
  for (const DecodeState::Block* b = state.cache_.get(); b; b = b->parent.get()) chain.push_back(b);
  std::reverse(chain.begin(), chain.end());
  auto block = std::make_shared<DecodeState::Block>();
  block->parent = state.cache_;
  block->keys.resize(layers_.size());
  block->values.resize(layers_.size());
  DecodeState st;
  step(*block, chain, token, state.length_, &st.logits_);
  st.cache_ = std::move(block);
  st.length_ = state.length_ + 1;
  return st;
}

std::vector<ad::Parameter*> RecommenderModel::parameters() {
  std::vector<ad::Parameter*> out{&token_embedding_, &position_embedding_};
  for (Layer& L : layers_)
    for (ad::Parameter* p : {&L.ln1_gain, &L.ln1_bias, &L.qkv_weight, &L.qkv_bias, &L.out_weight, &L.out_bias,
                             &L.ln2_gain, &L.ln2_bias, &L.up_weight, &L.up_bias, &L.down_weight, &L.down_bias})
      out.push_back(p);
  for (ad::Parameter* p : {&final_gain_, &final_bias_, &head_weight_, &head_bias_}) out.push_back(p);
  return out;
}

std::size_t RecommenderModel::parameter_count() const {
  std::size_t n = 0;
  for (ad::Parameter* p : const_cast<RecommenderModel*>(this)->parameters()) n += p->value.size();
  return n;
}

void RecommenderModel::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.header = {{"kind", "letter-recommender"},
               {"config", config_.to_json()},
               {"vocabulary", vocab_.to_json()},
               {"max_length", max_length_}};
  for (ad::Parameter* p : const_cast<RecommenderModel*>(this)->parameters()) ck.tensors.emplace(p->name, p->value);
  write_checkpoint(path, ck);
}

RecommenderModel RecommenderModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", "") != "letter-recommender")
    throw FormatError(path.string() + " is not a recommender checkpoint");
  SeededRng rng(0);
  RecommenderModel m(RecommenderConfig::from_json(ck.header.at("config")),
                     TokenVocabulary::from_json(ck.header.at("vocabulary")),
                     ck.header.at("max_length").get<std::size_t>(), rng);
  for (ad::Parameter* p : m.parameters()) {
    const Tensor& t = ck.tensor(p->name);
    if (!t.same_shape(p->value))
      throw FormatError("tensor '" + p->name + "' has shape " + t.shape_string() + ", expected " +
                        p->value.shape_string());
    p->value = t;
  }
  return m;
}

}  // namespace letter
