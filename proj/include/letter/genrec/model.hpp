#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "letter/core/autodiff.hpp"
#include "letter/core/rng.hpp"
#include "letter/genrec/examples.hpp"
#include "letter/genrec/vocabulary.hpp"

namespace letter {

struct RecommenderConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn_multiplier = 2;
  double init_stddev = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static RecommenderConfig from_json(const nlohmann::json& j);
};

class RecommenderModel;

/// Key/value cache of a decoded prefix. Extending a state shares the parent's
/// cache, so many beams can grow from one prompt cheaply.
class DecodeState {
 public:
  std::size_t length() const noexcept { return length_; }
  /// Next-token logits after the last consumed token, size |V|.
  std::span<const double> logits() const noexcept { return logits_; }

 private:
  friend class RecommenderModel;
  struct Block {
    std::shared_ptr<const Block> parent;
    std::size_t rows = 0;
    std::vector<std::vector<double>> keys, values;  // per layer, rows x width
  };
  std::shared_ptr<const Block> cache_;
  std::size_t length_ = 0;
  std::vector<double> logits_;
};

/// Decoder-only transformer over identifier tokens: token plus learned
/// position embeddings, pre-LayerNorm blocks (causal multi-head attention,
/// GELU feed-forward), final LayerNorm and an untied output projection.
class RecommenderModel {
 public:
  RecommenderModel() = default;
  RecommenderModel(RecommenderConfig config, TokenVocabulary vocab, std::size_t max_length, SeededRng& rng);

  const RecommenderConfig& config() const noexcept { return config_; }
  const TokenVocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t max_length() const noexcept { return max_length_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  /// Logits at every position of packed sequences, [T x |V|]. Rows of one
  /// segment attend only within it; positions restart at each segment.
  ad::Var forward(ad::Tape& tape, std::span<const std::uint32_t> tokens,
                  std::span<const std::size_t> segment_starts = {});

  struct TargetLogits {
    ad::Var logits;                      // [P x |V|]
    std::vector<std::uint32_t> targets;  // P next tokens
  };
  /// Logits only at the scored positions of a batch of sequences.
  TargetLogits forward_targets(ad::Tape& tape, std::span<const TokenSequence> batch);

  /// Plain evaluation of forward() for one sequence, [T x |V|].
  Tensor logits(std::span<const std::uint32_t> tokens) const;

  /// Incremental decoding, equal to logits() up to rounding.
  DecodeState begin(std::span<const std::uint32_t> prompt) const;
  DecodeState extend(const DecodeState& state, std::uint32_t token) const;

  std::vector<ad::Parameter*> parameters();
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static RecommenderModel load(const std::filesystem::path& path);

 private:
  struct Layer {
    ad::Parameter ln1_gain, ln1_bias, qkv_weight, qkv_bias, out_weight, out_bias;
    ad::Parameter ln2_gain, ln2_bias, up_weight, up_bias, down_weight, down_bias;
  };

  ad::Var hidden(ad::Tape& tape, std::span<const std::uint32_t> tokens, std::span<const std::size_t> segment_starts);
  void check_tokens(std::span<const std::uint32_t> tokens) const;
  void step(DecodeState::Block& block, const std::vector<const DecodeState::Block*>& chain, std::uint32_t token,
            std::size_t position, std::vector<double>* logits) const;

  RecommenderConfig config_;
  TokenVocabulary vocab_;
  std::size_t max_length_ = 0;
  ad::Parameter token_embedding_, position_embedding_;
  std::vector<Layer> layers_;
  ad::Parameter final_gain_, final_bias_, head_weight_, head_bias_;
};

}  // namespace letter
