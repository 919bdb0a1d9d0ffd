#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "letter/cf/bpr_mf.hpp"
#include "letter/eval/diagnostics.hpp"
#include "letter/genrec/trainer.hpp"
#include "letter/pipeline/synthetic.hpp"
#include "letter/regularizers/trainer.hpp"

namespace letter {

struct DataConfig {
  // Empty paths: generate the synthetic catalog instead.
  std::string interactions;  // user<TAB>item<TAB>timestamp
  std::string semantic;      // embedding text format
  std::size_t min_count = 5;
  SyntheticSpec synthetic;   // its seed is replaced by the stage seed
};

struct EvaluationConfig {
  std::vector<std::size_t> ks{5, 10};
  OverlapMode overlap_mode = OverlapMode::Positionwise;
  std::size_t generation_top = 10;
  std::size_t histogram_group = 15;
};

/// Every knob of a run. Stage seeds are derived from `seed`, so one number
/// fixes the whole run.
struct PipelineConfig {
  std::uint64_t seed = 42;
  DataConfig data;
  BprConfig cf;
  TokenizerTrainingConfig tokenizer;
  RecommenderTrainingConfig recommender;
  EvaluationConfig evaluation;

  /// Desk-scale defaults: 3 levels of 64 codes, batch 256, 200 tokenizer
  /// epochs; 24 recommender epochs validated every 2nd on 500 users.
  PipelineConfig();

  /// Copies `seed` into each stage under its own tag.
  void derive_stage_seeds();
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays `j` on the defaults. Unknown keys raise ParameterError naming
  /// the full key path.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Ablation variants: 0 semantic only, 1 +collaborative, 2 +diversity,
/// 3 both, 4 both with tau = 0.8. ParameterError for other names.
void apply_preset(PipelineConfig& config, const std::string& preset);

/// `a.b.c=value` override; value is read as JSON when it parses, otherwise
/// as a string. Returns the updated configuration (re-validated).
PipelineConfig apply_override(const PipelineConfig& config, const std::string& assignment);

/// Recursive merge of `overlay` into `base`; keys absent from `base` raise
/// ParameterError with their dotted path.
void merge_strict(nlohmann::json& base, const nlohmann::json& overlay, const std::string& path = "");

}  // namespace letter
