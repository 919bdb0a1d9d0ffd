#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "letter/pipeline/config.hpp"

namespace letter {

/// File names inside a run directory. Every stage reads its inputs from and
/// writes its outputs to this directory, so a run can be resumed or inspected
/// stage by stage.
struct RunLayout {
  std::filesystem::path dir;

  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path interactions() const { return dir / "interactions.tsv"; }
  std::filesystem::path semantic() const { return dir / "semantic.emb"; }
  std::filesystem::path topics() const { return dir / "topics.tsv"; }
  std::filesystem::path split() const { return dir / "split.tsv"; }
  std::filesystem::path cf_items() const { return dir / "cf_items.emb"; }
  std::filesystem::path cf_users() const { return dir / "cf_users.emb"; }
  std::filesystem::path cf_log() const { return dir / "cf_log.csv"; }
  std::filesystem::path tokenizer() const { return dir / "tokenizer.ck"; }
  std::filesystem::path tokenizer_log() const { return dir / "tokenizer_log.csv"; }
  std::filesystem::path identifiers() const { return dir / "identifiers.tsv"; }
  std::filesystem::path recommender() const { return dir / "recommender.ck"; }
  std::filesystem::path recommender_log() const { return dir / "recommender_log.csv"; }
  std::filesystem::path recommendations() const { return dir / "recommendations.csv"; }
  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path diagnostics() const { return dir / "diagnostics"; }
};

/// Stage functions. Each raises the module's own errors; run_pipeline adds
/// the stage name.
void stage_data(const PipelineConfig& config, const RunLayout& run);   // interactions + semantic (+ topics)
void stage_split(const PipelineConfig& config, const RunLayout& run);  // split.tsv
void stage_cf(const PipelineConfig& config, const RunLayout& run);     // cf_items, cf_users, cf_log
void stage_tokenizer(const PipelineConfig& config, const RunLayout& run);
void stage_tokenize(const PipelineConfig& config, const RunLayout& run);
void stage_recommender(const PipelineConfig& config, const RunLayout& run);
void stage_recommend(const PipelineConfig& config, const RunLayout& run);
/// Writes metrics.csv and returns metric name -> value.
std::map<std::string, double> stage_evaluate(const PipelineConfig& config, const RunLayout& run);
/// Writes the diagnostics/ directory and returns its summary values.
std::map<std::string, double> stage_diagnose(const PipelineConfig& config, const RunLayout& run);

struct PipelineResult {
  std::map<std::string, double> metrics;
  std::map<std::string, double> diagnostics;
};

/// Writes config.json, runs every stage in order, then manifest.json.
/// A failing stage is rethrown with the same error kind and the message
/// prefixed by "stage <name>: ".
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

/// Writes the resolved configuration as pretty JSON.
void write_config(const std::filesystem::path& path, const PipelineConfig& config);

/// The CF model saved by stage_cf.
BprMfModel load_cf_model(const RunLayout& run);

/// Reads recommendations.csv back into per-user lists (ascending user id,
/// entries in rank order).
std::vector<QueryResult> read_recommendations(const std::filesystem::path& path, const InteractionDataset& data);

}  // namespace letter
