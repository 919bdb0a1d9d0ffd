// letter: command-line front end. Every subcommand works on one run
// directory (--out) and reads the stage inputs written there by earlier
// subcommands; `pipeline` runs them all.

#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "letter/core/error.hpp"
#include "letter/core/log.hpp"
#include "letter/pipeline/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::vector<std::string> overrides;
  std::string preset;
  std::string diagnostics_dir;
  bool verbose = false;
  bool quiet = false;
};

int exit_code(letter::ErrorKind kind) {
  using letter::ErrorKind;
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Parameter:
      return 1;
    case ErrorKind::Numeric:
      return 3;
    default:
      return 2;
  }
}

letter::PipelineConfig resolve(const Options& o) {
  letter::PipelineConfig c = o.config_path.empty() ? letter::PipelineConfig() : letter::PipelineConfig::load(o.config_path);
  if (!o.preset.empty()) letter::apply_preset(c, o.preset);
  if (o.seed) {
    c.seed = *o.seed;
    c.derive_stage_seeds();
  }
  for (const auto& s : o.overrides) c = letter::apply_override(c, s);
  c.validate();
  return c;
}

void print_values(const std::map<std::string, double>& values) {
  for (const auto& [k, v] : values) std::cout << k << '\t' << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LETTER item tokenizer and generative recommender"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON configuration (missing keys take defaults)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Master seed; stage seeds are derived from it");
  app.add_option("--out", o.out, "Run directory")->capture_default_str();
  app.add_option("--set", o.overrides, "Override, e.g. --set tokenizer.epochs=50 (repeatable)");
  app.add_option("--preset", o.preset, "Ablation preset 0-4 (sets alpha, beta, tau)");
  app.add_flag("-v,--verbose", o.verbose, "Progress messages");
  app.add_flag("-q,--quiet", o.quiet, "Errors only");

  using Stage = std::function<void(const letter::PipelineConfig&, const letter::RunLayout&)>;
  std::vector<std::pair<CLI::App*, Stage>> commands;
  auto add = [&](const char* name, const char* help, Stage fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.emplace_back(sub, std::move(fn));
    return sub;
  };
  add("gen-data", "Write interactions.tsv and semantic.emb (synthetic unless data paths are configured)",
      letter::stage_data);
  add("split", "Filter to min_count and write the leave-one-out split", letter::stage_split);
  add("train-cf", "Train the BPR-MF model that supplies CF embeddings", letter::stage_cf);
  add("train-tokenizer", "Train the RQ-VAE tokenizer with the configured regularizers", letter::stage_tokenizer);
  add("tokenize", "Assign identifiers to every catalog item", letter::stage_tokenize);
  add("train-rec", "Train the generative recommender", letter::stage_recommender);
  add("recommend", "Trie-constrained beam search for every test user", letter::stage_recommend);
  add("evaluate", "Recall@K and NDCG@K of recommendations.csv",
      [](const letter::PipelineConfig& c, const letter::RunLayout& r) { print_values(letter::stage_evaluate(c, r)); });
  CLI::App* diag = add("diagnose", "Code histograms, PCA export, overlap and generation frequency", nullptr);
  diag->add_option("--diagnostics-dir", o.diagnostics_dir, "Copy the diagnostics CSVs here as well");
  add("pipeline", "Run every stage in order", nullptr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  letter::log::set_level(o.quiet ? letter::log::Level::Quiet : o.verbose ? letter::log::Level::Info : letter::log::Level::Warn);
  try {
    const letter::PipelineConfig config = resolve(o);
    const letter::RunLayout run{o.out};
    std::filesystem::create_directories(run.dir);
    for (auto& [sub, fn] : commands) {
      if (!sub->parsed()) continue;
      const std::string name = sub->get_name();
      if (name == "pipeline") {
        const auto r = letter::run_pipeline(config, run.dir);
        print_values(r.metrics);
        print_values(r.diagnostics);
      } else if (name == "diagnose") {
        print_values(letter::stage_diagnose(config, run));
        if (!o.diagnostics_dir.empty()) {
          std::filesystem::create_directories(o.diagnostics_dir);
          std::filesystem::copy(run.diagnostics(), o.diagnostics_dir,
                                std::filesystem::copy_options::recursive | std::filesystem::copy_options::overwrite_existing);
        }
      } else {
        letter::write_config(run.config(), config);
        fn(config, run);
      }
    }
  } catch (const letter::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
