#include "letter/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <optional>

#include "letter/core/checkpoint.hpp"
#include "letter/core/error.hpp"
#include "letter/core/log.hpp"
#include "letter/core/text.hpp"
#include "letter/tokenizer/identifiers.hpp"

namespace letter {

namespace {

constexpr int kManifestVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

void require(const std::filesystem::path& path, const char* produced_by) {
  if (!std::filesystem::exists(path))
    throw DataError("missing " + path.string() + " (run " + produced_by + " first)");
}

InteractionDataset load_split(const RunLayout& run) {
  require(run.split(), "split");
  return read_split_dataset(run.split());
}

IdentifierSet load_identifiers(const RunLayout& run) {
  require(run.identifiers(), "tokenize");
  return read_identifiers(run.identifiers());
}

/// Semantic vectors restricted to the items that survived the split filter.
EmbeddingTable catalog_semantic(const RunLayout& run, const InteractionDataset& data) {
  require(run.semantic(), "gen-data");
  const EmbeddingTable all = read_embedding_table(run.semantic());
  std::vector<ItemId> missing;
  for (ItemId id : data.items())
    if (!all.contains(id)) missing.push_back(id);
  if (!missing.empty())
    throw DataError(std::to_string(missing.size()) + " catalog items have no semantic embedding (first: " +
                    std::to_string(missing.front()) + ")");
  return EmbeddingTable(data.items(), all.gather(data.items()));
}

void write_metric_rows(std::ostream& os, const std::map<std::string, double>& values) {
  os << "metric,value\n";
  for (const auto& [name, value] : values) os << name << ',' << text::format_double(value) << '\n';
}

}  // namespace

void write_config(const std::filesystem::path& path, const PipelineConfig& config) {
  auto os = open_out(path);
  os << config.to_json().dump(2) << '\n';
}

void stage_data(const PipelineConfig& config, const RunLayout& run) {
  if (!config.data.interactions.empty()) {
    // External data: copy into the run directory so the run is self-contained.
    write_interactions(run.interactions(), read_interactions(config.data.interactions));
    write_embedding_table(run.semantic(), read_embedding_table(config.data.semantic));
    return;
  }
  const SyntheticData syn = generate_synthetic(config.data.synthetic);
  write_interactions(run.interactions(), syn.interactions);
  write_embedding_table(run.semantic(), syn.semantic);
  auto os = open_out(run.topics());
  os << "item_id\ttopic\tcommunity\n";
  for (std::size_t i = 0; i < syn.topic.size(); ++i)
    os << syn.semantic.ids()[i] << '\t' << syn.topic[i] << '\t' << syn.community[i] << '\n';
}

void stage_split(const PipelineConfig& config, const RunLayout& run) {
  require(run.interactions(), "gen-data");
  const InteractionDataset data = load_and_split(run.interactions(), config.data.min_count);
  write_split_dataset(run.split(), data);
  log::info("split: " + std::to_string(data.users().size()) + " users, " + std::to_string(data.items().size()) +
            " items, " + std::to_string(data.interaction_count()) + " interactions");
}

void stage_cf(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const BprMfModel cf = train_cf(data, config.cf);
  write_embedding_table(run.cf_items(), cf.items);
  write_embedding_table(run.cf_users(), EmbeddingTable(cf.user_ids, cf.users));
  auto os = open_out(run.cf_log());
  os << "epoch,bpr_loss\n";
  for (std::size_t e = 0; e < cf.epoch_loss.size(); ++e) os << e + 1 << ',' << text::format_double(cf.epoch_loss[e]) << '\n';
}

BprMfModel load_cf_model(const RunLayout& run) {
  require(run.cf_items(), "train-cf");
  require(run.cf_users(), "train-cf");
  BprMfModel m;
  m.items = read_embedding_table(run.cf_items());
  const EmbeddingTable users = read_embedding_table(run.cf_users());
  m.user_ids = users.ids();
  m.users = users.matrix();
  return m;
}

void stage_tokenizer(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const EmbeddingTable semantic = catalog_semantic(run, data);
  std::optional<EmbeddingTable> cf;
  if (config.tokenizer.alpha > 0.0) {
    require(run.cf_items(), "train-cf");
    cf = read_embedding_table(run.cf_items());
  }
  const TokenizerTrainingResult r = train_tokenizer(semantic, cf ? &*cf : nullptr, config.tokenizer);
  r.model.save(run.tokenizer());
  write_tokenizer_log(run.tokenizer_log(), r.log);
}

void stage_tokenize(const PipelineConfig&, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const EmbeddingTable semantic = catalog_semantic(run, data);
  require(run.tokenizer(), "train-tokenizer");
  const IdentifierSet ids = assign_identifiers(semantic, RqVae::load(run.tokenizer()));
  write_identifiers(run.identifiers(), ids);
  log::info("tokenize: collision rate " + text::format_double(ids.collision_rate()));
}

void stage_recommender(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const IdentifierSet ids = load_identifiers(run);
  const RecommenderTrainingResult r = train_recommender(data, ids, config.recommender);
  r.model.save(run.recommender());
  write_recommender_log(run.recommender_log(), r.log);
}

void stage_recommend(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const IdentifierSet ids = load_identifiers(run);
  require(run.recommender(), "train-rec");
  const RecommenderModel model = RecommenderModel::load(run.recommender());
  if (!(model.vocabulary() == TokenVocabulary::for_identifiers(ids)))
    throw DataError("recommender vocabulary does not match identifiers.tsv (retrain after re-tokenizing)");
  const IdentifierTrie trie = IdentifierTrie::build(model.vocabulary(), ids);
  const auto examples = build_examples(data, ids, SplitPart::Test, config.recommender.examples);
  const auto queries = make_queries(model.vocabulary(), ids, examples);
  write_recommendations(run.recommendations(), run_queries(model, trie, queries, config.recommender.beam));
}

std::vector<QueryResult> read_recommendations(const std::filesystem::path& path, const InteractionDataset& data) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<UserId, QueryResult> by_user;
  for (const auto& u : data.users()) by_user[u.user] = QueryResult{u.user, InteractionDataset::test_target(u), {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (text::trim(line) != "user_id,rank,item_id,score")
        throw FormatError(path.string() + ": unexpected header '" + line + "'");
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
    const auto user = static_cast<UserId>(text::parse_uint(f[0], line_no));
    const auto rank = text::parse_uint(f[1], line_no);
    const auto it = by_user.find(user);
    if (it == by_user.end()) throw ParseError("user " + std::to_string(user) + " is not in the split", line_no);
    if (rank != it->second.list.size() + 1) throw ParseError("ranks must be consecutive from 1", line_no);
    it->second.list.push_back({static_cast<ItemId>(text::parse_uint(f[2], line_no)), text::parse_double(f[3], line_no)});
  }
  std::vector<QueryResult> out;
  out.reserve(by_user.size());
  for (auto& [user, r] : by_user) out.push_back(std::move(r));
  return out;
}

std::map<std::string, double> stage_evaluate(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  require(run.recommendations(), "recommend");
  const RankingResult ranking = to_ranking(read_recommendations(run.recommendations(), data));
  std::map<std::string, double> m;
  for (std::size_t k : config.evaluation.ks) {
    m["recall@" + std::to_string(k)] = recall_at_k(ranking, k);
    m["ndcg@" + std::to_string(k)] = ndcg_at_k(ranking, k);
  }
  m["users"] = static_cast<double>(ranking.size());
  auto os = open_out(run.metrics());
  write_metric_rows(os, m);
  return m;
}

std::map<std::string, double> stage_diagnose(const PipelineConfig& config, const RunLayout& run) {
  const InteractionDataset data = load_split(run);
  const IdentifierSet ids = load_identifiers(run);
  require(run.tokenizer(), "train-tokenizer");
  const RqVae tokenizer = RqVae::load(run.tokenizer());
  const auto dir = run.diagnostics();
  std::filesystem::create_directories(dir);
  const auto& ev = config.evaluation;

  std::map<std::string, double> s;
  s["collision_rate"] = ids.collision_rate();
  for (std::size_t l = 1; l <= ids.levels(); ++l) {
    const CodeHistogram h = code_histogram(ids, l);
    write_code_histogram(dir / ("code_histogram_l" + std::to_string(l) + ".csv"), h);
    s["entropy_l" + std::to_string(l)] = h.entropy;
    s["utilization_l" + std::to_string(l)] = static_cast<double>(h.utilization);
    if (l == 1) write_grouped_histogram(dir / "code_groups_l1.csv", h, ev.histogram_group);
  }
  if (ids.codebook_size() >= 3)
    write_code_embedding_pca(dir / "code_pca_l1.csv", export_code_embedding_pca(tokenizer.codebooks(), ids, 1));

  const BprMfModel cf = load_cf_model(run);
  const auto pairs = nearest_cf_pairs(cf.items);
  s["cf_pair_overlap"] = code_overlap_similarity(ids, pairs, ev.overlap_mode);

  const EmbeddingTable semantic = catalog_semantic(run, data);
  const RankingResult cf_rank = cf_ranking(cf, cf.items, data);
  const RankingResult q_rank = quantized_embedding_ranking(tokenizer, semantic, cf, data);
  for (std::size_t k : ev.ks) {
    s["cf_recall@" + std::to_string(k)] = recall_at_k(cf_rank, k);
    s["zhat_recall@" + std::to_string(k)] = recall_at_k(q_rank, k);
  }

  if (std::filesystem::exists(run.recommendations())) {
    const auto results = read_recommendations(run.recommendations(), data);
    const auto freq = generation_frequency(results, ids, ev.generation_top);
    auto os = open_out(dir / "generation_frequency.csv");
    os << "item_id,count\n";
    for (const auto& [item, count] : freq) os << item << ',' << count << '\n';
  }

  auto os = open_out(dir / "summary.csv");
  write_metric_rows(os, s);
  return s;
}

PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  const RunLayout run{out_dir};
  write_config(run.config(), config);

  PipelineResult result;
  const std::vector<std::pair<std::string, std::function<void()>>> stages = {
      {"gen-data", [&] { stage_data(config, run); }},
      {"split", [&] { stage_split(config, run); }},
      {"train-cf", [&] { stage_cf(config, run); }},
      {"train-tokenizer", [&] { stage_tokenizer(config, run); }},
      {"tokenize", [&] { stage_tokenize(config, run); }},
      {"train-rec", [&] { stage_recommender(config, run); }},
      {"recommend", [&] { stage_recommend(config, run); }},
      {"evaluate", [&] { result.metrics = stage_evaluate(config, run); }},
      {"diagnose", [&] { result.diagnostics = stage_diagnose(config, run); }},
  };
  for (const auto& [name, fn] : stages) {
    log::info("stage " + name);
    const auto start = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + name + ": " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      throw Error(ErrorKind::Data, "stage " + name + ": " + e.what());
    }
    log::info("stage " + name + " done in " +
              std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) + " s");
  }

  nlohmann::json files = nlohmann::json::array();
  std::vector<std::filesystem::path> found;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path() != run.manifest())
      found.push_back(std::filesystem::relative(entry.path(), out_dir));
  std::ranges::sort(found);
  for (const auto& p : found) files.push_back(p.generic_string());
  const nlohmann::json manifest = {
      {"manifest_version", kManifestVersion},
      {"checkpoint_version", Checkpoint::kVersion},
      {"seed", config.seed},
      {"stage_seeds",
       {{"synthetic", config.data.synthetic.seed},
        {"cf", config.cf.seed},
        {"tokenizer", config.tokenizer.seed},
        {"recommender", config.recommender.seed}}},
      {"files", files},
  };
  auto os = open_out(run.manifest());
  os << manifest.dump(2) << '\n';
  return result;
}

}  // namespace letter
