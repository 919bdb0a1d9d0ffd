#include "letter/pipeline/config.hpp"

#include <fstream>

#include "letter/core/error.hpp"
#include "letter/core/rng.hpp"

namespace letter {

namespace {

OverlapMode parse_overlap_mode(const std::string& s) {
  if (s == "positionwise") return OverlapMode::Positionwise;
  if (s == "set") return OverlapMode::Set;
  throw ParameterError("unknown overlap mode '" + s + "' (positionwise, set)");
}

std::string to_string(OverlapMode m) { return m == OverlapMode::Set ? "set" : "positionwise"; }

nlohmann::json synthetic_json(const SyntheticSpec& s) {
  nlohmann::json j = s.to_json();
  j.erase("seed");
  return j;
}

template <typename T>
T get(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace

PipelineConfig::PipelineConfig() {
  tokenizer.model.levels = 3;
  tokenizer.model.codebook_size = 64;
  tokenizer.batch_size = 256;
  tokenizer.epochs = 200;
  tokenizer.dead_code_restart = false;
  recommender.epochs = 24;
  recommender.eval_every = 2;
  recommender.validation_users = 500;
  derive_stage_seeds();
}

void PipelineConfig::derive_stage_seeds() {
  data.synthetic.seed = SeededRng::derive_seed(seed, "synthetic");
  cf.seed = SeededRng::derive_seed(seed, "cf");
  tokenizer.seed = SeededRng::derive_seed(seed, "tokenizer");
  recommender.seed = SeededRng::derive_seed(seed, "recommender");
}

void PipelineConfig::validate() const {
  if (data.interactions.empty() != data.semantic.empty())
    throw ParameterError("data.interactions and data.semantic must be given together");
  if (data.min_count == 0) throw ParameterError("data.min_count must be >= 1");
  if (data.interactions.empty()) data.synthetic.validate();
  if (cf.dim == 0 || !(cf.lr > 0.0)) throw ParameterError("cf.dim and cf.lr must be positive");
  tokenizer.validate();
  if (tokenizer.alpha > 0.0 && cf.dim != tokenizer.model.latent_dim)
    throw ParameterError("cf.dim (" + std::to_string(cf.dim) + ") must equal tokenizer.latent_dim (" +
                         std::to_string(tokenizer.model.latent_dim) + ") when alpha > 0");
  recommender.validate();
  if (evaluation.ks.empty()) throw ParameterError("evaluation.ks must not be empty");
  for (std::size_t k : evaluation.ks) {
    if (k == 0) throw ParameterError("evaluation.ks entries must be >= 1");
    if (k > recommender.beam.beam_width)
      throw ParameterError("evaluation K=" + std::to_string(k) + " exceeds the beam width " +
                           std::to_string(recommender.beam.beam_width));
  }
  if (evaluation.generation_top == 0 || evaluation.histogram_group == 0)
    throw ParameterError("evaluation.generation_top and histogram_group must be >= 1");
}

nlohmann::json PipelineConfig::to_json() const {
  const auto& t = tokenizer;
  const auto& r = recommender;
  return {
      {"seed", seed},
      {"data",
       {{"interactions", data.interactions},
        {"semantic", data.semantic},
        {"min_count", data.min_count},
        {"synthetic", synthetic_json(data.synthetic)}}},
      {"cf", {{"dim", cf.dim}, {"epochs", cf.epochs}, {"lr", cf.lr}, {"reg", cf.reg}, {"init_stddev", cf.init_stddev}}},
      {"tokenizer",
       {{"levels", t.model.levels},
        {"codebook_size", t.model.codebook_size},
        {"latent_dim", t.model.latent_dim},
        {"hidden", t.model.hidden},
        {"activation", to_string(t.model.activation)},
        {"mu", t.model.mu},
        {"codebook_init_stddev", t.model.codebook_init_stddev},
        {"alpha", t.alpha},
        {"beta", t.beta},
        {"clusters", t.clusters},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"lr", t.optimizer.lr},
        {"weight_decay", t.optimizer.weight_decay},
        {"contrastive_mode", to_string(t.contrastive_mode)},
        {"similarity", to_string(t.similarity)},
        {"diversity_all_levels", t.diversity_all_levels},
        {"cluster_refresh_every", t.cluster_refresh_every},
        {"dead_code_restart", t.dead_code_restart},
        {"kmeans_init", t.kmeans_init}}},
      {"recommender",
       {{"layers", r.model.layers},
        {"width", r.model.width},
        {"heads", r.model.heads},
        {"ffn_multiplier", r.model.ffn_multiplier},
        {"init_stddev", r.model.init_stddev},
        {"example_mode", to_string(r.examples.mode)},
        {"max_history", r.examples.max_history},
        {"epochs", r.epochs},
        {"batch_size", r.batch_size},
        {"lr", r.optimizer.lr},
        {"weight_decay", r.optimizer.weight_decay},
        {"tau", r.tau},
        {"eval_every", r.eval_every},
        {"validation_users", r.validation_users},
        {"beam_width", r.beam.beam_width},
        {"inference_tau", r.beam.inference_tau},
        {"top_k", r.top_k},
        {"keep_best", r.keep_best}}},
      {"evaluation",
       {{"ks", evaluation.ks},
        {"overlap_mode", to_string(evaluation.overlap_mode)},
        {"generation_top", evaluation.generation_top},
        {"histogram_group", evaluation.histogram_group}}},
  };
}

void merge_strict(nlohmann::json& base, const nlohmann::json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw ParameterError("configuration " + (path.empty() ? "root" : path) + " must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ParameterError("unknown configuration key '" + full + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object())
      merge_strict(slot, value, full);
    else
      slot = value;
  }
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& overlay) {
  nlohmann::json j = PipelineConfig().to_json();
  merge_strict(j, overlay);

  PipelineConfig c;
  c.seed = get<std::uint64_t>(j, "root", "seed");
  const auto& d = j["data"];
  c.data.interactions = get<std::string>(d, "data", "interactions");
  c.data.semantic = get<std::string>(d, "data", "semantic");
  c.data.min_count = get<std::size_t>(d, "data", "min_count");
  c.data.synthetic = SyntheticSpec::from_json(d["synthetic"]);

  const auto& f = j["cf"];
  c.cf.dim = get<std::size_t>(f, "cf", "dim");
  c.cf.epochs = get<std::size_t>(f, "cf", "epochs");
  c.cf.lr = get<double>(f, "cf", "lr");
  c.cf.reg = get<double>(f, "cf", "reg");
  c.cf.init_stddev = get<double>(f, "cf", "init_stddev");

  const auto& t = j["tokenizer"];
  auto& tc = c.tokenizer;
  tc.model.levels = get<std::size_t>(t, "tokenizer", "levels");
  tc.model.codebook_size = get<std::size_t>(t, "tokenizer", "codebook_size");
  tc.model.latent_dim = get<std::size_t>(t, "tokenizer", "latent_dim");
  tc.model.hidden = get<std::vector<std::size_t>>(t, "tokenizer", "hidden");
  tc.model.activation = parse_activation(get<std::string>(t, "tokenizer", "activation"));
  tc.model.mu = get<double>(t, "tokenizer", "mu");
  tc.model.codebook_init_stddev = get<double>(t, "tokenizer", "codebook_init_stddev");
  tc.alpha = get<double>(t, "tokenizer", "alpha");
  tc.beta = get<double>(t, "tokenizer", "beta");
  tc.clusters = get<std::size_t>(t, "tokenizer", "clusters");
  tc.batch_size = get<std::size_t>(t, "tokenizer", "batch_size");
  tc.epochs = get<std::size_t>(t, "tokenizer", "epochs");
  tc.optimizer.lr = get<double>(t, "tokenizer", "lr");
  tc.optimizer.weight_decay = get<double>(t, "tokenizer", "weight_decay");
  tc.contrastive_mode = parse_contrastive_mode(get<std::string>(t, "tokenizer", "contrastive_mode"));
  tc.similarity = parse_similarity(get<std::string>(t, "tokenizer", "similarity"));
  tc.diversity_all_levels = get<bool>(t, "tokenizer", "diversity_all_levels");
  tc.cluster_refresh_every = get<std::size_t>(t, "tokenizer", "cluster_refresh_every");
  tc.dead_code_restart = get<bool>(t, "tokenizer", "dead_code_restart");
  tc.kmeans_init = get<bool>(t, "tokenizer", "kmeans_init");

  const auto& r = j["recommender"];
  auto& rc = c.recommender;
  rc.model.layers = get<std::size_t>(r, "recommender", "layers");
  rc.model.width = get<std::size_t>(r, "recommender", "width");
  rc.model.heads = get<std::size_t>(r, "recommender", "heads");
  rc.model.ffn_multiplier = get<std::size_t>(r, "recommender", "ffn_multiplier");
  rc.model.init_stddev = get<double>(r, "recommender", "init_stddev");
  rc.examples.mode = parse_example_mode(get<std::string>(r, "recommender", "example_mode"));
  rc.examples.max_history = get<std::size_t>(r, "recommender", "max_history");
  rc.epochs = get<std::size_t>(r, "recommender", "epochs");
  rc.batch_size = get<std::size_t>(r, "recommender", "batch_size");
  rc.optimizer.lr = get<double>(r, "recommender", "lr");
  rc.optimizer.weight_decay = get<double>(r, "recommender", "weight_decay");
  rc.tau = get<double>(r, "recommender", "tau");
  rc.eval_every = get<std::size_t>(r, "recommender", "eval_every");
  rc.validation_users = get<std::size_t>(r, "recommender", "validation_users");
  rc.beam.beam_width = get<std::size_t>(r, "recommender", "beam_width");
  rc.beam.inference_tau = get<double>(r, "recommender", "inference_tau");
  rc.top_k = get<std::size_t>(r, "recommender", "top_k");
  rc.keep_best = get<bool>(r, "recommender", "keep_best");

  const auto& e = j["evaluation"];
  c.evaluation.ks = get<std::vector<std::size_t>>(e, "evaluation", "ks");
  c.evaluation.overlap_mode = parse_overlap_mode(get<std::string>(e, "evaluation", "overlap_mode"));
  c.evaluation.generation_top = get<std::size_t>(e, "evaluation", "generation_top");
  c.evaluation.histogram_group = get<std::size_t>(e, "evaluation", "histogram_group");

  c.derive_stage_seeds();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void apply_preset(PipelineConfig& config, const std::string& preset) {
  struct Row {
    const char* name;
    double alpha, beta, tau;
  };
  static constexpr Row rows[] = {
      {"0", 0.0, 0.0, 1.0}, {"1", 0.02, 0.0, 1.0}, {"2", 0.0, 1e-4, 1.0}, {"3", 0.02, 1e-4, 1.0}, {"4", 0.02, 1e-4, 0.8},
  };
  for (const Row& r : rows) {
    if (preset != r.name) continue;
    config.tokenizer.alpha = r.alpha;
    config.tokenizer.beta = r.beta;
    config.recommender.tau = r.tau;
    return;
  }
  throw ParameterError("unknown preset '" + preset + "' (0 semantic only, 1 +cf, 2 +diversity, 3 both, 4 both with tau 0.8)");
}

PipelineConfig apply_override(const PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not key.path=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json overlay = nlohmann::json::object();
  nlohmann::json* cursor = &overlay;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*cursor)[part] = value;
      break;
    }
    cursor = &(*cursor)[part];
    start = dot + 1;
  }
  nlohmann::json base = config.to_json();
  merge_strict(base, overlay);
  return PipelineConfig::from_json(base);
}

}  // namespace letter
