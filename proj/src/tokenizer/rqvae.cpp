#include "letter/tokenizer/rqvae.hpp"

#include "letter/core/error.hpp"

namespace letter {

RqVae::RqVae(const RqVaeConfig& config, SeededRng& rng) : config_(config) {
  if (config.input_dim == 0 || config.latent_dim == 0)
    throw ParameterError("RqVae: input_dim and latent_dim must be positive");
  if (config.mu < 0.0) throw ParameterError("RqVae: mu must be nonnegative");
  std::vector<std::size_t> reversed(config.hidden.rbegin(), config.hidden.rend());
  SeededRng enc_rng = rng.split("encoder");
  SeededRng dec_rng = rng.split("decoder");
  SeededRng cb_rng = rng.split("codebook");
  encoder_ = Mlp("encoder", config.input_dim, config.hidden, config.latent_dim, config.activation, enc_rng);
  decoder_ = Mlp("decoder", config.latent_dim, reversed, config.input_dim, config.activation, dec_rng);
  codebooks_ = CodebookSet(config.levels, config.codebook_size, config.latent_dim, config.codebook_init_stddev,
                           cb_rng);
}

Tensor RqVae::encode(const Tensor& s) const { return encoder_.evaluate(s); }

std::vector<double> RqVae::encode(std::span<const double> s) const {
  Tensor row = Tensor::matrix(1, s.size(), std::vector<double>(s.begin(), s.end()));
  return encoder_.evaluate(row).storage();
}

Tensor RqVae::decode(const Tensor& z) const { return decoder_.evaluate(z); }

RqVaeForward RqVae::forward(ad::Tape& tape, const Tensor& s) {
  if (s.rank() != 2 || s.rows() == 0) throw DimensionError("RqVae::forward expects a nonempty [B x d_s] batch");
  const double inv_b = 1.0 / static_cast<double>(s.rows());
  RqVaeForward f;
  ad::Var input = tape.constant(s);
  f.z = encoder_.forward(tape, input);
  f.quant = quantize_batch(f.z.value(), codebooks_);

  ad::Var residual = f.z;
  ad::Var codebook_sum, commit_sum;
  for (std::size_t l = 0; l < codebooks_.levels(); ++l) {
    ad::Var table = tape.param(codebooks_.level(l));
    const auto idx = f.quant.level_codes(l);
    ad::Var e = ad::gather_rows(table, idx);
    ad::Var e_sg = ad::stop_gradient(e);
    ad::Var cb_term = ad::sum_squares(ad::sub(ad::stop_gradient(residual), e));
    ad::Var commit_term = ad::sum_squares(ad::sub(residual, e_sg));
    codebook_sum = l == 0 ? cb_term : ad::add(codebook_sum, cb_term);
    commit_sum = l == 0 ? commit_term : ad::add(commit_sum, commit_term);
    f.zhat = l == 0 ? e : ad::add(f.zhat, e);
    residual = ad::sub(residual, e_sg);
    f.code_tables.push_back(table);
    f.selected.push_back(e);
  }
  ad::Var decoder_in = ad::straight_through(f.z, ad::stop_gradient(f.zhat));
  f.reconstruction = decoder_.forward(tape, decoder_in);
  f.recon_loss = ad::scale(ad::sum_squares(ad::sub(input, f.reconstruction)), inv_b);
  f.codebook_loss = ad::scale(codebook_sum, inv_b);
  f.commitment_loss = ad::scale(commit_sum, inv_b);
  f.semantic_loss = ad::add(ad::add(f.recon_loss, f.codebook_loss), ad::scale(f.commitment_loss, config_.mu));
  return f;
}

std::vector<ad::Parameter*> RqVae::parameters() {
  std::vector<ad::Parameter*> out;
  encoder_.collect(out);
  decoder_.collect(out);
  codebooks_.collect(out);
  return out;
}

void RqVae::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.header["kind"] = "letter-tokenizer";
  ck.header["mu"] = config_.mu;
  ck.header["codebook_init_stddev"] = config_.codebook_init_stddev;
  encoder_.save(ck);
  decoder_.save(ck);
  codebooks_.save(ck);
  write_checkpoint(path, ck);
}

RqVae RqVae::load(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", "") != "letter-tokenizer")
    throw FormatError(path.string() + " is not a tokenizer checkpoint");
  RqVae m;
  m.encoder_ = Mlp::load(ck, "encoder");
  m.decoder_ = Mlp::load(ck, "decoder");
  m.codebooks_ = CodebookSet::load(ck);
  m.config_.input_dim = m.encoder_.input_dim();
  m.config_.latent_dim = m.encoder_.output_dim();
  m.config_.hidden = m.encoder_.hidden();
  m.config_.activation = m.encoder_.activation();
  m.config_.levels = m.codebooks_.levels();
  m.config_.codebook_size = m.codebooks_.size();
  m.config_.mu = ck.header.at("mu").get<double>();
  m.config_.codebook_init_stddev = ck.header.value("codebook_init_stddev", 0.1);
  if (m.decoder_.input_dim() != m.config_.latent_dim || m.codebooks_.dim() != m.config_.latent_dim)
    throw FormatError("tokenizer checkpoint has inconsistent latent widths");
  return m;
}

double semantic_loss(std::span<const double> s, std::span<const double> s_hat, const QuantizationResult& result,
                     double mu) {
  if (mu < 0.0) throw ParameterError("semantic_loss: mu must be nonnegative");
  if (s.size() != s_hat.size())
    throw DimensionError("semantic_loss: s has " + std::to_string(s.size()) + " values, reconstruction has " +
                         std::to_string(s_hat.size()));
  double recon = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) recon += (s[j] - s_hat[j]) * (s[j] - s_hat[j]);
  double quant = 0.0;
  for (std::size_t l = 1; l < result.residuals.size(); ++l)
    for (double r : result.residuals[l]) quant += r * r;
  return recon + (1.0 + mu) * quant;
}

}  // namespace letter
