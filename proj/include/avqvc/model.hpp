#pragma once

#include <functional>
#include <string>

#include "avqvc/frontend.hpp"
#include "avqvc/kv_config.hpp"
#include "avqvc/nn.hpp"
#include "avqvc/vq.hpp"

namespace avqvc {

struct ModelConfig {
  int n_mels = 80;
  int latent_dim = 64;
  int encoder_width = 256;
  int encoder_depth = 2;  // hidden layers before the latent projection
  int decoder_width = 256;
  int decoder_depth = 2;  // hidden layers before the mel projection
  int kernel_size = 5;
  int codebook_size = kDefaultCodebookSize;
  double codebook_init_scale = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  // Full-size configuration, roughly 5.8M parameters.
  static ModelConfig paper_scale() {
    ModelConfig c;
    c.encoder_width = c.decoder_width = 512;
    c.encoder_depth = c.decoder_depth = 3;
    return c;
  }

  void validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorKind::config, "model: " + why); };
    if (n_mels < 1) bad("n_mels must be >= 1");
    if (latent_dim < 1) bad("latent_dim must be >= 1");
    if (codebook_size < 1) bad("codebook_size must be >= 1");
    if (encoder_width < 1 || decoder_width < 1) bad("layer widths must be >= 1");
    if (encoder_depth < 0 || decoder_depth < 0) bad("depths must be >= 0");
    if (kernel_size < 1) bad("kernel_size must be >= 1");
    if (!(codebook_init_scale > 0.0)) bad("codebook_init_scale must be positive");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("model.n_mels", n_mels);
    kv.set("model.latent_dim", latent_dim);
    kv.set("model.encoder_width", encoder_width);
    kv.set("model.encoder_depth", encoder_depth);
    kv.set("model.decoder_width", decoder_width);
    kv.set("model.decoder_depth", decoder_depth);
    kv.set("model.kernel_size", kernel_size);
    kv.set("model.codebook_size", codebook_size);
    kv.set("model.codebook_init_scale", codebook_init_scale);
    kv.set("model.seed", seed);
    return kv;
  }

  static ModelConfig from_kv(const KeyValues& kv) { return from_kv(kv, ModelConfig()); }

  static ModelConfig from_kv(const KeyValues& kv, ModelConfig c) {
    auto opt = [&](const char* k) { return kv.has(std::string("model.") + k); };
    auto i = [&](const char* k) { return kv.get_int<int>(std::string("model.") + k); };
    if (opt("n_mels")) c.n_mels = i("n_mels");
    if (opt("latent_dim")) c.latent_dim = i("latent_dim");
    if (opt("encoder_width")) c.encoder_width = i("encoder_width");
    if (opt("encoder_depth")) c.encoder_depth = i("encoder_depth");
    if (opt("decoder_width")) c.decoder_width = i("decoder_width");
    if (opt("decoder_depth")) c.decoder_depth = i("decoder_depth");
    if (opt("kernel_size")) c.kernel_size = i("kernel_size");
    if (opt("codebook_size")) c.codebook_size = i("codebook_size");
    if (opt("codebook_init_scale")) c.codebook_init_scale = kv.get_double("model.codebook_init_scale");
    if (opt("seed")) c.seed = kv.get_int<std::uint64_t>("model.seed");
    return c;
  }
};

// Per-utterance decomposition: content is the quantized latent and speaker is
// the time mean of what quantization removed.
struct LatentBundle {
  Matrix latent;         // T x D
  Matrix content;        // T x D, rows are codebook entries
  RowVector speaker;     // 1 x D
  IndexVector indices;   // codebook index per frame
};

inline LatentBundle decompose(const Matrix& latent, const Matrix& codebook_entries) {
  auto q = quantize(latent, codebook_entries);
  LatentBundle b;
  b.latent = latent;
  b.speaker = (latent - q.quantized).colwise().mean();
  b.content = std::move(q.quantized);
  b.indices = std::move(q.indices);
  return b;
}

inline LatentBundle decompose(const Matrix& latent, const Codebook& codebook) {
  return decompose(latent, codebook.entries);
}

// Decoder input: the speaker vector added to every content frame.
inline Matrix decoder_input(const Matrix& content, const RowVector& speaker) {
  require_shape(content.cols() == speaker.size(),
                "decode: content width " + std::to_string(content.cols()) + " vs speaker dim " +
                    std::to_string(speaker.size()));
  return content.rowwise() + speaker;
}

class Model {
 public:
  Model() = default;

  explicit Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    build();
    Rng rng(derive_seed(config_.seed, 1));
    encoder_.init(params_, rng);
    decoder_.init(params_, rng);
    params_.back() = init_codebook(config_.codebook_size, config_.latent_dim, derive_seed(config_.seed, 2),
                                   config_.codebook_init_scale)
                         .entries;
  }

  // Rebuilds a model around existing parameters (checkpoint load).
  Model(const ModelConfig& config, ParameterSet params) : config_(config) {
    config_.validate();
    build();
    require_shape(params.size() == params_.size(), "model: parameter tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_shape(params[i].rows() == params_[i].rows() && params[i].cols() == params_[i].cols(),
                    "model: parameter tensor " + std::to_string(i) + " has shape " + shape_str(params[i]) +
                        ", expected " + shape_str(params_[i]));
    }
    params_ = std::move(params);
  }

  const ModelConfig& config() const { return config_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const ConvStack& encoder() const { return encoder_; }
  const ConvStack& decoder() const { return decoder_; }
  const Matrix& codebook() const { return params_.back(); }
  Matrix& codebook() { return params_.back(); }
  std::size_t codebook_index() const { return params_.size() - 1; }
  std::size_t parameter_count() const { return avqvc::parameter_count(params_); }

  Matrix encode(const Matrix& mel) const {
    require_shape(mel.cols() == config_.n_mels, "encode: mel has " + std::to_string(mel.cols()) +
                                                    " bins, model expects " + std::to_string(config_.n_mels));
    return encoder_.apply(mel, params_);
  }

  Matrix encode(const MelSpectrogram& mel) const { return encode(mel.frames); }

  LatentBundle decompose(const Matrix& latent) const { return avqvc::decompose(latent, codebook()); }

  LatentBundle analyze(const Matrix& mel) const { return decompose(encode(mel)); }

  Matrix decode(const Matrix& content, const RowVector& speaker) const {
    require_shape(content.cols() == config_.latent_dim, "decode: content width " +
                                                            std::to_string(content.cols()) + ", expected " +
                                                            std::to_string(config_.latent_dim));
    Matrix in = decoder_input(content, speaker);
    if (decoder_input_tap) decoder_input_tap(in);
    return decoder_.apply(in, params_);
  }

  Matrix self_reconstruct(const Matrix& mel) const {
    auto b = analyze(mel);
    return decode(b.content, b.speaker);
  }

  // Observes every decoder input; for instrumentation in tests and tools.
  std::function<void(const Matrix&)> decoder_input_tap;

 private:
  void build() {
    encoder_ = ConvStack::make(config_.n_mels, config_.encoder_width, config_.encoder_depth, config_.latent_dim,
                               config_.kernel_size, 0);
    decoder_ = ConvStack::make(config_.latent_dim, config_.decoder_width, config_.decoder_depth, config_.n_mels,
                               config_.kernel_size, encoder_.n_tensors());
    params_.clear();
    for (const ConvStack* stack : {&encoder_, &decoder_}) {
      for (const auto& l : stack->layers) {
        params_.push_back(Matrix::Zero(static_cast<Eigen::Index>(l.kernel) * l.in, l.out));
        params_.push_back(Matrix::Zero(1, l.out));
      }
    }
    params_.push_back(Matrix::Zero(config_.codebook_size, config_.latent_dim));
  }

  ModelConfig config_;
  ConvStack encoder_;
  ConvStack decoder_;
  ParameterSet params_;
};

}  // namespace avqvc
