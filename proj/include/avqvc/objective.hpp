#pragma once

#include <array>

#include "avqvc/losses.hpp"
#include "avqvc/model.hpp"

namespace avqvc {

// Forward state for one utterance through the encoder and quantizer.
struct EncodedPass {
  ConvStack::Tape encoder;
  QuantizationResult quant;
  RowVector speaker;

  const Matrix& latent() const { return encoder.output(); }
};

inline EncodedPass encode_pass(const Model& model, const Matrix& mel) {
  require_shape(mel.cols() == model.config().n_mels,
                "encode: mel has " + std::to_string(mel.cols()) + " bins, model expects " +
                    std::to_string(model.config().n_mels));
  EncodedPass p;
  p.encoder = model.encoder().forward(mel, model.params());
  p.quant = quantize(p.latent(), model.codebook());
  p.speaker = (p.latent() - p.quant.quantized).colwise().mean();
  return p;
}

// Backward through the quantizer and encoder.
//
// Gradient contract:
//  * d_content (gradient at the decoder's content input) is copied unchanged
//    onto the latent (straight-through);
//  * the speaker vector is mean_t(latent - content) with the content held
//    constant, so d_speaker reaches every latent frame as d_speaker / T;
//  * codebook entries receive gradient only from the latent loss.
inline void encode_backward(const Model& model, const EncodedPass& p, const Matrix& d_content,
                            const RowVector& d_speaker, double latent_scale, ParameterSet& grads) {
  const double t = static_cast<double>(p.latent().rows());
  Matrix d_latent = d_content;
  d_latent.rowwise() += d_speaker / t;
  latent_loss_backward(p.latent(), p.quant, latent_scale, d_latent, grads[model.codebook_index()]);
  model.encoder().backward(p.encoder, d_latent, model.params(), grads);
}

// Gradient of scale * mean|pred - target| with respect to pred.
inline Matrix l1_mean_grad(const Matrix& pred, const Matrix& target, double scale) {
  const double n = static_cast<double>(pred.size());
  return ((pred - target).array().unaryExpr([](double v) { return sign(v); }) * (scale / n)).matrix();
}

inline RowVector sign_vec(const RowVector& v) { return v.unaryExpr([](double x) { return sign(x); }); }

// Triplet objective: x1 decoded with x2's speaker vector, x2 with x1's, and
// x3 through its own path.
struct TripletPass {
  std::array<EncodedPass, 3> enc;
  std::array<ConvStack::Tape, 3> dec;
  std::array<const Matrix*, 3> target{};
  LossParts parts;
};

// Which utterance supplies the speaker vector for each reconstruction.
inline constexpr std::array<int, 3> kSpeakerSource = {1, 0, 2};

inline TripletPass triplet_forward(const Model& model, const Matrix& x1, const Matrix& x2, const Matrix& x3) {
  TripletPass p;
  p.target = {&x1, &x2, &x3};
  for (int i = 0; i < 3; ++i) p.enc[i] = encode_pass(model, *p.target[i]);
  for (int i = 0; i < 3; ++i) {
    Matrix in = decoder_input(p.enc[i].quant.quantized, p.enc[kSpeakerSource[i]].speaker);
    if (model.decoder_input_tap) model.decoder_input_tap(in);
    p.dec[i] = model.decoder().forward(in, model.params());
  }
  p.parts.recon = recon_loss(p.dec[0].output(), x1, p.dec[1].output(), x2, p.dec[2].output(), x3);
  p.parts.latent = 0.0;
  for (int i = 0; i < 3; ++i) p.parts.latent += latent_loss(p.enc[i].latent(), p.enc[i].quant.quantized);
  const auto& s1 = p.enc[0].speaker;
  const auto& s2 = p.enc[1].speaker;
  const auto& s3 = p.enc[2].speaker;
  p.parts.speaker = speaker_loss(s1, s2);
  p.parts.diff = diff_loss(s1, s2, s3);
  return p;
}

// Accumulates scale * d(total)/d(params) into grads.
inline void triplet_backward(const Model& model, const TripletPass& p, const LossWeights& w, double scale,
                             ParameterSet& grads) {
  const Eigen::Index d = model.config().latent_dim;
  std::array<RowVector, 3> d_speaker;
  std::array<Matrix, 3> d_content;
  for (auto& v : d_speaker) v = RowVector::Zero(d);
  for (int i = 0; i < 3; ++i) {
    const Matrix d_out = l1_mean_grad(p.dec[i].output(), *p.target[i], w.recon_weight * scale);
    d_content[i] = model.decoder().backward(p.dec[i], d_out, model.params(), grads);
    d_speaker[kSpeakerSource[i]] += d_content[i].colwise().sum();
  }
  const RowVector& s1 = p.enc[0].speaker;
  const RowVector& s2 = p.enc[1].speaker;
  const RowVector& s3 = p.enc[2].speaker;
  const double dd = static_cast<double>(d);
  const RowVector g12 = (w.beta * scale / dd) * sign_vec(s2 - s1);
  d_speaker[1] += g12;
  d_speaker[0] -= g12;
  const bool diff_active = !w.diff_floor || p.parts.diff > *w.diff_floor;
  if (diff_active) {
    const RowVector g23 = (-w.lambda * scale / dd) * sign_vec(s2 - s3);
    const RowVector g13 = (-w.lambda * scale / dd) * sign_vec(s1 - s3);
    d_speaker[1] += g23;
    d_speaker[2] -= g23;
    d_speaker[0] += g13;
    d_speaker[2] -= g13;
  }
  for (int i = 0; i < 3; ++i) encode_backward(model, p.enc[i], d_content[i], d_speaker[i], w.alpha * scale, grads);
}

// Single-utterance self path used by the VQVC baseline mode.
struct SelfPass {
  EncodedPass enc;
  ConvStack::Tape dec;
  const Matrix* target = nullptr;
  LossParts parts;
};

inline SelfPass self_forward(const Model& model, const Matrix& x) {
  SelfPass p;
  p.target = &x;
  p.enc = encode_pass(model, x);
  Matrix in = decoder_input(p.enc.quant.quantized, p.enc.speaker);
  if (model.decoder_input_tap) model.decoder_input_tap(in);
  p.dec = model.decoder().forward(in, model.params());
  p.parts.recon = l1_mean(p.dec.output(), x);
  p.parts.latent = latent_loss(p.enc.latent(), p.enc.quant.quantized);
  return p;
}

inline void self_backward(const Model& model, const SelfPass& p, const LossWeights& w, double scale,
                          ParameterSet& grads) {
  const Matrix d_out = l1_mean_grad(p.dec.output(), *p.target, w.recon_weight * scale);
  const Matrix d_content = model.decoder().backward(p.dec, d_out, model.params(), grads);
  const RowVector d_speaker = d_content.colwise().sum();
  encode_backward(model, p.enc, d_content, d_speaker, w.alpha * scale, grads);
}

}  // namespace avqvc
