#pragma once

// The two modality branches: an LSTM over the embedded text and an image
// encoder (small conv net or frozen backbone features plus projection) that
// always emits a 256-d vector. Backward passes are hand-written.

#include <array>
#include <string>
#include <vector>

#include "deepsent/embeddings.hpp"
#include "deepsent/image.hpp"
#include "deepsent/numkernel.hpp"
#include "deepsent/random.hpp"

namespace deepsent {

// ---------------------------------------------------------------------------
// LSTM

enum Gate : int { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCellGate = 3 };

/// Gate weights act on the concatenation [x; h] and are H x (E + H).
struct LstmParams {
  Index input_dim = 0;
  Index hidden_dim = 0;
  std::array<Parameter, 4> weights;  // i, f, o, g
  std::array<Parameter, 4> biases;

  /// All weights and biases zero.
  static LstmParams zeros(Index input_dim, Index hidden_dim);
  /// Weights uniform in [-k, k], k = 1/sqrt(E + H); forget bias 1, others 0.
  static LstmParams initialized(Index input_dim, Index hidden_dim, Rng& rng);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

struct HiddenState {
  Vector h;
  Vector c;
  static HiddenState zeros(Index hidden_dim) {
    return {Vector::Zero(hidden_dim), Vector::Zero(hidden_dim)};
  }
};

/// Everything backward needs from one time step.
struct LstmStepCache {
  Vector z;  // [x; h_prev]
  Vector i, f, o, g;
  Vector c_prev;
  Vector tanh_c;
};

struct LstmTrace {
  std::vector<LstmStepCache> steps;
  bool empty() const { return steps.empty(); }
};

struct LstmGradients {
  std::array<Matrix, 4> weights;
  std::array<Vector, 4> biases;
  Matrix inputs;  // T x E
};

HiddenState lstm_step(const LstmParams& params, const Vector& x, const HiddenState& state);

/// Runs every row of `seq` (pads included) from the zero state.
Vector lstm_encode(const LstmParams& params, const EmbeddedSequence& seq);
Vector lstm_forward(const LstmParams& params, const Matrix& rows, LstmTrace& trace);

/// Backpropagation through time for an upstream gradient on the final h.
LstmGradients lstm_backward(const LstmParams& params, const LstmTrace& trace, const Vector& upstream);

/// Adds gradients into the parameters' accumulators.
void accumulate(LstmParams& params, const LstmGradients& grads);

// ---------------------------------------------------------------------------
// Image encoder

inline constexpr Index kImageVectorDim = 256;

enum class ImageEncoderKind { tiny_cnn, frozen_features };

std::string to_string(ImageEncoderKind kind);
ImageEncoderKind parse_image_encoder_kind(const std::string& text);

struct ImageEncoderConfig {
  ImageEncoderKind kind = ImageEncoderKind::frozen_features;
  Index output_dim = kImageVectorDim;
  // tiny_cnn: 3x3 same-padding conv, relu, 2x2 max pool per entry, then
  // global average pool and a dense layer to output_dim.
  Index image_size = kDefaultImageSize;
  std::vector<Index> channels = {8, 16, 32};
  // frozen_features: backbone feature width.
  Index feature_dim = 0;
  /// tiny_cnn: conv layers train. frozen_features: the top backbone block
  /// (a D x D affine adapter, identity at init) trains.
  bool trainable_backbone = false;

  void validate() const;
  ImageKind input_kind() const {
    return kind == ImageEncoderKind::tiny_cnn ? ImageKind::pixels : ImageKind::features;
  }
};

struct ImageEncoderParams {
  std::vector<Parameter> backbone;  // conv W/b pairs, or adapter W/b
  Parameter head_w;                 // output_dim x (last channels | D)
  Parameter head_b;

  static ImageEncoderParams initialized(const ImageEncoderConfig& config, Rng& rng);
  /// Empty placeholders for a model that never evaluates this branch.
  static ImageEncoderParams placeholder();

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable(const ImageEncoderConfig& config);
};

struct ConvLayerCache {
  Index height = 0, width = 0;  // input spatial size
  Matrix patches;               // (H*W) x (9*Cin)
  Matrix pre_activation;        // (H*W) x Cout
  std::vector<Index> pool_argmax;
  Index pooled_height = 0, pooled_width = 0;
};

struct ImageTrace {
  bool valid = false;
  std::vector<ConvLayerCache> conv;
  Vector pooled;    // tiny_cnn: global average pool output
  Vector feature;   // frozen_features: raw input
  Vector adapted;   // frozen_features: adapter output
};

/// Parameter gradients for trainable tensors only. Backbone entries are
/// empty when the backbone is frozen.
struct ImageGradients {
  std::vector<Matrix> backbone;
  Matrix head_w;
  Matrix head_b;
  bool has_backbone() const { return !backbone.empty(); }
  std::vector<std::string> names(const ImageEncoderParams& params) const;
};

Vector image_encode(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                    const ImageInput& input);
Vector image_forward(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                     const ImageInput& input, ImageTrace& trace);
ImageGradients image_backward(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                              const ImageTrace& trace, const Vector& upstream);
void accumulate(ImageEncoderParams& params, const ImageGradients& grads);

}  // namespace deepsent
