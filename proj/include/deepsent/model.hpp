#pragma once

// The fusion network: image vector and LSTM text vector are concatenated,
// passed through a relu dense layer and a 15-way softmax. Single-branch
// ablations zero the absent branch's slot of the concatenation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepsent/dataset.hpp"
#include "deepsent/encoders.hpp"

namespace deepsent {

enum class ModelMode { multimodal, text_only, image_only };

std::string to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& text);

struct ModelConfig {
  ModelMode mode = ModelMode::multimodal;
  Index embed_dim = 25;
  Index hidden_dim = 64;
  Index fusion_dim = 128;
  Index max_len = kDefaultMaxLen;
  ImageEncoderConfig image;
  std::uint64_t seed = 0;

  bool uses_text() const { return mode != ModelMode::image_only; }
  bool uses_image() const { return mode != ModelMode::text_only; }
  void validate() const;
};

class DeepSentimentModel {
 public:
  /// Seeded initialization; see the encoders for per-branch schemes. Dense
  /// weights are uniform in +-1/sqrt(fan_in), biases zero.
  explicit DeepSentimentModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Index fusion_input_dim() const { return kImageVectorDim + config_.hidden_dim; }

  LstmParams lstm;
  ImageEncoderParams image;
  Parameter fusion_w;  // F x (256 + H)
  Parameter fusion_b;
  Parameter output_w;  // 15 x F
  Parameter output_b;

  /// Every tensor, including frozen and placeholder ones, in a fixed order.
  std::vector<Parameter*> all_parameters();
  std::vector<const Parameter*> all_parameters() const;
  /// Tensors the optimizer updates under the current mode and freeze flags.
  std::vector<Parameter*> trainable_parameters();
  void zero_grad();

 private:
  ModelConfig config_;
};

/// Intermediate values of one forward pass.
struct ForwardTrace {
  LstmTrace lstm;
  ImageTrace image;
  Vector fusion_input;
  Vector fusion_pre;
  Vector fusion_out;
  Vector probabilities;
};

/// Posterior over the 15 emotions for one example.
Vector forward(const DeepSentimentModel& model, const LabeledExample& example);
Vector forward(const DeepSentimentModel& model, const LabeledExample& example, ForwardTrace& trace);

/// Text and image branch vectors, each zero when the mode masks it.
Vector text_vector(const DeepSentimentModel& model, const EmbeddedSequence& text);
Vector image_vector(const DeepSentimentModel& model, const ImageInput& image);

/// Fusion head on precomputed branch vectors.
Vector fuse(const DeepSentimentModel& model, const Vector& image_vec, const Vector& text_vec);

/// Mean cross-entropy over the batch; the trainable parameters' gradients
/// are overwritten with its exact gradient.
double loss_and_grads(DeepSentimentModel& model, std::span<const LabeledExample> batch);

/// Mean cross-entropy without touching gradients.
double mean_loss(const DeepSentimentModel& model, std::span<const LabeledExample> batch);

enum class SplitTag { train, test };
std::string to_string(SplitTag tag);

struct EpochMetrics {
  int epoch = 0;
  SplitTag split = SplitTag::train;
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  Index batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Record wall-clock seconds; off keeps metrics bit-reproducible.
  bool record_time = false;

  void validate() const;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  OptimizerState optimizer;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Epoch 0 holds the metrics before any update; epochs 1..N follow each
/// pass. Test metrics are recorded when `test` is non-empty.
TrainResult train(DeepSentimentModel& model, std::span<const LabeledExample> train_set,
                  const TrainConfig& config, std::span<const LabeledExample> test = {},
                  const EpochCallback& on_epoch = {});

/// Accuracy uses argmax with ties to the lowest emotion index.
EpochMetrics evaluate(const DeepSentimentModel& model, std::span<const LabeledExample> dataset,
                      SplitTag split = SplitTag::test);

std::string metrics_csv(std::span<const EpochMetrics> metrics);

/// Versioned, length-prefixed little-endian binary.
std::string serialize_checkpoint(const DeepSentimentModel& model);
DeepSentimentModel parse_checkpoint(std::string_view bytes);
void save_checkpoint(const DeepSentimentModel& model, const std::filesystem::path& path);
DeepSentimentModel load_checkpoint(const std::filesystem::path& path);

}  // namespace deepsent
