#include "deepsent/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "deepsent/encoders.hpp"
#include "deepsent/errors.hpp"
#include "deepsent/model.hpp"
#include "deepsent/random.hpp"

namespace deepsent {

namespace {

constexpr Index kEmbed = 3;
constexpr Index kHidden = 4;
constexpr Index kSteps = 3;
constexpr Index kImageSize = 8;

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * scale;
  return m;
}

Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng) * scale;
  return v;
}

Tensor random_image(Rng& rng) {
  Tensor t({kImageSize, kImageSize, 3});
  for (Index i = 0; i < t.data.size(); ++i) t.data[i] = uniform01(rng);
  return t;
}

ImageEncoderConfig tiny_cnn_config() {
  ImageEncoderConfig c;
  c.kind = ImageEncoderKind::tiny_cnn;
  c.image_size = kImageSize;
  c.channels = {2, 3, 4};
  c.trainable_backbone = true;
  return c;
}

ImageEncoderConfig projection_config() {
  ImageEncoderConfig c;
  c.kind = ImageEncoderKind::frozen_features;
  c.feature_dim = 5;
  c.trainable_backbone = true;
  return c;
}

void corrupt(std::span<Parameter* const> params, const GradcheckOptions& options, const std::string& component) {
  if (options.corrupt_component != component) return;
  for (Parameter* p : params) p->grad *= options.corrupt_scale;
}

GradcheckRow check_lstm(const GradcheckOptions& options, Rng& rng) {
  LstmParams params = LstmParams::initialized(kEmbed, kHidden, rng);
  for (auto& b : params.biases) b.value = random_matrix(kHidden, 1, rng, 0.3);
  const Matrix rows = random_matrix(kSteps, kEmbed, rng);
  const Vector w = random_vector(kHidden, rng);

  auto loss = [&] {
    LstmTrace trace;
    return w.dot(lstm_forward(params, rows, trace));
  };
  for (Parameter* p : params.parameters()) p->zero_grad();
  LstmTrace trace;
  lstm_forward(params, rows, trace);
  accumulate(params, lstm_backward(params, trace, w));
  auto list = params.parameters();
  corrupt(list, options, "lstm");
  return {"lstm", finite_difference_check(loss, list, options.eps)};
}

GradcheckRow check_image(const std::string& component, const ImageEncoderConfig& config, const ImageInput& input,
                         const GradcheckOptions& options, Rng& rng) {
  ImageEncoderParams params = ImageEncoderParams::initialized(config, rng);
  for (Parameter& p : params.backbone) {
    if (p.name.ends_with(".b")) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.1);
  }
  const Vector w = random_vector(config.output_dim, rng, 0.1);

  auto loss = [&] { return w.dot(image_encode(config, params, input)); };
  for (Parameter* p : params.parameters()) p->zero_grad();
  ImageTrace trace;
  image_forward(config, params, input, trace);
  accumulate(params, image_backward(config, params, trace, w));
  auto list = params.trainable(config);
  corrupt(list, options, component);
  return {component, finite_difference_check(loss, list, options.eps)};
}

std::vector<LabeledExample> model_batch(const ModelConfig& config, Rng& rng) {
  std::vector<LabeledExample> batch;
  for (int i = 0; i < 2; ++i) {
    LabeledExample ex;
    ex.id = "grad" + std::to_string(i);
    ex.text.vectors = random_matrix(config.max_len, config.embed_dim, rng);
    ex.text.valid_length = config.max_len;
    if (config.image.kind == ImageEncoderKind::tiny_cnn) {
      ex.image = random_image(rng);
    } else {
      ex.image = random_vector(config.image.feature_dim, rng);
    }
    ex.label = emotion_at(static_cast<int>(uniform_index(rng, kNumEmotions)));
    batch.push_back(std::move(ex));
  }
  return batch;
}

ModelConfig model_config(const ImageEncoderConfig& image, std::uint64_t seed) {
  ModelConfig c;
  c.embed_dim = kEmbed;
  c.hidden_dim = kHidden;
  c.fusion_dim = 6;
  c.max_len = kSteps;
  c.image = image;
  c.seed = seed;
  return c;
}

/// Full model loss; only the parameters whose names start with one of
/// `prefixes` are compared (all trainable ones when empty).
GradcheckRow check_model(const std::string& component, const ImageEncoderConfig& image,
                         const std::vector<std::string>& prefixes, const GradcheckOptions& options, Rng& rng) {
  DeepSentimentModel model(model_config(image, rng()));
  // Non-zero biases keep the relu units away from exact zeros.
  model.fusion_b.value = random_matrix(model.fusion_b.value.rows(), 1, rng, 0.1);
  model.output_b.value = random_matrix(model.output_b.value.rows(), 1, rng, 0.1);
  const auto batch = model_batch(model.config(), rng);

  loss_and_grads(model, batch);
  std::vector<Parameter*> list;
  for (Parameter* p : model.trainable_parameters()) {
    const bool keep = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& s) {
                        return p->name.starts_with(s);
                      });
    if (keep) list.push_back(p);
  }
  corrupt(list, options, component);
  auto loss = [&] { return mean_loss(model, batch); };
  return {component, finite_difference_check(loss, list, options.eps)};
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  return {"lstm", "tiny_cnn", "projection", "fusion", "output", "model"};
}

bool GradcheckReport::passed(double tolerance) const {
  return std::all_of(rows.begin(), rows.end(),
                     [&](const GradcheckRow& r) { return r.result.max_rel_error < tolerance; });
}

const GradcheckRow& GradcheckReport::worst() const {
  if (rows.empty()) throw StateError("empty gradcheck report");
  return *std::max_element(rows.begin(), rows.end(), [](const GradcheckRow& a, const GradcheckRow& b) {
    return a.result.max_rel_error < b.result.max_rel_error;
  });
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (!options.corrupt_component.empty()) {
    const auto names = gradcheck_components();
    if (std::find(names.begin(), names.end(), options.corrupt_component) == names.end()) {
      throw ConfigError("unknown gradcheck component '" + options.corrupt_component + "'");
    }
  }
  Rng rng(options.seed);
  GradcheckReport report;
  report.rows.push_back(check_lstm(options, rng));
  report.rows.push_back(check_image("tiny_cnn", tiny_cnn_config(), random_image(rng), options, rng));
  report.rows.push_back(check_image("projection", projection_config(), random_vector(5, rng), options, rng));
  report.rows.push_back(check_model("fusion", projection_config(), {"fusion."}, options, rng));
  report.rows.push_back(check_model("output", projection_config(), {"output."}, options, rng));
  report.rows.push_back(check_model("model", tiny_cnn_config(), {}, options, rng));
  return report;
}

}  // namespace deepsent
