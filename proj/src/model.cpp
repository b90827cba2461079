#include "deepsent/model.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "deepsent/io.hpp"

namespace deepsent {

using nlohmann::json;

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::multimodal: return "multimodal";
    case ModelMode::text_only: return "text_only";
    case ModelMode::image_only: return "image_only";
  }
  return "multimodal";
}

ModelMode parse_model_mode(const std::string& text) {
  if (text == "multimodal") return ModelMode::multimodal;
  if (text == "text_only") return ModelMode::text_only;
  if (text == "image_only") return ModelMode::image_only;
  throw ConfigError("unknown mode '" + text + "' (expected multimodal, text_only or image_only)");
}

std::string to_string(SplitTag tag) { return tag == SplitTag::train ? "train" : "test"; }

void ModelConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (fusion_dim < 1) throw ConfigError("fusion_dim must be positive");
  if (max_len < 1) throw ConfigError("max_len must be positive");
  if (uses_image()) image.validate();
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a non-negative number");
  }
}

namespace {

Matrix uniform_matrix(Index rows, Index cols, double k, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -k, k);
  return m;
}

LstmParams lstm_placeholder(Index input_dim, Index hidden_dim) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  constexpr const char* suffix[4] = {"i", "f", "o", "g"};
  for (int gate = 0; gate < 4; ++gate) {
    p.weights[gate] = Parameter(std::string("lstm.W_") + suffix[gate], Matrix(0, 0));
    p.biases[gate] = Parameter(std::string("lstm.b_") + suffix[gate], Matrix(0, 0));
  }
  return p;
}

}  // namespace

DeepSentimentModel::DeepSentimentModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  lstm = config_.uses_text() ? LstmParams::initialized(config_.embed_dim, config_.hidden_dim, rng)
                             : lstm_placeholder(config_.embed_dim, config_.hidden_dim);
  image = config_.uses_image() ? ImageEncoderParams::initialized(config_.image, rng)
                               : ImageEncoderParams::placeholder();
  const Index fin = fusion_input_dim();
  fusion_w = Parameter("fusion.W", uniform_matrix(config_.fusion_dim, fin,
                                                  1.0 / std::sqrt(static_cast<double>(fin)), rng));
  fusion_b = Parameter("fusion.b", Matrix::Zero(config_.fusion_dim, 1));
  output_w = Parameter("output.W", uniform_matrix(kNumEmotions, config_.fusion_dim,
                                                  1.0 / std::sqrt(static_cast<double>(config_.fusion_dim)), rng));
  output_b = Parameter("output.b", Matrix::Zero(kNumEmotions, 1));
}

std::vector<Parameter*> DeepSentimentModel::all_parameters() {
  std::vector<Parameter*> out = lstm.parameters();
  for (Parameter* p : image.parameters()) out.push_back(p);
  for (Parameter* p : {&fusion_w, &fusion_b, &output_w, &output_b}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> DeepSentimentModel::all_parameters() const {
  std::vector<const Parameter*> out = lstm.parameters();
  for (const Parameter* p : image.parameters()) out.push_back(p);
  for (const Parameter* p : {&fusion_w, &fusion_b, &output_w, &output_b}) out.push_back(p);
  return out;
}

std::vector<Parameter*> DeepSentimentModel::trainable_parameters() {
  std::vector<Parameter*> out;
  if (config_.uses_text()) out = lstm.parameters();
  if (config_.uses_image()) {
    for (Parameter* p : image.trainable(config_.image)) out.push_back(p);
  }
  for (Parameter* p : {&fusion_w, &fusion_b, &output_w, &output_b}) out.push_back(p);
  return out;
}

void DeepSentimentModel::zero_grad() {
  for (Parameter* p : all_parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_text_shape(const DeepSentimentModel& model, const Matrix& rows) {
  const auto& cfg = model.config();
  if (rows.rows() != cfg.max_len || rows.cols() != cfg.embed_dim) {
    throw DimensionError("text encoding is " + shape_string(rows) + ", model expects [" +
                         std::to_string(cfg.max_len) + "x" + std::to_string(cfg.embed_dim) + "]");
  }
}

Vector fuse_traced(const DeepSentimentModel& model, const Vector& image_vec, const Vector& text_vec,
                   ForwardTrace& trace) {
  trace.fusion_input.resize(model.fusion_input_dim());
  trace.fusion_input << image_vec, text_vec;
  trace.fusion_pre = matvec(model.fusion_w.value, trace.fusion_input) + model.fusion_b.value.col(0);
  trace.fusion_out = trace.fusion_pre.cwiseMax(0.0);
  const Vector logits = matvec(model.output_w.value, trace.fusion_out) + model.output_b.value.col(0);
  trace.probabilities = softmax(logits);
  return trace.probabilities;
}

double loss_and_grads_impl(DeepSentimentModel& model, std::span<const LabeledExample* const> batch) {
  if (batch.empty()) throw DomainError("loss_and_grads: empty batch");
  model.zero_grad();
  const auto& cfg = model.config();
  double total = 0.0;
  ForwardTrace trace;
  for (const LabeledExample* ex : batch) {
    const Vector probs = forward(model, *ex, trace);
    const Index label = index_of(ex->label);
    const double loss = cross_entropy(probs, label);
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss for example '" + ex->id + "'");
    total += loss;

    const Vector d_logits = cross_entropy_logit_grad(probs, label);
    model.output_w.grad += matmul(d_logits, trace.fusion_out.transpose());
    model.output_b.grad += d_logits;
    Vector d_fusion = matvec(model.output_w.value.transpose(), d_logits);
    for (Index j = 0; j < d_fusion.size(); ++j) {
      if (!(trace.fusion_pre[j] > 0.0)) d_fusion[j] = 0.0;
    }
    model.fusion_w.grad += matmul(d_fusion, trace.fusion_input.transpose());
    model.fusion_b.grad += d_fusion;
    const Vector d_input = matvec(model.fusion_w.value.transpose(), d_fusion);

    if (cfg.uses_image()) {
      accumulate(model.image, image_backward(cfg.image, model.image, trace.image, d_input.head(kImageVectorDim)));
    }
    if (cfg.uses_text()) {
      accumulate(model.lstm, lstm_backward(model.lstm, trace.lstm, d_input.tail(cfg.hidden_dim)));
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (Parameter* p : model.trainable_parameters()) p->grad *= scale;
  return total * scale;
}

std::vector<const LabeledExample*> pointers(std::span<const LabeledExample> examples) {
  std::vector<const LabeledExample*> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(&ex);
  return out;
}

}  // namespace

Vector text_vector(const DeepSentimentModel& model, const EmbeddedSequence& text) {
  if (!model.config().uses_text()) return Vector::Zero(model.config().hidden_dim);
  check_text_shape(model, text.vectors);
  LstmTrace trace;
  return lstm_forward(model.lstm, text.vectors, trace);
}

Vector image_vector(const DeepSentimentModel& model, const ImageInput& image) {
  if (!model.config().uses_image()) return Vector::Zero(kImageVectorDim);
  return image_encode(model.config().image, model.image, image);
}

Vector fuse(const DeepSentimentModel& model, const Vector& image_vec, const Vector& text_vec) {
  if (image_vec.size() != kImageVectorDim || text_vec.size() != model.config().hidden_dim) {
    throw DimensionError("fuse: branch vectors have the wrong length");
  }
  ForwardTrace trace;
  return fuse_traced(model, image_vec, text_vec, trace);
}

Vector forward(const DeepSentimentModel& model, const LabeledExample& example, ForwardTrace& trace) {
  const auto& cfg = model.config();
  Vector text_vec;
  if (cfg.uses_text()) {
    check_text_shape(model, example.text.vectors);
    text_vec = lstm_forward(model.lstm, example.text.vectors, trace.lstm);
  } else {
    text_vec = Vector::Zero(cfg.hidden_dim);
  }
  Vector image_vec = cfg.uses_image() ? image_forward(cfg.image, model.image, example.image, trace.image)
                                      : Vector::Zero(kImageVectorDim);
  return fuse_traced(model, image_vec, text_vec, trace);
}

Vector forward(const DeepSentimentModel& model, const LabeledExample& example) {
  ForwardTrace trace;
  return forward(model, example, trace);
}

double loss_and_grads(DeepSentimentModel& model, std::span<const LabeledExample> batch) {
  const auto ptrs = pointers(batch);
  return loss_and_grads_impl(model, ptrs);
}

double mean_loss(const DeepSentimentModel& model, std::span<const LabeledExample> batch) {
  if (batch.empty()) throw DomainError("mean_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) total += cross_entropy(forward(model, ex), index_of(ex.label));
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Training and evaluation

EpochMetrics evaluate(const DeepSentimentModel& model, std::span<const LabeledExample> dataset, SplitTag split) {
  if (dataset.empty()) throw DomainError("evaluate: empty dataset");
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& ex : dataset) {
    const Vector probs = forward(model, ex);
    loss += cross_entropy(probs, index_of(ex.label));
    if (argmax(probs) == index_of(ex.label)) ++correct;
  }
  EpochMetrics m;
  m.split = split;
  m.loss = loss / static_cast<double>(dataset.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return m;
}

TrainResult train(DeepSentimentModel& model, std::span<const LabeledExample> train_set,
                  const TrainConfig& config, std::span<const LabeledExample> test,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DomainError("train: empty training set");

  TrainResult result;
  result.optimizer.kind = config.optimizer;
  result.optimizer.learning_rate = config.learning_rate;

  auto record = [&](int epoch, double seconds) {
    EpochMetrics m = evaluate(model, train_set, SplitTag::train);
    m.epoch = epoch;
    m.seconds = seconds;
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
    if (!test.empty()) {
      EpochMetrics t = evaluate(model, test, SplitTag::test);
      t.epoch = epoch;
      t.seconds = seconds;
      result.metrics.push_back(t);
      if (on_epoch) on_epoch(t);
    }
  };
  record(0, 0.0);

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<const LabeledExample*> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.shuffle) shuffle(std::span<std::size_t>(order), rng);
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += batch_size, ++batch_index) {
      batch.clear();
      for (std::size_t k = first; k < std::min(first + batch_size, order.size()); ++k) {
        batch.push_back(&train_set[order[k]]);
      }
      try {
        loss_and_grads_impl(model, batch);
        const auto params = model.trainable_parameters();
        optimizer_step(result.optimizer, params);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                            ": " + e.what());
      }
    }
    double seconds = 0.0;
    if (config.record_time) {
      seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    record(epoch, seconds);
  }
  return result;
}

std::string metrics_csv(std::span<const EpochMetrics> metrics) {
  std::string out = "epoch,split,loss,accuracy,seconds\n";
  for (const auto& m : metrics) {
    out += std::to_string(m.epoch) + "," + to_string(m.split) + "," + format_double(m.loss) + "," +
           format_double(m.accuracy) + "," + format_double(m.seconds) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kCheckpointMagic = "DSCK";
constexpr std::uint32_t kCheckpointVersion = 1;

json config_to_json(const ModelConfig& cfg) {
  json emotions = json::array();
  for (auto name : emotion_names()) emotions.push_back(std::string(name));
  return {
      {"emotions", emotions},
      {"mode", to_string(cfg.mode)},
      {"embed_dim", cfg.embed_dim},
      {"hidden_dim", cfg.hidden_dim},
      {"fusion_dim", cfg.fusion_dim},
      {"max_len", cfg.max_len},
      {"seed", cfg.seed},
      {"image",
       {{"kind", to_string(cfg.image.kind)},
        {"output_dim", cfg.image.output_dim},
        {"image_size", cfg.image.image_size},
        {"channels", cfg.image.channels},
        {"feature_dim", cfg.image.feature_dim},
        {"trainable_backbone", cfg.image.trainable_backbone}}},
  };
}

ModelConfig config_from_json(const json& j) {
  json emotions = json::array();
  for (auto name : emotion_names()) emotions.push_back(std::string(name));
  if (j.at("emotions") != emotions) throw CheckpointError("checkpoint emotion order differs from this build");
  ModelConfig cfg;
  cfg.mode = parse_model_mode(j.at("mode").get<std::string>());
  cfg.embed_dim = j.at("embed_dim").get<Index>();
  cfg.hidden_dim = j.at("hidden_dim").get<Index>();
  cfg.fusion_dim = j.at("fusion_dim").get<Index>();
  cfg.max_len = j.at("max_len").get<Index>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const json& im = j.at("image");
  cfg.image.kind = parse_image_encoder_kind(im.at("kind").get<std::string>());
  cfg.image.output_dim = im.at("output_dim").get<Index>();
  cfg.image.image_size = im.at("image_size").get<Index>();
  cfg.image.channels = im.at("channels").get<std::vector<Index>>();
  cfg.image.feature_dim = im.at("feature_dim").get<Index>();
  cfg.image.trainable_backbone = im.at("trainable_backbone").get<bool>();
  return cfg;
}

void write_section(BinaryWriter& w, std::string_view tag, const std::string& payload) {
  w.bytes(tag);
  w.u64(payload.size());
  w.bytes(payload);
}

}  // namespace

std::string serialize_checkpoint(const DeepSentimentModel& model) {
  BinaryWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  write_section(w, "META", config_to_json(model.config()).dump());

  BinaryWriter params;
  const auto all = model.all_parameters();
  params.u32(static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) {
    params.str(p->name);
    params.matrix(p->value);
  }
  write_section(w, "PARM", params.buffer());

  BinaryWriter sum;
  sum.u64(fnv1a64(w.buffer()));
  write_section(w, "CSUM", sum.buffer());
  return w.take();
}

DeepSentimentModel parse_checkpoint(std::string_view bytes) {
  try {
    BinaryReader r(bytes);
    if (r.bytes(4) != kCheckpointMagic) throw CheckpointError("not a checkpoint file (bad magic)");
    if (const auto v = r.u32(); v != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(v) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    std::optional<std::string_view> meta, parm;
    bool checked = false;
    while (!r.at_end()) {
      const std::size_t section_start = r.position();
      const std::string tag(r.bytes(4));
      const auto len = r.u64();
      if (len > r.remaining()) throw CheckpointError("checkpoint section '" + tag + "' is truncated");
      const std::string_view payload = r.bytes(static_cast<std::size_t>(len));
      if (tag == "META") {
        meta = payload;
      } else if (tag == "PARM") {
        parm = payload;
      } else if (tag == "CSUM") {
        BinaryReader s(payload);
        if (s.u64() != fnv1a64(bytes.substr(0, section_start))) {
          throw CheckpointError("checkpoint checksum mismatch (file is corrupt)");
        }
        if (!r.at_end()) throw CheckpointError("data after checkpoint checksum");
        checked = true;
      } else {
        throw CheckpointError("unknown checkpoint section '" + tag + "'");
      }
    }
    if (!checked) throw CheckpointError("checkpoint has no checksum (truncated)");
    if (!meta || !parm) throw CheckpointError("checkpoint is missing a required section");

    DeepSentimentModel model(config_from_json(json::parse(*meta)));
    BinaryReader pr(*parm);
    const auto count = pr.u32();
    auto params = model.all_parameters();
    if (count != params.size()) throw CheckpointError("checkpoint parameter count does not match its config");
    for (Parameter* p : params) {
      const std::string name = pr.str();
      Matrix value = pr.matrix();
      if (name != p->name) throw CheckpointError("checkpoint parameter '" + name + "' where '" + p->name + "' expected");
      if (value.rows() != p->value.rows() || value.cols() != p->value.cols()) {
        throw CheckpointError("checkpoint parameter '" + name + "' has shape " + shape_string(value) +
                              ", expected " + shape_string(p->value));
      }
      p->value = std::move(value);
      p->zero_grad();
    }
    if (!pr.at_end()) throw CheckpointError("trailing bytes in checkpoint parameter section");
    return model;
  } catch (const CheckpointError&) {
    throw;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is invalid: ") + e.what());
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint is corrupt: ") + e.what());
  }
}

void save_checkpoint(const DeepSentimentModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

DeepSentimentModel load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  return parse_checkpoint(bytes);
}

}  // namespace deepsent
