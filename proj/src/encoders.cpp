#include "deepsent/encoders.hpp"

#include <cmath>

namespace deepsent {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix uniform_matrix(Index rows, Index cols, double k, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -k, k);
  return m;
}

constexpr const char* kGateSuffix[4] = {"i", "f", "o", "g"};

// z = [x; h]
Vector concat(const Vector& x, const Vector& h) {
  Vector z(x.size() + h.size());
  z << x, h;
  return z;
}

// a += u v^T with a fixed loop order.
void add_outer(Matrix& a, const Vector& u, const Vector& v) {
  for (Index r = 0; r < u.size(); ++r) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    for (Index c = 0; c < v.size(); ++c) a(r, c) += ur * v[c];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LSTM

LstmParams LstmParams::zeros(Index input_dim, Index hidden_dim) {
  if (input_dim < 1 || hidden_dim < 1) throw DimensionError("lstm: dimensions must be positive");
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (int gate = 0; gate < 4; ++gate) {
    p.weights[gate] = Parameter(std::string("lstm.W_") + kGateSuffix[gate],
                                Matrix::Zero(hidden_dim, input_dim + hidden_dim));
    p.biases[gate] = Parameter(std::string("lstm.b_") + kGateSuffix[gate], Matrix::Zero(hidden_dim, 1));
  }
  return p;
}

LstmParams LstmParams::initialized(Index input_dim, Index hidden_dim, Rng& rng) {
  LstmParams p = zeros(input_dim, hidden_dim);
  const double k = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim));
  for (int gate = 0; gate < 4; ++gate) {
    p.weights[gate].value = uniform_matrix(hidden_dim, input_dim + hidden_dim, k, rng);
  }
  p.biases[kForgetGate].value.setOnes();
  return p;
}

std::vector<Parameter*> LstmParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& w : weights) out.push_back(&w);
  for (auto& b : biases) out.push_back(&b);
  return out;
}

std::vector<const Parameter*> LstmParams::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& w : weights) out.push_back(&w);
  for (const auto& b : biases) out.push_back(&b);
  return out;
}

namespace {

HiddenState lstm_step_impl(const LstmParams& params, const Vector& x, const HiddenState& state,
                           LstmStepCache* cache) {
  const Index H = params.hidden_dim;
  if (x.size() != params.input_dim || state.h.size() != H || state.c.size() != H) {
    throw DimensionError("lstm_step: input of length " + std::to_string(x.size()) + " and state of " +
                         std::to_string(state.h.size()) + " do not match params (E=" +
                         std::to_string(params.input_dim) + ", H=" + std::to_string(H) + ")");
  }
  Vector z = concat(x, state.h);
  std::array<Vector, 4> act;
  for (int gate = 0; gate < 4; ++gate) {
    act[gate] = matvec(params.weights[gate].value, z) + params.biases[gate].value.col(0);
  }
  for (Index j = 0; j < H; ++j) {
    act[kInputGate][j] = sigmoid(act[kInputGate][j]);
    act[kForgetGate][j] = sigmoid(act[kForgetGate][j]);
    act[kOutputGate][j] = sigmoid(act[kOutputGate][j]);
    act[kCellGate][j] = std::tanh(act[kCellGate][j]);
  }
  HiddenState next;
  next.c = act[kForgetGate].cwiseProduct(state.c) + act[kInputGate].cwiseProduct(act[kCellGate]);
  Vector tanh_c = next.c.array().tanh();
  next.h = act[kOutputGate].cwiseProduct(tanh_c);
  if (cache != nullptr) {
    cache->z = std::move(z);
    cache->i = std::move(act[kInputGate]);
    cache->f = std::move(act[kForgetGate]);
    cache->o = std::move(act[kOutputGate]);
    cache->g = std::move(act[kCellGate]);
    cache->c_prev = state.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

}  // namespace

HiddenState lstm_step(const LstmParams& params, const Vector& x, const HiddenState& state) {
  return lstm_step_impl(params, x, state, nullptr);
}

Vector lstm_forward(const LstmParams& params, const Matrix& rows, LstmTrace& trace) {
  if (rows.cols() != params.input_dim) {
    throw DimensionError("lstm: sequence rows have width " + std::to_string(rows.cols()) +
                         ", expected " + std::to_string(params.input_dim));
  }
  trace.steps.assign(static_cast<std::size_t>(rows.rows()), {});
  HiddenState state = HiddenState::zeros(params.hidden_dim);
  for (Index t = 0; t < rows.rows(); ++t) {
    state = lstm_step_impl(params, rows.row(t).transpose(), state, &trace.steps[static_cast<std::size_t>(t)]);
  }
  return state.h;
}

Vector lstm_encode(const LstmParams& params, const EmbeddedSequence& seq) {
  LstmTrace trace;
  return lstm_forward(params, seq.vectors, trace);
}

LstmGradients lstm_backward(const LstmParams& params, const LstmTrace& trace, const Vector& upstream) {
  if (trace.empty()) throw StateError("lstm_backward: no forward trace available");
  const Index H = params.hidden_dim, E = params.input_dim;
  if (upstream.size() != H) throw DimensionError("lstm_backward: upstream gradient has wrong length");

  LstmGradients grads;
  for (int gate = 0; gate < 4; ++gate) {
    grads.weights[gate] = Matrix::Zero(H, E + H);
    grads.biases[gate] = Vector::Zero(H);
  }
  const auto T = static_cast<Index>(trace.steps.size());
  grads.inputs = Matrix::Zero(T, E);

  Vector dh = upstream;
  Vector dc_next = Vector::Zero(H);
  std::array<Vector, 4> da;
  for (Index t = T - 1; t >= 0; --t) {
    const LstmStepCache& s = trace.steps[static_cast<std::size_t>(t)];
    const Vector d_o = dh.cwiseProduct(s.tanh_c);
    const Vector dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct(
                                    (Vector::Ones(H) - s.tanh_c.cwiseProduct(s.tanh_c)));
    da[kInputGate] = dc.cwiseProduct(s.g).cwiseProduct(s.i).cwiseProduct(Vector::Ones(H) - s.i);
    da[kForgetGate] = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f).cwiseProduct(Vector::Ones(H) - s.f);
    da[kOutputGate] = d_o.cwiseProduct(s.o).cwiseProduct(Vector::Ones(H) - s.o);
    da[kCellGate] = dc.cwiseProduct(s.i).cwiseProduct(Vector::Ones(H) - s.g.cwiseProduct(s.g));
    dc_next = dc.cwiseProduct(s.f);

    Vector dz = Vector::Zero(E + H);
    for (int gate = 0; gate < 4; ++gate) {
      add_outer(grads.weights[gate], da[gate], s.z);
      grads.biases[gate] += da[gate];
      dz += matvec(params.weights[gate].value.transpose(), da[gate]);
    }
    grads.inputs.row(t) = dz.head(E).transpose();
    dh = dz.tail(H);
  }
  return grads;
}

void accumulate(LstmParams& params, const LstmGradients& grads) {
  for (int gate = 0; gate < 4; ++gate) {
    params.weights[gate].grad += grads.weights[gate];
    params.biases[gate].grad += grads.biases[gate];
  }
}

// ---------------------------------------------------------------------------
// Image encoder

std::string to_string(ImageEncoderKind kind) {
  return kind == ImageEncoderKind::tiny_cnn ? "tiny_cnn" : "frozen_features";
}

ImageEncoderKind parse_image_encoder_kind(const std::string& text) {
  if (text == "tiny_cnn") return ImageEncoderKind::tiny_cnn;
  if (text == "frozen_features") return ImageEncoderKind::frozen_features;
  throw ConfigError("unknown image encoder '" + text + "' (expected tiny_cnn or frozen_features)");
}

void ImageEncoderConfig::validate() const {
  if (output_dim != kImageVectorDim) throw ConfigError("image encoder output_dim must be 256");
  if (kind == ImageEncoderKind::tiny_cnn) {
    if (channels.empty()) throw ConfigError("tiny_cnn needs at least one conv layer");
    Index size = image_size;
    for (Index c : channels) {
      if (c < 1) throw ConfigError("tiny_cnn channel counts must be positive");
      if (size < 2) throw ConfigError("tiny_cnn: image_size too small for the pooling stack");
      size /= 2;
    }
  } else if (feature_dim < 1) {
    throw ConfigError("frozen_features needs a positive feature_dim");
  }
}

ImageEncoderParams ImageEncoderParams::initialized(const ImageEncoderConfig& config, Rng& rng) {
  config.validate();
  ImageEncoderParams p;
  Index head_in = 0;
  if (config.kind == ImageEncoderKind::tiny_cnn) {
    Index in_channels = 3;
    for (std::size_t l = 0; l < config.channels.size(); ++l) {
      const Index out_channels = config.channels[l];
      const Index fan_in = 9 * in_channels;
      const std::string prefix = "image.conv" + std::to_string(l + 1);
      p.backbone.emplace_back(prefix + ".W", uniform_matrix(out_channels, fan_in,
                                                            1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
      p.backbone.emplace_back(prefix + ".b", Matrix::Zero(out_channels, 1));
      in_channels = out_channels;
    }
    head_in = in_channels;
    p.head_w = Parameter("image.dense.W", uniform_matrix(config.output_dim, head_in,
                                                         1.0 / std::sqrt(static_cast<double>(head_in)), rng));
    p.head_b = Parameter("image.dense.b", Matrix::Zero(config.output_dim, 1));
  } else {
    head_in = config.feature_dim;
    p.backbone.emplace_back("image.adapter.W", Matrix::Identity(head_in, head_in));
    p.backbone.emplace_back("image.adapter.b", Matrix::Zero(head_in, 1));
    p.head_w = Parameter("image.proj.W", uniform_matrix(config.output_dim, head_in,
                                                        1.0 / std::sqrt(static_cast<double>(head_in)), rng));
    p.head_b = Parameter("image.proj.b", Matrix::Zero(config.output_dim, 1));
  }
  return p;
}

ImageEncoderParams ImageEncoderParams::placeholder() {
  ImageEncoderParams p;
  p.head_w = Parameter("image.head.W", Matrix(0, 0));
  p.head_b = Parameter("image.head.b", Matrix(0, 0));
  return p;
}

std::vector<Parameter*> ImageEncoderParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : backbone) out.push_back(&b);
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const Parameter*> ImageEncoderParams::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& b : backbone) out.push_back(&b);
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<Parameter*> ImageEncoderParams::trainable(const ImageEncoderConfig& config) {
  std::vector<Parameter*> out;
  if (config.trainable_backbone) {
    for (auto& b : backbone) out.push_back(&b);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<std::string> ImageGradients::names(const ImageEncoderParams& params) const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < backbone.size(); ++k) out.push_back(params.backbone[k].name);
  out.push_back(params.head_w.name);
  out.push_back(params.head_b.name);
  return out;
}

namespace {

// Input rows are pixels (row-major over H x W), columns are channels.
Matrix im2col(const Matrix& input, Index height, Index width) {
  const Index channels = input.cols();
  Matrix patches = Matrix::Zero(height * width, 9 * channels);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index row = y * width + x;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= height) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = x + kx - 1;
          if (sx < 0 || sx >= width) continue;
          patches.block(row, (ky * 3 + kx) * channels, 1, channels) = input.row(sy * width + sx);
        }
      }
    }
  }
  return patches;
}

Matrix col2im(const Matrix& d_patches, Index height, Index width, Index channels) {
  Matrix d_input = Matrix::Zero(height * width, channels);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index row = y * width + x;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sy = y + ky - 1;
        if (sy < 0 || sy >= height) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sx = x + kx - 1;
          if (sx < 0 || sx >= width) continue;
          d_input.row(sy * width + sx) += d_patches.block(row, (ky * 3 + kx) * channels, 1, channels);
        }
      }
    }
  }
  return d_input;
}

Vector cnn_forward(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                   const Tensor& image, ImageTrace& trace) {
  const Index size = config.image_size;
  if (image.shape != std::vector<Index>{size, size, 3}) {
    throw DimensionError("tiny_cnn expects a " + std::to_string(size) + "x" + std::to_string(size) +
                         "x3 image, got " + shape_string(std::span<const Index>(image.shape)));
  }
  Matrix activ = Eigen::Map<const Matrix>(image.data.data(), size * size, 3);
  Index height = size, width = size;
  trace.conv.clear();
  for (std::size_t l = 0; l < config.channels.size(); ++l) {
    const Parameter& w = params.backbone[2 * l];
    const Parameter& b = params.backbone[2 * l + 1];
    ConvLayerCache cache;
    cache.height = height;
    cache.width = width;
    cache.patches = im2col(activ, height, width);
    cache.pre_activation = matmul(cache.patches, w.value.transpose());
    cache.pre_activation.rowwise() += b.value.col(0).transpose();

    const Index channels = w.value.rows();
    const Index ph = height / 2, pw = width / 2;
    Matrix pooled(ph * pw, channels);
    cache.pool_argmax.assign(static_cast<std::size_t>(ph * pw * channels), 0);
    for (Index py = 0; py < ph; ++py) {
      for (Index px = 0; px < pw; ++px) {
        for (Index ch = 0; ch < channels; ++ch) {
          Index best = (2 * py) * width + 2 * px;
          double best_val = std::max(0.0, cache.pre_activation(best, ch));
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) {
              const Index r = (2 * py + dy) * width + (2 * px + dx);
              const double v = std::max(0.0, cache.pre_activation(r, ch));
              if (v > best_val) {
                best_val = v;
                best = r;
              }
            }
          }
          pooled(py * pw + px, ch) = best_val;
          cache.pool_argmax[static_cast<std::size_t>((py * pw + px) * channels + ch)] = best;
        }
      }
    }
    cache.pooled_height = ph;
    cache.pooled_width = pw;
    trace.conv.push_back(std::move(cache));
    activ = std::move(pooled);
    height = ph;
    width = pw;
  }
  trace.pooled = activ.colwise().mean().transpose();
  return matvec(params.head_w.value, trace.pooled) + params.head_b.value.col(0);
}

}  // namespace

Vector image_forward(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                     const ImageInput& input, ImageTrace& trace) {
  if (kind_of(input) != config.input_kind()) {
    throw ConfigError("image encoder '" + to_string(config.kind) + "' cannot take " +
                      to_string(kind_of(input)) + " input");
  }
  trace = ImageTrace{};
  Vector out;
  if (config.kind == ImageEncoderKind::tiny_cnn) {
    out = cnn_forward(config, params, std::get<Tensor>(input), trace);
  } else {
    const Vector& f = std::get<Vector>(input);
    if (f.size() != config.feature_dim) {
      throw DimensionError("feature vector has length " + std::to_string(f.size()) + ", expected " +
                           std::to_string(config.feature_dim));
    }
    trace.feature = f;
    trace.adapted = matvec(params.backbone[0].value, f) + params.backbone[1].value.col(0);
    out = matvec(params.head_w.value, trace.adapted) + params.head_b.value.col(0);
  }
  trace.valid = true;
  return out;
}

Vector image_encode(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                    const ImageInput& input) {
  ImageTrace trace;
  return image_forward(config, params, input, trace);
}

ImageGradients image_backward(const ImageEncoderConfig& config, const ImageEncoderParams& params,
                              const ImageTrace& trace, const Vector& upstream) {
  if (!trace.valid) throw StateError("image_backward: no forward trace available");
  if (upstream.size() != config.output_dim) throw DimensionError("image_backward: upstream has wrong length");

  ImageGradients grads;
  const Vector& head_in = config.kind == ImageEncoderKind::tiny_cnn ? trace.pooled : trace.adapted;
  grads.head_w = Matrix::Zero(params.head_w.value.rows(), params.head_w.value.cols());
  add_outer(grads.head_w, upstream, head_in);
  grads.head_b = upstream;
  if (!config.trainable_backbone) return grads;

  const Vector d_head_in = matvec(params.head_w.value.transpose(), upstream);
  if (config.kind == ImageEncoderKind::frozen_features) {
    Matrix dw = Matrix::Zero(params.backbone[0].value.rows(), params.backbone[0].value.cols());
    add_outer(dw, d_head_in, trace.feature);
    grads.backbone.push_back(std::move(dw));
    grads.backbone.push_back(d_head_in);
    return grads;
  }

  grads.backbone.resize(params.backbone.size());
  // Global average pool: spread evenly over the last pooled map.
  const ConvLayerCache& last = trace.conv.back();
  const Index last_cells = last.pooled_height * last.pooled_width;
  Matrix d_activ = (d_head_in / static_cast<double>(last_cells)).transpose().replicate(last_cells, 1);

  for (std::size_t l = trace.conv.size(); l-- > 0;) {
    const ConvLayerCache& cache = trace.conv[l];
    const Parameter& w = params.backbone[2 * l];
    const Index channels = w.value.rows();
    Matrix d_pre = Matrix::Zero(cache.height * cache.width, channels);
    for (Index cell = 0; cell < cache.pooled_height * cache.pooled_width; ++cell) {
      for (Index ch = 0; ch < channels; ++ch) {
        const Index r = cache.pool_argmax[static_cast<std::size_t>(cell * channels + ch)];
        if (cache.pre_activation(r, ch) > 0.0) d_pre(r, ch) += d_activ(cell, ch);
      }
    }
    grads.backbone[2 * l] = matmul(d_pre.transpose(), cache.patches);
    grads.backbone[2 * l + 1] = d_pre.colwise().sum().transpose();
    if (l > 0) {
      const Matrix d_patches = matmul(d_pre, w.value);
      d_activ = col2im(d_patches, cache.height, cache.width, w.value.cols() / 9);
    }
  }
  return grads;
}

void accumulate(ImageEncoderParams& params, const ImageGradients& grads) {
  for (std::size_t k = 0; k < grads.backbone.size(); ++k) params.backbone[k].grad += grads.backbone[k];
  params.head_w.grad += grads.head_w;
  params.head_b.grad += grads.head_b;
}

}  // namespace deepsent
