#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond the container types.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deepsent/model.hpp"

namespace oracle {

using deepsent::Index;
using deepsent::Matrix;
using deepsent::Vector;

inline Matrix triple_loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline std::vector<double> exp_normalize(const std::vector<double>& x) {
  std::vector<double> out;
  double total = 0.0;
  for (double v : x) total += std::exp(v);
  for (double v : x) out.push_back(std::exp(v) / total);
  return out;
}

struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Scalar LSTM over the rows of `x`; gate order i, f, o, g.
inline std::vector<double> lstm(const deepsent::LstmParams& p, const Matrix& x) {
  const Index H = p.hidden_dim, E = p.input_dim;
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (Index t = 0; t < x.rows(); ++t) {
    std::vector<double> z;
    for (Index e = 0; e < E; ++e) z.push_back(x(t, e));
    for (Index k = 0; k < H; ++k) z.push_back(h[k]);
    std::vector<double> nh(H), nc(H);
    for (Index k = 0; k < H; ++k) {
      double a[4];
      for (int gate = 0; gate < 4; ++gate) {
        double s = p.biases[gate].value(k, 0);
        for (Index j = 0; j < E + H; ++j) s += p.weights[gate].value(k, j) * z[j];
        a[gate] = s;
      }
      const double i = sigmoid(a[0]), f = sigmoid(a[1]), o = sigmoid(a[2]), g = std::tanh(a[3]);
      nc[k] = f * c[k] + i * g;
      nh[k] = o * std::tanh(nc[k]);
    }
    h = nh;
    c = nc;
  }
  return h;
}

inline std::vector<double> affine(const Matrix& w, const Matrix& b, const std::vector<double>& x) {
  std::vector<double> y(w.rows());
  for (Index r = 0; r < w.rows(); ++r) {
    double s = b(r, 0);
    for (Index c = 0; c < w.cols(); ++c) s += w(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

/// Straight-line 3x3 same-padding conv, relu, 2x2 max pool stack on an
/// H x W x 3 image; then global average pool and the dense head.
inline std::vector<double> tiny_cnn(const deepsent::ImageEncoderParams& p, const deepsent::Tensor& image) {
  Index h = image.shape[0], w = image.shape[1], cin = image.shape[2];
  std::vector<double> act(image.data.data(), image.data.data() + image.data.size());  // (y, x, c)
  for (std::size_t l = 0; l * 2 < p.backbone.size(); ++l) {
    const Matrix& W = p.backbone[2 * l].value;
    const Matrix& B = p.backbone[2 * l + 1].value;
    const Index cout = W.rows();
    std::vector<double> conv(h * w * cout);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        for (Index o = 0; o < cout; ++o) {
          double s = B(o, 0);
          for (Index ky = 0; ky < 3; ++ky) {
            for (Index kx = 0; kx < 3; ++kx) {
              const Index sy = y + ky - 1, sx = x + kx - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              for (Index ci = 0; ci < cin; ++ci) {
                s += W(o, (ky * 3 + kx) * cin + ci) * act[(sy * w + sx) * cin + ci];
              }
            }
          }
          conv[(y * w + x) * cout + o] = std::max(0.0, s);
        }
      }
    }
    const Index ph = h / 2, pw = w / 2;
    std::vector<double> pooled(ph * pw * cout);
    for (Index y = 0; y < ph; ++y) {
      for (Index x = 0; x < pw; ++x) {
        for (Index o = 0; o < cout; ++o) {
          double m = -1.0;
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) m = std::max(m, conv[((2 * y + dy) * w + 2 * x + dx) * cout + o]);
          }
          pooled[(y * pw + x) * cout + o] = m;
        }
      }
    }
    act = pooled;
    h = ph;
    w = pw;
    cin = cout;
  }
  std::vector<double> gap(cin, 0.0);
  for (Index i = 0; i < h * w; ++i) {
    for (Index c = 0; c < cin; ++c) gap[c] += act[i * cin + c];
  }
  for (auto& v : gap) v /= static_cast<double>(h * w);
  return affine(p.head_w.value, p.head_b.value, gap);
}

/// Whole-model forward written out step by step.
inline std::vector<double> model_forward(const deepsent::DeepSentimentModel& m, const deepsent::LabeledExample& ex) {
  const auto& cfg = m.config();
  std::vector<double> text(cfg.hidden_dim, 0.0), img(deepsent::kImageVectorDim, 0.0);
  if (cfg.uses_text()) text = lstm(m.lstm, ex.text.vectors);
  if (cfg.uses_image()) {
    if (cfg.image.kind == deepsent::ImageEncoderKind::tiny_cnn) {
      img = tiny_cnn(m.image, std::get<deepsent::Tensor>(ex.image));
    } else {
      const Vector& f = std::get<Vector>(ex.image);
      std::vector<double> fv(f.data(), f.data() + f.size());
      img = affine(m.image.head_w.value, m.image.head_b.value,
                   affine(m.image.backbone[0].value, m.image.backbone[1].value, fv));
    }
  }
  std::vector<double> joint = img;
  joint.insert(joint.end(), text.begin(), text.end());
  std::vector<double> hidden = affine(m.fusion_w.value, m.fusion_b.value, joint);
  for (auto& v : hidden) v = std::max(0.0, v);
  return exp_normalize(affine(m.output_w.value, m.output_b.value, hidden));
}

inline double pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline std::vector<double> column(const Matrix& m, Index c) {
  std::vector<double> out;
  for (Index i = 0; i < m.rows(); ++i) out.push_back(m(i, c));
  return out;
}

struct NaiveMerge {
  Index left, right;
  double height;
};

/// UPGMA by brute force: clusters are explicit leaf sets and the distance
/// between two clusters is recomputed as the mean over all leaf pairs.
inline std::vector<NaiveMerge> naive_upgma(const Matrix& d) {
  const Index n = d.rows();
  std::map<Index, std::vector<Index>> clusters;
  for (Index i = 0; i < n; ++i) clusters[i] = {i};
  std::vector<NaiveMerge> merges;
  Index next = n;
  while (clusters.size() > 1) {
    double best = INFINITY;
    Index bl = -1, br = -1;
    for (auto a = clusters.begin(); a != clusters.end(); ++a) {
      for (auto b = std::next(a); b != clusters.end(); ++b) {
        double s = 0;
        for (Index i : a->second) {
          for (Index j : b->second) s += d(i, j);
        }
        const double avg = s / static_cast<double>(a->second.size() * b->second.size());
        if (avg < best) {
          best = avg;
          bl = a->first;
          br = b->first;
        }
      }
    }
    std::vector<Index> joined = clusters[bl];
    joined.insert(joined.end(), clusters[br].begin(), clusters[br].end());
    clusters.erase(bl);
    clusters.erase(br);
    clusters[next++] = joined;
    merges.push_back({bl, br, best});
  }
  return merges;
}

/// Eigenpairs of a symmetric matrix by power iteration with Hotelling
/// deflation, each pair polished by a few Rayleigh-quotient steps. Returned
/// largest first.
inline std::vector<double> power_eigenvalues(Matrix a, std::vector<Vector>* vectors = nullptr) {
  const Index p = a.rows();
  std::vector<std::pair<double, Vector>> pairs;
  for (Index k = 0; k < p; ++k) {
    Vector v(p);
    for (Index i = 0; i < p; ++i) v[i] = 1.0 + 0.3 * std::sin(static_cast<double>(i * (k + 2) + 1));
    v.normalize();
    double lambda = v.dot(a * v);
    for (int it = 0; it < 5000; ++it) {
      Vector w = a * v;
      const double norm = w.norm();
      if (norm < 1e-300) break;
      w /= norm;
      const double next = w.dot(a * w);
      const bool settled = (w - v).norm() < 1e-13 || (w + v).norm() < 1e-13;
      v = w;
      lambda = next;
      if (settled) break;
    }
    // Rayleigh-quotient polishing; a step is kept only if it shrinks the
    // residual, since the shifted system is singular once converged.
    auto residual = [&](const Vector& x, double l) { return (a * x - l * x).norm(); };
    for (int it = 0; it < 6; ++it) {
      const Matrix shifted = a - lambda * Matrix::Identity(p, p);
      Vector w = shifted.fullPivLu().solve(v);
      if (!w.allFinite() || w.norm() == 0.0) break;
      w.normalize();
      const double next = w.dot(a * w);
      if (residual(w, next) >= residual(v, lambda)) break;
      v = w;
      lambda = next;
    }
    pairs.emplace_back(lambda, v);
    a -= lambda * v * v.transpose();
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::vector<double> values;
  for (auto& [l, vec] : pairs) {
    values.push_back(l);
    if (vectors) vectors->push_back(vec);
  }
  return values;
}

inline Matrix covariance(const Matrix& data) {
  const Index n = data.rows(), p = data.cols();
  Vector mean = Vector::Zero(p);
  for (Index i = 0; i < n; ++i) mean += data.row(i).transpose();
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(p, p);
  for (Index a = 0; a < p; ++a) {
    for (Index b = 0; b < p; ++b) {
      double s = 0;
      for (Index i = 0; i < n; ++i) s += (data(i, a) - mean[a]) * (data(i, b) - mean[b]);
      cov(a, b) = s / static_cast<double>(n - 1);
    }
  }
  return cov;
}

inline std::vector<std::pair<std::string, std::size_t>> count_words(
    const std::vector<std::vector<std::string>>& corpus) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& w : doc) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

}  // namespace oracle
