#include "deepsent/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "deepsent/io.hpp"

namespace deepsent {

using nlohmann::json;

namespace {

void require_multimodal(const DeepSentimentModel& model, const char* what) {
  if (model.config().mode != ModelMode::multimodal) {
    throw DomainError(std::string(what) + " needs a multimodal model, got " + to_string(model.config().mode));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Word probe

TopWords top_words(const DeepSentimentModel& model, const EmbeddingTable& table, const ImageInput& mean_img,
                   std::span<const WordCount> word_ranking, std::size_t n_words, std::size_t k) {
  require_multimodal(model, "top_words");
  const std::size_t n = std::min(n_words, word_ranking.size());
  const Vector image_vec = image_vector(model, mean_img);

  Matrix scores(static_cast<Index>(n), kNumEmotions);
  std::vector<bool> oov(n);
  for (std::size_t w = 0; w < n; ++w) {
    TokenSequence single;
    single.tokens = {word_ranking[w].first};
    single.source_length = 1;
    oov[w] = !table.contains(word_ranking[w].first);
    const EmbeddedSequence text = encode_text(single, table, model.config().max_len);
    scores.row(static_cast<Index>(w)) = fuse(model, image_vec, text_vector(model, text)).transpose();
  }

  TopWords out;
  std::vector<std::size_t> order(n);
  for (int e = 0; e < kNumEmotions; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores(static_cast<Index>(a), e) > scores(static_cast<Index>(b), e);
    });
    auto& list = out.per_emotion[static_cast<std::size_t>(e)];
    for (std::size_t r = 0; r < std::min(k, n); ++r) {
      const std::size_t w = order[r];
      list.push_back({word_ranking[w].first, scores(static_cast<Index>(w), e), w, oov[w]});
    }
  }
  return out;
}

std::string TopWords::to_json() const {
  json j = json::object();
  for (int e = 0; e < kNumEmotions; ++e) {
    json list = json::array();
    for (const auto& ws : per_emotion[static_cast<std::size_t>(e)]) {
      json item = {{"word", ws.word}, {"score", ws.score}, {"frequency_rank", ws.frequency_rank}};
      if (ws.out_of_vocabulary) item["out_of_vocabulary"] = true;
      list.push_back(item);
    }
    j[std::string(emotion_name(static_cast<Emotion>(e)))] = list;
  }
  // Keep Emotion order rather than alphabetical.
  json ordered = json::array();
  for (int e = 0; e < kNumEmotions; ++e) {
    const std::string name(emotion_name(static_cast<Emotion>(e)));
    ordered.push_back({{"emotion", name}, {"words", j[name]}});
  }
  return ordered.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Posterior structure

Matrix posterior_matrix(const DeepSentimentModel& model, std::span<const LabeledExample> dataset) {
  if (dataset.empty()) throw DomainError("posterior_matrix: empty dataset");
  Matrix out(static_cast<Index>(dataset.size()), kNumEmotions);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      out.row(static_cast<Index>(i)) = forward(model, dataset[i]).transpose();
    } catch (const Error& e) {
      throw DomainError("posterior_matrix: example '" + dataset[i].id + "': " + e.what());
    }
  }
  return out;
}

CorrelationResult correlation_matrix(const Matrix& data) {
  const Index n = data.rows(), p = data.cols();
  if (n < 2) throw DomainError("correlation_matrix: need at least 2 rows");
  Matrix centered = data;
  for (Index j = 0; j < p; ++j) {
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += data(i, j);
    mean /= static_cast<double>(n);
    for (Index i = 0; i < n; ++i) centered(i, j) -= mean;
  }
  Vector ss(p);
  for (Index j = 0; j < p; ++j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += centered(i, j) * centered(i, j);
    ss[j] = s;
  }

  CorrelationResult result;
  result.matrix = Matrix::Identity(p, p);
  for (Index j = 0; j < p; ++j) {
    if (!(ss[j] > 0.0)) {
      result.zero_variance_columns.push_back(j);
      result.warnings.push_back("column " + std::to_string(j) + " has zero variance; correlations set to 0");
    }
  }
  for (Index a = 0; a < p; ++a) {
    if (!(ss[a] > 0.0)) continue;
    for (Index b = a + 1; b < p; ++b) {
      if (!(ss[b] > 0.0)) continue;
      double cross = 0.0;
      for (Index i = 0; i < n; ++i) cross += centered(i, a) * centered(i, b);
      const double rho = std::clamp(cross / std::sqrt(ss[a] * ss[b]), -1.0, 1.0);
      result.matrix(a, b) = rho;
      result.matrix(b, a) = rho;
    }
  }
  return result;
}

Matrix to_distance(const Matrix& correlation) {
  if (correlation.rows() != correlation.cols()) throw DimensionError("to_distance: matrix must be square");
  Matrix d = (Matrix::Ones(correlation.rows(), correlation.cols()) - correlation).cwiseMax(0.0).cwiseMin(2.0);
  d.diagonal().setZero();
  return d;
}

std::string to_string(Linkage) { return "average"; }

Linkage parse_linkage(const std::string& text) {
  if (text == "average" || text == "upgma") return Linkage::average;
  throw ConfigError("unsupported linkage '" + text + "' (only average is implemented)");
}

Dendrogram hierarchical_cluster(const Matrix& distance, Linkage) {
  const Index n = distance.rows();
  if (n < 1 || distance.cols() != n) throw DomainError("hierarchical_cluster: need a non-empty square matrix");
  for (Index i = 0; i < n; ++i) {
    if (distance(i, i) != 0.0) throw DomainError("hierarchical_cluster: diagonal must be zero");
    for (Index j = 0; j < n; ++j) {
      const double v = distance(i, j);
      if (!std::isfinite(v) || v < 0.0) throw DomainError("hierarchical_cluster: distances must be finite and non-negative");
      if (v != distance(j, i)) throw DomainError("hierarchical_cluster: matrix is not symmetric");
    }
  }

  // Pairwise sums of leaf distances; the average linkage distance of two
  // clusters is their sum over the product of their sizes.
  const Index total = 2 * n - 1;
  Matrix sums = Matrix::Zero(total, total);
  sums.topLeftCorner(n, n) = distance;
  std::vector<Index> size(static_cast<std::size_t>(total), 1);
  std::vector<Index> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), 0);
  auto avg = [&](Index a, Index b) {
    return sums(a, b) / static_cast<double>(size[static_cast<std::size_t>(a)] * size[static_cast<std::size_t>(b)]);
  };

  Dendrogram out;
  out.leaves = n;
  for (Index next = n; next < total; ++next) {
    std::size_t best_a = 0, best_b = 1;
    double best = INFINITY;
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double v = avg(active[a], active[b]);
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    const Index left = active[best_a], right = active[best_b];
    for (Index other : active) {
      if (other == left || other == right) continue;
      sums(next, other) = sums(left, other) + sums(right, other);
      sums(other, next) = sums(next, other);
    }
    size[static_cast<std::size_t>(next)] = size[static_cast<std::size_t>(left)] + size[static_cast<std::size_t>(right)];
    out.merges.push_back({left, right, best, next, size[static_cast<std::size_t>(next)]});
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
    active.push_back(next);  // ids stay ascending
  }
  return out;
}

std::vector<Index> leaf_order(const Dendrogram& dendrogram) {
  std::vector<Index> order;
  if (dendrogram.leaves == 0) return order;
  if (dendrogram.merges.empty()) return {0};
  std::vector<Index> stack = {dendrogram.merges.back().id};
  while (!stack.empty()) {
    const Index id = stack.back();
    stack.pop_back();
    if (id < dendrogram.leaves) {
      order.push_back(id);
      continue;
    }
    const Merge& m = dendrogram.merges[static_cast<std::size_t>(id - dendrogram.leaves)];
    stack.push_back(m.right);
    stack.push_back(m.left);
  }
  return order;
}

std::string Dendrogram::to_json(std::span<const std::string> labels) const {
  json j;
  j["leaves"] = leaves;
  json names = json::array();
  for (Index i = 0; i < leaves; ++i) {
    names.push_back(static_cast<std::size_t>(i) < labels.size() ? labels[static_cast<std::size_t>(i)]
                                                                 : std::to_string(i));
  }
  j["labels"] = names;
  j["linkage"] = "average";
  json list = json::array();
  for (const auto& m : merges) {
    list.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"id", m.id}, {"size", m.size}});
  }
  j["merges"] = list;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// PCA

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance, int max_sweeps) {
  const Index p = symmetric.rows();
  if (symmetric.cols() != p) throw DimensionError("jacobi_eigen: matrix must be square");
  Matrix a = symmetric;
  Matrix v = Matrix::Identity(p, p);
  const double threshold = tolerance * std::max(1.0, a.norm());

  auto off_norm = [&] {
    double s = 0.0;
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) {
        if (i != j) s += a(i, j) * a(i, j);
      }
    }
    return std::sqrt(s);
  };

  SymmetricEigen out;
  while (off_norm() >= threshold) {
    if (out.sweeps >= max_sweeps) throw DomainError("jacobi_eigen: no convergence");
    ++out.sweeps;
    for (Index i = 0; i < p - 1; ++i) {
      for (Index j = i + 1; j < p; ++j) {
        const double aij = a(i, j);
        if (aij == 0.0) continue;
        const double tau = (a(j, j) - a(i, i)) / (2.0 * aij);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Index k = 0; k < p; ++k) {
          const double aki = a(k, i), akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
        for (Index k = 0; k < p; ++k) {
          const double aik = a(i, k), ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
        a(i, j) = 0.0;
        a(j, i) = 0.0;
        for (Index k = 0; k < p; ++k) {
          const double vki = v(k, i), vkj = v(k, j);
          v(k, i) = c * vki - s * vkj;
          v(k, j) = s * vki + c * vkj;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });
  out.values.resize(p);
  out.vectors.resize(p, p);
  for (Index k = 0; k < p; ++k) {
    out.values[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

PcaResult pca(const Matrix& data, Index n_components, bool standardize) {
  const Index n = data.rows(), p = data.cols();
  if (n < 2) throw DomainError("pca: need at least 2 rows");
  if (n_components < 1 || n_components > p) {
    throw DomainError("pca: n_components must lie in [1, " + std::to_string(p) + "]");
  }
  PcaResult fit;
  fit.standardized = standardize;
  fit.means = data.colwise().mean().transpose();
  fit.scales = Vector::Ones(p);
  Matrix centered = data.rowwise() - fit.means.transpose();
  if (standardize) {
    for (Index j = 0; j < p; ++j) {
      const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 0.0) fit.scales[j] = sd;
    }
    for (Index j = 0; j < p; ++j) centered.col(j) /= fit.scales[j];
  }
  const Matrix cov = matmul(centered.transpose(), centered) / static_cast<double>(n - 1);
  const SymmetricEigen eig = jacobi_eigen(cov);

  fit.eigenvalues = eig.values.cwiseMax(0.0);
  const double total = fit.eigenvalues.sum();
  if (!(total > 0.0)) throw DomainError("pca: data has zero total variance");
  fit.explained_ratio = fit.eigenvalues / total;

  fit.loadings = eig.vectors.leftCols(n_components);
  for (Index c = 0; c < n_components; ++c) {
    Index big = 0;
    for (Index r = 1; r < p; ++r) {
      if (std::abs(fit.loadings(r, c)) > std::abs(fit.loadings(big, c))) big = r;
    }
    if (fit.loadings(big, c) < 0.0) fit.loadings.col(c) *= -1.0;
  }
  fit.scores = project(data, fit);
  return fit;
}

Matrix project(const Matrix& data, const PcaResult& fit) {
  if (data.cols() != fit.means.size()) {
    throw DimensionError("project: data has " + std::to_string(data.cols()) + " columns, PCA was fitted on " +
                         std::to_string(fit.means.size()));
  }
  Matrix centered = data.rowwise() - fit.means.transpose();
  if (fit.standardized) {
    for (Index j = 0; j < centered.cols(); ++j) centered.col(j) /= fit.scales[j];
  }
  return matmul(centered, fit.loadings);
}

// ---------------------------------------------------------------------------
// Ratings

const Rating* ScaleRatings::find(const std::string& id) const {
  for (const auto& r : items) {
    if (r.item_id == id) return &r;
  }
  return nullptr;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("ratings line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

ScaleRatings parse_ratings_csv(std::istream& in) {
  ScaleRatings ratings;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (!header) {
      if (fields != std::vector<std::string>{"item_id", "valence", "arousal"}) {
        throw ParseError("ratings file must start with the header 'item_id,valence,arousal'");
      }
      header = true;
      continue;
    }
    if (fields.size() != 3) throw ParseError("ratings line " + std::to_string(line_no) + ": expected 3 fields");
    if (fields[0].empty()) throw ParseError("ratings line " + std::to_string(line_no) + ": empty item id");
    if (!seen.insert(fields[0]).second) {
      throw ParseError("ratings line " + std::to_string(line_no) + ": duplicate item '" + fields[0] + "'");
    }
    ratings.items.push_back({fields[0], parse_number(fields[1], line_no), parse_number(fields[2], line_no)});
  }
  if (in.bad()) throw IoError("error while reading ratings");
  if (!header) throw ParseError("ratings file is empty");
  return ratings;
}

ScaleRatings load_ratings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ratings file '" + path + "'");
  return parse_ratings_csv(in);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<ScaleCorrelation> scale_correlations(const Matrix& scores, std::span<const Rating> ratings) {
  if (ratings.empty() || scores.rows() == 0) throw DomainError("scale_correlations: no rows");
  if (scores.rows() != static_cast<Index>(ratings.size())) {
    throw DimensionError("scale_correlations: " + std::to_string(scores.rows()) + " score rows but " +
                         std::to_string(ratings.size()) + " ratings");
  }
  std::vector<double> valence, arousal;
  for (const auto& r : ratings) {
    valence.push_back(r.valence);
    arousal.push_back(r.arousal);
  }
  std::vector<ScaleCorrelation> out;
  std::vector<double> column(ratings.size());
  for (Index c = 0; c < scores.cols(); ++c) {
    for (Index i = 0; i < scores.rows(); ++i) column[static_cast<std::size_t>(i)] = scores(i, c);
    out.push_back({pearson(column, valence), pearson(column, arousal)});
  }
  return out;
}

std::string scale_correlations_csv(std::span<const ScaleCorrelation> table) {
  auto cell = [](const std::optional<double>& v, bool absolute) {
    if (!v) return std::string("NA");
    return format_double(absolute ? std::abs(*v) : *v);
  };
  std::string out = "component,valence_r,arousal_r,valence_abs_r,arousal_abs_r\n";
  for (std::size_t c = 0; c < table.size(); ++c) {
    out += "PC" + std::to_string(c + 1) + "," + cell(table[c].valence, false) + "," +
           cell(table[c].arousal, false) + "," + cell(table[c].valence, true) + "," +
           cell(table[c].arousal, true) + "\n";
  }
  return out;
}

OasisResult oasis_protocol(const DeepSentimentModel& model, const EmbeddingTable& table,
                           std::span<const OasisItem> items, const PcaResult& fit) {
  require_multimodal(model, "oasis_protocol");
  if (items.empty()) throw DomainError("oasis_protocol: no items");
  OasisResult out;
  out.posteriors.resize(static_cast<Index>(items.size()), kNumEmotions);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const OasisItem& item = items[i];
    try {
      const TokenSequence tokens = tokenize(item.label);
      bool known = !tokens.tokens.empty();
      for (const auto& t : tokens.tokens) known = known && table.contains(t);
      if (!known) out.oov_items.push_back(item.id);
      const EmbeddedSequence text = encode_text(tokens, table, model.config().max_len);
      const Vector probs = fuse(model, image_vector(model, item.image), text_vector(model, text));
      out.posteriors.row(static_cast<Index>(i)) = probs.transpose();
    } catch (const Error& e) {
      throw DomainError("oasis_protocol: item '" + item.id + "': " + e.what());
    }
  }
  out.scores = project(out.posteriors, fit);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string correlation_csv(const Matrix& correlation) {
  std::string out = "emotion";
  for (auto name : emotion_names()) out += "," + std::string(name);
  out += "\n";
  for (Index i = 0; i < correlation.rows(); ++i) {
    out += std::string(emotion_name(static_cast<Emotion>(i)));
    for (Index j = 0; j < correlation.cols(); ++j) out += "," + format_double(correlation(i, j));
    out += "\n";
  }
  return out;
}

std::string pca_csv(const PcaResult& fit) {
  std::string out = "variable";
  for (Index c = 0; c < fit.components(); ++c) out += ",PC" + std::to_string(c + 1);
  out += "\n";
  for (Index r = 0; r < fit.loadings.rows(); ++r) {
    out += r < kNumEmotions ? std::string(emotion_name(static_cast<Emotion>(r))) : "var" + std::to_string(r);
    for (Index c = 0; c < fit.components(); ++c) out += "," + format_double(fit.loadings(r, c));
    out += "\n";
  }
  out += "explained_ratio";
  for (Index c = 0; c < fit.components(); ++c) out += "," + format_double(fit.explained_ratio[c]);
  out += "\neigenvalue";
  for (Index c = 0; c < fit.components(); ++c) out += "," + format_double(fit.eigenvalues[c]);
  out += "\n";
  return out;
}

std::string scores_csv(const Matrix& scores, std::span<const std::string> ids) {
  std::string out = "id";
  for (Index c = 0; c < scores.cols(); ++c) out += ",PC" + std::to_string(c + 1);
  out += "\n";
  for (Index i = 0; i < scores.rows(); ++i) {
    out += static_cast<std::size_t>(i) < ids.size() ? ids[static_cast<std::size_t>(i)] : std::to_string(i);
    for (Index c = 0; c < scores.cols(); ++c) out += "," + format_double(scores(i, c));
    out += "\n";
  }
  return out;
}

}  // namespace deepsent
