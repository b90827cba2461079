#include "deepsent/plots.hpp"

#include <algorithm>
#include <cmath>

#include "deepsent/errors.hpp"
#include "deepsent/io.hpp"

namespace deepsent {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 60.0;

std::string num(double v) { return format_fixed(v, 2); }

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

std::string text(double x, double y, std::string_view body, const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + extra + ">" + escape(body) + "</text>\n";
}

// 15 distinguishable colors, cycled past that.
const char* palette(int i) {
  static const char* colors[] = {"#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
                                 "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
                                 "#008080", "#e6beff", "#9a6324", "#800000", "#000075"};
  return colors[static_cast<std::size_t>(i) % 15];
}

}  // namespace

std::string dendrogram_svg(const Dendrogram& dendrogram, std::span<const std::string> labels) {
  const Index n = dendrogram.leaves;
  if (n < 1) throw DomainError("dendrogram_svg: empty dendrogram");
  const std::vector<Index> order = leaf_order(dendrogram);
  const Index total = n + static_cast<Index>(dendrogram.merges.size());
  std::vector<double> x(static_cast<std::size_t>(total)), y(static_cast<std::size_t>(total), 0.0);

  double top = 0.0;
  for (const auto& m : dendrogram.merges) top = std::max(top, m.height);
  if (top <= 0.0) top = 1.0;
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin - 40.0;
  const double base = kMargin + plot_h;
  auto y_of = [&](double h) { return base - h / top * plot_h; };

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    x[static_cast<std::size_t>(order[pos])] =
        kMargin + (static_cast<double>(pos) + 0.5) * plot_w / static_cast<double>(n);
    y[static_cast<std::size_t>(order[pos])] = base;
  }

  std::string out = header();
  out += line(kMargin - 10, kMargin, kMargin - 10, base, "#888");
  out += text(kMargin - 14, kMargin + 4, num(top), " text-anchor=\"end\"");
  out += text(kMargin - 14, base + 4, "0.00", " text-anchor=\"end\"");
  for (const auto& m : dendrogram.merges) {
    const auto l = static_cast<std::size_t>(m.left), r = static_cast<std::size_t>(m.right);
    const auto id = static_cast<std::size_t>(m.id);
    const double h = y_of(m.height);
    out += line(x[l], y[l], x[l], h, "black");
    out += line(x[r], y[r], x[r], h, "black");
    out += line(x[l], h, x[r], h, "black");
    x[id] = (x[l] + x[r]) / 2.0;
    y[id] = h;
  }
  for (Index leaf : order) {
    const auto i = static_cast<std::size_t>(leaf);
    const std::string name = i < labels.size() ? labels[i] : std::to_string(leaf);
    out += text(x[i], base + 12, name,
                " text-anchor=\"end\" transform=\"rotate(-60 " + num(x[i]) + " " + num(base + 12) + ")\"");
  }
  out += "</svg>\n";
  return out;
}

std::string pca_scatter_svg(const PcaResult& fit, const Matrix& scores, std::span<const int> classes,
                            std::span<const std::string> variable_names) {
  if (fit.components() < 2 || scores.cols() < 2) throw DomainError("pca_scatter_svg: need two components");
  if (static_cast<std::size_t>(scores.rows()) != classes.size()) {
    throw DimensionError("pca_scatter_svg: one class per score row expected");
  }
  double extent = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    extent = std::max({extent, std::abs(scores(i, 0)), std::abs(scores(i, 1))});
  }
  for (Index r = 0; r < fit.loadings.rows(); ++r) {
    extent = std::max({extent, std::abs(fit.loadings(r, 0)), std::abs(fit.loadings(r, 1))});
  }
  if (extent <= 0.0) extent = 1.0;
  const double cx = kWidth / 2, cy = kHeight / 2;
  const double scale = (std::min(kWidth, kHeight) / 2 - kMargin) / extent;
  // Arrows are drawn at a common length so they stay visible next to the cloud.
  double longest = 0.0;
  for (Index r = 0; r < fit.loadings.rows(); ++r) {
    longest = std::max(longest, std::hypot(fit.loadings(r, 0), fit.loadings(r, 1)));
  }
  const double arrow_scale = longest > 0 ? 0.9 * extent / longest : 0.0;

  std::string out = header();
  out += line(kMargin, cy, kWidth - kMargin, cy, "#bbb");
  out += line(cx, kMargin, cx, kHeight - kMargin, "#bbb");
  out += text(kWidth - kMargin, cy - 6, "PC1", " text-anchor=\"end\"");
  out += text(cx + 6, kMargin + 10, "PC2");
  for (Index i = 0; i < scores.rows(); ++i) {
    out += "<circle cx=\"" + num(cx + scores(i, 0) * scale) + "\" cy=\"" + num(cy - scores(i, 1) * scale) +
           "\" r=\"2.5\" fill=\"" + palette(classes[static_cast<std::size_t>(i)]) + "\" fill-opacity=\"0.7\"/>\n";
  }
  for (Index r = 0; r < fit.loadings.rows(); ++r) {
    const double ex = cx + fit.loadings(r, 0) * arrow_scale * scale;
    const double ey = cy - fit.loadings(r, 1) * arrow_scale * scale;
    out += line(cx, cy, ex, ey, palette(static_cast<int>(r)), 1.5);
    const auto ri = static_cast<std::size_t>(r);
    out += text(ex, ey, ri < variable_names.size() ? variable_names[ri] : std::to_string(r));
  }
  out += "</svg>\n";
  return out;
}

std::string scree_svg(const Vector& explained_ratio) {
  const Index p = explained_ratio.size();
  if (p < 1) throw DomainError("scree_svg: no components");
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  const double slot = plot_w / static_cast<double>(p);
  const double base = kMargin + plot_h;
  std::string out = header();
  out += line(kMargin, base, kWidth - kMargin, base, "black");
  out += line(kMargin, kMargin, kMargin, base, "black");
  out += text(kMargin - 6, kMargin + 4, "1.00", " text-anchor=\"end\"");
  out += text(kMargin - 6, base + 4, "0.00", " text-anchor=\"end\"");
  for (Index c = 0; c < p; ++c) {
    const double h = std::clamp(explained_ratio[c], 0.0, 1.0) * plot_h;
    const double x = kMargin + static_cast<double>(c) * slot + slot * 0.1;
    out += "<rect x=\"" + num(x) + "\" y=\"" + num(base - h) + "\" width=\"" + num(slot * 0.8) +
           "\" height=\"" + num(h) + "\" fill=\"#4363d8\"/>\n";
    out += text(x + slot * 0.4, base + 14, "PC" + std::to_string(c + 1), " text-anchor=\"middle\"");
    out += text(x + slot * 0.4, base - h - 4, num(explained_ratio[c] * 100.0) + "%",
                " text-anchor=\"middle\" font-size=\"9\"");
  }
  out += "</svg>\n";
  return out;
}

}  // namespace deepsent
