#include "deepsent/image.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "deepsent/io.hpp"

namespace deepsent {

std::string to_string(ImageKind kind) { return kind == ImageKind::pixels ? "pixels" : "features"; }

namespace {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(const std::string& bytes) : s_(bytes) {}

  std::string token() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError("ppm: truncated header");
    return s_.substr(start, pos_ - start);
  }

  long number(long min = 1) {
    const auto t = token();
    long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || v < min) {
      throw ParseError("ppm: bad field '" + t + "'");
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  void skip() {
    while (pos_ < s_.size()) {
      if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor parse_ppm(const std::string& bytes) {
  PpmHeaderReader header(bytes);
  const std::string magic = header.token();
  if (magic != "P6" && magic != "P3") throw ParseError("ppm: unsupported magic '" + magic + "'");
  const long width = header.number();
  const long height = header.number();
  const long maxval = header.number();
  if (maxval > 65535) throw ParseError("ppm: maxval out of range");

  Tensor image({height, width, 3});
  const Index n = image.size();
  if (magic == "P6") {
    header.advance();  // single whitespace byte before the raster
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(n) * bpp;
    if (header.pos() + need > bytes.size()) throw ParseError("ppm: truncated raster");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + header.pos());
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i) * bpp;
      const unsigned v = bpp == 1 ? raw[k] : (static_cast<unsigned>(raw[k]) << 8) | raw[k + 1];
      image.data[i] = static_cast<double>(std::min<unsigned>(v, static_cast<unsigned>(maxval))) /
                      static_cast<double>(maxval);
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      const long v = header.number(0);
      image.data[i] = static_cast<double>(std::min(v, maxval)) / static_cast<double>(maxval);
    }
  }
  return image;
}

Tensor load_ppm(const std::filesystem::path& path) { return parse_ppm(read_file(path)); }

Tensor resize_bilinear(const Tensor& image, Index height, Index width) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear: expected an HxWxC tensor");
  const Index h0 = image.shape[0], w0 = image.shape[1], c = image.shape[2];
  if (h0 == height && w0 == width) return image;
  Tensor out({height, width, c});
  const double sy = static_cast<double>(h0) / static_cast<double>(height);
  const double sx = static_cast<double>(w0) / static_cast<double>(width);
  auto at = [&](Index y, Index x, Index ch) { return image.data[(y * w0 + x) * c + ch]; };
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h0 - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, h0 - 1);
    const double ty = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w0 - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, w0 - 1);
      const double tx = fx - static_cast<double>(x0);
      for (Index ch = 0; ch < c; ++ch) {
        const double top = (1 - tx) * at(y0, x0, ch) + tx * at(y0, x1, ch);
        const double bottom = (1 - tx) * at(y1, x0, ch) + tx * at(y1, x1, ch);
        out.data[(y * width + x) * c + ch] = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

const Vector* FeatureStore::find(const std::string& id) const {
  auto it = features_.find(id);
  return it == features_.end() ? nullptr : &it->second;
}

void FeatureStore::add(const std::string& id, Vector v) {
  if (features_.empty() && dim_ == 0) dim_ = v.size();
  if (v.size() != dim_) {
    throw DimensionError("feature '" + id + "' has " + std::to_string(v.size()) +
                         " values, expected " + std::to_string(dim_));
  }
  if (!features_.emplace(id, std::move(v)).second) {
    warnings_.push_back("duplicate feature id '" + id + "' ignored");
  }
}

FeatureStore parse_feature_file(std::istream& in) {
  FeatureStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("feature file line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) throw ParseError("feature file line " + std::to_string(line_no) + ": no values");
    if (store.size() > 0 && static_cast<Index>(values.size()) != store.dim()) {
      throw ParseError("feature file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(store.dim()) + " values, found " + std::to_string(values.size()));
    }
    store.add(id, Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())));
  }
  if (in.bad()) throw IoError("error while reading feature stream");
  if (store.size() == 0) throw ParseError("feature file is empty");
  return store;
}

FeatureStore load_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file '" + path.string() + "'");
  return parse_feature_file(in);
}

void write_feature_file(const FeatureStore& store, std::ostream& out) {
  for (const auto& [id, v] : store.entries()) {
    out << id;
    for (Index k = 0; k < v.size(); ++k) out << ' ' << format_double(v[k]);
    out << '\n';
  }
}

}  // namespace deepsent
