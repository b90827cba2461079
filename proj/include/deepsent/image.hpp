#pragma once

// Image inputs: pre-decoded pixel tensors or precomputed backbone features.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "deepsent/numkernel.hpp"

namespace deepsent {

inline constexpr Index kDefaultImageSize = 224;

/// Either an H x W x 3 pixel tensor with values in [0, 1] or a feature vector.
using ImageInput = std::variant<Tensor, Vector>;

enum class ImageKind { pixels, features };

inline ImageKind kind_of(const ImageInput& image) {
  return std::holds_alternative<Tensor>(image) ? ImageKind::pixels : ImageKind::features;
}

std::string to_string(ImageKind kind);

/// Reads a binary (P6) or ASCII (P3) PPM and scales channels to [0, 1].
Tensor load_ppm(const std::filesystem::path& path);
Tensor parse_ppm(const std::string& bytes);

/// Bilinear resize of an H x W x C tensor (pixel centers aligned).
Tensor resize_bilinear(const Tensor& image, Index height, Index width);

/// Precomputed backbone features keyed by feature id.
class FeatureStore {
 public:
  Index dim() const { return dim_; }
  std::size_t size() const { return features_.size(); }
  const Vector* find(const std::string& id) const;
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::map<std::string, Vector>& entries() const { return features_; }
  void add(const std::string& id, Vector v);

 private:
  Index dim_ = 0;
  std::map<std::string, Vector> features_;
  std::vector<std::string> warnings_;
};

/// Lines of `<feature_id> <f1> ... <fD>`; D fixed by the first line.
FeatureStore parse_feature_file(std::istream& in);
FeatureStore load_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureStore& store, std::ostream& out);

}  // namespace deepsent
