#pragma once

// Minimal SVG renderings for the analysis outputs. Coordinates are printed
// with fixed precision so identical inputs give identical files.

#include <span>
#include <string>
#include <vector>

#include "deepsent/analysis.hpp"

namespace deepsent {

/// Dendrogram with leaves along the x axis and merge height on y.
std::string dendrogram_svg(const Dendrogram& dendrogram, std::span<const std::string> labels);

/// PC1 vs PC2 scatter, points colored by `classes`, loading arrows labeled
/// with the variable names. Needs at least two components.
std::string pca_scatter_svg(const PcaResult& fit, const Matrix& scores, std::span<const int> classes,
                            std::span<const std::string> variable_names);

/// Bar chart of explained-variance ratios.
std::string scree_svg(const Vector& explained_ratio);

}  // namespace deepsent
