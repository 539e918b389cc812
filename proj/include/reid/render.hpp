#pragma once

#include <string>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// Grouped bar chart: one group per row label, one bar per series entry.
// Values are expected in [0,1]. Purely decorative next to the CSV output.
void render_bar_chart(const std::string& path, const std::vector<std::string>& groups,
                      const std::vector<std::string>& series,
                      const std::vector<std::vector<double>>& values, int width = 640,
                      int height = 360);

// Query panel on the left, ranked results on the right, green/red border by
// identity match.
void render_retrieval_grid(const std::string& path, const Tensor& query,
                           const std::vector<Tensor>& results, const std::vector<bool>& match);

}  // namespace reid
