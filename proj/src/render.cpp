#include "reid/render.hpp"

#include <algorithm>

#include "reid/png_io.hpp"

namespace reid {

namespace {

void fill_rect(Tensor& img, int r0, int c0, int r1, int c1, double r, double g, double b) {
  r0 = std::max(0, r0);
  c0 = std::max(0, c0);
  r1 = std::min(img.dim(0), r1);
  c1 = std::min(img.dim(1), c1);
  for (int i = r0; i < r1; ++i)
    for (int j = c0; j < c1; ++j) {
      img.at(i, j, 0) = r;
      img.at(i, j, 1) = g;
      img.at(i, j, 2) = b;
    }
}

constexpr double kPalette[6][3] = {{0.20, 0.45, 0.80}, {0.85, 0.55, 0.15}, {0.25, 0.65, 0.30},
                                   {0.75, 0.25, 0.30}, {0.50, 0.35, 0.70}, {0.40, 0.40, 0.40}};

}  // namespace

void render_bar_chart(const std::string& path, const std::vector<std::string>& groups,
                      const std::vector<std::string>& series,
                      const std::vector<std::vector<double>>& values, int width, int height) {
  if (values.size() != groups.size())
    throw ShapeError("render_bar_chart: one value row per group required");
  Tensor img({height, width, 3});
  fill_rect(img, 0, 0, height, width, 1.0, 1.0, 1.0);
  const int margin = 30;
  const int plot_h = height - 2 * margin;
  const int plot_w = width - 2 * margin;
  // axes
  fill_rect(img, height - margin, margin, height - margin + 2, width - margin, 0.1, 0.1, 0.1);
  fill_rect(img, margin, margin - 2, height - margin, margin, 0.1, 0.1, 0.1);
  // horizontal gridlines at 0.25/0.5/0.75/1.0
  for (int t = 1; t <= 4; ++t) {
    const int y = height - margin - plot_h * t / 4;
    fill_rect(img, y, margin, y + 1, width - margin, 0.85, 0.85, 0.85);
  }
  const int ng = static_cast<int>(groups.size());
  const int ns = static_cast<int>(series.size());
  if (ng == 0 || ns == 0) {
    write_png_rgb(path, img);
    return;
  }
  const int group_w = plot_w / ng;
  const int bar_w = std::max(2, group_w / (ns + 1));
  for (int gi = 0; gi < ng; ++gi) {
    for (int si = 0; si < ns && si < static_cast<int>(values[static_cast<size_t>(gi)].size());
         ++si) {
      const double v = std::clamp(values[static_cast<size_t>(gi)][static_cast<size_t>(si)], 0.0, 1.0);
      const int bh = static_cast<int>(v * plot_h);
      const int c0 = margin + gi * group_w + si * bar_w + bar_w / 2;
      const auto& col = kPalette[si % 6];
      fill_rect(img, height - margin - bh, c0, height - margin, c0 + bar_w - 1, col[0], col[1],
                col[2]);
    }
  }
  // legend swatches, top-left
  for (int si = 0; si < ns; ++si) {
    const auto& col = kPalette[si % 6];
    fill_rect(img, 6 + si * 12, 6, 14 + si * 12, 14, col[0], col[1], col[2]);
  }
  write_png_rgb(path, img);
}

void render_retrieval_grid(const std::string& path, const Tensor& query,
                           const std::vector<Tensor>& results, const std::vector<bool>& match) {
  if (results.size() != match.size())
    throw ShapeError("render_retrieval_grid: result/match count mismatch");
  const int ph = query.dim(0), pw = query.dim(1);
  const int border = 3, gutter = 6;
  const int panels = 1 + static_cast<int>(results.size());
  const int cell_h = ph + 2 * border, cell_w = pw + 2 * border;
  Tensor img({cell_h + 2 * gutter, panels * (cell_w + gutter) + gutter, 3});
  fill_rect(img, 0, 0, img.dim(0), img.dim(1), 1.0, 1.0, 1.0);
  auto blit = [&](const Tensor& panel, int slot, double br, double bg, double bb) {
    const int r0 = gutter, c0 = gutter + slot * (cell_w + gutter);
    fill_rect(img, r0, c0, r0 + cell_h, c0 + cell_w, br, bg, bb);
    for (int i = 0; i < ph && i < panel.dim(0); ++i)
      for (int j = 0; j < pw && j < panel.dim(1); ++j)
        for (int c = 0; c < 3; ++c)
          img.at(r0 + border + i, c0 + border + j, c) = panel.at(i, j, c);
  };
  blit(query, 0, 0.1, 0.1, 0.1);
  for (size_t i = 0; i < results.size(); ++i)
    blit(results[i], static_cast<int>(i) + 1, match[i] ? 0.0 : 0.8, match[i] ? 0.7 : 0.0, 0.0);
  write_png_rgb(path, img);
}

}  // namespace reid
