#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncrf {

// Row-major interleaved image, values in [0,1]. channels is 1 (gray) or 3 (rgb).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.0) {}

  double& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

struct BBox2i {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

// 8-bit PNG round trip. Gray and RGB only; save quantizes with round-to-nearest.
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

Image to_gray(const Image& img);

// Square structuring element of the given radius (Chebyshev ball).
Image dilate(const Image& mask, int radius);

// Tight box around pixels > 0.5, grown by pad and clipped to the image.
BBox2i foreground_bbox(const Image& mask, int pad);

Image crop(const Image& img, const BBox2i& box);

// 2x2 average pooling, truncating odd edges.
Image downsample2(const Image& img);

}  // namespace ncrf
