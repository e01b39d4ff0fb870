#include "core/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "core/error.hpp"

namespace repalign {

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) : width(w), height(h) {
  if (w <= 0 || h <= 0) fail(Errc::invalid_argument, "image dimensions must be positive");
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
}

Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::io, "missing image " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) fail(Errc::format, "cannot decode image " + path.string());
  Image img;
  img.width = bgr.cols;
  img.height = bgr.rows;
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const auto* src = bgr.ptr<std::uint8_t>(y);
    std::uint8_t* dst = img.pixel(0, y);
    for (int x = 0; x < img.width; ++x) {
      dst[3 * x] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x];
    }
  }
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* src = img.pixel(0, y);
    auto* dst = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      dst[3 * x] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x];
    }
  }
  if (!cv::imwrite(path.string(), bgr)) fail(Errc::io, "cannot write " + path.string());
}

void write_heatmap_png(const std::vector<double>& values, int width, int height, const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(width) * height)
    fail(Errc::invalid_argument, "heatmap size does not match dimensions");
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  cv::Mat gray(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    auto* dst = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) {
      double v = peak > 0.0 ? values[static_cast<std::size_t>(y) * width + x] / peak : 0.0;
      dst[x] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  if (!cv::imwrite(path.string(), gray)) fail(Errc::io, "cannot write " + path.string());
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0) fail(Errc::invalid_argument, "resize target must be positive");
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, img.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, img.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = img.pixel(x0, y0)[c] * (1.0 - wx) + img.pixel(x1, y0)[c] * wx;
        double bot = img.pixel(x0, y1)[c] * (1.0 - wx) + img.pixel(x1, y1)[c] * wx;
        out.pixel(x, y)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1.0 - wy) + bot * wy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace repalign
