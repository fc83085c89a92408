#include "collage/image.hpp"

#include <algorithm>
#include <cstring>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage {

namespace {

cv::Mat to_mat(const Image& image) {
  if (image.empty()) throw PreconditionError("empty image");
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out;
  out.width = rgb.cols;
  out.height = rgb.rows;
  out.pixels.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  if (rgb.isContinuous()) {
    std::memcpy(out.pixels.data(), rgb.data, out.pixels.size());
  } else {
    for (int y = 0; y < rgb.rows; ++y) {
      std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3, rgb.ptr(y),
                  static_cast<std::size_t>(rgb.cols) * 3);
    }
  }
  return out;
}

}  // namespace

Image Image::solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (width <= 0 || height <= 0) throw PreconditionError("solid image needs positive dimensions");
  Image out;
  out.width = width;
  out.height = height;
  out.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    out.pixels[i] = r;
    out.pixels[i + 1] = g;
    out.pixels[i + 2] = b;
  }
  return out;
}

Image decode_image(const std::uint8_t* data, std::size_t size) {
  if (data == nullptr || size == 0) throw DecodeError("empty image payload");
  cv::Mat raw(1, static_cast<int>(size), CV_8UC1, const_cast<std::uint8_t*>(data));
  cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_COLOR);
  if (decoded.empty()) throw DecodeError("payload did not decode as an image");
  return from_mat(decoded);
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  return decode_image(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  cv::Mat bgr = to_mat(image);
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) throw IoError("png encoding failed");
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = util::read_binary_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

void save_png_atomic(const Image& image, const std::filesystem::path& path) {
  util::atomic_write_file(path, encode_png(image));
}

Image crop(const Image& image, int x, int y, int width, int height) {
  if (width <= 0 || height <= 0 || x < 0 || y < 0 || x + width > image.width ||
      y + height > image.height) {
    throw PreconditionError("crop rect out of bounds");
  }
  Image out;
  out.width = width;
  out.height = height;
  out.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (int row = 0; row < height; ++row) {
    const std::uint8_t* src = image.row(y + row) + static_cast<std::size_t>(x) * 3;
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(row) * width * 3, src,
                static_cast<std::size_t>(width) * 3);
  }
  return out;
}

Image resize(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw PreconditionError("resize needs positive dimensions");
  if (width == image.width && height == image.height) return image;
  cv::Mat bgr = to_mat(image);
  cv::Mat scaled;
  cv::resize(bgr, scaled, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  return from_mat(scaled);
}

void fill_rect(Image& image, int x, int y, int width, int height, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  int x0 = std::max(x, 0);
  int y0 = std::max(y, 0);
  int x1 = std::min(x + width, image.width);
  int y1 = std::min(y + height, image.height);
  for (int row = y0; row < y1; ++row) {
    std::uint8_t* dst = image.row(row);
    for (int col = x0; col < x1; ++col) {
      dst[col * 3] = r;
      dst[col * 3 + 1] = g;
      dst[col * 3 + 2] = b;
    }
  }
}

std::string image_digest(const Image& image) {
  std::string header =
      "image:" + std::to_string(image.width) + "x" + std::to_string(image.height) + ":";
  std::vector<std::uint8_t> buf(header.begin(), header.end());
  buf.insert(buf.end(), image.pixels.begin(), image.pixels.end());
  return util::sha256_hex(buf);
}

std::array<double, 6> channel_stats(const Image& image) {
  if (image.empty()) throw PreconditionError("empty image");
  std::array<double, 3> sum{};
  std::array<double, 3> sum_sq{};
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = image.pixels[i * 3 + c] / 255.0;
      sum[c] += v;
      sum_sq[c] += v * v;
    }
  }
  std::array<double, 6> stats{};
  for (int c = 0; c < 3; ++c) {
    double mean = sum[c] / static_cast<double>(count);
    stats[c] = mean;
    stats[3 + c] = sum_sq[c] / static_cast<double>(count) - mean * mean;
  }
  return stats;
}

}  // namespace collage
