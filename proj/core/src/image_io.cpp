#include "wr/image_io.hpp"

#include <filesystem>

#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace wr {

GrayImage load_gray(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw IoError("cannot read image \"" + path + "\"");
  GrayImage img(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const std::uint8_t* row = mat.ptr<std::uint8_t>(y);
    std::copy(row, row + mat.cols, img.pixels.begin() + static_cast<std::size_t>(y) * mat.cols);
  }
  return img;
}

namespace {

void save_png_impl(const std::uint8_t* data, int width, int height,
                   const std::string& path) {
  cv::Mat mat(height, width, CV_8UC1, const_cast<std::uint8_t*>(data));
  const std::string tmp = path + ".tmp.png";
  if (!cv::imwrite(tmp, mat)) throw IoError("cannot write PNG \"" + path + "\"");
  fs::rename(tmp, path);
}

}  // namespace

void save_png(const GrayImage& image, const std::string& path) {
  if (image.empty()) throw EmptyImage("save_png: empty image");
  save_png_impl(image.pixels.data(), image.width, image.height, path);
}

void save_png(const BinaryImage& mask, const std::string& path) {
  if (mask.empty()) throw EmptyImage("save_png: empty mask");
  GrayImage g = to_gray(mask);
  save_png_impl(g.pixels.data(), g.width, g.height, path);
}

}  // namespace wr
