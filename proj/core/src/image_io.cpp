#include "sgsasr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>

#include "sgsasr/errors.hpp"

namespace sgsasr {

Image read_png(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DatasetError("cannot read image " + path.string() + ": " + e.what());
  }
  if (mat.empty()) throw DatasetError("cannot read image " + path.string());
  double scale = 0.0;
  if (mat.depth() == CV_8U) {
    scale = 1.0 / 255.0;
  } else if (mat.depth() == CV_16U) {
    scale = 1.0 / 65535.0;
  } else {
    throw DatasetError("unsupported pixel depth in " + path.string());
  }
  const int src_channels = mat.channels();
  if (src_channels != 1 && src_channels != 3 && src_channels != 4) {
    throw DatasetError("unsupported channel count in " + path.string());
  }
  const int channels = src_channels == 1 ? 1 : 3;
  Image out({1, channels, mat.rows, mat.cols});
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        // OpenCV stores BGR(A); tensors are RGB.
        const int src_c = channels == 1 ? 0 : 2 - c;
        const std::size_t offset = static_cast<std::size_t>(x) * src_channels + src_c;
        const double v = mat.depth() == CV_8U ? mat.ptr<std::uint8_t>(y)[offset]
                                              : mat.ptr<std::uint16_t>(y)[offset];
        out.at(0, c, y, x) = v * scale;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw InputError("write_png expects a single 1- or 3-channel image, got " + image.shape().str());
  }
  const int channels = image.c();
  cv::Mat mat(image.h(), image.w(), channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < image.h(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        const int dst_c = channels == 1 ? 0 : 2 - c;
        row[x * channels + dst_c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw DatasetError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw DatasetError("cannot write image " + path.string());
}

Image clamp01(Image image) {
  for (auto& v : image.values()) v = std::clamp(v, 0.0, 1.0);
  return image;
}

}  // namespace sgsasr
