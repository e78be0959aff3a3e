#include "tablebench/gateway/overlay.hpp"

#include <cmath>
#include <vector>

#include "tablebench/protocol/error.hpp"

namespace tb::gateway {
namespace {

constexpr int kSide = 64;

void require_same_size(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::kInvalidArgument, "reference is " + std::to_string(b.width) + "x" +
                                                 std::to_string(b.height) + " but the live frame is " +
                                                 std::to_string(a.width) + "x" + std::to_string(a.height));
  }
  if (a.width <= 0 || a.height <= 0) throw Error(ErrorCode::kInvalidArgument, "empty image");
}

std::vector<double> gray_64(const RgbImage& img) {
  std::vector<double> out(kSide * kSide, 0.0);
  for (int oy = 0; oy < kSide; ++oy) {
    const int y0 = oy * img.height / kSide;
    const int y1 = std::max(y0 + 1, (oy + 1) * img.height / kSide);
    for (int ox = 0; ox < kSide; ++ox) {
      const int x0 = ox * img.width / kSide;
      const int x1 = std::max(x0 + 1, (ox + 1) * img.width / kSide);
      double sum = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const auto* p = img.at(x, y);
          sum += (299.0 * p[0] + 587.0 * p[1] + 114.0 * p[2]) / 1000.0;
        }
      }
      out[static_cast<std::size_t>(oy * kSide + ox)] = sum / ((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace

RgbImage blend(const RgbImage& live, const RgbImage& reference, double alpha) {
  require_same_size(live, reference);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  RgbImage out(live.width, live.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = alpha * reference.pixels[i] + (1.0 - alpha) * live.pixels[i];
    out.pixels[i] = static_cast<std::uint8_t>(std::min(255.0, std::floor(v + 0.5)));
  }
  return out;
}

double match_score(const RgbImage& live, const RgbImage& reference) {
  require_same_size(live, reference);
  const auto a = gray_64(live);
  const auto b = gray_64(reference);
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

OverlayResult overlay(const RgbImage& live, const RgbImage& reference, double alpha) {
  return {blend(live, reference, alpha), match_score(live, reference)};
}

}  // namespace tb::gateway
