#pragma once

#include "tablebench/protocol/image.hpp"

namespace tb::gateway {

inline constexpr double kDefaultMatchThreshold = 8.0;

struct OverlayResult {
  RgbImage blended;
  double match_score = 0.0;
};

// alpha * reference + (1 - alpha) * live per channel, rounded half up.
RgbImage blend(const RgbImage& live, const RgbImage& reference, double alpha);

// Mean absolute grayscale difference over 64x64 box-downsampled copies, in
// [0, 255]. Zero means the views agree.
double match_score(const RgbImage& live, const RgbImage& reference);

OverlayResult overlay(const RgbImage& live, const RgbImage& reference, double alpha);

}  // namespace tb::gateway
