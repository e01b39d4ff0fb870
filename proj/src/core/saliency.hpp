#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/tensorio.hpp"

namespace repalign::saliency {

/// Single-channel floating-point map, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
  double max() const;
};

inline constexpr int kMapSize = 256;
inline constexpr int kPyramidLevels = 9;
inline constexpr int kAccumulationLevel = 4;
inline constexpr int kCenterLevels[] = {2, 3, 4};
inline constexpr int kSurroundDeltas[] = {3, 4};
inline constexpr double kOrientations[] = {0.0, 45.0, 90.0, 135.0};
inline constexpr int kMinImageSide = 64;

/// Recorded in run provenance so alternative normalisation variants can be told apart.
inline constexpr const char* kVariantTag = "itti-koch/maxnorm-localmax10/binomial4/gabor-1oct";

enum class Channel { Intensity, Color, Orientation };

struct SaliencyMap {
  std::string image_id;
  Plane grid;  // kMapSize x kMapSize, non-negative
};

/// Level 0 is the input; level k+1 is level k blurred with the separable
/// [1 3 3 1]/8 kernel and decimated by two (floor, at least one pixel).
/// Throws invalid_argument when the shorter side is below 2^(levels-1).
std::vector<Plane> gaussian_pyramid(const Plane& img, int levels);

/// Bilinear resampling with pixel-centre alignment and clamped borders.
Plane resample(const Plane& p, int width, int height);

/// |pyr[c] - resample(pyr[s])| at the resolution of level c.
Plane center_surround(const std::vector<Plane>& pyr, int c, int s);

/// Map normalisation: scale to [0,1] by the maximum, then multiply by
/// (1 - m)^2 with m the mean of the other local maxima (>= 0.1). Maps whose
/// maximum is numerically zero come back as zeros.
Plane normalize_map(const Plane& p);

/// Quadrature Gabor energy at `theta_deg`, one-octave bandwidth, zero-DC.
Plane gabor_energy(const Plane& p, double theta_deg);

void validate_image(const Image& img);

/// Across-scale sum of normalised centre-surround maps for one channel at the
/// level-4 lattice of the working image.
Plane channel_conspicuity(const Image& img, Channel channel);

/// Mean of the three normalised conspicuity maps, resampled to 256 x 256.
SaliencyMap compute_saliency(const Image& img, std::string image_id = {});

/// Row-major flattening; row order follows `maps`.
tensorio::FeatureMatrix maps_to_feature_matrix(const std::vector<SaliencyMap>& maps);

}  // namespace repalign::saliency
