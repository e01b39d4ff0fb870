#include "core/saliency.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace repalign::saliency {

namespace {

// Maps whose peak is below this are treated as carrying no contrast; plane
// values live on a [0, 1] intensity scale.
constexpr double kNullLevel = 1e-9;
constexpr double kLocalMaxFloor = 0.1;

constexpr double kGaborWavelength = 4.0;
// sigma / lambda for a one-octave half-magnitude bandwidth.
constexpr double kGaborSigmaRatio = 0.56222;
constexpr double kGaborAspect = 0.5;

// One pyramid step: separable [1 3 3 1]/8 with the taps centred between
// pixels 2i and 2i+1, so decimation is symmetric under flips of even sizes.
Plane reduce(const Plane& p) {
  const int w = std::max(1, p.width / 2);
  const int h = std::max(1, p.height / 2);
  static constexpr double kTaps[4] = {1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8};

  Plane horiz(w, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = 0; t < 4; ++t) {
        int sx = std::clamp(2 * x - 1 + t, 0, p.width - 1);
        s += kTaps[t] * p.at(sx, y);
      }
      horiz.at(x, y) = s;
    }
  }
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = 0; t < 4; ++t) {
        int sy = std::clamp(2 * y - 1 + t, 0, p.height - 1);
        s += kTaps[t] * horiz.at(x, sy);
      }
      out.at(x, y) = s;
    }
  }
  return out;
}

Plane reduce_to_level(Plane p, int from, int to) {
  for (int l = from; l < to; ++l) p = reduce(p);
  return p;
}

struct GaborPair {
  int radius = 0;
  std::vector<double> even, odd;
};

GaborPair make_gabor(double theta_deg) {
  const double sigma = kGaborSigmaRatio * kGaborWavelength;
  const double theta = theta_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  GaborPair k;
  k.radius = static_cast<int>(std::ceil(2.5 * sigma / kGaborAspect));
  const int size = 2 * k.radius + 1;
  std::vector<double> env(static_cast<std::size_t>(size) * size);
  k.even.resize(env.size());
  k.odd.resize(env.size());
  double env_sum = 0.0, even_sum = 0.0;
  for (int dy = -k.radius; dy <= k.radius; ++dy) {
    for (int dx = -k.radius; dx <= k.radius; ++dx) {
      const double xr = dx * ct + dy * st;
      const double yr = -dx * st + dy * ct;
      const double e = std::exp(-(xr * xr + kGaborAspect * kGaborAspect * yr * yr) / (2.0 * sigma * sigma));
      const double phase = 2.0 * std::numbers::pi * xr / kGaborWavelength;
      const std::size_t i = static_cast<std::size_t>(dy + k.radius) * size + (dx + k.radius);
      env[i] = e;
      k.even[i] = e * std::cos(phase);
      k.odd[i] = e * std::sin(phase);
      env_sum += e;
      even_sum += k.even[i];
    }
  }
  // Remove the DC component of the even kernel; the odd one has none.
  const double dc = even_sum / env_sum;
  for (std::size_t i = 0; i < env.size(); ++i) k.even[i] -= dc * env[i];
  return k;
}

const GaborPair& gabor_for(double theta_deg) {
  static const std::array<GaborPair, 4> bank = {make_gabor(kOrientations[0]), make_gabor(kOrientations[1]),
                                                make_gabor(kOrientations[2]), make_gabor(kOrientations[3])};
  for (std::size_t i = 0; i < 4; ++i)
    if (kOrientations[i] == theta_deg) return bank[i];
  static thread_local GaborPair custom;
  custom = make_gabor(theta_deg);
  return custom;
}

// Per-image feature pyramids shared by all channels.
struct Features {
  std::vector<Plane> intensity;
  std::vector<Plane> rg;
  std::vector<Plane> by;
  std::array<std::vector<Plane>, 4> orientation;  // levels below the first centre level are empty
  int acc_w = 0, acc_h = 0;
};

struct WorkingPlanes {
  Plane r, g, b;
};

WorkingPlanes to_working_planes(const Image& img) {
  WorkingPlanes wp{Plane(img.width, img.height), Plane(img.width, img.height), Plane(img.width, img.height)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      wp.r.at(x, y) = p[0] / 255.0;
      wp.g.at(x, y) = p[1] / 255.0;
      wp.b.at(x, y) = p[2] / 255.0;
    }
  }
  // Shorter side to kMapSize.
  int w, h;
  if (img.width <= img.height) {
    w = kMapSize;
    h = static_cast<int>(std::lround(static_cast<double>(img.height) * kMapSize / img.width));
  } else {
    h = kMapSize;
    w = static_cast<int>(std::lround(static_cast<double>(img.width) * kMapSize / img.height));
  }
  if (w != img.width || h != img.height) {
    wp.r = resample(wp.r, w, h);
    wp.g = resample(wp.g, w, h);
    wp.b = resample(wp.b, w, h);
  }
  return wp;
}

Features extract_features(const Image& img) {
  validate_image(img);
  WorkingPlanes wp = to_working_planes(img);
  const int w = wp.r.width, h = wp.r.height;

  Plane intensity(w, h), rg(w, h), by(w, h);
  double peak = 0.0;
  for (std::size_t i = 0; i < intensity.px.size(); ++i) {
    intensity.px[i] = (wp.r.px[i] + wp.g.px[i] + wp.b.px[i]) / 3.0;
    peak = std::max(peak, intensity.px[i]);
  }
  // Hue is decoupled from intensity by dividing by I where I exceeds a tenth
  // of its maximum; elsewhere the colour signal is zero.
  for (std::size_t i = 0; i < intensity.px.size(); ++i) {
    const double in = intensity.px[i];
    if (in <= 0.1 * peak || in <= 0.0) continue;
    const double r = wp.r.px[i] / in, g = wp.g.px[i] / in, b = wp.b.px[i] / in;
    const double R = std::max(0.0, r - (g + b) / 2.0);
    const double G = std::max(0.0, g - (r + b) / 2.0);
    const double B = std::max(0.0, b - (r + g) / 2.0);
    const double Y = std::max(0.0, (r + g) / 2.0 - std::fabs(r - g) / 2.0 - b);
    rg.px[i] = R - G;
    by.px[i] = B - Y;
  }

  Features f;
  f.intensity = gaussian_pyramid(intensity, kPyramidLevels);
  f.rg = gaussian_pyramid(rg, kPyramidLevels);
  f.by = gaussian_pyramid(by, kPyramidLevels);
  for (std::size_t t = 0; t < 4; ++t) {
    f.orientation[t].resize(kPyramidLevels);
    for (int l = kCenterLevels[0]; l < kPyramidLevels; ++l)
      f.orientation[t][l] = gabor_energy(f.intensity[l], kOrientations[t]);
  }
  f.acc_w = f.intensity[kAccumulationLevel].width;
  f.acc_h = f.intensity[kAccumulationLevel].height;
  return f;
}

void accumulate(Plane& acc, const Plane& map_at_c, int c) {
  Plane r = reduce_to_level(map_at_c, c, kAccumulationLevel);
  for (std::size_t i = 0; i < acc.px.size(); ++i) acc.px[i] += r.px[i];
}

// Sum over (c, s) of N(|pyr[c] - pyr[s]|) at the accumulation lattice.
Plane across_scale(const Features& f, const std::vector<Plane>& pyr) {
  Plane acc(f.acc_w, f.acc_h);
  for (int c : kCenterLevels)
    for (int delta : kSurroundDeltas) accumulate(acc, normalize_map(center_surround(pyr, c, c + delta)), c);
  return acc;
}

Plane conspicuity(const Features& f, Channel channel) {
  switch (channel) {
    case Channel::Intensity:
      return across_scale(f, f.intensity);
    case Channel::Color: {
      Plane acc = across_scale(f, f.rg);
      Plane by = across_scale(f, f.by);
      for (std::size_t i = 0; i < acc.px.size(); ++i) acc.px[i] += by.px[i];
      return acc;
    }
    case Channel::Orientation: {
      Plane acc(f.acc_w, f.acc_h);
      for (const auto& pyr : f.orientation) {
        Plane per_theta = normalize_map(across_scale(f, pyr));
        for (std::size_t i = 0; i < acc.px.size(); ++i) acc.px[i] += per_theta.px[i];
      }
      return acc;
    }
  }
  fail(Errc::invalid_argument, "unknown channel");
}

}  // namespace

Plane::Plane(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) fail(Errc::invalid_argument, "plane dimensions must be positive");
  px.assign(static_cast<std::size_t>(w) * h, fill);
}

double Plane::max() const { return px.empty() ? 0.0 : *std::max_element(px.begin(), px.end()); }

std::vector<Plane> gaussian_pyramid(const Plane& img, int levels) {
  if (levels < 2) fail(Errc::invalid_argument, "pyramid needs at least 2 levels");
  const int need = 1 << (levels - 1);
  if (std::min(img.width, img.height) < need)
    fail(Errc::invalid_argument, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                     " too small for a " + std::to_string(levels) + "-level pyramid (shorter side >= " +
                                     std::to_string(need) + ")");
  std::vector<Plane> pyr;
  pyr.reserve(levels);
  pyr.push_back(img);
  for (int l = 1; l < levels; ++l) pyr.push_back(reduce(pyr.back()));
  return pyr;
}

Plane resample(const Plane& p, int width, int height) {
  if (width == p.width && height == p.height) return p;
  Plane out(width, height);
  const double sx = static_cast<double>(p.width) / width;
  const double sy = static_cast<double>(p.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(p.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, p.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(p.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, p.width - 1);
      const double wx = fx - x0;
      const double top = p.at(x0, y0) * (1.0 - wx) + p.at(x1, y0) * wx;
      const double bot = p.at(x0, y1) * (1.0 - wx) + p.at(x1, y1) * wx;
      out.at(x, y) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

Plane center_surround(const std::vector<Plane>& pyr, int c, int s) {
  const int levels = static_cast<int>(pyr.size());
  if (c < 0 || s <= c || s >= levels)
    fail(Errc::invalid_argument, "invalid centre/surround levels c=" + std::to_string(c) + " s=" + std::to_string(s) +
                                     " for a " + std::to_string(levels) + "-level pyramid");
  const Plane& center = pyr[c];
  Plane surround = resample(pyr[s], center.width, center.height);
  for (std::size_t i = 0; i < surround.px.size(); ++i) surround.px[i] = std::fabs(center.px[i] - surround.px[i]);
  return surround;
}

Plane normalize_map(const Plane& p) {
  const double peak = p.max();
  Plane out(p.width, p.height);
  if (!(peak > kNullLevel)) return out;
  for (std::size_t i = 0; i < p.px.size(); ++i) out.px[i] = std::max(0.0, p.px[i] / peak);

  const auto global = static_cast<std::size_t>(std::max_element(out.px.begin(), out.px.end()) - out.px.begin());
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double v = out.at(x, y);
      if (v < kLocalMaxFloor || static_cast<std::size_t>(y) * out.width + x == global) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= out.width || ny >= out.height) continue;
          if (out.at(nx, ny) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) {
        sum += v;
        ++count;
      }
    }
  }
  const double mean_other = count ? sum / static_cast<double>(count) : 0.0;
  const double weight = (1.0 - mean_other) * (1.0 - mean_other);
  for (double& v : out.px) v *= weight;
  return out;
}

Plane gabor_energy(const Plane& p, double theta_deg) {
  const GaborPair& k = gabor_for(theta_deg);
  const int r = k.radius, size = 2 * r + 1;

  // Border-replicated copy so the inner loops run without clamping.
  const int pw = p.width + 2 * r;
  std::vector<double> padded(static_cast<std::size_t>(pw) * (p.height + 2 * r));
  for (int y = 0; y < p.height + 2 * r; ++y) {
    const int sy = std::clamp(y - r, 0, p.height - 1);
    for (int x = 0; x < pw; ++x)
      padded[static_cast<std::size_t>(y) * pw + x] = p.at(std::clamp(x - r, 0, p.width - 1), sy);
  }

  Plane even(p.width, p.height), odd(p.width, p.height);
  for (int ky = 0; ky < size; ++ky) {
    for (int kx = 0; kx < size; ++kx) {
      const double we = k.even[static_cast<std::size_t>(ky) * size + kx];
      const double wo = k.odd[static_cast<std::size_t>(ky) * size + kx];
      for (int y = 0; y < p.height; ++y) {
        const double* src = padded.data() + static_cast<std::size_t>(y + ky) * pw + kx;
        double* e = even.px.data() + static_cast<std::size_t>(y) * p.width;
        double* o = odd.px.data() + static_cast<std::size_t>(y) * p.width;
        for (int x = 0; x < p.width; ++x) {
          e[x] += we * src[x];
          o[x] += wo * src[x];
        }
      }
    }
  }
  for (std::size_t i = 0; i < even.px.size(); ++i)
    even.px[i] = std::sqrt(even.px[i] * even.px[i] + odd.px[i] * odd.px[i]);
  return even;
}

void validate_image(const Image& img) {
  if (img.width < kMinImageSide || img.height < kMinImageSide)
    fail(Errc::invalid_argument, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                     " is below the 64x64 minimum");
  if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    fail(Errc::format, "image pixel buffer is incomplete");
}

Plane channel_conspicuity(const Image& img, Channel channel) { return conspicuity(extract_features(img), channel); }

SaliencyMap compute_saliency(const Image& img, std::string image_id) {
  const Features f = extract_features(img);
  Plane combined(f.acc_w, f.acc_h);
  for (Channel ch : {Channel::Intensity, Channel::Color, Channel::Orientation}) {
    Plane n = normalize_map(conspicuity(f, ch));
    for (std::size_t i = 0; i < combined.px.size(); ++i) combined.px[i] += n.px[i];
  }
  for (double& v : combined.px) v /= 3.0;
  SaliencyMap m;
  m.image_id = std::move(image_id);
  m.grid = resample(combined, kMapSize, kMapSize);
  for (double& v : m.grid.px) v = std::max(0.0, v);
  return m;
}

tensorio::FeatureMatrix maps_to_feature_matrix(const std::vector<SaliencyMap>& maps) {
  if (maps.size() < 2) fail(Errc::invalid_argument, "need at least 2 saliency maps");
  const std::size_t d = static_cast<std::size_t>(kMapSize) * kMapSize;
  std::vector<std::string> ids;
  std::vector<double> data;
  data.reserve(maps.size() * d);
  for (const auto& m : maps) {
    if (m.grid.width != kMapSize || m.grid.height != kMapSize)
      fail(Errc::invalid_argument, "saliency map '" + m.image_id + "' is not 256x256");
    ids.push_back(m.image_id);
    data.insert(data.end(), m.grid.px.begin(), m.grid.px.end());
  }
  return tensorio::FeatureMatrix(std::move(ids), d, std::move(data), "saliency");
}

}  // namespace repalign::saliency
