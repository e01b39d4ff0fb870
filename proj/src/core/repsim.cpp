#include "core/repsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/npy.hpp"
#include "core/parallel.hpp"

namespace repalign::repsim {

namespace {

constexpr std::size_t kBlockRows = 32;    // rows per tile side
constexpr std::size_t kChunkCols = 1024;  // columns per accumulation chunk
constexpr std::size_t kLanes = 16;

// Partial dot product of one column chunk. Lane-wise accumulation followed by a
// fixed pairwise reduction, then the scalar tail.
inline double dot_chunk(const double* a, const double* b, std::size_t len) {
  double acc[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= len; k += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[k + l] * b[k + l];
  for (std::size_t w = kLanes / 2; w >= 1; w /= 2)
    for (std::size_t l = 0; l < w; ++l) acc[l] += acc[l + w];
  double s = acc[0];
  for (; k < len; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

const char* to_string(RsaKind k) noexcept { return k == RsaKind::Base ? "Base" : "Dist"; }

const char* to_string(RsaTarget t) noexcept {
  switch (t) {
    case RsaTarget::Saliency: return "saliency";
    case RsaTarget::Semantics: return "semantics";
    case RsaTarget::Brain: return "brain";
  }
  return "unknown";
}

Rdm::Rdm(std::vector<std::string> items, std::vector<double> cells)
    : items_(std::move(items)), cells_(std::move(cells)) {
  const std::size_t n = items_.size();
  if (n < 2) fail(Errc::invalid_argument, "RDM needs at least 2 items");
  if (cells_.size() != n * n)
    fail(Errc::format, "RDM has " + std::to_string(cells_.size()) + " cells for " + std::to_string(n) + " items");
  for (std::size_t i = 0; i < n; ++i) {
    if (cells_[i * n + i] != 0.0) fail(Errc::format, "RDM diagonal is not zero at " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      double a = cells_[i * n + j];
      if (!std::isfinite(a)) fail(Errc::non_finite, "RDM cell is not finite");
      if (a != cells_[j * n + i])
        fail(Errc::format, "RDM is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(Errc::invalid_argument, "cosine_distance: length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    uv += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) fail(Errc::zero_norm, "cosine_distance: zero-norm vector");
  double norm = std::sqrt(uu * vv);
  if (!std::isfinite(norm)) norm = std::sqrt(uu) * std::sqrt(vv);
  return std::clamp(1.0 - uv / norm, 0.0, 2.0);
}

Rdm build_rdm(const tensorio::FeatureMatrix& features, int workers) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const double* x = features.data().data();

  for (std::size_t i = 0; i < n; ++i) {
    auto r = features.row(i);
    if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }))
      fail(Errc::zero_norm, "zero-norm feature row for image '" + features.items()[i] + "'");
  }

  // Upper-triangular Gram matrix, tile pairs (bi <= bj) as independent tasks.
  std::vector<double> cells(n * n, 0.0);
  const std::size_t blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t bi = 0; bi < blocks; ++bi)
    for (std::size_t bj = bi; bj < blocks; ++bj) tiles.emplace_back(bi, bj);

  parallel_for(tiles.size(), workers, [&](std::size_t t) {
    const auto [bi, bj] = tiles[t];
    const std::size_t i0 = bi * kBlockRows, i1 = std::min(n, i0 + kBlockRows);
    const std::size_t j0 = bj * kBlockRows, j1 = std::min(n, j0 + kBlockRows);
    for (std::size_t k0 = 0; k0 < d; k0 += kChunkCols) {
      const std::size_t len = std::min(kChunkCols, d - k0);
      for (std::size_t i = i0; i < i1; ++i) {
        const double* a = x + i * d + k0;
        for (std::size_t j = std::max(j0, i); j < j1; ++j) cells[i * n + j] += dot_chunk(a, x + j * d + k0, len);
      }
    }
  });

  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = cells[i * n + i];
  for (std::size_t i = 0; i < n; ++i) {
    cells[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dist = std::clamp(1.0 - cells[i * n + j] / std::sqrt(sq[i] * sq[j]), 0.0, 2.0);
      cells[i * n + j] = dist;
      cells[j * n + i] = dist;
    }
  }
  return Rdm(Rdm::Unchecked{}, features.items(), std::move(cells));
}

std::vector<double> upper_triangle(const Rdm& rdm) {
  const std::size_t n = rdm.size();
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back(rdm(i, j));
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t m = x.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  std::vector<double> ranks(m);
  std::size_t start = 0;
  while (start < m) {
    std::size_t end = start + 1;
    while (end < m && x[order[end]] == x[order[start]]) ++end;
    // Positions start..end-1 hold 1-based ranks start+1..end.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(Errc::invalid_argument, "pearson: length mismatch");
  const std::size_t m = x.size();
  if (m < 2) fail(Errc::invalid_argument, "pearson: need at least 2 values");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(Errc::degenerate, "correlation undefined: constant input vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(Errc::invalid_argument, "spearman_rho: length mismatch (" + std::to_string(x.size()) + " vs " +
                                     std::to_string(y.size()) + ")");
  if (x.size() < 3) fail(Errc::invalid_argument, "spearman_rho: need at least 3 values");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

RsaScore rsa(const Rdm& a, const Rdm& b, RsaKind kind, RsaTarget target, std::optional<std::string> condition) {
  if (a.items() != b.items()) fail(Errc::id_mismatch, "rsa: RDMs do not share the same ordered item list");
  const auto ua = upper_triangle(a);
  const auto ub = upper_triangle(b);
  RsaScore s;
  s.rho = spearman_rho(ua, ub);
  s.n_pairs = ua.size();
  s.kind = kind;
  s.target = target;
  s.condition = std::move(condition);
  return s;
}

double delta_rsa(const RsaScore& base, const RsaScore& dist) {
  if (base.kind != RsaKind::Base || dist.kind != RsaKind::Dist)
    fail(Errc::invalid_argument, "delta_rsa: expects a Base score and a Dist score");
  if (base.target != dist.target)
    fail(Errc::invalid_argument, std::string("delta_rsa: target mismatch (") + to_string(base.target) + " vs " +
                                     to_string(dist.target) + ")");
  return std::fabs(dist.rho - base.rho);
}

void save_rdm(const Rdm& rdm, const std::filesystem::path& path) {
  npy::write(path, rdm.size(), rdm.size(), rdm.cells());
  tensorio::write_ids(tensorio::ids_sidecar_path(path), rdm.items());
}

Rdm load_rdm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::io, "missing file " + path.string());
  auto arr = npy::read(path);
  if (arr.rows != arr.cols) fail(Errc::format, path.string() + ": RDM must be square");
  auto ids = tensorio::read_ids(tensorio::ids_sidecar_path(path));
  if (ids.size() != arr.rows) fail(Errc::format, path.string() + ": id sidecar length does not match RDM size");
  return Rdm(std::move(ids), std::move(arr.values));
}

}  // namespace repalign::repsim
