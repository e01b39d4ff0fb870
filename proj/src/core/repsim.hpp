#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/tensorio.hpp"

namespace repalign::repsim {

/// Symmetric n x n dissimilarity matrix with a zero diagonal over an ordered
/// item list.
class Rdm {
 public:
  /// Validates shape, symmetry (exact) and the zero diagonal.
  Rdm(std::vector<std::string> items, std::vector<double> cells);

  std::size_t size() const noexcept { return items_.size(); }
  const std::vector<std::string>& items() const noexcept { return items_; }
  const std::vector<double>& cells() const noexcept { return cells_; }
  double operator()(std::size_t i, std::size_t j) const { return cells_[i * items_.size() + j]; }

 private:
  friend Rdm build_rdm(const tensorio::FeatureMatrix&, int);
  struct Unchecked {};
  Rdm(Unchecked, std::vector<std::string> items, std::vector<double> cells)
      : items_(std::move(items)), cells_(std::move(cells)) {}

  std::vector<std::string> items_;
  std::vector<double> cells_;
};

/// 1 - u.v / (|u| |v|), clamped to [0, 2]. Throws zero_norm for a zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v);

/// Cosine-distance RDM over the rows of `features`.
///
/// The Gram matrix is accumulated in fixed row blocks and fixed column chunks,
/// so each cell is produced by the same instruction sequence whatever the
/// worker count; results are bitwise identical for any `workers` value.
/// Rows that are exactly zero raise zero_norm naming the image id.
Rdm build_rdm(const tensorio::FeatureMatrix& features, int workers = 1);

/// Strictly-upper cells in row-major order: (0,1), (0,2), ..., (n-2,n-1).
std::vector<double> upper_triangle(const Rdm& rdm);

/// Fractional (1-based) ranks; tied values share the mean of their rank span.
std::vector<double> average_ranks(std::span<const double> x);

/// Sample Pearson correlation; throws degenerate when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average ranks. Requires equal lengths >= 3.
double spearman_rho(std::span<const double> x, std::span<const double> y);

enum class RsaKind { Base, Dist };
enum class RsaTarget { Saliency, Semantics, Brain };

const char* to_string(RsaKind k) noexcept;
const char* to_string(RsaTarget t) noexcept;

struct RsaScore {
  double rho = 0.0;
  std::size_t n_pairs = 0;
  RsaKind kind = RsaKind::Base;
  RsaTarget target = RsaTarget::Saliency;
  std::optional<std::string> condition;
};

/// Spearman correlation of the two upper triangles. Both RDMs must carry the
/// same items in the same order.
RsaScore rsa(const Rdm& a, const Rdm& b, RsaKind kind = RsaKind::Base, RsaTarget target = RsaTarget::Saliency,
             std::optional<std::string> condition = std::nullopt);

/// |dist.rho - base.rho| for a Base/Dist pair on the same target.
double delta_rsa(const RsaScore& base, const RsaScore& dist);

void save_rdm(const Rdm& rdm, const std::filesystem::path& path);
Rdm load_rdm(const std::filesystem::path& path);

}  // namespace repalign::repsim
