#include "core/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"

namespace repalign::analysis {

BrainScore brain_rsa(const tensorio::FeatureMatrix& responses, const repsim::Rdm& target, std::string subject,
                     std::string roi, int workers) {
  auto ordered = responses.reordered(target.items());
  auto rdm = repsim::build_rdm(ordered, workers);
  auto score = repsim::rsa(rdm, target, repsim::RsaKind::Base, repsim::RsaTarget::Brain);
  return BrainScore{std::move(subject), std::move(roi), score.rho, target.size()};
}

tensorio::FeatureMatrix select_rows(const tensorio::FeatureMatrix& m, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.rows(); ++i) index.emplace(m.items()[i], i);
  std::vector<double> data;
  data.reserve(ids.size() * m.cols());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) fail(Errc::id_mismatch, "id \"" + id + "\" is absent from " + m.source_tag());
    auto row = m.row(it->second);
    data.insert(data.end(), row.begin(), row.end());
  }
  return tensorio::FeatureMatrix(ids, m.cols(), std::move(data), m.source_tag());
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(Errc::invalid_argument, "pearson_r: length mismatch");
  if (x.size() < 3) fail(Errc::invalid_argument, "pearson_r: need at least 3 values");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) fail(Errc::non_finite, "pearson_r: non-finite input");
  return repsim::pearson(x, y);
}

namespace {

std::vector<double> centered_unit(std::span<const double> v) {
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  std::vector<double> out(v.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] - mean;
    ss += out[i] * out[i];
  }
  const double norm = std::sqrt(ss);
  for (double& a : out) a /= norm;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t n_perm, std::uint64_t seed,
                     int workers) {
  if (n_perm < 100) fail(Errc::invalid_argument, "permutation_p: n_perm must be at least 100");
  pearson_r(x, y);
  const auto xc = centered_unit(x);
  const auto yc = centered_unit(y);
  const double r_obs = std::fabs(dot(xc, yc));
  const double tol = 1e-12;

  constexpr std::size_t kBlock = 256;
  const std::size_t n_blocks = (n_perm + kBlock - 1) / kBlock;
  std::vector<std::size_t> hits(n_blocks, 0);
  parallel_for(n_blocks, workers, [&](std::size_t b) {
    std::vector<double> shuffled(yc.size());
    const std::size_t end = std::min(n_perm, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      Rng rng{seed, static_cast<std::uint64_t>(i)};
      shuffled = yc;
      for (std::size_t k = shuffled.size() - 1; k > 0; --k) std::swap(shuffled[k], shuffled[rng.below(k + 1)]);
      if (std::fabs(dot(xc, shuffled)) >= r_obs - tol) ++hits[b];
    }
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(1 + total) / static_cast<double>(n_perm + 1);
}

const char* to_string(MetaSubset s) noexcept {
  switch (s) {
    case MetaSubset::All: return "all";
    case MetaSubset::NegativeSaliency: return "negative-saliency";
    case MetaSubset::PositiveSaliency: return "positive-saliency";
  }
  return "?";
}

std::vector<LayerSummary> collect_layers(const tensorio::ScoreTable& scores, const std::string& condition) {
  struct Partial {
    std::int64_t unit_index = 0;
    std::optional<double> sem, sal, brain;
  };
  std::map<std::pair<std::string, std::string>, Partial> layers;
  for (const auto& r : scores.rows()) {
    if (r.condition != condition || r.system.rfind("brain:", 0) == 0) continue;
    std::optional<double> Partial::*slot = nullptr;
    if (r.metric == "rsa_semantics") slot = &Partial::sem;
    else if (r.metric == "rsa_saliency") slot = &Partial::sal;
    else if (r.metric == "brain_score") slot = &Partial::brain;
    else continue;
    auto& p = layers[{r.system, r.unit}];
    p.unit_index = r.unit_index;
    p.*slot = r.value;
  }
  std::vector<LayerSummary> out;
  for (const auto& [key, p] : layers) {
    std::string missing;
    if (!p.sem) missing += " rsa_semantics";
    if (!p.sal) missing += " rsa_saliency";
    if (!p.brain) missing += " brain_score";
    if (!missing.empty())
      fail(Errc::missing_input, "layer " + key.first + "/" + key.second + " lacks" + missing);
    out.push_back({key.first, key.second, p.unit_index, *p.sem, *p.sal, *p.brain});
  }
  std::sort(out.begin(), out.end(), [](const LayerSummary& a, const LayerSummary& b) {
    return std::tie(a.system, a.unit_index, a.unit) < std::tie(b.system, b.unit_index, b.unit);
  });
  return out;
}

namespace {

MetaCorrelation correlate(std::string predictor, MetaSubset subset, const std::vector<double>& x,
                          const std::vector<double>& y, const MetaOptions& options, bool required) {
  MetaCorrelation m{std::move(predictor), subset, std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN(), x.size()};
  if (x.size() < 3) {
    if (required) fail(Errc::missing_input, "meta-analysis needs at least 3 layers, found " + std::to_string(x.size()));
    return m;
  }
  try {
    m.r = pearson_r(x, y);
    m.p_value = permutation_p(x, y, options.n_perm, options.seed, options.workers);
  } catch (const Error& e) {
    if (required || e.code() != Errc::degenerate) throw;
    m.r = m.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace

std::vector<MetaCorrelation> layer_brain_meta(const tensorio::ScoreTable& scores, const MetaOptions& options) {
  const auto layers = collect_layers(scores, options.condition);
  std::vector<double> sem, sal, brain, neg_sal, neg_brain, pos_sal, pos_brain;
  for (const auto& l : layers) {
    sem.push_back(l.semantics_rsa);
    sal.push_back(l.saliency_rsa);
    brain.push_back(l.brain_score);
    if (l.saliency_rsa < 0.0) {
      neg_sal.push_back(l.saliency_rsa);
      neg_brain.push_back(l.brain_score);
    } else {
      pos_sal.push_back(l.saliency_rsa);
      pos_brain.push_back(l.brain_score);
    }
  }
  return {
      correlate("semantics", MetaSubset::All, sem, brain, options, true),
      correlate("saliency", MetaSubset::All, sal, brain, options, true),
      correlate("saliency", MetaSubset::NegativeSaliency, neg_sal, neg_brain, options, false),
      correlate("saliency", MetaSubset::PositiveSaliency, pos_sal, pos_brain, options, false),
  };
}

void write_meta_csv(const std::vector<MetaCorrelation>& rows, const std::filesystem::path& path) {
  std::vector<csv::Row> out;
  for (const auto& m : rows)
    out.push_back({m.predictor, to_string(m.subset), csv::format_double(m.r), csv::format_double(m.p_value),
                   std::to_string(m.n)});
  csv::write_file(path, {"predictor", "subset", "r", "p_value", "n"}, out);
}

Predictions read_predictions(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot read " + path.string());
  Predictions out;
  try {
    auto j = nlohmann::json::parse(f);
    if (!j.is_object()) fail(Errc::format, path.string() + ": expected an object of image_id -> labels");
    for (const auto& [id, labels] : j.items()) out[id] = labels.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
  return out;
}

double top5_accuracy(const Predictions& predictions, const tensorio::DatasetManifest& manifest) {
  if (manifest.entries.empty()) fail(Errc::invalid_argument, "manifest has no images");
  std::size_t hits = 0;
  for (const auto& e : manifest.entries) {
    if (e.labels.empty()) fail(Errc::invalid_argument, "image " + e.image_id + " has an empty label set");
    auto it = predictions.find(e.image_id);
    if (it == predictions.end()) fail(Errc::missing_input, "no predictions for image " + e.image_id);
    if (it->second.size() != 5)
      fail(Errc::invalid_argument, "image " + e.image_id + " has " + std::to_string(it->second.size()) +
                                       " predictions, expected 5");
    std::unordered_set<std::string> labels(e.labels.begin(), e.labels.end());
    if (std::any_of(it->second.begin(), it->second.end(), [&](const std::string& p) { return labels.count(p) > 0; }))
      ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(manifest.entries.size());
}

}  // namespace repalign::analysis
