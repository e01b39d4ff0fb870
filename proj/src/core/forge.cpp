#include "core/forge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/repsim.hpp"
#include "core/saliency.hpp"

namespace repalign::forge {

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

void check_unit_interval(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0 || v > 2.0)
    fail(Errc::invalid_argument, std::string("threshold ") + name + " outside [0, 2]");
}

std::string file_stem_for(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!keep) c = '_';
  }
  return out;
}

bool wants_similar(DistractorType t) { return t == DistractorType::Control || t == DistractorType::Salient; }

}  // namespace

void ThresholdSpec::validate() const {
  check_unit_interval(sal_lo, "sal_lo");
  check_unit_interval(sal_hi, "sal_hi");
  check_unit_interval(sem_lo, "sem_lo");
  check_unit_interval(sem_hi, "sem_hi");
  if (!(sal_lo < sal_hi)) fail(Errc::degenerate, "saliency thresholds collapse (lo >= hi)");
  if (!(sem_lo < sem_hi)) fail(Errc::degenerate, "semantic thresholds collapse (lo >= hi)");
}

const char* to_string(DistractorType t) noexcept {
  switch (t) {
    case DistractorType::Control: return "Control";
    case DistractorType::Salient: return "Salient";
    case DistractorType::Semantic: return "Semantic";
    case DistractorType::SalientSemantic: return "SalientSemantic";
    case DistractorType::Baseline: return "Baseline";
  }
  return "?";
}

const char* to_string(Side s) noexcept {
  switch (s) {
    case Side::Top: return "top";
    case Side::Bottom: return "bottom";
    case Side::Left: return "left";
    case Side::Right: return "right";
  }
  return "?";
}

DistractorType parse_distractor_type(const std::string& s) {
  for (auto t : {DistractorType::Control, DistractorType::Salient, DistractorType::Semantic,
                 DistractorType::SalientSemantic, DistractorType::Baseline})
    if (s == to_string(t)) return t;
  fail(Errc::format, "unknown distractor type '" + s + "'");
}

Side parse_side(const std::string& s) {
  for (auto v : {Side::Top, Side::Bottom, Side::Left, Side::Right})
    if (s == to_string(v)) return v;
  fail(Errc::format, "unknown side '" + s + "'");
}

int Placement::x(int target_w) const {
  switch (side) {
    case Side::Top:
    case Side::Bottom: return offset;
    case Side::Left: return 0;
    case Side::Right: return target_w - dist_w;
  }
  return 0;
}

int Placement::y(int target_h) const {
  switch (side) {
    case Side::Left:
    case Side::Right: return offset;
    case Side::Top: return 0;
    case Side::Bottom: return target_h - dist_h;
  }
  return 0;
}

OverlaySize resize_for_overlay(int target_w, int target_h, int src_w, int src_h) {
  if (target_w <= 0 || target_h <= 0 || src_w <= 0 || src_h <= 0)
    fail(Errc::invalid_argument, "image dimensions must be positive");
  const double area = 0.1 * target_w * target_h;
  const bool wide = src_w >= src_h;
  const double ratio = wide ? static_cast<double>(src_w) / src_h : static_cast<double>(src_h) / src_w;
  const int longer = std::max(1, round_half_up(std::sqrt(area * ratio)));
  const int shorter = std::max(1, round_half_up(longer / ratio));
  return wide ? OverlaySize{longer, shorter} : OverlaySize{shorter, longer};
}

bool fits(int target_w, int target_h, OverlaySize size) {
  return size.width >= 1 && size.height >= 1 && size.width <= target_w && size.height <= target_h;
}

Placement sample_placement(Rng& rng, int target_w, int target_h, OverlaySize size) {
  if (!fits(target_w, target_h, size)) fail(Errc::invalid_argument, "distractor does not fit inside the target");
  Placement p;
  p.side = static_cast<Side>(rng.below(4));
  p.dist_w = size.width;
  p.dist_h = size.height;
  const int span = (p.side == Side::Top || p.side == Side::Bottom) ? target_w - size.width : target_h - size.height;
  p.offset = static_cast<int>(rng.below(static_cast<std::uint64_t>(span) + 1));
  return p;
}

Image compose(const Image& target, const Image& distractor, const Placement& p) {
  if (!fits(target.width, target.height, {p.dist_w, p.dist_h}))
    fail(Errc::invalid_argument, "placement does not fit inside the target");
  const int x0 = p.x(target.width);
  const int y0 = p.y(target.height);
  const int span = (p.side == Side::Top || p.side == Side::Bottom) ? target.width - p.dist_w : target.height - p.dist_h;
  if (p.offset < 0 || p.offset > span) fail(Errc::invalid_argument, "placement offset out of range");
  Image patch = resize_bilinear(distractor, p.dist_w, p.dist_h);
  Image out = target;
  for (int y = 0; y < p.dist_h; ++y)
    std::copy_n(patch.pixel(0, y), 3 * p.dist_w, out.pixel(x0, y0 + y));
  return out;
}

double saliency_disruption(const Image& target, const Image& composed) {
  auto t = saliency::compute_saliency(target);
  return saliency_disruption(t.grid.px, composed);
}

double saliency_disruption(std::span<const double> target_map, const Image& composed) {
  auto c = saliency::compute_saliency(composed);
  return repsim::cosine_distance(target_map, c.grid.px);
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) fail(Errc::invalid_argument, "percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) fail(Errc::invalid_argument, "percentile must lie in [0, 100]");
  std::sort(samples.begin(), samples.end());
  const double pos = p / 100.0 * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

std::optional<DistractorType> classify_candidate(double sal, double sem, const ThresholdSpec& t) {
  const bool sal_low = sal <= t.sal_lo;
  const bool sal_high = sal >= t.sal_hi;
  const bool sem_low = sem <= t.sem_lo;
  const bool sem_high = sem >= t.sem_hi;
  if (sal_low && sem_low) return DistractorType::Control;
  if (sal_high && sem_low) return DistractorType::Salient;
  if (sal_low && sem_high) return DistractorType::Semantic;
  if (sal_high && sem_high) return DistractorType::SalientSemantic;
  return std::nullopt;
}

MemoryImageSource::MemoryImageSource(std::vector<std::string> ids, std::vector<Image> images)
    : ids_(std::move(ids)), images_(std::move(images)) {
  if (ids_.size() != images_.size()) fail(Errc::invalid_argument, "id and image counts differ");
}

namespace {

void check_pool(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings) {
  if (pool.size() < 2) fail(Errc::invalid_argument, "image pool needs at least two images");
  if (embeddings.rows() != pool.size())
    fail(Errc::id_mismatch, "embedding rows (" + std::to_string(embeddings.rows()) + ") differ from pool size (" +
                                std::to_string(pool.size()) + ")");
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (embeddings.items()[i] != pool.id(i))
      fail(Errc::id_mismatch, "embedding row " + std::to_string(i) + " is '" + embeddings.items()[i] +
                                  "' but the pool has '" + pool.id(i) + "'");
}

struct CalibrationDraw {
  std::size_t target;
  std::size_t distractor;
  std::uint64_t side_bits;
  double offset_u;
};

}  // namespace

ThresholdSpec calibrate_thresholds(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings,
                                   const CalibrationOptions& options) {
  check_pool(pool, embeddings);
  if (options.n_saliency_pairs < 2) fail(Errc::invalid_argument, "need at least two saliency samples");
  if (options.n_caption_items < 2) fail(Errc::invalid_argument, "need at least two caption items");
  if (embeddings.rows() < options.n_caption_items)
    fail(Errc::invalid_argument, "pool has " + std::to_string(embeddings.rows()) + " captioned images, fewer than " +
                                     std::to_string(options.n_caption_items) + " requested");

  const std::size_t n = pool.size();
  Rng rng{options.seed, 0x53414cULL};
  std::vector<double> disruption;
  disruption.reserve(options.n_saliency_pairs);
  const std::size_t max_draws = options.n_saliency_pairs * 20;
  std::size_t drawn = 0;
  while (disruption.size() < options.n_saliency_pairs) {
    const std::size_t want = options.n_saliency_pairs - disruption.size();
    if (drawn + want > max_draws) fail(Errc::exhausted, "too few distractors fit their targets during calibration");
    std::vector<CalibrationDraw> draws(want);
    for (auto& d : draws) {
      d.target = rng.below(n);
      d.distractor = rng.below(n - 1);
      if (d.distractor >= d.target) ++d.distractor;
      d.side_bits = rng.below(4);
      d.offset_u = rng.unit();
    }
    drawn += want;

    std::map<std::size_t, std::vector<std::size_t>> by_target;
    for (std::size_t k = 0; k < draws.size(); ++k) by_target[draws[k].target].push_back(k);
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> groups(by_target.begin(), by_target.end());

    std::vector<double> values(draws.size(), std::nan(""));
    parallel_for(groups.size(), options.workers, [&](std::size_t g) {
      const auto& [t, members] = groups[g];
      Image target = pool.load(t);
      auto tmap = saliency::compute_saliency(target);
      for (std::size_t k : members) {
        const auto& d = draws[k];
        Image dist = pool.load(d.distractor);
        OverlaySize size = resize_for_overlay(target.width, target.height, dist.width, dist.height);
        if (!fits(target.width, target.height, size)) continue;
        Placement p;
        p.side = static_cast<Side>(d.side_bits);
        p.dist_w = size.width;
        p.dist_h = size.height;
        const int span =
            (p.side == Side::Top || p.side == Side::Bottom) ? target.width - size.width : target.height - size.height;
        p.offset = std::min(span, static_cast<int>(d.offset_u * (span + 1)));
        try {
          values[k] = saliency_disruption(tmap.grid.px, compose(target, dist, p));
        } catch (const Error& e) {
          if (e.code() != Errc::zero_norm) throw;
        }
      }
    });
    for (double v : values)
      if (!std::isnan(v)) disruption.push_back(v);
  }

  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  if (options.n_caption_items < n) {
    Rng pick{options.seed, 0x53454dULL};
    for (std::size_t i = 0; i < options.n_caption_items; ++i) std::swap(rows[i], rows[i + pick.below(n - i)]);
    rows.resize(options.n_caption_items);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<std::string> ids;
  std::vector<double> data;
  ids.reserve(rows.size());
  data.reserve(rows.size() * embeddings.cols());
  for (std::size_t r : rows) {
    ids.push_back(embeddings.items()[r]);
    auto v = embeddings.row(r);
    data.insert(data.end(), v.begin(), v.end());
  }
  tensorio::FeatureMatrix sample(std::move(ids), embeddings.cols(), std::move(data), "captions");
  auto semantic = repsim::upper_triangle(repsim::build_rdm(sample, options.workers));

  ThresholdSpec spec;
  spec.sal_lo = percentile(disruption, 5.0);
  spec.sal_hi = percentile(disruption, 95.0);
  spec.sem_lo = percentile(semantic, 1.0);
  spec.sem_hi = percentile(std::move(semantic), 99.0);
  spec.n_saliency_pairs = options.n_saliency_pairs;
  spec.n_caption_items = rows.size();
  spec.seed = options.seed;
  spec.validate();
  return spec;
}

namespace {

struct TargetOutcome {
  std::vector<DistractorRecord> records;
  std::vector<Image> images;
  std::optional<ExhaustedTarget> exhausted;
};

TargetOutcome forge_target(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings,
                           const ThresholdSpec& thresholds, const BuildOptions& options, std::size_t t) {
  TargetOutcome out;
  Rng rng{options.seed, static_cast<std::uint64_t>(t)};
  const std::string& tid = pool.id(t);
  Image target = pool.load(t);
  saliency::validate_image(target);
  auto tmap = saliency::compute_saliency(target, tid);

  std::vector<double> sem(pool.size(), 0.0);
  for (std::size_t j = 0; j < pool.size(); ++j)
    if (j != t) sem[j] = repsim::cosine_distance(embeddings.row(t), embeddings.row(j));

  const std::string stem = file_stem_for(tid);
  DistractorRecord base;
  base.target_id = tid;
  base.dtype = DistractorType::Baseline;
  base.composed_path = "images/" + stem + "_Baseline.png";
  out.records.push_back(base);
  out.images.push_back(target);

  for (DistractorType cls : kDistractorClasses) {
    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (j == t) continue;
      bool ok = wants_similar(cls) ? sem[j] <= thresholds.sem_lo : sem[j] >= thresholds.sem_hi;
      if (ok) eligible.push_back(j);
    }
    std::size_t attempts = 0;
    bool found = false;
    while (!eligible.empty() && attempts < options.retry_budget) {
      ++attempts;
      std::size_t j = eligible[rng.below(eligible.size())];
      Image dist = pool.load(j);
      OverlaySize size = resize_for_overlay(target.width, target.height, dist.width, dist.height);
      if (!fits(target.width, target.height, size)) continue;
      Placement p = sample_placement(rng, target.width, target.height, size);
      Image composed = compose(target, dist, p);
      double disruption;
      try {
        disruption = saliency_disruption(tmap.grid.px, composed);
      } catch (const Error& e) {
        if (e.code() != Errc::zero_norm) throw;
        continue;
      }
      if (classify_candidate(disruption, sem[j], thresholds) != cls) continue;
      DistractorRecord rec;
      rec.target_id = tid;
      rec.distractor_id = pool.id(j);
      rec.dtype = cls;
      rec.placement = p;
      rec.sal_disruption = disruption;
      rec.sem_distance = sem[j];
      rec.composed_path = "images/" + stem + "_" + to_string(cls) + ".png";
      rec.attempts = attempts;
      out.records.push_back(std::move(rec));
      out.images.push_back(std::move(composed));
      found = true;
      break;
    }
    if (!found) {
      out.exhausted = ExhaustedTarget{tid, cls, attempts};
      out.records.clear();
      out.images.clear();
      return out;
    }
  }
  return out;
}

}  // namespace

DatasetResult build_dataset(const ImageSource& pool, const tensorio::FeatureMatrix& embeddings,
                            const ThresholdSpec& thresholds, const BuildOptions& options) {
  check_pool(pool, embeddings);
  thresholds.validate();
  if (options.n_targets == 0) fail(Errc::invalid_argument, "n_targets must be positive");
  if (options.n_targets > pool.size())
    fail(Errc::invalid_argument, "n_targets (" + std::to_string(options.n_targets) + ") exceeds the pool size (" +
                                     std::to_string(pool.size()) + ")");
  if (options.retry_budget == 0) fail(Errc::invalid_argument, "retry budget must be positive");
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir / "images");

  std::vector<TargetOutcome> outcomes(options.n_targets);
  parallel_for(options.n_targets, options.workers, [&](std::size_t t) {
    outcomes[t] = forge_target(pool, embeddings, thresholds, options, t);
    if (options.out_dir) {
      for (std::size_t k = 0; k < outcomes[t].records.size(); ++k)
        write_png(outcomes[t].images[k], *options.out_dir / outcomes[t].records[k].composed_path);
      outcomes[t].images.clear();
    }
  });

  DatasetResult result;
  for (auto& o : outcomes) {
    if (o.exhausted) {
      if (options.log)
        options.log("target " + o.exhausted->target_id + " exhausted its budget for " + to_string(o.exhausted->dtype) +
                    " after " + std::to_string(o.exhausted->attempts) + " attempts");
      result.exhausted.push_back(*o.exhausted);
      continue;
    }
    for (auto& r : o.records) result.records.push_back(std::move(r));
    for (auto& im : o.images) result.images.push_back(std::move(im));
  }
  if (result.exhausted.size() * 10 > options.n_targets)
    fail(Errc::exhausted, std::to_string(result.exhausted.size()) + " of " + std::to_string(options.n_targets) +
                              " targets exhausted their retry budget");
  return result;
}

const std::vector<std::string> kDatasetManifestHeader = {
    "target_id", "distractor_id", "dtype", "side", "offset", "dist_w", "dist_h", "sal_disruption",
    "sem_distance", "composed_path", "attempts"};

void write_dataset_manifest(const std::vector<DistractorRecord>& records, const std::filesystem::path& path) {
  std::vector<csv::Row> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    csv::Row row{r.target_id, r.distractor_id, to_string(r.dtype)};
    if (r.placement) {
      row.push_back(to_string(r.placement->side));
      row.push_back(std::to_string(r.placement->offset));
      row.push_back(std::to_string(r.placement->dist_w));
      row.push_back(std::to_string(r.placement->dist_h));
    } else {
      row.insert(row.end(), {"", "", "", ""});
    }
    row.push_back(csv::format_double(r.sal_disruption));
    row.push_back(csv::format_double(r.sem_distance));
    row.push_back(r.composed_path);
    row.push_back(std::to_string(r.attempts));
    rows.push_back(std::move(row));
  }
  csv::write_file(path, kDatasetManifestHeader, rows);
}

std::vector<DistractorRecord> read_dataset_manifest(const std::filesystem::path& path) {
  auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != kDatasetManifestHeader)
    fail(Errc::format, path.string() + ": unexpected dataset manifest header");
  std::vector<DistractorRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != kDatasetManifestHeader.size())
      fail(Errc::format, path.string() + ": row " + std::to_string(i + 1) + " has the wrong number of fields");
    DistractorRecord r;
    r.target_id = row[0];
    r.distractor_id = row[1];
    r.dtype = parse_distractor_type(row[2]);
    if (!row[3].empty()) {
      Placement p;
      p.side = parse_side(row[3]);
      p.offset = static_cast<int>(csv::parse_int(row[4], "offset"));
      p.dist_w = static_cast<int>(csv::parse_int(row[5], "dist_w"));
      p.dist_h = static_cast<int>(csv::parse_int(row[6], "dist_h"));
      r.placement = p;
    }
    r.sal_disruption = csv::parse_double(row[7], "sal_disruption");
    r.sem_distance = csv::parse_double(row[8], "sem_distance");
    r.composed_path = row[9];
    r.attempts = static_cast<std::size_t>(csv::parse_int(row[10], "attempts"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_thresholds(const ThresholdSpec& t, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["sal_lo"] = t.sal_lo;
  j["sal_hi"] = t.sal_hi;
  j["sem_lo"] = t.sem_lo;
  j["sem_hi"] = t.sem_hi;
  j["n_saliency_pairs"] = t.n_saliency_pairs;
  j["n_caption_items"] = t.n_caption_items;
  j["seed"] = t.seed;
  std::ofstream f(path);
  if (!f) fail(Errc::io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

ThresholdSpec read_thresholds(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot read " + path.string());
  ThresholdSpec t;
  try {
    auto j = nlohmann::json::parse(f);
    t.sal_lo = j.at("sal_lo").get<double>();
    t.sal_hi = j.at("sal_hi").get<double>();
    t.sem_lo = j.at("sem_lo").get<double>();
    t.sem_hi = j.at("sem_hi").get<double>();
    t.n_saliency_pairs = j.value("n_saliency_pairs", std::size_t{0});
    t.n_caption_items = j.value("n_caption_items", std::size_t{0});
    t.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

}  // namespace repalign::forge
