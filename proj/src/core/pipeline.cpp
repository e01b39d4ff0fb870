#include "core/pipeline.hpp"

#include <glob.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <toml.hpp>

#include "core/error.hpp"
#include "core/forge.hpp"
#include "core/report.hpp"
#include "core/saliency.hpp"

#ifndef REPALIGN_VERSION
#define REPALIGN_VERSION "0.0.0"
#endif

namespace repalign::pipeline {

using repsim::RsaKind;
using repsim::RsaTarget;
using tensorio::FeatureMatrix;
using tensorio::ScoreRow;
using tensorio::ScoreTable;

namespace {

constexpr RsaTarget kFeatureTargets[] = {RsaTarget::Saliency, RsaTarget::Semantics};

std::size_t slot(RsaTarget t) {
  if (t == RsaTarget::Brain) fail(Errc::invalid_argument, "brain RDMs are not held by the target cache");
  return t == RsaTarget::Saliency ? 0 : 1;
}

// --- TOML helpers ---------------------------------------------------------

void check_keys(const toml::table& t, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [k, v] : t) {
    if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
      fail(Errc::config, "unknown key '" + std::string(k.str()) + "' in " + where);
  }
}

std::optional<std::string> opt_string(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_string()) fail(Errc::config, where + "." + std::string(key) + " must be a string");
  return n->value<std::string>();
}

std::string req_string(const toml::table& t, std::string_view key, const std::string& where) {
  auto v = opt_string(t, key, where);
  if (!v || v->empty()) fail(Errc::config, where + "." + std::string(key) + " is required");
  return *v;
}

std::optional<std::int64_t> opt_int(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_integer()) fail(Errc::config, where + "." + std::string(key) + " must be an integer");
  return n->value<std::int64_t>();
}

std::size_t opt_count(const toml::table& t, std::string_view key, const std::string& where, std::size_t fallback,
                      std::size_t minimum = 1) {
  auto v = opt_int(t, key, where);
  if (!v) return fallback;
  if (*v < static_cast<std::int64_t>(minimum))
    fail(Errc::config, where + "." + std::string(key) + " must be at least " + std::to_string(minimum));
  return static_cast<std::size_t>(*v);
}

std::vector<std::string> string_array(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) return {};
  const toml::array* arr = n->as_array();
  if (!arr) fail(Errc::config, where + "." + std::string(key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *arr) {
    if (!e.is_string()) fail(Errc::config, where + "." + std::string(key) + " must be an array of strings");
    out.push_back(*e.value<std::string>());
  }
  return out;
}

const toml::table* sub_table(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) fail(Errc::config, "[" + std::string(key) + "] must be a table");
  return n->as_table();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

std::string resolve_pattern(const fs::path& base, const std::string& p) {
  if (!p.empty() && p.front() == '/') return p;
  return (base / p).string();
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::string layer_label(const LayerFile& l) { return l.system + "/" + l.unit; }

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) fail(Errc::config, "config file " + path.string() + " does not exist");
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    fail(Errc::config, msg.str());
  }
  const fs::path base = fs::absolute(path).parent_path();
  check_keys(root,
             {"seed", "output_dir", "saliency_variant", "targets", "conditions", "inputs", "networks", "brain", "meta",
              "report", "forge"},
             "run config");

  RunConfig c;
  c.config_path = fs::absolute(path);
  auto seed = opt_int(root, "seed", "run");
  if (!seed) fail(Errc::config, "seed is required");
  if (*seed < 0) fail(Errc::config, "seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(*seed);
  c.output_dir = resolve(base, req_string(root, "output_dir", "run"));
  c.saliency_variant = opt_string(root, "saliency_variant", "run").value_or(saliency::kVariantTag);
  if (c.saliency_variant != saliency::kVariantTag)
    fail(Errc::config, "unsupported saliency_variant '" + c.saliency_variant + "' (available: " +
                           saliency::kVariantTag + ")");

  auto targets = string_array(root, "targets", "run");
  if (root.get("targets")) {
    if (targets.empty()) fail(Errc::config, "targets must not be empty");
    c.want_saliency = c.want_semantics = c.want_brain = false;
    for (const auto& t : targets) {
      if (t == "saliency") c.want_saliency = true;
      else if (t == "semantics") c.want_semantics = true;
      else if (t == "brain") c.want_brain = true;
      else fail(Errc::config, "unknown target '" + t + "' (expected saliency, semantics or brain)");
    }
  }

  c.conditions = string_array(root, "conditions", "run");
  if (!root.get("conditions"))
    for (auto d : forge::kDistractorClasses) c.conditions.push_back(forge::to_string(d));
  std::set<std::string> seen_conditions;
  for (const auto& d : c.conditions) {
    try {
      if (forge::parse_distractor_type(d) == forge::DistractorType::Baseline) throw Error(Errc::format, "");
    } catch (const Error&) {
      fail(Errc::config, "unknown condition '" + d + "' (expected Control, Salient, Semantic or SalientSemantic)");
    }
    if (!seen_conditions.insert(d).second) fail(Errc::config, "condition '" + d + "' listed twice");
  }

  if (const auto* in = sub_table(root, "inputs")) {
    check_keys(*in, {"saliency", "semantics"}, "[inputs]");
    if (auto s = opt_string(*in, "saliency", "inputs")) c.saliency_features = resolve(base, *s);
    if (auto s = opt_string(*in, "semantics", "inputs")) c.semantics_features = resolve(base, *s);
  }
  if (c.want_saliency && !c.saliency_features) fail(Errc::config, "target saliency needs inputs.saliency");
  if (c.want_semantics && !c.semantics_features) fail(Errc::config, "target semantics needs inputs.semantics");

  if (const toml::node* n = root.get("networks")) {
    const toml::array* arr = n->as_array();
    if (!arr) fail(Errc::config, "networks must be an array of tables ([[networks]])");
    std::set<std::string> names;
    for (const auto& e : *arr) {
      const toml::table* t = e.as_table();
      if (!t) fail(Errc::config, "networks must be an array of tables ([[networks]])");
      check_keys(*t, {"name", "layers", "conditions", "brain_layers"}, "[[networks]]");
      NetworkSpec net;
      net.name = req_string(*t, "name", "networks");
      if (net.name.rfind("brain:", 0) == 0) fail(Errc::config, "network names may not start with 'brain:'");
      if (!names.insert(net.name).second) fail(Errc::config, "duplicate network name '" + net.name + "'");
      net.layers = resolve_pattern(base, req_string(*t, "layers", "networks"));
      if (auto s = opt_string(*t, "conditions", "networks")) {
        if (s->find("{condition}") == std::string::npos)
          fail(Errc::config, "networks.conditions for '" + net.name + "' must contain {condition}");
        net.conditions = resolve_pattern(base, *s);
      }
      if (auto s = opt_string(*t, "brain_layers", "networks")) net.brain_layers = resolve_pattern(base, *s);
      c.networks.push_back(std::move(net));
    }
  }
  if (c.networks.empty()) fail(Errc::config, "at least one [[networks]] entry is required");

  if (const auto* b = sub_table(root, "brain")) {
    check_keys(*b, {"score_roi", "saliency", "semantics", "responses"}, "[brain]");
    c.score_roi = opt_string(*b, "score_roi", "brain").value_or("OTC");
    if (auto s = opt_string(*b, "saliency", "brain")) c.brain_saliency = resolve(base, *s);
    if (auto s = opt_string(*b, "semantics", "brain")) c.brain_semantics = resolve(base, *s);
    if (const toml::node* n = b->get("responses")) {
      const toml::array* arr = n->as_array();
      if (!arr) fail(Errc::config, "brain.responses must be an array of tables");
      for (const auto& e : *arr) {
        const toml::table* t = e.as_table();
        if (!t) fail(Errc::config, "brain.responses must be an array of tables");
        check_keys(*t, {"subject", "roi", "path"}, "[[brain.responses]]");
        c.brain_responses.push_back({req_string(*t, "subject", "brain.responses"),
                                     req_string(*t, "roi", "brain.responses"),
                                     resolve(base, req_string(*t, "path", "brain.responses"))});
      }
    }
  }
  if (c.want_brain) {
    if (c.brain_responses.empty()) fail(Errc::config, "target brain needs [[brain.responses]] entries");
    bool any = std::any_of(c.brain_responses.begin(), c.brain_responses.end(),
                           [&](const BrainResponseSpec& r) { return r.roi == c.score_roi; });
    if (!any) fail(Errc::config, "no brain response matches score_roi '" + c.score_roi + "'");
  }

  if (const auto* m = sub_table(root, "meta")) {
    check_keys(*m, {"n_perm"}, "[meta]");
    c.n_perm = opt_count(*m, "n_perm", "meta", c.n_perm, 100);
  }
  if (const auto* r = sub_table(root, "report")) {
    check_keys(*r, {"bins"}, "[report]");
    c.report_bins = opt_count(*r, "bins", "report", c.report_bins);
  }
  if (const auto* f = sub_table(root, "forge")) {
    check_keys(*f,
               {"manifest", "embeddings", "n_targets", "retry_budget", "n_saliency_pairs", "n_caption_items",
                "thresholds"},
               "[forge]");
    ForgeSpec spec;
    spec.manifest = resolve(base, req_string(*f, "manifest", "forge"));
    spec.embeddings = resolve(base, req_string(*f, "embeddings", "forge"));
    spec.n_targets = opt_count(*f, "n_targets", "forge", 0);
    if (spec.n_targets == 0) fail(Errc::config, "forge.n_targets is required");
    spec.retry_budget = opt_count(*f, "retry_budget", "forge", spec.retry_budget);
    spec.n_saliency_pairs = opt_count(*f, "n_saliency_pairs", "forge", spec.n_saliency_pairs, 2);
    spec.n_caption_items = opt_count(*f, "n_caption_items", "forge", spec.n_caption_items, 2);
    if (auto s = opt_string(*f, "thresholds", "forge")) spec.thresholds = resolve(base, *s);
    c.forge = spec;
  }
  return c;
}

void validate(const RunConfig& c) {
  auto must_exist = [](const std::optional<fs::path>& p, const char* what) {
    if (p && !fs::exists(*p)) fail(Errc::config, std::string(what) + " " + p->string() + " does not exist");
  };
  if (c.want_saliency) must_exist(c.saliency_features, "saliency features");
  if (c.want_semantics) must_exist(c.semantics_features, "semantics features");
  if (c.want_brain) {
    for (const auto& r : c.brain_responses) must_exist(r.path, "brain responses");
    must_exist(c.brain_saliency, "brain saliency features");
    must_exist(c.brain_semantics, "brain semantics features");
  }
  if (c.forge) {
    must_exist(c.forge->manifest, "forge manifest");
    must_exist(c.forge->embeddings, "forge embeddings");
    must_exist(c.forge->thresholds, "forge thresholds");
  }
  for (const auto& n : c.networks) {
    if (expand_glob(n.layers).empty())
      fail(Errc::config, "layer glob for network '" + n.name + "' matches no files: " + n.layers);
    if (c.want_brain && n.brain_layers && expand_glob(*n.brain_layers).empty())
      fail(Errc::config, "brain_layers glob for network '" + n.name + "' matches no files: " + *n.brain_layers);
  }
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> found;
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) found.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) fail(Errc::io, "glob failed for " + pattern);
  found.erase(std::remove_if(found.begin(), found.end(),
                             [](const std::string& p) {
                               auto n = fs::path(p).filename().string();
                               return n.size() >= 8 && n.compare(n.size() - 8, 8, ".ids.txt") == 0;
                             }),
              found.end());
  std::sort(found.begin(), found.end(),
            [](const std::string& a, const std::string& b) { return ::strverscmp(a.c_str(), b.c_str()) < 0; });
  return {found.begin(), found.end()};
}

std::vector<LayerFile> resolve_layers(const NetworkSpec& network) {
  std::vector<LayerFile> out;
  std::set<std::string> units;
  for (const auto& p : expand_glob(network.layers)) {
    LayerFile l{network.name, p.stem().string(), static_cast<std::int64_t>(out.size()), p};
    if (!units.insert(l.unit).second)
      fail(Errc::config, "network '" + network.name + "' has two layer files named " + l.unit);
    out.push_back(std::move(l));
  }
  return out;
}

// --- target cache ---------------------------------------------------------

TargetRdmCache::TargetRdmCache(std::optional<FeatureMatrix> saliency, std::optional<FeatureMatrix> semantics,
                               int workers)
    : workers_(workers) {
  if (saliency) items_ = saliency->items();
  if (semantics) {
    if (saliency && semantics->items() != items_)
      fail(Errc::id_mismatch, "saliency and semantics features do not share the same ordered item list");
    if (!saliency) items_ = semantics->items();
  }
  if (!saliency && !semantics) fail(Errc::invalid_argument, "target cache needs saliency or semantics features");
  features_[0] = std::move(saliency);
  features_[1] = std::move(semantics);
}

bool TargetRdmCache::has(RsaTarget target) const {
  return target != RsaTarget::Brain && features_[slot(target)].has_value();
}

const repsim::Rdm& TargetRdmCache::get(RsaTarget target) {
  const std::size_t k = slot(target);
  if (!rdms_[k]) {
    if (!features_[k]) fail(Errc::missing_input, std::string("no ") + repsim::to_string(target) + " features loaded");
    rdms_[k] = repsim::build_rdm(*features_[k], workers_);
    ++builds_;
  }
  return *rdms_[k];
}

const FeatureMatrix* TargetRdmCache::features(RsaTarget target) const {
  if (target == RsaTarget::Brain) return nullptr;
  const auto& f = features_[slot(target)];
  return f ? &*f : nullptr;
}

TargetRdmCache make_target_cache(const RunConfig& config, int workers) {
  std::optional<FeatureMatrix> sal, sem;
  if (config.want_saliency) sal = tensorio::load_feature_matrix(*config.saliency_features);
  if (config.want_semantics) {
    std::optional<std::vector<std::string>> order;
    if (sal) order = sal->items();
    sem = tensorio::load_feature_matrix(*config.semantics_features, order);
  }
  return TargetRdmCache(std::move(sal), std::move(sem), workers);
}

// --- sweeps ---------------------------------------------------------------

void append_baseline_rows(ScoreTable& table, const LayerFile& layer, const repsim::Rdm& layer_rdm,
                          TargetRdmCache& targets, std::uint64_t seed) {
  for (RsaTarget t : kFeatureTargets) {
    if (!targets.has(t)) continue;
    auto score = repsim::rsa(layer_rdm, targets.get(t), RsaKind::Base, t);
    table.add(ScoreRow{layer.system, layer.unit, layer.unit_index, "Baseline", std::string("rsa_") + repsim::to_string(t),
                       score.rho, static_cast<std::int64_t>(layer_rdm.size()), static_cast<std::int64_t>(seed)});
  }
}

namespace {

std::optional<fs::path> condition_file(const NetworkSpec& net, const std::string& condition, const std::string& unit) {
  for (const auto& p : expand_glob(replace_all(*net.conditions, "{condition}", condition)))
    if (p.stem().string() == unit) return p;
  return std::nullopt;
}

void delta_rows(ScoreTable& table, const RunConfig& config, const NetworkSpec& net, const LayerFile& layer,
                const repsim::Rdm& layer_rdm, TargetRdmCache& targets, int workers, std::vector<std::string>& skipped) {
  std::vector<std::pair<RsaTarget, repsim::RsaScore>> base;
  for (RsaTarget t : kFeatureTargets)
    if (targets.has(t)) base.emplace_back(t, repsim::rsa(layer_rdm, targets.get(t), RsaKind::Base, t));

  for (const auto& cond : config.conditions) {
    auto file = condition_file(net, cond, layer.unit);
    if (!file) {
      skipped.push_back(layer_label(layer) + " [" + cond + "]: missing condition matrix");
      continue;
    }
    ScoreTable local;
    try {
      auto features = tensorio::load_feature_matrix(*file, targets.items());
      auto dist_rdm = repsim::build_rdm(features, workers);
      for (const auto& [t, b] : base) {
        auto d = repsim::rsa(dist_rdm, targets.get(t), RsaKind::Dist, t, cond);
        const std::string name = repsim::to_string(t);
        const auto n = static_cast<std::int64_t>(layer_rdm.size());
        const auto s = static_cast<std::int64_t>(config.seed);
        local.add({layer.system, layer.unit, layer.unit_index, cond, "base_rsa_" + name, b.rho, n, s});
        local.add({layer.system, layer.unit, layer.unit_index, cond, "dist_rsa_" + name, d.rho, n, s});
        local.add({layer.system, layer.unit, layer.unit_index, cond, "delta_rsa_" + name, repsim::delta_rsa(b, d), n, s});
      }
    } catch (const Error& e) {
      skipped.push_back(layer_label(layer) + " [" + cond + "]: " + e.what());
      continue;
    }
    table.append(local);
  }
}

StageResult sweep(const RunConfig& config, TargetRdmCache& targets, int workers, bool baseline, bool delta) {
  StageResult out;
  for (const auto& net : config.networks) {
    const bool net_delta = delta && net.conditions.has_value();
    if (!baseline && !net_delta) continue;
    for (const auto& layer : resolve_layers(net)) {
      ScoreTable local;
      try {
        auto features = tensorio::load_feature_matrix(layer.path, targets.items());
        auto rdm = repsim::build_rdm(features, workers);
        if (baseline) append_baseline_rows(local, layer, rdm, targets, config.seed);
        if (net_delta) delta_rows(local, config, net, layer, rdm, targets, workers, out.skipped);
      } catch (const Error& e) {
        out.skipped.push_back(layer_label(layer) + ": " + e.what());
        continue;
      }
      out.scores.append(local);
    }
  }
  return out;
}

struct BrainSet {
  std::vector<std::string> items;
  std::vector<repsim::Rdm> rdms;  // parallel to config.brain_responses
};

BrainSet load_brain(const RunConfig& config, int workers) {
  BrainSet set;
  for (const auto& spec : config.brain_responses) {
    std::optional<std::vector<std::string>> order;
    if (!set.items.empty()) order = set.items;
    auto m = tensorio::load_feature_matrix(spec.path, order);
    if (set.items.empty()) set.items = m.items();
    set.rdms.push_back(repsim::build_rdm(m, workers));
  }
  return set;
}

std::optional<repsim::Rdm> brain_target_rdm(const std::optional<fs::path>& explicit_path, const FeatureMatrix* fallback,
                                            const std::vector<std::string>& items, int workers) {
  if (explicit_path) return repsim::build_rdm(tensorio::load_feature_matrix(*explicit_path, items), workers);
  if (fallback) return repsim::build_rdm(analysis::select_rows(*fallback, items), workers);
  return std::nullopt;
}

}  // namespace

StageResult run_baseline(const RunConfig& config, TargetRdmCache& targets, int workers) {
  return sweep(config, targets, workers, true, false);
}

StageResult run_delta(const RunConfig& config, TargetRdmCache& targets, int workers) {
  return sweep(config, targets, workers, false, true);
}

StageResult run_brain(const RunConfig& config, TargetRdmCache& targets, int workers) {
  StageResult out;
  const BrainSet brain = load_brain(config, workers);
  const auto n_brain = static_cast<std::int64_t>(brain.items.size());
  const auto seed = static_cast<std::int64_t>(config.seed);

  std::vector<std::string> rois;
  for (const auto& r : config.brain_responses)
    if (std::find(rois.begin(), rois.end(), r.roi) == rois.end()) rois.push_back(r.roi);
  auto roi_index = [&](const std::string& roi) {
    return static_cast<std::int64_t>(std::find(rois.begin(), rois.end(), roi) - rois.begin());
  };

  for (RsaTarget t : kFeatureTargets) {
    if (!targets.has(t)) continue;
    const auto& explicit_path = t == RsaTarget::Saliency ? config.brain_saliency : config.brain_semantics;
    auto target_rdm = brain_target_rdm(explicit_path, targets.features(t), brain.items, workers);
    const std::string metric = std::string("rsa_") + repsim::to_string(t);
    std::map<std::string, std::pair<double, int>> roi_sum;
    for (std::size_t i = 0; i < brain.rdms.size(); ++i) {
      const auto& spec = config.brain_responses[i];
      double rho = repsim::rsa(brain.rdms[i], *target_rdm, RsaKind::Base, RsaTarget::Brain).rho;
      out.scores.add({"brain:" + spec.subject, spec.roi, roi_index(spec.roi), "Baseline", metric, rho, n_brain, seed});
      roi_sum[spec.roi].first += rho;
      roi_sum[spec.roi].second += 1;
    }
    for (const auto& roi : rois)
      out.scores.add({"brain:mean", roi, roi_index(roi), "Baseline", metric,
                      roi_sum[roi].first / roi_sum[roi].second, n_brain, seed});
  }

  std::vector<std::size_t> scorers;
  for (std::size_t i = 0; i < config.brain_responses.size(); ++i)
    if (config.brain_responses[i].roi == config.score_roi) scorers.push_back(i);

  for (const auto& net : config.networks) {
    std::map<std::string, fs::path> brain_files;
    if (net.brain_layers)
      for (const auto& p : expand_glob(*net.brain_layers)) brain_files[p.stem().string()] = p;
    for (const auto& layer : resolve_layers(net)) {
      ScoreTable local;
      try {
        std::optional<FeatureMatrix> features;
        if (net.brain_layers) {
          auto it = brain_files.find(layer.unit);
          if (it == brain_files.end()) fail(Errc::missing_input, "no brain-set matrix for this layer");
          features = tensorio::load_feature_matrix(it->second, brain.items);
        } else {
          features = analysis::select_rows(tensorio::load_feature_matrix(layer.path), brain.items);
        }
        auto rdm = repsim::build_rdm(*features, workers);
        double sum = 0.0;
        for (std::size_t i : scorers) {
          const auto& spec = config.brain_responses[i];
          double rho = repsim::rsa(rdm, brain.rdms[i], RsaKind::Base, RsaTarget::Brain).rho;
          local.add({layer.system, layer.unit, layer.unit_index, "subject:" + spec.subject, "brain_score", rho, n_brain,
                     seed});
          sum += rho;
        }
        local.add({layer.system, layer.unit, layer.unit_index, "Baseline", "brain_score",
                   sum / static_cast<double>(scorers.size()), n_brain, seed});
      } catch (const Error& e) {
        out.skipped.push_back(layer_label(layer) + " [brain]: " + e.what());
        continue;
      }
      out.scores.append(local);
    }
  }
  return out;
}

namespace {

void write_lock(const RunConfig& c, const RunResult& r, const fs::path& path) {
  nlohmann::ordered_json j;
  j["version"] = REPALIGN_VERSION;
  j["config"] = c.config_path.string();
  j["seed"] = c.seed;
  j["saliency_variant"] = c.saliency_variant;
  j["output_dir"] = c.output_dir.string();
  std::vector<std::string> targets;
  if (c.want_saliency) targets.push_back("saliency");
  if (c.want_semantics) targets.push_back("semantics");
  if (c.want_brain) targets.push_back("brain");
  j["targets"] = targets;
  j["inputs"]["saliency"] = c.saliency_features ? c.saliency_features->string() : "";
  j["inputs"]["semantics"] = c.semantics_features ? c.semantics_features->string() : "";
  j["conditions"] = c.conditions;
  for (const auto& n : c.networks) {
    nlohmann::ordered_json net;
    net["name"] = n.name;
    net["layers_glob"] = n.layers;
    std::vector<std::string> files;
    for (const auto& l : resolve_layers(n)) files.push_back(l.path.string());
    net["layers"] = files;
    if (n.conditions) net["conditions_glob"] = *n.conditions;
    if (n.brain_layers) net["brain_layers_glob"] = *n.brain_layers;
    j["networks"].push_back(net);
  }
  if (c.want_brain) {
    j["brain"]["score_roi"] = c.score_roi;
    for (const auto& b : c.brain_responses)
      j["brain"]["responses"].push_back({{"subject", b.subject}, {"roi", b.roi}, {"path", b.path.string()}});
  }
  j["meta"]["n_perm"] = c.n_perm;
  j["report"]["bins"] = c.report_bins;
  if (c.forge) {
    j["forge"]["manifest"] = c.forge->manifest.string();
    j["forge"]["embeddings"] = c.forge->embeddings.string();
    j["forge"]["n_targets"] = c.forge->n_targets;
    j["forge"]["retry_budget"] = c.forge->retry_budget;
  }
  j["skipped"] = r.skipped;
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void run_forge(const RunConfig& config, int workers, RunResult& result,
               const std::function<void(const std::string&)>& log) {
  const auto& spec = *config.forge;
  auto manifest = tensorio::load_manifest(spec.manifest);
  auto embeddings = tensorio::load_feature_matrix(spec.embeddings, manifest.ids());
  forge::ManifestImageSource pool(std::move(manifest));
  forge::ThresholdSpec thresholds;
  if (spec.thresholds) {
    thresholds = forge::read_thresholds(*spec.thresholds);
  } else {
    forge::CalibrationOptions co;
    co.n_saliency_pairs = spec.n_saliency_pairs;
    co.n_caption_items = std::min(spec.n_caption_items, pool.size());
    co.seed = config.seed;
    co.workers = workers;
    thresholds = forge::calibrate_thresholds(pool, embeddings, co);
  }
  const fs::path dir = config.output_dir / "forge";
  forge::BuildOptions bo;
  bo.n_targets = spec.n_targets;
  bo.retry_budget = spec.retry_budget;
  bo.seed = config.seed;
  bo.workers = workers;
  bo.out_dir = dir;
  bo.log = log;
  auto ds = forge::build_dataset(pool, embeddings, thresholds, bo);
  forge::write_thresholds(thresholds, dir / "thresholds.json");
  forge::write_dataset_manifest(ds.records, dir / "dataset_manifest.csv");
  result.outputs.push_back(dir / "thresholds.json");
  result.outputs.push_back(dir / "dataset_manifest.csv");
}

}  // namespace

RunResult run(const RunConfig& config, int workers, const std::function<void(const std::string&)>& log) {
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  validate(config);
  fs::create_directories(config.output_dir);
  RunResult result;

  if (config.forge) run_forge(config, workers, result, note);

  TargetRdmCache targets = make_target_cache(config, workers);
  auto layers = sweep(config, targets, workers, true, true);
  result.scores.append(layers.scores);
  result.skipped = layers.skipped;
  if (config.want_brain) {
    auto brain = run_brain(config, targets, workers);
    result.scores.append(brain.scores);
    result.skipped.insert(result.skipped.end(), brain.skipped.begin(), brain.skipped.end());
  }
  result.target_rdm_builds = targets.builds();

  const fs::path scores_path = config.output_dir / "scores.csv";
  tensorio::write_score_table(result.scores, scores_path);
  result.outputs.push_back(scores_path);

  if (config.want_brain && config.want_saliency && config.want_semantics) {
    try {
      analysis::MetaOptions mo;
      mo.n_perm = config.n_perm;
      mo.seed = config.seed;
      mo.workers = workers;
      result.meta = analysis::layer_brain_meta(result.scores, mo);
      analysis::write_meta_csv(result.meta, config.output_dir / "meta.csv");
      result.outputs.push_back(config.output_dir / "meta.csv");
    } catch (const Error& e) {
      if (e.code() != Errc::missing_input) throw;
      note(std::string("meta-analysis skipped: ") + e.what());
    }
  }

  if (!result.scores.empty()) {
    auto files = report::write_report(result.scores, config.report_bins, config.output_dir / "report");
    result.outputs.insert(result.outputs.end(), files.begin(), files.end());
  }
  for (const auto& s : result.skipped) note("skipped " + s);

  write_lock(config, result, config.output_dir / "run.lock.json");
  result.outputs.push_back(config.output_dir / "run.lock.json");
  return result;
}

}  // namespace repalign::pipeline
