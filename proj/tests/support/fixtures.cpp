#include "support/fixtures.hpp"

#include <unistd.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "core/parallel.hpp"

namespace repalign::testkit {

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "repalign-test-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

void put(Image& img, int x, int y, Rgb c) {
  auto* p = img.pixel(x, y);
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

}  // namespace

Image disk_image(int w, int h, double cx, double cy, double radius, Rgb fg, Rgb bg) {
  Image img(w, h, bg.r, bg.g, bg.b);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= radius * radius) put(img, x, y, fg);
    }
  return img;
}

Image bar_image(int w, int h, double cx, double cy, double length, double thickness, double angle_deg, Rgb fg,
                Rgb bg) {
  Image img(w, h, bg.r, bg.g, bg.b);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double ux = std::cos(a), uy = -std::sin(a);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double along = dx * ux + dy * uy;
      double across = -dx * uy + dy * ux;
      if (std::fabs(along) <= length / 2 && std::fabs(across) <= thickness / 2) put(img, x, y, fg);
    }
  return img;
}

Image noise_image(int w, int h, std::uint64_t seed, int base, int amplitude) {
  Rng rng{seed, 0x6e6f697365ULL};
  Image img(w, h);
  for (auto& v : img.rgb) {
    long q = base + static_cast<long>(rng.between(-amplitude, amplitude));
    v = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  }
  return img;
}

std::vector<std::string> make_ids(std::size_t n, const std::string& prefix) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

tensorio::FeatureMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, const std::string& prefix) {
  Rng rng{seed, 0x6d6174ULL};
  std::vector<double> data(n * d);
  for (auto& v : data) v = rng.normal();
  return tensorio::FeatureMatrix(make_ids(n, prefix), d, std::move(data), "random");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ForgeCorpus forge_corpus() {
  constexpr int W = 160, H = 120;
  constexpr Rgb gray{128, 128, 128};
  std::vector<std::string> ids;
  std::vector<Image> images;
  std::vector<int> group;

  const double centers[3][2] = {{80, 60}, {76, 62}, {84, 58}};
  for (int t = 0; t < 3; ++t) {
    ids.push_back("target" + std::to_string(t));
    images.push_back(disk_image(W, H, centers[t][0], centers[t][1], 16, Rgb{104, 104, 104}, gray));
    group.push_back(0);
  }
  const Rgb loud[4][2] = {{{255, 255, 255}, {0, 0, 0}},
                          {{255, 0, 0}, {0, 255, 0}},
                          {{0, 0, 255}, {255, 255, 0}},
                          {{255, 255, 0}, {0, 0, 0}}};
  for (int g = 0; g < 2; ++g) {
    const std::string tag = g == 0 ? "a" : "b";
    for (int k = 0; k < 4; ++k) {
      ids.push_back("camo_" + tag + std::to_string(k));
      images.emplace_back(W + 8 * k, H + 6 * k, gray.r, gray.g, gray.b);
      group.push_back(g);
    }
    for (int k = 0; k < 4; ++k) {
      ids.push_back("loud_" + tag + std::to_string(k));
      images.push_back(disk_image(W, H, 80 + 6 * k, 60 - 4 * k, 40, loud[k][0], loud[k][1]));
      group.push_back(g);
    }
  }

  std::vector<double> emb;
  for (int g : group) {
    emb.push_back(g == 0 ? 1.0 : 0.0);
    emb.push_back(g == 0 ? 0.0 : 1.0);
  }
  ForgeCorpus c{ids, std::move(images), tensorio::FeatureMatrix(ids, 2, std::move(emb), "captions"), 3};
  return c;
}

void write_corpus(const ForgeCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "images");
  tensorio::DatasetManifest m;
  m.dataset_name = "synthetic";
  for (std::size_t i = 0; i < corpus.ids.size(); ++i) {
    fs::path rel = fs::path("images") / (corpus.ids[i] + ".png");
    write_png(corpus.images[i], dir / rel);
    tensorio::ManifestEntry e;
    e.image_id = corpus.ids[i];
    e.image_path = rel;
    e.captions = {"a synthetic picture"};
    e.labels = {corpus.ids[i].substr(0, 4)};
    m.entries.push_back(std::move(e));
  }
  tensorio::write_manifest(m, dir / "manifest.csv");
  tensorio::save_feature_matrix(corpus.embeddings, dir / "embeddings.npy");
}

}  // namespace repalign::testkit

namespace repalign::testkit {

namespace {

tensorio::FeatureMatrix shuffled(const tensorio::FeatureMatrix& m, std::uint64_t seed) {
  std::vector<std::string> order = m.items();
  Rng rng{seed, 0x73687566ULL};
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  return m.reordered(order);
}

}  // namespace

fs::path write_study(const fs::path& dir, const StudyOptions& options) {
  constexpr std::size_t n = 12;
  fs::create_directories(dir / "targets");
  auto saliency = random_matrix(n, 40, 101);
  auto semantics = random_matrix(n, 8, 102);
  tensorio::save_feature_matrix(saliency, dir / "targets" / "saliency.npy");
  tensorio::save_feature_matrix(shuffled(semantics, 1), dir / "targets" / "semantics.npy");

  auto save_layer = [&](const tensorio::FeatureMatrix& m, const fs::path& p, std::uint64_t seed) {
    fs::create_directories(p.parent_path());
    tensorio::save_feature_matrix(shuffled(m, seed), p);
  };
  std::vector<std::pair<std::string, tensorio::FeatureMatrix>> net_a = {
      {"layer1", semantics}, {"layer2", random_matrix(n, 16, 103)}, {"layer10", random_matrix(n, 24, 104)}};
  const char* conditions[] = {"Control", "Salient", "Semantic", "SalientSemantic"};
  std::uint64_t seed = 200;
  for (const auto& [unit, m] : net_a) {
    save_layer(m, dir / "netA" / "base" / (unit + ".npy"), ++seed);
    for (const char* c : conditions) {
      if (options.drop_condition && unit == "layer2" && std::string(c) == "SalientSemantic") continue;
      bool same = std::string(c) == "Control" || std::string(c) == "Salient";
      save_layer(same ? m : random_matrix(n, m.cols(), ++seed), dir / "netA" / c / (unit + ".npy"), ++seed);
    }
  }
  for (int k = 1; k <= 2; ++k)
    save_layer(random_matrix(n, 10, 300 + k), dir / "netB" / ("conv" + std::to_string(k) + ".npy"), 400 + k);

  if (options.brain) {
    std::vector<std::string> brain_items(saliency.items().begin(), saliency.items().begin() + 10);
    int s = 0;
    for (std::string subject : {"S1", "S2"})
      for (std::string roi : {"OTC", "V1"}) {
        auto m = random_matrix(10, 50, 500 + ++s);
        tensorio::FeatureMatrix r(brain_items, 50, m.data());
        save_layer(r, dir / "brain" / (subject + "_" + roi + ".npy"), 600 + s);
      }
  }

  std::ofstream f(dir / "run.toml");
  f << "seed = 7\n"
    << "output_dir = \"out\"\n"
    << (options.brain ? "targets = [\"saliency\", \"semantics\", \"brain\"]\n" : "targets = [\"saliency\", \"semantics\"]\n")
    << "\n[inputs]\nsaliency = \"targets/saliency.npy\"\nsemantics = \"targets/semantics.npy\"\n"
    << "\n[[networks]]\nname = \"netA\"\nlayers = \"netA/base/*.npy\"\nconditions = \"netA/{condition}/*.npy\"\n"
    << "\n[[networks]]\nname = \"netB\"\nlayers = \"netB/*.npy\"\n"
    << "\n[meta]\nn_perm = " << options.n_perm << "\n"
    << "\n[report]\nbins = 2\n";
  if (options.brain) {
    f << "\n[brain]\nscore_roi = \"OTC\"\n";
    for (std::string subject : {"S1", "S2"})
      for (std::string roi : {"OTC", "V1"})
        f << "\n[[brain.responses]]\nsubject = \"" << subject << "\"\nroi = \"" << roi << "\"\npath = \"brain/" << subject
          << "_" << roi << ".npy\"\n";
  }
  return dir / "run.toml";
}

}  // namespace repalign::testkit
