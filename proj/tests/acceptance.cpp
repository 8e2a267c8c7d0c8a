// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>

#include "gradient_check.hpp"
#include "vrae/clustering.hpp"
#include "vrae/io.hpp"
#include "vrae/pipeline.hpp"
#include "vrae/projection.hpp"
#include "vrae/scoring.hpp"

namespace fs = std::filesystem;
namespace pl = vrae::pipeline;
using vrae::Matrix;
using vrae::Vector;

namespace {

int failures = 0;
std::vector<vrae::scoring::ScoreReport> all_reports;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs `body`; an exception counts as a failure of `name`.
void criterion(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(false, name, std::string("threw: ") + e.what());
  }
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vrae_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

void run_stages(const pl::PipelineConfig& c, const std::vector<std::string>& stages) {
  for (const auto& s : stages) pl::run_stage(s, c);
}

Matrix random_matrix(vrae::SeededRng& rng, Eigen::Index n, Eigen::Index d) {
  return vrae::sample_standard_gaussian(rng, n, d);
}

Matrix permute_rows(const Matrix& x, const std::vector<Eigen::Index>& p) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = x.row(p[static_cast<std::size_t>(i)]);
  return y;
}

// ---------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0, worst_abs = 0.0;
  const int configs = 25;
  for (int s = 1; s <= configs; ++s) {
    const auto r = vrae::testing::check_gradients(static_cast<std::uint64_t>(s));
    worst = std::max(worst, r.max_relative_error);
    worst_abs = std::max(worst_abs, r.max_absolute_error);
  }
  const double t = seconds_since(t0);
  report(worst < 1e-5 && t < 60.0, "gradient-oracle",
         fmt("%.0f configs (d=2 H=4 Z=3 L=5, h=1e-5): max rel err %.2e, max abs err %.2e, %.1f s", configs, worst,
             worst_abs, t));
}

void kl_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  vrae::SeededRng rng(2024);
  double worst = 0.0;
  const Eigen::Index dims = 4;
  const int samples = 1000000;
  for (int trial = 0; trial < 10; ++trial) {
    const Vector mu = vrae::sample_uniform(rng, dims, 1, -1.5, 1.5);
    const Vector sigma = vrae::sample_uniform(rng, dims, 1, 0.3, 2.5);
    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (int s = 0; s < samples; ++s) {
      double log_q = 0.0, log_p = 0.0;
      for (Eigen::Index i = 0; i < dims; ++i) {
        const double e = rng.gaussian();
        const double z = mu(i) + sigma(i) * e;
        log_q += -std::log(sigma(i)) - 0.5 * e * e - 0.5 * log_two_pi;
        log_p += -0.5 * z * z - 0.5 * log_two_pi;
      }
      acc += log_q - log_p;
    }
    const double exact = vrae::model::kl_divergence(mu, sigma);
    worst = std::max(worst, std::abs(acc / samples - exact) / exact);
  }
  const double t = seconds_since(t0);
  report(worst < 0.01 && t < 60.0, "kl-oracle",
         fmt("10 random (mu, sigma), 1e6 samples: max rel err %.3f%%, %.1f s", 100.0 * worst, t));
}

void clustering_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  vrae::SeededRng rng(77);
  bool inertia_ok = true;
  for (int d = 0; d < 100; ++d) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.uniform_index(80));
    const Matrix x = random_matrix(rng, n, 2 + static_cast<Eigen::Index>(rng.uniform_index(4)));
    const int k = 2 + static_cast<int>(rng.uniform_index(5));
    vrae::clustering::KMeansOptions opt;
    opt.restarts = 3;
    const auto a = vrae::clustering::kmeans_pp(x, k, rng.fork_seed(), opt);
    for (std::size_t i = 1; i < a.inertia_trace.size(); ++i)
      inertia_ok = inertia_ok && a.inertia_trace[i] <= a.inertia_trace[i - 1];
  }
  bool ward_ok = true;
  for (int d = 0; d < 20; ++d) {
    const auto a = vrae::clustering::hierarchical<double>(random_matrix(rng, 40, 3), 1);
    for (std::size_t i = 1; i < a.merges.size(); ++i) ward_ok = ward_ok && a.merges[i].height >= a.merges[i - 1].height;
  }
  bool noise_ok = true;
  for (int d = 0; d < 10; ++d) {
    const Matrix x = random_matrix(rng, 30, 2);
    double min_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = i + 1; j < x.rows(); ++j) min_dist = std::min(min_dist, (x.row(i) - x.row(j)).norm());
    const auto a = vrae::clustering::dbscan(x, 0.99 * min_dist, 2);
    noise_ok = noise_ok && std::all_of(a.labels.begin(), a.labels.end(),
                                       [](int l) { return l == vrae::clustering::kNoise; });
  }
  report(inertia_ok && ward_ok && noise_ok, "clustering-properties",
         std::string("k-means inertia non-increasing on 100 datasets: ") + (inertia_ok ? "yes" : "no") +
             "; Ward heights monotone: " + (ward_ok ? "yes" : "no") + "; DBSCAN below min distance all noise: " +
             (noise_ok ? "yes" : "no") + fmt(", %.1f s", seconds_since(t0)));
}

void projection_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  vrae::SeededRng rng(88);
  double ortho = 0.0;
  for (int d = 0; d < 20; ++d) {
    const auto r = vrae::projection::pca<double>(random_matrix(rng, 60, 8), 5);
    ortho = std::max(ortho, (r.components.transpose() * r.components - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff());
  }
  double perp = 0.0;
  const Matrix y = random_matrix(rng, 150, 6);
  for (double target : {5.0, 30.0, 50.0}) {
    const auto a = vrae::projection::conditional_affinities(y, target);
    for (Eigen::Index i = 0; i < y.rows(); ++i) perp = std::max(perp, std::abs(std::exp2(a.entropy_bits(i)) - target));
  }

  Matrix x = random_matrix(rng, 50, 6);
  x.topRows(25).array() += 3.0;
  std::vector<Eigen::Index> p(50);
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  rng.shuffle(p);
  const Matrix xp = permute_rows(x, p);
  auto gap = [&](const Matrix& a, const Matrix& b) { return (permute_rows(a, p) - b).cwiseAbs().maxCoeff(); };
  vrae::projection::TsneOptions opt;
  opt.perplexity = 10.0;
  const double g_pca = gap(vrae::projection::pca(x, 2).embedding.points, vrae::projection::pca(xp, 2).embedding.points);
  const double g_kpca = gap(vrae::projection::kernel_pca_rbf(x, 2, 0.1).embedding.points,
                            vrae::projection::kernel_pca_rbf(xp, 2, 0.1).embedding.points);
  const double g_spec =
      gap(vrae::projection::spectral_embedding(x, 8).points, vrae::projection::spectral_embedding(xp, 8).points);
  const double g_tsne =
      gap(vrae::projection::tsne(x, opt).embedding.points, vrae::projection::tsne(xp, opt).embedding.points);
  const double equi = std::max({g_pca, g_kpca, g_spec, g_tsne});
  report(ortho < 1e-9 && perp < 1e-3 && equi < 1e-6, "projection-properties",
         fmt("PCA orthonormality err %.1e; max |2^H - perplexity| %.1e; ", ortho, perp) +
             fmt("permutation gap on 50 points pca %.1e kpca %.1e spectral %.1e ", g_pca, g_kpca, g_spec) +
             fmt("tsne %.1e, %.1f s", g_tsne, seconds_since(t0)));
}

// ---------------------------------------------------------------------------

pl::PipelineConfig two_class_config(const fs::path& out) {
  pl::PipelineConfig c = pl::preset("two-class");
  c.out = out;
  c.seed = 1;
  c.model.hidden_units = 32;
  c.model.latent_dim = 8;
  c.model.epochs = 200;
  return c;
}

void two_class(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = two_class_config(dir);
  run_stages(c, pl::stage_names());
  const auto reports = vrae::io::load_score_reports(pl::Layout{dir}.score_report());
  all_reports.insert(all_reports.end(), reports.begin(), reports.end());
  const double t = seconds_since(t0);
  bool ok = reports.size() == 2 && t < 600.0;
  std::string detail = "hidden 32, latent 8, 200 epochs, PCA:";
  for (const auto& r : reports) {
    ok = ok && r.accuracy >= 0.90;
    detail += " " + r.method + fmt(" acc %.4f auc %.4f;", r.accuracy, r.auc);
  }
  report(ok, "two-class", detail + fmt(" %.0f s", t));
}

void determinism(const fs::path& first, const fs::path& second) {
  const auto t0 = std::chrono::steady_clock::now();
  run_stages(two_class_config(second), pl::stage_names());
  const auto a = vrae::io::read_text(pl::Layout{first}.score_report());
  const auto b = vrae::io::read_text(pl::Layout{second}.score_report());
  report(!a.empty() && a == b, "determinism",
         "second two-class run: score report " + std::string(a == b ? "byte-identical" : "differs") + " (" +
             vrae::io::file_hash(pl::Layout{second}.score_report()) + ")" + fmt(", %.0f s", seconds_since(t0)));
}

void counts_and_multi_class(const fs::path& dir) {
  pl::PipelineConfig c = pl::preset("multi-class");
  c.out = dir;
  c.seed = 1;
  c.model.hidden_units = 32;
  c.clustering.methods = {"kmeans"};

  criterion("window-counts", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    run_stages(c, {"generate", "preprocess"});
    const auto meta = vrae::data::load_metadata(dir / "data" / "metadata.csv");
    const auto train = vrae::io::load_dataset(pl::Layout{dir}.train());
    const auto test = vrae::io::load_dataset(pl::Layout{dir}.test());
    const std::size_t total = train.size() + test.size();
    report(meta.size() == 25 && total == 1250 && train.size() == 875 && test.size() == 375, "window-counts",
           fmt("%.0f simulations x 10000 steps, L=200 stride 200: %.0f windows, split %.0f/%.0f", meta.size(), total,
               train.size(), test.size()) +
               fmt(", %.1f s", seconds_since(t0)));
  });

  criterion("multi-class", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    run_stages(c, {"train", "encode", "project", "cluster", "score", "plot"});
    const pl::Layout layout{dir};
    const auto emb = vrae::io::load_embedding(layout.embedding());
    const auto a = vrae::io::load_assignment(layout.assignment("kmeans"));
    const auto reports = vrae::io::load_score_reports(layout.score_report());
    all_reports.insert(all_reports.end(), reports.begin(), reports.end());

    std::vector<int> abnormal(emb.labels.size());
    for (std::size_t i = 0; i < abnormal.size(); ++i) abnormal[i] = emb.labels[i] != 0;
    const double sil = vrae::scoring::silhouette(emb.embedding.points, abnormal);
    const auto m = vrae::scoring::match_labels(a.labels, emb.labels);
    int normal_cluster = vrae::clustering::kNoise;
    for (const auto& [cluster, cls] : m.cluster_to_class)
      if (cls == 0) normal_cluster = cluster;
    std::size_t members = 0, normal = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i)
      if (a.labels[i] == normal_cluster) {
        ++members;
        normal += emb.labels[i] == 0;
      }
    const double purity = members ? static_cast<double>(normal) / static_cast<double>(members) : 0.0;
    const double t = seconds_since(t0);
    report(sil > 0.0 && purity >= 0.85 && t < 1200.0, "multi-class",
           fmt("full unbalanced data, hidden 32, latent 5, t-SNE, k=4: silhouette %.3f, normal purity %.3f (%.0f/", sil,
               purity, normal) +
               fmt("%.0f), accuracy %.3f, %.0f s", members, reports.front().accuracy, t));
  });
}

}  // namespace

int main() {
  criterion("gradient-oracle", gradient_oracle);
  criterion("kl-oracle", kl_oracle);
  criterion("clustering-properties", clustering_properties);
  criterion("projection-properties", projection_properties);

  const fs::path first = scratch("two_class_a");
  const fs::path second = scratch("two_class_b");
  criterion("two-class", [&] { two_class(first); });
  criterion("determinism", [&] { determinism(first, second); });
  counts_and_multi_class(scratch("multi_class"));

  double worst = 0.0;
  for (const auto& r : all_reports) worst = std::max(worst, std::abs(r.recall - r.accuracy));
  report(!all_reports.empty() && worst <= 1e-12, "recall-equals-accuracy",
         fmt("%.0f score reports: max |recall - accuracy| %.1e", all_reports.size(), worst));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
